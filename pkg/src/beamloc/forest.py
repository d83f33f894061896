"""Random forest for multi-class classification and 2-D regression.

Training is fully deterministic given (data, seed). Tree t consumes a
counter-based SplitMix64 stream whose state starts at seed ^ t (one stream
per tree, so thread schedules cannot matter), in this call sequence:

1. bootstrap: n draws, index k = draw % n;
2. nodes processed depth-first, left child before right; a node attempts a
   split when it is impure, has at least min_samples_split samples, and is
   above the depth cap;
3. per split attempt, candidate features come from a lazy Fisher-Yates walk
   without replacement (position j = i + draw % (n_features - i) per drawn
   feature), continuing until max_features features with at least one usable
   threshold have been seen or all features are exhausted.

Candidates are midpoints between consecutive distinct sorted values (stable
sort) whose sides respect min_samples_leaf. Classification splits maximize
sum(count^2)/n_left + sum(count^2)/n_right; regression splits minimize the
summed per-axis squared error of the children, accumulated in sorted order.
The first strictly best candidate wins: features in draw order, thresholds
ascending. Children inherit the sorted-by-split-feature sample order.

The forest grower is a numba kernel; SplitMix64 and strict IEEE arithmetic
make a plain-Python implementation of the discipline above reproduce the
trees exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

SERIALIZATION_VERSION = 1


@dataclass(frozen=True)
class ForestParams:
    """Forest hyperparameters (defaults follow the reference setup)."""

    n_trees: int = 100
    max_features: int = 1
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_depth: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_features < 1:
            raise ValueError("max_features must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 when set")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, doc: dict) -> "ForestParams":
        return cls(**doc)


@dataclass
class _Tree:
    """Flat node arrays; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, payload_dim)

    def leaf_value(self, x: np.ndarray) -> np.ndarray:
        node = 0
        while self.feature[node] >= 0:
            if x[self.feature[node]] <= self.threshold[node]:
                node = self.left[node]
            else:
                node = self.right[node]
        return self.value[node]


@dataclass
class ForestModel:
    """Trained forest: kind is 'classifier' or 'regressor'."""

    kind: str
    params: ForestParams
    feature_dim: int
    trees: list[_Tree]
    classes: np.ndarray | None = None  # sorted labels, classifier only
    metadata: dict = field(default_factory=dict)


@njit(cache=True)
def _stable_sort(vals, perm):
    """Stable argsort of vals into perm (ties keep ascending position)."""
    m = vals.shape[0]
    tmp = np.argsort(vals)
    for k in range(m):
        perm[k] = tmp[k]
    start = 0
    while start < m - 1:
        end = start
        while end + 1 < m and vals[perm[end + 1]] == vals[perm[start]]:
            end += 1
        if end > start:  # insertion-sort the tied positions ascending
            for a in range(start + 1, end + 1):
                key = perm[a]
                b = a - 1
                while b >= start and perm[b] > key:
                    perm[b + 1] = perm[b]
                    b -= 1
                perm[b + 1] = key
        start = end + 1


@njit(cache=True)
def _mix64(state):
    """SplitMix64 step: returns (next_state, output)."""
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return state, z ^ (z >> np.uint64(31))


@njit(cache=True)
def _grow_tree(state, x, y_cls, y_reg, is_classifier, n_classes,
               min_split, min_leaf, max_depth, max_features,
               feature, threshold, left, right, value, base, ws):
    """Grow one tree, writing node arrays at [base:]; returns its node count.

    Child links are local node ids (0-based within the tree).
    """
    n, d = x.shape
    payload_dim = value.shape[1]

    # per-forest workspace: lazy Fisher-Yates state (epoch trick, persists
    # across trees), bootstrap/scratch buffers, and the DFS stack
    fy_val, fy_epoch, epoch_box, vals, perm, best_perm, tmp_idx, stack, idx = ws
    epoch = epoch_box[0]

    for k in range(n):
        state, draw = _mix64(state)
        idx[k] = np.int64(draw % np.uint64(n))

    stack[0, 0] = 0
    stack[0, 1] = n
    stack[0, 2] = 0
    stack[0, 3] = -1
    stack[0, 4] = 0
    top = 1
    n_nodes = 0

    while top > 0:
        top -= 1
        start = stack[top, 0]
        end = stack[top, 1]
        depth = stack[top, 2]
        parent = stack[top, 3]
        is_left = stack[top, 4]
        node = n_nodes
        n_nodes += 1
        if parent >= 0:
            if is_left == 1:
                left[base + parent] = node
            else:
                right[base + parent] = node
        m = end - start

        # leaf tests that do not consume randomness
        attempt = m >= min_split and (max_depth < 0 or depth < max_depth)
        if attempt:
            pure = True
            if is_classifier:
                first = y_cls[idx[start]]
                for k in range(start + 1, end):
                    if y_cls[idx[k]] != first:
                        pure = False
                        break
            else:
                for k in range(start + 1, end):
                    for a in range(payload_dim):
                        if y_reg[idx[k], a] != y_reg[idx[start], a]:
                            pure = False
                            break
                    if not pure:
                        break
            attempt = not pure

        best_crit = -np.inf
        best_feat = -1
        best_pos = -1
        best_thr = 0.0
        if attempt:
            epoch += 1
            valid_seen = 0
            for i in range(d):
                state, draw = _mix64(state)
                j = i + np.int64(draw % np.uint64(d - i))
                fj = fy_val[j] if fy_epoch[j] == epoch else j
                fi = fy_val[i] if fy_epoch[i] == epoch else i
                fy_val[j] = fi
                fy_epoch[j] = epoch
                feat = fj

                for k in range(m):
                    vals[k] = x[idx[start + k], feat]
                if vals[:m].min() == vals[:m].max():
                    continue
                _stable_sort(vals[:m], perm[:m])

                crit = -np.inf
                pos = -1
                if is_classifier:
                    left_counts = np.zeros(n_classes, dtype=np.int64)
                    total = np.zeros(n_classes, dtype=np.int64)
                    for k in range(m):
                        total[y_cls[idx[start + k]]] += 1
                    for p in range(1, m):
                        left_counts[y_cls[idx[start + perm[p - 1]]]] += 1
                        if vals[perm[p - 1]] == vals[perm[p]]:
                            continue
                        if p < min_leaf or m - p < min_leaf:
                            continue
                        sl = 0
                        sr = 0
                        for c in range(n_classes):
                            sl += left_counts[c] * left_counts[c]
                            dr = total[c] - left_counts[c]
                            sr += dr * dr
                        q = sl / p + sr / (m - p)
                        if q > crit:
                            crit = q
                            pos = p
                else:
                    dim = payload_dim
                    tot = np.zeros(dim, dtype=np.float64)
                    tot2 = np.zeros(dim, dtype=np.float64)
                    for k in range(m):
                        row = idx[start + k]
                        for a in range(dim):
                            v = y_reg[row, a]
                            tot[a] += v
                            tot2[a] += v * v
                    suml = np.zeros(dim, dtype=np.float64)
                    suml2 = np.zeros(dim, dtype=np.float64)
                    for p in range(1, m):
                        row = idx[start + perm[p - 1]]
                        for a in range(dim):
                            v = y_reg[row, a]
                            suml[a] += v
                            suml2[a] += v * v
                        if vals[perm[p - 1]] == vals[perm[p]]:
                            continue
                        if p < min_leaf or m - p < min_leaf:
                            continue
                        sse_l = 0.0
                        sse_r = 0.0
                        for a in range(dim):
                            sse_l += suml2[a] - suml[a] * suml[a] / p
                            dr = tot[a] - suml[a]
                            sse_r += (tot2[a] - suml2[a]) - dr * dr / (m - p)
                        q = -(sse_l + sse_r)
                        if q > crit:
                            crit = q
                            pos = p
                if pos >= 0:
                    valid_seen += 1
                    if crit > best_crit:
                        best_crit = crit
                        best_feat = feat
                        best_pos = pos
                        best_thr = (vals[perm[pos - 1]] + vals[perm[pos]]) / 2.0
                        for k in range(m):
                            best_perm[k] = perm[k]
                    if valid_seen == max_features:
                        break

        if best_feat < 0:
            # leaf: payload accumulated in node sample order
            if is_classifier:
                for k in range(start, end):
                    value[base + node, y_cls[idx[k]]] += 1.0
            else:
                for k in range(start, end):
                    for a in range(payload_dim):
                        value[base + node, a] += y_reg[idx[k], a]
                for a in range(payload_dim):
                    value[base + node, a] /= m
            continue

        feature[base + node] = best_feat
        threshold[base + node] = best_thr
        for k in range(m):
            tmp_idx[k] = idx[start + best_perm[k]]
        for k in range(m):
            idx[start + k] = tmp_idx[k]
        mid = start + best_pos
        # push right first so the left child is processed next
        stack[top, 0] = mid
        stack[top, 1] = end
        stack[top, 2] = depth + 1
        stack[top, 3] = node
        stack[top, 4] = 0
        top += 1
        stack[top, 0] = start
        stack[top, 1] = mid
        stack[top, 2] = depth + 1
        stack[top, 3] = node
        stack[top, 4] = 1
        top += 1

    epoch_box[0] = epoch
    return n_nodes


@njit(cache=True)
def _grow_forest_kernel(seed, n_trees, x, y_cls, y_reg, is_classifier, n_classes,
                        min_split, min_leaf, max_depth, max_features):
    n, d = x.shape
    payload_dim = n_classes if is_classifier else y_reg.shape[1]
    max_nodes = 2 * n + 1

    feature = np.full(n_trees * max_nodes, -1, dtype=np.int64)
    threshold = np.zeros(n_trees * max_nodes, dtype=np.float64)
    left = np.full(n_trees * max_nodes, -1, dtype=np.int64)
    right = np.full(n_trees * max_nodes, -1, dtype=np.int64)
    value = np.zeros((n_trees * max_nodes, payload_dim), dtype=np.float64)
    counts = np.zeros(n_trees, dtype=np.int64)

    ws = (np.zeros(d, dtype=np.int64),  # fy_val
          np.full(d, -1, dtype=np.int64),  # fy_epoch
          np.zeros(1, dtype=np.int64),  # epoch counter
          np.empty(n, dtype=np.float64),  # vals
          np.empty(n, dtype=np.int64),  # perm
          np.empty(n, dtype=np.int64),  # best_perm
          np.empty(n, dtype=np.int64),  # tmp_idx
          np.empty((2 * n + 2, 5), dtype=np.int64),  # DFS stack
          np.empty(n, dtype=np.int64))  # bootstrap indices

    for t in range(n_trees):
        state = seed ^ np.uint64(t)
        counts[t] = _grow_tree(state, x, y_cls, y_reg, is_classifier, n_classes,
                               min_split, min_leaf, max_depth, max_features,
                               feature, threshold, left, right, value,
                               t * max_nodes, ws)
    return feature, threshold, left, right, value, counts


_EMPTY_CLS = np.zeros(0, dtype=np.int64)
_EMPTY_REG = np.zeros((0, 1), dtype=np.float64)


_SEED_MASK = (1 << 64) - 1


def _build_forest(x: np.ndarray, y: np.ndarray, params: ForestParams,
                  kind: str, n_classes: int) -> list[_Tree]:
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[0]
    max_depth = -1 if params.max_depth is None else params.max_depth
    is_classifier = kind == "classifier"
    y_cls = y.astype(np.int64) if is_classifier else _EMPTY_CLS
    y_reg = _EMPTY_REG if is_classifier else np.ascontiguousarray(y, dtype=np.float64)
    seed = np.uint64(params.seed & _SEED_MASK)
    feat, thr, lft, rgt, val, counts = _grow_forest_kernel(
        seed, params.n_trees, x, y_cls, y_reg, is_classifier, n_classes,
        params.min_samples_split, params.min_samples_leaf,
        max_depth, params.max_features)
    max_nodes = 2 * n + 1
    trees = []
    for t in range(params.n_trees):
        lo, hi = t * max_nodes, t * max_nodes + counts[t]
        trees.append(_Tree(feature=feat[lo:hi], threshold=thr[lo:hi],
                           left=lft[lo:hi], right=rgt[lo:hi], value=val[lo:hi]))
    return trees


def _validate_training_input(features: np.ndarray, targets: np.ndarray) -> None:
    if features.ndim != 2:
        raise ValueError("features must be a 2-D array")
    if len(features) == 0:
        raise ValueError("training data must be non-empty")
    if len(features) != len(targets):
        raise ValueError(
            f"feature/target length mismatch: {len(features)} vs {len(targets)}")


def train_classifier(features: np.ndarray | Sequence, labels: Sequence[int],
                     params: ForestParams) -> ForestModel:
    """Bootstrap-aggregated Gini trees over integer class labels."""
    x = np.asarray(features, dtype=float)
    y_raw = np.asarray(labels)
    _validate_training_input(x, y_raw)
    classes = np.unique(y_raw)
    if len(classes) < 2:
        raise ValueError("classifier training needs at least 2 distinct labels")
    if params.max_features > x.shape[1]:
        raise ValueError("max_features exceeds the feature dimension")
    y = np.searchsorted(classes, y_raw)
    trees = _build_forest(x, y, params, "classifier", len(classes))
    return ForestModel(kind="classifier", params=params, feature_dim=x.shape[1],
                       trees=trees, classes=classes,
                       metadata={"params": params.to_dict(), "n_classes": len(classes)})


def train_regressor(features: np.ndarray | Sequence, targets: Sequence,
                    params: ForestParams) -> ForestModel:
    """Multi-output variance-reduction trees; leaves store mean (x, y) targets."""
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if y.ndim == 1:
        y = y[:, np.newaxis]
    _validate_training_input(x, y)
    if params.max_features > x.shape[1]:
        raise ValueError("max_features exceeds the feature dimension")
    trees = _build_forest(x, y, params, "regressor", 0)
    return ForestModel(kind="regressor", params=params, feature_dim=x.shape[1],
                       trees=trees, classes=None,
                       metadata={"params": params.to_dict(), "multi_output": y.shape[1] > 1})


def _check_feature(model: ForestModel, feature: np.ndarray) -> np.ndarray:
    x = np.asarray(feature, dtype=float).reshape(-1)
    if x.size != model.feature_dim:
        raise ValueError(f"feature length {x.size}, model expects {model.feature_dim}")
    return x


def predict_class(model: ForestModel, feature: np.ndarray) -> tuple[int, dict[int, float]]:
    """Majority vote over trees; ties go to the smaller label."""
    if model.kind != "classifier":
        raise ValueError("predict_class needs a classifier model")
    x = _check_feature(model, feature)
    votes = np.zeros(len(model.classes), dtype=int)
    for tree in model.trees:
        counts = tree.leaf_value(x)
        votes[int(np.argmax(counts))] += 1
    winner = int(np.argmax(votes))
    fractions = {int(c): votes[i] / len(model.trees) for i, c in enumerate(model.classes)}
    return int(model.classes[winner]), fractions


def predict_point(model: ForestModel, feature: np.ndarray) -> tuple[float, float]:
    """Per-axis mean of the tree leaf outputs."""
    if model.kind != "regressor":
        raise ValueError("predict_point needs a regressor model")
    x = _check_feature(model, feature)
    acc = np.zeros(model.trees[0].value.shape[1])
    for tree in model.trees:
        acc += tree.leaf_value(x)
    out = acc / len(model.trees)
    return (float(out[0]), float(out[1])) if out.size == 2 else tuple(float(v) for v in out)


def model_to_dict(model: ForestModel) -> dict:
    return {
        "version": SERIALIZATION_VERSION,
        "kind": model.kind,
        "feature_dim": model.feature_dim,
        "classes": None if model.classes is None else model.classes.tolist(),
        "params": model.params.to_dict(),
        "metadata": model.metadata,
        "trees": [{
            "feature": tree.feature.tolist(),
            "threshold": tree.threshold.tolist(),
            "left": tree.left.tolist(),
            "right": tree.right.tolist(),
            "value": tree.value.tolist(),
        } for tree in model.trees],
    }


def model_from_dict(doc: dict) -> ForestModel:
    if doc.get("version") != SERIALIZATION_VERSION:
        raise ValueError(f"unsupported forest serialization version {doc.get('version')}")
    trees = [_Tree(feature=np.array(t["feature"], dtype=np.int64),
                   threshold=np.array(t["threshold"], dtype=float),
                   left=np.array(t["left"], dtype=np.int64),
                   right=np.array(t["right"], dtype=np.int64),
                   value=np.array(t["value"], dtype=float))
             for t in doc["trees"]]
    classes = None if doc["classes"] is None else np.array(doc["classes"])
    return ForestModel(kind=doc["kind"], params=ForestParams.from_dict(doc["params"]),
                       feature_dim=doc["feature_dim"], trees=trees, classes=classes,
                       metadata=doc.get("metadata", {}))


def save_model(model: ForestModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)), encoding="utf-8")


def load_model(path: str | Path) -> ForestModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
