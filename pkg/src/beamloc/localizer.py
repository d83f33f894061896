"""Dataset generation and classify-then-locally-regress localization.

A labeled dataset is built by simulating channel snapshots along per-area
target trajectories, compressing and rebuilding the beamforming feedback, and
concatenating sliding windows into features. Training fits one area
classifier on everything plus one regressor per area on that area's samples
only; inference routes each feature through the classifier to the matching
local regressor.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .channel import ChannelParams, Trajectory, snapshot_sequence
from .feedback import (FeatureVector, compress_bfw, compute_bfw, concatenate,
                       reconstruct_bfw, DEFAULT_PHI_BITS, DEFAULT_PSI_BITS)
from .forest import (ForestModel, ForestParams, model_from_dict, model_to_dict,
                     predict_class, predict_point, train_classifier, train_regressor)
from .geometry import AreaGrid, RoomLayout
from .placement import PlacementPattern

MODEL_VERSION = 1


@dataclass(frozen=True)
class LabeledDataset:
    """Feature samples with their area labels and true target coordinates."""

    samples: tuple[FeatureVector, ...]
    partition: AreaGrid
    u: int

    def __post_init__(self) -> None:
        for sample in self.samples:
            if sample.area_label is None or sample.position is None:
                raise ValueError("labeled datasets require area labels and positions")

    @property
    def feature_dim(self) -> int:
        return self.samples[0].values.size if self.samples else 0

    @property
    def per_area_counts(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for sample in self.samples:
            counts[sample.area_label] = counts.get(sample.area_label, 0) + 1
        return counts

    def matrix(self) -> np.ndarray:
        return np.stack([s.values for s in self.samples])

    def labels(self) -> np.ndarray:
        return np.array([s.area_label for s in self.samples])

    def positions(self) -> np.ndarray:
        return np.array([s.position for s in self.samples])

    def relabel(self, partition: AreaGrid) -> "LabeledDataset":
        """Re-assign area labels by locating each sample in a new partition."""
        samples = []
        for s in self.samples:
            label = partition.locate(s.position)
            if label is None:
                raise ValueError(f"sample position {s.position} falls outside the partition")
            samples.append(FeatureVector(values=s.values, p=s.p,
                                         area_label=label, position=s.position))
        return LabeledDataset(samples=tuple(samples), partition=partition, u=self.u)


@dataclass
class LocalizerModel:
    """One coarse area classifier plus per-area regression models."""

    classifier: ForestModel | None  # None encodes the constant single-area case
    constant_label: int | None
    regressors: dict[int, ForestModel]
    r: int
    u: int
    feature_dim: int
    metadata: dict = field(default_factory=dict)

    @property
    def labels(self) -> list[int]:
        return sorted(self.regressors)


@dataclass(frozen=True)
class Estimate:
    """Localization output: detected area and regressed coordinates."""

    area: int
    point: tuple[float, float]
    vote_fractions: dict[int, float]


def derive_seed(master_seed: int, *path: int) -> int:
    """Stable sub-seed for a named stream below a master seed."""
    return int(np.random.SeedSequence([master_seed, *path]).generate_state(1)[0])


def derive_trajectory_seeds(master_seed: int, n_trajectories: int) -> list[int]:
    """Stable per-trajectory noise seeds derived from one master seed."""
    return [derive_seed(master_seed, i) for i in range(n_trajectories)]


def build_dataset(layout: RoomLayout, pattern: PlacementPattern | Sequence[int],
                  trajectories: Sequence[Trajectory], params: ChannelParams,
                  u: int, seeds: int | Sequence[int],
                  phi_bits: int = DEFAULT_PHI_BITS,
                  psi_bits: int = DEFAULT_PSI_BITS) -> LabeledDataset:
    """Simulate the feedback pipeline and emit one feature per sliding window.

    Every trajectory contributes len(points) - u + 1 windows; a window ending
    at snapshot p is labeled with the trajectory's area and the target
    position at p (the window-end position). Features use the quantized,
    reconstructed beamforming matrices, matching what a capture terminal sees.
    `seeds` is either one master seed or one seed per trajectory.
    """
    if u < 1:
        raise ValueError("u must be >= 1")
    if isinstance(seeds, int):
        seed_list = derive_trajectory_seeds(seeds, len(trajectories))
    else:
        seed_list = list(seeds)
        if len(seed_list) != len(trajectories):
            raise ValueError("need exactly one seed per trajectory")

    samples: list[FeatureVector] = []
    for traj, seed in zip(trajectories, seed_list):
        rect = dict(layout.areas.rects).get(traj.area_label)
        if rect is None:
            raise ValueError(f"trajectory labeled {traj.area_label}: no such area")
        x0, y0, x1, y1 = rect
        for pt in traj.points:
            if not (x0 <= pt[0] <= x1 and y0 <= pt[1] <= y1):
                raise ValueError(
                    f"trajectory point {pt} lies outside area {traj.area_label}")
        if len(traj.points) < u:
            raise ValueError(
                f"trajectory in area {traj.area_label} has {len(traj.points)} points, "
                f"need at least U={u}")
        snapshots = snapshot_sequence(layout, pattern, traj.points, params, seed)
        bfws = [reconstruct_bfw(compress_bfw(compute_bfw(h), phi_bits, psi_bits))
                for h in snapshots]
        for p in range(u, len(bfws) + 1):
            samples.append(concatenate(bfws, p, u, area_label=traj.area_label,
                                       position=traj.points[p - 1]))
    return LabeledDataset(samples=tuple(samples), partition=layout.areas, u=u)


def train_localizer(dataset: LabeledDataset, params: ForestParams) -> LocalizerModel:
    """Fit the area classifier and the per-area local regressors.

    Regressor for area r sees only samples labeled r, in dataset order, with
    a per-area seed params.seed ^ r; datasets with a single label get a
    constant classifier and one global regressor (the pure-regression
    baseline). Training wall time per stage is recorded in the metadata.
    """
    if not dataset.samples:
        raise ValueError("dataset is empty")
    x = dataset.matrix()
    labels = dataset.labels()
    positions = dataset.positions()
    present = sorted(set(int(l) for l in labels))
    for label in present:
        count = int(np.sum(labels == label))
        if count < params.min_samples_split:
            raise ValueError(
                f"area {label} has {count} samples, need at least "
                f"min_samples_split={params.min_samples_split}")

    t0 = time.perf_counter()
    if len(present) == 1:
        classifier = None
        constant_label = present[0]
    else:
        classifier = train_classifier(x, labels, params)
        constant_label = None
    classify_time = time.perf_counter() - t0

    t0 = time.perf_counter()
    regressors: dict[int, ForestModel] = {}
    train_counts: dict[int, int] = {}
    for label in present:
        mask = labels == label
        area_params = ForestParams(**{**params.to_dict(), "seed": params.seed ^ label})
        regressors[label] = train_regressor(x[mask], positions[mask], area_params)
        train_counts[label] = int(mask.sum())
    regress_time = time.perf_counter() - t0

    return LocalizerModel(
        classifier=classifier, constant_label=constant_label, regressors=regressors,
        r=dataset.partition.count, u=dataset.u, feature_dim=dataset.feature_dim,
        metadata={"regressor_sample_counts": train_counts,
                  "classifier_train_seconds": classify_time,
                  "regression_train_seconds": regress_time,
                  "forest_params": params.to_dict()})


def localize(model: LocalizerModel, feature: FeatureVector | np.ndarray) -> Estimate:
    """Classify the area, then regress the position with that area's model."""
    values = feature.values if isinstance(feature, FeatureVector) else np.asarray(feature)
    if values.size != model.feature_dim:
        raise ValueError(f"feature length {values.size}, model expects {model.feature_dim}")
    if model.classifier is None:
        area = model.constant_label
        fractions = {area: 1.0}
    else:
        area, fractions = predict_class(model.classifier, values)
    regressor = model.regressors.get(area)
    if regressor is None:
        raise ValueError(f"classifier returned area {area} with no trained regressor")
    point = predict_point(regressor, values)
    return Estimate(area=area, point=point, vote_fractions=fractions)


def localizer_to_dict(model: LocalizerModel) -> dict:
    return {
        "version": MODEL_VERSION,
        "r": model.r,
        "u": model.u,
        "feature_dim": model.feature_dim,
        "constant_label": model.constant_label,
        "classifier": None if model.classifier is None else model_to_dict(model.classifier),
        "regressors": {str(label): model_to_dict(reg)
                       for label, reg in sorted(model.regressors.items())},
        "metadata": model.metadata,
    }


def localizer_from_dict(doc: dict) -> LocalizerModel:
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported localizer model version {doc.get('version')}")
    classifier = None if doc["classifier"] is None else model_from_dict(doc["classifier"])
    regressors = {int(label): model_from_dict(reg)
                  for label, reg in doc["regressors"].items()}
    return LocalizerModel(classifier=classifier, constant_label=doc["constant_label"],
                          regressors=regressors, r=doc["r"], u=doc["u"],
                          feature_dim=doc["feature_dim"], metadata=doc.get("metadata", {}))


def save_localizer(model: LocalizerModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(localizer_to_dict(model)), encoding="utf-8")


def load_localizer(path: str | Path) -> LocalizerModel:
    return localizer_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
