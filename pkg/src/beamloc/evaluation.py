"""Evaluation metrics, error statistics, and placement-rank sweeps.

Detection probability averages the per-area hit rates uniformly over areas
(not over samples); error distance is the Euclidean distance between the
regressed and true coordinates. The sweep re-runs the full
dataset/train/evaluate pipeline for a rank subset of an optimizer ranking.
"""

from __future__ import annotations

import csv
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats as sstats

from .channel import ChannelParams, Trajectory
from .forest import ForestParams
from .geometry import RoomLayout
from .localizer import (LabeledDataset, LocalizerModel, build_dataset, derive_seed,
                        localize, train_localizer)
from .placement import MetricResult, format_ids


@dataclass
class EvalReport:
    """Detection and error-distance metrics of one model on one test set."""

    per_area_detection: dict[int, float]
    average_detection: float
    confusion: np.ndarray  # rows true, cols predicted, over `labels`
    labels: list[int]
    error_distances: np.ndarray
    mean_error: float
    cdf: list[tuple[float, float]]
    true_areas: np.ndarray = field(repr=False, default=None)
    pred_areas: np.ndarray = field(repr=False, default=None)
    truths: np.ndarray = field(repr=False, default=None)
    estimates: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True)
class ErrorStats:
    """Per-axis localization error statistics with area-wise spread."""

    axis: str
    mean: float
    variance: float  # sample variance (ddof=1)
    theta: float  # population variance, sum((e - mean)^2) / n
    group_thetas: dict[int, float]
    theta_variance: float  # population variance of the per-group thetas
    histogram_edges: tuple[float, ...]
    histogram_masses: tuple[float, ...]
    normal_fit: tuple[float, float]  # moment-fitted (mu, sigma) of group thetas


def evaluate(model: LocalizerModel, test: LabeledDataset) -> EvalReport:
    """Score a localizer on a labeled test set.

    Per-area detection P_r is the fraction of area-r samples classified as r;
    the average detection probability is the unweighted mean of the P_r over
    areas that appear in the test set (empty areas are excluded with a
    warning). The error-distance CDF is the right-continuous empirical
    distribution at the sorted unique distances.
    """
    if not test.samples:
        raise ValueError("test set is empty")
    labels = sorted(set(model.labels) | {int(s.area_label) for s in test.samples})
    index = {label: i for i, label in enumerate(labels)}
    confusion = np.zeros((len(labels), len(labels)), dtype=int)
    truths, estimates, true_areas, pred_areas, errors = [], [], [], [], []
    for sample in test.samples:
        est = localize(model, sample)
        confusion[index[sample.area_label], index[est.area]] += 1
        truths.append(sample.position)
        estimates.append(est.point)
        true_areas.append(sample.area_label)
        pred_areas.append(est.area)
        dx = est.point[0] - sample.position[0]
        dy = est.point[1] - sample.position[1]
        errors.append(float(np.hypot(dx, dy)))

    per_area: dict[int, float] = {}
    for label in labels:
        row = confusion[index[label]]
        total = int(row.sum())
        if total == 0:
            continue
        per_area[label] = row[index[label]] / total
    missing = [l for l in model.labels if l not in per_area]
    if missing:
        warnings.warn(f"areas {missing} have no test samples; "
                      "excluded from the average detection probability")
    average = float(np.mean(list(per_area.values())))

    errors_arr = np.array(errors)
    uniq = np.unique(errors_arr)
    cdf = [(float(v), float(np.mean(errors_arr <= v))) for v in uniq]
    return EvalReport(per_area_detection=per_area, average_detection=average,
                      confusion=confusion, labels=labels,
                      error_distances=errors_arr, mean_error=float(errors_arr.mean()),
                      cdf=cdf, true_areas=np.array(true_areas),
                      pred_areas=np.array(pred_areas), truths=np.array(truths),
                      estimates=np.array(estimates))


def error_statistics(report: EvalReport, grouping: str = "area") -> list[ErrorStats]:
    """Per-axis error decomposition with per-group variance statistics.

    Errors are truth minus estimate along each axis. theta is the population
    variance over all samples; group_thetas holds the same statistic per true
    area; theta_variance is the population variance of those group values,
    whose empirical distribution is returned as a normalized histogram with a
    moment-fitted normal.
    """
    if grouping != "area":
        raise ValueError(f"unsupported grouping {grouping!r}")
    if report.truths is None or len(report.truths) == 0:
        raise ValueError("report carries no per-sample errors")
    out = []
    diffs = report.truths - report.estimates
    for axis, name in ((0, "x"), (1, "y")):
        e = diffs[:, axis]
        groups: dict[int, np.ndarray] = {}
        for label in sorted(set(int(a) for a in report.true_areas)):
            members = e[report.true_areas == label]
            if len(members) < 2:
                raise ValueError(f"area {label} has fewer than 2 errors; "
                                 "cannot form group statistics")
            groups[label] = members
        mu = float(e.mean())
        theta = float(np.mean((e - mu) ** 2))
        variance = float(e.var(ddof=1)) if len(e) > 1 else 0.0
        group_thetas = {label: float(np.mean((m - m.mean()) ** 2))
                        for label, m in groups.items()}
        tvals = np.array(list(group_thetas.values()))
        theta_variance = float(tvals.var())
        counts, edges = np.histogram(tvals, bins=min(10, len(tvals)))
        masses = counts / counts.sum()
        out.append(ErrorStats(axis=name, mean=mu, variance=variance, theta=theta,
                              group_thetas=group_thetas, theta_variance=theta_variance,
                              histogram_edges=tuple(float(v) for v in edges),
                              histogram_masses=tuple(float(v) for v in masses),
                              normal_fit=(float(tvals.mean()), float(tvals.std()))))
    return out


@dataclass(frozen=True)
class SweepRow:
    rank: int
    b: int
    ids: tuple[int, ...]
    s1: int
    s2: float
    s: float
    pe: float
    mean_err: float


@dataclass
class SweepResult:
    rows: list[SweepRow]
    spearman: float
    top_decile_pe: float
    bottom_decile_pe: float


def select_ranks(n_ranked: int, selector: str) -> list[int]:
    """Parse a rank selector into sorted 0-based rank indices.

    Grammar: comma-separated terms 'all', 'top:k', 'bottom:k', 'stride:n'
    (ranks 1, 1+n, 1+2n, ...). Duplicate ranks are kept once.
    """
    chosen: set[int] = set()
    for term in selector.split(","):
        term = term.strip()
        if not term:
            continue
        if term == "all":
            chosen.update(range(n_ranked))
            continue
        if ":" not in term:
            raise ValueError(f"bad rank selector term {term!r}")
        kind, _, arg = term.partition(":")
        try:
            k = int(arg)
        except ValueError:
            raise ValueError(f"bad rank selector term {term!r}") from None
        if k < 1:
            raise ValueError(f"rank selector count must be >= 1 in {term!r}")
        if kind == "top":
            chosen.update(range(min(k, n_ranked)))
        elif kind == "bottom":
            chosen.update(range(max(0, n_ranked - k), n_ranked))
        elif kind == "stride":
            chosen.update(range(0, n_ranked, k))
        else:
            raise ValueError(f"bad rank selector term {term!r}")
    return sorted(chosen)


def _sweep_task(args) -> tuple[int, float, float]:
    (layout, ids, train_traj, test_traj, params, u, phi_bits, psi_bits,
     forest_params, train_seed, test_seed) = args
    train = build_dataset(layout, ids, train_traj, params, u, train_seed,
                          phi_bits, psi_bits)
    test = build_dataset(layout, ids, test_traj, params, u, test_seed,
                         phi_bits, psi_bits)
    model = train_localizer(train, forest_params)
    report = evaluate(model, test)
    return report.average_detection, report.mean_error


def placement_sweep(layout: RoomLayout, ranking: Sequence[MetricResult],
                    train_trajectories: Sequence[Trajectory],
                    test_trajectories: Sequence[Trajectory],
                    params: ChannelParams, u: int, forest_params: ForestParams,
                    seed: int, ranks: str = "all", jobs: int = 1,
                    phi_bits: int = 7, psi_bits: int = 5) -> SweepResult:
    """Run dataset/train/evaluate for a rank subset of a placement ranking.

    Every pattern gets its own seeds derived from (seed, b), so the output is
    independent of the parallelism degree; rows come back ordered by rank.
    """
    indices = select_ranks(len(ranking), ranks)
    tasks = []
    for idx in indices:
        res = ranking[idx]
        base = derive_seed(seed, 3, res.pattern.b)
        tasks.append((layout, res.pattern.ids, tuple(train_trajectories),
                      tuple(test_trajectories), params, u, phi_bits, psi_bits,
                      forest_params, derive_seed(base, 1), derive_seed(base, 2)))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_sweep_task, tasks))
    else:
        outcomes = [_sweep_task(t) for t in tasks]

    rows = []
    for idx, (pe, mean_err) in zip(indices, outcomes):
        res = ranking[idx]
        rows.append(SweepRow(rank=idx + 1, b=res.pattern.b, ids=res.pattern.ids,
                             s1=res.s1, s2=res.s2, s=res.s, pe=pe, mean_err=mean_err))
    return SweepResult(rows=rows, spearman=sweep_spearman(rows),
                       top_decile_pe=_decile_mean(rows, top=True),
                       bottom_decile_pe=_decile_mean(rows, top=False))


def sweep_spearman(rows: Sequence[SweepRow]) -> float:
    """Spearman rank correlation between -s and the detection probability."""
    if len(rows) < 2:
        return float("nan")
    s = np.array([-r.s for r in rows])
    pe = np.array([r.pe for r in rows])
    corr = sstats.spearmanr(s, pe).statistic
    return float(corr)


def _decile_mean(rows: Sequence[SweepRow], top: bool) -> float:
    if not rows:
        return float("nan")
    ordered = sorted(rows, key=lambda r: r.rank)
    k = max(1, int(np.ceil(len(ordered) / 10)))
    chunk = ordered[:k] if top else ordered[-k:]
    return float(np.mean([r.pe for r in chunk]))


def write_sweep_csv(path: str | Path, rows: Sequence[SweepRow],
                    header_lines: Sequence[str] = ()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        for line in header_lines:
            f.write(f"# {line}\n")
        writer = csv.writer(f)
        writer.writerow(["rank", "b", "ids", "s1", "s2", "s", "Pe", "mean_err"])
        for r in rows:
            writer.writerow([r.rank, r.b, format_ids(r.ids), r.s1, repr(r.s2),
                             repr(r.s), repr(r.pe), repr(r.mean_err)])


def write_cdf_csv(path: str | Path, report: EvalReport,
                  header_lines: Sequence[str] = ()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        for line in header_lines:
            f.write(f"# {line}\n")
        writer = csv.writer(f)
        writer.writerow(["epsilon", "cum_prob"])
        for eps, prob in report.cdf:
            writer.writerow([repr(eps), repr(prob)])


def write_confusion_csv(path: str | Path, report: EvalReport,
                        header_lines: Sequence[str] = ()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        for line in header_lines:
            f.write(f"# {line}\n")
        writer = csv.writer(f)
        writer.writerow(["true\\pred"] + [str(l) for l in report.labels])
        for i, label in enumerate(report.labels):
            writer.writerow([str(label)] + [int(v) for v in report.confusion[i]])


def write_report_csv(path: str | Path, report: EvalReport,
                     header_lines: Sequence[str] = ()) -> None:
    """Summary metrics plus the per-area detection probabilities."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        for line in header_lines:
            f.write(f"# {line}\n")
        writer = csv.writer(f)
        writer.writerow(["metric", "value"])
        writer.writerow(["Pe", repr(report.average_detection)])
        writer.writerow(["mean_err", repr(report.mean_error)])
        writer.writerow(["n_samples", len(report.error_distances)])
        for label in sorted(report.per_area_detection):
            writer.writerow([f"P_{label}", repr(report.per_area_detection[label])])
