"""Placement metrics and exhaustive antenna-placement optimization.

Two metrics are computed from beam/area crossing counts: s1 is the number of
areas crossed by at least one direct beam, s2 combines direct and attenuated
reflected crossing totals. The objective s = s1 * s2 is minimized over all
id combinations of a given size.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Iterable, Iterator, Literal, Sequence

import numpy as np

from .geometry import CrossingTensor, RoomLayout, mirror_images, segment_area_crossings

SignMode = Literal["subtract", "add"]


@dataclass(frozen=True)
class PlacementPattern:
    """One antenna placement: sorted candidate ids plus its enumeration rank b."""

    ids: tuple[int, ...]
    b: int

    def __post_init__(self) -> None:
        if list(self.ids) != sorted(set(self.ids)):
            raise ValueError("pattern ids must be strictly increasing")
        if self.b < 0:
            raise ValueError("pattern index b must be >= 0")


@dataclass(frozen=True)
class ReflectionWeights:
    """Attenuation factors r_xi for reflected-beam orders 1..max_order."""

    max_order: int
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.max_order < 0:
            raise ValueError("max_order must be >= 0")
        if len(self.weights) != self.max_order:
            raise ValueError("need exactly one weight per order 1..max_order")
        for xi, w in enumerate(self.weights, start=1):
            if not (0.0 < w <= 1.0):
                raise ValueError(f"weight for order {xi} must be in (0, 1]")

    @classmethod
    def uniform(cls, max_order: int, value: float = 1.0) -> "ReflectionWeights":
        return cls(max_order, (value,) * max_order)


@dataclass(frozen=True)
class MetricResult:
    """Metric evaluation of one placement pattern."""

    pattern: PlacementPattern
    s1: int
    s2: float
    s: float
    feasible: bool


def enumerate_placements(n_candidates: int, n_selected: int) -> Iterator[PlacementPattern]:
    """All C(n_candidates, n_selected) id combinations in lexicographic order."""
    if not (1 <= n_selected <= n_candidates):
        raise ValueError("need 1 <= n_selected <= n_candidates")
    for b, ids in enumerate(combinations(range(1, n_candidates + 1), n_selected)):
        yield PlacementPattern(ids=ids, b=b)


def beam_crossings(layout: RoomLayout, pattern: PlacementPattern | Sequence[int],
                   max_order: int) -> CrossingTensor:
    """Crossing counts per reflection order for one placement.

    Beams are traced from each selected antenna to each STA image of order
    <= max_order; counts[xi] accumulates the per-area crossings of all
    order-xi beams.
    """
    ids = tuple(pattern.ids) if isinstance(pattern, PlacementPattern) else tuple(pattern)
    antennas = [layout.candidate(i).position for i in ids]
    images = mirror_images(layout, layout.sta, max_order)
    counts = np.zeros((max_order + 1, layout.areas.count), dtype=int)
    for ant in antennas:
        for img in images:
            counts[img.order] += segment_area_crossings(layout, ant, img.point)
    return CrossingTensor(counts=counts, antenna_ids=ids)


def metric_s1(crossings: CrossingTensor) -> int:
    """Number of areas crossed by at least one direct beam."""
    return int(np.count_nonzero(crossings.counts[0]))


def metric_s2(crossings: CrossingTensor, weights: ReflectionWeights,
              mode: SignMode = "subtract") -> float:
    """Direct crossing total combined with attenuated reflected totals.

    mode="subtract" subtracts the weighted reflected term (the default);
    mode="add" adds it instead.
    """
    if weights.max_order > crossings.max_order:
        raise ValueError("weights cover more orders than the crossing tensor")
    if mode not in ("subtract", "add"):
        raise ValueError(f"unknown sign mode {mode!r}")
    direct = float(crossings.counts[0].sum())
    reflected = 0.0
    for xi in range(1, weights.max_order + 1):
        reflected += weights.weights[xi - 1] * float(crossings.counts[xi].sum())
    return direct + reflected if mode == "add" else direct - reflected


def evaluate_pattern(layout: RoomLayout, pattern: PlacementPattern,
                     weights: ReflectionWeights,
                     mode: SignMode = "subtract") -> MetricResult:
    """Compute s1, s2, and the objective s for one pattern."""
    crossings = beam_crossings(layout, pattern, weights.max_order)
    s1 = metric_s1(crossings)
    s2 = metric_s2(crossings, weights, mode)
    return MetricResult(pattern=pattern, s1=s1, s2=s2, s=s1 * s2, feasible=s1 > 0)


def optimize(layout: RoomLayout, n_selected: int, weights: ReflectionWeights,
             mode: SignMode = "subtract") -> list[MetricResult]:
    """Rank every placement pattern by the objective s (ascending).

    Infeasible patterns (s1 = 0) are ranked after all feasible ones. Ties are
    broken by smaller s1, then lexicographic ids, so the ranking is a
    deterministic total order over the full enumeration.
    """
    if n_selected > layout.n_candidates:
        raise ValueError("cannot select more antennas than candidate positions")
    results = [evaluate_pattern(layout, pat, weights, mode)
               for pat in enumerate_placements(layout.n_candidates, n_selected)]
    results.sort(key=lambda r: (not r.feasible, r.s, r.s1, r.pattern.ids))
    return results


def n_patterns(n_candidates: int, n_selected: int) -> int:
    return math.comb(n_candidates, n_selected)


def format_ids(ids: Iterable[int]) -> str:
    return "-".join(str(i) for i in ids)


def write_ranking_csv(path: str | Path, results: Sequence[MetricResult],
                      header_lines: Sequence[str] = ()) -> None:
    """Write the full ranking as rank,b,ids,s1,s2,s,feasible."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        for line in header_lines:
            f.write(f"# {line}\n")
        writer = csv.writer(f)
        writer.writerow(["rank", "b", "ids", "s1", "s2", "s", "feasible"])
        for rank, res in enumerate(results, start=1):
            writer.writerow([rank, res.pattern.b, format_ids(res.pattern.ids),
                             res.s1, repr(res.s2), repr(res.s), int(res.feasible)])
