"""Synthetic per-subcarrier MIMO channel oracle.

Replaces measured CSI with an image-method multipath model plus a simple
target interaction: paths passing near the target are attenuated (blocking)
and one antenna->target->STA scatter path is added. All constants are
synthetic and exposed in ChannelParams.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import RoomLayout, fold_polyline, mirror_images
from .placement import PlacementPattern

SPEED_OF_LIGHT = 299_792_458.0

# Paths shorter than this are dropped instead of dividing by ~zero.
_MIN_PATH_LENGTH = 1e-6


@dataclass(frozen=True)
class ChannelParams:
    """Synthetic channel constants (defaults mirror the reference experiment)."""

    center_frequency: float = 5.18e9
    bandwidth: float = 20e6
    subcarriers: int = 52
    reflection_order: int = 1
    wall_reflection_loss: float = 0.6
    target_scatter_gain: float = 0.0
    target_block_radius: float = 0.2
    target_block_loss: float = 0.3
    noise_std: float = 0.01
    n_sta_antennas: int = 2

    def __post_init__(self) -> None:
        if self.subcarriers < 1:
            raise ValueError("subcarriers must be >= 1")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.reflection_order < 0:
            raise ValueError("reflection_order must be >= 0")
        if not (0.0 < self.wall_reflection_loss <= 1.0):
            raise ValueError("wall_reflection_loss must be in (0, 1]")
        if not (0.0 <= self.target_block_loss < 1.0):
            raise ValueError("target_block_loss must be in [0, 1)")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.n_sta_antennas < 1:
            raise ValueError("n_sta_antennas must be >= 1")

    def subcarrier_frequencies(self) -> np.ndarray:
        k = np.arange(1, self.subcarriers + 1)
        return self.center_frequency - self.bandwidth / 2 + (k - 0.5) * self.bandwidth / self.subcarriers

    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.center_frequency

    def sta_antenna_positions(self, layout: RoomLayout) -> list[tuple[float, float]]:
        """STA array: antennas at sta -/+ lambda/4 along x (clamped to the room)."""
        sx, sy = layout.sta
        if self.n_sta_antennas == 1:
            return [(sx, sy)]
        quarter = self.wavelength() / 4
        span = np.linspace(-quarter, quarter, self.n_sta_antennas)
        return [(min(max(sx + dx, 0.0), layout.width), sy) for dx in span]

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, doc: dict) -> "ChannelParams":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown channel parameter(s): {sorted(unknown)}")
        return cls(**doc)


@dataclass(frozen=True)
class ChannelMatrix:
    """Per-subcarrier channel, h[k] is the N x M matrix at subcarrier k."""

    h: np.ndarray  # complex, shape (K, N, M)

    @property
    def n_subcarriers(self) -> int:
        return self.h.shape[0]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.h.shape


@dataclass(frozen=True)
class Trajectory:
    """A sequence of target positions labeled with the area they lie in."""

    area_label: int
    points: tuple[tuple[float, float], ...]


def _segment_point_distance(a: tuple[float, float], b: tuple[float, float],
                            p: tuple[float, float]) -> float:
    ax, ay = a
    bx, by = b
    px, py = p
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    if L2 == 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / L2
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def _path_blocked(layout: RoomLayout, src: tuple[float, float],
                  image_point: tuple[float, float], target: tuple[float, float],
                  radius: float) -> bool:
    """True when any leg of the folded path passes within radius of the target."""
    verts = fold_polyline(layout, src, image_point)
    for a, b in zip(verts[:-1], verts[1:]):
        if _segment_point_distance(a, b, target) < radius:
            return True
    return False


def synthesize_channel(layout: RoomLayout, pattern: PlacementPattern | Sequence[int],
                       target: tuple[float, float] | None, params: ChannelParams,
                       seed: int) -> ChannelMatrix:
    """Image-method channel for one placement, one target position, one seed.

    For each antenna pair, every image path of order <= reflection_order
    contributes (loss^order / d) * exp(-j 2 pi f_k d / c); paths passing near
    the target are attenuated by target_block_loss and, if a target is
    present, a scattered antenna->target->STA path is added. Complex Gaussian
    noise with per-element std noise_std is drawn from a generator seeded
    with `seed`, so identical inputs give bit-identical output.
    """
    ids = tuple(pattern.ids) if isinstance(pattern, PlacementPattern) else tuple(pattern)
    if target is not None and not layout._contains(*target):
        raise ValueError(f"target {target} is outside the room")
    ap_positions = [layout.candidate(i).position for i in ids]
    sta_positions = params.sta_antenna_positions(layout)
    freqs = params.subcarrier_frequencies()
    k2pi = -2j * math.pi / SPEED_OF_LIGHT

    h = np.zeros((params.subcarriers, len(sta_positions), len(ap_positions)),
                 dtype=complex)
    for n, sta_pos in enumerate(sta_positions):
        images = mirror_images(layout, sta_pos, params.reflection_order)
        for m, ap_pos in enumerate(ap_positions):
            acc = np.zeros(params.subcarriers, dtype=complex)
            for img in images:
                dist = math.hypot(img.point[0] - ap_pos[0], img.point[1] - ap_pos[1])
                if dist < _MIN_PATH_LENGTH:
                    continue
                amp = (params.wall_reflection_loss ** img.order) / dist
                if target is not None and _path_blocked(
                        layout, ap_pos, img.point, target, params.target_block_radius):
                    amp *= params.target_block_loss
                acc += amp * np.exp(k2pi * freqs * dist)
            if target is not None:
                d1 = math.hypot(target[0] - ap_pos[0], target[1] - ap_pos[1])
                d2 = math.hypot(sta_pos[0] - target[0], sta_pos[1] - target[1])
                if d1 > _MIN_PATH_LENGTH and d2 > _MIN_PATH_LENGTH:
                    acc += (params.target_scatter_gain / (d1 * d2)
                            * np.exp(k2pi * freqs * (d1 + d2)))
            h[:, n, m] = acc

    if params.noise_std > 0:
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)
        h = h + params.noise_std / math.sqrt(2.0) * noise
    return ChannelMatrix(h=h)


def snapshot_sequence(layout: RoomLayout, pattern: PlacementPattern | Sequence[int],
                      trajectory: Sequence[tuple[float, float]],
                      params: ChannelParams, seed: int) -> list[ChannelMatrix]:
    """One channel snapshot per trajectory point.

    Snapshot p draws its noise from the stream seeded with seed ^ p, so
    snapshots are independent yet reproducible and may be generated
    concurrently.
    """
    if len(trajectory) == 0:
        raise ValueError("trajectory must be non-empty")
    return [synthesize_channel(layout, pattern, pt, params, seed ^ p)
            for p, pt in enumerate(trajectory)]


def load_scenario(document: str | dict | Path) -> tuple[ChannelParams, list[Trajectory]]:
    """Parse a scenario document: {params {...}, trajectories [{area_label, points}]}."""
    if isinstance(document, Path):
        doc = json.loads(document.read_text(encoding="utf-8"))
    elif isinstance(document, str):
        doc = json.loads(document)
    else:
        doc = document
    if not isinstance(doc, dict):
        raise ValueError("scenario document must be a JSON object")
    params = ChannelParams.from_dict(doc.get("params", {}))
    trajectories = []
    for i, entry in enumerate(doc.get("trajectories", [])):
        label = entry.get("area_label")
        if not isinstance(label, int):
            raise ValueError(f"trajectories[{i}].area_label: expected an integer")
        points = tuple((float(p["x"]), float(p["y"])) for p in entry.get("points", []))
        if not points:
            raise ValueError(f"trajectories[{i}].points: must be non-empty")
        trajectories.append(Trajectory(area_label=label, points=points))
    return params, trajectories


def scenario_to_dict(params: ChannelParams, trajectories: Sequence[Trajectory]) -> dict:
    return {
        "params": params.to_dict(),
        "trajectories": [
            {"area_label": t.area_label,
             "points": [{"x": x, "y": y} for x, y in t.points]}
            for t in trajectories
        ],
    }


def generate_trajectories(layout: RoomLayout, points_per_area: int,
                          seed: int) -> list[Trajectory]:
    """Uniform random target positions inside each area, one trajectory per area.

    Positions are drawn from a per-area stream derived from (seed, label) so
    the scenario is stable under changes to the number of areas.
    """
    if points_per_area < 1:
        raise ValueError("points_per_area must be >= 1")
    trajectories = []
    for label, (x0, y0, x1, y1) in sorted(layout.areas.rects):
        rng = np.random.default_rng(np.random.SeedSequence([seed, label]))
        xs = rng.uniform(x0, x1, size=points_per_area)
        ys = rng.uniform(y0, y1, size=points_per_area)
        trajectories.append(Trajectory(area_label=label,
                                       points=tuple(zip(xs.tolist(), ys.tolist()))))
    return trajectories
