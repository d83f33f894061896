"""Room geometry, mirror-image unfolding, and beam/area crossing counts.

The room is the axis-aligned rectangle [0, width] x [0, depth]. Wall-reflected
propagation is handled with the standard 2-D image method: the plane is tiled
with reflected copies of the room, so a path with k wall bounces becomes a
straight segment from the source to a k-th order image of the destination.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

# Tolerance for "positive length inside an open rectangle", in meters.
# Grazing touches shorter than this do not count as crossings.
CROSSING_EPS = 1e-9


class LayoutError(ValueError):
    """A layout document violates the schema or the geometry invariants."""


@dataclass(frozen=True)
class CandidatePoint:
    """One candidate AP antenna position."""

    id: int
    x: float
    y: float

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class AreaGrid:
    """Labeled axis-aligned area partition.

    rects holds (label, (x0, y0, x1, y1)) entries; labels are unique and
    contiguous from 1. Rectangles must be pairwise interior-disjoint.
    """

    rects: tuple[tuple[int, tuple[float, float, float, float]], ...]

    def __post_init__(self) -> None:
        labels = [label for label, _ in self.rects]
        if sorted(labels) != list(range(1, len(labels) + 1)):
            dupes = sorted({l for l in labels if labels.count(l) > 1})
            if dupes:
                raise LayoutError(f"areas: duplicate labels {dupes}")
            raise LayoutError(
                f"areas: labels must be contiguous 1..{len(labels)}, got {sorted(labels)}"
            )
        for label, (x0, y0, x1, y1) in self.rects:
            if not (x1 > x0 and y1 > y0):
                raise LayoutError(f"areas: rectangle for label {label} is degenerate")
        # Pairwise interior disjointness.
        for i, (la, a) in enumerate(self.rects):
            for lb, b in self.rects[i + 1 :]:
                if _rects_overlap(a, b):
                    raise LayoutError(f"areas: labels {la} and {lb} overlap")

    @property
    def count(self) -> int:
        return len(self.rects)

    @cached_property
    def rect_array(self) -> np.ndarray:
        """(R, 4) array of [x0, y0, x1, y1] ordered by label."""
        ordered = sorted(self.rects)
        return np.array([rect for _, rect in ordered], dtype=float)

    def locate(self, point: tuple[float, float]) -> int | None:
        """Label of the first rectangle (by label order) containing the point."""
        px, py = point
        for label, (x0, y0, x1, y1) in sorted(self.rects):
            if x0 <= px <= x1 and y0 <= py <= y1:
                return label
        return None

    @classmethod
    def regular(cls, x0: float, y0: float, x1: float, y1: float,
                rows: int, cols: int) -> "AreaGrid":
        """rows x cols grid over [x0,x1]x[y0,y1], labels row-major from 1.

        Row 0 is the y0 side, column 0 the x0 side.
        """
        if rows < 1 or cols < 1:
            raise LayoutError("areas.grid: rows and cols must be >= 1")
        if not (x1 > x0 and y1 > y0):
            raise LayoutError("areas.grid: empty extent")
        dx = (x1 - x0) / cols
        dy = (y1 - y0) / rows
        rects = []
        for r in range(rows):
            for c in range(cols):
                label = r * cols + c + 1
                rects.append((label, (x0 + c * dx, y0 + r * dy,
                                      x0 + (c + 1) * dx, y0 + (r + 1) * dy)))
        return cls(tuple(rects))


def _rects_overlap(a: tuple, b: tuple) -> bool:
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    return ax0 < bx1 and bx0 < ax1 and ay0 < by1 and by0 < ay1


@dataclass(frozen=True)
class RoomLayout:
    """Rectangular room with candidate antenna positions, STA, and areas."""

    width: float
    depth: float
    candidates: tuple[CandidatePoint, ...]
    sta: tuple[float, float]
    areas: AreaGrid

    def __post_init__(self) -> None:
        if not (self.width > 0 and self.depth > 0):
            raise LayoutError("room: width and depth must be positive")
        ids = [c.id for c in self.candidates]
        if sorted(ids) != list(range(1, len(ids) + 1)):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            if dupes:
                raise LayoutError(f"candidates: duplicate ids {dupes}")
            raise LayoutError(
                f"candidates: ids must be contiguous 1..{len(ids)}, got {sorted(ids)}"
            )
        for c in self.candidates:
            if not self._contains(c.x, c.y):
                raise LayoutError(f"candidates: id {c.id} at ({c.x}, {c.y}) is outside the room")
        if not self._contains(*self.sta):
            raise LayoutError(f"sta: position {self.sta} is outside the room")
        for label, (x0, y0, x1, y1) in self.areas.rects:
            if not (self._contains(x0, y0) and self._contains(x1, y1)):
                raise LayoutError(f"areas: rectangle for label {label} extends outside the room")

    def _contains(self, x: float, y: float) -> bool:
        return 0.0 <= x <= self.width and 0.0 <= y <= self.depth

    @property
    def n_candidates(self) -> int:
        return len(self.candidates)

    @cached_property
    def _candidates_by_id(self) -> dict[int, CandidatePoint]:
        return {c.id: c for c in self.candidates}

    def candidate(self, cand_id: int) -> CandidatePoint:
        try:
            return self._candidates_by_id[cand_id]
        except KeyError:
            raise LayoutError(f"unknown candidate id {cand_id}") from None


@dataclass(frozen=True)
class MirrorImage:
    """Image of a point in the tiled (unfolded) plane.

    cell = (i, j) indexes the lattice copy of the room covering
    [i*W, (i+1)*W] x [j*D, (j+1)*D]; order = |i| + |j| equals the wall-bounce
    count of the folded path into that cell.
    """

    order: int
    point: tuple[float, float]
    cell: tuple[int, int]
    width: float
    depth: float

    def fold(self, point: tuple[float, float]) -> tuple[float, float]:
        """Affine map taking tiled-plane points in this cell back to the room."""
        i, j = self.cell
        u, v = point
        x = u - i * self.width if i % 2 == 0 else (i + 1) * self.width - u
        y = v - j * self.depth if j % 2 == 0 else (j + 1) * self.depth - v
        return (x, y)


@dataclass(frozen=True)
class CrossingTensor:
    """Per-order, per-area beam crossing counts for one antenna placement.

    counts[xi][r-1] is the number of times order-xi beams pass through area r.
    """

    counts: np.ndarray  # (max_order + 1, R) int array
    antenna_ids: tuple[int, ...]

    def __post_init__(self) -> None:
        if np.any(self.counts < 0):
            raise ValueError("crossing counts must be non-negative")

    @property
    def max_order(self) -> int:
        return self.counts.shape[0] - 1

    @property
    def n_areas(self) -> int:
        return self.counts.shape[1]


def load_layout(document: str | dict | Path) -> RoomLayout:
    """Parse and validate a layout document (JSON text, path, or dict).

    Schema: room {width, depth}, candidates [{id, x, y}], sta {x, y},
    areas {grid {x0, y0, x1, y1, rows, cols}} or areas {rects [{label, x0, y0, x1, y1}]}.
    Units are meters.
    """
    if isinstance(document, Path):
        doc = json.loads(document.read_text(encoding="utf-8"))
    elif isinstance(document, str):
        doc = json.loads(document)
    else:
        doc = document
    if not isinstance(doc, dict):
        raise LayoutError("layout document must be a JSON object")

    room = _require(doc, "room", dict)
    width = _number(room, "room.width", "width")
    depth = _number(room, "room.depth", "depth")

    cand_list = _require(doc, "candidates", list)
    candidates = []
    for i, entry in enumerate(cand_list):
        if not isinstance(entry, dict):
            raise LayoutError(f"candidates[{i}]: expected an object")
        cid = entry.get("id")
        if not isinstance(cid, int):
            raise LayoutError(f"candidates[{i}].id: expected an integer")
        candidates.append(CandidatePoint(cid, _number(entry, f"candidates[{i}].x", "x"),
                                         _number(entry, f"candidates[{i}].y", "y")))

    sta_obj = _require(doc, "sta", dict)
    sta = (_number(sta_obj, "sta.x", "x"), _number(sta_obj, "sta.y", "y"))

    areas_obj = _require(doc, "areas", dict)
    if "grid" in areas_obj:
        g = areas_obj["grid"]
        if not isinstance(g, dict):
            raise LayoutError("areas.grid: expected an object")
        grid = AreaGrid.regular(
            _number(g, "areas.grid.x0", "x0"), _number(g, "areas.grid.y0", "y0"),
            _number(g, "areas.grid.x1", "x1"), _number(g, "areas.grid.y1", "y1"),
            int(_number(g, "areas.grid.rows", "rows")), int(_number(g, "areas.grid.cols", "cols")))
    elif "rects" in areas_obj:
        rects = []
        for i, entry in enumerate(areas_obj["rects"]):
            if not isinstance(entry, dict):
                raise LayoutError(f"areas.rects[{i}]: expected an object")
            label = entry.get("label")
            if not isinstance(label, int):
                raise LayoutError(f"areas.rects[{i}].label: expected an integer")
            rects.append((label, (_number(entry, f"areas.rects[{i}].x0", "x0"),
                                  _number(entry, f"areas.rects[{i}].y0", "y0"),
                                  _number(entry, f"areas.rects[{i}].x1", "x1"),
                                  _number(entry, f"areas.rects[{i}].y1", "y1"))))
        grid = AreaGrid(tuple(rects))
    else:
        raise LayoutError("areas: expected either 'grid' or 'rects'")

    return RoomLayout(width=width, depth=depth, candidates=tuple(candidates),
                      sta=sta, areas=grid)


def _require(doc: dict, key: str, typ: type):
    if key not in doc:
        raise LayoutError(f"missing required key '{key}'")
    val = doc[key]
    if not isinstance(val, typ):
        raise LayoutError(f"'{key}': expected {typ.__name__}")
    return val


def _number(obj: dict, field: str, key: str) -> float:
    val = obj.get(key)
    if not isinstance(val, (int, float)) or isinstance(val, bool):
        raise LayoutError(f"{field}: expected a number")
    if not math.isfinite(val):
        raise LayoutError(f"{field}: must be finite")
    return float(val)


def mirror_images(layout: RoomLayout, source: tuple[float, float],
                  max_order: int) -> list[MirrorImage]:
    """All images of `source` with reflection order <= max_order.

    Images live in lattice cells (i, j) with |i| + |j| <= max_order; identical
    image points (possible for sources on a wall) are kept once at the lowest
    order. The order-0 entry is always present and first.
    """
    if max_order < 0:
        raise ValueError("max_order must be >= 0")
    sx, sy = source
    if not layout._contains(sx, sy):
        raise ValueError(f"source {source} is outside the room")
    w, d = layout.width, layout.depth
    images: list[MirrorImage] = []
    seen: set[tuple[float, float]] = set()
    for order in range(max_order + 1):
        cells = [(i, order - abs(i)) for i in range(-order, order + 1)]
        cells += [(i, -(order - abs(i))) for i in range(-order, order + 1)
                  if order - abs(i) > 0]
        for i, j in sorted(cells):
            ux = i * w + sx if i % 2 == 0 else (i + 1) * w - sx
            vy = j * d + sy if j % 2 == 0 else (j + 1) * d - sy
            if (ux, vy) in seen:
                continue
            seen.add((ux, vy))
            images.append(MirrorImage(order=order, point=(ux, vy), cell=(i, j),
                                      width=w, depth=d))
    return images


def fold_point(layout: RoomLayout, point: tuple[float, float]) -> tuple[float, float]:
    """Map a tiled-plane point back into the room via the global fold."""
    u, v = point
    tw, td = 2.0 * layout.width, 2.0 * layout.depth
    tu = u % tw
    tv = v % td
    x = tu if tu <= layout.width else tw - tu
    y = tv if tv <= layout.depth else td - tv
    return (x, y)


def fold_polyline(layout: RoomLayout, p: tuple[float, float],
                  q: tuple[float, float]) -> list[tuple[float, float]]:
    """Fold the straight tiled-plane segment p->q into an in-room polyline.

    Interior vertices of the result lie on walls (they are the wall-bounce
    points of the physical path).
    """
    px, py = p
    qx, qy = q
    dx, dy = qx - px, qy - py
    ts = {0.0, 1.0}
    for step, start, delta in ((layout.width, px, dx), (layout.depth, py, dy)):
        if delta == 0.0:
            continue
        lo = min(start, start + delta)
        hi = max(start, start + delta)
        m0 = math.ceil(lo / step)
        m1 = math.floor(hi / step)
        for m in range(m0, m1 + 1):
            t = (m * step - start) / delta
            if 0.0 < t < 1.0:
                ts.add(t)
    verts = []
    for t in sorted(ts):
        pt = (px + t * dx, py + t * dy)
        verts.append(fold_point(layout, pt))
    return verts


def segment_area_crossings(layout: RoomLayout, p: tuple[float, float],
                           q: tuple[float, float]) -> np.ndarray:
    """Count area crossings of a tiled-plane segment, per actual area label.

    For each label r, the count is the number of lattice copies of area r
    whose interior the segment intersects with positive length (tolerance
    CROSSING_EPS). Returns an int array of length R indexed by label - 1.
    """
    r_count = layout.areas.count
    counts = np.zeros(r_count, dtype=int)
    px, py = p
    qx, qy = q
    for v in (px, py, qx, qy):
        if not math.isfinite(v):
            raise ValueError("segment endpoints must be finite")
    dx, dy = qx - px, qy - py
    seg_len = math.hypot(dx, dy)
    if seg_len <= CROSSING_EPS:
        return counts

    rects = layout.areas.rect_array  # (R, 4), label order
    w, d = layout.width, layout.depth
    i_lo = math.floor(min(px, qx) / w)
    i_hi = math.floor(max(px, qx) / w)
    j_lo = math.floor(min(py, qy) / d)
    j_hi = math.floor(max(py, qy) / d)
    for i in range(i_lo, i_hi + 1):
        if i % 2 == 0:
            u0 = i * w + rects[:, 0]
            u1 = i * w + rects[:, 2]
        else:
            u0 = (i + 1) * w - rects[:, 2]
            u1 = (i + 1) * w - rects[:, 0]
        for j in range(j_lo, j_hi + 1):
            if j % 2 == 0:
                v0 = j * d + rects[:, 1]
                v1 = j * d + rects[:, 3]
            else:
                v0 = (j + 1) * d - rects[:, 3]
                v1 = (j + 1) * d - rects[:, 1]
            hit = _clip_positive(px, py, dx, dy, seg_len,
                                 u0 + CROSSING_EPS, v0 + CROSSING_EPS,
                                 u1 - CROSSING_EPS, v1 - CROSSING_EPS)
            counts[hit] += 1
    return counts


def _clip_positive(px: float, py: float, dx: float, dy: float, seg_len: float,
                   x0: np.ndarray, y0: np.ndarray,
                   x1: np.ndarray, y1: np.ndarray) -> np.ndarray:
    """Boolean mask of rectangles the segment overlaps with positive length.

    Vectorized slab clipping of the parametric segment against each
    [x0,x1]x[y0,y1] box (boxes already shrunk by the crossing tolerance).
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        if dx != 0.0:
            ta = (x0 - px) / dx
            tb = (x1 - px) / dx
            lo_x = np.minimum(ta, tb)
            hi_x = np.maximum(ta, tb)
        else:
            inside = (x0 < px) & (px < x1)
            lo_x = np.where(inside, -np.inf, np.inf)
            hi_x = np.where(inside, np.inf, -np.inf)
        if dy != 0.0:
            ta = (y0 - py) / dy
            tb = (y1 - py) / dy
            lo_y = np.minimum(ta, tb)
            hi_y = np.maximum(ta, tb)
        else:
            inside = (y0 < py) & (py < y1)
            lo_y = np.where(inside, -np.inf, np.inf)
            hi_y = np.where(inside, np.inf, -np.inf)
    t_lo = np.maximum(np.maximum(lo_x, lo_y), 0.0)
    t_hi = np.minimum(np.minimum(hi_x, hi_y), 1.0)
    return (t_hi - t_lo) * seg_len > 0.0
