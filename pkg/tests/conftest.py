import numpy as np
import pytest

from beamloc.defaults import default_layout_dict, walkthrough_layout_dict
from beamloc.geometry import AreaGrid, CandidatePoint, RoomLayout, fold_point, load_layout


@pytest.fixture(scope="session")
def default_layout():
    return load_layout(default_layout_dict())


@pytest.fixture(scope="session")
def walkthrough_layout():
    return load_layout(walkthrough_layout_dict())


@pytest.fixture()
def grid2x2_layout():
    return load_layout({
        "room": {"width": 2.0, "depth": 2.0},
        "candidates": [{"id": 1, "x": 0.0, "y": 0.0}],
        "sta": {"x": 2.0, "y": 2.0},
        "areas": {"grid": {"x0": 0, "y0": 0, "x1": 2, "y1": 2, "rows": 2, "cols": 2}},
    })


def sampling_crossings(layout: RoomLayout, p, q, n_samples: int = 10_000) -> np.ndarray:
    """Dense-sampling oracle for segment/area crossing counts.

    Samples points along the segment, folds each into the room, bins it by
    open-interior area membership, and counts maximal same-(cell, area) runs.
    Independent of the clipping implementation under test.
    """
    r_count = layout.areas.count
    counts = np.zeros(r_count, dtype=int)
    t = (np.arange(n_samples) + 0.5) / n_samples
    ux = p[0] + t * (q[0] - p[0])
    uy = p[1] + t * (q[1] - p[1])
    cell_i = np.floor(ux / layout.width).astype(int)
    cell_j = np.floor(uy / layout.depth).astype(int)
    folded = np.array([fold_point(layout, (x, y)) for x, y in zip(ux, uy)])
    area = np.zeros(n_samples, dtype=int)
    for label, (x0, y0, x1, y1) in layout.areas.rects:
        inside = ((folded[:, 0] > x0) & (folded[:, 0] < x1)
                  & (folded[:, 1] > y0) & (folded[:, 1] < y1))
        area[inside] = label
    prev_key = None
    for k in range(n_samples):
        if area[k] == 0:
            prev_key = None
            continue
        key = (cell_i[k], cell_j[k], area[k])
        if key != prev_key:
            counts[area[k] - 1] += 1
        prev_key = key
    return counts


def random_small_layout(rng: np.random.Generator) -> RoomLayout:
    """Random room with a small area grid, one antenna, and an STA."""
    w = float(rng.uniform(2.0, 6.0))
    d = float(rng.uniform(2.0, 6.0))
    rows = int(rng.integers(1, 5))
    cols = int(rng.integers(1, 5))
    gx0 = float(rng.uniform(0.0, w * 0.4))
    gy0 = float(rng.uniform(0.0, d * 0.4))
    gx1 = float(rng.uniform(w * 0.6, w))
    gy1 = float(rng.uniform(d * 0.6, d))
    grid = AreaGrid.regular(gx0, gy0, gx1, gy1, rows, cols)
    ant = CandidatePoint(1, float(rng.uniform(0, w)), float(rng.uniform(0, d)))
    sta = (float(rng.uniform(0, w)), float(rng.uniform(0, d)))
    return RoomLayout(width=w, depth=d, candidates=(ant,), sta=sta, areas=grid)
