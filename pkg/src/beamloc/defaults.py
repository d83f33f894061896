"""Default experiment assets: room layout and configuration values.

The default room is 8 m x 8 m with 12 candidate antenna positions spread over
three sides (1 m spacing), the STA centered near the fourth side, and a
4-column x 8-row observation grid (32 areas) placed inside the antenna ring.
"""

from __future__ import annotations


def default_layout_dict() -> dict:
    candidates = []
    cid = 1
    for y in (2.5, 3.5, 4.5, 5.5):  # west side
        candidates.append({"id": cid, "x": 0.5, "y": y})
        cid += 1
    for x in (2.5, 3.5, 4.5, 5.5):  # north side
        candidates.append({"id": cid, "x": x, "y": 7.5})
        cid += 1
    for y in (5.5, 4.5, 3.5, 2.5):  # east side
        candidates.append({"id": cid, "x": 7.5, "y": y})
        cid += 1
    return {
        "room": {"width": 8.0, "depth": 8.0},
        "candidates": candidates,
        "sta": {"x": 4.0, "y": 0.5},
        "areas": {"grid": {"x0": 2.0, "y0": 1.5, "x1": 6.0, "y1": 6.5,
                           "rows": 8, "cols": 4}},
    }


def walkthrough_layout_dict() -> dict:
    """Four-area demo layout for the reflected-beam metric walkthrough.

    One antenna, STA on the far side, and four small labeled areas placed so
    the direct beam crosses area 4 once, first-order reflections cross areas
    4, 2, and 1, and a second-order reflection crosses area 1: with unit
    attenuation the combined metric is 5 when the reflected term is added and
    -3 when it is subtracted.
    """
    half = 0.06
    centers = {1: (0.6, 1.64), 2: (0.44, 1.56), 3: (0.2, 0.2), 4: (1.0, 1.32)}
    rects = [{"label": label, "x0": cx - half, "y0": cy - half,
              "x1": cx + half, "y1": cy + half}
             for label, (cx, cy) in sorted(centers.items())]
    return {
        "room": {"width": 4.0, "depth": 4.0},
        "candidates": [{"id": 1, "x": 0.5, "y": 1.1}],
        "sta": {"x": 3.3, "y": 2.7},
        "areas": {"rects": rects},
    }


def default_config_dict() -> dict:
    return {
        "layout": None,  # None selects the built-in default layout
        "scenario": None,  # None auto-generates per-area trajectories
        "test_scenario": None,
        "placement": {"m": 4, "max_order": 1, "weights": None,
                      "mode": "subtract", "ids": None},
        "feature": {"u": 4, "phi_bits": 7, "psi_bits": 5},
        "channel": {},
        "forest": {"n_trees": 100, "max_features": 1, "min_samples_split": 2,
                   "min_samples_leaf": 1, "max_depth": None},
        "eval": {"ranks": "all", "train_points_per_area": 11,
                 "test_points_per_area": 7, "train_fraction": 0.7},
        "seed": 0,
        "jobs": 1,
        "out": "results",
    }
