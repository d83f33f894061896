import json
from pathlib import Path

import pytest

from beamloc.cli import main
from beamloc.defaults import walkthrough_layout_dict
from beamloc.experiment import ConfigError, load_config, split_dataset


def write_config(tmp_path: Path, **overrides) -> Path:
    doc = {
        "eval": {"train_points_per_area": 6, "test_points_per_area": 5,
                 "ranks": "all"},
        "channel": {"subcarriers": 6},
        "forest": {"n_trees": 8},
        "placement": {"m": 4, "max_order": 0, "ids": [2, 3, 10, 11]},
        "seed": 5,
        "out": str(tmp_path / "results"),
    }
    for key, val in overrides.items():
        if isinstance(val, dict) and isinstance(doc.get(key), dict):
            doc[key].update(val)
        else:
            doc[key] = val
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


class TestConfig:
    def test_defaults_resolve(self):
        config = load_config(None)
        assert config.layout.n_candidates == 12
        assert config.m == 4
        assert config.u == 4
        assert len(config.train_trajectories) == 32

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"layoutt": "x"}))
        with pytest.raises(ConfigError, match="layoutt"):
            load_config(path)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="does not exist"):
            load_config(tmp_path / "nope.json")

    def test_overrides_change_hash(self, tmp_path):
        path = write_config(tmp_path)
        a = load_config(path)
        b = load_config(path, {"seed": 6})
        assert a.config_hash != b.config_hash
        assert b.seed == 6

    def test_layout_path_resolved_relative_to_config(self, tmp_path):
        layout_path = tmp_path / "room.json"
        layout_path.write_text(json.dumps(walkthrough_layout_dict()))
        path = write_config(tmp_path, layout="room.json",
                            placement={"m": 1, "max_order": 2, "ids": None})
        config = load_config(path)
        assert config.layout.n_candidates == 1
        assert config.layout.areas.count == 4

    def test_weights_must_cover_orders(self, tmp_path):
        path = write_config(tmp_path, placement={"max_order": 2, "weights": [1.0]})
        with pytest.raises(ConfigError, match="weights"):
            load_config(path)


class TestSplitDataset:
    def test_split_fraction_and_disjoint(self):
        import numpy as np
        from test_localizer import synthetic_dataset
        from beamloc.geometry import AreaGrid

        rng = np.random.default_rng(0)
        data = synthetic_dataset(rng, AreaGrid.regular(0, 0, 4, 4, 2, 2),
                                 n_per_area=10)
        train, test = split_dataset(data, 0.7, seed=1)
        assert len(train.samples) + len(test.samples) == len(data.samples)
        assert train.per_area_counts == {1: 7, 2: 7, 3: 7, 4: 7}
        train_ids = {id(s) for s in train.samples}
        assert all(id(s) not in train_ids for s in test.samples)


class TestCliCommands:
    def test_optimize_writes_full_ranking(self, tmp_path, capsys):
        path = write_config(tmp_path)
        assert main(["optimize", "--config", str(path)]) == 0
        lines = (tmp_path / "results" / "ranking.csv").read_text().splitlines()
        header_lines = [l for l in lines if l.startswith("#")]
        assert any("tool_version=" in l for l in header_lines)
        assert any("seed=5" in l for l in header_lines)
        rows = [l for l in lines if not l.startswith("#")]
        assert rows[0] == "rank,b,ids,s1,s2,s,feasible"
        assert len(rows) == 1 + 495

    def test_optimize_single_pattern(self, tmp_path):
        layout_path = tmp_path / "room.json"
        layout_path.write_text(json.dumps(walkthrough_layout_dict()))
        path = write_config(tmp_path, layout="room.json",
                            placement={"m": 1, "max_order": 0, "ids": None})
        assert main(["optimize", "--config", str(path)]) == 0
        rows = [l for l in (tmp_path / "results" / "ranking.csv").read_text().splitlines()
                if not l.startswith("#")]
        assert len(rows) == 2

    def test_rankings_differ_with_reflection_order(self, tmp_path):
        path0 = write_config(tmp_path, out=str(tmp_path / "r0"),
                             placement={"m": 4, "max_order": 0, "ids": None})
        assert main(["optimize", "--config", str(path0)]) == 0
        path1 = write_config(tmp_path, out=str(tmp_path / "r1"),
                             placement={"m": 4, "max_order": 1, "weights": [1.0],
                                        "ids": None})
        assert main(["optimize", "--config", str(path1)]) == 0

        def top(p):
            rows = [l for l in (Path(p) / "ranking.csv").read_text().splitlines()
                    if not l.startswith("#") and not l.startswith("rank")]
            return rows[0].split(",")[2]

        assert top(tmp_path / "r0") != top(tmp_path / "r1")

    def test_run_and_eval_round_trip(self, tmp_path):
        path = write_config(tmp_path)
        assert main(["run", "--config", str(path)]) == 0
        out = tmp_path / "results"
        report = (out / "report.csv").read_text()
        pe = float([l for l in report.splitlines() if l.startswith("Pe,")][0].split(",")[1])
        assert 0.0 <= pe <= 1.0
        assert (out / "model.json").exists()
        assert (out / "cdf.csv").exists()
        assert (out / "confusion.csv").exists()

        # re-score the saved model on a fresh test scenario
        rc = main(["eval", "--config", str(path), "--model",
                   str(out / "model.json"), "--out", str(tmp_path / "rescored"),
                   "--seed", "6"])
        assert rc == 0
        assert (tmp_path / "rescored" / "report.csv").exists()

    def test_run_reproducible_byte_identical(self, tmp_path):
        path = write_config(tmp_path, out=str(tmp_path / "a"))
        assert main(["run", "--config", str(path)]) == 0
        path2 = write_config(tmp_path, out=str(tmp_path / "a"))
        first = {f.name: f.read_bytes() for f in (tmp_path / "a").iterdir()}
        assert main(["run", "--config", str(path2), "--out", str(tmp_path / "b")]) == 0
        for name, blob in first.items():
            if name == "model.json":
                continue  # model embeds the output-independent metadata only
            assert (tmp_path / "b" / name).read_bytes() == blob

    def test_sweep_rank_selection(self, tmp_path):
        path = write_config(tmp_path, placement={"m": 4, "max_order": 0, "ids": None},
                            eval={"ranks": "top:3,bottom:3",
                                  "train_points_per_area": 6,
                                  "test_points_per_area": 5})
        assert main(["sweep", "--config", str(path)]) == 0
        rows = [l for l in (tmp_path / "results" / "sweep.csv").read_text().splitlines()
                if not l.startswith("#")]
        assert rows[0] == "rank,b,ids,s1,s2,s,Pe,mean_err"
        assert len(rows) == 1 + 6
        summary = (tmp_path / "results" / "sweep_summary.csv").read_text()
        assert "spearman_neg_s_pe," in summary
        assert "top_decile_pe," in summary

    def test_config_error_exit_code(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{not json")
        assert main(["optimize", "--config", str(path)]) == 2

    def test_bad_ids_exit_code(self, tmp_path):
        path = write_config(tmp_path)
        assert main(["run", "--config", str(path), "--ids", "1,1,2,3"]) == 2

    def test_runtime_error_exit_code(self, tmp_path):
        path = write_config(tmp_path)
        assert main(["eval", "--config", str(path), "--model",
                     str(tmp_path / "missing.json")]) == 3
