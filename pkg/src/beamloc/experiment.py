"""Batch-experiment orchestration: config loading and the four commands.

Every output file starts with provenance comment lines (tool version, config
hash, master seed) and is byte-reproducible for a fixed config and seed,
independent of the parallelism degree.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .channel import (ChannelParams, Trajectory, generate_trajectories,
                      load_scenario, scenario_to_dict)
from .defaults import default_config_dict, default_layout_dict
from .evaluation import (EvalReport, SweepResult, evaluate, placement_sweep,
                         write_cdf_csv, write_confusion_csv, write_report_csv,
                         write_sweep_csv)
from .forest import ForestParams
from .geometry import RoomLayout, load_layout
from .localizer import (LabeledDataset, build_dataset, derive_seed, load_localizer,
                        save_localizer, train_localizer)
from .placement import (MetricResult, PlacementPattern, ReflectionWeights,
                        format_ids, optimize, write_ranking_csv)


class ConfigError(ValueError):
    """The experiment configuration is invalid."""


@dataclass
class ExperimentConfig:
    """Resolved experiment configuration plus its provenance hash."""

    layout: RoomLayout
    train_trajectories: tuple[Trajectory, ...]
    test_trajectories: tuple[Trajectory, ...]
    channel: ChannelParams
    m: int
    max_order: int
    weights: ReflectionWeights
    mode: str
    explicit_ids: tuple[int, ...] | None
    u: int
    phi_bits: int
    psi_bits: int
    forest: ForestParams
    ranks: str
    seed: int
    jobs: int
    out: Path
    config_hash: str

    def header_lines(self) -> list[str]:
        return [f"tool_version={__version__}",
                f"config_sha256={self.config_hash}",
                f"seed={self.seed}"]


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def load_config(path: str | Path | None, overrides: dict | None = None) -> ExperimentConfig:
    """Load a config file (or the defaults), apply overrides, and resolve it."""
    doc = default_config_dict()
    base_dir = Path.cwd()
    if path is not None:
        raw = Path(path)
        if not raw.exists():
            raise ConfigError(f"config file {raw} does not exist")
        try:
            user = json.loads(raw.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {raw} is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config document must be a JSON object")
        unknown = set(user) - set(doc)
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        doc = _merge(doc, user)
        base_dir = raw.parent
    if overrides:
        doc = _merge(doc, {k: v for k, v in overrides.items() if v is not None})

    # `out` and `jobs` affect where/how results are produced, never what they
    # are, so they stay out of the provenance hash
    hashed = {k: v for k, v in doc.items() if k not in ("out", "jobs")}
    config_hash = hashlib.sha256(
        json.dumps(hashed, sort_keys=True, separators=(",", ":")).encode()).hexdigest()
    try:
        return _resolve(doc, base_dir, config_hash)
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError, OSError) as exc:
        raise ConfigError(str(exc)) from exc


def _resolve(doc: dict, base_dir: Path, config_hash: str) -> ExperimentConfig:
    seed = int(doc["seed"])

    layout_src = doc["layout"]
    if layout_src is None:
        layout = load_layout(default_layout_dict())
    elif isinstance(layout_src, dict):
        layout = load_layout(layout_src)
    else:
        layout = load_layout(_resolve_path(layout_src, base_dir))

    channel_over = dict(doc.get("channel") or {})
    eval_cfg = doc["eval"]

    scenario_src = doc["scenario"]
    if scenario_src is None:
        params = ChannelParams.from_dict(channel_over)
        train = tuple(generate_trajectories(
            layout, int(eval_cfg["train_points_per_area"]), derive_seed(seed, 10)))
    else:
        scen_params, traj = _load_scenario_source(scenario_src, base_dir)
        params = ChannelParams.from_dict(_merge(scen_params.to_dict(), channel_over))
        train = tuple(traj)

    test_src = doc["test_scenario"]
    if test_src is not None:
        _, test = _load_scenario_source(test_src, base_dir)
        test = tuple(test)
    elif scenario_src is None:
        test = tuple(generate_trajectories(
            layout, int(eval_cfg["test_points_per_area"]), derive_seed(seed, 11)))
    else:
        test = ()  # split from the training windows later

    pl = doc["placement"]
    max_order = int(pl["max_order"])
    weights_list = pl.get("weights")
    if weights_list is None:
        weights = ReflectionWeights.uniform(max_order)
    else:
        if len(weights_list) < max_order:
            raise ConfigError("placement.weights must cover orders 1..max_order")
        weights = ReflectionWeights(max_order, tuple(float(w) for w in weights_list[:max_order]))
    explicit_ids = pl.get("ids")
    if explicit_ids is not None:
        explicit_ids = tuple(int(i) for i in explicit_ids)

    feat = doc["feature"]
    forest = ForestParams(seed=derive_seed(seed, 20), **doc["forest"])

    out = Path(doc["out"])
    return ExperimentConfig(
        layout=layout, train_trajectories=train, test_trajectories=test,
        channel=params, m=int(pl["m"]), max_order=max_order, weights=weights,
        mode=str(pl["mode"]), explicit_ids=explicit_ids, u=int(feat["u"]),
        phi_bits=int(feat["phi_bits"]), psi_bits=int(feat["psi_bits"]),
        forest=forest, ranks=str(eval_cfg["ranks"]), seed=seed,
        jobs=int(doc["jobs"]), out=out, config_hash=config_hash)


def _resolve_path(p: str, base_dir: Path) -> Path:
    path = Path(p)
    return path if path.is_absolute() else base_dir / path


def _load_scenario_source(src, base_dir: Path):
    if isinstance(src, dict):
        return load_scenario(src)
    return load_scenario(_resolve_path(str(src), base_dir))


def split_dataset(dataset: LabeledDataset, fraction: float,
                  seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Per-area shuffled window split; both halves keep the dataset order."""
    if not (0.0 < fraction < 1.0):
        raise ConfigError("train_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    labels = sorted({s.area_label for s in dataset.samples})
    for label in labels:
        members = [i for i, s in enumerate(dataset.samples) if s.area_label == label]
        perm = rng.permutation(len(members))
        n_train = max(1, int(math.ceil(fraction * len(members))))
        if n_train >= len(members):
            n_train = len(members) - 1
        chosen = {members[perm[i]] for i in range(n_train)}
        train_idx.extend(i for i in members if i in chosen)
        test_idx.extend(i for i in members if i not in chosen)
    make = lambda idx: LabeledDataset(
        samples=tuple(dataset.samples[i] for i in sorted(idx)),
        partition=dataset.partition, u=dataset.u)
    return make(train_idx), make(test_idx)


def run_optimize(config: ExperimentConfig) -> list[MetricResult]:
    """Rank all placements and write ranking.csv into the output directory."""
    ranking = optimize(config.layout, config.m, config.weights, config.mode)
    config.out.mkdir(parents=True, exist_ok=True)
    write_ranking_csv(config.out / "ranking.csv", ranking, config.header_lines())
    return ranking


def _pick_pattern(config: ExperimentConfig) -> PlacementPattern:
    if config.explicit_ids is not None:
        for pat in _enumerate_matching(config):
            if pat.ids == config.explicit_ids:
                return pat
        raise ConfigError(f"placement.ids {list(config.explicit_ids)} is not a valid "
                          f"combination of {config.m} candidate ids")
    ranking = optimize(config.layout, config.m, config.weights, config.mode)
    return ranking[0].pattern


def _enumerate_matching(config: ExperimentConfig):
    from .placement import enumerate_placements
    return enumerate_placements(config.layout.n_candidates, config.m)


def _datasets(config: ExperimentConfig, pattern: PlacementPattern
              ) -> tuple[LabeledDataset, LabeledDataset]:
    train = build_dataset(config.layout, pattern, config.train_trajectories,
                          config.channel, config.u, derive_seed(config.seed, 1),
                          config.phi_bits, config.psi_bits)
    if config.test_trajectories:
        test = build_dataset(config.layout, pattern, config.test_trajectories,
                             config.channel, config.u, derive_seed(config.seed, 2),
                             config.phi_bits, config.psi_bits)
        return train, test
    return split_dataset(train, 0.7, derive_seed(config.seed, 4))


def run_pipeline(config: ExperimentConfig) -> tuple[EvalReport, Path]:
    """Dataset -> train -> evaluate for the configured (or rank-1) pattern."""
    pattern = _pick_pattern(config)
    train, test = _datasets(config, pattern)
    model = train_localizer(train, config.forest)
    model.metadata.update({"pattern_ids": list(pattern.ids), "pattern_b": pattern.b,
                           "seed": config.seed, "config_sha256": config.config_hash,
                           "tool_version": __version__})
    report = evaluate(model, test)

    config.out.mkdir(parents=True, exist_ok=True)
    header = config.header_lines() + [f"pattern_ids={format_ids(pattern.ids)}"]
    model_path = config.out / "model.json"
    save_localizer(model, model_path)
    write_report_csv(config.out / "report.csv", report, header)
    write_cdf_csv(config.out / "cdf.csv", report, header)
    write_confusion_csv(config.out / "confusion.csv", report, header)
    return report, model_path


def run_sweep(config: ExperimentConfig) -> SweepResult:
    """Optimize, then sweep the selected ranks; writes sweep and summary CSVs."""
    ranking = optimize(config.layout, config.m, config.weights, config.mode)
    if config.test_trajectories:
        test_traj = config.test_trajectories
    else:
        raise ConfigError("sweep requires test trajectories "
                          "(auto scenario or test_scenario)")
    result = placement_sweep(config.layout, ranking, config.train_trajectories,
                             test_traj, config.channel, config.u, config.forest,
                             config.seed, ranks=config.ranks, jobs=config.jobs,
                             phi_bits=config.phi_bits, psi_bits=config.psi_bits)
    config.out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(config.out / "sweep.csv", result.rows, config.header_lines())
    with open(config.out / "sweep_summary.csv", "w", newline="", encoding="utf-8") as f:
        for line in config.header_lines():
            f.write(f"# {line}\n")
        f.write("metric,value\n")
        f.write(f"spearman_neg_s_pe,{result.spearman!r}\n")
        f.write(f"top_decile_pe,{result.top_decile_pe!r}\n")
        f.write(f"bottom_decile_pe,{result.bottom_decile_pe!r}\n")
        f.write(f"n_patterns,{len(result.rows)}\n")
    return result


def run_eval(config: ExperimentConfig, model_path: str | Path) -> EvalReport:
    """Re-score a saved model on the configured test trajectories."""
    model = load_localizer(model_path)
    if config.test_trajectories:
        test_traj = config.test_trajectories
    else:
        raise ConfigError("eval requires test trajectories "
                          "(auto scenario or test_scenario)")
    ids = model.metadata.get("pattern_ids")
    if ids is None:
        raise ConfigError("model file lacks pattern_ids metadata")
    test = build_dataset(config.layout, tuple(int(i) for i in ids), test_traj,
                         config.channel, model.u, derive_seed(config.seed, 2),
                         config.phi_bits, config.psi_bits)
    report = evaluate(model, test)
    config.out.mkdir(parents=True, exist_ok=True)
    header = config.header_lines() + [f"model={Path(model_path).name}"]
    write_report_csv(config.out / "report.csv", report, header)
    write_cdf_csv(config.out / "cdf.csv", report, header)
    write_confusion_csv(config.out / "confusion.csv", report, header)
    return report
