import numpy as np
import pytest

from beamloc.channel import ChannelParams, Trajectory, generate_trajectories
from beamloc.feedback import FeatureVector, feature_length
from beamloc.forest import ForestParams
from beamloc.geometry import AreaGrid, CandidatePoint, RoomLayout
from beamloc.localizer import (LabeledDataset, build_dataset, derive_seed, localize,
                               load_localizer, localizer_from_dict, localizer_to_dict,
                               save_localizer, train_localizer)
from beamloc.forest import predict_point


def four_area_layout():
    return RoomLayout(width=8.0, depth=8.0,
                      candidates=(CandidatePoint(1, 0.5, 1.0),
                                  CandidatePoint(2, 0.5, 7.0),
                                  CandidatePoint(3, 7.5, 7.0),
                                  CandidatePoint(4, 7.5, 1.0)),
                      sta=(4.0, 0.5),
                      areas=AreaGrid.regular(2.0, 2.0, 6.0, 6.0, 2, 2))


def fast_params(**kw):
    base = dict(subcarriers=8, reflection_order=1, noise_std=0.01)
    base.update(kw)
    return ChannelParams(**base)


def small_forest(seed=0, n_trees=10):
    return ForestParams(n_trees=n_trees, max_features=4, seed=seed)


class TestBuildDataset:
    def test_window_count_minimal(self):
        layout = four_area_layout()
        traj = [Trajectory(1, ((2.5, 2.5), (2.6, 2.6), (2.7, 2.7), (2.8, 2.8)))]
        data = build_dataset(layout, (1, 2), traj, fast_params(), u=4, seeds=0)
        assert len(data.samples) == 1
        assert data.samples[0].p == 4
        assert data.samples[0].position == (2.8, 2.8)

    def test_window_count_scales(self):
        layout = four_area_layout()
        trajs = generate_trajectories(layout, 6, seed=1)
        data = build_dataset(layout, (1, 2), trajs, fast_params(), u=4, seeds=0)
        assert len(data.samples) == 4 * (6 - 4 + 1)
        assert data.per_area_counts == {1: 3, 2: 3, 3: 3, 4: 3}

    def test_reference_feature_dimension(self):
        layout = four_area_layout()
        traj = [Trajectory(1, tuple((2.2 + 0.01 * i, 2.2) for i in range(4)))]
        data = build_dataset(layout, (1, 2, 3, 4), traj,
                             fast_params(subcarriers=52), u=4, seeds=0)
        assert data.feature_dim == 3328
        assert feature_length(4, 2, 52, 4) == 3328

    def test_point_outside_area_rejected(self):
        layout = four_area_layout()
        traj = [Trajectory(1, ((2.5, 2.5), (5.5, 5.5), (2.6, 2.5), (2.7, 2.5)))]
        with pytest.raises(ValueError, match="outside area"):
            build_dataset(layout, (1,), traj, fast_params(), u=4, seeds=0)

    def test_short_trajectory_rejected(self):
        layout = four_area_layout()
        traj = [Trajectory(1, ((2.5, 2.5), (2.6, 2.6)))]
        with pytest.raises(ValueError, match="at least U"):
            build_dataset(layout, (1,), traj, fast_params(), u=4, seeds=0)

    def test_unknown_area_rejected(self):
        layout = four_area_layout()
        traj = [Trajectory(9, ((2.5, 2.5),) * 4)]
        with pytest.raises(ValueError, match="no such area"):
            build_dataset(layout, (1,), traj, fast_params(), u=4, seeds=0)

    def test_master_seed_expands_to_trajectory_seeds(self):
        from beamloc.localizer import derive_trajectory_seeds

        layout = four_area_layout()
        trajs = generate_trajectories(layout, 5, seed=2)
        a = build_dataset(layout, (1, 2), trajs, fast_params(), u=2, seeds=123)
        b = build_dataset(layout, (1, 2), trajs, fast_params(), u=2,
                          seeds=derive_trajectory_seeds(123, len(trajs)))
        assert np.array_equal(a.matrix(), b.matrix())
        c = build_dataset(layout, (1, 2), trajs, fast_params(), u=2, seeds=124)
        assert not np.array_equal(a.matrix(), c.matrix())

    def test_relabel(self):
        layout = four_area_layout()
        trajs = generate_trajectories(layout, 4, seed=3)
        data = build_dataset(layout, (1, 2), trajs, fast_params(), u=2, seeds=0)
        coarse = AreaGrid.regular(2.0, 2.0, 6.0, 6.0, 1, 1)
        relabeled = data.relabel(coarse)
        assert set(relabeled.labels().tolist()) == {1}
        assert np.array_equal(relabeled.matrix(), data.matrix())


def synthetic_dataset(rng, partition, n_per_area=12, dim=6, spread=0.35):
    """Separable synthetic features tied to area centers (no channel model)."""
    samples = []
    for label, (x0, y0, x1, y1) in sorted(partition.rects):
        center = np.zeros(dim)
        center[(label - 1) % dim] = 3.0
        center[label % dim] = -2.0
        for i in range(n_per_area):
            values = center + spread * rng.standard_normal(dim)
            pos = (float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1)))
            samples.append(FeatureVector(values=values, p=i + 1,
                                         area_label=label, position=pos))
    return LabeledDataset(samples=tuple(samples), partition=partition, u=1)


class TestTrainLocalizer:
    def test_r1_constant_classifier_and_global_regressor(self):
        rng = np.random.default_rng(0)
        partition = AreaGrid.regular(0, 0, 4, 4, 1, 1)
        data = synthetic_dataset(rng, partition)
        model = train_localizer(data, small_forest())
        assert model.classifier is None
        assert model.constant_label == 1
        assert list(model.regressors) == [1]
        est = localize(model, data.samples[0])
        assert est.area == 1
        assert est.vote_fractions == {1: 1.0}

    def test_r2_regressors_train_on_disjoint_subsets(self):
        rng = np.random.default_rng(1)
        partition = AreaGrid.regular(0, 0, 4, 4, 1, 2)
        data = synthetic_dataset(rng, partition, n_per_area=9)
        model = train_localizer(data, small_forest())
        counts = model.metadata["regressor_sample_counts"]
        assert counts == {1: 9, 2: 9}
        assert sorted(model.regressors) == [1, 2]

    def test_insufficient_area_samples_names_label(self):
        rng = np.random.default_rng(2)
        partition = AreaGrid.regular(0, 0, 4, 4, 1, 2)
        data = synthetic_dataset(rng, partition, n_per_area=3)
        short = LabeledDataset(samples=data.samples[:-2], partition=partition, u=1)
        with pytest.raises(ValueError, match="area 2"):
            train_localizer(short, ForestParams(n_trees=3, max_features=2,
                                                min_samples_split=2, seed=0))

    def test_locality_immune_to_other_area_shuffling(self):
        rng = np.random.default_rng(3)
        partition = AreaGrid.regular(0, 0, 4, 4, 2, 2)
        data = synthetic_dataset(rng, partition, n_per_area=8)
        model = train_localizer(data, small_forest(seed=5))

        # shuffle the *positions* of samples from areas != 2 in the sample list
        # while keeping area-2 samples in their original relative order
        samples = list(data.samples)
        other_idx = [i for i, s in enumerate(samples) if s.area_label != 2]
        perm = np.random.default_rng(99).permutation(len(other_idx))
        shuffled = samples.copy()
        for slot, src in zip(other_idx, (other_idx[p] for p in perm)):
            shuffled[slot] = samples[src]
        data2 = LabeledDataset(samples=tuple(shuffled), partition=partition, u=1)
        model2 = train_localizer(data2, small_forest(seed=5))

        probe = np.random.default_rng(7).standard_normal((10, 6))
        for row in probe:
            assert (predict_point(model.regressors[2], row)
                    == predict_point(model2.regressors[2], row))

    def test_regression_training_time_trend(self):
        # same samples relabeled at increasing partition resolution: the
        # regression stage must get cheaper as areas shrink
        rng = np.random.default_rng(4)
        fine = AreaGrid.regular(0, 0, 8, 8, 4, 4)
        data = synthetic_dataset(rng, fine, n_per_area=24, dim=8)
        times = []
        for rows, cols in [(1, 1), (2, 2), (4, 4)]:
            grid = AreaGrid.regular(0, 0, 8, 8, rows, cols)
            relabeled = data.relabel(grid)
            model = train_localizer(relabeled, ForestParams(
                n_trees=20, max_features=1, seed=0))
            times.append(model.metadata["regression_train_seconds"])
        assert times[0] > times[-1]


class TestLocalize:
    def test_training_sample_round_trip(self):
        rng = np.random.default_rng(5)
        partition = AreaGrid.regular(0, 0, 4, 4, 2, 2)
        data = synthetic_dataset(rng, partition, n_per_area=10, spread=0.1)
        model = train_localizer(data, small_forest(seed=1, n_trees=30))
        hits = 0
        for sample in data.samples:
            est = localize(model, sample)
            if est.area == sample.area_label:
                hits += 1
        assert hits / len(data.samples) == 1.0

    def test_routing_uses_returned_area_regressor(self):
        rng = np.random.default_rng(6)
        partition = AreaGrid.regular(0, 0, 4, 4, 2, 2)
        data = synthetic_dataset(rng, partition, n_per_area=8)
        model = train_localizer(data, small_forest(seed=2))
        for sample in data.samples[::5]:
            est = localize(model, sample)
            assert est.point == predict_point(model.regressors[est.area], sample.values)

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(7)
        partition = AreaGrid.regular(0, 0, 4, 4, 1, 2)
        data = synthetic_dataset(rng, partition)
        model = train_localizer(data, small_forest())
        with pytest.raises(ValueError, match="feature length"):
            localize(model, np.zeros(3))

    def test_oracle_classifier_not_worse_on_average(self):
        rng = np.random.default_rng(8)
        partition = AreaGrid.regular(0, 0, 4, 4, 2, 2)
        train = synthetic_dataset(rng, partition, n_per_area=10, spread=0.8)
        test = synthetic_dataset(rng, partition, n_per_area=10, spread=0.8)
        model = train_localizer(train, small_forest(seed=3))

        def mean_error(use_oracle):
            errs = []
            for sample in test.samples:
                if use_oracle:
                    reg = model.regressors[sample.area_label]
                    point = predict_point(reg, sample.values)
                else:
                    point = localize(model, sample).point
                errs.append(np.hypot(point[0] - sample.position[0],
                                     point[1] - sample.position[1]))
            return float(np.mean(errs))

        assert mean_error(use_oracle=True) <= mean_error(use_oracle=False) + 1e-9


class TestSerialization:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        partition = AreaGrid.regular(0, 0, 4, 4, 2, 2)
        data = synthetic_dataset(rng, partition, n_per_area=6)
        model = train_localizer(data, small_forest(seed=4))
        path = tmp_path / "model.json"
        save_localizer(model, path)
        back = load_localizer(path)
        assert back.r == model.r and back.u == model.u
        assert back.feature_dim == model.feature_dim
        for sample in data.samples[::4]:
            a = localize(model, sample)
            b = localize(back, sample)
            assert a.area == b.area and a.point == b.point

    def test_r1_round_trip(self):
        rng = np.random.default_rng(10)
        partition = AreaGrid.regular(0, 0, 4, 4, 1, 1)
        data = synthetic_dataset(rng, partition)
        model = train_localizer(data, small_forest())
        back = localizer_from_dict(localizer_to_dict(model))
        assert back.classifier is None
        assert back.constant_label == 1
        est = localize(back, data.samples[0])
        assert est.area == 1
