import math

import numpy as np
import pytest

from beamloc.channel import (SPEED_OF_LIGHT, ChannelParams, Trajectory,
                             generate_trajectories, load_scenario, scenario_to_dict,
                             snapshot_sequence, synthesize_channel)
from beamloc.geometry import AreaGrid, CandidatePoint, RoomLayout


def one_antenna_layout():
    return RoomLayout(width=8.0, depth=8.0,
                      candidates=(CandidatePoint(1, 1.0, 1.0),),
                      sta=(6.0, 5.0),
                      areas=AreaGrid.regular(2.0, 2.0, 6.0, 6.0, 2, 2))


def quiet(**kw):
    base = dict(noise_std=0.0, reflection_order=0, n_sta_antennas=1)
    base.update(kw)
    return ChannelParams(**base)


class TestSynthesizeChannel:
    def test_pure_los_is_analytic(self):
        layout = one_antenna_layout()
        params = quiet()
        h = synthesize_channel(layout, (1,), None, params, seed=0).h
        d = math.hypot(6.0 - 1.0, 5.0 - 1.0)
        freqs = params.subcarrier_frequencies()
        expected = np.exp(-2j * np.pi * freqs * d / SPEED_OF_LIGHT) / d
        assert np.max(np.abs(h[:, 0, 0] - expected)) < 1e-12 * (1 / d)
        # phase advances linearly in frequency
        phases = np.unwrap(np.angle(h[:, 0, 0]))
        diffs = np.diff(phases)
        assert np.allclose(diffs, diffs[0], atol=1e-9)

    def test_target_on_los_attenuates(self):
        layout = one_antenna_layout()
        params = quiet(target_scatter_gain=0.0)
        base = synthesize_channel(layout, (1,), None, params, seed=0).h
        mid = (3.5, 3.0)  # on the antenna-STA segment
        blocked = synthesize_channel(layout, (1,), mid, params, seed=0).h
        assert np.allclose(np.abs(blocked), params.target_block_loss * np.abs(base))

    def test_target_never_amplifies_without_scatter(self):
        layout = one_antenna_layout()
        params = quiet(target_scatter_gain=0.0, reflection_order=1)
        base = synthesize_channel(layout, (1,), None, params, seed=0).h
        rng = np.random.default_rng(4)
        for _ in range(10):
            target = (rng.uniform(0, 8), rng.uniform(0, 8))
            got = synthesize_channel(layout, (1,), target, params, seed=0).h
            # each path term only shrinks, so the no-reflection LoS magnitude
            # bound applies path-wise; test the order-0 channel directly
            params0 = quiet(target_scatter_gain=0.0)
            base0 = synthesize_channel(layout, (1,), None, params0, seed=0).h
            got0 = synthesize_channel(layout, (1,), target, params0, seed=0).h
            assert np.all(np.abs(got0) <= np.abs(base0) + 1e-12)

    def test_target_moving_between_areas_changes_channel(self):
        layout = one_antenna_layout()
        params = ChannelParams(noise_std=0.01, reflection_order=1, n_sta_antennas=2)
        # area 1 contains part of the direct beam; area 4 is off the beam
        on_beam = (3.4, 2.9)
        off_beam = (5.0, 5.5)
        h_on = synthesize_channel(layout, (1,), on_beam, params, seed=1).h
        h_off = synthesize_channel(layout, (1,), off_beam, params, seed=1).h
        delta = np.linalg.norm(h_on - h_off)
        noise_floor = params.noise_std * math.sqrt(2 * h_on.size)
        assert delta > noise_floor

    def test_antenna_permutation_permutes_columns(self):
        layout = RoomLayout(width=8.0, depth=8.0,
                            candidates=(CandidatePoint(1, 1.0, 1.0),
                                        CandidatePoint(2, 7.0, 1.0),
                                        CandidatePoint(3, 1.0, 7.0)),
                            sta=(6.0, 5.0),
                            areas=AreaGrid.regular(2.0, 2.0, 6.0, 6.0, 2, 2))
        params = ChannelParams(noise_std=0.0)
        fwd = synthesize_channel(layout, (1, 2, 3), (4.0, 4.0), params, seed=0).h
        rev = synthesize_channel(layout, (3, 1, 2), (4.0, 4.0), params, seed=0).h
        assert np.array_equal(rev[:, :, 0], fwd[:, :, 2])
        assert np.array_equal(rev[:, :, 1], fwd[:, :, 0])
        assert np.array_equal(rev[:, :, 2], fwd[:, :, 1])

    def test_deterministic_given_seed(self):
        layout = one_antenna_layout()
        params = ChannelParams()
        a = synthesize_channel(layout, (1,), (3.0, 3.0), params, seed=99).h
        b = synthesize_channel(layout, (1,), (3.0, 3.0), params, seed=99).h
        assert np.array_equal(a, b)
        c = synthesize_channel(layout, (1,), (3.0, 3.0), params, seed=100).h
        assert not np.array_equal(a, c)

    def test_target_outside_room_rejected(self):
        layout = one_antenna_layout()
        with pytest.raises(ValueError, match="outside"):
            synthesize_channel(layout, (1,), (9.0, 1.0), ChannelParams(), seed=0)

    def test_shape_and_subcarriers(self):
        layout = one_antenna_layout()
        params = ChannelParams(subcarriers=52, n_sta_antennas=2)
        h = synthesize_channel(layout, (1,), None, params, seed=0).h
        assert h.shape == (52, 2, 1)
        freqs = params.subcarrier_frequencies()
        assert len(freqs) == 52
        assert freqs[0] == pytest.approx(5.18e9 - 10e6 + 0.5 * 20e6 / 52)
        assert freqs[-1] == pytest.approx(5.18e9 + 10e6 - 0.5 * 20e6 / 52)


class TestSnapshotSequence:
    def test_length_one_equals_single_snapshot(self):
        layout = one_antenna_layout()
        params = ChannelParams()
        seq = snapshot_sequence(layout, (1,), [(3.0, 3.0)], params, seed=5)
        single = synthesize_channel(layout, (1,), (3.0, 3.0), params, seed=5)
        assert len(seq) == 1
        assert np.array_equal(seq[0].h, single.h)

    def test_constant_trajectory_noiseless_identical(self):
        layout = one_antenna_layout()
        params = ChannelParams(noise_std=0.0)
        seq = snapshot_sequence(layout, (1,), [(3.0, 3.0)] * 4, params, seed=5)
        for snap in seq[1:]:
            assert np.array_equal(snap.h, seq[0].h)

    def test_noise_streams_differ_per_snapshot(self):
        layout = one_antenna_layout()
        params = ChannelParams()
        seq = snapshot_sequence(layout, (1,), [(3.0, 3.0)] * 3, params, seed=5)
        assert not np.array_equal(seq[0].h, seq[1].h)
        assert not np.array_equal(seq[1].h, seq[2].h)

    def test_empty_trajectory_rejected(self):
        with pytest.raises(ValueError, match="non-empty"):
            snapshot_sequence(one_antenna_layout(), (1,), [], ChannelParams(), seed=0)


class TestScenarioIO:
    def test_round_trip(self):
        params = ChannelParams(noise_std=0.005)
        traj = [Trajectory(area_label=1, points=((2.5, 2.5), (2.6, 2.4))),
                Trajectory(area_label=4, points=((4.5, 4.5),))]
        doc = scenario_to_dict(params, traj)
        params2, traj2 = load_scenario(doc)
        assert params2 == params
        assert traj2 == traj

    def test_generate_trajectories_inside_areas(self):
        layout = one_antenna_layout()
        trajs = generate_trajectories(layout, 5, seed=3)
        assert len(trajs) == 4
        rects = dict(layout.areas.rects)
        for t in trajs:
            x0, y0, x1, y1 = rects[t.area_label]
            assert len(t.points) == 5
            for x, y in t.points:
                assert x0 <= x <= x1 and y0 <= y <= y1

    def test_generate_trajectories_deterministic(self):
        layout = one_antenna_layout()
        a = generate_trajectories(layout, 3, seed=3)
        b = generate_trajectories(layout, 3, seed=3)
        assert a == b
