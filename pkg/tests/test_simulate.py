import math
import warnings

import numpy as np
import pytest

from fxgrowth.core import MarketState, ModelParams
from fxgrowth.equilibria import equilibria
from fxgrowth.simulate import (
    aggregate,
    read_trajectory_csv,
    simulate,
    simulate_batch,
    spawn_seeds,
    write_manifest,
    write_trajectory_csv,
)
from fxgrowth.stats import anderson_darling


def p2(params):
    return next(eq for eq in equilibria(params) if eq.label == "P2").point


def test_fixed_point_gives_constant_series():
    p = ModelParams(sigma=0.0)
    traj = simulate(p, p2(p), 500)
    assert traj.diverged_at is None and len(traj) == 500
    assert np.ptp(traj.e) < 1e-12 and np.ptp(traj.dy) < 1e-15


def test_seeded_replay_is_bitwise():
    p = ModelParams(mu=3.5, sigma=0.02)
    a = simulate(p, p2(p), 3000, seed=42)
    b = simulate(p, p2(p), 3000, seed=42)
    assert a.e.tobytes() == b.e.tobytes() and a.eps.tobytes() == b.eps.tobytes()
    c = simulate(p, p2(p), 3000, seed=43)
    assert not np.array_equal(a.e, c.e)


def test_zero_sigma_equals_deterministic_skeleton():
    p = ModelParams(mu=3.5, sigma=0.0)
    init = (p2(p)[0] + 0.01, p2(p)[1])
    a = simulate(p, init, 2000, seed=7)
    b = simulate(p, init, 2000, seed=None)
    assert not a.eps.any() and not b.eps.any()
    assert a.e.tobytes() == b.e.tobytes() and a.dy.tobytes() == b.dy.tobytes()


def test_no_seed_means_no_shocks():
    traj = simulate(ModelParams(sigma=0.05), (0.3, 3e-5), 100)
    assert not traj.eps.any()


def test_shock_distribution():
    traj = simulate(ModelParams(mu=3.5, sigma=0.02), p2(ModelParams()), 20000, seed=1)
    assert traj.eps.std() == pytest.approx(0.02, rel=0.03)
    assert abs(traj.eps.mean()) < 0.001


def test_burn_in_removes_initial_condition():
    p = ModelParams(sigma=0.0)
    e_bar = p2(p)[0]
    for offset in (-0.02, 0.005, 0.03):
        traj = simulate(p, (e_bar + offset, p.dy_bp), 4000)
        assert abs(traj.e[2000:].mean() - e_bar) < 1e-9


def test_divergence_is_recorded_and_truncated():
    p = ModelParams(mu=14.99, sigma=0.0)
    traj = simulate(p, (2.0, 0.0), 100)
    assert traj.diverged and traj.diverged_at == len(traj)
    assert np.all(np.abs(traj.e) <= 1e6)
    assert len(traj.eps) == len(traj.e) == len(traj.dy)

    at_start = simulate(p, (1e9, 0.0), 10)
    assert at_start.diverged_at == 0 and len(at_start) == 0


def test_horizon_must_be_positive():
    with pytest.raises(ValueError):
        simulate(ModelParams(), (0.0, 0.0), 0)


def test_pre_flip_stochastic_run():
    p = ModelParams(mu=3.5, sigma=0.02)
    traj = simulate(p, p2(p), 2000 + 3650, seed=20240601)
    assert not traj.diverged
    agg = aggregate(traj, burn_in=2000)
    assert anderson_darling(agg.fx_returns).reject5


class TestAggregate:
    def make(self, e, dy, init_e=None):
        e = np.asarray(e, float)
        from fxgrowth.simulate import Trajectory

        init = MarketState(e[0] if init_e is None else init_e, 0.0, 0.0)
        return Trajectory(ModelParams(), init, None, len(e), e, np.asarray(dy, float), np.zeros(len(e)))

    def test_constant_rate_has_zero_returns(self):
        agg = aggregate(self.make(np.full(400, 0.2), np.zeros(400)))
        assert not agg.fx_returns.any()

    def test_single_step_return(self):
        agg = aggregate(self.make([0.01], [0.0], init_e=0.0), year_length=1)
        assert agg.fx_returns[0] == pytest.approx(0.010050167084168, rel=1e-12)

    def test_annual_growth_sum(self):
        agg = aggregate(self.make(np.zeros(365 * 3 + 10), np.full(365 * 3 + 10, 0.00003)))
        assert agg.annual_growth.shape == (3,)
        assert np.allclose(agg.annual_growth, 0.01095, rtol=1e-12)

    def test_alternative_year_length(self):
        agg = aggregate(self.make(np.zeros(500), np.full(500, 0.00003)), year_length=250)
        assert np.allclose(agg.annual_growth, 0.0075, rtol=1e-12)

    def test_short_run_warns(self):
        with pytest.warns(RuntimeWarning):
            agg = aggregate(self.make(np.zeros(100), np.zeros(100)))
        assert agg.annual_growth.size == 0 and agg.notes

    def test_equilibrium_growth(self):
        p = ModelParams(sigma=0.0)
        for eq in equilibria(p):
            traj = simulate(p, eq.point, 365 * 4)
            agg = aggregate(traj)
            assert np.allclose(agg.annual_growth, 365 * p.dy_bp, rtol=1e-12)


class TestBatches:
    def test_spawned_seeds_are_stable_and_distinct(self):
        a = spawn_seeds(2024, 5)
        assert a == spawn_seeds(2024, 5)
        assert len(set(a)) == 5
        assert spawn_seeds(2024, 6)[:5] == a

    def test_worker_count_invariance(self):
        p = ModelParams(mu=3.5, sigma=0.02)
        one = simulate_batch(p, p2(p), 800, 99, 3, workers=1)
        two = simulate_batch(p, p2(p), 800, 99, 3, workers=2)
        for a, b in zip(one, two):
            assert a.seed == b.seed and a.e.tobytes() == b.e.tobytes()


def test_csv_and_manifest(tmp_path):
    p = ModelParams(mu=3.5, sigma=0.02)
    traj = simulate(p, p2(p), 50, seed=5)
    path = tmp_path / "t.csv"
    write_trajectory_csv(traj, path)
    back = read_trajectory_csv(path)
    assert list(back) == ["t", "e", "dy", "eps"]
    assert np.array_equal(back["e"], traj.e) and np.array_equal(back["eps"], traj.eps)
    write_manifest(traj, tmp_path / "m.json", {"note": "x"})
    import json

    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["seed"] == 5 and doc["horizon"] == 50 and doc["note"] == "x"
    rerun = simulate(ModelParams(**doc["params"]), doc["init"], doc["horizon"], doc["seed"])
    assert rerun.e.tobytes() == traj.e.tobytes()
