import csv
import json
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fxgrowth.estimator import (
    EstimationError,
    MacroDataset,
    hp_filter,
    hp_operator,
    kalman_tvp,
    noiseless_dataset,
    regressors,
    synthetic_dataset,
    trade_multiplier,
    tvp_regression,
    _kalman,
    _smooth,
)


def random_walk_design(seed, n=64, sd_state=0.05, sd_meas=0.1):
    rng = np.random.default_rng(seed)
    x1 = rng.standard_normal(n)
    x2 = 10 + 3 * rng.standard_normal(n)
    pi = 2 + np.cumsum(sd_state * rng.standard_normal(n))
    obs = 1.2 * x1 + pi * x2 + sd_meas * rng.standard_normal(n)
    return obs, np.column_stack([x1, x2]), pi


class TestHP:
    def test_linear_series_is_its_own_trend(self):
        x = 1.5 + 0.3 * np.arange(40)
        res = hp_filter(x)
        assert np.max(np.abs(res.trend - x)) < 1e-9
        assert np.max(np.abs(hp_filter(res.trend).trend - res.trend)) < 1e-9

    def test_no_smoothing(self):
        x = np.random.default_rng(0).standard_normal(12)
        assert np.array_equal(hp_filter(x, 0.0).trend, x)

    @given(st.integers(4, 80), st.floats(0.1, 1e5), st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_banded_solver_matches_dense_system(self, n, lam, seed):
        x = np.random.default_rng(seed).standard_normal(n).cumsum()
        res = hp_filter(x, lam)
        A = hp_operator(n, lam)
        scale = 1 + np.max(np.abs(x))
        assert np.max(np.abs(A @ res.trend - x)) < 1e-10 * scale * (1 + lam) ** 0.5
        assert np.allclose(res.trend, np.linalg.solve(A, x), rtol=0, atol=1e-9 * scale)
        assert np.allclose(res.trend + res.cycle, x, rtol=0, atol=1e-12 * scale)

    def test_too_short(self):
        with pytest.raises(ValueError):
            hp_filter([1.0, 2.0, 3.0])


class TestTvpRegression:
    def test_noiseless_fixture(self):
        est = kalman_tvp(noiseless_dataset())
        assert np.max(np.abs(est.pi_t - 2.0)) < 1e-6
        assert est.eta == pytest.approx(1.2, abs=1e-6)

    def test_frozen_state_is_least_squares(self):
        obs, X, _ = random_walk_design(1)
        fit = tvp_regression(obs, X, {"measurement": 0.01, "state": 0.0})
        beta, *_ = np.linalg.lstsq(X, obs, rcond=None)
        assert np.ptp(fit.pi_t) < 1e-10
        # the diffuse prior pulls the estimate by O(1 / 1e6)
        assert fit.pi_t[0] == pytest.approx(beta[1], abs=1e-6)
        assert fit.eta == pytest.approx(beta[0], abs=1e-6)

    @pytest.mark.parametrize("seed", range(5))
    def test_error_within_reported_uncertainty(self, seed):
        obs, X, pi = random_walk_design(seed)
        fit = tvp_regression(obs, X, {"measurement": 0.01, "state": 0.0025})
        rmse = np.sqrt(np.mean((fit.pi_t - pi) ** 2))
        assert rmse < 2 * np.sqrt(np.mean(fit.pi_se**2))

    def test_estimated_variances_recover_path(self):
        obs, X, pi = random_walk_design(7)
        fit = tvp_regression(obs, X)
        assert np.sqrt(np.mean((fit.pi_t - pi) ** 2)) < 0.05

    def test_filter_and_smoother_agree_at_the_end(self):
        obs, X, _ = random_walk_design(2)
        run = _kalman(obs, X, 0.25, None)
        a_s, P_s = _smooth(run)
        assert np.array_equal(a_s[-1], run.a_filt[-1])
        assert np.array_equal(P_s[-1], run.P_filt[-1])
        fit = tvp_regression(obs, X)
        assert fit.pi_t[-1] == fit.pi_filtered[-1]

    def test_search_trace(self):
        obs, X, _ = random_walk_design(3)
        fit = tvp_regression(obs, X)
        assert np.all(np.diff(fit.best_trace) >= 0)
        assert fit.loglik == pytest.approx(max(ll for _, ll in fit.search), abs=1e-9)

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            tvp_regression(np.zeros(5), np.zeros((5, 3)))
        with pytest.raises(EstimationError):
            tvp_regression(np.zeros(5), np.ones((5, 2)), {"measurement": 0.0, "state": 1.0})


class TestTradeMultiplier:
    def test_constant_case(self):
        z = 3.0 + 0.04 * np.arange(30)
        out, flags = trade_multiplier(z, np.full(30, 2.0))
        assert np.isnan(out[0]) and not flags.any()
        assert np.allclose(out[1:], 0.02, rtol=0, atol=1e-10)

    def test_unit_elasticity(self):
        z = np.cumsum(np.random.default_rng(4).uniform(0.0, 0.1, 20))
        out, _ = trade_multiplier(z, np.ones(20))
        assert np.allclose(out[1:], np.diff(hp_filter(z).trend), rtol=0, atol=1e-15)

    def test_nonpositive_elasticity_is_flagged(self):
        pi = np.full(10, 2.0)
        pi[[3, 6]] = [0.0, -1.0]
        out, flags = trade_multiplier(np.arange(10.0), pi)
        assert list(np.flatnonzero(flags)) == [3, 6]
        assert np.isnan(out[3]) and np.isnan(out[6]) and np.isfinite(out[4])

    def test_alignment(self):
        with pytest.raises(ValueError):
            trade_multiplier(np.arange(10.0), np.ones(9))


class TestSyntheticRecovery:
    @pytest.mark.parametrize("seed", range(4))
    def test_growth_fluctuates_around_multiplier(self, seed):
        data, truth = synthetic_dataset(seed=seed)
        gap = np.diff(data.y) - truth.dy_bp_t[1:]
        assert abs(gap.mean()) < 0.005

    @pytest.mark.parametrize("seed", range(4))
    def test_elasticity_and_multiplier_recovered(self, seed):
        data, truth = synthetic_dataset(seed=seed)
        assert truth.pi_t.min() >= 1.5 and truth.pi_t.max() <= 2.5
        est = kalman_tvp(data)
        assert np.sqrt(np.mean((est.pi_t - truth.pi_t) ** 2)) < 0.15
        ok = np.isfinite(truth.dy_bp_t)
        assert np.corrcoef(est.dy_bp_t[ok], truth.dy_bp_t[ok])[0, 1] > 0.9

    def test_seeded(self):
        a, _ = synthetic_dataset(seed=9)
        b, _ = synthetic_dataset(seed=9)
        assert a.m.tobytes() == b.m.tobytes()

    def test_packaged_fixture(self):
        path = resources.files("fxgrowth").joinpath("data", "synthetic_country.csv")
        data = MacroDataset.read_csv(path)
        assert len(data) == 64
        assert np.all(np.isfinite(kalman_tvp(data).pi_t))


class TestDataset:
    def test_ill_conditioned_regressors(self):
        d = noiseless_dataset()
        d.rer = hp_filter(d.y).trend * 0.5
        with pytest.raises(EstimationError, match="ill-conditioned"):
            regressors(d)
        d.rer = np.zeros(len(d))
        with pytest.raises(EstimationError):
            kalman_tvp(d)

    def test_csv_round_trip(self, tmp_path):
        data, _ = synthetic_dataset(seed=1)
        data.write_csv(tmp_path / "c.csv")
        back = MacroDataset.read_csv(tmp_path / "c.csv")
        for col in ("year", "y", "m", "z", "rer"):
            assert np.array_equal(getattr(back, col), getattr(data, col))

    def test_header_checked(self, tmp_path):
        (tmp_path / "bad.csv").write_text("year,y,m,z\n2000,1,2,3\n")
        with pytest.raises(ValueError, match="header"):
            MacroDataset.read_csv(tmp_path / "bad.csv")

    def test_years_checked(self):
        with pytest.raises(ValueError):
            MacroDataset([2000, 2001, 2003, 2004], *np.zeros((4, 4)))
        with pytest.raises(ValueError):
            MacroDataset([2000, 2001, 2002], *np.zeros((4, 3)))

    def test_estimate_outputs(self, tmp_path):
        est = kalman_tvp(noiseless_dataset())
        est.write_csv(tmp_path / "e.csv")
        est.write_report(tmp_path / "e.json")
        rows = list(csv.reader(open(tmp_path / "e.csv")))
        assert rows[0] == ["year", "pi_t", "se", "dy_bp_t", "pi_nonpositive"]
        assert rows[1][3] == "" and len(rows) == 65
        assert json.loads((tmp_path / "e.json").read_text())["pi_nonpositive_years"] == []
