import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fxgrowth.core import (
    MarketState,
    ModelParams,
    ParameterError,
    expected_fundamental,
    gamma,
    market_clearing_growth,
    speculative_trade,
    stack_params,
    step,
    _advance,
)
from fxgrowth.equilibria import equilibria


def pure_fundamentalists(**kw):
    base = dict(wF=1.0, wC=0.0, wE=0.0)
    base.update(kw)
    return ModelParams(**base)


@st.composite
def valid_params(draw, with_extrapolators=True):
    wF = draw(st.floats(0.05, 1.0))
    wE = draw(st.floats(0.0, 1.0 - wF)) if with_extrapolators else 0.0
    wC = max(0.0, 1.0 - wF - wE)
    return ModelParams(
        mu=draw(st.floats(0.0, 15.0)),
        rho=draw(st.floats(0.0, 10.0)),
        wF=wF,
        wC=wC,
        wE=wE,
        wflex=draw(st.floats(0.01, 0.99)),
        beta=draw(st.floats(0.01, 0.99)),
        Omega=draw(st.floats(0.001, 0.99)),
        theta=draw(st.floats(0.05, 0.95)),
        pi_elasticity=draw(st.floats(0.1, 5.0)),
        dy_bp=draw(st.floats(-0.001, 0.001)),
    )


states = st.tuples(st.floats(-2, 2), st.floats(-0.5, 0.5), st.floats(-2, 2)).map(lambda t: MarketState(*t))


class TestParams:
    def test_defaults_are_valid_baseline(self):
        p = ModelParams()
        assert (p.wF, p.wC, p.wE) == (0.9, 0.1, 0.0)
        assert not p.is_3d

    @pytest.mark.parametrize(
        "kw, field",
        [
            (dict(wF=0.9, wC=0.1, wE=0.1), "wF+wC+wE"),
            (dict(mu=-1.0), "mu"),
            (dict(rho=-0.1), "rho"),
            (dict(sigma=-0.1), "sigma"),
            (dict(wflex=1.0), "wflex"),
            (dict(beta=0.0), "beta"),
            (dict(Omega=1.0), "Omega"),
            (dict(theta=0.0), "theta"),
            (dict(pi_elasticity=0.0), "pi_elasticity"),
            (dict(mu=math.nan), "mu"),
            (dict(mu="4"), "mu"),
            (dict(wF=1.2, wC=-0.2), "wF"),
        ],
    )
    def test_invalid_fields_are_named(self, kw, field):
        with pytest.raises(ParameterError) as info:
            ModelParams(**kw)
        assert info.value.field == field

    def test_share_sum_tolerance(self):
        ModelParams(wF=0.9, wC=0.1 + 5e-13)
        with pytest.raises(ParameterError):
            ModelParams(wF=0.9, wC=0.1 + 5e-12)

    def test_dz_ns_consistency(self):
        ModelParams(dz_ns=0.00006, dy_bp=0.00003, pi_elasticity=2.0)
        with pytest.raises(ParameterError) as info:
            ModelParams(dz_ns=0.00003, dy_bp=0.00003, pi_elasticity=2.0)
        assert info.value.field == "dz_ns"

    def test_with_value_keeps_simplex(self):
        p = ModelParams().with_value("wF", 0.8)
        assert p.wC == pytest.approx(0.2)
        p = ModelParams(wF=0.8, wC=0.2).with_value("wE", 0.05)
        assert (p.wF, p.wE) == (0.8, 0.05) and p.wC == pytest.approx(0.15)
        p = ModelParams().with_value("wC", 0.3)
        assert p.wF == pytest.approx(0.7)
        p = ModelParams().with_value("wflex_beta", 0.04)
        assert p.wflex * p.beta == pytest.approx(0.04)
        with pytest.raises(ParameterError):
            ModelParams().with_value("nope", 1.0)


class TestGamma:
    def test_baseline(self):
        assert gamma(ModelParams(theta=0.3, pi_elasticity=2, mu=4.5, rho=4.5)) == pytest.approx(10.5, rel=1e-15)

    def test_symmetric_theta(self):
        assert gamma(ModelParams(theta=0.5, pi_elasticity=1, mu=0.5, rho=0.5)) == pytest.approx(1.0, rel=1e-15)

    def test_no_reaction(self):
        assert gamma(ModelParams(mu=0.0, rho=0.0)) == 0.0


class TestExpectedFundamental:
    def test_examples(self):
        p = ModelParams(Omega=0.01)
        assert expected_fundamental(0.0, 0.0, p) == 0.0
        assert expected_fundamental(0.00003, 0.0, p) == pytest.approx(-3.0e-7, rel=1e-14)
        assert expected_fundamental(0.0, 0.005, p) == 0.005


class TestSpeculativeTrade:
    def test_no_trade_when_expectations_met(self):
        p = ModelParams(wF=0.6, wC=0.2, wE=0.2)
        ef = expected_fundamental(0.001, 0.0, p)
        assert speculative_trade(MarketState(ef, 0.001, ef), 0.0, p) == 0.0

    def test_cubic_hand_value(self):
        p = pure_fundamentalists()
        assert speculative_trade(MarketState(0.1, 0.0, 0.1), 0.0, p) == pytest.approx(-0.001, rel=1e-14)

    def test_cancels_at_outer_offset(self):
        p = ModelParams(wF=0.9, wC=0.1)
        ef = expected_fundamental(p.dy_bp, 0.0, p)
        e = ef + math.sqrt(1 / 9)
        assert abs(speculative_trade(MarketState(e, p.dy_bp, e), 0.0, p)) < 1e-16

    @given(u=st.floats(-3, 3), dy=st.floats(-0.1, 0.1), p=valid_params(with_extrapolators=False))
    def test_odd_in_gap(self, u, dy, p):
        ef = expected_fundamental(dy, 0.0, p)
        plus = speculative_trade(MarketState(ef + u, dy, 0.0), 0.0, p)
        minus = speculative_trade(MarketState(ef - u, dy, 0.0), 0.0, p)
        assert plus == pytest.approx(-minus, rel=1e-12, abs=1e-15)


class TestStep:
    def test_hand_arithmetic(self):
        p = pure_fundamentalists(mu=4.5, rho=4.5, Omega=0.01, wflex=0.1, beta=0.1, dy_bp=0.00003)
        nxt = step(MarketState(0.1, 0.0, 0.1), 0.0, p)
        assert nxt.e == pytest.approx(0.091, rel=1e-14)
        assert nxt.dy == pytest.approx(1.053e-4, rel=1e-12)
        assert nxt.e_prev == 0.1

    def test_fixed_points(self):
        for p in (ModelParams(), ModelParams(mu=4, wF=0.85, wC=0.05, wE=0.1)):
            for eq in equilibria(p):
                s = MarketState(eq.e_bar, eq.dy_bar, eq.e_bar)
                assert max(abs(a - b) for a, b in zip(step(s, 0.0, p), s)) < 1e-12

    def test_overflow_is_not_raised(self):
        nxt = step(MarketState(1e200, 0.0, 0.0), 0.0, ModelParams())
        assert not nxt.finite

    @given(s=states, eps=st.floats(-0.05, 0.05), p=valid_params())
    def test_growth_update_uses_clearing_rate(self, s, eps, p):
        nxt = step(s, eps, p)
        lhs = nxt.dy - s.dy
        rhs = p.wflex * p.beta * (market_clearing_growth(s, eps, p) - s.dy)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-14)

    @given(s=states, lag=st.floats(-2, 2), p=valid_params(with_extrapolators=False))
    def test_lag_irrelevant_without_extrapolators(self, s, lag, p):
        a = step(s, 0.0, p)
        b = step(s._replace(e_prev=lag), 0.0, p)
        assert a.e == b.e and a.dy == b.dy

    def test_vector_kernel_matches_scalar_bitwise(self):
        rng = np.random.default_rng(3)
        plist = [ModelParams(mu=m) for m in rng.uniform(0, 15, 50)]
        plist[3] = ModelParams(dz_ns=0.00006, dy_bp=0.00003)
        e, dy, lag = rng.uniform(-1, 1, 50), rng.uniform(-0.01, 0.01, 50), rng.uniform(-1, 1, 50)
        ve, vdy, _ = _advance(e, dy, lag, 0.0, stack_params(plist))
        for i, p in enumerate(plist):
            s = step(MarketState(e[i], dy[i], lag[i]), 0.0, p)
            assert (s.e, s.dy) == (ve[i], vdy[i])


class TestMarketClearing:
    def test_no_trade_gives_trade_multiplier(self):
        p = ModelParams(wF=0.6, wC=0.2, wE=0.2)
        ef = expected_fundamental(0.0, 0.0, p)
        assert market_clearing_growth(MarketState(ef, 0.0, ef), 0.0, p) == p.dy_bp

    def test_uses_dz_ns_when_given(self):
        p = ModelParams(dz_ns=0.00006, dy_bp=0.00003, pi_elasticity=2.0)
        ef = expected_fundamental(0.0, 0.0, p)
        assert market_clearing_growth(MarketState(ef, 0.0, ef), 0.0, p) == pytest.approx(0.00003, rel=1e-15)

    def test_hand_value(self):
        # (1 - theta)/theta = 7/3, mu + rho = 9, pi = 2, S = -0.001
        p = pure_fundamentalists()
        val = market_clearing_growth(MarketState(0.1, 0.0, 0.1), 0.0, p)
        assert val == pytest.approx(0.00003 + 0.0105, rel=1e-12)

    def test_no_speculative_channel(self):
        p = ModelParams(mu=0.0, rho=0.0)
        assert market_clearing_growth(MarketState(0.7, 0.01, -0.2), 0.03, p) == p.dy_bp
