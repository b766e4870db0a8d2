"""One-step transition of the FX / output-growth map.

The state is ``(e, dy, e_prev)``: log exchange rate, per-step output growth
and the lagged exchange rate used by trend extrapolators.  With ``wE == 0``
the lag drops out and the map is the first-order 2D system; otherwise it is
the second-order system written in first-order form.

Every function here is pure.  The private kernels accept either a
:class:`ModelParams` or any object exposing the same attributes as numpy
arrays, which is how sweeps and basin grids evaluate many parameter sets or
initial conditions in one pass.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Any, NamedTuple

import numpy as np

WEIGHT_TOL = 1e-12

# fields that can be swept / overridden from configs
SCALAR_FIELDS = (
    "mu", "rho", "wF", "wC", "wE", "wflex", "beta", "Omega", "theta",
    "pi_elasticity", "dy_bp", "sigma",
)
STRATEGY_SHARES = ("wF", "wC", "wE")


class ParameterError(ValueError):
    """Invalid model parameters; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class ModelParams:
    """Calibration of the map.

    Defaults reproduce the baseline calibration (three equilibria, P2/P3
    stable).  ``dy_bp`` is the canonical trade-multiplier growth per step;
    ``dz_ns`` is optional and, when given, must satisfy
    ``dy_bp == dz_ns / pi_elasticity``.  ``sigma`` is the standard deviation
    of the shock to the expected fundamental.
    """

    mu: float = 4.5
    rho: float = 4.5
    wF: float = 0.9
    wC: float = 0.1
    wE: float = 0.0
    wflex: float = 0.1
    beta: float = 0.1
    Omega: float = 0.01
    theta: float = 0.3
    pi_elasticity: float = 2.0
    dy_bp: float = 0.00003
    dz_ns: float | None = None
    sigma: float = 0.02

    def __post_init__(self) -> None:
        for name in SCALAR_FIELDS:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ParameterError(name, f"expected a real number, got {value!r}")
            if not math.isfinite(value):
                raise ParameterError(name, "must be finite")
            object.__setattr__(self, name, float(value))
        if self.dz_ns is not None:
            if not math.isfinite(self.dz_ns):
                raise ParameterError("dz_ns", "must be finite")
            object.__setattr__(self, "dz_ns", float(self.dz_ns))

        for name in ("mu", "rho", "sigma"):
            if getattr(self, name) < 0:
                raise ParameterError(name, "must be >= 0")
        for name in STRATEGY_SHARES:
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ParameterError(name, "strategy share must lie in [0, 1]")
        total = self.wF + self.wC + self.wE
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ParameterError(
                "wF+wC+wE", f"strategy shares must sum to 1 (got {total!r})"
            )
        for name in ("wflex", "beta", "Omega", "theta"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ParameterError(name, "must lie in the open interval (0, 1)")
        if self.pi_elasticity <= 0:
            raise ParameterError("pi_elasticity", "must be > 0")
        if self.dz_ns is not None:
            implied = self.dz_ns / self.pi_elasticity
            if not math.isclose(implied, self.dy_bp, rel_tol=1e-9, abs_tol=1e-15):
                raise ParameterError(
                    "dz_ns",
                    f"dz_ns / pi_elasticity = {implied!r} is inconsistent "
                    f"with dy_bp = {self.dy_bp!r}",
                )

    def replace(self, **changes: Any) -> ModelParams:
        return dataclasses.replace(self, **changes)

    def with_value(self, name: str, value: float) -> ModelParams:
        """Copy with one parameter changed.

        Strategy shares stay on the simplex: moving ``wF`` or ``wE`` is
        absorbed by ``wC``; moving ``wC`` is absorbed by ``wF``.  The pseudo
        parameter ``wflex_beta`` sets the product ``wflex * beta`` by giving
        both factors the value ``sqrt(value)``.
        """
        if name == "wflex_beta":
            root = math.sqrt(value)
            return self.replace(wflex=root, beta=root)
        if name not in SCALAR_FIELDS:
            raise ParameterError(name, "unknown parameter")
        if getattr(self, name) == value:
            return self
        if name in ("wF", "wE"):
            other = "wE" if name == "wF" else "wF"
            wC = 1.0 - value - getattr(self, other)
            if abs(wC) < WEIGHT_TOL:
                wC = 0.0
            return self.replace(**{name: value, "wC": wC})
        if name == "wC":
            wF = 1.0 - value - self.wE
            if abs(wF) < WEIGHT_TOL:
                wF = 0.0
            return self.replace(wC=value, wF=wF)
        return self.replace(**{name: value})

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @property
    def is_3d(self) -> bool:
        """True when trend extrapolators make the map second order."""
        return self.wE > 0.0


class MarketState(NamedTuple):
    e: float
    dy: float
    e_prev: float

    @property
    def finite(self) -> bool:
        return math.isfinite(self.e) and math.isfinite(self.dy) and math.isfinite(self.e_prev)


def gamma(params: Any) -> Any:
    """Output sensitivity to speculative trade, (1-theta)(mu+rho)/(theta*pi)."""
    return (1.0 - params.theta) * (params.mu + params.rho) / (params.theta * params.pi_elasticity)


def trade_multiplier_growth(params: Any) -> Any:
    """Growth rate that clears the FX market when speculative trade is zero."""
    dz_ns = getattr(params, "dz_ns", None)
    if dz_ns is None:
        return params.dy_bp
    return dz_ns / params.pi_elasticity


def expected_fundamental(dy_prev: Any, eps: Any, params: Any) -> Any:
    """Expected fundamental rate; the PPP anchor is zero."""
    return -params.Omega * dy_prev + eps


def _trade(e: Any, dy: Any, e_prev: Any, eps: Any, params: Any) -> Any:
    gap = expected_fundamental(dy, eps, params) - e
    return params.wF * gap * gap * gap - params.wC * gap + params.wE * (e - e_prev)


def _clearing(trade: Any, params: Any) -> Any:
    return trade_multiplier_growth(params) - gamma(params) * trade


def _advance(e: Any, dy: Any, e_prev: Any, eps: Any, params: Any) -> tuple[Any, Any, Any]:
    trade = _trade(e, dy, e_prev, eps, params)
    e_next = e + (params.mu + params.rho) * trade
    dy_next = dy + params.wflex * params.beta * (_clearing(trade, params) - dy)
    return e_next, dy_next, e


def speculative_trade(state: MarketState, eps: float, params: ModelParams) -> float:
    """Net speculative demand for foreign currency in the current step.

    Fundamentalists trade on the cubed gap to the expected fundamental,
    chartists on the linear gap with the opposite sign, extrapolators on the
    last change of the exchange rate.
    """
    return _trade(state.e, state.dy, state.e_prev, eps, params)


def market_clearing_growth(state: MarketState, eps: float, params: ModelParams) -> float:
    """Output growth that clears the FX market given this step's speculative trade."""
    return _clearing(speculative_trade(state, eps, params), params)


def step(state: MarketState, eps: float, params: ModelParams) -> MarketState:
    """Advance one day.

    The same shock ``eps`` enters both equations because both depend on the
    one expected fundamental.  Overflow is not an error: the returned state
    is then non-finite (``state.finite`` is False) and callers record it as
    a divergence.
    """
    return MarketState(*_advance(state.e, state.dy, state.e_prev, eps, params))


def stack_params(params_list: list[ModelParams]) -> Any:
    """Column view of many parameter sets for the vectorised kernels.

    ``dy_bp`` holds each set's clearing base so that the kernels reproduce the
    scalar path bit for bit whether or not ``dz_ns`` was configured.
    """
    from types import SimpleNamespace

    cols = {name: np.array([getattr(p, name) for p in params_list]) for name in SCALAR_FIELDS}
    cols["dy_bp"] = np.array([trade_multiplier_growth(p) for p in params_list])
    cols["dz_ns"] = None
    return SimpleNamespace(**cols)
