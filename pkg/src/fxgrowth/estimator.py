"""Time-varying income elasticity of imports and the implied trade multiplier.

Pipeline for one country:

1. HP-filter log GDP and log imports (lambda = 1600) to get ``y^T``, ``m^T``.
2. Estimate ``m^T_t = eta * rer_t + pi_t * y^T_t + e_t`` with ``pi_t`` a
   random walk and ``eta`` a constant, both carried in a two-element state
   and run through a Kalman filter and RTS smoother.
3. ``dy_bp_t = dz^T_t / pi_t`` with ``dz^T`` the first difference of the
   HP trend of log exports.

Noise variances are estimated by maximum likelihood.  The likelihood is
concentrated in the measurement variance, so only the ratio
``q = state variance / measurement variance`` is searched: a grid over
``log10 q`` in [-8, 2] followed by a bounded Brent refinement around the
best grid point.  The state starts at zero with covariance ``1e6`` times the
identity (in units of the measurement variance) and the first two
observations, which only resolve that diffuse start, are left out of the
likelihood.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import solveh_banded
from scipy.optimize import minimize_scalar

HP_LAMBDA = 1600.0
DIFFUSE_VARIANCE = 1e6
DIFFUSE_STEPS = 2
LOG10_RATIO_BOUNDS = (-8.0, 2.0)
GRID_POINTS = 41
CONDITION_LIMIT = 1e8
COLUMNS = ("year", "y", "m", "z", "rer")


class EstimationError(RuntimeError):
    """The estimation problem is ill-posed for the given data."""


@dataclass
class MacroDataset:
    """Annual series in natural logs: GDP ``y``, imports ``m``, exports ``z``, real exchange rate ``rer``."""

    year: np.ndarray
    y: np.ndarray
    m: np.ndarray
    z: np.ndarray
    rer: np.ndarray
    name: str = ""

    def __post_init__(self) -> None:
        self.year = np.asarray(self.year, dtype=int)
        n = self.year.size
        for col in COLUMNS[1:]:
            arr = np.asarray(getattr(self, col), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{col}: expected {n} values, got shape {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{col}: non-finite values")
            setattr(self, col, arr)
        if n < 4:
            raise ValueError("need at least 4 years")
        steps = np.diff(self.year)
        if np.any(steps <= 0):
            raise ValueError("years must be strictly increasing")
        if np.any(steps != 1):
            raise ValueError("years must have no gaps")

    def __len__(self) -> int:
        return self.year.size

    @classmethod
    def read_csv(cls, path: str | Path) -> MacroDataset:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or set(reader.fieldnames) != set(COLUMNS):
                raise ValueError(f"expected header {','.join(COLUMNS)}, got {reader.fieldnames}")
            rows = list(reader)
        cols = {c: [row[c] for row in rows] for c in COLUMNS}
        return cls(
            year=[int(v) for v in cols["year"]],
            **{c: [float(v) for v in cols[c]] for c in COLUMNS[1:]},
            name=Path(path).stem,
        )

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(COLUMNS)
            for i in range(len(self)):
                out.writerow([int(self.year[i])] + [repr(float(getattr(self, c)[i])) for c in COLUMNS[1:]])


@dataclass
class HPResult:
    trend: np.ndarray
    cycle: np.ndarray


def _second_difference_gram(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Diagonals 0, 1, 2 of ``D'D`` for the (n-2) x n second-difference matrix ``D``."""
    c = np.array([1.0, -2.0, 1.0])
    d0, d1, d2 = np.zeros(n), np.zeros(n - 1), np.zeros(n - 2)
    for r in range(n - 2):
        for a in range(3):
            d0[r + a] += c[a] * c[a]
            if a < 2:
                d1[r + a] += c[a] * c[a + 1]
        d2[r] += c[0] * c[2]
    return d0, d1, d2


def hp_operator(n: int, lam: float) -> np.ndarray:
    """Dense ``I + lam D'D``; the HP trend solves ``hp_operator(n, lam) @ trend = series``."""
    d0, d1, d2 = _second_difference_gram(n)
    return np.eye(n) + lam * (np.diag(d0) + np.diag(d1, 1) + np.diag(d1, -1) + np.diag(d2, 2) + np.diag(d2, -2))


def hp_filter(series: Sequence[float], lam: float = HP_LAMBDA) -> HPResult:
    """Hodrick-Prescott trend and cycle.

    The trend minimises ``sum (y - tau)**2 + lam * sum (second diff of tau)**2``;
    its normal equations ``(I + lam D'D) tau = y`` are pentadiagonal and are
    solved as a symmetric banded system.
    """
    y = np.asarray(series, dtype=float)
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if lam == 0:
        return HPResult(y.copy(), np.zeros_like(y))
    n = y.size
    if n < 4:
        raise ValueError("HP filter needs at least 4 observations")
    d0, d1, d2 = _second_difference_gram(n)
    ab = np.zeros((3, n))
    ab[0, 2:] = lam * d2
    ab[1, 1:] = lam * d1
    ab[2] = 1.0 + lam * d0
    trend = solveh_banded(ab, y)
    return HPResult(trend, y - trend)


@dataclass
class FilterRun:
    a_pred: np.ndarray
    P_pred: np.ndarray
    a_filt: np.ndarray
    P_filt: np.ndarray
    v: np.ndarray
    F: np.ndarray
    loglik: float
    scale: float


def _kalman(obs: np.ndarray, X: np.ndarray, ratio: float, scale: float | None) -> FilterRun:
    """Filter in units of the measurement variance.

    With ``scale=None`` the measurement variance is concentrated out of the
    likelihood; otherwise it is fixed to ``scale``.
    """
    n = obs.size
    Q = np.diag([0.0, ratio])
    a = np.zeros(2)
    P = DIFFUSE_VARIANCE * np.eye(2)
    a_pred = np.empty((n, 2))
    P_pred = np.empty((n, 2, 2))
    a_filt = np.empty((n, 2))
    P_filt = np.empty((n, 2, 2))
    v = np.empty(n)
    F = np.empty(n)
    for t in range(n):
        a_pred[t], P_pred[t] = a, P
        z = X[t]
        v[t] = obs[t] - z @ a
        Pz = P @ z
        F[t] = z @ Pz + 1.0
        K = Pz / F[t]
        a = a + K * v[t]
        P = P - np.outer(K, Pz)
        P = 0.5 * (P + P.T)
        a_filt[t], P_filt[t] = a, P
        P = P + Q

    used = slice(DIFFUSE_STEPS, None)
    m = n - DIFFUSE_STEPS
    ssq = float(np.sum(v[used] ** 2 / F[used]))
    if scale is None:
        scale = max(ssq / m, np.finfo(float).tiny)
        loglik = -0.5 * (m * (math.log(2 * math.pi) + math.log(scale) + 1.0) + float(np.sum(np.log(F[used]))))
    else:
        loglik = -0.5 * (
            m * (math.log(2 * math.pi) + math.log(scale)) + float(np.sum(np.log(F[used]))) + ssq / scale
        )
    return FilterRun(a_pred, P_pred, a_filt, P_filt, v, F, loglik, scale)


def _smooth(run: FilterRun) -> tuple[np.ndarray, np.ndarray]:
    """Rauch-Tung-Striebel smoother over a :class:`FilterRun`."""
    n = run.a_filt.shape[0]
    a_s = run.a_filt.copy()
    P_s = run.P_filt.copy()
    for t in range(n - 2, -1, -1):
        P_next = run.P_pred[t + 1]
        J = np.linalg.solve(P_next.T, run.P_filt[t].T).T
        a_s[t] = run.a_filt[t] + J @ (a_s[t + 1] - run.a_pred[t + 1])
        P_s[t] = run.P_filt[t] + J @ (P_s[t + 1] - P_next) @ J.T
    return a_s, P_s


@dataclass
class TvpEstimate:
    year: np.ndarray
    eta: float
    eta_se: float
    pi_t: np.ndarray
    pi_se: np.ndarray
    pi_filtered: np.ndarray
    measurement_var: float
    state_var: float
    loglik: float
    dy_bp_t: np.ndarray
    pi_nonpositive: np.ndarray
    search: list[tuple[float, float]] = field(default_factory=list)
    best_trace: list[float] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)

    def report(self) -> dict:
        return {
            "eta": self.eta,
            "eta_se": self.eta_se,
            "measurement_var": self.measurement_var,
            "state_var": self.state_var,
            "loglik": self.loglik,
            "pi_nonpositive_years": [int(y) for y in self.year[self.pi_nonpositive]],
            "diagnostics": list(self.diagnostics),
            "search": [{"log10_ratio": a, "loglik": b} for a, b in self.search],
        }

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["year", "pi_t", "se", "dy_bp_t", "pi_nonpositive"])
            for i in range(self.year.size):
                out.writerow([
                    int(self.year[i]),
                    repr(float(self.pi_t[i])),
                    repr(float(self.pi_se[i])),
                    "" if math.isnan(self.dy_bp_t[i]) else repr(float(self.dy_bp_t[i])),
                    int(self.pi_nonpositive[i]),
                ])

    def write_report(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.report(), indent=2, sort_keys=True) + "\n")


def regressors(data: MacroDataset, lam: float = HP_LAMBDA) -> tuple[np.ndarray, np.ndarray]:
    """``(m^T, X)`` with ``X = [rer, y^T]``; raises EstimationError if X is near-singular."""
    m_trend = hp_filter(data.m, lam).trend
    X = np.column_stack([data.rer, hp_filter(data.y, lam).trend])
    norms = np.linalg.norm(X, axis=0)
    if np.any(norms == 0.0):
        raise EstimationError("a regressor is identically zero")
    cond = np.linalg.cond(X / norms)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise EstimationError(f"regressors [rer, y^T] are ill-conditioned (condition number {cond:.3g})")
    return m_trend, X


def _search_ratio(obs: np.ndarray, X: np.ndarray) -> tuple[float, list, list, list[str]]:
    lo, hi = LOG10_RATIO_BOUNDS
    trace: list[tuple[float, float]] = []
    best: list[float] = []

    def loglik(log10_ratio: float) -> float:
        ll = _kalman(obs, X, 10.0**log10_ratio, None).loglik
        trace.append((float(log10_ratio), ll))
        best.append(ll if not best else max(best[-1], ll))
        return ll

    grid = np.linspace(lo, hi, GRID_POINTS)
    values = [loglik(g) for g in grid]
    k = int(np.argmax(values))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    notes = []
    res = minimize_scalar(lambda g: -loglik(g), bounds=(a, b), method="bounded", options={"xatol": 1e-6})
    if not res.success:
        notes.append(f"variance-ratio search did not converge ({res.message}); best value kept")
    best_x, best_ll = max(trace, key=lambda item: item[1])
    if best_x - lo < 0.25 or hi - best_x < 0.25:
        notes.append(f"variance ratio at the search boundary (log10 q = {best_x:.3f})")
    return best_x, trace, best, notes


@dataclass
class TvpFit:
    """Smoothed states of ``obs_t = eta * x1_t + pi_t * x2_t + e_t`` with random-walk ``pi_t``."""

    eta: float
    eta_se: float
    pi_t: np.ndarray
    pi_se: np.ndarray
    pi_filtered: np.ndarray
    measurement_var: float
    state_var: float
    loglik: float
    search: list[tuple[float, float]] = field(default_factory=list)
    best_trace: list[float] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)


def tvp_regression(obs: Sequence[float], X: np.ndarray, hyper: dict[str, float] | None = None) -> TvpFit:
    """Kalman filter and smoother for a constant and a random-walk coefficient.

    ``X`` has two columns: the regressor of the constant coefficient and that
    of the random-walk one.  ``hyper`` may fix ``{"measurement": var,
    "state": var}``; otherwise both variances are estimated by maximum
    likelihood.
    """
    obs = np.asarray(obs, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.shape != (obs.size, 2):
        raise ValueError("X must have shape (n, 2)")
    if obs.size <= DIFFUSE_STEPS:
        raise EstimationError("too few observations")
    diagnostics: list[str] = []
    trace: list[tuple[float, float]] = []
    best: list[float] = []
    if hyper is None:
        log10_ratio, trace, best, diagnostics = _search_ratio(obs, X)
        ratio = 10.0**log10_ratio
        run = _kalman(obs, X, ratio, None)
    else:
        meas, state = float(hyper["measurement"]), float(hyper["state"])
        if meas <= 0 or state < 0:
            raise EstimationError("need measurement variance > 0 and state variance >= 0")
        ratio = state / meas
        run = _kalman(obs, X, ratio, meas)

    a_s, P_s = _smooth(run)
    return TvpFit(
        eta=float(a_s[-1, 0]),
        eta_se=float(math.sqrt(max(run.scale * P_s[-1, 0, 0], 0.0))),
        pi_t=a_s[:, 1].copy(),
        pi_se=np.sqrt(np.maximum(run.scale * P_s[:, 1, 1], 0.0)),
        pi_filtered=run.a_filt[:, 1].copy(),
        measurement_var=run.scale,
        state_var=run.scale * ratio,
        loglik=run.loglik,
        search=trace,
        best_trace=best,
        diagnostics=diagnostics,
    )


def kalman_tvp(data: MacroDataset, hyper: dict[str, float] | None = None, lam: float = HP_LAMBDA) -> TvpEstimate:
    """Smoothed time-varying income elasticity ``pi_t`` and constant price elasticity ``eta``.

    Imports and GDP are HP-filtered first; see :func:`tvp_regression` for
    ``hyper``.
    """
    obs, X = regressors(data, lam)
    fit = tvp_regression(obs, X, hyper)
    dy_bp, flags = trade_multiplier(data.z, fit.pi_t, lam)
    diagnostics = list(fit.diagnostics)
    if flags.any():
        diagnostics.append(f"pi_t <= 0 in {int(flags.sum())} year(s)")
    fields = {**fit.__dict__, "diagnostics": diagnostics}
    return TvpEstimate(year=data.year.copy(), dy_bp_t=dy_bp, pi_nonpositive=flags, **fields)


def trade_multiplier(
    z: Sequence[float], pi_t: Sequence[float], lam: float = HP_LAMBDA
) -> tuple[np.ndarray, np.ndarray]:
    """``dy_bp_t = dz^T_t / pi_t`` and a flag array marking ``pi_t <= 0``.

    ``dz^T_t = z^T_t - z^T_{t-1}``, so the first entry is NaN.  Flagged
    entries are NaN as well.
    """
    z = np.asarray(z, dtype=float)
    pi_t = np.asarray(pi_t, dtype=float)
    if z.shape != pi_t.shape:
        raise ValueError("z and pi_t must be aligned")
    dz = np.full(z.size, np.nan)
    dz[1:] = np.diff(hp_filter(z, lam).trend)
    flags = ~(pi_t > 0)
    out = np.full(z.size, np.nan)
    ok = ~flags
    out[ok] = dz[ok] / pi_t[ok]
    return out, flags


@dataclass
class SyntheticTruth:
    pi_t: np.ndarray
    eta: float
    dy_bp_t: np.ndarray


def synthetic_dataset(n: int = 64, seed: int = 0, start_year: int = 1960) -> tuple[MacroDataset, SyntheticTruth]:
    """Seeded test economy with a known random-walk ``pi_t`` confined to [1.5, 2.5].

    Exports grow at a slowly drifting rate, GDP growth fluctuates around the
    trade multiplier ``dz^T / pi_t``, the real exchange rate is a random walk
    and imports are ``eta * rer + pi_t * y`` plus white noise.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    eta = 1.2
    pi = np.empty(n)
    pi[0] = 2.0
    for t in range(1, n):
        x = pi[t - 1] + 0.06 * rng.standard_normal()
        # reflect at the band edges
        if x > 2.5:
            x = 5.0 - x
        if x < 1.5:
            x = 3.0 - x
        pi[t] = x
    export_growth = 0.04 + np.cumsum(0.004 * rng.standard_normal(n))
    z = 3.0 + np.cumsum(export_growth + 0.02 * rng.standard_normal(n))
    dz = np.diff(hp_filter(z).trend)
    dy_bp = np.concatenate(([np.nan], dz / pi[1:]))
    dy = np.concatenate(([0.0], dy_bp[1:] + 0.01 * rng.standard_normal(n - 1)))
    y = 10.0 + np.cumsum(dy)
    rer = np.cumsum(0.05 * rng.standard_normal(n))
    m = eta * rer + pi * y + 0.02 * rng.standard_normal(n)
    data = MacroDataset(np.arange(start_year, start_year + n), y, m, z, rer, name=f"synthetic-{seed}")
    return data, SyntheticTruth(pi, eta, dy_bp)


def noiseless_dataset(n: int = 64, start_year: int = 1960) -> MacroDataset:
    """``m = 1.2 rer + 2 y`` exactly, with a linear ``rer`` that the HP filter leaves unchanged."""
    t = np.arange(n, dtype=float)
    y = 10.0 + 0.03 * t + 0.05 * np.sin(t / 3.0)
    rer = 0.1 + 0.01 * t
    z = 3.0 + 0.04 * t
    m = 1.2 * rer + 2.0 * y
    return MacroDataset(np.arange(start_year, start_year + n), y, m, z, rer, name="noiseless")
