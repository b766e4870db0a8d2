"""Bifurcation-diagram data and analytic stability-region grids.

:func:`sweep` runs the deterministic map along a one-parameter grid from
seeds next to P2 and P3 and keeps a sample of the post-transient exchange
rate on each branch.  All grid values advance together as numpy arrays,
which matches the scalar :func:`fxgrowth.core.step` bit for bit.

:func:`boundary_scan` labels a two-parameter grid by which stability
conditions at P2/P3 are violated.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .core import SCALAR_FIELDS, ModelParams, ParameterError, _advance, stack_params, trade_multiplier_growth
from .equilibria import margins, outer_equilibrium
from .simulate import E_MAX

TRANSIENT = 2000
SAMPLES = 200
CLUSTER_TOL = 1e-9
BRANCHES = ("P2", "P3")

STABLE = "stable"
FLIP_CROSSED = "flip_crossed"
NS_CROSSED = "ns_crossed"
FOLD_CROSSED = "fold_crossed"
MULTIPLE = "multiple"
ABSENT = "absent"
REGION_CODES = {STABLE: 0, FLIP_CROSSED: 1, NS_CROSSED: 2, FOLD_CROSSED: 3, MULTIPLE: 4, ABSENT: 5}


def _check_axis(name: str) -> None:
    if name not in SCALAR_FIELDS and name != "wflex_beta":
        raise ParameterError(name, "unknown parameter")


@dataclass
class SweepResult:
    """Post-transient samples along a parameter grid.

    ``samples[i, b, k]`` is the k-th recorded exchange rate of branch ``b``
    (0 seeded next to P2, 1 next to P3) at ``values[i]``; rows of diverged
    runs are NaN and flagged in ``diverged``.  ``margins`` holds the fold,
    flip and Neimark-Sacker margins at P2/P3 per value (NaN when absent).
    """

    axis: str
    values: np.ndarray
    samples: np.ndarray
    diverged: np.ndarray
    margins: dict[str, np.ndarray]
    transient: int
    offset: tuple[float, float]
    meta: dict = field(default_factory=dict)

    def periods(self, tol: float = CLUSTER_TOL) -> np.ndarray:
        """Distinct-value count per (value, branch); 0 where diverged."""
        out = np.zeros(self.diverged.shape, dtype=int)
        for i in range(len(self.values)):
            for b in range(len(BRANCHES)):
                if not self.diverged[i, b]:
                    out[i, b] = count_distinct(self.samples[i, b], tol)
        return out


def count_distinct(values: np.ndarray, tol: float = CLUSTER_TOL) -> int:
    """Number of clusters after sorting, splitting where neighbours differ by more than ``tol``."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        return 0
    return int(1 + np.count_nonzero(np.diff(v) > tol))


def _branch_seeds(params: ModelParams, offset: tuple[float, float]) -> list[tuple[float, float]]:
    """Starting points for the two branches.

    The P3 seed mirrors the P2 seed through P1 so that the two runs are
    exact reflections of each other.  Without P2/P3 both branches start
    next to P1, on opposite sides.
    """
    eq = outer_equilibrium(params)
    dy_bar = trade_multiplier_growth(params)
    e1 = -params.Omega * dy_bar
    e2 = e1 if eq is None else eq.e_bar
    de, ddy = offset
    return [(e2 + de, dy_bar + ddy), (2.0 * e1 - e2 - de, dy_bar - ddy)]


def _iterate_block(params_list, seeds, transient, samples, e_max):
    cols = stack_params(params_list)
    e = np.array([s[0] for s in seeds], dtype=float)
    dy = np.array([s[1] for s in seeds], dtype=float)
    lag = e.copy()
    dead = np.zeros(e.shape, dtype=bool)
    out = np.full((samples, e.size), np.nan)
    with np.errstate(all="ignore"):
        for t in range(transient + samples):
            e, dy, lag = _advance(e, dy, lag, 0.0, cols)
            bad = ~(np.abs(e) <= e_max) | ~np.isfinite(dy)
            if bad.any():
                dead |= bad
                # park dead orbits at zero so they cannot overflow again
                e = np.where(dead, 0.0, e)
                dy = np.where(dead, 0.0, dy)
                lag = np.where(dead, 0.0, lag)
            if t >= transient:
                out[t - transient] = e
    out[:, dead] = np.nan
    return out.T, dead


def _sweep_chunk(args):
    base, axis, values, transient, samples, offset, e_max = args
    params_list, seeds = [], []
    for v in values:
        p = base.with_value(axis, float(v))
        for seed in _branch_seeds(p, offset):
            params_list.append(p)
            seeds.append(seed)
    return _iterate_block(params_list, seeds, transient, samples, e_max)


def _chunks(n: int, parts: int) -> list[slice]:
    parts = max(1, min(parts, n))
    edges = np.linspace(0, n, parts + 1).round().astype(int)
    return [slice(a, b) for a, b in zip(edges[:-1], edges[1:])]


def sweep(
    params: ModelParams,
    axis: str,
    lo: float,
    hi: float,
    n_points: int,
    transient: int = TRANSIENT,
    samples: int = SAMPLES,
    offset: tuple[float, float] = (1e-3, 0.0),
    workers: int = 1,
    e_max: float = E_MAX,
) -> SweepResult:
    """Attractor samples of both branches on ``linspace(lo, hi, n_points)``."""
    _check_axis(axis)
    if not lo < hi:
        raise ValueError("need lo < hi")
    if n_points < 2:
        raise ValueError("need n_points >= 2")
    values = np.linspace(lo, hi, n_points)
    # validate every grid point before spending time on orbits
    for v in values:
        params.with_value(axis, float(v))

    jobs = [
        (params, axis, values[s], transient, samples, tuple(offset), e_max)
        for s in _chunks(n_points, workers if workers > 1 else 1)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_sweep_chunk, jobs))
    else:
        parts = [_sweep_chunk(job) for job in jobs]
    flat = np.concatenate([p[0] for p in parts], axis=0)
    dead = np.concatenate([p[1] for p in parts])
    n_branch = len(BRANCHES)

    margin_cols = {"fold": [], "flip": [], "ns": []}
    for v in values:
        eq = outer_equilibrium(params.with_value(axis, float(v)))
        m = margins(eq.conditions) if eq is not None else dict.fromkeys(margin_cols, math.nan)
        for key in margin_cols:
            margin_cols[key].append(m[key])

    return SweepResult(
        axis=axis,
        values=values,
        samples=flat.reshape(n_points, n_branch, samples),
        diverged=dead.reshape(n_points, n_branch),
        margins={k: np.array(v) for k, v in margin_cols.items()},
        transient=transient,
        offset=tuple(offset),
        meta={"params": params.to_dict(), "samples": samples, "e_max": e_max},
    )


def first_sign_change(values: np.ndarray, series: np.ndarray) -> tuple[float, float] | None:
    """Grid bracket ``(values[i], values[i+1])`` of the first sign change of ``series``."""
    s = np.sign(series)
    for i in range(len(s) - 1):
        if s[i] != 0 and s[i + 1] != 0 and s[i] != s[i + 1]:
            return float(values[i]), float(values[i + 1])
    return None


def write_sweep_csv(result: SweepResult, path: str | Path) -> None:
    """One row per (value, branch, sample); diverged branches get one row with empty e."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow([result.axis, "branch", "sample", "e", "diverged"])
        for i, v in enumerate(result.values):
            for b, name in enumerate(BRANCHES):
                if result.diverged[i, b]:
                    out.writerow([repr(float(v)), name, "", "", 1])
                    continue
                for k, x in enumerate(result.samples[i, b]):
                    out.writerow([repr(float(v)), name, k, repr(float(x)), 0])


def write_margins_csv(result: SweepResult, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow([result.axis, "fold", "flip", "ns", "period_P2", "period_P3"])
        periods = result.periods()
        for i, v in enumerate(result.values):
            out.writerow(
                [repr(float(v))]
                + [repr(float(result.margins[k][i])) for k in ("fold", "flip", "ns")]
                + [int(periods[i, 0]), int(periods[i, 1])]
            )


class Axis(NamedTuple):
    name: str
    lo: float
    hi: float
    n: int

    def grid(self) -> np.ndarray:
        if self.n < 2 or not self.lo < self.hi:
            raise ValueError(f"axis {self.name}: need lo < hi and n >= 2")
        return np.linspace(self.lo, self.hi, self.n)


@dataclass
class RegionGrid:
    """Region labels of a two-parameter grid; ``labels[i, j]`` is at ``(axis1[i], axis2[j])``."""

    axis1: str
    axis2: str
    values1: np.ndarray
    values2: np.ndarray
    labels: np.ndarray
    margins: dict[str, np.ndarray]

    def codes(self) -> np.ndarray:
        return np.vectorize(REGION_CODES.__getitem__, otypes=[int])(self.labels)


def region_label(m: dict[str, float] | None) -> str:
    if m is None:
        return ABSENT
    crossed = [kind for kind in ("flip", "ns", "fold") if m[kind] < 0]
    if not crossed:
        return STABLE
    if len(crossed) > 1:
        return MULTIPLE
    return {"flip": FLIP_CROSSED, "ns": NS_CROSSED, "fold": FOLD_CROSSED}[crossed[0]]


def boundary_scan(params: ModelParams, axis1: Axis, axis2: Axis) -> RegionGrid:
    """Label every cell of the ``axis1 x axis2`` grid from the conditions at P2/P3.

    Cells whose parameters are invalid (for instance strategy shares off the
    simplex) or where P2/P3 do not exist are labelled ``absent``.
    """
    if axis1.name == axis2.name:
        raise ValueError("axes must differ")
    _check_axis(axis1.name)
    _check_axis(axis2.name)
    v1, v2 = axis1.grid(), axis2.grid()
    labels = np.empty((len(v1), len(v2)), dtype=object)
    mg = {k: np.full(labels.shape, np.nan) for k in ("fold", "flip", "ns")}
    for i, a in enumerate(v1):
        for j, b in enumerate(v2):
            try:
                p = params.with_value(axis1.name, float(a)).with_value(axis2.name, float(b))
            except ParameterError:
                labels[i, j] = ABSENT
                continue
            eq = outer_equilibrium(p)
            m = None if eq is None else margins(eq.conditions)
            labels[i, j] = region_label(m)
            if m is not None:
                for k in mg:
                    mg[k][i, j] = m[k]
    return RegionGrid(axis1.name, axis2.name, v1, v2, labels, mg)


def write_region_grid(grid: RegionGrid, csv_path: str | Path, legend_path: str | Path) -> None:
    codes = grid.codes()
    with open(csv_path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow([f"{grid.axis1}\\{grid.axis2}"] + [repr(float(v)) for v in grid.values2])
        for i, a in enumerate(grid.values1):
            out.writerow([repr(float(a))] + [int(c) for c in codes[i]])
    legend = {
        "rows": grid.axis1,
        "columns": grid.axis2,
        "codes": {str(code): label for label, code in REGION_CODES.items()},
        "rule": "margin < 0 marks a crossed condition at P2/P3",
    }
    Path(legend_path).write_text(json.dumps(legend, indent=2, sort_keys=True) + "\n")
