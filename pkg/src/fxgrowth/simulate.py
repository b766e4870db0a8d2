"""Trajectories of the map, deterministic or with Gaussian fundamental shocks.

Random numbers come from numpy's ``Generator(PCG64(seed))``.  The whole
shock path is drawn up front as ``sigma * standard_normal(horizon)``, which
uses numpy's ziggurat transform, so a ``(params, seed, horizon)`` triple
always reproduces the same path bit for bit.  Independent runs in a batch
get their seeds from ``SeedSequence(root).spawn(n)`` (see
:func:`spawn_seeds`).
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import MarketState, ModelParams, _advance

E_MAX = 1e6
YEAR_LENGTH = 365
BURN_IN = 2000


@dataclass
class Trajectory:
    """Recorded path of one run.

    ``e[t]``, ``dy[t]`` hold the state after step ``t + 1`` and ``eps[t]`` is
    the shock used in that step.  When the run diverged the arrays stop just
    before the offending state and ``diverged_at`` is the index that state
    would have had.
    """

    params: ModelParams
    init: MarketState
    seed: int | None
    horizon: int
    e: np.ndarray
    dy: np.ndarray
    eps: np.ndarray
    diverged_at: int | None = None
    e_max: float = E_MAX

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None

    def __len__(self) -> int:
        return len(self.e)

    def manifest(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "init": list(self.init),
            "seed": self.seed,
            "horizon": self.horizon,
            "recorded": len(self.e),
            "diverged_at": self.diverged_at,
            "e_max": self.e_max,
            "generator": "numpy PCG64, ziggurat normal, shocks drawn up front",
        }


@dataclass
class Aggregates:
    fx_returns: np.ndarray
    annual_growth: np.ndarray
    year_length: int = YEAR_LENGTH
    burn_in: int = 0
    notes: list[str] = field(default_factory=list)


def draw_shocks(sigma: float, horizon: int, seed: int | None) -> np.ndarray:
    if seed is None or sigma == 0.0:
        return np.zeros(horizon)
    rng = np.random.Generator(np.random.PCG64(seed))
    return sigma * rng.standard_normal(horizon)


def simulate(
    params: ModelParams,
    init: MarketState | Sequence[float],
    horizon: int,
    seed: int | None = None,
    e_max: float = E_MAX,
) -> Trajectory:
    """Iterate the map ``horizon`` times from ``init``.

    ``init`` may be a :class:`MarketState` or ``(e, dy)``, in which case the
    lagged rate starts equal to ``e``.  Without a seed (or with ``sigma ==
    0``) this is the deterministic skeleton.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    init = as_state(init)
    eps = draw_shocks(params.sigma, horizon, seed)
    e_path = np.empty(horizon)
    dy_path = np.empty(horizon)
    e, dy, lag = init
    diverged_at = None
    if not (abs(e) <= e_max and math.isfinite(dy) and math.isfinite(lag)):
        diverged_at = 0
        horizon_done = 0
    else:
        horizon_done = horizon
        for t in range(horizon):
            e, dy, lag = _advance(e, dy, lag, eps[t], params)
            if not (abs(e) <= e_max and math.isfinite(dy)):
                diverged_at = t
                horizon_done = t
                break
            e_path[t] = e
            dy_path[t] = dy
    return Trajectory(
        params=params,
        init=init,
        seed=seed,
        horizon=horizon,
        e=e_path[:horizon_done].copy(),
        dy=dy_path[:horizon_done].copy(),
        eps=eps[:horizon_done].copy(),
        diverged_at=diverged_at,
        e_max=e_max,
    )


def as_state(init: MarketState | Sequence[float]) -> MarketState:
    if isinstance(init, MarketState):
        return init
    values = [float(v) for v in init]
    if len(values) == 2:
        return MarketState(values[0], values[1], values[0])
    if len(values) == 3:
        return MarketState(*values)
    raise ValueError("init must be (e, dy) or (e, dy, e_prev)")


def aggregate(traj: Trajectory, year_length: int = YEAR_LENGTH, burn_in: int = 0) -> Aggregates:
    """Daily FX level returns and annual output growth after ``burn_in`` steps.

    ``fx_returns[t] = exp(e_t - e_{t-1}) - 1`` with the initial state as
    ``e_{-1}``; ``annual_growth[k]`` sums ``dy`` over the k-th full window of
    ``year_length`` steps.  A trailing partial year is dropped.
    """
    if year_length < 1:
        raise ValueError("year_length must be >= 1")
    path = np.concatenate(([traj.init.e], traj.e))
    returns = np.expm1(np.diff(path))[burn_in:]
    dy = traj.dy[burn_in:]
    years = len(dy) // year_length
    notes = []
    if years == 0:
        msg = f"only {len(dy)} steps after burn-in, shorter than one year of {year_length}"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
        annual = np.empty(0)
    else:
        annual = dy[: years * year_length].reshape(years, year_length).sum(axis=1)
    return Aggregates(returns, annual, year_length, burn_in, notes)


def spawn_seeds(root: int, n: int) -> list[int]:
    """``n`` independent 64-bit seeds derived from ``root`` via SeedSequence.spawn."""
    children = np.random.SeedSequence(root).spawn(n)
    return [int(child.generate_state(1, np.uint64)[0]) for child in children]


def _simulate_job(args):
    return simulate(*args)


def simulate_batch(
    params: ModelParams,
    init: MarketState | Sequence[float],
    horizon: int,
    root_seed: int,
    n_runs: int,
    workers: int = 1,
    e_max: float = E_MAX,
) -> list[Trajectory]:
    """Independent runs with spawned seeds, returned in seed order."""
    jobs = [(params, init, horizon, s, e_max) for s in spawn_seeds(root_seed, n_runs)]
    if workers <= 1:
        return [_simulate_job(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_simulate_job, jobs))


def write_trajectory_csv(traj: Trajectory, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["t", "e", "dy", "eps"])
        for t in range(len(traj.e)):
            out.writerow([t + 1, repr(float(traj.e[t])), repr(float(traj.dy[t])), repr(float(traj.eps[t]))])


def read_trajectory_csv(path: str | Path) -> dict[str, np.ndarray]:
    data = np.genfromtxt(path, delimiter=",", names=True, ndmin=1)
    return {name: np.asarray(data[name]) for name in data.dtype.names}


def write_manifest(traj: Trajectory, path: str | Path, extra: dict | None = None) -> None:
    doc = traj.manifest()
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
