"""Basins of attraction of the deterministic map over a window of initial conditions.

An orbit is assigned to a fixed point once its state ``(e, dy, e_prev)``
stays within ``eps_conv`` (max-norm) of that point for ``dwell`` consecutive
steps, to ``divergent`` once ``|e|`` exceeds ``e_max`` or turns non-finite,
and to ``other`` if neither happens within ``t_max`` steps.  P2 and P3 are
only tracked when they exist and are locally stable; P1 is always tracked
because it is a fixed point even as a saddle.

Cell centres are ``center + half * (2 i + 1 - n) / n``.  The fraction is
reduced before it is turned into a float, so a refined grid whose size is an
odd multiple of the original one reproduces the old centres exactly.
"""

from __future__ import annotations

import csv
import json
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .core import MarketState, ModelParams, _advance, trade_multiplier_growth
from .equilibria import STABLE, equilibria

DIVERGENT, P1, P2, P3, OTHER = 0, 1, 2, 3, 4
CLASS_NAMES = {DIVERGENT: "divergent", P1: "P1", P2: "P2", P3: "P3", OTHER: "other"}
CLASS_CODES = {name: code for code, name in CLASS_NAMES.items()}

RLE_MAGIC = b"FXBG"
RLE_VERSION = 1


@dataclass(frozen=True)
class Caps:
    t_max: int = 5000
    eps_conv: float = 1e-6
    e_max: float = 1e6
    dwell: int = 10


class Window(NamedTuple):
    e_center: float
    dy_center: float
    e_half: float
    dy_half: float


@dataclass
class BasinGrid:
    """Class codes per cell; ``classes[j, i]`` is the cell at ``(e_values[i], dy_values[j])``."""

    window: Window
    nx: int
    ny: int
    e_values: np.ndarray
    dy_values: np.ndarray
    classes: np.ndarray
    caps: Caps
    tracked: tuple[str, ...]

    def counts(self) -> dict[str, int]:
        return {name: int(np.count_nonzero(self.classes == code)) for code, name in CLASS_NAMES.items()}

    def legend(self) -> dict:
        return {
            "codes": {str(code): name for code, name in CLASS_NAMES.items()},
            "tracked_attractors": list(self.tracked),
            "window": self.window._asdict(),
            "nx": self.nx,
            "ny": self.ny,
            "caps": asdict(self.caps),
            "layout": "rows are dy (ascending), columns are e (ascending)",
            "counts": self.counts(),
        }


def cell_centers(center: float, half: float, n: int) -> np.ndarray:
    return np.array([center + half * float(Fraction(2 * i + 1 - n, n)) for i in range(n)])


def _targets(params: ModelParams) -> list[tuple[int, float, float]]:
    out = []
    for eq in equilibria(params):
        if eq.label == "P1" or eq.classification == STABLE:
            out.append(({"P1": P1, "P2": P2, "P3": P3}[eq.label], eq.e_bar, eq.dy_bar))
    return out


def classify_many(params: ModelParams, e0: np.ndarray, dy0: np.ndarray, caps: Caps = Caps()) -> np.ndarray:
    """Vectorised orbit classification; the lag starts equal to ``e0``."""
    e = np.array(e0, dtype=float).ravel()
    dy = np.broadcast_to(np.asarray(dy0, dtype=float), np.shape(e0)).ravel().copy()
    lag = e.copy()
    out = np.full(e.size, OTHER, dtype=np.int8)
    targets = _targets(params)
    streak = np.zeros((len(targets), e.size), dtype=np.int64)
    active = np.arange(e.size)
    with np.errstate(all="ignore"):
        for t in range(caps.t_max + 1):
            done = ~(np.abs(e) <= caps.e_max) | ~np.isfinite(dy)
            out[active[done]] = DIVERGENT
            for k, (code, e_bar, dy_bar) in enumerate(targets):
                near = (
                    (np.abs(e - e_bar) <= caps.eps_conv)
                    & (np.abs(dy - dy_bar) <= caps.eps_conv)
                    & (np.abs(lag - e_bar) <= caps.eps_conv)
                )
                streak[k] = np.where(near, streak[k] + 1, 0)
                hit = (streak[k] >= caps.dwell) & ~done
                out[active[hit]] = code
                done |= hit
            if done.any():
                keep = ~done
                active, e, dy, lag, streak = active[keep], e[keep], dy[keep], lag[keep], streak[:, keep]
            if active.size == 0 or t == caps.t_max:
                break
            e, dy, lag = _advance(e, dy, lag, 0.0, params)
    return out.reshape(np.shape(e0))


def classify_orbit(params: ModelParams, init: MarketState | Sequence[float], caps: Caps = Caps()) -> str:
    """Class name of the orbit started at ``init`` (``(e, dy)`` or a MarketState)."""
    if isinstance(init, MarketState) and init.e_prev != init.e:
        raise ValueError("classification starts with e_prev equal to e")
    e0, dy0 = float(init[0]), float(init[1])
    code = classify_many(params, np.array([e0]), np.array([dy0]), caps)[0]
    return CLASS_NAMES[int(code)]


def _rows_job(args):
    params, e_values, dy_rows, caps = args
    ee, dd = np.meshgrid(e_values, dy_rows)
    return classify_many(params, ee, dd, caps)


def basin_grid(
    params: ModelParams,
    window: Window,
    nx: int,
    ny: int,
    caps: Caps = Caps(),
    workers: int = 1,
) -> BasinGrid:
    """Classify every cell centre of an ``nx`` by ``ny`` grid over ``window``.

    Rows are split into contiguous blocks, one per worker, and reassembled
    in order, so the result does not depend on ``workers``.
    """
    if nx < 2 or ny < 2:
        raise ValueError("need nx, ny >= 2")
    e_values = cell_centers(window.e_center, window.e_half, nx)
    dy_values = cell_centers(window.dy_center, window.dy_half, ny)
    n_jobs = max(1, min(workers, ny)) if workers > 1 else 1
    edges = np.linspace(0, ny, n_jobs + 1).round().astype(int)
    jobs = [(params, e_values, dy_values[a:b], caps) for a, b in zip(edges[:-1], edges[1:])]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            blocks = list(pool.map(_rows_job, jobs))
    else:
        blocks = [_rows_job(job) for job in jobs]
    tracked = tuple(CLASS_NAMES[code] for code, _, _ in _targets(params))
    return BasinGrid(window, nx, ny, e_values, dy_values, np.vstack(blocks), caps, tracked)


def default_window(params: ModelParams, e_half: float = 0.8, dy_half: float = 1.0) -> Window:
    """Window centred on P1, wide enough to hold P2 and P3 for the stock calibrations."""
    dy_bar = trade_multiplier_growth(params)
    return Window(-params.Omega * dy_bar, dy_bar, e_half, dy_half)


def alternations(codes: Sequence[int]) -> int:
    """Number of switches between P2 and P3 along a sequence, ignoring other classes."""
    seq = [int(c) for c in codes if c in (P2, P3)]
    return sum(1 for a, b in zip(seq, seq[1:]) if a != b)


def reflect(grid: BasinGrid) -> np.ndarray:
    """Class map under (e, dy) -> (2 e1 - e, 2 dy_bar - dy) with P2 and P3 swapped.

    On a window centred at P1 this is a flip of both axes.  It is an exact
    symmetry of the map without extrapolators, since the map is odd in the
    deviations from P1.
    """
    flipped = grid.classes[::-1, ::-1].copy()
    swap = flipped.copy()
    swap[flipped == P2] = P3
    swap[flipped == P3] = P2
    return swap


def write_csv(grid: BasinGrid, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["dy\\e"] + [repr(float(v)) for v in grid.e_values])
        for j, dy in enumerate(grid.dy_values):
            out.writerow([repr(float(dy))] + [int(c) for c in grid.classes[j]])


def write_legend(grid: BasinGrid, path: str | Path, extra: dict | None = None) -> None:
    doc = grid.legend()
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_rle(grid: BasinGrid, path: str | Path) -> None:
    """Run-length encoded class map, little-endian.

    Layout: ``b"FXBG"``, version (u8), nx (u32), ny (u32), number of codes
    (u8), then per code its value (u8), name length (u8) and UTF-8 name;
    then the number of runs (u32) followed by ``(code u8, length u32)``
    pairs over the row-major class map.
    """
    flat = grid.classes.ravel()
    starts = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate(([0], starts, [flat.size]))
    parts = [RLE_MAGIC, struct.pack("<BIIB", RLE_VERSION, grid.nx, grid.ny, len(CLASS_NAMES))]
    for code, name in CLASS_NAMES.items():
        raw = name.encode()
        parts.append(struct.pack("<BB", code, len(raw)) + raw)
    parts.append(struct.pack("<I", len(bounds) - 1))
    for a, b in zip(bounds[:-1], bounds[1:]):
        parts.append(struct.pack("<BI", int(flat[a]), int(b - a)))
    Path(path).write_bytes(b"".join(parts))


def read_rle(path: str | Path) -> tuple[np.ndarray, dict[int, str]]:
    """Inverse of :func:`write_rle`: ``(classes[ny, nx], code table)``."""
    data = Path(path).read_bytes()
    if data[:4] != RLE_MAGIC:
        raise ValueError("not a basin grid file")
    pos = 4
    version, nx, ny, n_codes = struct.unpack_from("<BIIB", data, pos)
    if version != RLE_VERSION:
        raise ValueError(f"unsupported version {version}")
    pos += struct.calcsize("<BIIB")
    table = {}
    for _ in range(n_codes):
        code, length = struct.unpack_from("<BB", data, pos)
        pos += 2
        table[code] = data[pos : pos + length].decode()
        pos += length
    (n_runs,) = struct.unpack_from("<I", data, pos)
    pos += 4
    runs = np.frombuffer(data, dtype=np.dtype([("code", "<u1"), ("length", "<u4")]), count=n_runs, offset=pos)
    flat = np.repeat(runs["code"].astype(np.int8), runs["length"].astype(np.int64))
    if flat.size != nx * ny:
        raise ValueError("run lengths do not match the grid size")
    return flat.reshape(ny, nx), table
