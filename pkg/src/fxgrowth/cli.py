"""Command-line entry point: ``fxgrowth <command> [--config FILE] [--preset NAME] ...``.

Every run writes its outputs plus ``manifest.json`` (resolved configuration,
seed, library versions, timings and SHA-256 of each output) into ``--out``.
Feeding a manifest back through ``--config`` repeats the run.

Exit codes: 0 success, 1 invalid configuration, 2 estimation failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy

from . import __version__
from . import basins as basins_mod
from . import bifurcation, estimator, simulate as sim_mod, stats as stats_mod
from .config import PRESETS, ConfigError, RunConfig, load, load_preset
from .core import MarketState, ParameterError
from .equilibria import equilibria

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class Outputs:
    """Collects written files so the manifest can hash them."""

    def __init__(self, root: Path):
        self.root = root
        self.files: list[str] = []
        self.info: dict = {}

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.root / name

    def write_json(self, name: str, doc) -> None:
        self.path(name).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions() -> dict[str, str]:
    return {
        "fxgrowth": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


# ---------------------------------------------------------------- commands


def _run_equilibria(cfg: RunConfig, out: Outputs) -> None:
    points = equilibria(cfg.params)
    out.write_json("equilibria.json", [eq.to_dict() for eq in points])
    print(f"{'label':<6}{'e_bar':>16}{'dy_bar':>14}  {'classification':<15}max|lambda|")
    for eq in points:
        print(f"{eq.label:<6}{eq.e_bar:>16.9g}{eq.dy_bar:>14.6g}  {eq.classification:<15}{eq.spectral_radius:.6f}")
        if eq.diagnostic:
            print(f"      note: {eq.diagnostic}")


def _initial_state(cfg: RunConfig, block: dict) -> MarketState:
    init = block["init"]
    if isinstance(init, str):
        found = {eq.label: eq for eq in equilibria(cfg.params)}
        if init not in found:
            raise ConfigError(f"simulate.init: {init} does not exist for these parameters")
        e, dy = found[init].point
    elif isinstance(init, (list, tuple)) and len(init) in (2, 3):
        e, dy = float(init[0]), float(init[1])
    else:
        raise ConfigError("simulate.init: expected P1, P2, P3 or [e, dy]")
    de, ddy = (float(v) for v in block["init_offset"])
    return MarketState(e + de, dy + ddy, e + de)


def _describe_or_note(series: np.ndarray) -> dict:
    try:
        return stats_mod.describe(series).to_dict()
    except stats_mod.DegenerateSeriesError as exc:
        return {"n": int(series.size), "degenerate": str(exc)}


def _run_simulate(cfg: RunConfig, out: Outputs) -> None:
    block = cfg.block()
    init = _initial_state(cfg, block)
    horizon = int(block["horizon"])
    n_runs = int(block["n_runs"])
    if n_runs < 1:
        raise ConfigError("simulate.n_runs must be >= 1")
    if horizon < 1:
        raise ConfigError("simulate.horizon must be >= 1")
    if n_runs == 1:
        runs = [sim_mod.simulate(cfg.params, init, horizon, cfg.seed, float(block["e_max"]))]
        names = ["trajectory"]
    else:
        if cfg.seed is None:
            raise ConfigError("simulate.n_runs > 1 needs a seed")
        runs = sim_mod.simulate_batch(
            cfg.params, init, horizon, cfg.seed, n_runs, cfg.workers, float(block["e_max"])
        )
        names = [f"trajectory_{k:03d}" for k in range(n_runs)]

    report = {}
    for name, traj in zip(names, runs):
        sim_mod.write_trajectory_csv(traj, out.path(f"{name}.csv"))
        agg = sim_mod.aggregate(traj, int(block["year_length"]), min(int(block["burn_in"]), len(traj)))
        entry = {
            "seed": traj.seed,
            "diverged_at": traj.diverged_at,
            "fx_returns": _describe_or_note(agg.fx_returns),
            "annual_growth": _describe_or_note(agg.annual_growth)
            if agg.annual_growth.size >= 2 else {"n": int(agg.annual_growth.size)},
            "annual_growth_values": [float(v) for v in agg.annual_growth],
            "notes": agg.notes,
        }
        report[name] = entry
        if agg.fx_returns.size >= 2:
            try:
                stats_mod.write_qq_csv(agg.fx_returns, out.path(f"{name}_qq_fx_returns.csv"))
            except stats_mod.DegenerateSeriesError:
                pass
        fx = entry["fx_returns"]
        status = "diverged at step %d" % traj.diverged_at if traj.diverged else "bounded"
        line = f"{name}: {len(traj)} steps, {status}"
        if "A2star" in fx:
            line += f"; FX returns A*2 = {fx['A2star']:.4g} (reject normality: {fx['reject_at_5pct']})"
        print(line)
    out.write_json("stats.json", report)
    out.info["seeds"] = [t.seed for t in runs]
    out.info["diverged_at"] = [t.diverged_at for t in runs]


def _run_sweep(cfg: RunConfig, out: Outputs) -> None:
    b = cfg.block()
    result = bifurcation.sweep(
        cfg.params, b["axis"], float(b["lo"]), float(b["hi"]), int(b["n_points"]),
        transient=int(b["transient"]), samples=int(b["samples"]),
        offset=tuple(float(v) for v in b["offset"]), workers=cfg.workers,
    )
    bifurcation.write_sweep_csv(result, out.path("sweep.csv"))
    bifurcation.write_margins_csv(result, out.path("margins.csv"))
    flip = bifurcation.first_sign_change(result.values, result.margins["flip"])
    periods = result.periods()
    changed = np.flatnonzero(periods[:, 0] != periods[0, 0])
    out.info["flip_sign_change"] = flip
    out.info["first_period_change"] = float(result.values[changed[0]]) if changed.size else None
    print(f"sweep over {result.axis}: {len(result.values)} values, "
          f"{int(result.diverged.any(axis=1).sum())} with a diverged branch")
    if flip:
        print(f"flip margin changes sign between {flip[0]:.6g} and {flip[1]:.6g}")


def _axis(doc: dict) -> bifurcation.Axis:
    try:
        return bifurcation.Axis(str(doc["name"]), float(doc["lo"]), float(doc["hi"]), int(doc["n"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"scan axis: {exc}") from exc


def _run_scan(cfg: RunConfig, out: Outputs) -> None:
    b = cfg.block()
    try:
        grid = bifurcation.boundary_scan(cfg.params, _axis(b["axis1"]), _axis(b["axis2"]))
    except ValueError as exc:
        if isinstance(exc, ParameterError):
            raise
        raise ConfigError(str(exc)) from exc
    bifurcation.write_region_grid(grid, out.path("regions.csv"), out.path("regions.json"))
    labels, counts = np.unique(grid.labels.astype(str), return_counts=True)
    print("region counts: " + ", ".join(f"{l}={c}" for l, c in zip(labels, counts)))


def _run_basins(cfg: RunConfig, out: Outputs) -> None:
    b = cfg.block()
    if b["window"] is None:
        raise ConfigError("basins.window is required (e_center, dy_center, e_half, dy_half)")
    window = basins_mod.Window(**b["window"])
    caps = basins_mod.Caps(int(b["t_max"]), float(b["eps_conv"]), float(b["e_max"]), int(b["dwell"]))
    grid = basins_mod.basin_grid(cfg.params, window, int(b["nx"]), int(b["ny"]), caps, cfg.workers)
    basins_mod.write_csv(grid, out.path("basins.csv"))
    basins_mod.write_legend(grid, out.path("basins.json"))
    if b["rle"]:
        basins_mod.write_rle(grid, out.path("basins.fxbg"))
    print("cell counts: " + ", ".join(f"{k}={v}" for k, v in grid.counts().items()))


def _run_stats(cfg: RunConfig, out: Outputs) -> None:
    b = cfg.block()
    if not b["input"] or not b["column"]:
        raise ConfigError("stats.input and stats.column are required")
    try:
        data = np.genfromtxt(b["input"], delimiter=",", names=True, ndmin=1)
    except OSError as exc:
        raise ConfigError(f"stats.input: {exc}") from exc
    if data.dtype.names is None or b["column"] not in data.dtype.names:
        raise ConfigError(f"stats.column: {b['column']!r} not found in {b['input']}")
    series = np.asarray(data[b["column"]], dtype=float)[int(b["skip"]):]
    series = series[np.isfinite(series)]
    try:
        summary = stats_mod.describe(series)
    except stats_mod.DegenerateSeriesError as exc:
        raise ConfigError(f"stats: {exc}") from exc
    stats_mod.write_report({b["column"]: summary}, out.path("stats.json"))
    stats_mod.write_qq_csv(series, out.path("qq.csv"))
    print(f"{b['column']}: n={summary.n} mean={summary.mean:.6g} sd={summary.sd:.6g} "
          f"skew={summary.skewness:.4g} exkurt={summary.excess_kurtosis:.4g} "
          f"A*2={summary.A2star:.4g} reject={summary.reject_at_5pct}")


def _estimate_one(args):
    source, hyper, lam, seed, n = args
    if source is None:
        data, _ = estimator.synthetic_dataset(n=n, seed=seed)
    else:
        data = estimator.MacroDataset.read_csv(source)
    return data.name, estimator.kalman_tvp(data, hyper, lam)


def _run_estimate(cfg: RunConfig, out: Outputs) -> None:
    b = cfg.block()
    sources = b["input"]
    if sources is None:
        sources = [None]
    elif isinstance(sources, str):
        sources = [sources]
    seed = 0 if cfg.seed is None else cfg.seed
    jobs = [(s, b["hyper"], float(b["lambda"]), seed, int(b["synthetic_n"])) for s in sources]
    try:
        if cfg.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(_estimate_one, jobs))
        else:
            results = [_estimate_one(job) for job in jobs]
    except (OSError, ValueError) as exc:
        if isinstance(exc, estimator.EstimationError):
            raise
        raise ConfigError(f"estimate.input: {exc}") from exc
    report = {}
    for name, est in results:
        est.write_csv(out.path(f"estimate_{name}.csv"))
        report[name] = est.report()
        print(f"{name}: eta={est.eta:.4g} mean pi={np.mean(est.pi_t):.4g} loglik={est.loglik:.6g}")
        for note in est.diagnostics:
            print(f"  note: {note}")
    out.write_json("estimate.json", report)


RUNNERS = {
    "equilibria": _run_equilibria,
    "simulate": _run_simulate,
    "sweep": _run_sweep,
    "scan": _run_scan,
    "basins": _run_basins,
    "stats": _run_stats,
    "estimate": _run_estimate,
}


def execute(cfg: RunConfig, out_dir: str | Path | None = None) -> Path:
    """Run ``cfg`` and write outputs plus manifest; returns the output directory."""
    root = Path(out_dir or cfg.out)
    root.mkdir(parents=True, exist_ok=True)
    out = Outputs(root)
    started = time.perf_counter()
    RUNNERS[cfg.command](cfg, out)
    elapsed = time.perf_counter() - started
    manifest = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "versions": _versions(),
        "timings": {"seconds": round(elapsed, 6)},
        "outputs": {name: _sha256(root / name) for name in out.files},
        "info": out.info,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=float) + "\n")
    return root


# -------------------------------------------------------------- arguments


def _add_common(p: argparse.ArgumentParser, with_preset: bool = True) -> None:
    p.add_argument("--config", help="YAML configuration or a previous manifest.json")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="random seed (overrides the configuration)")
    p.add_argument("--workers", type=int, help="worker processes for sweeps, basins and batches")
    if with_preset:
        p.add_argument("--preset", choices=PRESETS, help="start from a bundled calibration")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fxgrowth", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "equilibria": "fixed points and their stability",
        "simulate": "trajectories, FX returns and annual growth",
        "sweep": "one-parameter bifurcation data",
        "scan": "two-parameter stability regions at P2/P3",
        "basins": "basins of attraction on a grid of initial conditions",
        "stats": "moments, Anderson-Darling test and QQ data for a CSV column",
        "estimate": "time-varying income elasticity and trade multiplier",
    }
    for name, text in helps.items():
        _add_common(sub.add_parser(name, help=text))
    repro = sub.add_parser("repro", help="rerun a bundled calibration")
    repro.add_argument("preset_id", choices=PRESETS)
    _add_common(repro, with_preset=False)
    return parser


def resolve(args: argparse.Namespace) -> RunConfig:
    if args.command == "repro":
        cfg = load_preset(args.preset_id)
    elif args.config:
        cfg = load(args.config)
        cfg.command = args.command
    elif args.preset:
        cfg = load_preset(args.preset)
        cfg.command = args.command
    else:
        from .config import from_mapping

        cfg = from_mapping({"command": args.command})
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg.seed = args.seed
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg.workers = args.workers
    if args.out:
        cfg.out = args.out
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
        root = execute(cfg)
    except (ConfigError, ParameterError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except estimator.EstimationError as exc:
        print(f"error: estimation failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"outputs in {root}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
