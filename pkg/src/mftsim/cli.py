"""Batch experiment front end.

One JSON configuration document describes an experiment (market, grid,
strategies, utilities, path count, master seed).  Results are CSV
tables stamped with the hash of the resolved configuration, and a
manifest echoing that configuration is written next to them; rerunning
from the manifest reproduces the tables byte for byte.  Thread count
and output directory are runtime knobs: they never enter the manifest
hash and never change numeric output.

Exit codes: 0 success, 2 configuration error, 3 invariant violation,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, MftsimError
from .market import (
    BrownianPath,
    CoefficientPath,
    ConstantRandomModel,
    PiecewiseResampledModel,
    RegimeSwitchingModel,
    TimeGrid,
    constant_market,
    sample_brownian_block,
)
from .montecarlo import (
    convergence_experiment,
    expected_utility,
    paired_compare,
    sweep_nu,
)
from .strategies import (
    ConstantMixStrategy,
    ConstantNuStrategy,
    ContrarianStrategy,
    RandomizedStrategy,
    TraceStrategy,
    ZeroStrategy,
    collect_certificates,
    lift_projection,
    log_optimal_strategy,
)
from .utility import check_admissible, piecewise_linear_utility, utility_from_name
from .wealth import simulate_log_wealth

SCHEMA_VERSION = 1

EXPERIMENTS = ("simulate", "project", "compare", "sweep", "converge", "check-utility")

_TOP_KEYS = {
    "schema", "experiment", "market", "grid", "x0", "strategies", "utilities",
    "paths", "seed", "nu_grid", "eps_list", "manifest_hash", "out", "threads",
}
_HASHED_KEYS = (
    "schema", "experiment", "market", "grid", "x0", "strategies", "utilities",
    "paths", "seed", "nu_grid", "eps_list",
)


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _reject_unknown(obj: dict, allowed, where: str) -> None:
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {where}")


# ---------------------------------------------------------------------------
# config -> objects
# ---------------------------------------------------------------------------


def _market_from_config(cfg: dict):
    _reject_unknown(
        cfg,
        {"kind", "r", "a", "sigma", "states", "probs", "rates", "initial",
         "resample_steps", "condition_bound"},
        "market",
    )
    kind = cfg.get("kind")
    bound = cfg.get("condition_bound", None)
    kwargs = {} if bound is None else {"condition_bound": float(bound)}
    if kind == "constant":
        for key in ("r", "a", "sigma"):
            if key not in cfg:
                raise ConfigError(f"market.{key} is required for a constant market")
        return constant_market(cfg["r"], cfg["a"], cfg["sigma"], **kwargs)
    if kind == "constant-random":
        return ConstantRandomModel(cfg["states"], cfg.get("probs"), **kwargs)
    if kind == "regime-switching":
        if "rates" not in cfg:
            raise ConfigError("market.rates is required for regime switching")
        return RegimeSwitchingModel(cfg["states"], cfg["rates"], cfg.get("initial"), **kwargs)
    if kind == "piecewise-resampled":
        return PiecewiseResampledModel(
            cfg["states"], cfg.get("probs"), cfg.get("resample_steps", 1), **kwargs
        )
    raise ConfigError(f"unknown market kind '{kind}'")


def _read_trace_file(path: str) -> list:
    """Read a proportion table (CSV with pi_* columns) into a nested list."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = None
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                pi_cols = [i for i, name in enumerate(header) if name.startswith("pi_")]
                if not pi_cols:
                    raise ConfigError(f"trace file '{path}' has no pi_* columns")
                continue
            cells = line.split(",")
            rows.append([float(cells[i]) for i in pi_cols])
    if not rows:
        raise ConfigError(f"trace file '{path}' holds no rows")
    return rows


def _resolve_strategy_config(cfg: dict) -> dict:
    """Normalize one strategy entry; trace files are inlined for reproducibility."""
    _reject_unknown(
        cfg,
        {"kind", "weights", "direction", "base", "swing", "gain", "scale",
         "nu", "path", "proportions", "label"},
        "strategy",
    )
    kind = cfg.get("kind")
    if kind == "trace-file":
        return {"kind": "trace", "proportions": _read_trace_file(cfg["path"])}
    if kind == "projected":
        inner = dict(cfg.get("base") or {})
        return {"kind": "projected", "base": _resolve_strategy_config(inner)}
    return dict(cfg)


def _strategy_from_config(cfg: dict):
    kind = cfg.get("kind")
    if kind == "zero":
        return ZeroStrategy()
    if kind == "constant-mix":
        return ConstantMixStrategy(cfg["weights"], label=cfg.get("label"))
    if kind == "contrarian":
        return ContrarianStrategy(
            cfg["direction"],
            base=cfg.get("base", 0.5),
            swing=cfg.get("swing", 0.4),
            gain=cfg.get("gain", 4.0),
            label=cfg.get("label"),
        )
    if kind == "randomized":
        return RandomizedStrategy(
            cfg["direction"], scale=cfg.get("scale", 0.8), label=cfg.get("label")
        )
    if kind == "mutual-fund":
        return ConstantNuStrategy(float(cfg["nu"]))
    if kind == "log-optimal":
        return log_optimal_strategy()
    if kind == "trace":
        return TraceStrategy(cfg["proportions"], label=cfg.get("label"))
    if kind == "projected":
        return lift_projection(_strategy_from_config(cfg["base"]))
    raise ConfigError(f"unknown strategy kind '{kind}'")


def _utility_from_config(cfg):
    if isinstance(cfg, str):
        return utility_from_name(cfg)
    if isinstance(cfg, dict):
        _reject_unknown(cfg, {"kind", "points", "label"}, "utility")
        if cfg.get("kind") == "piecewise-u0":
            return piecewise_linear_utility(cfg["points"], label=cfg.get("label", "piecewise"))
    raise ConfigError(f"unsupported utility entry {cfg!r}")


def resolve_config(raw: dict, args=None) -> dict:
    """Validate a raw document and apply CLI overrides; returns the semantic config."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    _reject_unknown(raw, _TOP_KEYS, "configuration")
    schema = raw.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {schema} (expected {SCHEMA_VERSION})")
    resolved = {"schema": SCHEMA_VERSION}
    if "experiment" in raw:
        if raw["experiment"] not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment '{raw['experiment']}'")
        resolved["experiment"] = raw["experiment"]
    if "market" not in raw or "grid" not in raw:
        raise ConfigError("configuration requires 'market' and 'grid' sections")
    resolved["market"] = raw["market"]
    grid_cfg = raw["grid"]
    _reject_unknown(grid_cfg, {"horizon", "steps"}, "grid")
    resolved["grid"] = {"horizon": float(grid_cfg["horizon"]), "steps": int(grid_cfg["steps"])}
    resolved["x0"] = float(raw.get("x0", 1.0))
    if resolved["x0"] <= 0:
        raise ConfigError(f"x0 must be positive, got {resolved['x0']}")
    resolved["strategies"] = [
        _resolve_strategy_config(s) for s in raw.get("strategies", [])
    ]
    resolved["utilities"] = list(raw.get("utilities", []))
    resolved["paths"] = int(args.paths if args and args.paths is not None else raw.get("paths", 1000))
    if resolved["paths"] < 1:
        raise ConfigError("paths must be >= 1")
    resolved["seed"] = int(args.seed if args and args.seed is not None else raw.get("seed", 0))
    if "nu_grid" in raw:
        resolved["nu_grid"] = [float(v) for v in raw["nu_grid"]]
    if "eps_list" in raw:
        resolved["eps_list"] = [float(v) for v in raw["eps_list"]]
    return resolved


def manifest_hash(resolved: dict) -> str:
    semantic = {k: resolved[k] for k in _HASHED_KEYS if k in resolved}
    blob = json.dumps(semantic, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _build(resolved: dict):
    model = _market_from_config(resolved["market"])
    grid = TimeGrid(**resolved["grid"])
    strategies = [_strategy_from_config(s) for s in resolved["strategies"]]
    utilities = [_utility_from_config(u) for u in resolved["utilities"]]
    return model, grid, strategies, utilities


def _write_table(out_dir: Path, name: str, header: str, rows, digest: str) -> Path:
    path = out_dir / name
    lines = [f"# manifest_hash={digest}", header]
    lines.extend(rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# experiment runners
# ---------------------------------------------------------------------------


def _nth_path(model, grid, seed, j):
    """The j-th path of a Monte Carlo run with this master seed."""
    r, a, sigma = model.sample_block(grid, seed, j, 1)
    coeffs = CoefficientPath(grid=grid, r=r[0], a=a[0], sigma=sigma[0])
    dw = sample_brownian_block(grid, model.n_assets, seed, j, 1)
    return coeffs, BrownianPath(grid=grid, increments=dw[0])


def _run_simulate(resolved, model, grid, strategies, utilities, out_dir, threads, digest):
    if not strategies:
        raise ConfigError("simulate needs at least one strategy")
    x0, paths, seed = resolved["x0"], resolved["paths"], resolved["seed"]
    n = model.n_assets
    path_rows = []
    summary_rows = []
    for strat in strategies:
        for j in range(paths):
            coeffs, brownian = _nth_path(model, grid, seed, j)
            wealth, trace = simulate_log_wealth(coeffs, brownian, strat, x0)
            t = grid.nodes
            for i, y in enumerate(wealth.log_discounted):
                pis = trace.proportions[i] if i < grid.steps else np.zeros(n)
                path_rows.append(
                    f"{strat.label},{j},{i},{_fmt(t[i])},{_fmt(y)},{_fmt(np.exp(y))},"
                    + ",".join(_fmt(v) for v in pis)
                )
        for spec in utilities:
            est = expected_utility(model, strat, spec, x0, grid, max(paths, 2), seed,
                                   threads=threads)
            summary_rows.append(
                f"{est.label},,{_fmt(est.mean)},{_fmt(est.stderr)},{est.paths},{est.seed}"
            )
    header = "label,path,node,time,log_discounted_wealth,discounted_wealth," + ",".join(
        f"pi_{j+1}" for j in range(n)
    )
    _write_table(out_dir, "paths.csv", header, path_rows, digest)
    _write_table(out_dir, "summary.csv", "label,param,mean,stderr,paths,seed",
                 summary_rows, digest)


def _run_project(resolved, model, grid, strategies, utilities, out_dir, threads, digest):
    if not strategies:
        raise ConfigError("project needs a base strategy")
    x0, paths, seed = resolved["x0"], resolved["paths"], resolved["seed"]
    base = strategies[0]
    rows = []
    t = grid.nodes
    for j in range(paths):
        coeffs, brownian = _nth_path(model, grid, seed, j)
        _, _, certs = collect_certificates(base, coeffs, brownian, x0)
        for c in certs:
            rows.append(
                f"{j},{c.node},{_fmt(t[c.node])},{_fmt(c.volatility)},"
                f"{_fmt(c.projected_volatility)},{_fmt(c.drift_gap)},{_fmt(c.nu)}"
            )
    _write_table(
        out_dir, "certificates.csv",
        "path,node,time,volatility,projected_volatility,drift_gap,nu",
        rows, digest,
    )


def _run_compare(resolved, model, grid, strategies, utilities, out_dir, threads, digest):
    if not strategies:
        raise ConfigError("compare needs a base strategy")
    if not utilities:
        raise ConfigError("compare needs at least one utility")
    x0, paths, seed = resolved["x0"], resolved["paths"], resolved["seed"]
    base = strategies[0]
    projected = strategies[1] if len(strategies) > 1 else lift_projection(base)
    rows = []
    for spec in utilities:
        pc = paired_compare(model, base, projected, spec, x0, grid, paths, seed,
                            threads=threads)
        rows.append(
            f"{pc.label},{_fmt(pc.mean_difference)},{_fmt(pc.stderr_difference)},"
            f"{_fmt(pc.fraction_nonnegative)},{_fmt(pc.base_mean)},"
            f"{_fmt(pc.projected_mean)},{pc.paths},{pc.seed}"
        )
    _write_table(
        out_dir, "compare.csv",
        "label,mean_difference,stderr_difference,fraction_nonnegative,"
        "base_mean,projected_mean,paths,seed",
        rows, digest,
    )


def _run_sweep(resolved, model, grid, strategies, utilities, out_dir, threads, digest):
    if "nu_grid" not in resolved:
        raise ConfigError("sweep needs 'nu_grid'")
    if not utilities:
        raise ConfigError("sweep needs at least one utility")
    x0, paths, seed = resolved["x0"], resolved["paths"], resolved["seed"]
    rows = []
    for spec in utilities:
        estimates = sweep_nu(model, resolved["nu_grid"], spec, x0, grid, paths, seed,
                             threads=threads)
        for nu, est in zip(resolved["nu_grid"], estimates):
            rows.append(
                f"{est.label},{_fmt(nu)},{_fmt(est.mean)},{_fmt(est.stderr)},"
                f"{est.paths},{est.seed}"
            )
    _write_table(out_dir, "sweep.csv", "label,nu,mean,stderr,paths,seed", rows, digest)


def _run_converge(resolved, model, grid, strategies, utilities, out_dir, threads, digest):
    if "eps_list" not in resolved:
        raise ConfigError("converge needs 'eps_list'")
    if not strategies:
        raise ConfigError("converge needs a base strategy")
    if not utilities:
        raise ConfigError("converge needs at least one utility")
    x0, paths, seed = resolved["x0"], resolved["paths"], resolved["seed"]
    base = strategies[0]
    rows = []
    for spec in utilities:
        table = convergence_experiment(model, base, spec, resolved["eps_list"], x0,
                                       grid, paths, seed, threads=threads)
        for row in table:
            rows.append(
                f"{base.label}/{spec.label},{_fmt(row.eps)},{_fmt(row.estimate)},"
                f"{_fmt(row.baseline)},{_fmt(row.abs_difference)},"
                f"{_fmt(row.stderr_difference)},{row.paths},{row.seed}"
            )
    _write_table(
        out_dir, "converge.csv",
        "label,eps,estimate,baseline,abs_difference,stderr_difference,paths,seed",
        rows, digest,
    )


def _run_check_utility(resolved, model, grid, strategies, utilities, out_dir, threads, digest):
    if not utilities:
        raise ConfigError("check-utility needs at least one utility")
    rows = []
    for spec in utilities:
        report = check_admissible(spec)
        status = "PASS" if report.passed else "FAIL"
        detail = "; ".join(
            [f"monotonicity x in [{v[0]:.3g},{v[1]:.3g}]" for v in report.monotonicity_violations]
            + report.sign_violations
            + report.bound_violations
            + report.notes
        )
        rows.append(f'{spec.label},{status},"{detail}"')
        for line in report.lines():
            print(line)
    _write_table(out_dir, "utility_report.csv", "utility,status,detail", rows, digest)


_RUNNERS = {
    "simulate": _run_simulate,
    "project": _run_project,
    "compare": _run_compare,
    "sweep": _run_sweep,
    "converge": _run_converge,
    "check-utility": _run_check_utility,
}


def run_experiment(experiment: str, config_path: str, args=None) -> Path:
    """Execute one experiment; returns the output directory."""
    try:
        raw = json.loads(Path(config_path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"configuration file '{config_path}' not found")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"configuration is not valid JSON: {exc}")
    stored_hash = raw.pop("manifest_hash", None) if isinstance(raw, dict) else None
    resolved = resolve_config(raw, args)
    if "experiment" in resolved and resolved["experiment"] != experiment:
        raise ConfigError(
            f"config declares experiment '{resolved['experiment']}' but "
            f"subcommand is '{experiment}'"
        )
    resolved["experiment"] = experiment
    digest = manifest_hash(resolved)
    if stored_hash is not None and args is not None and args.seed is None and args.paths is None:
        if stored_hash != digest:
            raise ConfigError(
                "manifest hash mismatch: the configuration was edited after it was emitted"
            )

    out_dir = Path(
        (args.out if args and args.out else None)
        or (raw.get("out") if isinstance(raw, dict) else None)
        or "results"
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    threads = _default_threads(args, raw)

    model, grid, strategies, utilities = _build(resolved)
    _RUNNERS[experiment](resolved, model, grid, strategies, utilities, out_dir, threads, digest)

    manifest = dict(resolved)
    manifest["manifest_hash"] = digest
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return out_dir


def _default_threads(args, raw) -> int:
    if args is not None and args.threads is not None:
        return max(1, int(args.threads))
    if isinstance(raw, dict) and "threads" in raw:
        return max(1, int(raw["threads"]))
    env = os.environ.get("MFTSIM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"MFTSIM_THREADS must be an integer, got '{env}'")
    return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mftsim",
        description="Batch Monte Carlo experiments for mutual-fund strategy reduction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "sample paths and write per-node wealth/allocation tables"),
        ("project", "stream projection certificates for a base strategy"),
        ("compare", "paired utility comparison of a strategy against its projection"),
        ("sweep", "expected utility across a grid of fund allocations nu"),
        ("converge", "averaged-market utility against the raw market on an eps ladder"),
        ("check-utility", "admissibility diagnostics for configured utilities"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON experiment configuration")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--paths", type=int, default=None, help="override the path count")
        p.add_argument("--out", default=None, help="output directory (default: results)")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: MFTSIM_THREADS or 1)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        out_dir = run_experiment(args.command, args.config, args)
    except MftsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    print(f"wrote {out_dir}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
