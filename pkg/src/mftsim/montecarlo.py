"""Monte Carlo estimation of expected utilities and paired experiments.

Paths are processed in fixed-size blocks.  Path k always consumes the
(coefficient, k), (brownian, k) and (aux, k) child streams of the master
seed, so results are bit-identical for any thread count or block
schedule; per-path values land in preallocated slots and are reduced
once at the end (numpy's pairwise summation over a fixed order).

Both arms of a paired comparison are simulated on identical draws
(common random numbers): the difference of terminal utilities then has
far lower variance than either estimate alone, which is what makes the
mutual-fund suboptimality gap testable at modest path counts.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError
from .kernels import wealth_path
from .market import (
    CoefficientModel,
    TimeGrid,
    sample_aux_block,
    sample_brownian_block,
    validate_sigma_block,
)
from .smoothing import epsilon_average_block, window_cells
from .strategies import ConstantNuStrategy, Strategy
from .utility import UtilitySpec, check_admissible, eval_utility
from .wealth import simulate_log_wealth_block

#: Paths per block.  Fixed (not derived from thread count) so that the
#: block layout, and hence every draw, is schedule-independent.
BLOCK_SIZE = 4096


@dataclass(frozen=True)
class MCEstimate:
    """Sample mean with its standard error and seed provenance."""

    label: str
    mean: float
    stderr: float
    paths: int
    seed: int

    def __post_init__(self):
        if self.paths < 2:
            raise ConfigError("an estimate needs at least 2 paths")


@dataclass(frozen=True)
class PairedComparison:
    """Per-path utility differences of two strategies on common draws."""

    label: str
    differences: np.ndarray
    mean_difference: float
    stderr_difference: float
    fraction_nonnegative: float
    base_mean: float
    projected_mean: float
    paths: int
    seed: int


@dataclass(frozen=True)
class ConvergenceRow:
    """One rung of the averaging ladder."""

    eps: float
    estimate: float
    baseline: float
    abs_difference: float
    stderr_difference: float
    paths: int
    seed: int


def _blocks(paths: int):
    return [(start, min(BLOCK_SIZE, paths - start)) for start in range(0, paths, BLOCK_SIZE)]


def _run_blocks(paths: int, threads: int, worker) -> None:
    blocks = _blocks(paths)
    if threads <= 1 or len(blocks) == 1:
        for start, count in blocks:
            worker(start, count)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(worker, start, count) for start, count in blocks]
        for f in futures:
            f.result()


def _require_admissible(spec: UtilitySpec) -> None:
    report = check_admissible(spec)
    if not report.passed:
        raise ConfigError(
            "utility '%s' failed admissibility checks:\n%s"
            % (spec.label, "\n".join(report.lines()))
        )


def _require_paths(paths: int) -> None:
    if paths < 2:
        raise ConfigError(f"need at least 2 paths, got {paths}")


def _utility_of_terminal(spec, terminal_log_wealth, seed, label):
    wealth = np.exp(terminal_log_wealth)
    degenerate = np.flatnonzero(~np.isfinite(wealth) | (wealth <= 0.0))
    if degenerate.size:
        raise NumericError(
            f"terminal wealth under/overflowed for '{label}' at path "
            f"{degenerate[0]} (master seed {seed})"
        )
    u = eval_utility(spec, wealth)
    bad = np.flatnonzero(~np.isfinite(u))
    if bad.size:
        raise NumericError(
            f"non-finite utility for '{label}' at path {bad[0]} (master seed {seed})"
        )
    return u


def _sample_block(model, grid, seed, start, count, with_aux):
    r, a, sigma = model.sample_block(grid, seed, start, count)
    dw = sample_brownian_block(grid, model.n_assets, seed, start, count)
    aux = sample_aux_block(grid, seed, start, count) if with_aux else None
    return r, a, sigma, dw, aux


def _estimate(label, values, seed) -> MCEstimate:
    n = values.size
    return MCEstimate(
        label=label,
        mean=float(np.mean(values)),
        stderr=float(np.std(values, ddof=1) / np.sqrt(n)),
        paths=n,
        seed=seed,
    )


def terminal_log_wealth(model: CoefficientModel, strategy: Strategy, grid: TimeGrid,
                        x0: float, paths: int, seed: int, threads: int = 1) -> np.ndarray:
    """Terminal log discounted wealth of every path (shape (paths,))."""
    _require_paths(paths)
    out = np.empty(paths)
    with_aux = strategy.uses_aux_noise

    def worker(start, count):
        r, a, sigma, dw, aux = _sample_block(model, grid, seed, start, count, with_aux)
        y, _ = simulate_log_wealth_block(grid, r, a, sigma, dw, strategy, x0, aux=aux)
        out[start:start + count] = y[:, -1]

    _run_blocks(paths, threads, worker)
    return out


def expected_utility(model: CoefficientModel, strategy: Strategy, spec: UtilitySpec,
                     x0: float, grid: TimeGrid, paths: int, seed: int,
                     threads: int = 1) -> MCEstimate:
    """Mean utility of terminal discounted wealth over independent paths."""
    _require_admissible(spec)
    y = terminal_log_wealth(model, strategy, grid, x0, paths, seed, threads)
    u = _utility_of_terminal(spec, y, seed, strategy.label)
    return _estimate(f"{strategy.label}/{spec.label}", u, seed)


def paired_terminal_log_wealth(model: CoefficientModel, base: Strategy,
                               projected: Strategy, grid: TimeGrid, x0: float,
                               paths: int, seed: int, threads: int = 1):
    """Terminal log wealth of both strategies on identical draws.

    One pass over the blocks; both arms of path k consume the same
    coefficient, Brownian and auxiliary child streams (common random
    numbers).  Returns (y_base, y_projected), each (paths,).
    """
    _require_paths(paths)
    with_aux = base.uses_aux_noise or projected.uses_aux_noise
    y_base = np.empty(paths)
    y_proj = np.empty(paths)

    def worker(start, count):
        r, a, sigma, dw, aux = _sample_block(model, grid, seed, start, count, with_aux)
        cache = {}
        yb, _ = simulate_log_wealth_block(
            grid, r, a, sigma, dw, base, x0, aux=aux, market_cache=cache
        )
        yp, _ = simulate_log_wealth_block(
            grid, r, a, sigma, dw, projected, x0, aux=aux, market_cache=cache
        )
        y_base[start:start + count] = yb[:, -1]
        y_proj[start:start + count] = yp[:, -1]

    _run_blocks(paths, threads, worker)
    return y_base, y_proj


def paired_compare(model: CoefficientModel, base: Strategy, projected: Strategy,
                   spec: UtilitySpec, x0: float, grid: TimeGrid, paths: int,
                   seed: int, threads: int = 1) -> PairedComparison:
    """Both strategies on identical draws; reports projected minus base."""
    _require_admissible(spec)
    y_base, y_proj = paired_terminal_log_wealth(
        model, base, projected, grid, x0, paths, seed, threads
    )
    u_base = _utility_of_terminal(spec, y_base, seed, base.label)
    u_proj = _utility_of_terminal(spec, y_proj, seed, projected.label)
    d = u_proj - u_base
    return PairedComparison(
        label=f"{projected.label} vs {base.label} / {spec.label}",
        differences=d,
        mean_difference=float(np.mean(d)),
        stderr_difference=float(np.std(d, ddof=1) / np.sqrt(paths)),
        fraction_nonnegative=float(np.mean(d >= 0)),
        base_mean=float(np.mean(u_base)),
        projected_mean=float(np.mean(u_proj)),
        paths=paths,
        seed=seed,
    )


def cdf_dominance(samples_a, samples_b) -> float:
    """max_x (ECDF_a(x) - ECDF_b(x)); <= tolerance means a dominates b.

    First-order dominance of a over b holds when a's CDF never exceeds
    b's; the statistic is the largest violation over the pooled sample.
    """
    a = np.sort(np.asarray(samples_a, dtype=float))
    b = np.sort(np.asarray(samples_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ConfigError("dominance test needs non-empty samples")
    if a.size != b.size:
        raise ConfigError("dominance test expects equal-size sample sets")
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    return float((fa - fb).max())


def dkw_band(n_a: int, n_b: int, alpha: float = 0.01) -> float:
    """Two-sample Dvoretzky-Kiefer-Wolfowitz band at level alpha."""
    return float(
        np.sqrt(np.log(2.0 / alpha) / (2.0 * n_a)) + np.sqrt(np.log(2.0 / alpha) / (2.0 * n_b))
    )


def sweep_nu(model: CoefficientModel, nu_grid, spec: UtilitySpec, x0: float,
             grid: TimeGrid, paths: int, seed: int, threads: int = 1):
    """J(constant-nu strategy) over a grid of nu with common draws."""
    _require_admissible(spec)
    _require_paths(paths)
    nu_grid = [float(v) for v in nu_grid]
    if not nu_grid:
        raise ConfigError("nu grid must be non-empty")
    strategies = [ConstantNuStrategy(nu) for nu in nu_grid]
    terminal = np.empty((len(nu_grid), paths))

    def worker(start, count):
        r, a, sigma, dw, _ = _sample_block(model, grid, seed, start, count, False)
        cache = {}
        for row, strat in enumerate(strategies):
            y, _ = simulate_log_wealth_block(
                grid, r, a, sigma, dw, strat, x0, market_cache=cache
            )
            terminal[row, start:start + count] = y[:, -1]

    _run_blocks(paths, threads, worker)
    out = []
    for row, (nu, strat) in enumerate(zip(nu_grid, strategies)):
        u = _utility_of_terminal(spec, terminal[row], seed, strat.label)
        out.append(_estimate(f"nu={nu:g}/{spec.label}", u, seed))
    return out


def convergence_experiment(model: CoefficientModel, base: Strategy, spec: UtilitySpec,
                           eps_list, x0: float, grid: TimeGrid, paths: int, seed: int,
                           threads: int = 1):
    """J on averaged markets with averaged traces, against the raw J.

    For each eps the base strategy's realized trace and the sampled
    coefficients are window-averaged, wealth is re-integrated against
    the same Brownian increments, and the estimate is compared with the
    raw-market estimate on common draws.
    """
    _require_admissible(spec)
    _require_paths(paths)
    eps_list = [float(e) for e in eps_list]
    if not eps_list:
        raise ConfigError("eps list must be non-empty")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError("eps list must be strictly decreasing")
    cells = [window_cells(grid, e) for e in eps_list]
    M = grid.steps
    with_aux = base.uses_aux_noise
    y_raw = np.empty(paths)
    y_eps = np.empty((len(eps_list), paths))

    def worker(start, count):
        r, a, sigma, dw, aux = _sample_block(model, grid, seed, start, count, with_aux)
        y, trace = simulate_log_wealth_block(grid, r, a, sigma, dw, base, x0, aux=aux)
        y_raw[start:start + count] = y[:, -1]
        for row, k in enumerate(cells):
            r_e, a_e, s_e = epsilon_average_block(r, a, sigma, k)
            try:
                validate_sigma_block(s_e[:, :M], model.condition_bound)
            except Exception as exc:
                raise type(exc)(f"eps={eps_list[row]:g}: {exc}") from exc
            pi_e = _average_trace(trace, k)
            a_tilde_e = a_e - r_e[:, :, None]
            rel = wealth_path(pi_e, a_tilde_e[:, :M], s_e[:, :M], dw, grid.dt)
            y_eps[row, start:start + count] = np.log(x0) + rel[:, -1]

    _run_blocks(paths, threads, worker)
    u_raw = _utility_of_terminal(spec, y_raw, seed, base.label)
    baseline = float(np.mean(u_raw))
    rows = []
    for row, eps in enumerate(eps_list):
        u_e = _utility_of_terminal(spec, y_eps[row], seed, f"eps={eps:g}")
        d = u_e - u_raw
        rows.append(
            ConvergenceRow(
                eps=eps,
                estimate=float(np.mean(u_e)),
                baseline=baseline,
                abs_difference=float(abs(np.mean(d))),
                stderr_difference=float(np.std(d, ddof=1) / np.sqrt(paths)),
                paths=paths,
                seed=seed,
            )
        )
    return rows


def _average_trace(trace, k):
    from .kernels import lagged_window_mean

    return lagged_window_mean(trace, k)
