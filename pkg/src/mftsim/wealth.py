"""Self-financing discounted wealth along market and Brownian paths.

Integration happens in log space with the exact per-cell exponent for
step coefficients, so discounted wealth stays positive structurally:

    Y_{i+1} = Y_i + (pi_i' a~_i - 0.5*|pi_i' sigma_i|^2) dt + pi_i' sigma_i dw_i.

Strategies are evaluated through a view that only ever exposes data up
to the current node, which makes adaptedness a property of the engine
rather than of each strategy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, StrategyViolationError
from .kernels import wealth_step
from .market import (
    THETA_TOLERANCE,
    BrownianPath,
    CoefficientPath,
    TimeGrid,
    risk_premium_block,
)


@dataclass(frozen=True)
class WealthPath:
    """Log discounted wealth per node; node 0 holds log(initial_wealth)."""

    grid: TimeGrid
    log_discounted: np.ndarray
    initial_wealth: float

    def discounted(self) -> np.ndarray:
        return np.exp(self.log_discounted)


@dataclass(frozen=True)
class StrategyTrace:
    """Realized proportions, one row per grid cell (shape (M, n))."""

    grid: TimeGrid
    proportions: np.ndarray

    @property
    def n_assets(self) -> int:
        return self.proportions.shape[1]

    def bound(self) -> float:
        """sup over cells of the Euclidean norm |pi_i|."""
        if self.proportions.size == 0:
            return 0.0
        return float(np.sqrt((self.proportions ** 2).sum(axis=1)).max())


class BlockView:
    """Observable market data for a block of paths, sliced per node.

    Every accessor takes the current node index i and returns only data
    measurable at t_i: coefficients at nodes <= i, Brownian increments of
    completed cells (< i), wealth at nodes <= i.  The risk premium and
    the fund direction theta' sigma^{-1} are derived lazily per node and
    zeroed where |theta| < THETA_TOLERANCE.
    """

    def __init__(self, grid, r, a, sigma, dw, log_wealth, aux=None, market_cache=None):
        self.grid = grid
        self.block_size = r.shape[0]
        self.n_assets = a.shape[2]
        self._r = r
        self._a = a
        self._sigma = sigma
        self._dw = dw
        self._y = log_wealth
        self._aux = aux
        # market_cache lets several runs over the same block share the
        # per-node risk-premium solves (paired comparisons, nu sweeps)
        cache = market_cache if market_cache is not None else {}
        self._theta_cache = cache.setdefault("theta", {})
        self._direction_cache = cache.setdefault("direction", {})

    @property
    def dt(self) -> float:
        return self.grid.dt

    def time(self, i: int) -> float:
        return i * self.grid.dt

    def rate(self, i):
        return self._r[:, i]

    def appreciation(self, i):
        return self._a[:, i]

    def excess_return(self, i):
        return self._a[:, i] - self._r[:, i, None]

    def volatility(self, i):
        return self._sigma[:, i]

    def theta(self, i):
        """Risk premium sigma^{-1} a~ at node i, per path."""
        if i not in self._theta_cache:
            self._theta_cache[i] = risk_premium_block(
                self._sigma[:, i], self.excess_return(i)
            )
        return self._theta_cache[i]

    def theta_active(self, i):
        """Boolean mask of paths with |theta_i| >= THETA_TOLERANCE."""
        th = self.theta(i)
        return np.sqrt((th ** 2).sum(axis=1)) >= THETA_TOLERANCE

    def fund_direction(self, i):
        """(sigma')^{-1} theta at node i, zeroed where theta vanishes.

        The induced allocation of a scalar rule nu is nu * fund_direction.
        """
        if i not in self._direction_cache:
            theta = self.theta(i)
            direction = np.linalg.solve(
                np.swapaxes(self._sigma[:, i], 1, 2), theta[..., None]
            )[..., 0]
            direction[~self.theta_active(i)] = 0.0
            self._direction_cache[i] = direction
        return self._direction_cache[i]

    def rate_history(self, i):
        return self._r[:, : i + 1]

    def brownian_history(self, i):
        """Increments of cells completed by t_i (shape (B, i, n))."""
        return self._dw[:, :i]

    def log_wealth(self, i):
        return self._y[:, i]

    def log_wealth_history(self, i):
        return self._y[:, : i + 1]

    def aux_noise(self, i):
        """Per-path auxiliary N(0,1) draw attached to node i."""
        if self._aux is None:
            raise ConfigError(
                "strategy requests auxiliary noise but none was sampled for this run"
            )
        return self._aux[:, i]


class CompanionView:
    """A view whose wealth accessors read a companion state instead.

    Used when a strategy must be evaluated on the trajectory its own
    allocations would have generated, while market data stays shared.
    """

    def __init__(self, base: BlockView, companion_log_wealth: np.ndarray):
        self._base = base
        self._companion = companion_log_wealth

    def __getattr__(self, name):
        return getattr(self._base, name)

    def log_wealth(self, i):
        return self._companion[:, i]

    def log_wealth_history(self, i):
        return self._companion[:, : i + 1]


def _validate_proportions(pi, i, strategy, active):
    if pi.ndim != 2 or pi.shape[0] != active.shape[0]:
        raise StrategyViolationError(
            f"strategy '{strategy.label}' returned shape {pi.shape} at node {i}"
        )
    if not np.isfinite(pi).all():
        raise StrategyViolationError(
            f"strategy '{strategy.label}' returned non-finite proportions at node {i}"
        )
    norms = np.sqrt((pi ** 2).sum(axis=1))
    bound = getattr(strategy, "bound", None)
    if bound is not None and norms.max(initial=0.0) > bound * (1 + 1e-9) + 1e-12:
        path = int(np.argmax(norms))
        raise StrategyViolationError(
            f"strategy '{strategy.label}' exceeded its bound {bound} at node {i} "
            f"(|pi|={norms[path]:.6g}, path offset {path})"
        )
    trading_at_zero = (~active) & (norms > 0)
    if trading_at_zero.any():
        path = int(np.flatnonzero(trading_at_zero)[0])
        raise StrategyViolationError(
            f"strategy '{strategy.label}' trades at node {i} where the risk premium "
            f"vanishes (path offset {path})"
        )


def simulate_log_wealth_block(grid, r, a, sigma, dw, strategy, x0, aux=None,
                              market_cache=None):
    """Advance a block of paths under one strategy.

    r: (B, M+1); a: (B, M+1, n); sigma: (B, M+1, n, n); dw: (B, M, n).
    Returns (log_wealth (B, M+1) including log x0, trace (B, M, n)).
    """
    if x0 <= 0:
        raise ConfigError(f"initial wealth must be positive, got {x0}")
    B, M = dw.shape[0], dw.shape[1]
    n = a.shape[2]
    y = np.empty((B, M + 1))
    y[:, 0] = np.log(x0)
    view = BlockView(grid, r, a, sigma, dw, y, aux=aux, market_cache=market_cache)
    state = strategy.start(view)
    trace = np.empty((B, M, n))
    dt = grid.dt
    for i in range(M):
        pi = np.asarray(strategy.proportions(i, view, state), dtype=float)
        _validate_proportions(pi, i, strategy, view.theta_active(i))
        trace[:, i] = pi
        a_tilde = view.excess_return(i)
        y[:, i + 1] = y[:, i] + wealth_step(pi, a_tilde, sigma[:, i], dw[:, i], dt)
    return y, trace


def simulate_log_wealth(coeffs: CoefficientPath, brownian: BrownianPath,
                        strategy, x0: float):
    """Integrate one path; returns (WealthPath, StrategyTrace).

    The strategy sees coefficients and its own wealth up to the current
    node and Brownian increments of completed cells only.
    """
    if coeffs.grid != brownian.grid:
        raise ConfigError("coefficient and Brownian paths must share one grid")
    y, trace = simulate_log_wealth_block(
        coeffs.grid,
        coeffs.r[None],
        coeffs.a[None],
        coeffs.sigma[None],
        brownian.increments[None],
        strategy,
        x0,
    )
    return (
        WealthPath(grid=coeffs.grid, log_discounted=y[0], initial_wealth=float(x0)),
        StrategyTrace(grid=coeffs.grid, proportions=trace[0]),
    )


def undiscount(wealth: WealthPath, coeffs: CoefficientPath) -> float:
    """Terminal wealth in currency units: exp(Y_M + sum_i r_i dt)."""
    if wealth.grid != coeffs.grid:
        raise ConfigError("wealth and coefficient paths must share one grid")
    M = wealth.grid.steps
    accrued = float(np.sum(coeffs.r[:M]) * wealth.grid.dt)
    return float(np.exp(wealth.log_discounted[M] + accrued))


def wealth_path_table(wealth: WealthPath) -> str:
    """Delimited text table, one row per node."""
    lines = ["node,time,log_discounted_wealth,discounted_wealth"]
    t = wealth.grid.nodes
    for i, y in enumerate(wealth.log_discounted):
        lines.append(f"{i},{t[i]:.17g},{y:.17g},{np.exp(y):.17g}")
    return "\n".join(lines) + "\n"


def strategy_trace_table(trace: StrategyTrace) -> str:
    """Delimited text table, one row per cell."""
    n = trace.n_assets
    header = "node,time," + ",".join(f"pi_{j+1}" for j in range(n))
    lines = [header]
    t = trace.grid.nodes
    for i, row in enumerate(trace.proportions):
        vals = ",".join(f"{v:.17g}" for v in row)
        lines.append(f"{i},{t[i]:.17g},{vals}")
    return "\n".join(lines) + "\n"
