"""Lagged averaging and grid-freezing of coefficient paths.

The lagged window average replaces a value at time t by the mean of the
raw path over [t-2*eps, t-eps] (clamped at 0, with the path extended
backward by its initial value).  The output at t therefore depends only
on raw data at times <= t-eps: averaged coefficients are predictable
with horizon eps.  Freezing holds coefficients constant between knots,
making them knot-predictable by construction.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, InvariantViolationError
from .kernels import lagged_window_mean
from .market import (
    DEFAULT_CONDITION_BOUND,
    CoefficientModel,
    CoefficientPath,
    TimeGrid,
    validate_sigma_block,
)
from .wealth import StrategyTrace


def window_cells(grid: TimeGrid, eps: float) -> int:
    """eps expressed in grid cells; eps must be a positive multiple of dt."""
    if not np.isfinite(eps) or eps <= 0:
        raise ConfigError(f"eps must be positive, got {eps}")
    k = eps / grid.dt
    if abs(k - round(k)) > 1e-9 * max(1.0, abs(k)):
        raise ConfigError(
            f"eps={eps:g} is not an integer multiple of the grid step {grid.dt:g}"
        )
    return int(round(k))


def epsilon_average_block(r, a, sigma, k: int):
    """Windowed averages of stacked coefficient arrays (leading path axis)."""
    B, nodes = r.shape
    n = a.shape[2]
    r_avg = lagged_window_mean(r[:, :, None], k)[:, :, 0]
    a_avg = lagged_window_mean(a, k)
    sigma_avg = lagged_window_mean(sigma.reshape(B, nodes, n * n), k)
    return r_avg, a_avg, sigma_avg.reshape(B, nodes, n, n)


def epsilon_average(path: CoefficientPath, eps: float,
                    condition_bound: float = DEFAULT_CONDITION_BOUND) -> CoefficientPath:
    """Coefficient path averaged over the lagged window of width eps.

    Averaging preserves rate sign and entry bounds but not matrix
    invertibility, so the averaged volatility is re-validated.
    """
    k = window_cells(path.grid, eps)
    r, a, sigma = epsilon_average_block(
        path.r[None], path.a[None], path.sigma[None], k
    )
    out = CoefficientPath(grid=path.grid, r=r[0], a=a[0], sigma=sigma[0])
    out.validate(condition_bound)
    return out


def average_strategy_trace(trace: StrategyTrace, eps: float) -> StrategyTrace:
    """The same lagged window average applied to a proportion trace."""
    k = window_cells(trace.grid, eps)
    pi = lagged_window_mean(trace.proportions[None], k)[0]
    return StrategyTrace(grid=trace.grid, proportions=pi)


def freeze_on_grid(path: CoefficientPath, knots) -> CoefficientPath:
    """Hold coefficients at their most recent knot value.

    `knots` are times that must lie on grid nodes, start at 0 and end at
    the horizon.  Node i receives the value at the largest knot <= t_i;
    freezing on the full grid is the identity.
    """
    grid = path.grid
    knots = np.asarray(sorted(float(t) for t in knots))
    if knots.size < 2 or knots[0] != 0.0 or abs(knots[-1] - grid.horizon) > 1e-12:
        raise ConfigError("knots must start at 0 and end at the horizon")
    idx = knots / grid.dt
    if np.abs(idx - np.round(idx)).max() > 1e-9:
        raise ConfigError("knots must lie on grid nodes")
    knot_nodes = np.round(idx).astype(int)
    node_source = knot_nodes[
        np.searchsorted(knot_nodes, np.arange(grid.steps + 1), side="right") - 1
    ]
    return CoefficientPath(
        grid=grid,
        r=path.r[node_source],
        a=path.a[node_source],
        sigma=path.sigma[node_source],
    )


class AveragedCoefficientModel(CoefficientModel):
    """Wraps a model so every sampled path is eps-averaged before use.

    Sampling consumes exactly the base model's seed streams, so raw and
    averaged runs with one master seed are driven by identical draws.
    The averaged volatility is re-validated node by node (averages of
    invertible matrices need not be invertible).
    """

    kind = "averaged"

    def __init__(self, base: CoefficientModel, eps: float):
        if not np.isfinite(eps) or eps <= 0:
            raise ConfigError(f"eps must be positive, got {eps}")
        # deliberately not calling super().__init__: no finite state set
        self.base = base
        self.eps = float(eps)
        self.condition_bound = base.condition_bound

    @property
    def states(self):
        raise ConfigError("an averaged model has no finite state set")

    @property
    def n_assets(self) -> int:
        return self.base.n_assets

    @property
    def entry_bound(self) -> float:
        return self.base.entry_bound  # averaging never increases sup-norms

    @property
    def is_deterministic(self) -> bool:
        return self.base.is_deterministic

    def draws_per_path(self, grid):
        return self.base.draws_per_path(grid)

    def sample_block(self, grid, master_seed, start, count):
        k = window_cells(grid, self.eps)
        r, a, sigma = self.base.sample_block(grid, master_seed, start, count)
        r, a, sigma = epsilon_average_block(r, a, sigma, k)
        try:
            validate_sigma_block(sigma, self.condition_bound)
        except InvariantViolationError as exc:
            raise InvariantViolationError(
                f"averaged volatility failed validation (eps={self.eps:g}): {exc}"
            ) from exc
        return r, a, sigma


def averaged_market_model(model: CoefficientModel, eps: float) -> AveragedCoefficientModel:
    """Model whose sampled paths are the eps-averages of the base model's."""
    return AveragedCoefficientModel(model, eps)
