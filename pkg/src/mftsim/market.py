"""Random market coefficients and the Brownian driver.

The market carries a short rate r(t), appreciation rates a(t) and a
volatility matrix sigma(t), all piecewise constant on the cells of a
uniform time grid.  Coefficient randomness is always drawn from seed
streams disjoint from the Brownian streams, so the coefficient process
is independent of the driving noise by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import ConfigError, InvariantViolationError
from .kernels import regime_chain
from .seeding import AUX_STREAM, BROWNIAN_STREAM, COEFFICIENT_STREAM, child_rng

#: |theta| below this is treated as a vanishing risk premium.  The
#: mathematical dichotomy is exact zero; numerically a threshold is needed.
THETA_TOLERANCE = 1e-12

#: Default ceiling on cond(sigma) for any usable volatility matrix.
DEFAULT_CONDITION_BOUND = 1e4


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, horizon] with `steps` cells.

    Node i sits at i * horizon / steps; coefficient and allocation values
    attached to node i apply on the cell [t_i, t_{i+1}).
    """

    horizon: float
    steps: int

    def __post_init__(self):
        if not np.isfinite(self.horizon) or self.horizon <= 0:
            raise ConfigError(f"grid horizon must be positive, got {self.horizon}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigError(f"grid steps must be an integer >= 1, got {self.steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)


@dataclass(frozen=True)
class MarketState:
    """One joint value of (r, a, sigma)."""

    r: float
    a: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "sigma", sigma)
        if a.ndim != 1:
            raise ConfigError("state field 'a' must be a vector")
        if sigma.shape != (a.size, a.size):
            raise ConfigError(
                f"state field 'sigma' must be {a.size}x{a.size}, got {sigma.shape}"
            )
        if not np.isfinite(self.r) or not np.isfinite(a).all() or not np.isfinite(sigma).all():
            raise ConfigError("state fields must be finite")
        if self.r < 0:
            raise ConfigError(f"state field 'r' must be nonnegative, got {self.r}")

    @property
    def n_assets(self) -> int:
        return self.a.size


@dataclass(frozen=True)
class CoefficientPath:
    """Discretized trajectory of (r, a, sigma) on a grid.

    r: (M+1,), a: (M+1, n), sigma: (M+1, n, n); values are left-continuous
    step functions (node i value holds on cell i).
    """

    grid: TimeGrid
    r: np.ndarray
    a: np.ndarray
    sigma: np.ndarray

    @property
    def n_assets(self) -> int:
        return self.a.shape[1]

    def a_tilde(self) -> np.ndarray:
        """Excess returns a - r*1 at every node."""
        return self.a - self.r[:, None]

    def validate(self, condition_bound: float = DEFAULT_CONDITION_BOUND) -> None:
        """Check rate sign, finiteness and volatility conditioning node by node."""
        nodes = self.grid.steps + 1
        if self.r.shape != (nodes,) or self.a.shape[0] != nodes or self.sigma.shape[0] != nodes:
            raise InvariantViolationError("coefficient arrays do not match the grid")
        if not (np.isfinite(self.r).all() and np.isfinite(self.a).all() and np.isfinite(self.sigma).all()):
            raise InvariantViolationError("coefficient path contains non-finite values")
        bad = np.flatnonzero(self.r < 0)
        if bad.size:
            raise InvariantViolationError(f"negative short rate at node {bad[0]}")
        validate_sigma_block(self.sigma, condition_bound)


@dataclass(frozen=True)
class BrownianPath:
    """Increments of an n-dimensional Wiener process on a grid.

    increments: (M, n), row i is w(t_{i+1}) - w(t_i) ~ N(0, dt*I).
    """

    grid: TimeGrid
    increments: np.ndarray

    @property
    def n_dims(self) -> int:
        return self.increments.shape[1]


def validate_sigma_block(sigma: np.ndarray, condition_bound: float) -> None:
    """Raise if any matrix in the (..., n, n) stack is singular or too ill-conditioned.

    Uses a cheap Frobenius bound first and falls back to exact 2-norm
    condition numbers only for flagged entries.
    """
    flat = sigma.reshape(-1, sigma.shape[-2], sigma.shape[-1])
    try:
        inv = np.linalg.inv(flat)
    except np.linalg.LinAlgError:
        for idx in range(flat.shape[0]):
            if abs(np.linalg.det(flat[idx])) == 0.0:
                raise InvariantViolationError(f"singular volatility matrix at node {idx}")
        raise InvariantViolationError("singular volatility matrix")
    cond_f = np.sqrt((flat ** 2).sum(axis=(1, 2)) * (inv ** 2).sum(axis=(1, 2)))
    flagged = np.flatnonzero(~(cond_f <= condition_bound))
    for idx in flagged:
        exact = np.linalg.cond(flat[idx])
        if not exact <= condition_bound:
            raise InvariantViolationError(
                f"volatility matrix at node {idx} has condition number {exact:.3g} "
                f"> bound {condition_bound:.3g}"
            )


def excess_returns(a: np.ndarray, r: float) -> np.ndarray:
    """a - r*1 componentwise."""
    a = np.asarray(a, dtype=float)
    return a - r


def risk_premium(sigma: np.ndarray, a_tilde: np.ndarray) -> np.ndarray:
    """theta = sigma^{-1} a~, via a linear solve."""
    sigma = np.asarray(sigma, dtype=float)
    a_tilde = np.asarray(a_tilde, dtype=float)
    if sigma.shape != (a_tilde.size, a_tilde.size):
        raise InvariantViolationError(
            f"sigma shape {sigma.shape} does not match excess returns of size {a_tilde.size}"
        )
    try:
        theta = np.linalg.solve(sigma, a_tilde)
    except np.linalg.LinAlgError as exc:
        raise InvariantViolationError("singular volatility matrix") from exc
    if not np.isfinite(theta).all():
        raise InvariantViolationError("risk premium is non-finite")
    return theta


def risk_premium_block(sigma: np.ndarray, a_tilde: np.ndarray) -> np.ndarray:
    """Batched theta for stacked (..., n, n) sigma and (..., n) excess returns."""
    try:
        return np.linalg.solve(sigma, a_tilde[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise InvariantViolationError("singular volatility matrix in block") from exc


# ---------------------------------------------------------------------------
# coefficient models
# ---------------------------------------------------------------------------


class CoefficientModel:
    """Samples coefficient paths from a finite set of market states.

    Subclasses choose the per-node state index process.  All randomness is
    consumed from the per-path coefficient seed streams; models with a
    single state consume no draws at all.
    """

    kind = "abstract"

    def __init__(self, states, condition_bound: float = DEFAULT_CONDITION_BOUND):
        if not states:
            raise ConfigError("model needs at least one market state")
        states = tuple(
            s if isinstance(s, MarketState) else MarketState(**s) for s in states
        )
        n = states[0].n_assets
        if any(s.n_assets != n for s in states):
            raise ConfigError("all market states must have the same number of assets")
        self.states = states
        self.condition_bound = float(condition_bound)
        self._r_states = np.array([s.r for s in states])
        self._a_states = np.stack([s.a for s in states])
        self._sigma_states = np.stack([s.sigma for s in states])
        validate_sigma_block(self._sigma_states, self.condition_bound)

    @property
    def n_assets(self) -> int:
        return self._a_states.shape[1]

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def entry_bound(self) -> float:
        """Declared bound on |r|, |a_i| and |sigma_ij| over all states."""
        return max(
            float(np.abs(self._r_states).max()),
            float(np.abs(self._a_states).max()),
            float(np.abs(self._sigma_states).max()),
        )

    @property
    def is_deterministic(self) -> bool:
        return self.n_states == 1

    def draws_per_path(self, grid: TimeGrid) -> int:
        """Number of uniforms one path consumes."""
        raise NotImplementedError

    def indices_from_uniforms(self, grid: TimeGrid, u: np.ndarray) -> np.ndarray:
        """Map (B, draws_per_path) uniforms to (B, M+1) state indices."""
        raise NotImplementedError

    def sample_block(self, grid, master_seed: int, start: int, count: int):
        """Coefficient arrays for paths [start, start+count) of a master seed.

        Returns (r, a, sigma) with leading axes (count, M+1).  Path k uses
        the (coefficient, start+k) child stream, independent of how paths
        are grouped into blocks.
        """
        nodes = grid.steps + 1
        ndraws = self.draws_per_path(grid)
        if ndraws == 0:
            idx = np.zeros((count, nodes), dtype=np.int64)
        else:
            u = np.empty((count, ndraws))
            for k in range(count):
                rng = child_rng(master_seed, COEFFICIENT_STREAM, start + k)
                u[k] = rng.random(ndraws)
            idx = self.indices_from_uniforms(grid, u)
        return (
            self._r_states[idx],
            self._a_states[idx],
            self._sigma_states[idx],
        )


class ConstantRandomModel(CoefficientModel):
    """One state drawn at t=0 and held for the whole horizon."""

    kind = "constant-random"

    def __init__(self, states, probs=None, condition_bound=DEFAULT_CONDITION_BOUND):
        super().__init__(states, condition_bound)
        self.probs = _normalize_probs(probs, self.n_states)
        self._cum = np.cumsum(self.probs)

    def draws_per_path(self, grid):
        return 0 if self.is_deterministic else 1

    def indices_from_uniforms(self, grid, u):
        first = np.minimum(
            (u[:, 0][:, None] >= self._cum[None, :]).sum(axis=1), self.n_states - 1
        )
        return np.repeat(first[:, None], grid.steps + 1, axis=1)


class RegimeSwitchingModel(CoefficientModel):
    """Continuous-time Markov chain over market states, sampled on the grid.

    `rates[i][j]` (i != j) is the jump intensity from state i to state j
    per year; diagonal entries are ignored.  The per-step transition
    matrix is the exact matrix exponential of the generator over one cell.
    """

    kind = "regime-switching"

    def __init__(self, states, rates, initial=None, condition_bound=DEFAULT_CONDITION_BOUND):
        super().__init__(states, condition_bound)
        S = self.n_states
        rates = np.asarray(rates, dtype=float)
        if rates.shape != (S, S):
            raise ConfigError(f"rates must be {S}x{S}, got {rates.shape}")
        off = rates.copy()
        np.fill_diagonal(off, 0.0)
        if (off < 0).any() or not np.isfinite(off).all():
            raise ConfigError("off-diagonal transition rates must be finite and >= 0")
        generator = off.copy()
        np.fill_diagonal(generator, -off.sum(axis=1))
        self.generator = generator
        if initial is None:
            self.initial = self.stationary_distribution()
        else:
            self.initial = _normalize_probs(initial, S)
        self._cum_init = np.cumsum(self.initial)

    def stationary_distribution(self) -> np.ndarray:
        """Solve pi Q = 0, sum(pi) = 1."""
        S = self.n_states
        system = np.vstack([self.generator.T, np.ones(S)])
        rhs = np.zeros(S + 1)
        rhs[-1] = 1.0
        pi, *_ = np.linalg.lstsq(system, rhs, rcond=None)
        pi = np.clip(pi, 0.0, None)
        return pi / pi.sum()

    def step_matrix(self, grid: TimeGrid) -> np.ndarray:
        return expm(self.generator * grid.dt)

    def draws_per_path(self, grid):
        return 0 if self.is_deterministic else grid.steps + 1

    def indices_from_uniforms(self, grid, u):
        init = np.minimum(
            (u[:, 0][:, None] >= self._cum_init[None, :]).sum(axis=1),
            self.n_states - 1,
        ).astype(np.int64)
        cum = np.cumsum(self.step_matrix(grid), axis=1)
        return regime_chain(init, np.ascontiguousarray(u[:, 1:]), cum)


class PiecewiseResampledModel(CoefficientModel):
    """Independent state redraw every `resample_steps` grid cells."""

    kind = "piecewise-resampled"

    def __init__(self, states, probs=None, resample_steps: int = 1,
                 condition_bound=DEFAULT_CONDITION_BOUND):
        super().__init__(states, condition_bound)
        if int(resample_steps) != resample_steps or resample_steps < 1:
            raise ConfigError(f"resample_steps must be an integer >= 1, got {resample_steps}")
        self.resample_steps = int(resample_steps)
        self.probs = _normalize_probs(probs, self.n_states)
        self._cum = np.cumsum(self.probs)

    def _n_knots(self, grid):
        return grid.steps // self.resample_steps + 1

    def draws_per_path(self, grid):
        return 0 if self.is_deterministic else self._n_knots(grid)

    def indices_from_uniforms(self, grid, u):
        knot_idx = np.minimum(
            (u[:, :, None] >= self._cum[None, None, :]).sum(axis=2), self.n_states - 1
        )
        node_to_knot = np.arange(grid.steps + 1) // self.resample_steps
        node_to_knot = np.minimum(node_to_knot, self._n_knots(grid) - 1)
        return knot_idx[:, node_to_knot]


def constant_market(r: float, a, sigma,
                    condition_bound: float = DEFAULT_CONDITION_BOUND) -> ConstantRandomModel:
    """Deterministic market with a single state."""
    return ConstantRandomModel([MarketState(r=r, a=a, sigma=sigma)],
                               condition_bound=condition_bound)


def _normalize_probs(probs, n: int) -> np.ndarray:
    if probs is None:
        return np.full(n, 1.0 / n)
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (n,):
        raise ConfigError(f"probabilities must have length {n}")
    if (probs < 0).any() or not np.isfinite(probs).all() or probs.sum() <= 0:
        raise ConfigError("probabilities must be nonnegative with a positive sum")
    return probs / probs.sum()


# ---------------------------------------------------------------------------
# sampling operations
# ---------------------------------------------------------------------------


def sample_coefficients(model: CoefficientModel, grid: TimeGrid, seed: int) -> CoefficientPath:
    """One coefficient path, deterministic in (model, grid, seed).

    Identical to path 0 of a block drawn with the same master seed.
    """
    r, a, sigma = model.sample_block(grid, int(seed), 0, 1)
    return CoefficientPath(grid=grid, r=r[0], a=a[0], sigma=sigma[0])


def sample_brownian(grid: TimeGrid, seed: int, n: int) -> BrownianPath:
    """One Brownian increment path, deterministic in (grid, seed, n)."""
    if n < 1:
        raise ConfigError(f"Brownian dimension must be >= 1, got {n}")
    dw = sample_brownian_block(grid, n, int(seed), 0, 1)
    return BrownianPath(grid=grid, increments=dw[0])


def sample_brownian_block(grid: TimeGrid, n: int, master_seed: int,
                          start: int, count: int) -> np.ndarray:
    """(count, M, n) increments; path k uses the (brownian, start+k) stream."""
    scale = np.sqrt(grid.dt)
    out = np.empty((count, grid.steps, n))
    for k in range(count):
        rng = child_rng(master_seed, BROWNIAN_STREAM, start + k)
        out[k] = rng.standard_normal((grid.steps, n))
    out *= scale
    return out


def sample_aux_block(grid: TimeGrid, master_seed: int, start: int, count: int) -> np.ndarray:
    """(count, M) standard normals for strategies with internal randomness."""
    out = np.empty((count, grid.steps))
    for k in range(count):
        rng = child_rng(master_seed, AUX_STREAM, start + k)
        out[k] = rng.standard_normal(grid.steps)
    return out
