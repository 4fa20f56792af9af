"""Admissible strategies and the drift-maximizing mutual-fund projection.

A strategy is admissible when its proportion vector is uniformly bounded
and vanishes wherever the risk premium theta = sigma^{-1} a~ vanishes.
The projection replaces an arbitrary allocation pi by the allocation on
the fund direction theta' sigma^{-1} with the same instantaneous
volatility magnitude and the largest achievable drift:

    pi_hat' = nu * theta' sigma^{-1},   nu = |pi' sigma| / |theta| >= 0.

By Cauchy-Schwarz this never lowers the drift pi' a~ and never changes
|pi' sigma|, so the projected wealth is the base wealth plus a
nonnegative accumulated drift gap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvariantViolationError
from .kernels import wealth_step
from .market import THETA_TOLERANCE, CoefficientModel, risk_premium
from .wealth import CompanionView, simulate_log_wealth


class Strategy:
    """Evaluable portfolio rule on a block view.

    Subclasses implement ``proportions(i, view, state) -> (B, n)``.
    ``bound`` is the declared cap on |pi| (Euclidean); None means the cap
    is structural (e.g. scalar-rule strategies inherit boundedness from
    the market's volatility bounds) and the engine only checks
    finiteness and the zero-premium constraint.
    """

    label = "strategy"
    bound: float | None = None
    uses_aux_noise = False

    def start(self, view):
        """Per-run state; called once before node 0."""
        return None

    def proportions(self, i, view, state):
        raise NotImplementedError


class ZeroStrategy(Strategy):
    """Everything in the bond."""

    label = "zero"
    bound = 0.0

    def proportions(self, i, view, state):
        return np.zeros((view.block_size, view.n_assets))


class ConstantMixStrategy(Strategy):
    """Fixed proportions, masked where the risk premium vanishes."""

    def __init__(self, weights, label=None):
        self.weights = np.atleast_1d(np.asarray(weights, dtype=float))
        self.bound = float(np.sqrt((self.weights ** 2).sum()))
        self.label = label or f"constant-mix({','.join(f'{w:g}' for w in self.weights)})"

    def proportions(self, i, view, state):
        pi = np.tile(self.weights, (view.block_size, 1))
        pi[~view.theta_active(i)] = 0.0
        return pi


class ContrarianStrategy(Strategy):
    """Leans against accumulated log performance.

    pi_i = (base + swing * tanh(-gain * (Y_i - Y_0))) * direction, so the
    stock share shrinks after gains and grows after losses.  Bounded by
    (|base| + swing) * |direction|.
    """

    def __init__(self, direction, base=0.5, swing=0.4, gain=4.0, label=None):
        self.direction = np.atleast_1d(np.asarray(direction, dtype=float))
        self.base = float(base)
        self.swing = float(swing)
        self.gain = float(gain)
        norm = float(np.sqrt((self.direction ** 2).sum()))
        self.bound = (abs(self.base) + abs(self.swing)) * norm
        self.label = label or "contrarian"

    def proportions(self, i, view, state):
        drawdown = view.log_wealth(i) - view.log_wealth(0)
        scale = self.base + self.swing * np.tanh(-self.gain * drawdown)
        pi = scale[:, None] * self.direction[None, :]
        pi[~view.theta_active(i)] = 0.0
        return pi


class RandomizedStrategy(Strategy):
    """Bounded allocation driven by its own noise stream.

    The auxiliary draws come from the per-path aux seed streams, so they
    are independent of future Brownian increments by construction.
    """

    uses_aux_noise = True

    def __init__(self, direction, scale=0.8, label=None):
        self.direction = np.atleast_1d(np.asarray(direction, dtype=float))
        self.scale = float(scale)
        self.bound = abs(self.scale) * float(np.sqrt((self.direction ** 2).sum()))
        self.label = label or "randomized"

    def proportions(self, i, view, state):
        z = view.aux_noise(i)
        pi = (self.scale * np.tanh(z))[:, None] * self.direction[None, :]
        pi[~view.theta_active(i)] = 0.0
        return pi


class TraceStrategy(Strategy):
    """Deterministic-in-time strategy given by a per-cell proportion table."""

    def __init__(self, proportions, label=None):
        self.table = np.atleast_2d(np.asarray(proportions, dtype=float))
        self.bound = float(np.sqrt((self.table ** 2).sum(axis=1)).max())
        self.label = label or "trace"

    def proportions(self, i, view, state):
        if i >= self.table.shape[0]:
            raise InvariantViolationError(
                f"trace strategy has {self.table.shape[0]} rows but node {i} was requested"
            )
        pi = np.tile(self.table[i], (view.block_size, 1))
        pi[~view.theta_active(i)] = 0.0
        return pi


class MutualFundStrategy(Strategy):
    """Scalar rule nu applied to the fund direction theta' sigma^{-1}.

    ``scalar(i, view, state)`` returns the per-path nu; the induced
    allocation is nu * (sigma')^{-1} theta, zero wherever theta vanishes.
    ``nu_bound`` is the declared cap on |nu|.
    """

    nu_bound: float | None = None

    def scalar(self, i, view, state):
        raise NotImplementedError

    def proportions(self, i, view, state):
        nu = np.asarray(self.scalar(i, view, state), dtype=float)
        return nu[:, None] * view.fund_direction(i)


class ConstantNuStrategy(MutualFundStrategy):
    def __init__(self, nu: float, label=None):
        self.nu = float(nu)
        self.nu_bound = abs(self.nu)
        self.label = label or f"mutual-fund(nu={self.nu:g})"

    def scalar(self, i, view, state):
        return np.full(view.block_size, self.nu)


def constant_nu_strategy(nu: float) -> ConstantNuStrategy:
    """Member of the one-parameter mutual-fund family."""
    return ConstantNuStrategy(nu)


def log_optimal_strategy() -> ConstantNuStrategy:
    """nu = 1: the growth-optimal fund a~'(sigma sigma')^{-1}."""
    return ConstantNuStrategy(1.0, label="log-optimal")


# ---------------------------------------------------------------------------
# projection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProjectionCertificate:
    """Audit record of one projection.

    volatility and projected_volatility are |pi' sigma| and |pi_hat' sigma|;
    drift_gap is xi = pi_hat' a~ - pi' a~ (always >= 0 up to roundoff);
    nu is the scalar allocation on the fund direction.
    """

    node: int
    volatility: float
    projected_volatility: float
    drift_gap: float
    nu: float


def project_to_mft_batch(pi, sigma, a_tilde):
    """Vectorized projection for stacked inputs.

    pi, a_tilde: (B, n); sigma: (B, n, n).
    Returns (pi_hat, nu, vol, vol_hat, xi), each (B, ...) shaped.
    """
    theta = np.linalg.solve(sigma, a_tilde[..., None])[..., 0]
    theta_norm = np.sqrt((theta ** 2).sum(axis=-1))
    vol_vec = np.einsum("bk,bkj->bj", pi, sigma)
    vol = np.sqrt((vol_vec ** 2).sum(axis=-1))
    active = theta_norm >= THETA_TOLERANCE
    safe_norm = np.where(active, theta_norm, 1.0)
    nu = np.where(active, vol / safe_norm, 0.0)
    direction = np.linalg.solve(np.swapaxes(sigma, -1, -2), theta[..., None])[..., 0]
    pi_hat = nu[..., None] * direction
    pi_hat[~active] = 0.0
    hat_vec = np.einsum("bk,bkj->bj", pi_hat, sigma)
    vol_hat = np.sqrt((hat_vec ** 2).sum(axis=-1))
    xi = (pi_hat * a_tilde).sum(axis=-1) - (pi * a_tilde).sum(axis=-1)
    return pi_hat, nu, vol, vol_hat, xi


def project_to_mft(pi, sigma, a_tilde, node: int = -1):
    """Project one allocation onto the mutual-fund ray.

    Returns (pi_hat, ProjectionCertificate).  If theta = 0 the projected
    allocation is zero.  Raises on singular sigma.
    """
    pi = np.atleast_1d(np.asarray(pi, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    a_tilde = np.atleast_1d(np.asarray(a_tilde, dtype=float))
    risk_premium(sigma, a_tilde)  # raises on singular sigma
    pi_hat, nu, vol, vol_hat, xi = project_to_mft_batch(
        pi[None], sigma[None], a_tilde[None]
    )
    cert = ProjectionCertificate(
        node=node,
        volatility=float(vol[0]),
        projected_volatility=float(vol_hat[0]),
        drift_gap=float(xi[0]),
        nu=float(nu[0]),
    )
    return pi_hat[0], cert


def mft_bound_constant(sup_sigma_norm: float, sup_sigma_inv_norm: float) -> float:
    """C = sup||sigma|| * sup||sigma^{-1}||, the projection's blow-up cap.

    |pi_hat| = nu |theta' sigma^{-1}| <= |pi' sigma| * ||sigma^{-1}||
             <= |pi| * ||sigma|| * ||sigma^{-1}||.
    """
    if not (np.isfinite(sup_sigma_norm) and np.isfinite(sup_sigma_inv_norm)):
        raise InvariantViolationError("operator-norm bounds must be finite")
    return float(sup_sigma_norm * sup_sigma_inv_norm)


def sigma_operator_bounds(model: CoefficientModel):
    """(sup||sigma||_2, sup||sigma^{-1}||_2) over the model's states."""
    sup_s = 0.0
    sup_inv = 0.0
    for state in model.states:
        svals = np.linalg.svd(state.sigma, compute_uv=False)
        sup_s = max(sup_s, float(svals[0]))
        sup_inv = max(sup_inv, float(1.0 / svals[-1]))
    return sup_s, sup_inv


class ProjectedStrategy(MutualFundStrategy):
    """Node-by-node projection of a base strategy.

    The base strategy is evaluated on a companion wealth state advanced
    with the base's own allocations, so the projected rule depends only
    on observables plus the base trajectory it shadows.  The companion
    consumes the same coefficients and Brownian increments as the actual
    simulation.
    """

    def __init__(self, base: Strategy, collect_certificates: bool = False):
        self.base = base
        self.label = f"mft({base.label})"
        self.collect = collect_certificates
        self.uses_aux_noise = base.uses_aux_noise

    def start(self, view):
        B, M = view.block_size, view.grid.steps
        companion = np.empty((B, M + 1))
        companion[:, 0] = view.log_wealth(0)
        state = {
            "companion": companion,
            "companion_view": None,
            "base_state": None,
            "prev_pi": None,
            "next": 0,
            "cached": None,
            "certificates": [] if self.collect else None,
        }
        cview = CompanionView(view, companion)
        state["companion_view"] = cview
        state["base_state"] = self.base.start(cview)
        return state

    def proportions(self, i, view, state):
        if i == state["next"] - 1 and state["cached"] is not None:
            return state["cached"]  # re-evaluation of the current node
        if i != state["next"]:
            raise InvariantViolationError(
                f"projected strategy evaluated out of order (node {i}, expected {state['next']})"
            )
        companion = state["companion"]
        if i > 0:
            prev = i - 1
            dw_prev = view.brownian_history(i)[:, prev]
            companion[:, i] = companion[:, prev] + wealth_step(
                state["prev_pi"],
                view.excess_return(prev),
                view.volatility(prev),
                dw_prev,
                view.dt,
            )
        base_pi = np.asarray(
            self.base.proportions(i, state["companion_view"], state["base_state"]),
            dtype=float,
        )
        pi_hat, nu, vol, vol_hat, xi = project_to_mft_batch(
            base_pi, view.volatility(i), view.excess_return(i)
        )
        if state["certificates"] is not None:
            state["certificates"].append((i, vol, vol_hat, xi, nu))
        state["prev_pi"] = base_pi
        state["cached"] = pi_hat
        state["next"] = i + 1
        return pi_hat

    def scalar(self, i, view, state):  # pragma: no cover - proportions is direct
        raise NotImplementedError("projected strategies compute proportions directly")


def lift_projection(strategy: Strategy, collect_certificates: bool = False) -> ProjectedStrategy:
    """Strategy that shadows `strategy` and projects it at every node."""
    return ProjectedStrategy(strategy, collect_certificates=collect_certificates)


def collect_certificates(base: Strategy, coeffs, brownian, x0: float):
    """Single-path projected simulation with its certificate stream.

    Returns (WealthPath, StrategyTrace of the projected rule,
    list of ProjectionCertificate per node).
    """
    lifted = ProjectedStrategy(base, collect_certificates=True)
    holder = {}
    original_start = lifted.start

    def capturing_start(view):
        state = original_start(view)
        holder["state"] = state
        return state

    lifted.start = capturing_start
    wealth, trace = simulate_log_wealth(coeffs, brownian, lifted, x0)
    certs = [
        ProjectionCertificate(
            node=i,
            volatility=float(vol[0]),
            projected_volatility=float(vol_hat[0]),
            drift_gap=float(xi[0]),
            nu=float(nu[0]),
        )
        for (i, vol, vol_hat, xi, nu) in holder["state"]["certificates"]
    ]
    return wealth, trace, certs


def certificate_table(certificates) -> str:
    """Delimited text export of a certificate stream."""
    lines = ["node,volatility,projected_volatility,drift_gap,nu"]
    for c in certificates:
        lines.append(
            f"{c.node},{c.volatility:.17g},{c.projected_volatility:.17g},"
            f"{c.drift_gap:.17g},{c.nu:.17g}"
        )
    return "\n".join(lines) + "\n"
