"""Closed-form Gaussian ground truth for deterministic configurations.

With deterministic-in-time coefficients and allocations, terminal log
discounted wealth is Gaussian with moments that are exact sums over
grid cells.  Expected utilities under that Gaussian law are available
in closed form for the log and negative-power criteria, and by
high-accuracy quadrature otherwise.  These values anchor every Monte
Carlo acceptance check.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, QuadratureError
from .utility import UtilitySpec, eval_utility
from .wealth import StrategyTrace
from .market import CoefficientPath

#: Integration window in standard deviations around the mean.
QUADRATURE_SPAN = 10.0
#: Gauss-Legendre points per panel.
_GL_ORDER = 10


def gaussian_log_wealth_moments(coeffs: CoefficientPath, trace: StrategyTrace, x0: float):
    """(mean, variance) of terminal log discounted wealth.

    Exact for step coefficients:
      mean = log x0 + sum_i (pi_i' a~_i - 0.5 |pi_i' sigma_i|^2) dt
      var  = sum_i |pi_i' sigma_i|^2 dt
    Inputs must be deterministic (path-independent); that is a caller
    contract, only shapes and the shared grid are verified here.
    """
    if x0 <= 0:
        raise ConfigError(f"initial wealth must be positive, got {x0}")
    if coeffs.grid != trace.grid:
        raise ConfigError("coefficients and trace must share one grid")
    M = coeffs.grid.steps
    if trace.proportions.shape != (M, coeffs.n_assets):
        raise ConfigError(
            f"trace shape {trace.proportions.shape} does not match grid/assets"
        )
    dt = coeffs.grid.dt
    pi = trace.proportions
    a_tilde = coeffs.a_tilde()[:M]
    vol_vec = np.einsum("ik,ikj->ij", pi, coeffs.sigma[:M])
    quad = (vol_vec ** 2).sum(axis=1)
    drift = (pi * a_tilde).sum(axis=1)
    mean = float(np.log(x0) + ((drift - 0.5 * quad) * dt).sum())
    var = float((quad * dt).sum())
    return mean, var


def expected_utility_gaussian(spec: UtilitySpec, mean: float, variance: float,
                              panels: int = 2048, return_error: bool = False):
    """E U(e^Y) for Y ~ Normal(mean, variance).

    Closed forms: log utility -> mean; U = -x^(-delta) -> the lognormal
    inverse moment -exp(-delta*mean + 0.5*delta^2*variance).  Otherwise a
    composite Gauss-Legendre rule on the Y axis over mean +- 10*sqrt(var),
    which avoids the x -> 0 singularities entirely.  The reported error
    bound combines the panel-halving difference with a Gaussian tail term.
    Raises QuadratureError when halving the panel count moves the result
    by more than 1e-6.
    """
    if variance < 0 or not np.isfinite(variance) or not np.isfinite(mean):
        raise ConfigError(f"invalid Gaussian moments ({mean}, {variance})")

    if spec.analytic_form == "log":
        return (mean, 0.0) if return_error else mean
    if spec.analytic_form == "neg-power":
        delta = spec.analytic_delta
        value = -float(np.exp(-delta * mean + 0.5 * delta ** 2 * variance))
        return (value, 0.0) if return_error else value

    if variance == 0.0:
        value = float(eval_utility(spec, np.exp(mean)))
        return (value, 0.0) if return_error else value

    coarse = _gauss_quadrature(spec, mean, variance, max(panels // 2, 1))
    fine = _gauss_quadrature(spec, mean, variance, panels)
    err = abs(fine - coarse) + _tail_bound(spec, mean, variance)
    if err > 1e-6:
        raise QuadratureError(
            f"quadrature for '{spec.label}' did not converge "
            f"(panel-halving difference {err:.3g})"
        )
    return (fine, err) if return_error else fine


def _gauss_quadrature(spec, mean, variance, panels):
    sd = np.sqrt(variance)
    lo, hi = mean - QUADRATURE_SPAN * sd, mean + QUADRATURE_SPAN * sd
    nodes, weights = np.polynomial.legendre.leggauss(_GL_ORDER)
    edges = np.linspace(lo, hi, panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    y = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    density = np.exp(-0.5 * ((y - mean) / sd) ** 2) / (sd * np.sqrt(2 * np.pi))
    values = eval_utility(spec, np.exp(y))
    return float((values * density * w).sum())


def _tail_bound(spec, mean, variance):
    # Admissible specs grow at most like exp(c|Y|) on the log-wealth axis,
    # so the mass beyond 10 standard deviations is negligible; bound it by
    # the endpoint magnitudes times the Gaussian tail.
    sd = np.sqrt(variance)
    tail_mass = 7.62e-24  # Phi(-10)
    endpoints = np.exp(np.array([mean - QUADRATURE_SPAN * sd, mean + QUADRATURE_SPAN * sd]))
    magnitude = float(np.max(np.abs(eval_utility(spec, endpoints)))) + 1.0
    return 2.0 * magnitude * tail_mass
