"""Utility functions of the admissible family and their diagnostics.

An admissible criterion decomposes as

    U(x) = U0(x) - sum_k Uk(x) * x^(-delta_k) + Ulog(x) * log(x)

with U0 bounded below, each Uk (k >= 1) nonnegative and bounded, Ulog
nonnegative and bounded on (0, 1), and the assembled U nondecreasing.
Monotonicity and the bounds are verified on a diagnostic grid rather
than symbolically; a spec must pass ``check_admissible`` before it is
used in Monte Carlo estimation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import ConfigError

DIAGNOSTIC_GRID_LO = 1e-6
DIAGNOSTIC_GRID_HI = 1e6
DIAGNOSTIC_GRID_POINTS = 10_000


def _zero(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def _one(x):
    return np.ones_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class UtilitySpec:
    """Assembled utility with declared bound metadata.

    power_terms are (Uk, delta_k) pairs with delta_k > 0.  The declared
    bounds mirror the admissibility hypotheses; ``check_admissible``
    verifies them on a grid.  ``analytic_form`` marks specs with a
    closed-form lognormal expectation ("log", "neg-power").
    """

    label: str
    base_term: Callable = _zero
    power_terms: tuple = ()
    log_term: Callable = _zero
    base_lower_bound: float = 0.0
    power_upper_bounds: tuple = ()
    log_term_unit_bound: float = 0.0
    analytic_form: str | None = None
    analytic_delta: float | None = None

    def __post_init__(self):
        for _, delta in self.power_terms:
            if not (np.isfinite(delta) and delta > 0):
                raise ConfigError(f"power-term exponent must be positive, got {delta}")
        if len(self.power_upper_bounds) not in (0, len(self.power_terms)):
            raise ConfigError("one declared bound per power term is required")


def eval_utility(spec: UtilitySpec, x):
    """Assembled utility value at x > 0 (scalar or array)."""
    arr = np.asarray(x, dtype=float)
    if (arr <= 0).any():
        raise ConfigError("utility is defined on positive wealth only")
    out = np.asarray(spec.base_term(arr), dtype=float).copy()
    for fn, delta in spec.power_terms:
        out = out - np.asarray(fn(arr), dtype=float) * arr ** (-delta)
    out = out + np.asarray(spec.log_term(arr), dtype=float) * np.log(arr)
    if np.isscalar(x):
        return float(out)
    return out


def cap_utility(spec: UtilitySpec, cap: float) -> UtilitySpec:
    """Replace U0 and Ulog by their minimum with `cap`.

    The result satisfies the stronger hypothesis that every component is
    bounded; values never increase and converge to the original as the
    cap grows.
    """
    if not (np.isfinite(cap) and cap > 0):
        raise ConfigError(f"cap must be positive and finite, got {cap}")
    base, log_fn = spec.base_term, spec.log_term

    def capped_base(x, _f=base, _c=cap):
        return np.minimum(_f(x), _c)

    def capped_log(x, _f=log_fn, _c=cap):
        return np.minimum(_f(x), _c)

    return replace(
        spec,
        label=f"{spec.label}|cap={cap:g}",
        base_term=capped_base,
        log_term=capped_log,
        log_term_unit_bound=min(spec.log_term_unit_bound, cap),
        analytic_form=None,
        analytic_delta=None,
    )


@dataclass
class AdmissibilityReport:
    """Grid diagnostics for one spec; `passed` gates Monte Carlo use."""

    label: str
    monotonicity_violations: list = field(default_factory=list)
    sign_violations: list = field(default_factory=list)
    bound_violations: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not (
            self.monotonicity_violations
            or self.sign_violations
            or self.bound_violations
        )

    def lines(self):
        status = "PASS" if self.passed else "FAIL"
        out = [f"{self.label}: {status}"]
        for x0, x1, u0, u1 in self.monotonicity_violations[:5]:
            out.append(f"  monotonicity: U({x0:.3g})={u0:.6g} > U({x1:.3g})={u1:.6g}")
        out.extend(f"  sign: {msg}" for msg in self.sign_violations[:5])
        out.extend(f"  bound: {msg}" for msg in self.bound_violations[:5])
        out.extend(f"  note: {msg}" for msg in self.notes)
        return out


def check_admissible(spec: UtilitySpec, grid=None) -> AdmissibilityReport:
    """Verify the admissibility hypotheses on a log-spaced grid.

    Reports violations instead of raising; the grid must span at least
    [1e-6, 1e6].
    """
    if grid is None:
        grid = np.geomspace(DIAGNOSTIC_GRID_LO, DIAGNOSTIC_GRID_HI, DIAGNOSTIC_GRID_POINTS)
    grid = np.asarray(grid, dtype=float)
    if grid.min() > DIAGNOSTIC_GRID_LO or grid.max() < DIAGNOSTIC_GRID_HI:
        raise ConfigError(
            f"diagnostic grid must span [{DIAGNOSTIC_GRID_LO:g}, {DIAGNOSTIC_GRID_HI:g}]"
        )
    report = AdmissibilityReport(label=spec.label)

    u = eval_utility(spec, grid)
    finite = np.isfinite(u)
    if not finite.all():
        report.bound_violations.append(
            f"non-finite assembled value at x={grid[~finite][0]:.3g}"
        )
    # monotonicity of the assembled function
    drops = np.flatnonzero(u[1:] < u[:-1] - 1e-12 * np.maximum(1.0, np.abs(u[:-1])))
    for j in drops[:10]:
        report.monotonicity_violations.append(
            (float(grid[j]), float(grid[j + 1]), float(u[j]), float(u[j + 1]))
        )

    base_vals = np.asarray(spec.base_term(grid), dtype=float)
    if base_vals.min(initial=np.inf) < spec.base_lower_bound - 1e-9:
        report.bound_violations.append(
            f"U0 drops below its declared lower bound {spec.base_lower_bound:g}"
        )
    if not np.isfinite(base_vals.min()):
        report.bound_violations.append("U0 is unbounded below on the grid")
    if base_vals.max(initial=-np.inf) > 1e8:
        report.notes.append("U0 grows without bound above (allowed; only inf U0 is constrained)")

    declared = spec.power_upper_bounds or tuple(None for _ in spec.power_terms)
    for k, ((fn, delta), ub) in enumerate(zip(spec.power_terms, declared), start=1):
        vals = np.asarray(fn(grid), dtype=float)
        if (vals < -1e-12).any():
            report.sign_violations.append(f"U{k} takes negative values")
        if not np.isfinite(vals.max()):
            report.bound_violations.append(f"U{k} is unbounded on the grid")
        elif ub is not None and vals.max() > ub + 1e-9:
            report.bound_violations.append(
                f"U{k} exceeds its declared bound {ub:g} (max {vals.max():.6g})"
            )

    log_vals = np.asarray(spec.log_term(grid), dtype=float)
    if (log_vals < -1e-12).any():
        report.sign_violations.append("log-term coefficient takes negative values")
    unit = grid < 1.0
    if unit.any():
        m = log_vals[unit].max()
        if not np.isfinite(m):
            report.bound_violations.append("log-term coefficient is unbounded on (0,1)")
        elif m > spec.log_term_unit_bound + 1e-9:
            report.bound_violations.append(
                f"log-term coefficient exceeds its declared (0,1) bound "
                f"{spec.log_term_unit_bound:g} (max {m:.6g})"
            )
    return report


# ---------------------------------------------------------------------------
# built-in specs
# ---------------------------------------------------------------------------


def log_utility() -> UtilitySpec:
    """U(x) = log x."""
    return UtilitySpec(
        label="log",
        log_term=_one,
        log_term_unit_bound=1.0,
        analytic_form="log",
    )


def negative_power_utility(delta: float) -> UtilitySpec:
    """U(x) = -x^(-delta), delta > 0."""
    if not (np.isfinite(delta) and delta > 0):
        raise ConfigError(f"delta must be positive, got {delta}")
    return UtilitySpec(
        label=f"neg-power-{delta:g}",
        power_terms=((_one, float(delta)),),
        power_upper_bounds=(1.0,),
        analytic_form="neg-power",
        analytic_delta=float(delta),
    )


def bounded_utility(cap: float = 10.0) -> UtilitySpec:
    """U(x) = min(sqrt(x), cap): increasing and bounded."""

    def capped_sqrt(x, _c=float(cap)):
        return np.minimum(np.sqrt(x), _c)

    return UtilitySpec(label=f"bounded-sqrt-{cap:g}", base_term=capped_sqrt)


def piecewise_linear_utility(points, label="piecewise") -> UtilitySpec:
    """U0 interpolated linearly through (x, y) breakpoints, flat outside."""
    pts = sorted((float(x), float(y)) for x, y in points)
    if len(pts) < 2:
        raise ConfigError("piecewise utility needs at least two breakpoints")
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    if (xs <= 0).any():
        raise ConfigError("piecewise breakpoints must have positive x")
    if (np.diff(xs) <= 0).any():
        raise ConfigError("piecewise breakpoints must have distinct x")

    def interp(x, _xs=xs, _ys=ys):
        return np.interp(np.asarray(x, dtype=float), _xs, _ys)

    return UtilitySpec(label=label, base_term=interp, base_lower_bound=float(ys.min()))


def builtin_utilities() -> dict:
    """Name -> spec for the stock criteria used across experiments."""
    return {
        "log": log_utility(),
        "neg-power-0.5": negative_power_utility(0.5),
        "neg-power-1": negative_power_utility(1.0),
        "neg-power-2": negative_power_utility(2.0),
        "bounded": bounded_utility(),
    }


def utility_from_name(name: str) -> UtilitySpec:
    """Resolve a configuration name; `neg-power-<delta>` is parsed generically."""
    table = builtin_utilities()
    if name in table:
        return table[name]
    if name.startswith("neg-power-"):
        try:
            return negative_power_utility(float(name.removeprefix("neg-power-")))
        except ValueError:
            pass
    raise ConfigError(f"unknown utility '{name}' (built-ins: {sorted(table)})")
