import numpy as np
import pytest

from mftsim import (
    ConfigError,
    ConstantMixStrategy,
    StrategyTrace,
    TimeGrid,
    TraceStrategy,
    bounded_utility,
    constant_market,
    expected_utility_gaussian,
    gaussian_log_wealth_moments,
    log_utility,
    negative_power_utility,
    sample_coefficients,
)
from mftsim.errors import QuadratureError
from mftsim.strategies import collect_certificates
from mftsim.utility import UtilitySpec
from mftsim import sample_brownian

GRID = TimeGrid(horizon=1.0, steps=64)


def deterministic_inputs(r, a, sigma, pi_row):
    model = constant_market(r, a, sigma)
    coeffs = sample_coefficients(model, GRID, 0)
    trace = StrategyTrace(grid=GRID, proportions=np.tile(pi_row, (GRID.steps, 1)))
    return coeffs, trace


class TestMoments:
    def test_zero_strategy(self):
        coeffs, _ = deterministic_inputs(0.03, [0.1], [[0.2]], [0.0])
        trace = StrategyTrace(grid=GRID, proportions=np.zeros((GRID.steps, 1)))
        m, v = gaussian_log_wealth_moments(coeffs, trace, 2.0)
        assert m == pytest.approx(np.log(2.0))
        assert v == 0.0

    def test_hand_computed_moments(self):
        # pi=0.5, sigma=1, a~=0.1: m = -0.075, v = 0.25
        coeffs, trace = deterministic_inputs(0.0, [0.1], [[1.0]], [0.5])
        m, v = gaussian_log_wealth_moments(coeffs, trace, 1.0)
        assert m == pytest.approx(-0.075, rel=1e-12)
        assert v == pytest.approx(0.25, rel=1e-12)

    def test_log_optimal_moments(self):
        # |theta| = 0.1: m = 0.005, v = 0.01
        coeffs, trace = deterministic_inputs(0.0, [0.1], [[1.0]], [0.1])
        m, v = gaussian_log_wealth_moments(coeffs, trace, 1.0)
        assert m == pytest.approx(0.005, rel=1e-12)
        assert v == pytest.approx(0.01, rel=1e-12)

    def test_time_varying_trace(self):
        coeffs, _ = deterministic_inputs(0.01, [0.08, 0.03], [[0.2, 0.0], [0.05, 0.3]], [0, 0])
        rows = np.column_stack([np.linspace(0, 1, GRID.steps), np.linspace(0.5, -0.5, GRID.steps)])
        trace = StrategyTrace(grid=GRID, proportions=rows)
        m, v = gaussian_log_wealth_moments(coeffs, trace, 1.0)
        a_tilde = coeffs.a_tilde()
        m_ref, v_ref = np.log(1.0), 0.0
        for i in range(GRID.steps):
            vol = rows[i] @ coeffs.sigma[i]
            m_ref += (rows[i] @ a_tilde[i] - 0.5 * vol @ vol) * GRID.dt
            v_ref += (vol @ vol) * GRID.dt
        assert m == pytest.approx(m_ref, rel=1e-12)
        assert v == pytest.approx(v_ref, rel=1e-12)

    def test_grid_mismatch_rejected(self):
        coeffs, trace = deterministic_inputs(0.0, [0.1], [[1.0]], [0.5])
        other = StrategyTrace(grid=TimeGrid(horizon=1.0, steps=32),
                              proportions=np.zeros((32, 1)))
        with pytest.raises(ConfigError):
            gaussian_log_wealth_moments(coeffs, other, 1.0)


class TestExpectedUtilityGaussian:
    def test_log_closed_form(self):
        assert expected_utility_gaussian(log_utility(), -0.075, 0.25) == -0.075

    def test_point_mass(self):
        assert expected_utility_gaussian(negative_power_utility(1.0), 0.0, 0.0) == pytest.approx(-1.0)

    def test_lognormal_inverse_moment(self):
        # E[-1/X] = -exp(-m + v/2) = -exp(-0.08)
        value = expected_utility_gaussian(negative_power_utility(1.0), 0.1, 0.04)
        assert value == pytest.approx(-np.exp(-0.08), rel=1e-12)
        # cross-check against a million-sample simulation
        rng = np.random.default_rng(0)
        y = rng.normal(0.1, 0.2, size=1_000_000)
        sim = -np.exp(-y)
        stderr = sim.std(ddof=1) / 1000.0
        assert abs(value - sim.mean()) < 3 * stderr

    def test_quadrature_agrees_with_closed_forms(self):
        # same terms, no analytic tag: forces the quadrature path
        log_like = UtilitySpec(label="log-q", log_term=lambda x: np.ones_like(np.asarray(x, dtype=float)),
                               log_term_unit_bound=1.0)
        assert expected_utility_gaussian(log_like, -0.075, 0.25) == pytest.approx(-0.075, abs=1e-9)
        pow_like = UtilitySpec(
            label="pow-q",
            power_terms=((lambda x: np.ones_like(np.asarray(x, dtype=float)), 1.0),),
            power_upper_bounds=(1.0,),
        )
        assert expected_utility_gaussian(pow_like, 0.1, 0.04) == pytest.approx(
            -np.exp(-0.08), rel=1e-9
        )

    def test_bounded_against_simulation(self):
        value = expected_utility_gaussian(bounded_utility(), 0.2, 0.09)
        rng = np.random.default_rng(7)
        x = np.exp(rng.normal(0.2, 0.3, size=1_000_000))
        sim = np.minimum(np.sqrt(x), 10.0)
        assert abs(value - sim.mean()) < 3 * sim.std(ddof=1) / 1000.0

    def test_doubling_resolution_is_stable(self):
        for spec in (bounded_utility(),):
            for m, v in ((0.0, 1.0), (-0.2, 0.3), (0.5, 0.04)):
                a = expected_utility_gaussian(spec, m, v, panels=1024)
                b = expected_utility_gaussian(spec, m, v, panels=2048)
                assert abs(a - b) < 1e-8

    def test_error_bound_reported(self):
        value, err = expected_utility_gaussian(bounded_utility(), 0.0, 0.5, return_error=True)
        assert err < 1e-8
        assert value == pytest.approx(1.0, abs=0.2)

    def test_invalid_moments_rejected(self):
        with pytest.raises(ConfigError):
            expected_utility_gaussian(log_utility(), 0.0, -1.0)

    def test_nonconvergent_quadrature_raises(self):
        # a jump in the bulk makes panel halving disagree at coarse resolution
        step = UtilitySpec(
            label="step",
            base_term=lambda x: (np.asarray(x, dtype=float) >= np.e ** 0.37).astype(float),
        )
        with pytest.raises(QuadratureError):
            expected_utility_gaussian(step, 0.0, 1.0, panels=64)


class TestProjectionGainFormula:
    def test_log_gain_equals_integrated_drift_gap(self):
        model = constant_market(0.01, [0.07, 0.02], [[0.22, 0.0], [0.04, 0.3]])
        coeffs = sample_coefficients(model, GRID, 0)
        rows = np.column_stack([np.linspace(0.3, 0.7, GRID.steps),
                                np.linspace(0.4, -0.4, GRID.steps)])
        base = TraceStrategy(rows)
        brownian = sample_brownian(GRID, 5, 2)
        _, proj_trace, certs = collect_certificates(base, coeffs, brownian, 1.0)
        m_base, v_base = gaussian_log_wealth_moments(
            coeffs, StrategyTrace(grid=GRID, proportions=rows), 1.0
        )
        m_proj, v_proj = gaussian_log_wealth_moments(coeffs, proj_trace, 1.0)
        gap = sum(c.drift_gap for c in certs) * GRID.dt
        assert v_proj == pytest.approx(v_base, rel=1e-12)  # volatility preserved
        assert m_proj - m_base == pytest.approx(gap, rel=1e-10)
        # for log utility the oracle difference is exactly the integrated gap
        j_base = expected_utility_gaussian(log_utility(), m_base, v_base)
        j_proj = expected_utility_gaussian(log_utility(), m_proj, v_proj)
        assert j_proj - j_base == pytest.approx(gap, rel=1e-10)
