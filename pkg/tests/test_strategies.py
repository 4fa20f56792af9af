import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mftsim import (
    ConstantMixStrategy,
    ConstantNuStrategy,
    ContrarianStrategy,
    InvariantViolationError,
    RandomizedStrategy,
    RegimeSwitchingModel,
    TimeGrid,
    ZeroStrategy,
    constant_market,
    constant_nu_strategy,
    lift_projection,
    log_optimal_strategy,
    mft_bound_constant,
    project_to_mft,
    sample_brownian,
    sample_coefficients,
    sigma_operator_bounds,
)
from mftsim.market import risk_premium, sample_brownian_block
from mftsim.strategies import collect_certificates, project_to_mft_batch
from mftsim.wealth import simulate_log_wealth_block

GRID = TimeGrid(horizon=1.0, steps=32)

TWO_REGIMES = [
    dict(r=0.02, a=[0.07, 0.05], sigma=[[0.18, 0.0], [0.05, 0.2]]),
    dict(r=0.0, a=[0.03, 0.11], sigma=[[0.3, 0.02], [0.0, 0.35]]),
]


def random_triple(rng, n):
    """Well-conditioned test instance (pi, sigma, a_tilde)."""
    sigma = rng.normal(size=(n, n)) * 0.3 + 1.2 * np.eye(n)
    a_tilde = rng.normal(size=n) * 0.08
    pi = rng.normal(size=n)
    return pi, sigma, a_tilde


class TestProjectToMft:
    def test_zero_premium_maps_to_zero(self):
        pi_hat, cert = project_to_mft([0.4, -0.2], np.eye(2), [0.0, 0.0])
        assert np.all(pi_hat == 0.0)
        assert cert.nu == 0.0

    def test_one_dimensional_sign_flip(self):
        # pi=-0.5, sigma=1, a~=0.1: feasible set {W: |f|=0.5}, max f*a~ at +0.5
        pi_hat, cert = project_to_mft([-0.5], [[1.0]], [0.1])
        assert pi_hat == pytest.approx([0.5], abs=1e-15)
        assert cert.nu == pytest.approx(5.0, rel=1e-12)
        assert cert.drift_gap == pytest.approx(0.1, rel=1e-12)
        # brute force over the two feasible points
        assert max(f * 0.1 for f in (-0.5, 0.5)) == pytest.approx(pi_hat[0] * 0.1)

    def test_two_dimensional_axis_swap(self):
        # sigma = I, a~=(0.1, 0), pi=(0, 0.3): best direction is the first axis
        pi_hat, cert = project_to_mft([0.0, 0.3], np.eye(2), [0.1, 0.0])
        assert np.allclose(pi_hat, [0.3, 0.0], atol=1e-14)
        assert cert.nu == pytest.approx(3.0, rel=1e-12)
        assert cert.drift_gap == pytest.approx(0.03, rel=1e-12)
        # angular grid search over the circle |f| = 0.3
        angles = np.linspace(0.0, 2 * np.pi, 10_000, endpoint=False)
        f = 0.3 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        brute = (f @ np.array([0.1, 0.0])).max()
        assert brute <= pi_hat @ np.array([0.1, 0.0]) + 1e-12
        assert pi_hat @ np.array([0.1, 0.0]) - brute < 0.3 * 0.1 * (2 * np.pi / 10_000) ** 2

    def test_singular_sigma_raises(self):
        with pytest.raises(InvariantViolationError):
            project_to_mft([0.1, 0.1], [[1.0, 1.0], [1.0, 1.0]], [0.05, 0.02])

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_oracle_equivalence_random_search(self, n):
        rng = np.random.default_rng(100 + n)
        dirs = rng.standard_normal((200_000, n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        for _ in range(20):
            pi, sigma, a_tilde = random_triple(rng, n)
            pi_hat, cert = project_to_mft(pi, sigma, a_tilde)
            c = np.linalg.norm(pi @ sigma)
            feasible = c * (dirs @ np.linalg.inv(sigma))
            brute = (feasible @ a_tilde).max()
            exact = pi_hat @ a_tilde
            assert brute <= exact + 1e-10
            assert exact - brute < 1e-3 * max(abs(exact), 1e-6) + 1e-9


@st.composite
def projection_instance(draw):
    n = draw(st.integers(min_value=1, max_value=3))
    seed = draw(st.integers(min_value=0, max_value=2 ** 31))
    rng = np.random.default_rng(seed)
    return random_triple(rng, n)


class TestProjectionProperties:
    @given(projection_instance())
    @settings(max_examples=200, deadline=None)
    def test_volatility_preserved_and_drift_dominates(self, instance):
        pi, sigma, a_tilde = instance
        theta = risk_premium(sigma, a_tilde)
        if np.linalg.norm(theta) <= 1e-6:
            return
        pi_hat, cert = project_to_mft(pi, sigma, a_tilde)
        vol = np.linalg.norm(pi @ sigma)
        vol_hat = np.linalg.norm(pi_hat @ sigma)
        assert abs(vol_hat - vol) <= 1e-12 * max(vol, 1e-300)
        assert pi_hat @ a_tilde >= pi @ a_tilde - 1e-14

    @given(projection_instance())
    @settings(max_examples=200, deadline=None)
    def test_idempotent(self, instance):
        pi, sigma, a_tilde = instance
        pi_hat, _ = project_to_mft(pi, sigma, a_tilde)
        pi_hat2, _ = project_to_mft(pi_hat, sigma, a_tilde)
        assert np.allclose(pi_hat2, pi_hat, rtol=1e-12, atol=1e-15)

    @given(projection_instance(), st.floats(min_value=-4.0, max_value=4.0,
                                            allow_nan=False, allow_infinity=False))
    @settings(max_examples=200, deadline=None)
    def test_absolutely_homogeneous(self, instance, lam):
        pi, sigma, a_tilde = instance
        pi_hat, _ = project_to_mft(pi, sigma, a_tilde)
        pi_hat_scaled, _ = project_to_mft(lam * pi, sigma, a_tilde)
        assert np.allclose(pi_hat_scaled, abs(lam) * pi_hat, rtol=1e-10, atol=1e-14)

    @given(projection_instance())
    @settings(max_examples=200, deadline=None)
    def test_collinear_with_fund_direction(self, instance):
        pi, sigma, a_tilde = instance
        theta = risk_premium(sigma, a_tilde)
        if np.linalg.norm(theta) <= 1e-6:
            return
        pi_hat, cert = project_to_mft(pi, sigma, a_tilde)
        direction = np.linalg.solve(sigma.T, theta)
        assert cert.nu >= 0.0
        assert np.allclose(pi_hat, cert.nu * direction, rtol=1e-10, atol=1e-14)


class TestBoundConstant:
    def test_identity_is_isometry(self):
        assert mft_bound_constant(1.0, 1.0) == 1.0

    def test_diagonal_by_hand(self):
        # sigma = diag(0.2, 0.5): ||sigma|| = 0.5, ||sigma^{-1}|| = 5 -> C = 2.5
        model = constant_market(0.0, [0.05, 0.05], [[0.2, 0.0], [0.0, 0.5]])
        s, s_inv = sigma_operator_bounds(model)
        assert s == pytest.approx(0.5)
        assert s_inv == pytest.approx(5.0)
        assert mft_bound_constant(s, s_inv) == pytest.approx(2.5)

    def test_empirical_blowup_bounded(self):
        model = RegimeSwitchingModel(TWO_REGIMES, rates=[[0.0, 1.0], [1.5, 0.0]])
        C = mft_bound_constant(*sigma_operator_bounds(model))
        rng = np.random.default_rng(3)
        paths = 200
        r, a, sigma = model.sample_block(GRID, 44, 0, paths)
        a_tilde = a - r[..., None]
        pi = rng.normal(size=(paths, GRID.steps + 1, 2))
        flat = lambda x: x.reshape(-1, *x.shape[2:])
        pi_hat, nu, vol, vol_hat, xi = project_to_mft_batch(
            flat(pi), flat(sigma), flat(a_tilde)
        )
        ratios = np.linalg.norm(pi_hat, axis=1) / np.linalg.norm(flat(pi), axis=1)
        assert ratios.max() <= C * (1 + 1e-12)


class TestMutualFundStrategies:
    def test_log_optimal_identity_sigma(self):
        model = constant_market(0.0, [0.05, 0.02], [[1.0, 0.0], [0.0, 1.0]])
        r, a, sigma = model.sample_block(GRID, 0, 0, 1)
        dw = sample_brownian_block(GRID, 2, 0, 0, 1)
        _, trace = simulate_log_wealth_block(GRID, r, a, sigma, dw, log_optimal_strategy(), 1.0)
        assert np.allclose(trace[0], [0.05, 0.02], atol=1e-14)

    def test_log_optimal_scalar_market(self):
        # a~/sigma^2 = 0.04 / 0.04 = 1
        model = constant_market(0.0, [0.04], [[0.2]])
        r, a, sigma = model.sample_block(GRID, 0, 0, 1)
        dw = sample_brownian_block(GRID, 1, 0, 0, 1)
        _, trace = simulate_log_wealth_block(GRID, r, a, sigma, dw, log_optimal_strategy(), 1.0)
        assert np.allclose(trace[0], 1.0, atol=1e-13)

    def test_zero_premium_gives_zero_position(self):
        model = constant_market(0.03, [0.03], [[0.2]])
        r, a, sigma = model.sample_block(GRID, 0, 0, 1)
        dw = sample_brownian_block(GRID, 1, 0, 0, 1)
        _, trace = simulate_log_wealth_block(GRID, r, a, sigma, dw, log_optimal_strategy(), 1.0)
        assert np.all(trace == 0.0)

    def test_constant_nu_examples(self):
        model = constant_market(0.0, [0.04], [[0.2]])
        r, a, sigma = model.sample_block(GRID, 0, 0, 1)
        dw = sample_brownian_block(GRID, 1, 0, 0, 1)
        _, tr0 = simulate_log_wealth_block(GRID, r, a, sigma, dw, constant_nu_strategy(0.0), 1.0)
        assert np.all(tr0 == 0.0)
        _, tr2 = simulate_log_wealth_block(GRID, r, a, sigma, dw, constant_nu_strategy(2.0), 1.0)
        assert np.allclose(tr2[0], 2.0, atol=1e-13)

    def test_nu_one_matches_log_optimal_traces(self):
        model = RegimeSwitchingModel(TWO_REGIMES, rates=[[0.0, 1.0], [1.5, 0.0]])
        r, a, sigma = model.sample_block(GRID, 21, 0, 16)
        dw = sample_brownian_block(GRID, 2, 21, 0, 16)
        _, tr_nu = simulate_log_wealth_block(GRID, r, a, sigma, dw, constant_nu_strategy(1.0), 1.0)
        _, tr_opt = simulate_log_wealth_block(GRID, r, a, sigma, dw, log_optimal_strategy(), 1.0)
        assert np.array_equal(tr_nu, tr_opt)


class TestLiftProjection:
    def test_fixed_point_on_fund_strategies(self):
        model = RegimeSwitchingModel(TWO_REGIMES, rates=[[0.0, 1.0], [1.5, 0.0]])
        base = ConstantNuStrategy(0.7)
        lifted = lift_projection(base)
        r, a, sigma = model.sample_block(GRID, 13, 0, 32)
        dw = sample_brownian_block(GRID, 2, 13, 0, 32)
        _, tr_base = simulate_log_wealth_block(GRID, r, a, sigma, dw, base, 1.0)
        _, tr_lift = simulate_log_wealth_block(GRID, r, a, sigma, dw, lifted, 1.0)
        assert np.allclose(tr_lift, tr_base, rtol=1e-10, atol=1e-14)

    def test_zero_strategy_lifts_to_zero(self):
        model = RegimeSwitchingModel(TWO_REGIMES, rates=[[0.0, 1.0], [1.5, 0.0]])
        lifted = lift_projection(ZeroStrategy())
        r, a, sigma = model.sample_block(GRID, 14, 0, 8)
        dw = sample_brownian_block(GRID, 2, 14, 0, 8)
        _, trace = simulate_log_wealth_block(GRID, r, a, sigma, dw, lifted, 1.0)
        assert np.all(trace == 0.0)

    def test_certificates_on_random_paths(self):
        model = RegimeSwitchingModel(TWO_REGIMES, rates=[[0.0, 1.0], [1.5, 0.0]])
        base = ConstantMixStrategy([0.6, -0.2])
        for seed in range(20):
            coeffs = sample_coefficients(model, GRID, seed)
            brownian = sample_brownian(GRID, seed, 2)
            _, _, certs = collect_certificates(base, coeffs, brownian, 1.0)
            assert len(certs) == GRID.steps
            for c in certs:
                assert c.drift_gap >= -1e-14
                assert c.nu >= 0.0
                assert abs(c.projected_volatility - c.volatility) <= 1e-12 * max(c.volatility, 1e-300)

    def test_lift_propagates_aux_requirement(self):
        base = RandomizedStrategy([0.7, 0.4])
        assert lift_projection(base).uses_aux_noise

    def test_companion_matches_base_own_run(self):
        # the projected rule must evaluate a wealth-dependent base on the
        # base's own trajectory (advanced with the same draws), node by node
        model = RegimeSwitchingModel(TWO_REGIMES, rates=[[0.0, 1.0], [1.5, 0.0]])
        base = ContrarianStrategy([1.0, 0.4], base=0.4, swing=0.5, gain=6.0)
        coeffs = sample_coefficients(model, GRID, 77)
        brownian = sample_brownian(GRID, 77, 2)
        from mftsim import simulate_log_wealth

        _, base_trace = simulate_log_wealth(coeffs, brownian, base, 1.0)
        _, proj_trace, certs = collect_certificates(base, coeffs, brownian, 1.0)
        a_tilde = coeffs.a_tilde()
        for i in range(GRID.steps):
            expected, _ = project_to_mft(base_trace.proportions[i], coeffs.sigma[i], a_tilde[i])
            assert np.allclose(proj_trace.proportions[i], expected, rtol=1e-12, atol=1e-15)
