"""mftsim: Monte Carlo laboratory for mutual-fund reduction of portfolio strategies.

Simulates self-financing portfolios in markets whose short rate,
appreciation rates and volatility are random but independent of the
driving Brownian motion, and verifies empirically that projecting any
bounded admissible strategy onto the market-price-of-risk direction
(same instantaneous volatility, maximal drift) never costs more than a
vanishing amount of expected utility, for a wide family of criteria.
"""

from .errors import (
    ConfigError,
    InvariantViolationError,
    MftsimError,
    NumericError,
    QuadratureError,
    StrategyViolationError,
)
from .kernels import BACKEND
from .market import (
    BrownianPath,
    CoefficientModel,
    CoefficientPath,
    ConstantRandomModel,
    MarketState,
    PiecewiseResampledModel,
    RegimeSwitchingModel,
    TimeGrid,
    constant_market,
    excess_returns,
    risk_premium,
    sample_brownian,
    sample_coefficients,
)
from .wealth import (
    StrategyTrace,
    WealthPath,
    simulate_log_wealth,
    undiscount,
)
from .strategies import (
    ConstantMixStrategy,
    ConstantNuStrategy,
    ContrarianStrategy,
    MutualFundStrategy,
    ProjectionCertificate,
    RandomizedStrategy,
    Strategy,
    TraceStrategy,
    ZeroStrategy,
    constant_nu_strategy,
    lift_projection,
    log_optimal_strategy,
    mft_bound_constant,
    project_to_mft,
    sigma_operator_bounds,
)
from .utility import (
    UtilitySpec,
    bounded_utility,
    builtin_utilities,
    cap_utility,
    check_admissible,
    eval_utility,
    log_utility,
    negative_power_utility,
    piecewise_linear_utility,
    utility_from_name,
)
from .smoothing import (
    average_strategy_trace,
    averaged_market_model,
    epsilon_average,
    freeze_on_grid,
)
from .analytic import expected_utility_gaussian, gaussian_log_wealth_moments
from .montecarlo import (
    MCEstimate,
    PairedComparison,
    cdf_dominance,
    convergence_experiment,
    dkw_band,
    expected_utility,
    paired_compare,
    paired_terminal_log_wealth,
    sweep_nu,
    terminal_log_wealth,
)

__version__ = "0.1.0"
