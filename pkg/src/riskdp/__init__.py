"""Risk-averse and distributionally robust dynamic programming on finite spaces."""

__version__ = "0.1.0"

from .errors import RiskDPError
from .measures import FiniteDistribution, SampleBatch, cdf, dirac, empirical, make_distribution, pushforward, uniform
from .risk import RiskSpec, RobustRiskSpec, avar, check_axioms, entropic, evaluate, expectation, robust_evaluate, var
from .nested import ScenarioTree, build_product_tree, nested_evaluate, robust_nested_evaluate
from .saa import (
    PiecewiseLinearCdf,
    empirical_var,
    kappa,
    mc_exact_experiment,
    mc_growth_experiment,
    mc_uniform_experiment,
    n_exact,
    n_growth,
    n_soc,
    n_uniform,
)
from .soc import SocModel, mc_soc_experiment, soc_bellman, soc_empirical_value, soc_to_mdp, soc_value_iteration, solve_soc_finite
from .mdp import (
    MdpModel,
    evaluate_policy_nested,
    mdp_bellman,
    mdp_value_iteration,
    solve_mdp_finite,
    solve_mdp_game,
    static_robust_bruteforce,
)
from .saddle import analyze, build_psi, dual_maximin, primal_minimax, randomized_value
