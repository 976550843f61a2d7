"""Greedy information acquisition, stopping-time laws and token-cap screening menus."""
from ._validation import (BoundaryError, CertificateError, DegenerateInputError, RegularityError,
                          SkeletonError, TokenScreenError, check_belief)
from .baselines import (Family, ScreeningResult, constant_delay_family, constant_delay_solution,
                        diffusion_family, diffusion_solution, diffusion_utility, minimal_delay, screen_1d)
from .config import ConfigError, RunConfig, load_config, parse_config
from .entropy import (CustomEntropy, EntropyModel, QuadraticBinaryEntropy, ShannonEntropy,
                      assumption1_report, binary_belief, bregman, entropy_value, hessian_submatrix,
                      make_entropy, simplex_grid)
from .estimators import GreedyExplorationModel, TokenPriceMenu
from .extensions import (QualityCurve, SCDReport, ValuationProfile, extended_menu, kappa_at,
                         kummer_1f1, kummer_scaled, quality_curve, scd_check, valuation_cutoff)
from .greedy import GreedySkeleton, build_skeleton, iso_divergence_profile
from .payoffs import ExpPoly, FunctionPayoff, constant_payoff, discount
from .screening import (TokenMenu, TypeModel, build_menu, marginal_price, menu_revenue, price,
                        token_cap, user_utility, virtual_preference, virtual_surplus,
                        virtual_surplus_revenue)
from .stopping import (StoppingLaw, capacity_audit, expected_payoff, ks_distance, law_from_atoms,
                       law_from_skeleton, law_from_table, simulate_paths, stopping_law, truncate_law)
from .verify import foc_check, foc_multiplier, ic_audit, oracle_upper_bound, utility_matrix

__version__ = "0.1.0"
