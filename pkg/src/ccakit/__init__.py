"""Exact verification and experimentation toolkit for counterfactual credit
attribution over finite autoregressive models."""

from .dist import (INFINITY, ClosenessVerdict, DomainMismatchError, FiniteDist,
                   min_ratio, ratio_close, rho_from_epsilon, tv_distance)
from .models import (EOS, CreditingPredictor, DataUniverse,
                     NonTerminatingModelError, build_counterexample,
                     build_hard_model, crediting_rollout_distribution,
                     rollout_distribution, trace_distribution)
from .verify import (NEXT_TOKEN, ROLLOUT, CcaReport, ConditionalPair,
                     check_alpha_approx, check_augmentation, check_cca,
                     conditional_pair, min_epsilon_cca)
from .composition import (CompositionBound, composition_lower_bound,
                          verify_composition_bound)
from .retrofit import (AugmentationSolution, CountingOracle,
                       DistributionProbeOracle, FindZResult, OutputMargins,
                       brute_force_find_z, closed_form_credit_prob,
                       estimate_credit_probability, find_z, findz_query_count,
                       optimal_augmentation_oracle, output_margins,
                       solve_optimal_augmentation)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
