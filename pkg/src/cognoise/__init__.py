"""Cognitive-noise models of altruistic choice and number comparison."""
from .model import (DeterministicLimitError, IndividualParams, NumberParams, RandomUtilityParams,
                    evidence_weight, indifference_ratio, mean_choice_over_grid, prior_threshold,
                    prob_A, prob_self, prob_self_linear, prob_self_random_utility)

__version__ = "0.1.0"
