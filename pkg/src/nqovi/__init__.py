"""Nash Q-learning with optimistic value iteration on linear Markov games."""
from .linear_mg import (FeatureMap, LinearMG, ModelValidationReport, load_model,
                        make_tabular_features, random_linear_mg, random_tabular_mg,
                        save_model, tabular_mg_from_tables, validate)
from .stage_game import (MixedProfile, SolveResult, StageGame, classify, exploitability,
                         solve, solve_approx, solve_bimatrix, solve_pure)
from .oracle import (JointPolicy, TabularModel, best_response_value, cumulative_regret,
                     evaluate_policy, nash_gap)
from .learner import GramState, LearnerConfig, NQOVI, OptimisticQ, RunRecord, beta_from_theorem, run

__version__ = "0.1.0"
