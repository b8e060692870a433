"""
One agent: back to LSVI-UCB
===========================

With a single agent the stage game is a max over actions, so the learner
should retrace the classic single-agent algorithm step for step. The baseline
module is written separately, using direct solves instead of a maintained
inverse, so agreement here is a real check.
"""

import numpy as np

from nqovi import LearnerConfig, random_linear_mg, run
from nqovi.baseline import baseline_lsvi_ucb
from nqovi.harness import run_baseline

mg = random_linear_mg(11, d=5, num_states=4, action_dims=(3,), H=3, n=1)
cfg = LearnerConfig(K=150, c_beta=0.05, seed=4)
a, b = run(mg, cfg), baseline_lsvi_ucb(mg, cfg)
print("same actions:", np.array_equal(a.actions, b.actions))
print("same states: ", np.array_equal(a.states, b.states))
print("max weight difference: %.2e" % np.abs(a.weights - b.weights).max())

_, rows = run_baseline(mg, cfg)
print("single-agent regret after %d episodes: %.3f" % (rows[-1][0], rows[-1][2]))
