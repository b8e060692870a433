"""
Building a linear Markov game
=============================

Transitions and rewards are inner products of a feature map with per-step
parameters. Here we draw one at random, check it, and look inside.
"""

import numpy as np

from nqovi import random_linear_mg, random_tabular_mg
from nqovi.linear_mg import joint_action_tuple, save_model, load_model, models_equal

# two agents with two actions each, three states, horizon three, d = 4
mg = random_linear_mg(seed=7, d=4, num_states=3, action_dims=(2, 2), H=3, n=2)
print("agents", mg.n, "horizon", mg.H, "d", mg.d, "joint actions", mg.num_joint_actions)

# every kernel row is a distribution and every reward sits in [0, 1]
report = mg.check()
print("kernels ok:", report.kernels_ok, " rewards ok:", report.rewards_ok)

# the kernel is recovered from the features: P_h(.|x,a) = phi(x,a)^T mu_h
x, a = 1, 3
print("joint action", a, "=", joint_action_tuple(a, mg.action_dims))
print("P_0(.|x,a)      ", np.round(mg.P[0, x, a], 4))
print("phi(x,a) @ mu_0 ", np.round(mg.feature(x, a) @ mg.mu[0], 4))

# one-hot features turn any tabular game into a linear one with d = |S||A|
tab = random_tabular_mg(0, 2, (2, 2), 2)
print("tabular embedding d =", tab.d)

# models round-trip exactly through JSON
save_model(mg, "/tmp/demo_model.json")
print("round trip equal:", models_equal(mg, load_model("/tmp/demo_model.json")))
