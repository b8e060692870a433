"""
Solving stage games
===================

At every state the learner faces a one-shot game whose payoffs are its
current Q estimates. The solver tries pure equilibria first, then support
enumeration for two players, then regret matching.
"""

import numpy as np

from nqovi import MixedProfile, StageGame, classify, exploitability, solve
from nqovi.stage_game import solve_bimatrix

pennies = StageGame((np.array([[1.0, -1.0], [-1.0, 1.0]]),
                     np.array([[-1.0, 1.0], [1.0, -1.0]])))
res = solve(pennies)
print("matching pennies:", [np.round(s, 3) for s in res.profile.strategies],
      "via", res.solver, "eps", res.exploitability)
print(classify(pennies, res.profile))

# prisoner's dilemma: (defect, defect) is the only equilibrium and it is not optimal
pd = StageGame((np.array([[2.0, 0.0], [3.0, 1.0]]), np.array([[2.0, 3.0], [0.0, 1.0]])))
dd = MixedProfile.pure((1, 1), (2, 2))
print("dilemma", classify(pd, dd))

# battle of the sexes also has a fully mixed equilibrium; ask for support >= 2
bos = StageGame((np.array([[2.0, 0.0], [0.0, 1.0]]), np.array([[1.0, 0.0], [0.0, 2.0]])))
mixed = solve_bimatrix(bos, min_support=2).profile
print("battle of the sexes mixed:", [np.round(s, 4) for s in mixed.strategies])

# random 3x4 bimatrix games: exploitability of the returned profile
rng = np.random.default_rng(0)
eps = [exploitability(g, solve_bimatrix(g).profile)
       for g in (StageGame((rng.normal(size=(3, 4)), rng.normal(size=(3, 4)))) for _ in range(100))]
print("worst exploitability over 100 games: %.2e" % max(eps))

# three players fall through to regret matching when no pure equilibrium exists;
# it only approaches an equilibrium, and the reported eps says how closely
for _ in range(20):
    g3 = StageGame(tuple(rng.normal(size=(2, 2, 2)) for _ in range(3)))
    r3 = solve(g3)
    if r3.solver != "pure":
        break
print("3-player:", r3.solver, "iterations", r3.iterations, "eps %.2e" % r3.exploitability)
