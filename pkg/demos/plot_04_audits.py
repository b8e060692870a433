"""
Auditing a run
==============

Some properties of a run hold deterministically: the regression weights stay
inside a ball whose radius grows like sqrt(k), and the summed bonuses obey the
elliptical potential bound. Optimism is checked against exact best responses.
"""

from nqovi import LearnerConfig, random_linear_mg, random_tabular_mg, run
from nqovi.audit import audit

mg = random_linear_mg(3, d=6, num_states=4, action_dims=(2, 3), H=3, n=2)
rec = run(mg, LearnerConfig(K=200, c_beta=1.0, seed=1))
report = audit(rec, mg, ("weight_bound", "elliptical", "drift"))
for name, res in report.results.items():
    print(f"{name:13s} passed={res.passed} worst_margin={res.worst_margin:.3g}")

# optimism on a tabular game with the full theoretical bonus
tab = random_tabular_mg(1, 4, (2, 2), 3)
rec = run(tab, LearnerConfig(K=40, c_beta=1.0, seed=2))
opt = audit(rec, tab, ("optimism",), optimism_samples=2000).results["optimism"]
print(f"optimism rate={opt.rate:.4f} over {opt.checked} tuples")

# with the bonus scaled far down, optimism is no longer guaranteed
rec = run(tab, LearnerConfig(K=40, c_beta=0.01, seed=2))
opt = audit(rec, tab, ("optimism",), optimism_samples=2000).results["optimism"]
print(f"c_beta=0.01: optimism rate={opt.rate:.4f}")
