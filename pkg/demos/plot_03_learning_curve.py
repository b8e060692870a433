"""
Nash-gap regret of the learner
==============================

Run the optimistic learner on a small tabular game and track how far each
episode's policy is from an equilibrium. The gap is measured exactly with
backward induction on the true model.
"""

from pathlib import Path

import numpy as np

from nqovi import LearnerConfig, random_tabular_mg
from nqovi.harness import regret_svg, run_seed

mg = random_tabular_mg(0, 2, (2, 2), 2)

# the theoretical bonus scale is very conservative at this size, so shrink it
for K in (250, 1000):
    rec, rows = run_seed(mg, LearnerConfig(K=K, c_beta=0.05, seed=0))
    gaps = np.array([r[1] for r in rows])
    w = K // 10
    print(f"K={K:5d} beta={rec.beta:.3f} cum_regret={rows[-1][2]:.2f} "
          f"first10%={gaps[:w].mean():.4f} last10%={gaps[-w:].mean():.4f}")

out = Path("/tmp/demo_regret.svg")
out.write_text(regret_svg([r[0] for r in rows], list(gaps), [r[2] for r in rows], title="K=1000"))
print("wrote", out)
