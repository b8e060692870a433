"""Post-run audits of the deterministic bounds and the optimism property."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .baseline import baseline_lsvi_ucb
from .errors import ConfigurationError
from .learner import RunRecord, stream
from .linear_mg import LinearMG
from .oracle import best_response_value

AUDITS = ("weight_bound", "elliptical", "drift", "optimism", "collapse")

WEIGHT_SLACK = 1e-8
ELLIPTICAL_SLACK = 1e-6
DRIFT_REFRESH_TOL = 1e-8
DRIFT_BETWEEN_TOL = 1e-6
OPTIMISM_SLACK = 1e-9
OPTIMISM_RATE = 0.99
COLLAPSE_TOL = 1e-10


@dataclass
class AuditResult:
    passed: bool
    worst_margin: float      # >= 0 means satisfied
    checked: int
    rate: float | None = None
    detail: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"passed": self.passed, "worst_margin": self.worst_margin, "checked": self.checked,
                "rate": self.rate, **self.detail}


@dataclass
class AuditReport:
    results: dict

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results.values())

    def as_dict(self) -> dict:
        return {"passed": self.passed, "audits": {k: v.as_dict() for k, v in self.results.items()}}


def weight_bound(run: RunRecord, H: int) -> np.ndarray:
    """(1 + H) sqrt(d (k - 1) / lambda) for k = 1..K."""
    K, d = run.K, run.features.shape[2]
    k = np.arange(1, K + 1)
    return (1 + H) * np.sqrt(d * (k - 1) / run.config.lam)


def audit_weight_bound(run: RunRecord, H: int) -> AuditResult:
    norms = np.linalg.norm(run.weights, axis=-1)            # (K, H, n)
    margin = weight_bound(run, H)[:, None, None] - norms
    worst = float(margin.min())
    return AuditResult(worst >= -WEIGHT_SLACK, worst, int(margin.size))


def elliptical_sums(run: RunRecord) -> np.ndarray:
    """sum_k phi_k^T (Lambda^k_h)^{-1} phi_k per step, with Lambda rebuilt from scratch."""
    K, H, d = run.features.shape
    sums = np.zeros(H)
    for h in range(H):
        Lam = run.config.lam * np.eye(d)
        for k in range(K):
            phi = run.features[k, h]
            sums[h] += phi @ np.linalg.solve(Lam, phi)
            Lam += np.outer(phi, phi)
    return sums


def audit_elliptical(run: RunRecord) -> AuditResult:
    d = run.features.shape[2]
    lam = run.config.lam
    if lam < 1:
        # the log-determinant argument needs phi^T Lambda^{-1} phi <= 1
        return AuditResult(True, float("nan"), 0, detail={"skipped": "lambda < 1"})
    bound = 2 * d * math.log((run.K + lam) / lam)
    sums = elliptical_sums(run)
    margin = bound - sums
    recorded = run.potentials.sum(axis=0)
    return AuditResult(bool(margin.min() >= -ELLIPTICAL_SLACK), float(margin.min()), len(sums),
                       detail={"bound": bound, "sums": sums.tolist(),
                               "recorded_vs_recomputed": float(np.abs(recorded - sums).max())})


def audit_drift(run: RunRecord) -> AuditResult:
    m1 = DRIFT_REFRESH_TOL - run.max_drift_refresh
    m2 = DRIFT_BETWEEN_TOL - run.max_drift_between
    return AuditResult(m1 >= 0 and m2 >= 0, min(m1, m2), 2,
                       detail={"max_drift_refresh": run.max_drift_refresh,
                               "max_drift_between": run.max_drift_between})


def optimism_margins(run: RunRecord, mg: LinearMG, n_samples: int | None = None,
                     seed: int | None = None) -> np.ndarray:
    """Q^{i,k}_h(x,a) - Q^{i, br(pi^k_-i), pi^k_-i}_h(x,a) over sampled tuples.

    ``n_samples=None`` enumerates every (k, h, x, a, i).
    """
    K, H, S, A, n = run.K, mg.H, mg.num_states, mg.num_joint_actions, mg.n
    if n_samples is None:
        grid = np.indices((K, H, S, A, n)).reshape(5, -1).T
        grid[:, 0] += 1
    else:
        rng = stream(run.config.seed if seed is None else seed, "audit")
        grid = np.column_stack([rng.integers(1, K + 1, n_samples), rng.integers(0, H, n_samples),
                                rng.integers(0, S, n_samples), rng.integers(0, A, n_samples),
                                rng.integers(0, n, n_samples)])
    margins = np.empty(len(grid))
    for k in np.unique(grid[:, 0]):
        rows = np.flatnonzero(grid[:, 0] == k)
        q = run.episode_q(int(k), mg)
        pi = q.policy()
        qk = np.stack([[q.values(h, x) for x in range(S)] for h in range(H)])   # (H, S, A, n)
        if qk.max() > H + 1e-12:
            raise AssertionError("optimistic Q exceeded the clip ceiling")
        br = np.stack([best_response_value(mg, i, pi).Q_joint for i in range(n)])  # (n, H, S, A)
        _, h, x, a, i = grid[rows].T
        margins[rows] = qk[h, x, a, i] - br[i, h, x, a]
    return margins


def audit_optimism(run: RunRecord, mg: LinearMG, n_samples: int | None = 10_000) -> AuditResult:
    if run.gram_inv is None:
        raise ConfigurationError("optimism audit needs stored Gram snapshots")
    margins = optimism_margins(run, mg, n_samples)
    ok = margins >= -OPTIMISM_SLACK
    rate = float(ok.mean())
    return AuditResult(rate >= OPTIMISM_RATE, float(margins.min()), len(margins), rate=rate)


def audit_collapse(run: RunRecord, mg: LinearMG) -> AuditResult:
    ref = baseline_lsvi_ucb(mg, run.config)
    same_actions = bool(np.array_equal(ref.actions, run.actions))
    same_states = bool(np.array_equal(ref.states, run.states))
    wdiff = float(np.abs(ref.weights - run.weights).max())
    ok = same_actions and same_states and wdiff <= COLLAPSE_TOL
    return AuditResult(ok, COLLAPSE_TOL - wdiff, run.K,
                       detail={"same_actions": same_actions, "same_states": same_states,
                               "max_weight_diff": wdiff})


def audit(run: RunRecord, mg: LinearMG, toggles=("weight_bound", "elliptical", "drift"),
          optimism_samples: int | None = 10_000) -> AuditReport:
    results = {}
    for name in toggles:
        if name not in AUDITS:
            raise ConfigurationError(f"unknown audit {name!r}; choose from {', '.join(AUDITS)}")
        if name == "weight_bound":
            results[name] = audit_weight_bound(run, mg.H)
        elif name == "elliptical":
            results[name] = audit_elliptical(run)
        elif name == "drift":
            results[name] = audit_drift(run)
        elif name == "optimism":
            results[name] = audit_optimism(run, mg, optimism_samples)
        elif name == "collapse":
            if mg.n != 1:
                raise ConfigurationError("collapse audit needs a single-agent model")
            results[name] = audit_collapse(run, mg)
    return AuditReport(results)
