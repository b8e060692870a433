"""Single-agent LSVI-UCB, written independently of the multi-agent learner.

Used as the reference the multi-agent learner must reduce to when n = 1: the
regression target takes a max over actions and the rollout acts greedily.
Gram matrices are solved directly here instead of through a maintained inverse.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ContractError
from .learner import LearnerConfig, RunRecord, sample_index, stream
from .linear_mg import LinearMG
from .oracle import JointPolicy
from .stage_game import MixedProfile


def baseline_lsvi_ucb(mg: LinearMG, cfg: LearnerConfig,
                      on_episode: Callable[[int, JointPolicy, np.ndarray], None] | None = None) -> RunRecord:
    """Run LSVI-UCB for cfg.K episodes on a single-agent model.

    ``on_episode(k, greedy_policy, states)`` receives the greedy policy at
    every (h, x) of episode k.
    """
    if mg.n != 1:
        raise ContractError(f"LSVI-UCB baseline needs a single-agent model, got n={mg.n}")
    K, H, d, S = cfg.K, mg.H, mg.d, mg.num_states
    n_act = mg.num_joint_actions
    beta = cfg.resolve_beta(d, H)
    phi_all = mg.features.table                      # (S, A, d)
    rng = stream(cfg.seed, "transition")

    Lam = np.stack([cfg.lam * np.eye(d) for _ in range(H)])
    feats = np.zeros((K, H, d))
    rews = np.zeros((K, H))
    states = np.zeros((K, H + 1), dtype=np.int64)
    actions = np.zeros((K, H), dtype=np.int64)
    weights = np.zeros((K, H, 1, d))
    gram_inv = np.zeros((K, H, d, d))
    potentials = np.zeros((K, H))
    played = []

    for k in range(K):
        w = np.zeros((H, d))
        Qtab = np.zeros((H + 1, S, n_act))
        inv = np.linalg.inv(Lam)
        for h in reversed(range(H)):
            if k > 0:
                nxt = Qtab[h + 1, states[:k, h + 1]].max(axis=1)
                y = rews[:k, h] + nxt
                w[h] = np.linalg.solve(Lam[h], feats[:k, h].T @ y)
            quad = np.einsum("xad,de,xae->xa", phi_all, inv[h], phi_all)
            Qtab[h] = np.minimum(phi_all @ w[h] + beta * np.sqrt(np.maximum(quad, 0.0)), H)
        greedy = Qtab[:H].argmax(axis=2)             # (H, S)

        x = mg.s0
        states[k, 0] = x
        ep_played = []
        for h in range(H):
            a = int(greedy[h, x])
            ep_played.append(MixedProfile.pure((a,), mg.action_dims))
            actions[k, h] = a
            feats[k, h] = phi_all[x, a]
            rews[k, h] = mg.R[h, 0, x, a]
            potentials[k, h] = feats[k, h] @ inv[h] @ feats[k, h]
            x = sample_index(rng, mg.P[h, x, a])
            states[k, h + 1] = x
        for h in range(H):
            Lam[h] += np.outer(feats[k, h], feats[k, h])
        weights[k, :, 0] = w
        gram_inv[k] = inv
        played.append(ep_played)
        if on_episode is not None:
            on_episode(k + 1, JointPolicy.deterministic([greedy], mg.action_dims), states[k])

    return RunRecord(config=cfg, beta=beta, states=states, actions=actions, rewards=rews[:, :, None],
                     features=feats, weights=weights, potentials=potentials, gram_inv=gram_inv,
                     played=played, solver_stats=[{} for _ in range(K)])
