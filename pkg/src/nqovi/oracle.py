"""
Exact dynamic programming on finite Markov games: policy evaluation, best
responses against fixed opponents, and the Nash-gap regret.

All functions accept any model exposing ``P`` (H, S, A, S), ``R`` (H, n, S, A),
``action_dims``, ``s0``; both ``LinearMG`` and ``TabularModel`` qualify.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CapacityError, ContractError

MARGINAL_GUARD = 10**7


@dataclass(frozen=True, eq=False)
class TabularModel:
    """Explicit tables without a feature map (also allows H = 1)."""

    P: np.ndarray
    R: np.ndarray
    action_dims: tuple[int, ...]
    s0: int = 0

    def __post_init__(self):
        object.__setattr__(self, "P", np.asarray(self.P, dtype=np.float64))
        object.__setattr__(self, "R", np.asarray(self.R, dtype=np.float64))
        object.__setattr__(self, "action_dims", tuple(int(a) for a in self.action_dims))

    @property
    def H(self) -> int:
        return self.P.shape[0]

    @property
    def n(self) -> int:
        return self.R.shape[1]

    @property
    def num_states(self) -> int:
        return self.P.shape[1]


class JointPolicy:
    """Product policy: probs[i][h, x, :] is agent i's distribution at (h, x)."""

    def __init__(self, probs: Sequence[np.ndarray]):
        probs = [np.asarray(p, dtype=np.float64) for p in probs]
        if not probs or any(p.ndim != 3 for p in probs):
            raise ContractError("policy arrays must have shape (H, S, |A_i|)")
        if len({p.shape[:2] for p in probs}) != 1:
            raise ContractError("all agents' policy arrays must share (H, S)")
        for p in probs:
            if not np.all(np.isfinite(p)) or np.any(p < -1e-12) or np.abs(p.sum(-1) - 1).max() > 1e-9:
                raise ContractError("policy is undefined (not a distribution) at some (h, x)")
        self.probs = probs

    @property
    def H(self) -> int:
        return self.probs[0].shape[0]

    @property
    def num_states(self) -> int:
        return self.probs[0].shape[1]

    @property
    def action_dims(self) -> tuple[int, ...]:
        return tuple(p.shape[2] for p in self.probs)

    def joint(self, h: int) -> np.ndarray:
        """(S, |A|) product distribution over flat joint actions."""
        out = np.ones((self.num_states, 1))
        for p in self.probs:
            out = (out[:, :, None] * p[h][:, None, :]).reshape(self.num_states, -1)
        return out

    def with_agent(self, i: int, probs_i: np.ndarray) -> "JointPolicy":
        probs = list(self.probs)
        probs[i] = probs_i
        return JointPolicy(probs)

    @classmethod
    def uniform(cls, H: int, num_states: int, action_dims: Sequence[int]) -> "JointPolicy":
        return cls([np.full((H, num_states, k), 1.0 / k) for k in action_dims])

    @classmethod
    def deterministic(cls, choices: Sequence[np.ndarray], action_dims: Sequence[int]) -> "JointPolicy":
        """choices[i][h, x] is agent i's action index."""
        probs = []
        for c, k in zip(choices, action_dims):
            c = np.asarray(c, dtype=np.int64)
            probs.append(np.eye(k)[c])
        return cls(probs)


@dataclass
class ValueTable:
    V: np.ndarray   # (n, H + 1, S); V[:, H] = 0
    Q: np.ndarray   # (n, H, S, |A|)

    def v1(self, s0: int) -> np.ndarray:
        return self.V[:, 0, s0]


def _check(mg, pi: JointPolicy):
    if pi.H != mg.H or pi.num_states != mg.num_states or pi.action_dims != tuple(mg.action_dims):
        raise ContractError(
            f"policy shape (H={pi.H}, S={pi.num_states}, dims={pi.action_dims}) does not match the model")


def evaluate_policy(mg, pi: JointPolicy) -> ValueTable:
    _check(mg, pi)
    H, S, n = mg.H, mg.num_states, mg.n
    V = np.zeros((n, H + 1, S))
    Q = np.zeros((n, H, S, mg.P.shape[2]))
    for h in range(H - 1, -1, -1):
        Q[:, h] = mg.R[h] + np.einsum("xay,iy->ixa", mg.P[h], V[:, h + 1])
        V[:, h] = np.einsum("ixa,xa->ix", Q[:, h], pi.joint(h))
    return ValueTable(V, Q)


@dataclass
class BestResponse:
    value: float             # V_1^{i, br, pi_-i}(s0)
    V: np.ndarray            # (H + 1, S)
    Q_own: np.ndarray        # (H, S, |A_i|) against marginalized opponents
    Q_joint: np.ndarray      # (H, S, |A|) best-response Q over joint actions
    policy: np.ndarray       # (H, S) greedy own action, lowest index on ties


def _opponent_weights(pi: JointPolicy, i: int, h: int, dims) -> np.ndarray:
    S = pi.num_states
    w = np.ones((S, *dims))
    for j, p in enumerate(pi.probs):
        if j == i:
            continue
        shape = [S] + [1] * len(dims)
        shape[j + 1] = dims[j]
        w = w * p[h].reshape(shape)
    return w


def best_response_value(mg, i: int, pi: JointPolicy) -> BestResponse:
    """Best response of agent i against the other components of ``pi``.

    Agent i's own component of ``pi`` is ignored.
    """
    _check(mg, pi)
    H, S = mg.H, mg.num_states
    dims = tuple(mg.action_dims)
    if S * dims[i] > MARGINAL_GUARD:
        raise CapacityError(f"marginalized table of {S * dims[i]} entries exceeds the guard")
    others = tuple(j + 1 for j in range(len(dims)) if j != i)
    V = np.zeros((H + 1, S))
    Q_own = np.zeros((H, S, dims[i]))
    Q_joint = np.zeros((H, S, mg.P.shape[2]))
    greedy = np.zeros((H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        Q_joint[h] = mg.R[h, i] + mg.P[h] @ V[h + 1]
        w = _opponent_weights(pi, i, h, dims)
        Q_own[h] = (Q_joint[h].reshape(S, *dims) * w).sum(axis=others)
        greedy[h] = Q_own[h].argmax(axis=1)
        V[h] = Q_own[h].max(axis=1)
    return BestResponse(float(V[0, mg.s0]), V, Q_own, Q_joint, greedy)


def agent_gaps(mg, pi: JointPolicy) -> np.ndarray:
    """Per-agent best-response advantage at s0."""
    own = evaluate_policy(mg, pi).v1(mg.s0)
    return np.array([best_response_value(mg, i, pi).value - own[i] for i in range(mg.n)])


def nash_gap(mg, pi: JointPolicy) -> float:
    return float(agent_gaps(mg, pi).max())


def cumulative_regret(gaps) -> list[float]:
    return np.cumsum(np.asarray(gaps, dtype=np.float64)).tolist()


@dataclass
class RegretLedger:
    episodes: list
    gaps: list

    @property
    def cumulative(self) -> list[float]:
        return cumulative_regret(self.gaps)

    def record(self, k: int, gap: float) -> None:
        self.episodes.append(k)
        self.gaps.append(gap)

    @classmethod
    def empty(cls) -> "RegretLedger":
        return cls([], [])
