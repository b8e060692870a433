"""
Nash Q-learning with optimistic value iteration on linear Markov games.

Each episode runs a backward pass over steps (ridge regression per agent with
stage-game Nash targets, clipped optimistic Q-functions) followed by a forward
rollout where the agents play the Nash equilibrium of the stage game at the
realized state.

Indexing: episodes k are 1-based (k = 1 has an empty history), steps h are
0-based (0 .. H-1).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, ContractError, NumericError
from .linear_mg import LinearMG
from .oracle import JointPolicy
from .stage_game import MixedProfile, SolveResult, SolverSettings, StageGame, solve

log = logging.getLogger(__name__)

# named RNG streams derived from one root seed
STREAMS = {"model": 0, "action": 1, "transition": 2, "audit": 3}


def stream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), STREAMS[name]])


def beta_from_theorem(c_beta: float, d: int, K: int, H: int, delta: float) -> float:
    """c_beta * d * H * sqrt(iota) with iota = ln(d K H / delta)."""
    if not 0 < delta < 1:
        raise ConfigurationError(f"delta must lie in (0, 1), got {delta}")
    if min(d, K, H) < 1:
        raise ConfigurationError("d, K and H must be >= 1")
    ratio = d * K * H / delta
    if ratio <= 1:
        raise ConfigurationError(f"iota = ln({ratio:.6g}) is not positive")
    return c_beta * d * H * math.sqrt(math.log(ratio))


@dataclass
class LearnerConfig:
    K: int
    lam: float = 1.0
    c_beta: float = 1.0
    beta: float | None = None      # overrides c_beta when set
    delta: float = 0.1
    refresh: int = 64
    seed: int = 0
    solver: SolverSettings = field(default_factory=SolverSettings)
    store_gram: bool = True
    track_drift: bool = True

    def __post_init__(self):
        if self.K < 1:
            raise ConfigurationError(f"K must be >= 1, got {self.K}")
        if not self.lam > 0:
            raise ConfigurationError(f"lambda must be > 0, got {self.lam}")
        if self.beta is not None and self.beta < 0:
            raise ConfigurationError(f"beta must be >= 0, got {self.beta}")
        if self.c_beta < 0:
            raise ConfigurationError(f"c_beta must be >= 0, got {self.c_beta}")
        if self.refresh < 1:
            raise ConfigurationError(f"refresh period must be >= 1, got {self.refresh}")

    def resolve_beta(self, d: int, H: int) -> float:
        if self.beta is not None:
            return float(self.beta)
        return beta_from_theorem(self.c_beta, d, self.K, H, self.delta)

    def as_dict(self) -> dict:
        return {"K": self.K, "lambda": self.lam, "c_beta": self.c_beta, "beta": self.beta,
                "delta": self.delta, "refresh": self.refresh, "seed": self.seed,
                "approx_eps": self.solver.approx_eps, "approx_iters": self.solver.approx_iters}

    @classmethod
    def from_dict(cls, doc: dict) -> "LearnerConfig":
        return cls(K=int(doc["K"]), lam=float(doc["lambda"]), c_beta=float(doc["c_beta"]),
                   beta=None if doc.get("beta") is None else float(doc["beta"]),
                   delta=float(doc["delta"]), refresh=int(doc["refresh"]), seed=int(doc["seed"]),
                   solver=SolverSettings(float(doc.get("approx_eps", 1e-6)),
                                         int(doc.get("approx_iters", 100_000))))


class GramState:
    """Regularized covariance lambda*I + sum phi phi^T and its maintained inverse.

    The inverse is updated by Sherman-Morrison and recomputed from the matrix
    every ``refresh`` updates.
    """

    def __init__(self, d: int, lam: float = 1.0, refresh: int = 64, track_drift: bool = False):
        self.d = d
        self.lam = lam
        self.refresh = refresh
        self.track_drift = track_drift
        self.matrix = lam * np.eye(d)
        self.inverse = np.eye(d) / lam
        self.count = 0
        self._since_refresh = 0
        self.max_drift_refresh = 0.0
        self.max_drift_between = 0.0

    def drift(self) -> float:
        return float(np.abs(self.matrix @ self.inverse - np.eye(self.d)).max())

    def update(self, phi: np.ndarray) -> "GramState":
        phi = np.asarray(phi, dtype=np.float64)
        if not np.all(np.isfinite(phi)):
            raise NumericError("non-finite feature vector")
        self.matrix += np.outer(phi, phi)
        self.count += 1
        self._since_refresh += 1
        if self._since_refresh >= self.refresh:
            self.inverse = np.linalg.inv(self.matrix)
            self.inverse = 0.5 * (self.inverse + self.inverse.T)
            self._since_refresh = 0
            if self.track_drift:
                self.max_drift_refresh = max(self.max_drift_refresh, self.drift())
        else:
            u = self.inverse @ phi
            self.inverse -= np.outer(u, u) / (1.0 + phi @ u)
            if self.track_drift:
                self.max_drift_between = max(self.max_drift_between, self.drift())
        return self

    def potential(self, phi: np.ndarray) -> float:
        """phi^T Lambda^{-1} phi, with round-off negatives clamped to 0."""
        val = float(phi @ self.inverse @ phi)
        if val < -1e-12:
            raise NumericError(f"negative quadratic form {val}")
        return max(val, 0.0)


def gram_update(gs: GramState, phi: np.ndarray) -> GramState:
    return gs.update(phi)


def regress_weights(gs: GramState, features: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Lambda^{-1} sum_tau phi_tau * target_tau; targets may be (m,) or (m, n)."""
    features = np.asarray(features, dtype=np.float64).reshape(-1, gs.d)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape[0] != features.shape[0]:
        raise ContractError("features and targets must have the same length")
    return gs.inverse @ (features.T @ targets)


def optimistic_q_value(w: np.ndarray, beta: float, gs: GramState, phi: np.ndarray, H: float) -> float:
    return min(float(w @ phi) + beta * math.sqrt(gs.potential(phi)), float(H))


class OptimisticQ:
    """Clipped optimistic Q-functions of one episode for all agents and steps.

    ``weights[h]`` is (d, n); ``gram_inv[h]`` is Lambda_h^{-1}. Stage-game
    solutions are cached per (h, x) so every agent and every consumer (targets,
    rollout, regret evaluation) sees the same equilibrium.
    """

    def __init__(self, features: np.ndarray, action_dims, weights: np.ndarray,
                 gram_inv: np.ndarray, beta: float, H: int, solver: SolverSettings | None = None):
        self.features = features
        self.action_dims = tuple(action_dims)
        self.weights = weights
        self.gram_inv = gram_inv
        self.beta = beta
        self.H = H
        self.solver = solver or SolverSettings()
        self._solutions: dict[tuple[int, int], SolveResult] = {}

    @property
    def n(self) -> int:
        return self.weights.shape[2]

    def values(self, h: int, x: int) -> np.ndarray:
        """Q_h^{i}(x, a) for all joint actions; shape (|A|, n). Zero beyond the horizon."""
        if h >= self.H:
            return np.zeros((self.features.shape[1], self.n))
        phi = self.features[x]
        pot = np.einsum("ad,de,ae->a", phi, self.gram_inv[h], phi)
        if pot.min() < -1e-12:
            raise NumericError(f"negative quadratic form {pot.min()}")
        bonus = self.beta * np.sqrt(np.clip(pot, 0.0, None))
        return np.minimum(phi @ self.weights[h] + bonus[:, None], float(self.H))

    def stage_game(self, h: int, x: int) -> StageGame:
        return StageGame.from_flat(self.values(h, x), self.action_dims)

    def solution(self, h: int, x: int) -> SolveResult:
        key = (h, int(x))
        res = self._solutions.get(key)
        if res is None:
            res = solve(self.stage_game(h, x), self.solver)
            if not res.converged:
                log.warning("stage game at h=%d x=%d solved only to exploitability %.3g",
                            h, x, res.exploitability)
            self._solutions[key] = res
        return res

    def profile(self, h: int, x: int) -> MixedProfile:
        return self.solution(h, x).profile

    def state_values(self, h: int, x: int) -> np.ndarray:
        """V_h^{i}(x) = E_{a ~ NE}[Q_h^i(x, a)] for all agents; zero at h = H."""
        if h >= self.H:
            return np.zeros(self.n)
        return self.profile(h, x).joint() @ self.values(h, x)

    def policy(self) -> JointPolicy:
        """The joint policy induced at every (h, x)."""
        S = self.features.shape[0]
        probs = [np.empty((self.H, S, dim)) for dim in self.action_dims]
        for h in range(self.H):
            for x in range(S):
                for i, nu in enumerate(self.profile(h, x).strategies):
                    probs[i][h, x] = nu
        return JointPolicy(probs)

    def solver_stats(self) -> dict:
        sols = list(self._solutions.values())
        tags = {"pure": 0, "bimatrix_exact": 0, "approx": 0}
        for s in sols:
            tags[s.solver] += 1
        return {"solves": len(sols), "max_eps": max((s.exploitability for s in sols), default=0.0),
                "not_converged": sum(not s.converged for s in sols), **tags}


def regression_targets(q: OptimisticQ, h: int, rewards: np.ndarray,
                       next_states: np.ndarray) -> np.ndarray:
    """r_h^i + E_{a ~ NE(x')}[Q_{h+1}^i(x', a)] for every past sample; shape (m, n).

    The equilibrium is solved once per distinct next state and shared by all agents.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.shape[0] == 0 or h + 1 >= q.H:
        return rewards.copy()
    uniq, inverse = np.unique(next_states, return_inverse=True)
    v = np.stack([q.state_values(h + 1, int(x)) for x in uniq])
    return rewards + v[inverse]


@dataclass
class Trajectory:
    states: np.ndarray     # (H + 1,), states[0] = s0
    actions: np.ndarray    # (H,), joint-action indices
    rewards: np.ndarray    # (H, n)
    features: np.ndarray   # (H, d)


@dataclass
class RunRecord:
    config: LearnerConfig
    beta: float
    states: np.ndarray         # (K, H + 1)
    actions: np.ndarray        # (K, H)
    rewards: np.ndarray        # (K, H, n)
    features: np.ndarray       # (K, H, d)
    weights: np.ndarray        # (K, H, n, d); weights[k-1] is w^{., k}
    potentials: np.ndarray     # (K, H); phi^T (Lambda^k_h)^{-1} phi at the realized step
    gram_inv: np.ndarray | None  # (K, H, d, d) or None
    played: list               # per episode, per step: MixedProfile at the realized state
    solver_stats: list         # per episode dicts
    max_drift_refresh: float = 0.0
    max_drift_between: float = 0.0

    @property
    def K(self) -> int:
        return self.states.shape[0]

    @property
    def bonuses(self) -> np.ndarray:
        return self.beta * np.sqrt(self.potentials)

    def trajectory(self, k: int) -> Trajectory:
        return Trajectory(self.states[k - 1], self.actions[k - 1], self.rewards[k - 1],
                          self.features[k - 1])

    def episode_q(self, k: int, mg: LinearMG) -> OptimisticQ:
        if self.gram_inv is None:
            raise ConfigurationError("run was recorded without Gram snapshots")
        return OptimisticQ(mg.features.table, mg.action_dims,
                           np.swapaxes(self.weights[k - 1], 1, 2), self.gram_inv[k - 1],
                           self.beta, mg.H, self.config.solver)


def sample_index(rng: np.random.Generator, p: np.ndarray) -> int:
    if np.any(p < -1e-12) or not np.isfinite(p).all() or abs(p.sum() - 1.0) > 1e-9:
        raise NumericError(f"malformed distribution {p}")
    idx = int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))
    return min(idx, len(p) - 1)


class NQOVI:
    """Online learner state. ``plan`` + ``run_episode`` make up one episode."""

    def __init__(self, mg: LinearMG, cfg: LearnerConfig):
        self.mg = mg
        self.cfg = cfg
        self.beta = cfg.resolve_beta(mg.d, mg.H)
        K, H, n, d = cfg.K, mg.H, mg.n, mg.d
        self.grams = [GramState(d, cfg.lam, cfg.refresh, cfg.track_drift) for _ in range(H)]
        self.states = np.zeros((K, H + 1), dtype=np.int64)
        self.actions = np.zeros((K, H), dtype=np.int64)
        self.rewards = np.zeros((K, H, n))
        self.features = np.zeros((K, H, d))
        self.weights = np.zeros((K, H, n, d))
        self.potentials = np.zeros((K, H))
        self.gram_inv = np.zeros((K, H, d, d)) if cfg.store_gram else None
        self.played: list = []
        self.solver_stats: list = []
        self.episodes = 0
        self._action_rng = stream(cfg.seed, "action")
        self._transition_rng = stream(cfg.seed, "transition")

    def plan(self) -> OptimisticQ:
        """Backward pass for the next episode k = episodes + 1."""
        mg, m = self.mg, self.episodes
        H = mg.H
        W = np.zeros((H, mg.d, mg.n))
        inv = np.stack([g.inverse.copy() for g in self.grams])
        q = OptimisticQ(mg.features.table, mg.action_dims, W, inv, self.beta, H, self.cfg.solver)
        for h in range(H - 1, -1, -1):
            if m == 0:
                continue
            y = regression_targets(q, h, self.rewards[:m, h], self.states[:m, h + 1])
            W[h] = regress_weights(self.grams[h], self.features[:m, h], y)
        return q

    def run_episode(self, q: OptimisticQ, replay: tuple[np.ndarray, np.ndarray] | None = None) -> Trajectory:
        """Forward rollout under the stage-game equilibria of ``q``.

        ``replay=(states, actions)`` follows a recorded trajectory instead of sampling.
        """
        mg, k = self.mg, self.episodes
        H = mg.H
        x = mg.s0
        played = []
        self.states[k, 0] = x
        for h in range(H):
            profile = q.profile(h, x)
            played.append(profile)
            if replay is None:
                a = self._sample_joint(profile)
            else:
                a = int(replay[1][h])
            phi = mg.features.table[x, a]
            self.actions[k, h] = a
            self.rewards[k, h] = mg.R[h, :, x, a]
            self.features[k, h] = phi
            self.potentials[k, h] = self.grams[h].potential(phi)
            x = sample_index(self._transition_rng, mg.P[h, x, a]) if replay is None else int(replay[0][h + 1])
            self.states[k, h + 1] = x
        self.weights[k] = np.swapaxes(q.weights, 1, 2)
        if self.gram_inv is not None:
            self.gram_inv[k] = q.gram_inv
        for h in range(H):
            self.grams[h].update(self.features[k, h])
        self.played.append(played)
        self.episodes += 1
        return self.trajectory(self.episodes)

    def _sample_joint(self, profile: MixedProfile) -> int:
        acts = [sample_index(self._action_rng, nu) for nu in profile.strategies]
        return int(np.ravel_multi_index(acts, self.mg.action_dims))

    def trajectory(self, k: int) -> Trajectory:
        return Trajectory(self.states[k - 1].copy(), self.actions[k - 1].copy(),
                          self.rewards[k - 1].copy(), self.features[k - 1].copy())

    def record(self) -> RunRecord:
        m = self.episodes
        return RunRecord(
            config=self.cfg, beta=self.beta, states=self.states[:m], actions=self.actions[:m],
            rewards=self.rewards[:m], features=self.features[:m], weights=self.weights[:m],
            potentials=self.potentials[:m],
            gram_inv=None if self.gram_inv is None else self.gram_inv[:m],
            played=self.played, solver_stats=self.solver_stats,
            max_drift_refresh=max(g.max_drift_refresh for g in self.grams),
            max_drift_between=max(g.max_drift_between for g in self.grams))


EpisodeCallback = Callable[[int, OptimisticQ, Trajectory], None]


def run(mg: LinearMG, cfg: LearnerConfig, on_episode: EpisodeCallback | None = None,
        replay: RunRecord | None = None) -> RunRecord:
    """Run K episodes. ``on_episode(k, q, trajectory)`` is called after each rollout.

    With ``replay`` the recorded state/action sequence is followed, which
    reconstructs every weight and Gram matrix without touching the RNGs.
    """
    learner = NQOVI(mg, cfg)
    if replay is not None and replay.K < cfg.K:
        raise ConfigurationError(f"replay holds {replay.K} episodes, config asks for {cfg.K}")
    for k in range(1, cfg.K + 1):
        q = learner.plan()
        rp = None if replay is None else (replay.states[k - 1], replay.actions[k - 1])
        traj = learner.run_episode(q, rp)
        if on_episode is not None:
            on_episode(k, q, traj)
        learner.solver_stats.append(q.solver_stats())
    return learner.record()
