"""
Episodic linear Markov games on finite state spaces.

A game is described by a feature map phi(x, a) in R^d, per-step transition
measures mu_h (stored as a d x |S| matrix) and per-step, per-agent reward
parameters theta_h^i. The explicit kernels

    P_h(x' | x, a) = <phi(x, a), mu_h(x')>
    r_h^i(x, a)    = <phi(x, a), theta_h^i>

are materialized once at construction so that the exact oracle can work on
dense tables. Joint actions are dense integers: the mixed-radix (row-major)
encoding of (a_1, ..., a_n).

Steps are 0-based in code (h = 0 .. H-1) everywhere in this package.
"""
from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, GenerationError, ModelValidationError

FEATURE_KINDS = ("one_hot", "simplex", "explicit")

ROW_SUM_TOL = 1e-9
REWARD_TOL = 1e-9
NEG_CLAMP = 1e-12


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=np.float64)
    out.setflags(write=False)
    return out


def joint_action_count(action_dims: Sequence[int]) -> int:
    return int(np.prod(action_dims, dtype=np.int64))


def joint_index(action, action_dims: Sequence[int]) -> int:
    """Mixed-radix index of a joint action; accepts an int (returned as is) or a tuple."""
    n_joint = joint_action_count(action_dims)
    if isinstance(action, (int, np.integer)):
        if not 0 <= action < n_joint:
            raise IndexError(f"joint action {action} out of range [0, {n_joint})")
        return int(action)
    action = tuple(int(a) for a in action)
    if len(action) != len(action_dims):
        raise IndexError(f"joint action {action} has {len(action)} components, expected {len(action_dims)}")
    for ai, dim in zip(action, action_dims):
        if not 0 <= ai < dim:
            raise IndexError(f"action component {ai} out of range [0, {dim})")
    return int(np.ravel_multi_index(action, tuple(action_dims)))


def joint_action_tuple(index: int, action_dims: Sequence[int]) -> tuple[int, ...]:
    return tuple(int(a) for a in np.unravel_index(int(index), tuple(action_dims)))


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Dense feature table phi[x, a, :] over states and joint actions."""

    table: np.ndarray
    action_dims: tuple[int, ...]
    kind: str = "explicit"

    def __post_init__(self):
        table = _frozen(self.table)
        if table.ndim != 3:
            raise ConfigurationError("feature table must have shape (|S|, |A|, d)")
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "action_dims", tuple(int(a) for a in self.action_dims))
        if self.kind not in FEATURE_KINDS:
            raise ConfigurationError(f"unknown feature kind {self.kind!r}")
        if table.shape[1] != joint_action_count(self.action_dims):
            raise ConfigurationError("feature table action axis does not match action_dims")
        if self.dim < 2:
            raise ConfigurationError(f"feature dimension must be >= 2, got {self.dim}")
        if not np.all(np.isfinite(table)):
            raise ConfigurationError("feature table contains non-finite entries")

    @property
    def dim(self) -> int:
        return self.table.shape[2]

    @property
    def num_states(self) -> int:
        return self.table.shape[0]

    def __call__(self, x: int, a) -> np.ndarray:
        if not 0 <= int(x) < self.num_states:
            raise IndexError(f"state {x} out of range [0, {self.num_states})")
        return self.table[int(x), joint_index(a, self.action_dims)]

    def max_norm(self) -> float:
        return float(np.linalg.norm(self.table, axis=-1).max())


def make_tabular_features(num_states: int, action_dims: Sequence[int]) -> FeatureMap:
    """One-hot embedding with d = |S| * prod |A_i|.

    The 1-entry of phi(x, a) sits at the lexicographic rank of (x, a_1, ..., a_n).
    """
    sizes = [int(num_states), *[int(a) for a in action_dims]]
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ConfigurationError(f"all sizes must be >= 1, got {sizes}")
    d = math.prod(sizes)
    if d > sys.maxsize:
        raise ConfigurationError(f"one-hot dimension {d} overflows the platform integer")
    if d < 2:
        raise ConfigurationError("one-hot dimension must be >= 2 (non-scalar features)")
    n_joint = d // num_states
    table = np.eye(d).reshape(num_states, n_joint, d)
    return FeatureMap(table, tuple(sizes[1:]), kind="one_hot")


@dataclass(frozen=True, eq=False)
class ModelValidationReport:
    max_row_sum_deviation: float
    min_kernel_entry: float
    reward_range_violations: int
    min_reward: float
    max_reward: float
    theta_norms: np.ndarray          # (H, n)
    mu_norm_sums: np.ndarray         # (H,), sum_x' ||mu_h(x')||
    max_feature_norm: float
    feature_norm_ok: bool
    theta_norm_ok: bool
    mu_norm_ok: bool

    @property
    def kernels_ok(self) -> bool:
        return self.max_row_sum_deviation <= ROW_SUM_TOL and self.min_kernel_entry >= -NEG_CLAMP

    @property
    def rewards_ok(self) -> bool:
        return self.reward_range_violations == 0

    def as_dict(self) -> dict:
        return {
            "max_row_sum_deviation": self.max_row_sum_deviation,
            "min_kernel_entry": self.min_kernel_entry,
            "reward_range_violations": self.reward_range_violations,
            "min_reward": self.min_reward,
            "max_reward": self.max_reward,
            "theta_norms": self.theta_norms.tolist(),
            "mu_norm_sums": self.mu_norm_sums.tolist(),
            "max_feature_norm": self.max_feature_norm,
            "feature_norm_ok": self.feature_norm_ok,
            "theta_norm_ok": self.theta_norm_ok,
            "mu_norm_ok": self.mu_norm_ok,
            "kernels_ok": self.kernels_ok,
            "rewards_ok": self.rewards_ok,
        }


@dataclass(frozen=True, eq=False)
class LinearMG:
    """Episodic general-sum linear Markov game with finite states.

    Arrays are read-only after construction. Derived tables:
        P[h, x, a, x']  transition kernel
        R[h, i, x, a]   deterministic rewards
    """

    features: FeatureMap
    mu: np.ndarray                 # (H, d, |S|)
    theta: np.ndarray              # (H, n, d)
    s0: int = 0
    seed: int | None = None
    P: np.ndarray = field(init=False, repr=False)
    R: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mu = _frozen(self.mu)
        theta = _frozen(self.theta)
        d, S = self.features.dim, self.features.num_states
        if mu.ndim != 3 or mu.shape[1:] != (d, S):
            raise ConfigurationError(f"mu must have shape (H, {d}, {S}), got {mu.shape}")
        H = mu.shape[0]
        if H < 2:
            raise ConfigurationError(f"horizon must be >= 2, got {H}")
        if theta.ndim != 3 or theta.shape[0] != H or theta.shape[2] != d:
            raise ConfigurationError(f"theta must have shape ({H}, n, {d}), got {theta.shape}")
        if theta.shape[1] != len(self.features.action_dims):
            raise ConfigurationError("theta agent axis does not match the number of action dims")
        if not 0 <= int(self.s0) < S:
            raise ConfigurationError(f"initial state {self.s0} out of range")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "s0", int(self.s0))

        phi = self.features.table
        P = np.einsum("xad,hdy->hxay", phi, mu)
        # tiny negative round-off is clamped; real violations survive for validate()
        P = np.where((P < 0) & (P >= -NEG_CLAMP), 0.0, P)
        R = np.einsum("xad,hid->hixa", phi, theta)
        object.__setattr__(self, "P", _frozen(P))
        object.__setattr__(self, "R", _frozen(R))

    @property
    def n(self) -> int:
        return self.theta.shape[1]

    @property
    def H(self) -> int:
        return self.mu.shape[0]

    @property
    def d(self) -> int:
        return self.features.dim

    @property
    def num_states(self) -> int:
        return self.features.num_states

    @property
    def action_dims(self) -> tuple[int, ...]:
        return self.features.action_dims

    @property
    def num_joint_actions(self) -> int:
        return joint_action_count(self.action_dims)

    @property
    def feature_kind(self) -> str:
        return self.features.kind

    def feature(self, x: int, a) -> np.ndarray:
        return self.features(x, a)

    def reward(self, h: int, x: int, a) -> np.ndarray:
        """Per-agent rewards at step h (0-based)."""
        return self.R[h, :, x, joint_index(a, self.action_dims)]

    def check(self) -> ModelValidationReport:
        """Validate and raise if kernels or rewards are malformed."""
        report = validate(self)
        if not report.kernels_ok:
            raise ModelValidationError(
                f"transition kernels are not stochastic (row-sum deviation "
                f"{report.max_row_sum_deviation:.3g}, min entry {report.min_kernel_entry:.3g})")
        if not report.rewards_ok:
            raise ModelValidationError(
                f"{report.reward_range_violations} rewards fall outside [0, 1]")
        if not report.feature_norm_ok:
            raise ModelValidationError(f"feature norm {report.max_feature_norm:.6g} exceeds 1")
        return report


def validate(mg: LinearMG) -> ModelValidationReport:
    d = mg.d
    row_sums = mg.P.sum(axis=-1)
    R = mg.R
    bad_rewards = int(np.count_nonzero((R < -REWARD_TOL) | (R > 1 + REWARD_TOL)))
    theta_norms = np.linalg.norm(mg.theta, axis=-1)
    mu_norm_sums = np.linalg.norm(mg.mu, axis=1).sum(axis=-1)
    max_phi = mg.features.max_norm()
    return ModelValidationReport(
        max_row_sum_deviation=float(np.abs(row_sums - 1.0).max()),
        min_kernel_entry=float(mg.P.min()),
        reward_range_violations=bad_rewards,
        min_reward=float(R.min()),
        max_reward=float(R.max()),
        theta_norms=theta_norms,
        mu_norm_sums=mu_norm_sums,
        max_feature_norm=max_phi,
        feature_norm_ok=bool(max_phi <= 1 + 1e-12),
        theta_norm_ok=bool(np.all(theta_norms <= math.sqrt(d) + 1e-12)),
        mu_norm_ok=bool(np.all(mu_norm_sums <= math.sqrt(d) + 1e-12)),
    )


def _check_sizes(d, num_states, action_dims, H, n):
    if d is not None and d < 2:
        raise GenerationError(f"feature dimension d={d} violates d >= 2")
    if H < 2:
        raise GenerationError(f"horizon H={H} violates H >= 2")
    if num_states < 1:
        raise GenerationError(f"|S|={num_states} violates |S| >= 1")
    if n < 1:
        raise GenerationError(f"n={n} violates n >= 1")
    if len(action_dims) != n:
        raise GenerationError(f"got {len(action_dims)} action dims for n={n} agents")
    if any(a < 1 for a in action_dims):
        raise GenerationError(f"action dims {list(action_dims)} violate |A_i| >= 1")


def random_linear_mg(seed: int, d: int, num_states: int, action_dims: Sequence[int],
                     H: int, n: int | None = None) -> LinearMG:
    """Random linear MG whose kernels are stochastic by construction.

    phi(x, a) is drawn uniformly on the probability simplex of R^d and every row
    mu_h[j, :] is a distribution over S, so each P_h(.|x, a) is a convex
    combination of distributions. theta entries are uniform on [0, 1]; with
    simplex features the realized rewards are convex combinations of them and
    stay in [0, 1].
    """
    action_dims = tuple(int(a) for a in action_dims)
    n = len(action_dims) if n is None else int(n)
    _check_sizes(d, num_states, action_dims, H, n)
    rng = np.random.default_rng(seed)
    n_joint = joint_action_count(action_dims)
    phi = rng.dirichlet(np.ones(d), size=(num_states, n_joint))
    mu = rng.dirichlet(np.ones(num_states), size=(H, d)) if num_states > 1 else np.ones((H, d, 1))
    theta = rng.uniform(0.0, 1.0, size=(H, n, d))
    lo = np.einsum("xad,hid->hixa", phi, theta).min()
    if lo < 0:  # pragma: no cover - impossible with simplex features
        raise GenerationError("rewards fell below 0")
    mg = LinearMG(FeatureMap(phi, action_dims, kind="simplex"), mu, theta, s0=0, seed=seed)
    mg.check()
    return mg


def _tabular_from_tables(kernels, rewards, S, action_dims, n, s0, seed):
    H = kernels.shape[0]
    feats = make_tabular_features(S, action_dims)
    d = feats.dim
    # one-hot rank of (x, a) is x * |A| + a, so mu_h[(x, a), x'] = P_h(x' | x, a)
    mu = kernels.reshape(H, d, S)
    theta = rewards.reshape(H, n, d)
    return LinearMG(feats, mu, theta, s0=s0, seed=seed)


def tabular_mg_from_tables(kernels, rewards, action_dims: Sequence[int], s0: int = 0,
                           seed: int | None = None) -> LinearMG:
    """One-hot linear MG realizing explicit tables exactly.

    kernels: (H, |S|, |A|, |S|), rewards: (H, n, |S|, |A|), joint actions flat.
    """
    kernels = np.asarray(kernels, dtype=np.float64)
    rewards = np.asarray(rewards, dtype=np.float64)
    action_dims = tuple(int(a) for a in action_dims)
    H, S, n_joint, S2 = kernels.shape
    if S2 != S or n_joint != joint_action_count(action_dims):
        raise ConfigurationError("kernel table shape does not match |S| and action_dims")
    if rewards.shape != (H, len(action_dims), S, n_joint):
        raise ConfigurationError(f"reward table must have shape {(H, len(action_dims), S, n_joint)}")
    return _tabular_from_tables(kernels, rewards, S, action_dims, len(action_dims), s0, seed)


def random_tabular_mg(seed: int, num_states: int, action_dims: Sequence[int], H: int,
                      n: int | None = None, concentration: float = 1.0) -> LinearMG:
    """Random tabular game (Dirichlet kernels, uniform rewards) in one-hot features."""
    action_dims = tuple(int(a) for a in action_dims)
    n = len(action_dims) if n is None else int(n)
    _check_sizes(None, num_states, action_dims, H, n)
    if num_states * joint_action_count(action_dims) < 2:
        raise GenerationError("one-hot dimension |S||A| must be >= 2")
    rng = np.random.default_rng(seed)
    n_joint = joint_action_count(action_dims)
    kernels = rng.dirichlet(np.full(num_states, concentration), size=(H, num_states, n_joint))
    rewards = rng.uniform(0.0, 1.0, size=(H, n, num_states, n_joint))
    mg = tabular_mg_from_tables(kernels, rewards, action_dims, s0=0, seed=seed)
    mg.check()
    return mg


# --------------------------------------------------------------------------
# JSON serialization


def model_to_dict(mg: LinearMG) -> dict:
    doc = {
        "n": mg.n,
        "H": mg.H,
        "num_states": mg.num_states,
        "action_dims": list(mg.action_dims),
        "d": mg.d,
        "feature_kind": mg.feature_kind,
        "mu": mg.mu.tolist(),
        "theta": mg.theta.tolist(),
        "s0": mg.s0,
        "seed": mg.seed,
    }
    if mg.feature_kind != "one_hot":
        doc["phi"] = mg.features.table.tolist()
    return doc


def model_from_dict(doc: dict) -> LinearMG:
    try:
        action_dims = tuple(int(a) for a in doc["action_dims"])
        S = int(doc["num_states"])
        kind = doc["feature_kind"]
        if kind == "one_hot":
            feats = make_tabular_features(S, action_dims)
        else:
            feats = FeatureMap(np.asarray(doc["phi"], dtype=np.float64), action_dims, kind=kind)
        mg = LinearMG(feats, np.asarray(doc["mu"], dtype=np.float64),
                      np.asarray(doc["theta"], dtype=np.float64),
                      s0=int(doc.get("s0", 0)), seed=doc.get("seed"))
    except KeyError as exc:
        raise ConfigurationError(f"model document is missing field {exc.args[0]!r}") from None
    for key, value in (("n", mg.n), ("H", mg.H), ("d", mg.d)):
        if key in doc and int(doc[key]) != value:
            raise ConfigurationError(f"model field {key}={doc[key]} disagrees with array shapes ({value})")
    return mg


def save_model(mg: LinearMG, path) -> None:
    # float repr is the shortest string that round-trips exactly
    Path(path).write_text(json.dumps(model_to_dict(mg)))


def load_model(path) -> LinearMG:
    return model_from_dict(json.loads(Path(path).read_text()))


def models_equal(a: LinearMG, b: LinearMG) -> bool:
    return (a.action_dims == b.action_dims and a.s0 == b.s0 and a.feature_kind == b.feature_kind
            and np.array_equal(a.features.table, b.features.table)
            and np.array_equal(a.mu, b.mu) and np.array_equal(a.theta, b.theta))
