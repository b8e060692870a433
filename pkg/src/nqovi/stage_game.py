"""
Normal-form stage games and Nash equilibrium solvers.

Solver cascade used by the learner: pure enumeration, then exact support
enumeration for two players, then regret matching as the approximate fallback.
Every result carries its independently recomputed exploitability.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import CapacityError, NumericError, SolverError

log = logging.getLogger(__name__)

PURE_GUARD = 10**6
DEFAULT_APPROX_EPS = 1e-6
DEFAULT_APPROX_ITERS = 100_000
BIMATRIX_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class StageGame:
    """payoffs[i] is agent i's payoff tensor indexed by (a_1, ..., a_n)."""

    payoffs: tuple[np.ndarray, ...]

    def __post_init__(self):
        pay = tuple(np.asarray(g, dtype=np.float64) for g in self.payoffs)
        if not pay:
            raise ValueError("a stage game needs at least one agent")
        shape = pay[0].shape
        if len(shape) != len(pay):
            raise ValueError(f"payoff tensors must have {len(pay)} axes, got shape {shape}")
        for g in pay:
            if g.shape != shape:
                raise ValueError("payoff tensors must share one shape")
            if not np.all(np.isfinite(g)):
                raise NumericError("stage game payoffs must be finite")
        object.__setattr__(self, "payoffs", pay)

    @property
    def n(self) -> int:
        return len(self.payoffs)

    @property
    def action_dims(self) -> tuple[int, ...]:
        return self.payoffs[0].shape

    @classmethod
    def from_flat(cls, values: np.ndarray, action_dims: Sequence[int]) -> "StageGame":
        """values: (|A|, n) payoffs over flat joint actions."""
        values = np.asarray(values, dtype=np.float64)
        return cls(tuple(values[:, i].reshape(tuple(action_dims)) for i in range(values.shape[1])))


@dataclass(frozen=True, eq=False)
class MixedProfile:
    strategies: tuple[np.ndarray, ...]

    def __post_init__(self):
        strat = []
        for nu in self.strategies:
            nu = np.asarray(nu, dtype=np.float64)
            if nu.ndim != 1 or np.any(nu < -1e-12) or abs(nu.sum() - 1.0) > 1e-12:
                raise ValueError(f"not a probability vector: {nu}")
            strat.append(nu)
        object.__setattr__(self, "strategies", tuple(strat))

    @classmethod
    def pure(cls, action: Sequence[int], action_dims: Sequence[int]) -> "MixedProfile":
        strat = []
        for a, dim in zip(action, action_dims):
            nu = np.zeros(dim)
            nu[a] = 1.0
            strat.append(nu)
        return cls(tuple(strat))

    @classmethod
    def uniform(cls, action_dims: Sequence[int]) -> "MixedProfile":
        return cls(tuple(np.full(dim, 1.0 / dim) for dim in action_dims))

    def joint(self) -> np.ndarray:
        """Product measure as a flat vector over joint actions (row-major)."""
        out = np.ones(1)
        for nu in self.strategies:
            out = np.outer(out, nu).ravel()
        return out

    def __eq__(self, other):
        return (isinstance(other, MixedProfile) and len(self.strategies) == len(other.strategies)
                and all(np.array_equal(a, b) for a, b in zip(self.strategies, other.strategies)))


@dataclass(frozen=True, eq=False)
class SolveResult:
    profile: MixedProfile
    exploitability: float
    solver: str            # "pure" | "bimatrix_exact" | "approx"
    iterations: int = 0
    converged: bool = True


# --------------------------------------------------------------------------
# evaluation helpers


def _contract_others(g: np.ndarray, strategies, i: int) -> np.ndarray:
    """E_{a_-i ~ nu_-i} g(., a_-i) as a vector over agent i's actions."""
    out = np.moveaxis(g, i, 0)
    for nu in (s for j, s in enumerate(strategies) if j != i):
        # after moveaxis the remaining axes keep their relative order
        out = np.tensordot(out, nu, axes=([1], [0]))
    return out


def action_values(game: StageGame, profile: MixedProfile, i: int) -> np.ndarray:
    return _contract_others(game.payoffs[i], profile.strategies, i)


def expected_payoffs(game: StageGame, profile: MixedProfile) -> np.ndarray:
    joint = profile.joint()
    return np.array([g.ravel() @ joint for g in game.payoffs])


def deviation_gains(game: StageGame, profile: MixedProfile) -> np.ndarray:
    gains = np.empty(game.n)
    for i in range(game.n):
        vals = action_values(game, profile, i)
        gains[i] = vals.max() - vals @ profile.strategies[i]
    return gains


def exploitability(game: StageGame, profile: MixedProfile) -> float:
    """Largest gain any single agent obtains by a unilateral deviation (>= 0)."""
    if len(profile.strategies) != game.n or any(
            len(s) != dim for s, dim in zip(profile.strategies, game.action_dims)):
        raise ValueError("profile shape does not match game")
    return max(0.0, float(deviation_gains(game, profile).max()))


def build_stage_game(q_functions: Sequence[Callable[[int, tuple], float]], x: int,
                     action_dims: Sequence[int]) -> StageGame:
    """g_i[a] = Q_i(x, a) for every joint action a."""
    action_dims = tuple(action_dims)
    tensors = []
    for q in q_functions:
        g = np.empty(action_dims)
        for a in itertools.product(*(range(k) for k in action_dims)):
            g[a] = q(x, a)
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite Q value at state {x}")
        tensors.append(g)
    return StageGame(tuple(tensors))


# --------------------------------------------------------------------------
# solvers


def pure_nash_mask(game: StageGame) -> np.ndarray:
    mask = np.ones(game.action_dims, dtype=bool)
    for i, g in enumerate(game.payoffs):
        mask &= g >= g.max(axis=i, keepdims=True)
    return mask


def solve_pure(game: StageGame) -> MixedProfile | None:
    """Lexicographically smallest pure Nash equilibrium, or None."""
    size = int(np.prod(game.action_dims))
    if size > PURE_GUARD:
        raise CapacityError(f"{size} joint actions exceed the enumeration guard {PURE_GUARD}")
    mask = pure_nash_mask(game).ravel()
    if not mask.any():
        return None
    idx = int(np.argmax(mask))
    return MixedProfile.pure(np.unravel_index(idx, game.action_dims), game.action_dims)


def _support_pairs(m: int, n: int):
    """Support pairs, smaller total size first, then lexicographic."""
    rows = [s for k in range(1, m + 1) for s in itertools.combinations(range(m), k)]
    cols = [s for k in range(1, n + 1) for s in itertools.combinations(range(n), k)]
    pairs = [(I, J) for I in rows for J in cols]
    pairs.sort(key=lambda p: (len(p[0]) + len(p[1]), len(p[0]), p[0], p[1]))
    return pairs


def _indifferent_mix(M: np.ndarray) -> np.ndarray | None:
    """Probability vector y with M @ y constant, or None if unsolvable.

    M rows are the indifferent player's actions restricted to the support.
    """
    k_rows, k_cols = M.shape
    A = np.zeros((k_rows + 1, k_cols + 1))
    A[:k_rows, :k_cols] = M
    A[:k_rows, k_cols] = -1.0
    A[k_rows, :k_cols] = 1.0
    b = np.zeros(k_rows + 1)
    b[k_rows] = 1.0
    if k_rows == k_cols:
        try:
            sol = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            return None
        if np.linalg.cond(A) > 1e12:
            return None
    else:
        sol, *_ = np.linalg.lstsq(A, b, rcond=None)
        if np.abs(A @ sol - b).max() > 1e-12:
            return None
    y = sol[:k_cols]
    if not np.all(np.isfinite(y)) or y.min() < -1e-12:
        return None
    y = np.clip(y, 0.0, None)
    return y / y.sum()


def solve_bimatrix(game: StageGame, min_support: int = 1,
                   tol: float = BIMATRIX_TOL) -> SolveResult:
    """Exact mixed equilibrium of a two-player game by support enumeration.

    ``min_support`` > 1 skips support pairs where either side is smaller, e.g.
    ``min_support=2`` excludes pure strategies for one of the players.
    """
    if game.n != 2:
        raise ValueError(f"solve_bimatrix needs n = 2, got {game.n}")
    A, B = game.payoffs
    m, n = A.shape
    tried = 0
    for I, J in _support_pairs(m, n):
        if len(I) < min_support or len(J) < min_support:
            continue
        tried += 1
        # column mix makes the row player indifferent over I, and vice versa
        y = _indifferent_mix(A[np.ix_(I, J)])
        if y is None:
            continue
        x = _indifferent_mix(B[np.ix_(I, J)].T)
        if x is None:
            continue
        nu1 = np.zeros(m)
        nu1[list(I)] = x
        nu2 = np.zeros(n)
        nu2[list(J)] = y
        profile = MixedProfile((nu1, nu2))
        eps = exploitability(game, profile)
        if eps <= tol:
            return SolveResult(profile, eps, "bimatrix_exact", iterations=tried)
    raise SolverError("support enumeration found no equilibrium (degenerate game)")


def solve_approx(game: StageGame, eps: float = DEFAULT_APPROX_EPS,
                 max_iters: int = DEFAULT_APPROX_ITERS, check_every: int = 10) -> SolveResult:
    """Regret matching from uniform strategies; returns the time-averaged profile.

    Regrets use exact expected payoffs (no sampling), so the run is deterministic.
    """
    if eps <= 0:
        raise ValueError("target exploitability must be positive")
    dims = game.action_dims
    regrets = [np.zeros(k) for k in dims]
    current = [np.full(k, 1.0 / k) for k in dims]
    totals = [np.zeros(k) for k in dims]
    best = None
    for t in range(1, max_iters + 1):
        for i in range(game.n):
            totals[i] += current[i]
        vals = [_contract_others(game.payoffs[i], current, i) for i in range(game.n)]
        for i in range(game.n):
            regrets[i] += vals[i] - vals[i] @ current[i]
            pos = np.maximum(regrets[i], 0.0)
            s = pos.sum()
            current[i] = pos / s if s > 0 else np.full(dims[i], 1.0 / dims[i])
        if t % check_every == 0 or t == max_iters:
            avg = MixedProfile(tuple(tot / tot.sum() for tot in totals))
            e = exploitability(game, avg)
            if best is None or e < best.exploitability:
                best = SolveResult(avg, e, "approx", iterations=t, converged=e <= eps)
            if e <= eps:
                return best
    log.warning("regret matching stopped at exploitability %.3g after %d iterations",
                best.exploitability, max_iters)
    return SolveResult(best.profile, best.exploitability, "approx", iterations=max_iters,
                       converged=False)


@dataclass
class SolverSettings:
    approx_eps: float = DEFAULT_APPROX_EPS
    approx_iters: int = DEFAULT_APPROX_ITERS


def solve(game: StageGame, settings: SolverSettings | None = None) -> SolveResult:
    """Cascade: pure -> exact bimatrix (n = 2) -> regret matching."""
    settings = settings or SolverSettings()
    pure = solve_pure(game)
    if pure is not None:
        return SolveResult(pure, exploitability(game, pure), "pure")
    if game.n == 2:
        try:
            return solve_bimatrix(game)
        except SolverError:
            log.info("support enumeration failed on a degenerate game; using regret matching")
    return solve_approx(game, settings.approx_eps, settings.approx_iters)


# --------------------------------------------------------------------------
# equilibrium classes


@dataclass(frozen=True)
class EquilibriumFlags:
    is_nash: bool
    is_global_optimal: bool
    is_saddle: bool


def classify(game: StageGame, profile: MixedProfile, tol: float = 1e-9) -> EquilibriumFlags:
    """Nash / global-optimal / saddle tests.

    Expected payoffs are multilinear in the strategies, so each condition only
    needs to be checked against pure deviations.
    """
    values = expected_payoffs(game, profile)
    is_nash = exploitability(game, profile) <= tol
    is_global = is_nash and all(values[i] >= g.max() - tol for i, g in enumerate(game.payoffs))
    # opponents deviating jointly (possibly correlated) can only lower agent i's payoff
    opp_ok = True
    for i, g in enumerate(game.payoffs):
        own = np.tensordot(np.moveaxis(g, i, 0), profile.strategies[i], axes=([0], [0]))
        if values[i] > own.min() + tol:
            opp_ok = False
            break
    return EquilibriumFlags(is_nash, is_global, is_nash and opp_ok)
