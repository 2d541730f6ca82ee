"""Core data model for finite games and target behaviors.

Joint objects (strategies, stage policies, transition rows, reward tensors)
are stored as dense numpy arrays whose joint-action axes are indexed in
row-major order of the per-player action indices.  Players, actions, stages
and states are all 0-based everywhere, including reports and file formats.

Probability hygiene: constructors require entries >= 0 summing to 1 within
``PROB_ATOL``; the ingestion helper :func:`clean_distribution` additionally
clamps float dust in [-NEG_CLAMP, 0] to exact zeros and renormalizes, so that
support queries (exact ``> 0``) are stable afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

# Tolerance for any stored probability vector to sum to 1.
PROB_ATOL = 1e-9
# Negative entries above this magnitude are float dust and get clamped to 0.
NEG_CLAMP = 1e-12
# Two conditional distributions are considered equal below this L-inf gap.
COND_ATOL = 1e-9


class ShapeError(ValueError):
    """An array has the wrong rank or axis lengths for its role."""


class DistributionError(ValueError):
    """A vector that must be a probability distribution is not one."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.flags.writeable = False
    return out


def clean_distribution(values, where: str = "distribution") -> np.ndarray:
    """Ingest raw numbers as a probability array (any shape, sums to 1 overall).

    Entries below ``-NEG_CLAMP`` are rejected; entries in ``[-NEG_CLAMP, 0]``
    are clamped to exact 0.  The total must be within ``PROB_ATOL`` of 1 and
    the array is renormalized to sum to exactly 1.0.  ``where`` names the
    offending field in error messages.
    """
    arr = np.array(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DistributionError(f"{where}: non-finite entry")
    if np.any(arr < -NEG_CLAMP):
        bad = float(arr.min())
        raise DistributionError(f"{where}: negative probability {bad}")
    arr[arr < 0.0] = 0.0
    total = float(arr.sum())
    if abs(total - 1.0) > PROB_ATOL:
        raise DistributionError(f"{where}: sums to {total}, not 1")
    return arr / total


def _check_distribution(arr: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise DistributionError(f"{where}: non-finite entry")
    if np.any(arr < 0.0):
        raise DistributionError(f"{where}: negative probability {float(arr.min())}")
    total = float(arr.sum())
    if abs(total - 1.0) > PROB_ATOL:
        raise DistributionError(f"{where}: sums to {total}, not 1")


@dataclass(frozen=True)
class JointMixedStrategy:
    """A joint distribution over action profiles of a normal-form game.

    ``probs`` has one axis per player; entry ``probs[a_0, ..., a_{n-1}]``
    is the probability of that action profile.
    """

    probs: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.probs, dtype=float)
        if arr.ndim < 1:
            raise ShapeError("joint strategy needs at least one player axis")
        _check_distribution(arr, "joint strategy")
        object.__setattr__(self, "probs", _freeze(arr))

    @property
    def num_players(self) -> int:
        return self.probs.ndim

    @property
    def action_counts(self) -> tuple[int, ...]:
        return self.probs.shape

    def marginal(self, player: int) -> np.ndarray:
        """Marginal action distribution of one player."""
        axes = tuple(ax for ax in range(self.probs.ndim) if ax != player)
        return self.probs.sum(axis=axes)

    def opponent_marginal(self, player: int) -> np.ndarray:
        """Joint marginal over everyone except ``player`` (their axes, in order)."""
        return self.probs.sum(axis=player)


@dataclass(frozen=True)
class Conditional:
    """Conditional opponent-profile distribution given one player's action.

    ``prob`` is the player's marginal mass on the action; ``dist`` is the
    normalized distribution over opponent profiles (axes of the other players,
    in order), or all zeros when ``prob`` is 0.
    """

    player: int
    action: int
    prob: float
    dist: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "dist", _freeze(self.dist))

    @property
    def is_zero(self) -> bool:
        return not np.any(self.dist > 0.0)

    def flat(self) -> np.ndarray:
        return self.dist.reshape(-1)


def conditional(sigma: JointMixedStrategy, player: int, action: int) -> Conditional:
    """Marginal mass and conditional opponent distribution for (player, action).

    Unsupported actions (zero marginal mass) get an all-zero ``dist``.
    """
    n = sigma.num_players
    if not 0 <= player < n:
        raise ShapeError(f"player {player} out of range for {n} players")
    if not 0 <= action < sigma.action_counts[player]:
        raise ShapeError(
            f"action {action} out of range for player {player} "
            f"with {sigma.action_counts[player]} actions"
        )
    slab = np.take(sigma.probs, action, axis=player)
    p = float(slab.sum())
    if p > 0.0:
        dist = slab / p
    else:
        p = 0.0
        dist = np.zeros_like(slab)
    return Conditional(player=player, action=action, prob=p, dist=dist)


def support(sigma: JointMixedStrategy, player: int) -> tuple[int, ...]:
    """Actions of ``player`` carrying strictly positive marginal mass."""
    if not 0 <= player < sigma.num_players:
        raise ShapeError(f"player {player} out of range")
    marg = sigma.marginal(player)
    return tuple(int(j) for j in np.flatnonzero(marg > 0.0))


def conditional_matrix(sigma: JointMixedStrategy, player: int) -> tuple[np.ndarray, np.ndarray]:
    """All conditionals of one player at once.

    Returns ``(p, conds)`` where ``p[j]`` is the marginal mass on action j and
    ``conds[j]`` is the flattened conditional opponent distribution (all zeros
    for unsupported j).  Row order of the flattened opponent profiles matches
    ``Conditional.flat()``.
    """
    n = sigma.num_players
    if not 0 <= player < n:
        raise ShapeError(f"player {player} out of range for {n} players")
    mat = np.moveaxis(sigma.probs, player, 0).reshape(sigma.action_counts[player], -1)
    p = mat.sum(axis=1)
    conds = np.zeros_like(mat)
    pos = p > 0.0
    conds[pos] = mat[pos] / p[pos, None]
    return p, conds


def cosine_gap(c1: Conditional, c2: Conditional) -> float:
    """Dominance margin ``|c1| * (1 - cos angle(c1, c2))`` between conditionals.

    An all-zero second conditional counts as orthogonal (cos = 0), so the gap
    degenerates to ``|c1|``.  Both all-zero is a domain error, as are
    mismatched opponent-profile shapes.
    """
    if c1.dist.shape != c2.dist.shape:
        raise ShapeError(
            f"conditional shapes differ: {c1.dist.shape} vs {c2.dist.shape}"
        )
    v1 = c1.flat()
    v2 = c2.flat()
    n1 = float(np.linalg.norm(v1))
    n2 = float(np.linalg.norm(v2))
    if n1 == 0.0 and n2 == 0.0:
        raise DistributionError("cosine gap of two all-zero conditionals")
    if n1 == 0.0:
        return 0.0
    if n2 == 0.0:
        return n1
    cos = float(np.dot(v1, v2)) / (n1 * n2)
    cos = min(1.0, max(-1.0, cos))
    return n1 * (1.0 - cos)


def product_marginals(probs: np.ndarray) -> list[np.ndarray]:
    marginals = []
    for ax in range(probs.ndim):
        other = tuple(a for a in range(probs.ndim) if a != ax)
        marginals.append(probs.sum(axis=other))
    return marginals


def is_product(sigma: JointMixedStrategy, atol: float = COND_ATOL) -> bool:
    """Whether the joint strategy factorizes into independent marginals."""
    margs = product_marginals(sigma.probs)
    outer = margs[0]
    for m in margs[1:]:
        outer = np.multiply.outer(outer, m)
    return bool(np.max(np.abs(sigma.probs - outer)) <= atol)


@dataclass(frozen=True)
class NormalFormGame:
    """A finite normal-form game: labeled action sets and a payoff tensor.

    ``utility[i]`` is player i's payoff over joint action profiles.
    """

    action_sets: tuple[tuple[str, ...], ...]
    utility: np.ndarray

    def __post_init__(self) -> None:
        sets = tuple(tuple(str(a) for a in acts) for acts in self.action_sets)
        if not sets or any(len(acts) == 0 for acts in sets):
            raise ShapeError("every player needs a nonempty action set")
        arr = np.array(self.utility, dtype=float)
        expected = (len(sets),) + tuple(len(acts) for acts in sets)
        if arr.shape != expected:
            raise ShapeError(f"utility shape {arr.shape}, expected {expected}")
        if not np.all(np.isfinite(arr)):
            raise ShapeError("utility has non-finite entries")
        object.__setattr__(self, "action_sets", sets)
        object.__setattr__(self, "utility", _freeze(arr))

    @property
    def num_players(self) -> int:
        return len(self.action_sets)

    @property
    def action_counts(self) -> tuple[int, ...]:
        return tuple(len(acts) for acts in self.action_sets)


@dataclass(frozen=True)
class MarkovGameSkeleton:
    """Dynamics of a finite-horizon Markov game, with rewards left open.

    ``transitions[h, s, a_0, ..., a_{n-1}]`` is the next-state distribution
    after profile ``a`` in state ``s`` at stage ``h``; ``initial_dist`` is the
    stage-0 state distribution.  ``baseline_reward`` (optional) is a reference
    reward tensor shaped like :class:`RewardFunction` rewards, used as the
    modification baseline by reward-design costs.
    """

    action_sets: tuple[tuple[str, ...], ...]
    states: tuple[str, ...]
    horizon: int
    transitions: np.ndarray
    initial_dist: np.ndarray
    baseline_reward: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        sets = tuple(tuple(str(a) for a in acts) for acts in self.action_sets)
        states = tuple(str(s) for s in self.states)
        if not sets or any(len(acts) == 0 for acts in sets):
            raise ShapeError("every player needs a nonempty action set")
        if not states:
            raise ShapeError("at least one state required")
        if self.horizon < 1:
            raise ShapeError(f"horizon {self.horizon} must be >= 1")
        counts = tuple(len(acts) for acts in sets)
        num_s = len(states)
        trans = np.array(self.transitions, dtype=float)
        expected = (self.horizon, num_s) + counts + (num_s,)
        if trans.shape != expected:
            raise ShapeError(f"transitions shape {trans.shape}, expected {expected}")
        rows = trans.reshape(-1, num_s)
        for idx, row in enumerate(rows):
            _check_distribution(row, f"transition row {idx}")
        init = np.array(self.initial_dist, dtype=float)
        if init.shape != (num_s,):
            raise ShapeError(f"initial_dist shape {init.shape}, expected ({num_s},)")
        _check_distribution(init, "initial_dist")
        base = self.baseline_reward
        if base is not None:
            base = np.array(base, dtype=float)
            expected_r = (len(sets), self.horizon, num_s) + counts
            if base.shape != expected_r:
                raise ShapeError(
                    f"baseline_reward shape {base.shape}, expected {expected_r}"
                )
            if not np.all(np.isfinite(base)):
                raise ShapeError("baseline_reward has non-finite entries")
            base = _freeze(base)
        object.__setattr__(self, "action_sets", sets)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "transitions", _freeze(trans))
        object.__setattr__(self, "initial_dist", _freeze(init))
        object.__setattr__(self, "baseline_reward", base)

    @property
    def num_players(self) -> int:
        return len(self.action_sets)

    @property
    def num_states(self) -> int:
        return len(self.states)

    @property
    def action_counts(self) -> tuple[int, ...]:
        return tuple(len(acts) for acts in self.action_sets)


@dataclass(frozen=True)
class MarkovPolicy:
    """Target joint behavior: one joint action distribution per (stage, state).

    ``stages[h, s]`` is a joint distribution over action profiles.  When
    ``product`` is set, every stage distribution must factorize into
    independent per-player marginals (within ``COND_ATOL``).
    """

    stages: np.ndarray
    product: bool = False

    def __post_init__(self) -> None:
        arr = np.array(self.stages, dtype=float)
        if arr.ndim < 3:
            raise ShapeError("policy needs axes (stage, state, actions...)")
        flat = arr.reshape(arr.shape[0] * arr.shape[1], -1)
        for idx, row in enumerate(flat):
            h, s = divmod(idx, arr.shape[1])
            _check_distribution(row, f"policy stage (h={h}, s={s})")
        frozen = _freeze(arr)
        object.__setattr__(self, "stages", frozen)
        if self.product:
            for h in range(arr.shape[0]):
                for s in range(arr.shape[1]):
                    if not is_product(JointMixedStrategy(arr[h, s])):
                        raise DistributionError(
                            f"policy flagged product but stage (h={h}, s={s}) "
                            "does not factorize"
                        )

    @property
    def horizon(self) -> int:
        return self.stages.shape[0]

    @property
    def num_states(self) -> int:
        return self.stages.shape[1]

    @property
    def action_counts(self) -> tuple[int, ...]:
        return self.stages.shape[2:]

    def stage(self, h: int, s: int) -> JointMixedStrategy:
        """The joint mixed strategy played at stage ``h`` in state ``s``."""
        return JointMixedStrategy(self.stages[h, s])


@dataclass(frozen=True)
class RewardFunction:
    """Per-player stage rewards with a box bound.

    ``rewards[i, h, s, a_0, ..., a_{n-1}]``; every entry lies in
    ``[-bound, bound]``.
    """

    rewards: np.ndarray
    bound: float

    def __post_init__(self) -> None:
        arr = np.array(self.rewards, dtype=float)
        if arr.ndim < 4:
            raise ShapeError("rewards need axes (player, stage, state, actions...)")
        if not np.all(np.isfinite(arr)):
            raise ShapeError("rewards have non-finite entries")
        if not (math.isfinite(self.bound) and self.bound >= 0.0):
            raise ShapeError(f"bound {self.bound} must be finite and >= 0")
        mx = float(np.max(np.abs(arr))) if arr.size else 0.0
        if mx > self.bound:
            raise ShapeError(f"reward magnitude {mx} exceeds bound {self.bound}")
        object.__setattr__(self, "rewards", _freeze(arr))

    @property
    def num_players(self) -> int:
        return self.rewards.shape[0]


@dataclass(frozen=True)
class ValueTables:
    """Per-player state values and action values under a fixed policy.

    ``v[i, h, s]`` for h in 0..H (terminal layer all zero), and
    ``q[i, h, s, a...]`` for h in 0..H-1.
    """

    v: np.ndarray
    q: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.v, dtype=float)
        q = np.array(self.q, dtype=float)
        if v.ndim != 3 or q.ndim < 4:
            raise ShapeError("value tables have wrong rank")
        if v.shape[1] != q.shape[1] + 1 or v.shape[0] != q.shape[0]:
            raise ShapeError(
                f"v shape {v.shape} inconsistent with q shape {q.shape}"
            )
        if np.any(v[:, -1, :] != 0.0):
            raise ShapeError("terminal values must be exactly zero")
        object.__setattr__(self, "v", _freeze(v))
        object.__setattr__(self, "q", _freeze(q))


def nfg_as_markov(game: NormalFormGame) -> MarkovGameSkeleton:
    """Embed a normal-form game as a one-stage, one-state Markov game.

    The payoff tensor becomes the baseline reward of the skeleton.
    """
    counts = game.action_counts
    num_s = 1
    trans = np.ones((1, num_s) + counts + (num_s,), dtype=float)
    base = game.utility.reshape((game.num_players, 1, 1) + counts)
    return MarkovGameSkeleton(
        action_sets=game.action_sets,
        states=("s0",),
        horizon=1,
        transitions=trans,
        initial_dist=np.array([1.0]),
        baseline_reward=base,
    )


def strategy_as_policy(sigma: JointMixedStrategy, product: bool = False) -> MarkovPolicy:
    """Embed a joint mixed strategy as a one-stage, one-state Markov policy."""
    return MarkovPolicy(
        stages=sigma.probs.reshape((1, 1) + sigma.action_counts), product=product
    )
