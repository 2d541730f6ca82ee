"""Ground-truth measurement of strictness margins, independent of any LP.

Everything here is plain backward/forward induction over the dense tensors:
on-path values, stage visitation, single-deviator best responses, and the
per-constraint strictness gaps for each solution concept.  A one-stage
re-implementation (:func:`nfg_oracle`) provides a second, independent route
for normal-form instances so the two can be cross-checked bit-tightly.

Deviation semantics: margins quantify over deviations that actually change
play.  An action carrying a player's whole stage mass replicates the target
and is never counted as a deviation at that stage; the deviation class may
exclude it from future stages as well (``NEVER_TARGET``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .games import (
    JointMixedStrategy,
    MarkovGameSkeleton,
    MarkovPolicy,
    RewardFunction,
    ShapeError,
    ValueTables,
    conditional_matrix,
    is_product,
)
from .installability import Concept, DeviationClass, NotProductError


@dataclass(frozen=True)
class GapReport:
    """Strictness margins, one entry per deviation constraint.

    Keys are ``(player, stage, state, deviation)`` for NE/CCE and
    ``(player, stage, state, recommended, replacement)`` for CE.  ``min_gap``
    is the minimum entry (+inf when no constraints exist) and ``argmin`` the
    first key attaining it in ascending order.  ``strict`` means
    ``min_gap > epsilon``.
    """

    concept: Concept
    epsilon: float
    deviation_class: Optional[DeviationClass]
    min_gap: float
    argmin: Optional[tuple]
    per_constraint: dict = field(default_factory=dict)

    @property
    def strict(self) -> bool:
        return self.min_gap > self.epsilon


@dataclass(frozen=True)
class BestResponse:
    """Optimal single-agent deviation against the opponents' marginals.

    ``v[h, s]`` is the best achievable value from (h, s) onward within the
    deviation class; ``q[h, s, m]`` the value of playing m now and best
    thereafter (computed for every action, allowed or not); ``actions`` the
    chosen argmax (lowest index on ties).
    """

    player: int
    deviation_class: DeviationClass
    v: np.ndarray
    q: np.ndarray
    actions: np.ndarray


def _check_shapes(
    skeleton: MarkovGameSkeleton,
    reward: RewardFunction,
    policy: MarkovPolicy,
) -> None:
    expected = (
        skeleton.num_players,
        skeleton.horizon,
        skeleton.num_states,
    ) + skeleton.action_counts
    if reward.rewards.shape != expected:
        raise ShapeError(
            f"reward shape {reward.rewards.shape}, expected {expected}"
        )
    if policy.horizon != skeleton.horizon or policy.num_states != skeleton.num_states:
        raise ShapeError("policy stage/state grid does not match the game")
    if policy.action_counts != skeleton.action_counts:
        raise ShapeError("policy action counts do not match the game")


def policy_eval(
    skeleton: MarkovGameSkeleton,
    reward: RewardFunction,
    policy: MarkovPolicy,
) -> ValueTables:
    """On-path state and action values by backward induction."""
    _check_shapes(skeleton, reward, policy)
    n = skeleton.num_players
    horizon, num_s = skeleton.horizon, skeleton.num_states
    counts = skeleton.action_counts
    v = np.zeros((n, horizon + 1, num_s))
    q = np.zeros((n, horizon, num_s) + counts)
    action_axes = tuple(range(2, 2 + len(counts)))
    for h in range(horizon - 1, -1, -1):
        cont = np.tensordot(skeleton.transitions[h], v[:, h + 1], axes=([-1], [1]))
        q[:, h] = reward.rewards[:, h] + np.moveaxis(cont, -1, 0)
        v[:, h] = np.sum(policy.stages[h][None] * q[:, h], axis=action_axes)
    return ValueTables(v=v, q=q)


def visitation(skeleton: MarkovGameSkeleton, policy: MarkovPolicy) -> np.ndarray:
    """Stage occupancy measure over (state, joint action); each stage sums to 1."""
    if policy.horizon != skeleton.horizon or policy.num_states != skeleton.num_states:
        raise ShapeError("policy stage/state grid does not match the game")
    if policy.action_counts != skeleton.action_counts:
        raise ShapeError("policy action counts do not match the game")
    horizon, num_s = skeleton.horizon, skeleton.num_states
    counts = skeleton.action_counts
    mu = np.zeros((horizon, num_s) + counts)
    state_dist = skeleton.initial_dist.copy()
    extra = (None,) * len(counts)
    for h in range(horizon):
        mu[h] = state_dist[(slice(None),) + extra] * policy.stages[h]
        flat_mu = mu[h].reshape(num_s, -1)
        flat_p = skeleton.transitions[h].reshape(num_s, -1, num_s)
        state_dist = np.einsum("sa,sat->t", flat_mu, flat_p)
    return mu


def _replica_actions(stage: JointMixedStrategy, player: int) -> tuple[int, ...]:
    marg = stage.marginal(player)
    supported = np.flatnonzero(marg > 0.0)
    if supported.size == 1:
        return (int(supported[0]),)
    return ()


def _allowed_actions(
    stage: JointMixedStrategy,
    player: int,
    dev_class: DeviationClass,
    where: str,
) -> np.ndarray:
    count = stage.action_counts[player]
    actions = np.arange(count)
    if dev_class == DeviationClass.NEVER_TARGET:
        banned = _replica_actions(stage, player)
        actions = actions[~np.isin(actions, banned)]
        if actions.size == 0:
            raise ValueError(
                f"never-target class leaves player {player} no action at {where}"
            )
    return actions


def _deviation_q(
    skeleton: MarkovGameSkeleton,
    reward: RewardFunction,
    policy: MarkovPolicy,
    player: int,
    h: int,
    s: int,
    cont: np.ndarray,
) -> np.ndarray:
    """Value of each own action at (h, s) against the stage marginal, with
    continuation values ``cont`` over next states."""
    ev = skeleton.transitions[h, s] @ cont
    payoff = reward.rewards[player, h, s] + ev
    mat = np.moveaxis(payoff, player, 0).reshape(payoff.shape[player], -1)
    marg = policy.stage(h, s).opponent_marginal(player).reshape(-1)
    return mat @ marg


def best_response(
    skeleton: MarkovGameSkeleton,
    reward: RewardFunction,
    policy: MarkovPolicy,
    player: int,
    dev_class: DeviationClass = DeviationClass.UNRESTRICTED,
) -> BestResponse:
    """Optimal deviation values for one player, everyone else on-path.

    At each (h, s) the deviator faces opponents drawn from the stage
    marginal; a deterministic stage choice is optimal, so the argmax over
    allowed pure actions is exact.  ``NEVER_RECOMMENDED`` is rejected here:
    recommendation-aware deviations are handled by the CE gap table.
    """
    _check_shapes(skeleton, reward, policy)
    if dev_class == DeviationClass.NEVER_RECOMMENDED:
        raise ValueError(
            "best response is recommendation-blind; use the CE gap table "
            "for never-recommended deviations"
        )
    if not 0 <= player < skeleton.num_players:
        raise ShapeError(f"player {player} out of range")
    horizon, num_s = skeleton.horizon, skeleton.num_states
    count = skeleton.action_counts[player]
    v = np.zeros((horizon + 1, num_s))
    q = np.zeros((horizon, num_s, count))
    actions = np.zeros((horizon, num_s), dtype=int)
    for h in range(horizon - 1, -1, -1):
        for s in range(num_s):
            row = _deviation_q(skeleton, reward, policy, player, h, s, v[h + 1])
            q[h, s] = row
            allowed = _allowed_actions(
                policy.stage(h, s), player, dev_class, f"(h={h}, s={s})"
            )
            pick = allowed[int(np.argmax(row[allowed]))]
            actions[h, s] = pick
            v[h, s] = row[pick]
    return BestResponse(
        player=player, deviation_class=dev_class, v=v, q=q, actions=actions
    )


def _coarse_gaps(
    skeleton: MarkovGameSkeleton,
    reward: RewardFunction,
    policy: MarkovPolicy,
    dev_class: DeviationClass,
    values: ValueTables,
) -> dict:
    gaps: dict = {}
    for i in range(skeleton.num_players):
        if skeleton.action_counts[i] < 2:
            continue  # no deviation exists for a single-action player
        br = best_response(skeleton, reward, policy, i, dev_class)
        for h in range(skeleton.horizon):
            for s in range(skeleton.num_states):
                stage = policy.stage(h, s)
                replicas = _replica_actions(stage, i)
                for m in range(skeleton.action_counts[i]):
                    if m in replicas:
                        continue
                    gaps[(i, h, s, m)] = float(values.v[i, h, s] - br.q[h, s, m])
    return gaps


def _ce_gaps(
    skeleton: MarkovGameSkeleton,
    policy: MarkovPolicy,
    values: ValueTables,
) -> dict:
    gaps: dict = {}
    for i in range(skeleton.num_players):
        count = skeleton.action_counts[i]
        if count < 2:
            continue
        for h in range(skeleton.horizon):
            for s in range(skeleton.num_states):
                stage = policy.stage(h, s)
                p, conds = conditional_matrix(stage, i)
                qmat = np.moveaxis(values.q[i, h, s], i, 0).reshape(count, -1)
                on_rec = np.einsum("jr,jr->j", conds, qmat)
                cross = conds @ qmat.T  # cross[j, k] = E_cond_j[q under k]
                for j in np.flatnonzero(p > 0.0):
                    for k in range(count):
                        if k == int(j):
                            continue
                        gaps[(i, h, s, int(j), k)] = float(
                            on_rec[j] - cross[j, k]
                        )
    return gaps


def _finalize(
    concept: Concept,
    epsilon: float,
    dev_class: Optional[DeviationClass],
    gaps: dict,
) -> GapReport:
    if gaps:
        argmin = min(gaps, key=lambda key: (gaps[key], key))
        min_gap = gaps[argmin]
    else:
        argmin = None
        min_gap = math.inf
    return GapReport(
        concept=concept,
        epsilon=epsilon,
        deviation_class=dev_class,
        min_gap=min_gap,
        argmin=argmin,
        per_constraint=gaps,
    )


def check_strict(
    skeleton: MarkovGameSkeleton,
    reward: RewardFunction,
    policy: MarkovPolicy,
    concept: Concept,
    epsilon: float = 0.0,
    dev_class: DeviationClass = DeviationClass.UNRESTRICTED,
) -> GapReport:
    """Measure every deviation constraint of the reward at the target.

    NE/CCE gaps compare the on-path value with playing a deviation action
    now and best-responding (within the class) afterwards; NE additionally
    requires a product policy.  CE gaps compare action values along each
    supported recommendation against every replacement, weighted by the
    conditional opponent distribution.  The report is strict iff every gap
    exceeds ``epsilon``.
    """
    _check_shapes(skeleton, reward, policy)
    values = policy_eval(skeleton, reward, policy)
    if concept in (Concept.NE, Concept.CCE):
        if dev_class == DeviationClass.NEVER_RECOMMENDED:
            raise ValueError(
                "never-recommended deviations apply to the CE concept only"
            )
        if concept == Concept.NE:
            for h in range(policy.horizon):
                for s in range(policy.num_states):
                    if not is_product(policy.stage(h, s)):
                        raise NotProductError(
                            f"Nash check requires product stages; "
                            f"(h={h}, s={s}) is correlated"
                        )
        gaps = _coarse_gaps(skeleton, reward, policy, dev_class, values)
    elif concept == Concept.CE:
        if dev_class == DeviationClass.NEVER_TARGET:
            raise ValueError(
                "never-target deviations apply to the NE/CCE concepts only"
            )
        gaps = _ce_gaps(skeleton, policy, values)
    else:
        raise ValueError(f"unknown concept {concept!r}")
    return _finalize(concept, epsilon, dev_class, gaps)


def nfg_oracle(
    utility: np.ndarray, sigma: JointMixedStrategy, concept: Concept
) -> GapReport:
    """One-stage strictness gaps by direct summation over profiles.

    Independent of the backward-induction machinery; keys use stage 0 and
    state 0 so reports line up with the one-stage embedding of the game.
    """
    u = np.asarray(utility, dtype=float)
    n = sigma.num_players
    if u.shape != (n,) + sigma.action_counts:
        raise ShapeError(
            f"utility shape {u.shape}, expected {(n,) + sigma.action_counts}"
        )
    gaps: dict = {}
    if concept in (Concept.NE, Concept.CCE):
        if concept == Concept.NE and not is_product(sigma):
            raise NotProductError("Nash oracle requires a product strategy")
        for i in range(n):
            on_path = float(np.sum(sigma.probs * u[i]))
            marg = sigma.opponent_marginal(i).reshape(-1)
            mat = np.moveaxis(u[i], i, 0).reshape(sigma.action_counts[i], -1)
            dev_vals = mat @ marg
            replicas = _replica_actions(sigma, i)
            for m in range(sigma.action_counts[i]):
                if m in replicas:
                    continue
                gaps[(i, 0, 0, m)] = float(on_path - dev_vals[m])
    elif concept == Concept.CE:
        for i in range(n):
            count = sigma.action_counts[i]
            if count < 2:
                continue
            p, conds = conditional_matrix(sigma, i)
            mat = np.moveaxis(u[i], i, 0).reshape(count, -1)
            on_rec = np.einsum("jr,jr->j", conds, mat)
            cross = conds @ mat.T
            for j in np.flatnonzero(p > 0.0):
                for k in range(count):
                    if k == int(j):
                        continue
                    gaps[(i, 0, 0, int(j), k)] = float(on_rec[j] - cross[j, k])
    else:
        raise ValueError(f"unknown concept {concept!r}")
    return _finalize(concept, 0.0, None, gaps)
