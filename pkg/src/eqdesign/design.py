"""LP-based reward design: minimal-cost rewards that install a target.

Builds one linear program per request.  Markov programs carry the reward,
action-value, and state-value tensors as variables tied together by their
defining equalities (split into inequality pairs), plus one strictness row
per deviation constraint and box bounds on rewards only.  Normal-form
programs are the one-stage specialization over the utility tensor alone.

Costs: ``ONLINE`` weights reward changes by the target's visitation measure,
``OFFLINE`` counts them unweighted, ``SOCIAL_WELFARE`` maximizes the sum of
initial-state values, ``EGALITARIAN`` maximizes the worst player's value.
Every optimal design is re-measured by the verifier before being returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np

from .games import (
    JointMixedStrategy,
    MarkovGameSkeleton,
    MarkovPolicy,
    NormalFormGame,
    RewardFunction,
    ShapeError,
    conditional_matrix,
    is_product,
    nfg_as_markov,
    strategy_as_policy,
)
from .installability import Concept, DeviationClass, NotProductError
from .lp import LinearProgram, LpSolution, LpStatus, solve
from .verify import GapReport, check_strict, nfg_oracle, visitation

# Post-solve verification allows this much slip below the requested slack.
GAP_SLIP = 1e-6


class CostKind(str, Enum):
    ONLINE = "online"
    OFFLINE = "offline"
    SOCIAL_WELFARE = "social"
    EGALITARIAN = "egalitarian"


@dataclass(frozen=True)
class CostSpec:
    """Objective choice; ``baseline`` overrides the game's baseline reward
    for the modification costs (defaults to it, or to all zeros)."""

    kind: CostKind
    baseline: Optional[np.ndarray] = None


@dataclass(frozen=True)
class DesignConfig:
    """Strictness slack, reward box bound, and the max-gap switch.

    With ``max_gap`` set the cost is ignored; the slack becomes a variable
    and the program maximizes it, reporting the best margin the bound buys.
    """

    slack: float
    bound: float
    max_gap: bool = False

    def __post_init__(self) -> None:
        if not (math.isfinite(self.bound) and self.bound > 0.0):
            raise ValueError(f"bound {self.bound} must be finite and > 0")
        if not self.max_gap and not (
            math.isfinite(self.slack) and self.slack >= 0.0
        ):
            raise ValueError(f"slack {self.slack} must be finite and >= 0")


@dataclass(frozen=True)
class DesignResult:
    """Solve outcome.  ``reward`` is set only when status is optimal;
    ``achieved_slack`` only in max-gap mode.  ``report`` holds the
    verifier's post-solve measurement."""

    status: LpStatus
    concept: Concept
    cost: CostKind
    objective: Optional[float] = None
    reward: Optional[RewardFunction] = None
    utility: Optional[np.ndarray] = None
    achieved_slack: Optional[float] = None
    report: Optional[GapReport] = None
    iterations: int = 0


def _genuine_deviations(stage: JointMixedStrategy, player: int) -> list[int]:
    marg = stage.marginal(player)
    supported = np.flatnonzero(marg > 0.0)
    actions = list(range(stage.action_counts[player]))
    if supported.size == 1:
        actions.remove(int(supported[0]))
    return actions


def _stage_rows(
    stage: JointMixedStrategy,
    concept: Concept,
    qcol,
    num_vars: int,
    slack_col: Optional[int],
    slack: float,
) -> list[tuple[np.ndarray, str, float]]:
    """Strictness rows for one stage.  ``qcol(i, a_flat)`` maps a player and
    flat joint-action index to the column of the payoff variable (Q or u)."""
    n = stage.num_players
    counts = stage.action_counts
    flat = stage.probs.reshape(-1)
    rows: list[tuple[np.ndarray, str, float]] = []

    def emit(row: np.ndarray) -> None:
        if slack_col is None:
            rows.append((row, ">=", slack))
        else:
            row[slack_col] = -1.0
            rows.append((row, ">=", 0.0))

    for i in range(n):
        if counts[i] < 2:
            continue
        axis_order = np.moveaxis(
            np.arange(int(np.prod(counts))).reshape(counts), i, 0
        ).reshape(counts[i], -1)
        if concept in (Concept.NE, Concept.CCE):
            marg_other = stage.opponent_marginal(i).reshape(-1)
            for m in _genuine_deviations(stage, i):
                row = np.zeros(num_vars)
                for a_flat, prob in enumerate(flat):
                    if prob != 0.0:
                        row[qcol(i, a_flat)] += prob
                for pos, a_flat in enumerate(axis_order[m]):
                    if marg_other[pos] != 0.0:
                        row[qcol(i, int(a_flat))] -= marg_other[pos]
                emit(row)
        else:  # CE
            p, conds = conditional_matrix(stage, i)
            for j in range(counts[i]):
                if p[j] <= 0.0:
                    continue
                # Conditional weights (not raw joint mass) so row slack is on
                # the same scale as the verifier's per-recommendation gap.
                weights = conds[j]
                for k in range(counts[i]):
                    if k == j:
                        continue
                    row = np.zeros(num_vars)
                    for pos, w in enumerate(weights):
                        if w != 0.0:
                            row[qcol(i, int(axis_order[j, pos]))] += w
                            row[qcol(i, int(axis_order[k, pos]))] -= w
                    emit(row)
    return rows


def _resolve_baseline(
    cost: CostSpec, skeleton: MarkovGameSkeleton, shape: tuple[int, ...]
) -> np.ndarray:
    if cost.baseline is not None:
        base = np.asarray(cost.baseline, dtype=float)
    elif skeleton.baseline_reward is not None:
        base = skeleton.baseline_reward
    else:
        base = np.zeros(shape)
    if base.shape != shape:
        raise ShapeError(f"baseline shape {base.shape}, expected {shape}")
    return base


def build_mg_lp(
    skeleton: MarkovGameSkeleton,
    policy: MarkovPolicy,
    concept: Concept,
    cost: CostSpec,
    config: DesignConfig,
) -> tuple[LinearProgram, dict]:
    """Assemble the Markov design program.

    Returns the program and a layout dict with the column offsets needed to
    read tensors back out of a solution.
    """
    if policy.horizon != skeleton.horizon or policy.num_states != skeleton.num_states:
        raise ShapeError("policy grid does not match the game")
    if policy.action_counts != skeleton.action_counts:
        raise ShapeError("policy action counts do not match the game")
    n = skeleton.num_players
    horizon, num_s = skeleton.horizon, skeleton.num_states
    counts = skeleton.action_counts
    num_a = int(np.prod(counts))
    if concept == Concept.NE:
        for h in range(horizon):
            for s in range(num_s):
                if not is_product(policy.stage(h, s)):
                    raise NotProductError(
                        f"Nash design requires product stages; (h={h}, s={s}) "
                        "is correlated"
                    )

    blk = n * horizon * num_s * num_a
    r_off = 0
    q_off = blk
    v_off = 2 * blk
    v_size = n * (horizon + 1) * num_s
    cursor = v_off + v_size
    t_off = None
    if cost.kind in (CostKind.ONLINE, CostKind.OFFLINE) and not config.max_gap:
        t_off = cursor
        cursor += blk
    z_col = None
    if cost.kind == CostKind.EGALITARIAN and not config.max_gap:
        z_col = cursor
        cursor += 1
    slack_col = None
    if config.max_gap:
        slack_col = cursor
        cursor += 1
    num_vars = cursor

    def rcol(i: int, h: int, s: int, a: int) -> int:
        return r_off + ((i * horizon + h) * num_s + s) * num_a + a

    def qc(i: int, h: int, s: int, a: int) -> int:
        return q_off + ((i * horizon + h) * num_s + s) * num_a + a

    def vcol(i: int, h: int, s: int) -> int:
        return v_off + (i * (horizon + 1) + h) * num_s + s

    lp = LinearProgram(num_vars)
    for i in range(n):
        for h in range(horizon):
            for s in range(num_s):
                for a in range(num_a):
                    lp.set_bounds(rcol(i, h, s, a), -config.bound, config.bound)

    def equality(row: np.ndarray, rhs: float) -> None:
        lp.add_constraint(row, "<=", rhs)
        lp.add_constraint(row, ">=", rhs)

    trans_flat = skeleton.transitions.reshape(horizon, num_s, num_a, num_s)
    for i in range(n):
        for h in range(horizon):
            for s in range(num_s):
                for a in range(num_a):
                    row = np.zeros(num_vars)
                    row[qc(i, h, s, a)] = 1.0
                    row[rcol(i, h, s, a)] = -1.0
                    for s2 in range(num_s):
                        p = trans_flat[h, s, a, s2]
                        if p != 0.0:
                            row[vcol(i, h + 1, s2)] -= p
                    equality(row, 0.0)
    for i in range(n):
        for h in range(horizon):
            for s in range(num_s):
                row = np.zeros(num_vars)
                row[vcol(i, h, s)] = 1.0
                flat = policy.stages[h, s].reshape(-1)
                for a, prob in enumerate(flat):
                    if prob != 0.0:
                        row[qc(i, h, s, a)] -= prob
                equality(row, 0.0)
    for i in range(n):
        for s in range(num_s):
            row = np.zeros(num_vars)
            row[vcol(i, horizon, s)] = 1.0
            equality(row, 0.0)

    for h in range(horizon):
        for s in range(num_s):
            stage = policy.stage(h, s)
            rows = _stage_rows(
                stage,
                concept,
                lambda i, a, h=h, s=s: qc(i, h, s, a),
                num_vars,
                slack_col,
                config.slack,
            )
            for row, rel, rhs in rows:
                lp.add_constraint(row, rel, rhs)

    objective = np.zeros(num_vars)
    if config.max_gap:
        objective[slack_col] = -1.0
    elif cost.kind in (CostKind.ONLINE, CostKind.OFFLINE):
        shape = (n, horizon, num_s) + counts
        base = _resolve_baseline(cost, skeleton, shape).reshape(
            n, horizon, num_s, num_a
        )
        if cost.kind == CostKind.ONLINE:
            mu = visitation(skeleton, policy).reshape(horizon, num_s, num_a)
            weights = np.broadcast_to(mu[None], (n, horizon, num_s, num_a))
        else:
            weights = np.ones((n, horizon, num_s, num_a))
        for i in range(n):
            for h in range(horizon):
                for s in range(num_s):
                    for a in range(num_a):
                        t_col = t_off + ((i * horizon + h) * num_s + s) * num_a + a
                        lp.set_bounds(t_col, 0.0, math.inf)
                        objective[t_col] = weights[i, h, s, a]
                        row = np.zeros(num_vars)
                        row[t_col] = 1.0
                        row[rcol(i, h, s, a)] = -1.0
                        lp.add_constraint(row, ">=", -base[i, h, s, a])
                        row = np.zeros(num_vars)
                        row[t_col] = 1.0
                        row[rcol(i, h, s, a)] = 1.0
                        lp.add_constraint(row, ">=", base[i, h, s, a])
    elif cost.kind == CostKind.SOCIAL_WELFARE:
        for i in range(n):
            for s in range(num_s):
                objective[vcol(i, 0, s)] = -skeleton.initial_dist[s]
    elif cost.kind == CostKind.EGALITARIAN:
        objective[z_col] = -1.0
        for i in range(n):
            row = np.zeros(num_vars)
            row[z_col] = -1.0
            for s in range(num_s):
                row[vcol(i, 0, s)] = skeleton.initial_dist[s]
            lp.add_constraint(row, ">=", 0.0)
    lp.set_objective(objective)
    layout = {
        "r_off": r_off,
        "q_off": q_off,
        "v_off": v_off,
        "slack_col": slack_col,
        "num_vars": num_vars,
        "shape": (n, horizon, num_s) + counts,
    }
    return lp, layout


def build_nfg_lp(
    sigma: JointMixedStrategy,
    concept: Concept,
    cost: CostSpec,
    config: DesignConfig,
    baseline: Optional[np.ndarray] = None,
) -> tuple[LinearProgram, dict]:
    """Assemble the one-stage design program over the utility tensor."""
    n = sigma.num_players
    counts = sigma.action_counts
    num_a = int(np.prod(counts))
    if concept == Concept.NE and not is_product(sigma):
        raise NotProductError("Nash design requires a product strategy")

    u_size = n * num_a
    cursor = u_size
    t_off = None
    if cost.kind in (CostKind.ONLINE, CostKind.OFFLINE) and not config.max_gap:
        t_off = cursor
        cursor += u_size
    z_col = None
    if cost.kind == CostKind.EGALITARIAN and not config.max_gap:
        z_col = cursor
        cursor += 1
    slack_col = None
    if config.max_gap:
        slack_col = cursor
        cursor += 1
    num_vars = cursor

    def ucol(i: int, a: int) -> int:
        return i * num_a + a

    lp = LinearProgram(num_vars)
    for i in range(n):
        for a in range(num_a):
            lp.set_bounds(ucol(i, a), -config.bound, config.bound)

    for row, rel, rhs in _stage_rows(
        sigma, concept, ucol, num_vars, slack_col, config.slack
    ):
        lp.add_constraint(row, rel, rhs)

    objective = np.zeros(num_vars)
    shape = (n,) + counts
    if baseline is None:
        base = np.zeros(shape)
    else:
        base = np.asarray(baseline, dtype=float)
        if base.shape != shape:
            raise ShapeError(f"baseline shape {base.shape}, expected {shape}")
    base_flat = base.reshape(n, num_a)
    flat_sigma = sigma.probs.reshape(-1)
    if config.max_gap:
        objective[slack_col] = -1.0
    elif cost.kind in (CostKind.ONLINE, CostKind.OFFLINE):
        for i in range(n):
            for a in range(num_a):
                t_col = t_off + i * num_a + a
                lp.set_bounds(t_col, 0.0, math.inf)
                objective[t_col] = (
                    flat_sigma[a] if cost.kind == CostKind.ONLINE else 1.0
                )
                row = np.zeros(num_vars)
                row[t_col] = 1.0
                row[ucol(i, a)] = -1.0
                lp.add_constraint(row, ">=", -base_flat[i, a])
                row = np.zeros(num_vars)
                row[t_col] = 1.0
                row[ucol(i, a)] = 1.0
                lp.add_constraint(row, ">=", base_flat[i, a])
    elif cost.kind == CostKind.SOCIAL_WELFARE:
        for i in range(n):
            for a in range(num_a):
                objective[ucol(i, a)] = -flat_sigma[a]
    elif cost.kind == CostKind.EGALITARIAN:
        objective[z_col] = -1.0
        for i in range(n):
            row = np.zeros(num_vars)
            row[z_col] = -1.0
            for a in range(num_a):
                row[ucol(i, a)] = flat_sigma[a]
            lp.add_constraint(row, ">=", 0.0)
    lp.set_objective(objective)
    layout = {
        "u_off": 0,
        "slack_col": slack_col,
        "num_vars": num_vars,
        "shape": shape,
    }
    return lp, layout


def _verify_design(
    skeleton: MarkovGameSkeleton,
    policy: MarkovPolicy,
    concept: Concept,
    reward: RewardFunction,
    required: float,
) -> GapReport:
    dev = (
        DeviationClass.NEVER_RECOMMENDED
        if concept == Concept.CE
        else DeviationClass.UNRESTRICTED
    )
    report = check_strict(skeleton, reward, policy, concept, dev_class=dev)
    if report.min_gap < required - GAP_SLIP:
        raise RuntimeError(
            f"designed reward missed its margin: {report.min_gap} < {required}"
        )
    return report


def design(
    game: Union[MarkovGameSkeleton, NormalFormGame],
    target: Union[MarkovPolicy, JointMixedStrategy],
    concept: Concept,
    cost: CostSpec,
    config: DesignConfig,
) -> DesignResult:
    """Build, solve, extract, and verify one design program.

    Accepts a Markov game with a Markov policy or a normal-form game with a
    joint strategy.  Non-optimal statuses return without tensors.
    """
    if isinstance(game, NormalFormGame):
        if not isinstance(target, JointMixedStrategy):
            raise ShapeError("normal-form design expects a joint strategy")
        if target.action_counts != game.action_counts:
            raise ShapeError("strategy shape does not match the game")
        base = cost.baseline if cost.baseline is not None else game.utility
        lp, layout = build_nfg_lp(target, concept, cost, config, baseline=base)
        sol = solve(lp)
        if sol.status != LpStatus.OPTIMAL:
            return DesignResult(
                sol.status, concept, cost.kind, iterations=sol.iterations
            )
        shape = layout["shape"]
        utility = np.clip(
            sol.x[: int(np.prod(shape))].reshape(shape),
            -config.bound,
            config.bound,
        )
        achieved = (
            float(sol.x[layout["slack_col"]]) if config.max_gap else None
        )
        required = achieved if config.max_gap else config.slack
        skeleton = nfg_as_markov(game)
        policy = strategy_as_policy(target)
        reward = RewardFunction(
            rewards=utility.reshape(
                (game.num_players, 1, 1) + game.action_counts
            ),
            bound=config.bound,
        )
        report = _verify_design(skeleton, policy, concept, reward, required)
        oracle = nfg_oracle(utility, target, concept)
        if oracle.min_gap < required - GAP_SLIP:
            raise RuntimeError("one-stage oracle disagrees with the design")
        return DesignResult(
            sol.status,
            concept,
            cost.kind,
            objective=sol.objective,
            reward=reward,
            utility=utility,
            achieved_slack=achieved,
            report=report,
            iterations=sol.iterations,
        )

    if not isinstance(target, MarkovPolicy):
        raise ShapeError("Markov design expects a Markov policy")
    lp, layout = build_mg_lp(game, target, concept, cost, config)
    sol = solve(lp)
    if sol.status != LpStatus.OPTIMAL:
        return DesignResult(
            sol.status, concept, cost.kind, iterations=sol.iterations
        )
    shape = layout["shape"]
    size = int(np.prod(shape))
    rewards = np.clip(
        sol.x[layout["r_off"] : layout["r_off"] + size].reshape(shape),
        -config.bound,
        config.bound,
    )
    reward = RewardFunction(rewards=rewards, bound=config.bound)
    achieved = float(sol.x[layout["slack_col"]]) if config.max_gap else None
    required = achieved if config.max_gap else config.slack
    report = _verify_design(game, target, concept, reward, required)
    return DesignResult(
        sol.status,
        concept,
        cost.kind,
        objective=sol.objective,
        reward=reward,
        achieved_slack=achieved,
        report=report,
        iterations=sol.iterations,
    )


def evaluate_cost(
    skeleton: MarkovGameSkeleton,
    policy: MarkovPolicy,
    cost: CostSpec,
    reward: RewardFunction,
) -> float:
    """Recompute a design's cost directly from tensors (no LP involved)."""
    shape = reward.rewards.shape
    if cost.kind in (CostKind.ONLINE, CostKind.OFFLINE):
        base = _resolve_baseline(cost, skeleton, shape)
        diff = np.abs(reward.rewards - base)
        if cost.kind == CostKind.OFFLINE:
            return float(diff.sum())
        mu = visitation(skeleton, policy)
        return float((diff * mu[None]).sum())
    from .verify import policy_eval

    values = policy_eval(skeleton, reward, policy)
    per_player = values.v[:, 0, :] @ skeleton.initial_dist
    if cost.kind == CostKind.SOCIAL_WELFARE:
        return float(-per_player.sum())
    return float(-per_player.min())
