"""JSON readers and writers for games, targets, and rewards.

Joint actions are flattened row-major: profile ``(a_0, ..., a_{n-1})`` maps
to index ``a_0 * |A_1| * ... * |A_{n-1}| + ... + a_{n-1}``.  Probability
rows are cleaned on ingestion (tiny negative dust clamped, row renormalized)
and rejected when genuinely negative or off-sum.  Writers are deterministic:
sorted keys, two-space indent, full-precision floats.
"""

from __future__ import annotations

import json
from typing import IO, Optional, Union

import numpy as np

from .games import (
    DistributionError,
    JointMixedStrategy,
    MarkovGameSkeleton,
    MarkovPolicy,
    NormalFormGame,
    RewardFunction,
    ShapeError,
    clean_distribution,
)

Game = Union[NormalFormGame, MarkovGameSkeleton]


class InputFormatError(ValueError):
    """A document is malformed; the message names the offending field."""


def _require(doc: dict, field: str, where: str):
    if not isinstance(doc, dict):
        raise InputFormatError(f"{where}: expected an object")
    if field not in doc:
        raise InputFormatError(f"{where}: missing field {field!r}")
    return doc[field]


def _as_array(value, shape: tuple[int, ...], where: str) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputFormatError(f"{where}: not numeric ({exc})") from None
    if arr.shape != shape:
        raise InputFormatError(f"{where}: shape {arr.shape}, expected {shape}")
    return arr


def _clean_rows(arr: np.ndarray, row_len: int, where: str) -> np.ndarray:
    rows = arr.reshape(-1, row_len)
    out = np.empty_like(rows)
    for idx, row in enumerate(rows):
        try:
            out[idx] = clean_distribution(row, where=f"{where}[{idx}]")
        except DistributionError as exc:
            raise InputFormatError(str(exc)) from None
    return out.reshape(arr.shape)


def _action_sets(doc: dict, where: str) -> tuple[tuple[str, ...], ...]:
    actions = _require(doc, "actions", where)
    if not isinstance(actions, list) or not all(
        isinstance(acts, list) and acts for acts in actions
    ):
        raise InputFormatError(
            f"{where}.actions: expected a nonempty list per player"
        )
    return tuple(tuple(str(a) for a in acts) for acts in actions)


def load_game(doc: dict, where: str = "game") -> Game:
    """Parse a game document.

    Documents with ``states`` and ``horizon`` describe Markov games with
    ``transitions[h][s][a][s']`` over flattened joint actions; documents
    with a ``utility[i][a]`` tensor describe one-shot games.
    """
    sets = _action_sets(doc, where)
    counts = tuple(len(acts) for acts in sets)
    num_a = int(np.prod(counts))
    if "states" not in doc and "horizon" not in doc:
        utility = _as_array(
            _require(doc, "utility", where),
            (len(sets), num_a),
            f"{where}.utility",
        )
        if not np.all(np.isfinite(utility)):
            raise InputFormatError(f"{where}.utility: non-finite entries")
        try:
            return NormalFormGame(
                action_sets=sets, utility=utility.reshape((len(sets),) + counts)
            )
        except (ShapeError, DistributionError) as exc:
            raise InputFormatError(f"{where}: {exc}") from None
    states = _require(doc, "states", where)
    if not isinstance(states, list) or not states:
        raise InputFormatError(f"{where}.states: expected a nonempty list")
    states = tuple(str(s) for s in states)
    horizon = _require(doc, "horizon", where)
    if not isinstance(horizon, int) or horizon < 1:
        raise InputFormatError(f"{where}.horizon: expected an integer >= 1")
    num_s = len(states)
    trans = _as_array(
        _require(doc, "transitions", where),
        (horizon, num_s, num_a, num_s),
        f"{where}.transitions",
    )
    trans = _clean_rows(trans, num_s, f"{where}.transitions")
    init = _as_array(
        _require(doc, "initial_dist", where), (num_s,), f"{where}.initial_dist"
    )
    init = _clean_rows(init, num_s, f"{where}.initial_dist")
    baseline = None
    if doc.get("baseline_reward") is not None:
        baseline = _as_array(
            doc["baseline_reward"],
            (len(sets), horizon, num_s, num_a),
            f"{where}.baseline_reward",
        ).reshape((len(sets), horizon, num_s) + counts)
    try:
        return MarkovGameSkeleton(
            action_sets=sets,
            states=states,
            horizon=horizon,
            transitions=trans.reshape((horizon, num_s) + counts + (num_s,)),
            initial_dist=init,
            baseline_reward=baseline,
        )
    except (ShapeError, DistributionError) as exc:
        raise InputFormatError(f"{where}: {exc}") from None


def load_strategy(
    doc: dict, counts: tuple[int, ...], where: str = "target"
) -> JointMixedStrategy:
    """Parse a joint strategy: ``{"probs": [...]}`` over flattened profiles."""
    num_a = int(np.prod(counts))
    probs = _as_array(_require(doc, "probs", where), (num_a,), f"{where}.probs")
    probs = _clean_rows(probs, num_a, f"{where}.probs")
    try:
        return JointMixedStrategy(probs=probs.reshape(counts))
    except (ShapeError, DistributionError) as exc:
        raise InputFormatError(f"{where}: {exc}") from None


def load_policy(
    doc: dict, skeleton: MarkovGameSkeleton, where: str = "target"
) -> MarkovPolicy:
    """Parse a policy: ``stages[h][s][a]`` over flattened joint actions.

    A bare-strategy document (``probs`` only) is accepted for one-stage,
    one-state games.
    """
    counts = skeleton.action_counts
    num_a = int(np.prod(counts))
    horizon, num_s = skeleton.horizon, skeleton.num_states
    if "probs" in doc and "stages" not in doc:
        if horizon != 1 or num_s != 1:
            raise InputFormatError(
                f"{where}: bare strategy given for a game with "
                f"horizon {horizon} and {num_s} states"
            )
        sigma = load_strategy(doc, counts, where)
        return MarkovPolicy(
            stages=sigma.probs.reshape((1, 1) + counts),
            product=bool(doc.get("product", False)),
        )
    stages = _as_array(
        _require(doc, "stages", where),
        (horizon, num_s, num_a),
        f"{where}.stages",
    )
    stages = _clean_rows(stages, num_a, f"{where}.stages")
    try:
        return MarkovPolicy(
            stages=stages.reshape((horizon, num_s) + counts),
            product=bool(doc.get("product", False)),
        )
    except (ShapeError, DistributionError) as exc:
        raise InputFormatError(f"{where}: {exc}") from None


def load_reward(
    doc: dict, skeleton: MarkovGameSkeleton, where: str = "reward"
) -> RewardFunction:
    """Parse ``{"rewards": [i][h][s][a], "bound": B}``."""
    counts = skeleton.action_counts
    num_a = int(np.prod(counts))
    shape = (skeleton.num_players, skeleton.horizon, skeleton.num_states, num_a)
    rewards = _as_array(
        _require(doc, "rewards", where), shape, f"{where}.rewards"
    )
    bound = _require(doc, "bound", where)
    if not isinstance(bound, (int, float)):
        raise InputFormatError(f"{where}.bound: expected a number")
    try:
        return RewardFunction(
            rewards=rewards.reshape(shape[:3] + counts), bound=float(bound)
        )
    except (ShapeError, DistributionError) as exc:
        raise InputFormatError(f"{where}: {exc}") from None


def load_baseline(doc: dict, game: Game, where: str = "baseline") -> np.ndarray:
    """Parse a reference reward tensor for the modification costs.

    Accepts a reward document for Markov games (``bound`` not required) or
    either a utility or reward document for one-shot games.
    """
    counts = game.action_counts
    num_a = int(np.prod(counts))
    if isinstance(game, NormalFormGame):
        field = "utility" if "utility" in doc else "rewards"
        arr = _as_array(
            _require(doc, field, where),
            (game.num_players, num_a),
            f"{where}.{field}",
        )
        return arr.reshape((game.num_players,) + counts)
    shape = (game.num_players, game.horizon, game.num_states, num_a)
    arr = _as_array(_require(doc, "rewards", where), shape, f"{where}.rewards")
    return arr.reshape(shape[:3] + counts)


def reward_to_doc(reward: RewardFunction) -> dict:
    n, horizon, num_s = reward.rewards.shape[:3]
    flat = reward.rewards.reshape(n, horizon, num_s, -1)
    return {"rewards": flat.tolist(), "bound": reward.bound}


def utility_to_doc(utility: np.ndarray) -> dict:
    u = np.asarray(utility, dtype=float)
    return {"utility": u.reshape(u.shape[0], -1).tolist()}


def load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            doc = json.load(handle)
    except OSError as exc:
        raise InputFormatError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise InputFormatError(f"{path}: expected a JSON object")
    return doc


def dump_json(doc: dict, target: Optional[Union[str, IO[str]]] = None) -> str:
    """Serialize deterministically; write to a path or handle when given."""
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if isinstance(target, str):
        with open(target, "w", encoding="utf-8") as handle:
            handle.write(text)
    elif target is not None:
        target.write(text)
    return text
