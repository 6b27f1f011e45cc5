"""Arrival semantics, information hiding, legal moves, and the online run loop.

Agents arrive one at a time in a given order.  At each step the engine
enumerates the legal moves for the arriving agent, hands the algorithm a
weight view restricted to the agents revealed so far, validates the chosen
move, and applies it.  Two move regimes exist:

* ``standard``: the new agent joins an existing coalition or starts a
  singleton; nothing else changes.
* ``dissolution``: additionally, any existing coalition may be dissolved
  into singletons while the new agent pairs up with one of its members.

Moves are plain tuples so runs stay cheap:

* ``("new",)`` - start a singleton,
* ``("join", cid)`` - join the coalition with handle ``cid``,
* ``("dissolve", cid, partner)`` - dissolve coalition ``cid`` and form the
  pair ``{agent, partner}``; the remaining members become singletons.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable

from .game import Game, Partition, format_weight, as_weight

STANDARD = "standard"
DISSOLUTION = "dissolution"
MODES = (STANDARD, DISSOLUTION)

NEW_SINGLETON = ("new",)


class HiddenWeightError(LookupError):
    """An algorithm queried a weight involving an agent that has not arrived."""


class IllegalMoveError(RuntimeError):
    """An algorithm returned a move outside the legal set; the run is aborted."""

    def __init__(self, step, agent, move, legal):
        self.step, self.agent, self.move, self.legal = step, agent, move, list(legal)
        super().__init__(
            f"step {step}, agent {agent}: move {move!r} not in legal set {self.legal!r}")


class AlgorithmSetupError(ValueError):
    """An algorithm cannot be instantiated for the declared run parameters."""


def _check_mode(mode: str) -> bool:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return mode == DISSOLUTION


class RevealedGame:
    """Weight view limited to the arrived prefix of agents.

    Queries touching an agent that has not arrived raise HiddenWeightError,
    so an algorithm can only ever act on the revealed subgraph.
    """

    __slots__ = ("_weights", "_n", "_revealed")

    def __init__(self, game):
        self._weights = game._w
        self._n = game.n
        self._revealed: set[int] = set()

    def _reveal(self, agent: int) -> None:
        self._revealed.add(agent)

    @property
    def revealed_count(self) -> int:
        return len(self._revealed)

    def is_revealed(self, agent: int) -> bool:
        return agent in self._revealed

    def weight(self, i: int, j: int):
        rev = self._revealed
        if i not in rev or j not in rev:
            raise HiddenWeightError(f"pair ({i},{j}) is not fully revealed")
        if i == j:
            raise ValueError(f"weight of a self pair ({i},{i}) is undefined")
        return self._weights.get((i, j) if i < j else (j, i), 0)

    def sum_to(self, agent: int, others: Iterable[int]):
        """Sum of weights from ``agent`` to every agent in ``others``."""
        rev = self._revealed
        if agent not in rev:
            raise HiddenWeightError(f"agent {agent} is not revealed")
        w = self._weights
        total = 0
        for j in others:
            if j not in rev:
                raise HiddenWeightError(f"pair ({agent},{j}) is not fully revealed")
            total += w.get((agent, j) if agent < j else (j, agent), 0)
        return total


class RestrictedView:
    """A further-restricted weight view over an allowed agent subset.

    Used by wrappers that run an inner algorithm on a sub-population; the
    inner algorithm cannot see weights leaving the subset.
    """

    __slots__ = ("_base", "_allowed")

    def __init__(self, base, allowed: set[int]):
        self._base = base
        self._allowed = allowed

    def weight(self, i: int, j: int):
        if i not in self._allowed or j not in self._allowed:
            raise HiddenWeightError(f"pair ({i},{j}) is outside the restricted view")
        return self._base.weight(i, j)

    def sum_to(self, agent: int, others: Iterable[int]):
        allowed = self._allowed
        if agent not in allowed:
            raise HiddenWeightError(f"agent {agent} is outside the restricted view")
        total = 0
        for j in others:
            if j not in allowed:
                raise HiddenWeightError(f"pair ({agent},{j}) is outside the restricted view")
            total += self._base.weight(agent, j)
        return total


class PartitionState:
    """Mutable partition of the arrived agents with cached coalition welfare.

    Coalitions are identified by integer handles assigned in creation order.
    The state is single-owner: the engine mutates it, algorithms only read.
    Cloning is explicit and cheap.
    """

    __slots__ = ("coalitions", "_of", "welfare", "total", "_next")

    def __init__(self):
        self.coalitions: dict[int, set[int]] = {}
        self._of: dict[int, int] = {}
        self.welfare: dict[int, object] = {}
        self.total = 0
        self._next = 0

    @classmethod
    def from_blocks(cls, game, blocks) -> "PartitionState":
        state = cls()
        for block in blocks:
            members = sorted(block)
            if not members:
                raise ValueError("empty coalition")
            cid = state._new_singleton(members[0])
            for agent in members[1:]:
                gain = 2 * sum(game.weight(agent, j) for j in state.coalitions[cid])
                state._join(cid, agent, gain)
        return state

    def members(self, cid: int) -> set[int]:
        return self.coalitions[cid]

    def coalition_of(self, agent: int) -> int:
        return self._of[agent]

    def contains(self, agent: int) -> bool:
        return agent in self._of

    @property
    def agents(self):
        return self._of.keys()

    def blocks(self) -> frozenset:
        return frozenset(frozenset(c) for c in self.coalitions.values())

    def partition(self) -> Partition:
        return Partition(self.coalitions.values())

    def clone(self) -> "PartitionState":
        other = PartitionState.__new__(PartitionState)
        other.coalitions = {cid: set(c) for cid, c in self.coalitions.items()}
        other._of = dict(self._of)
        other.welfare = dict(self.welfare)
        other.total = self.total
        other._next = self._next
        return other

    def _new_singleton(self, agent: int) -> int:
        cid = self._next
        self._next = cid + 1
        self.coalitions[cid] = {agent}
        self.welfare[cid] = 0
        self._of[agent] = cid
        return cid

    def _join(self, cid: int, agent: int, gain) -> None:
        self.coalitions[cid].add(agent)
        self._of[agent] = cid
        self.welfare[cid] = self.welfare[cid] + gain
        self.total = self.total + gain

    def apply(self, move, agent: int, weight_of: Callable[[int, int], object]) -> None:
        """Apply a legal move for an arriving agent, updating cached welfare."""
        kind = move[0]
        if kind == "new":
            self._new_singleton(agent)
        elif kind == "join":
            cid = move[1]
            gain = 0
            for j in self.coalitions[cid]:
                gain += weight_of(agent, j)
            self._join(cid, agent, 2 * gain)
        elif kind == "dissolve":
            cid, partner = move[1], move[2]
            members = self.coalitions.pop(cid)
            old = self.welfare.pop(cid)
            for j in sorted(members):
                if j != partner:
                    self._new_singleton(j)
            pair_cid = self._next
            self._next = pair_cid + 1
            pair_sw = 2 * weight_of(agent, partner)
            self.coalitions[pair_cid] = {agent, partner}
            self.welfare[pair_cid] = pair_sw
            self._of[agent] = pair_cid
            self._of[partner] = pair_cid
            self.total = self.total + pair_sw - old
        else:
            raise ValueError(f"unknown move {move!r}")


def legal_moves_standard(state: PartitionState, agent: int) -> list[tuple]:
    """One join per existing coalition plus a new singleton."""
    if state.contains(agent):
        raise ValueError(f"agent {agent} is already placed")
    moves: list[tuple] = [("join", cid) for cid in state.coalitions]
    moves.append(NEW_SINGLETON)
    return moves


def legal_moves_dissolution(state: PartitionState, agent: int) -> list[tuple]:
    """All standard moves plus one dissolve-and-pair per (coalition, member)."""
    if state.contains(agent):
        raise ValueError(f"agent {agent} is already placed")
    moves: list[tuple] = [("join", cid) for cid in state.coalitions]
    for cid, members in state.coalitions.items():
        for j in sorted(members):
            moves.append(("dissolve", cid, j))
    moves.append(NEW_SINGLETON)
    return moves


def legal_moves(state: PartitionState, agent: int, mode: str) -> list[tuple]:
    if _check_mode(mode):
        return legal_moves_dissolution(state, agent)
    return legal_moves_standard(state, agent)


class OnlineAlgorithm:
    """Decision procedure contract for online runs.

    ``begin`` is called once per run; ``n`` is the total number of agents if
    the algorithm declares ``knows_n`` and None otherwise.  ``choose`` must
    return one move from the provided legal set and may consult only the
    revealed weight view.
    """

    knows_n = False
    name = "algorithm"

    def begin(self, n: int | None, mode: str) -> None:
        pass

    def choose(self, view, state: PartitionState, agent: int, moves: list[tuple]):
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__}>"


class AlwaysSingleton(OnlineAlgorithm):
    """Baseline that puts every agent in its own coalition."""

    name = "singletons"

    def choose(self, view, state, agent, moves):
        return NEW_SINGLETON


class MatchingGuard(OnlineAlgorithm):
    """Wrapper that mirrors an inner algorithm while its output is a matching.

    On the first inner move that would create a coalition of size three or
    more, the guard substitutes a singleton and emits singletons for every
    later arrival, so its own output is a matching at every step.
    """

    def __init__(self, make_inner):
        self.inner = make_inner()
        self.knows_n = self.inner.knows_n
        self.name = f"guard:{getattr(self.inner, 'name', 'inner')}"
        self._stopped = False

    def begin(self, n, mode):
        self._stopped = False
        self.inner.begin(n, mode)

    def choose(self, view, state, agent, moves):
        if self._stopped:
            return NEW_SINGLETON
        move = self.inner.choose(view, state, agent, moves)
        if move[0] == "join" and len(state.members(move[1])) >= 2:
            self._stopped = True
            return NEW_SINGLETON
        return move


def matching_guard(make_inner) -> Callable[[], MatchingGuard]:
    """Factory adapter: guard every instance produced by ``make_inner``."""
    return lambda: MatchingGuard(make_inner)


def advance(weight_of, view, state, algorithm, agent: int, mode: str, step: int):
    """Run one arrival: enumerate moves, ask the algorithm, validate, apply."""
    view._reveal(agent)
    moves = legal_moves(state, agent, mode)
    move = algorithm.choose(view, state, agent, moves)
    if move not in moves:
        raise IllegalMoveError(step, agent, move, moves)
    state.apply(move, agent, weight_of)
    return move


def _normalize_move(move, state_before: dict[int, set[int]]):
    """Replace coalition handles by member sets, for replay-stable traces."""
    if move[0] == "new":
        return ("new",)
    if move[0] == "join":
        return ("join", frozenset(state_before[move[1]]))
    return ("dissolve", frozenset(state_before[move[1]]), move[2])


@dataclass(frozen=True, slots=True)
class TraceStep:
    step: int
    agent: int
    move: tuple
    sw: object
    partition: frozenset | None = None
    wall_s: float = 0.0


@dataclass(slots=True)
class RunTrace:
    """Full record of one online run, sufficient to audit and replay it."""

    n: int
    order: tuple[int, ...]
    mode: str
    algorithm: str
    steps: list[TraceStep] = field(default_factory=list)

    @property
    def final_sw(self):
        return self.steps[-1].sw if self.steps else Fraction(0)

    @property
    def final_partition(self) -> frozenset:
        if not self.steps or self.steps[-1].partition is None:
            raise ValueError("trace was recorded without partition snapshots")
        return self.steps[-1].partition

    def to_jsonl(self) -> str:
        lines = []
        for ts in self.steps:
            move = ts.move
            if move[0] == "new":
                mv = {"kind": "new"}
            elif move[0] == "join":
                mv = {"kind": "join", "coalition": sorted(move[1])}
            else:
                mv = {"kind": "dissolve", "coalition": sorted(move[1]), "partner": move[2]}
            lines.append(json.dumps(
                {"step": ts.step, "agent": ts.agent, "move": mv,
                 "sw": format_weight(ts.sw)},
                sort_keys=True))
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_jsonl(cls, text: str, n: int, order, mode: str,
                   algorithm: str = "replay") -> "RunTrace":
        steps = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            mv = rec["move"]
            if mv["kind"] == "new":
                move = ("new",)
            elif mv["kind"] == "join":
                move = ("join", frozenset(mv["coalition"]))
            elif mv["kind"] == "dissolve":
                move = ("dissolve", frozenset(mv["coalition"]), mv["partner"])
            else:
                raise ValueError(f"unknown move kind {mv['kind']!r}")
            steps.append(TraceStep(rec["step"], rec["agent"], move, as_weight(rec["sw"])))
        return cls(n, tuple(order), mode, algorithm, steps)


def _validate_order(game, order) -> tuple[int, ...]:
    order = tuple(order)
    if sorted(order) != list(range(game.n)):
        raise ValueError(f"order must be a permutation of 0..{game.n - 1}")
    return order


def run_online(game, order, make_algorithm, mode: str = STANDARD,
               *, record_partitions: bool = True) -> RunTrace:
    """Drive a full run and record a step-by-step trace.

    The algorithm instance is constructed fresh via ``make_algorithm`` and
    sees only the revealed weight view.  Social welfare annotations use
    exact arithmetic on the game's weights.
    """
    order = _validate_order(game, order)
    algorithm = make_algorithm()
    algorithm.begin(game.n if algorithm.knows_n else None, mode)
    _check_mode(mode)
    state = PartitionState()
    view = RevealedGame(game)
    weight_of = game.weight
    trace = RunTrace(game.n, order, mode, getattr(algorithm, "name", "algorithm"))
    for step, agent in enumerate(order, 1):
        before = {cid: set(c) for cid, c in state.coalitions.items()}
        t0 = time.perf_counter()
        move = advance(weight_of, view, state, algorithm, agent, mode, step)
        wall = time.perf_counter() - t0
        snapshot = state.blocks() if record_partitions else None
        trace.steps.append(TraceStep(step, agent, _normalize_move(move, before),
                                     state.total, snapshot, wall))
    return trace


def run_final(game, order, make_algorithm, mode: str = STANDARD,
              *, check_order: bool = True) -> PartitionState:
    """Drive a full run and return only the final state (no trace)."""
    if check_order:
        order = _validate_order(game, order)
    algorithm = make_algorithm()
    algorithm.begin(game.n if algorithm.knows_n else None, mode)
    _check_mode(mode)
    state = PartitionState()
    view = RevealedGame(game)
    weight_of = game.weight
    step = 0
    for agent in order:
        step += 1
        advance(weight_of, view, state, algorithm, agent, mode, step)
    return state


def validate_trace(game, order, trace: RunTrace, mode: str) -> tuple[bool, list[str]]:
    """Re-check every transition of a trace and recompute its welfare annotations.

    Returns (ok, violations); never raises on bad traces.
    """
    violations: list[str] = []
    dissolution = _check_mode(mode)
    try:
        order = _validate_order(game, order)
    except ValueError as exc:
        return False, [str(exc)]
    if len(trace.steps) != len(order):
        violations.append(
            f"trace has {len(trace.steps)} steps for {len(order)} arrivals")
    blocks: set[frozenset] = set()
    placed: set[int] = set()
    sw = Fraction(0)
    for ts, agent in zip(trace.steps, order):
        prefix = f"step {ts.step}"
        if ts.agent != agent:
            violations.append(f"{prefix}: trace agent {ts.agent} != order agent {agent}")
        if agent in placed:
            violations.append(f"{prefix}: agent {agent} arrives twice")
        move = ts.move
        if move[0] == "new":
            blocks.add(frozenset([agent]))
        elif move[0] == "join":
            target = move[1]
            if target not in blocks:
                violations.append(f"{prefix}: join target {sorted(target)} does not exist")
            else:
                blocks.remove(target)
                blocks.add(target | {agent})
        elif move[0] == "dissolve":
            target, partner = move[1], move[2]
            if not dissolution:
                violations.append(f"{prefix}: dissolve move in standard mode")
            if target not in blocks:
                violations.append(f"{prefix}: dissolve target {sorted(target)} does not exist")
            elif partner not in target:
                violations.append(f"{prefix}: partner {partner} not in {sorted(target)}")
            else:
                blocks.remove(target)
                for j in target:
                    if j != partner:
                        blocks.add(frozenset([j]))
                blocks.add(frozenset([agent, partner]))
        else:
            violations.append(f"{prefix}: unknown move {move!r}")
        placed.add(agent)
        sw = Fraction(0)
        for b in blocks:
            members = sorted(b)
            for x in range(len(members)):
                for y in range(x + 1, len(members)):
                    sw += 2 * as_weight(game.weight(members[x], members[y]))
        if as_weight(ts.sw) != sw:
            violations.append(
                f"{prefix}: recorded sw {format_weight(ts.sw)} != recomputed {format_weight(sw)}")
        if ts.partition is not None and ts.partition != frozenset(blocks):
            violations.append(f"{prefix}: recorded partition snapshot does not match replay")
        if sorted(a for b in blocks for a in b) != sorted(placed):
            violations.append(f"{prefix}: partition does not cover exactly the arrived agents")
    return not violations, violations
