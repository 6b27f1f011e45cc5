"""Online coalition-formation algorithms, all against the engine's contract.

Every algorithm is deterministic.  Greedy variants take a move only when it
strictly increases social welfare; ties between equally good improving moves
are broken by preferring a join over a dissolve, then the coalition with
the smallest minimum agent index, then the smallest partner index.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import isqrt

from .engine import (
    NEW_SINGLETON,
    AlgorithmSetupError,
    AlwaysSingleton,
    MatchingGuard,
    OnlineAlgorithm,
    RestrictedView,
    STANDARD,
    DISSOLUTION,
    matching_guard,
)
from .game import Game, as_weight

# Smallest fraction with denominator 10**30 that upper-bounds 1 + sqrt(2)/2.
# Rounding up makes the dissolve predicate at least as strict as with the
# exact irrational threshold, and instance families built from the same
# fraction satisfy their closed forms exactly in rational arithmetic.
_SCALE = 10**30
DISSOLVE_THRESHOLD = Fraction(_SCALE + isqrt(5 * 10**59) + 1, _SCALE)


def _greedy_pick(view, state, agent, moves, *,
                 allow_dissolve=True, matching_only=False):
    """Best strictly improving move under the documented tie policy, else a singleton."""
    best_delta = 0
    best_key = None
    best_move = NEW_SINGLETON
    for move in moves:
        kind = move[0]
        if kind == "join":
            members = state.members(move[1])
            if matching_only and len(members) >= 2:
                continue
            delta = 2 * view.sum_to(agent, members)
            key = (0, min(members), -1)
        elif kind == "dissolve":
            if not allow_dissolve:
                continue
            members = state.members(move[1])
            delta = 2 * view.weight(agent, move[2]) - state.welfare[move[1]]
            key = (1, min(members), move[2])
        else:
            continue
        if delta > 0 and (delta > best_delta
                          or (delta == best_delta and key < best_key)):
            best_delta, best_key, best_move = delta, key, move
    return best_move


class Greedy(OnlineAlgorithm):
    """Assign each arrival to the available option with the largest welfare gain.

    With ``standard_moves_only`` the dissolve options are ignored even when
    the run allows them; with ``matching_only`` the algorithm never grows a
    coalition beyond size two (it acts purely in the matching domain).
    """

    name = "gdy"

    def __init__(self, *, standard_moves_only: bool = False,
                 matching_only: bool = False):
        self._allow_dissolve = not standard_moves_only
        self._matching_only = matching_only

    def choose(self, view, state, agent, moves):
        return _greedy_pick(view, state, agent, moves,
                            allow_dissolve=self._allow_dissolve,
                            matching_only=self._matching_only)


class WaitingGreedy(OnlineAlgorithm):
    """Park the first half of the agents as singletons, then act greedily.

    Defined only for a known, even number of agents.
    """

    knows_n = True
    name = "wgdy"

    def begin(self, n, mode):
        if n is None or n % 2 != 0:
            raise AlgorithmSetupError("waiting greedy needs a known, even agent count")
        self._wait = n // 2
        self._seen = 0

    def choose(self, view, state, agent, moves):
        self._seen += 1
        if self._seen <= self._wait:
            return NEW_SINGLETON
        return _greedy_pick(view, state, agent, moves, allow_dissolve=False)


class HalvesPairing(OnlineAlgorithm):
    """Leave the first half unmatched; pair arrival n/2+i with arrival i when positive.

    Defined only for a known, even number of agents.
    """

    knows_n = True
    name = "gma"

    def begin(self, n, mode):
        if n is None or n % 2 != 0:
            raise AlgorithmSetupError("halves pairing needs a known, even agent count")
        self._half = n // 2
        self._arrivals: list[int] = []

    def choose(self, view, state, agent, moves):
        self._arrivals.append(agent)
        seen = len(self._arrivals)
        if seen <= self._half:
            return NEW_SINGLETON
        partner = self._arrivals[seen - self._half - 1]
        if view.weight(agent, partner) > 0:
            return ("join", state.coalition_of(partner))
        return NEW_SINGLETON


class ThresholdMatching(OnlineAlgorithm):
    """Greedy matching that dissolves a pair only for a factor-t improvement.

    The arriving agent may pair with a singleton, or replace an existing
    pair {j, l} by {agent, j} when w(agent, j) >= t * w(j, l).  Among these
    options it takes the best strictly improving one, else stays single.
    Coalitions never exceed size two.  Requires dissolution runs.
    """

    name = "dta"

    def __init__(self, t=DISSOLVE_THRESHOLD):
        t = as_weight(t)
        if t < 1:
            raise AlgorithmSetupError(f"threshold must be at least 1, got {t}")
        self.t = t

    def begin(self, n, mode):
        if mode != DISSOLUTION:
            raise AlgorithmSetupError("threshold matching needs dissolution runs")

    def choose(self, view, state, agent, moves):
        t = self.t
        best_delta = 0
        best_key = None
        best_move = NEW_SINGLETON
        for move in moves:
            kind = move[0]
            if kind == "join":
                members = state.members(move[1])
                if len(members) != 1:
                    continue
                delta = 2 * view.sum_to(agent, members)
                key = (0, min(members), -1)
            elif kind == "dissolve":
                members = state.members(move[1])
                if len(members) != 2:
                    continue
                j = move[2]
                (other,) = members - {j}
                w_new = view.weight(agent, j)
                if w_new < t * view.weight(j, other):
                    continue
                delta = 2 * w_new - state.welfare[move[1]]
                key = (1, min(members), j)
            else:
                continue
            if delta > 0 and (delta > best_delta
                              or (delta == best_delta and key < best_key)):
                best_delta, best_key, best_move = delta, key, move
        return best_move


@dataclass(frozen=True, slots=True)
class OddsPlan:
    """Stopping plan for catching the last record event among n arrivals.

    The k-th arrival (k >= 2) carries a record with probability 2/k, so its
    odds are 2/(k-2), infinite at k = 2.  ``stop`` is the largest index s
    such that the odds summed from s to n reach at least one.
    """

    n: int
    stop: int


def odds_stopping_time(n: int) -> OddsPlan:
    if n < 2:
        raise ValueError(f"need at least two arrivals, got n={n}")
    acc = Fraction(0)
    for s in range(n, 2, -1):
        acc += Fraction(2, s - 2)
        if acc >= 1:
            return OddsPlan(n, s)
    return OddsPlan(n, 2)


class BestEdgeStopping(OnlineAlgorithm):
    """Wait through the stopping index, then match the first strict record edge.

    A record happens when the arriving agent carries an edge strictly
    heavier than every edge seen among the earlier arrivals.  From arrival
    ``stop`` on, the first positive record edge is matched (the heaviest
    one if the step carries several); everything else stays single, and at
    most one pair is ever formed.
    """

    knows_n = True
    name = "maxe"

    def begin(self, n, mode):
        if n is None:
            raise AlgorithmSetupError("best-edge stopping needs a known agent count")
        self._stop = odds_stopping_time(n).stop if n >= 2 else 2
        self._present: list[int] = []
        self._best = None
        self._matched = False
        self._seen = 0

    def choose(self, view, state, agent, moves):
        self._seen += 1
        step_max = None
        partner = None
        for j in self._present:
            w = view.weight(agent, j)
            if step_max is None or w > step_max or (w == step_max and j < partner):
                step_max, partner = w, j
        move = NEW_SINGLETON
        if (not self._matched and partner is not None
                and self._seen >= self._stop and step_max > 0
                and (self._best is None or step_max > self._best)):
            self._matched = True
            move = ("join", state.coalition_of(partner))
        if step_max is not None and (self._best is None or step_max > self._best):
            self._best = step_max
        self._present.append(agent)
        return move


class IteratedDoubling(OnlineAlgorithm):
    """Run a known-horizon algorithm in phases of doubling length.

    Phase i hands the next 2**(i+1) arrivals to a fresh inner instance that
    assumes exactly that many agents; a trailing incomplete phase simply
    stops early.  Coalitions never span phases, and the inner instance can
    only see weights between agents of its own phase.
    """

    knows_n = False

    def __init__(self, make_inner, name: str = "i-alg"):
        self._make_inner = make_inner
        self.name = name

    def begin(self, n, mode):
        if mode != STANDARD:
            raise AlgorithmSetupError("iterated doubling is defined for standard runs")
        self._mode = mode
        self._phase = -1
        self._left = 0
        self._inner = None
        self._phase_agents: set[int] = set()

    def choose(self, view, state, agent, moves):
        if self._left == 0:
            self._phase += 1
            horizon = 2 ** (self._phase + 1)
            self._inner = self._make_inner()
            self._inner.begin(horizon, self._mode)
            self._left = horizon
            self._phase_agents = set()
        self._left -= 1
        self._phase_agents.add(agent)
        phase_view = RestrictedView(view, self._phase_agents)
        phase_moves = [mv for mv in moves
                       if mv[0] != "join" or state.members(mv[1]) <= self._phase_agents]
        return self._inner.choose(phase_view, state, agent, phase_moves)


def iwa() -> IteratedDoubling:
    """Iterated waiting algorithm: doubling phases of the waiting greedy rule."""
    return IteratedDoubling(WaitingGreedy, name="iwa")


def i_maxe() -> IteratedDoubling:
    """Doubling phases of best-edge stopping; at most one pair per phase."""
    return IteratedDoubling(BestEdgeStopping, name="i-maxe")


def perturb_distinct(game: Game) -> Game:
    """Order-preserving tie break: lower repeated weights by distinct tiny offsets.

    Offsets are multiples of eps/n**2 where eps is half the minimum gap
    between two distinct weights, so strict comparisons are preserved and
    the maximum weight value is unchanged.  Already-distinct games come
    back identical.
    """
    n = game.n
    values = []
    for i in range(n):
        for j in range(i + 1, n):
            values.append(game.weight(i, j))
    distinct = sorted(set(values))
    if len(distinct) <= 1:
        eps = Fraction(1)
    else:
        eps = min(b - a for a, b in zip(distinct, distinct[1:])) / 2
    unit = eps / (n * n)
    used: set[Fraction] = set()
    weights = {}
    for i in range(n):
        for j in range(i + 1, n):
            w = as_weight(game.weight(i, j))
            k = 0
            while w - k * unit in used:
                k += 1
                if k > n * n:
                    raise RuntimeError("ran out of perturbation offsets")
            w2 = w - k * unit
            used.add(w2)
            weights[(i, j)] = w2
    return Game(n, weights, game.labels)


def algorithm_factory(spec: str):
    """Resolve an algorithm name like "gdy", "dta:7/4" or "guard:gdy" to a factory."""
    spec = spec.strip()
    head, sep, arg = spec.partition(":")
    head = head.lower()
    if head == "gdy" and not sep:
        return Greedy
    if head == "gma" and not sep:
        return HalvesPairing
    if head == "wgdy" and not sep:
        return WaitingGreedy
    if head == "iwa" and not sep:
        return iwa
    if head == "maxe" and not sep:
        return BestEdgeStopping
    if head == "i-maxe" and not sep:
        return i_maxe
    if head == "singletons" and not sep:
        return AlwaysSingleton
    if head == "dta":
        if not sep:
            return ThresholdMatching
        t = as_weight(arg)
        return lambda: ThresholdMatching(t)
    if head == "guard" and sep:
        return matching_guard(algorithm_factory(arg))
    raise ValueError(f"unknown algorithm spec {spec!r}")


ALGORITHM_NAMES = ("gdy", "gma", "wgdy", "iwa", "dta", "dta:<t>",
                   "maxe", "i-maxe", "guard:<name>", "singletons")
