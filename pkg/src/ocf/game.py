"""Exact representation of additively separable hedonic games.

A game is a complete undirected graph over agents ``0..n-1`` with rational
edge weights; pairs that are not stored weigh zero.  An agent's utility for
a coalition is the sum of its weights to the other members, and the social
welfare of a partition is the sum of all agents' utilities.
"""

from __future__ import annotations

import json
from fractions import Fraction
from typing import Iterable


class GameFormatError(ValueError):
    """Raised for malformed instance data (bad pairs, duplicates, parse errors)."""


class NotAMatchingError(ValueError):
    """Raised when a partition with a coalition of size three or more is used as a matching."""


def as_weight(value) -> Fraction:
    """Coerce a weight given as int, Fraction, "p/q" string, or decimal literal.

    Floats are interpreted through their shortest decimal repr so that JSON
    numbers like 0.5 mean exactly 1/2.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise GameFormatError(f"not a weight: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise GameFormatError(f"cannot parse weight {value!r}") from exc
    raise GameFormatError(f"not a weight: {value!r}")


def format_weight(w) -> str:
    """Render a weight as "p" or "p/q" in lowest terms."""
    w = Fraction(w) if not isinstance(w, Fraction) else w
    return str(w.numerator) if w.denominator == 1 else f"{w.numerator}/{w.denominator}"


def _pair(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


class Game:
    """Immutable complete weighted graph over ``n`` agents.

    ``weights`` maps unordered pairs to values; zero entries are dropped so
    absence means zero.  Self-pairs are rejected, as are duplicate entries
    for the same unordered pair.
    """

    __slots__ = ("n", "_w", "labels")

    def __init__(self, n: int, weights=None, labels=None, *, coerce: bool = True):
        if n < 0:
            raise GameFormatError("agent count must be nonnegative")
        w: dict[tuple[int, int], object] = {}
        for (i, j), value in (weights or {}).items():
            if i == j:
                raise GameFormatError(f"self pair ({i},{i}) is not allowed")
            if not (0 <= i < n and 0 <= j < n):
                raise GameFormatError(f"pair ({i},{j}) out of range for n={n}")
            key = _pair(i, j)
            if key in w:
                raise GameFormatError(f"duplicate weight for pair {key}")
            if coerce:
                value = as_weight(value)
            if value != 0:
                w[key] = value
        if labels is not None:
            labels = tuple(labels)
            if len(labels) != n:
                raise GameFormatError("labels must have one entry per agent")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "_w", w)
        object.__setattr__(self, "labels", labels)

    def __setattr__(self, name, value):
        raise AttributeError("Game is immutable")

    def weight(self, i: int, j: int):
        """Weight of the unordered pair {i, j}; zero when not stored."""
        if i == j:
            raise ValueError(f"weight of a self pair ({i},{i}) is undefined")
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise ValueError(f"pair ({i},{j}) out of range for n={self.n}")
        return self._w.get((i, j) if i < j else (j, i), 0)

    def pairs(self):
        """All stored (nonzero) pairs as ((i, j), weight) with i < j."""
        return self._w.items()

    def positive_edge_sum(self):
        """Sum of the weights of all strictly positive pairs."""
        total = Fraction(0)
        for w in self._w.values():
            if w > 0:
                total += w
        return total

    def agents(self) -> range:
        return range(self.n)

    def as_float(self) -> "Game":
        """Double-precision copy for Monte Carlo estimation paths."""
        return Game(self.n, {e: float(w) for e, w in self._w.items()},
                    self.labels, coerce=False)

    def scaled_to_integers(self) -> tuple["Game", int]:
        """Integer-weight copy plus the common denominator it was scaled by.

        Scaling by a positive constant preserves every comparison between
        linear combinations of weights, so algorithm decisions on the scaled
        game coincide with decisions on the original.
        """
        denom = 1
        for w in self._w.values():
            d = w.denominator if isinstance(w, Fraction) else 1
            if d != 1:
                g = _gcd(denom, d)
                denom = denom // g * d
        if denom == 1:
            ints = {e: int(w) for e, w in self._w.items()}
        else:
            ints = {e: int(w * denom) for e, w in self._w.items()}
        return Game(self.n, ints, self.labels, coerce=False), denom

    def __eq__(self, other):
        return (isinstance(other, Game) and self.n == other.n
                and self._w == other._w)

    def __hash__(self):
        return hash((self.n, frozenset(self._w.items())))

    def __repr__(self):
        return f"Game(n={self.n}, nonzero_pairs={len(self._w)})"


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return a


class Partition:
    """Immutable partition of a set of agents into disjoint nonempty coalitions."""

    __slots__ = ("blocks", "_member")

    def __init__(self, blocks: Iterable[Iterable[int]]):
        frozen = []
        member: dict[int, frozenset] = {}
        for block in blocks:
            b = frozenset(block)
            if not b:
                raise ValueError("empty coalition")
            for agent in b:
                if agent in member:
                    raise ValueError(f"agent {agent} appears in two coalitions")
                member[agent] = b
            frozen.append(b)
        frozen.sort(key=lambda b: min(b))
        object.__setattr__(self, "blocks", tuple(frozen))
        object.__setattr__(self, "_member", member)

    def __setattr__(self, name, value):
        raise AttributeError("Partition is immutable")

    @property
    def agents(self) -> frozenset:
        return frozenset(self._member)

    def coalition_of(self, agent: int) -> frozenset:
        return self._member[agent]

    def canon(self) -> frozenset:
        return frozenset(self.blocks)

    def is_matching(self) -> bool:
        return all(len(b) <= 2 for b in self.blocks)

    def restrict(self, subset: Iterable[int]) -> "Partition":
        return restrict_partition(self, subset)

    def __iter__(self):
        return iter(self.blocks)

    def __len__(self):
        return len(self.blocks)

    def __eq__(self, other):
        if isinstance(other, Partition):
            return self.canon() == other.canon()
        return NotImplemented

    def __hash__(self):
        return hash(self.canon())

    def __repr__(self):
        inner = ", ".join("{" + ",".join(map(str, sorted(b))) + "}" for b in self.blocks)
        return f"Partition({inner})"


class Matching(Partition):
    """A partition whose coalitions all have size one or two."""

    def __init__(self, blocks):
        super().__init__(blocks)
        for b in self.blocks:
            if len(b) > 2:
                raise NotAMatchingError(f"coalition {sorted(b)} has size {len(b)}")

    def edges(self) -> frozenset:
        return frozenset(b for b in self.blocks if len(b) == 2)


def _as_blocks(partition) -> Iterable[frozenset]:
    if isinstance(partition, Partition):
        return partition.blocks
    return [frozenset(b) for b in partition]


def utility(game: Game, agent: int, coalition: Iterable[int]):
    """Agent's utility for a coalition it belongs to: sum of weights to the others."""
    members = frozenset(coalition)
    if agent not in members:
        raise ValueError(f"agent {agent} is not a member of {sorted(members)}")
    total = Fraction(0)
    for j in members:
        if j != agent:
            total += game.weight(agent, j)
    return total


def coalition_welfare(game: Game, coalition: Iterable[int]):
    """Social welfare of one coalition: twice the sum of its internal pair weights."""
    members = sorted(coalition)
    total = Fraction(0)
    for a in range(len(members)):
        for b in range(a + 1, len(members)):
            total += game.weight(members[a], members[b])
    return 2 * total


def social_welfare(game: Game, partition):
    """Social welfare of a partition (accepts Partition or iterable of blocks)."""
    total = Fraction(0)
    for block in _as_blocks(partition):
        total += coalition_welfare(game, block)
    return total


def restrict_partition(partition, subset: Iterable[int]) -> Partition:
    """Intersect every coalition with ``subset`` and drop the empties."""
    keep = frozenset(subset)
    blocks = []
    for block in _as_blocks(partition):
        cut = block & keep
        if cut:
            blocks.append(cut)
    return Partition(blocks)


def is_matching(partition) -> bool:
    return all(len(b) <= 2 for b in _as_blocks(partition))


def matching_weight(game: Game, partition):
    """Total weight of the matched pairs; rejects coalitions of size three or more."""
    total = Fraction(0)
    for block in _as_blocks(partition):
        if len(block) > 2:
            raise NotAMatchingError(f"coalition {sorted(block)} has size {len(block)}")
        if len(block) == 2:
            i, j = block
            total += game.weight(i, j)
    return total


def induced_subgame(game: Game, subset: Iterable[int]) -> tuple[Game, tuple[int, ...]]:
    """Subgame over ``subset`` with dense ids, plus the new-id -> old-id map."""
    old_ids = tuple(sorted(set(subset)))
    for a in old_ids:
        if not (0 <= a < game.n):
            raise ValueError(f"agent {a} out of range for n={game.n}")
    back = {old: new for new, old in enumerate(old_ids)}
    weights = {}
    for (i, j), w in game.pairs():
        if i in back and j in back:
            weights[(back[i], back[j])] = w
    labels = old_ids if game.labels is None else tuple(game.labels[a] for a in old_ids)
    return Game(len(old_ids), weights, labels, coerce=False), old_ids


def game_to_dict(game: Game) -> dict:
    edges = [{"i": i, "j": j, "w": format_weight(w)}
             for (i, j), w in sorted(game.pairs())]
    data = {"n": game.n, "edges": edges}
    if game.labels is not None:
        data["labels"] = list(game.labels)
    return data


def game_from_dict(data: dict) -> Game:
    try:
        n = int(data["n"])
        raw_edges = data["edges"]
    except (KeyError, TypeError, ValueError) as exc:
        raise GameFormatError(f"bad instance data: {exc}") from exc
    weights = {}
    for entry in raw_edges:
        try:
            i, j, w = int(entry["i"]), int(entry["j"]), entry["w"]
        except (KeyError, TypeError, ValueError) as exc:
            raise GameFormatError(f"bad edge entry {entry!r}") from exc
        if not i < j:
            raise GameFormatError(f"edge ({i},{j}) must satisfy i < j")
        if (i, j) in weights:
            raise GameFormatError(f"duplicate edge ({i},{j})")
        weights[(i, j)] = as_weight(w)
    return Game(n, weights, data.get("labels"))


def save_game(game: Game, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(game_to_dict(game), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_game(path) -> Game:
    with open(path, "r", encoding="utf-8") as fh:
        return game_from_dict(json.load(fh))
