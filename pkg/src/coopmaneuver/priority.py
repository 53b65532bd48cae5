"""Priority sets: antisymmetric sets of ordered CAV pairs (prioritized, yielding)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable


@dataclass(frozen=True)
class PrioritySet:
    pairs: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "pairs", frozenset((int(a), int(b)) for a, b in self.pairs))
        for a, b in self.pairs:
            if a == b:
                raise ValueError(f"pair ({a}, {b}) is reflexive")
            if (b, a) in self.pairs:
                raise ValueError(f"pairs ({a}, {b}) and ({b}, {a}) violate antisymmetry")

    @classmethod
    def of(cls, pairs: Iterable[tuple[int, int]]) -> "PrioritySet":
        return cls(frozenset(pairs))

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(sorted(self.pairs))

    def __contains__(self, pair):
        return tuple(pair) in self.pairs

    @property
    def vehicles(self) -> set[int]:
        return {v for p in self.pairs for v in p}

    def with_pair(self, pair: tuple[int, int]) -> "PrioritySet":
        return PrioritySet(self.pairs | {pair})

    def without(self, pair: tuple[int, int]) -> "PrioritySet":
        return PrioritySet(self.pairs - {pair})

    def reversed(self, pair: tuple[int, int]) -> "PrioritySet":
        a, b = pair
        return PrioritySet((self.pairs - {pair}) | {(b, a)})

    def key(self) -> tuple:
        return tuple(sorted(self.pairs))


EMPTY = PrioritySet()


def has_cycle(edges: Iterable[tuple[int, int]]) -> bool:
    graph: dict[int, list[int]] = {}
    for a, b in edges:
        graph.setdefault(a, []).append(b)
    state: dict[int, int] = {}  # 1 on stack, 2 finished

    def visit(u) -> bool:
        state[u] = 1
        for w in graph.get(u, ()):
            st = state.get(w, 0)
            if st == 1 or (st == 0 and visit(w)):
                return True
        state[u] = 2
        return False

    return any(state.get(u, 0) == 0 and visit(u) for u in list(graph))
