"""String-state algebra for a series-parallel multilevel battery string.

A phase string of N modules is configured by a length-N vector of
connection elements. Element i (0-based, i < N-1) is the connection
between modules i and i+1; the last element is the output-terminal
connection. Maximal runs of modules joined by parallel elements form
parallel groups. An internal series or bypass element opens a new group
and sets that group's insertion polarity; the terminal element sets the
polarity of the first group. Series-plus inserts a group with +1,
series-minus with -1, and bypass (or a non-series terminal) leaves the
group out of the stack. The string's output level is the sum of the group
polarities, so an N-module string spans the 2N+1 levels -N..+N.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

from enum import IntEnum


class Connection(IntEnum):
    """Connection element kinds in canonical order (P < S+ < S- < B)."""

    PARALLEL = 0
    SERIES_PLUS = 1
    SERIES_MINUS = 2
    BYPASS = 3

    @property
    def token(self) -> str:
        return _TOKENS[self]


_TOKENS = {
    Connection.PARALLEL: "P",
    Connection.SERIES_PLUS: "S+",
    Connection.SERIES_MINUS: "S-",
    Connection.BYPASS: "B",
}

_POLARITY = {
    Connection.PARALLEL: 0,
    Connection.SERIES_PLUS: 1,
    Connection.SERIES_MINUS: -1,
    Connection.BYPASS: 0,
}

# A string state is a length-N tuple of connection elements. Tuples compare
# lexicographically on the enum values, which is the canonical state order.
StringState = tuple


@dataclass(frozen=True)
class Group:
    """A maximal run of parallel-joined modules with one insertion polarity."""

    members: tuple[int, ...]  # 0-based module indices, contiguous
    polarity: int  # +1 series-plus, -1 series-minus, 0 out of the stack


@dataclass(frozen=True)
class GroupLayout:
    groups: tuple[Group, ...]
    level: int


def format_state(state: StringState) -> str:
    """Render a state as the compact token string, e.g. ``PPS+PS+``."""
    return "".join(e.token for e in state)


def parse_state(text: str) -> StringState:
    """Parse the token notation (tokens P, S+, S-, B) into a state tuple."""
    elements = []
    i = 0
    while i < len(text):
        c = text[i]
        if c == "P":
            elements.append(Connection.PARALLEL)
            i += 1
        elif c == "B":
            elements.append(Connection.BYPASS)
            i += 1
        elif c == "S":
            if i + 1 >= len(text) or text[i + 1] not in "+-":
                raise ValueError(f"bare 'S' in state string {text!r}; expected S+ or S-")
            elements.append(
                Connection.SERIES_PLUS if text[i + 1] == "+" else Connection.SERIES_MINUS
            )
            i += 2
        else:
            raise ValueError(f"unknown token {c!r} in state string {text!r}")
    if len(elements) < 2:
        raise ValueError(f"state {text!r} has fewer than two elements")
    return tuple(elements)


def decompose_groups(state: StringState) -> GroupLayout:
    """Split a state into parallel groups with polarities and the output level.

    Total on every state of length >= 2: a parallel or bypass terminal
    element simply leaves the first group out of the stack (polarity 0).
    """
    n = len(state)
    if n < 2:
        raise ValueError("a string state needs at least two elements")
    runs: list[tuple[int, int]] = []
    openers: list[Connection] = []
    start = 0
    for i in range(n - 1):
        if state[i] is not Connection.PARALLEL:
            runs.append((start, i))
            openers.append(state[i])
            start = i + 1
    runs.append((start, n - 1))
    polarities = [_POLARITY[state[-1]]] + [_POLARITY[e] for e in openers]
    groups = tuple(
        Group(tuple(range(a, b + 1)), p) for (a, b), p in zip(runs, polarities)
    )
    return GroupLayout(groups, sum(g.polarity for g in groups))


def level_of(state: StringState) -> int:
    return decompose_groups(state).level


def mirror_state(state: StringState) -> StringState:
    """Swap S+ and S-; mirrors the output level."""
    swap = {
        Connection.SERIES_PLUS: Connection.SERIES_MINUS,
        Connection.SERIES_MINUS: Connection.SERIES_PLUS,
    }
    return tuple(swap.get(e, e) for e in state)


def toggle_count(a: StringState, b: StringState) -> int:
    """Number of connection elements that differ between two states."""
    if len(a) != len(b):
        raise ValueError("states have different lengths")
    return sum(1 for x, y in zip(a, b) if x is not y)


# Elementary conversions that push the level up resp. down. A level increase
# either adds a series-plus insertion or removes a series-minus one; the
# mirror holds for a decrease. Converting S+ directly to S- (a two-level
# jump) is never allowed in a single step.
_RAISING = {
    Connection.PARALLEL: (Connection.SERIES_PLUS,),
    Connection.BYPASS: (Connection.SERIES_PLUS,),
    Connection.SERIES_MINUS: (Connection.PARALLEL, Connection.BYPASS),
    Connection.SERIES_PLUS: (),
}
_LOWERING = {
    Connection.PARALLEL: (Connection.SERIES_MINUS,),
    Connection.BYPASS: (Connection.SERIES_MINUS,),
    Connection.SERIES_PLUS: (Connection.PARALLEL, Connection.BYPASS),
    Connection.SERIES_MINUS: (),
}
_ANY = {
    k: tuple(x for x in Connection if x is not k) for k in Connection
}


def enumerate_transitions(
    state: StringState, level_delta: int, toggle_limit: int
) -> tuple[StringState, ...]:
    """All states one level step (or hold) away within the toggle budget.

    For a level change every toggled element must move the level in the
    requested direction; a hold may rearrange elements freely. The result
    is filtered to states whose level differs by exactly ``level_delta``
    and is returned in canonical order. May be empty (e.g. an increase
    requested at level +N); callers must handle that.
    """
    if level_delta not in (-1, 0, 1):
        raise ValueError(f"level_delta must be -1, 0 or +1, got {level_delta}")
    if toggle_limit < 1:
        raise ValueError("toggle_limit must be >= 1")
    n = len(state)
    target = decompose_groups(state).level + level_delta
    if level_delta > 0:
        allowed = _RAISING
    elif level_delta < 0:
        allowed = _LOWERING
    else:
        allowed = _ANY

    found = set()
    if level_delta == 0:
        found.add(tuple(state))
    base = list(state)
    for r in range(1, toggle_limit + 1):
        for positions in itertools.combinations(range(n), r):
            pools = [allowed[state[p]] for p in positions]
            for replacement in itertools.product(*pools):
                cand = base.copy()
                for p, e in zip(positions, replacement):
                    cand[p] = e
                cand_t = tuple(cand)
                if decompose_groups(cand_t).level == target:
                    found.add(cand_t)
    return tuple(sorted(found))


def all_states(n: int) -> tuple[StringState, ...]:
    """Every length-n state in canonical order."""
    if n < 2:
        raise ValueError("need at least two modules")
    return tuple(itertools.product(tuple(Connection), repeat=n))


def all_states_for_level(n: int, level: int) -> tuple[StringState, ...]:
    """Exhaustive, duplicate-free enumeration of the states at one level."""
    if abs(level) > n:
        raise ValueError(f"|level| {abs(level)} exceeds module count {n}")
    return tuple(s for s in all_states(n) if decompose_groups(s).level == level)
