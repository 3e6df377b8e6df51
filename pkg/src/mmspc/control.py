"""High-bandwidth module-current scheduler building blocks.

The scheduler closes its loop through an observer instead of measured
module currents: a look-up table holds the expected per-module share of
the phase current for every feasible string state, and multiplying a
state's shares by the per-tick phase signal yields the current estimate.
Per-module controllers turn demand-vs-estimate errors into a target
distribution, and the optimizer picks, among the toggle-limited candidate
states, the one whose distribution matches that target best in the
least-squares sense.

Sign convention: LUT shares are unsigned (1/group-size). The battery-frame
estimate additionally carries each module's insertion polarity, so that at
unity power factor it equals the physical discharge current in both
half-waves; without the polarity factor the per-period feedback integral
would cancel and the integral controllers would carry no balance
information.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from . import topology
from .electrical import (
    BatteryModule,
    InterconnectResistances,
    assemble_system,
    ideal_share,
    solve_distribution,
)
from .topology import Connection, GroupLayout, StringState


class MissingStateError(KeyError):
    """A state was looked up that the LUT was not built for (stale after an
    N change)."""


class ObserverLUT:
    """Share look-up for every feasible state of an N-module string.

    Rows are indexed in canonical state order. Besides the unsigned ideal
    shares the table carries the per-module insertion polarity, the output
    level and the group runs of every state, which back both schedulers
    and the per-tick electrical solve.
    """

    def __init__(self, n_modules: int):
        if n_modules < 2:
            raise ValueError("need at least two modules")
        self.n_modules = n_modules
        self.states: tuple[StringState, ...] = topology.all_states(n_modules)
        m = len(self.states)
        self.index: dict[StringState, int] = {s: i for i, s in enumerate(self.states)}
        self.shares = np.zeros((m, n_modules))
        self.polarity = np.zeros((m, n_modules), dtype=np.int8)
        self.levels = np.zeros(m, dtype=np.int16)
        self.layouts: list[GroupLayout] = []
        for i, s in enumerate(self.states):
            layout = topology.decompose_groups(s)
            self.layouts.append(layout)
            self.shares[i] = ideal_share(layout)
            for g in layout.groups:
                self.polarity[i, list(g.members)] = g.polarity
            self.levels[i] = layout.level
        self._refresh_derived()
        self._level_rows: dict[int, np.ndarray] = {
            lv: np.flatnonzero(self.levels == lv)
            for lv in range(-n_modules, n_modules + 1)
        }
        self._transitions: dict[tuple[int, int, int], tuple[np.ndarray, np.ndarray]] = {}

    def _refresh_derived(self) -> None:
        self.signed_shares = self.shares * self.polarity
        self.share_sq = (self.shares**2).sum(axis=1)

    # -- map-style access -------------------------------------------------

    def __contains__(self, state: StringState) -> bool:
        return state in self.index

    def __len__(self) -> int:
        return len(self.states)

    def row(self, state: StringState) -> int:
        try:
            return self.index[state]
        except KeyError:
            raise MissingStateError(state) from None

    def share(self, state: StringState) -> np.ndarray:
        return self.shares[self.row(state)]

    def signed_share(self, state: StringState) -> np.ndarray:
        return self.signed_shares[self.row(state)]

    def level_rows(self, level: int) -> np.ndarray:
        if abs(level) > self.n_modules:
            raise ValueError(f"|level| {abs(level)} exceeds module count")
        return self._level_rows[level]

    # -- transitions -------------------------------------------------------

    def transitions(
        self, row: int, level_delta: int, toggle_limit: int
    ) -> tuple[np.ndarray, np.ndarray]:
        """Candidate rows one level step away plus their toggle counts.

        Same contract as ``topology.enumerate_transitions`` but computed on
        the index tables and cached per (state, delta, limit).
        """
        key = (row, level_delta, toggle_limit)
        cached = self._transitions.get(key)
        if cached is not None:
            return cached
        state = self.states[row]
        n = self.n_modules
        target = int(self.levels[row]) + level_delta
        if level_delta > 0:
            allowed = topology._RAISING
        elif level_delta < 0:
            allowed = topology._LOWERING
        else:
            allowed = topology._ANY
        rows: list[int] = []
        toggles: list[int] = []
        if level_delta == 0:
            rows.append(row)
            toggles.append(0)
        base = list(state)
        for r in range(1, toggle_limit + 1):
            for positions in itertools.combinations(range(n), r):
                pools = [allowed[state[p]] for p in positions]
                for replacement in itertools.product(*pools):
                    cand = base.copy()
                    for p, e in zip(positions, replacement):
                        cand[p] = e
                    idx = self.index[tuple(cand)]
                    if self.levels[idx] == target:
                        rows.append(idx)
                        toggles.append(r)
        order = np.argsort(rows, kind="stable")
        result = (
            np.asarray(rows, dtype=np.int32)[order],
            np.asarray(toggles, dtype=np.int32)[order],
        )
        self._transitions[key] = result
        return result

    # -- occasional share refresh ------------------------------------------

    def refresh_from_solve(
        self,
        modules: Sequence[BatteryModule],
        res: InterconnectResistances,
        i_ref: float,
    ) -> None:
        """Replace ideal shares with solved ones at the reference current.

        Per group the mesh system is solved once at ``i_ref``; shares are
        the normalized member currents, so voltage imbalance shows up as
        off-ideal (possibly negative) entries. Group sums stay 1.
        """
        if i_ref <= 0:
            raise ValueError("reference current must be positive")
        solved: dict[tuple[int, int], np.ndarray] = {}
        for i, layout in enumerate(self.layouts):
            for g in layout.groups:
                if g.polarity == 0:
                    continue
                key = (g.members[0], len(g.members))
                cur = solved.get(key)
                if cur is None:
                    system = assemble_system(g.members, modules, res, i_ref)
                    cur = solve_distribution(system) / i_ref
                    solved[key] = cur
                self.shares[i, list(g.members)] = cur
        self._refresh_derived()

    def reset_ideal(self) -> None:
        """Back to the constant ideal-share table."""
        for i, layout in enumerate(self.layouts):
            self.shares[i] = ideal_share(layout)
        self._refresh_derived()


def observer_estimate(
    state: StringState, lut: ObserverLUT, phase_signal: float
) -> np.ndarray:
    """LUT shares scaled by the phase terminal signal.

    The phase signal is the measured current magnitude times the level sign
    in sensored operation and the sign of the voltage reference in
    sensorless operation.
    """
    return lut.share(state) * float(phase_signal)


def signed_estimate(
    state: StringState, lut: ObserverLUT, phase_signal: float
) -> np.ndarray:
    """Battery-frame current estimate: shares, polarity and phase signal."""
    return lut.signed_share(state) * float(phase_signal)


@dataclass
class ControllerState:
    """Per-module PI controllers sharing one gain set.

    ``integral`` carries the ki gain already (output units), so the
    anti-windup limit is expressed directly in amperes resp. utilization.
    """

    integral: np.ndarray
    kp: float = 0.0
    ki: float = 0.5
    windup_limit: float = 50.0
    sensorless: bool = False

    @classmethod
    def zeros(cls, n: int, **kwargs) -> "ControllerState":
        return cls(integral=np.zeros(n), **kwargs)


def controller_step(
    demand: Sequence[float],
    feedback: Sequence[float],
    cs: ControllerState,
    dt: float,
) -> tuple[np.ndarray, ControllerState]:
    """One controller tick: J* = kp*e + clamped integral of ki*e.

    Sensorless mode discards the proportional part (pure integrator).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    d = np.asarray(demand, dtype=float)
    f = np.asarray(feedback, dtype=float)
    if d.shape != f.shape:
        raise ValueError("demand and feedback lengths differ")
    e = d - f
    integral = np.clip(
        cs.integral + cs.ki * dt * e, -cs.windup_limit, cs.windup_limit
    )
    kp = 0.0 if cs.sensorless else cs.kp
    j_star = kp * e + integral
    return j_star, replace(cs, integral=integral)


def demand_generator(
    modules: Sequence[BatteryModule],
    mean_load: float,
    mode: str = "equal-share",
    beta: float = 2.0,
) -> np.ndarray:
    """Per-module demand around a mean utilization.

    equal-share hands every module the mean; soc-proportional tilts the
    demand toward higher-charged modules and renormalizes so the mean is
    preserved (negative demands are clamped before renormalizing).
    """
    n = len(modules)
    if mode == "equal-share":
        return np.full(n, float(mean_load))
    if mode != "soc-proportional":
        raise ValueError(f"unknown demand mode {mode!r}")
    socs = np.array([m.soc for m in modules])
    d = mean_load * (1.0 + beta * (socs - socs.mean()))
    d = np.maximum(d, 0.0)
    total = d.sum()
    if total > 0.0:
        d *= (mean_load * n) / total
    return d


def state_cost(j_star: Sequence[float], j_m: Sequence[float]) -> float:
    """Least-squares mismatch between demanded and candidate distribution."""
    a = np.asarray(j_star, dtype=float)
    b = np.asarray(j_m, dtype=float)
    if a.shape != b.shape:
        raise ValueError("distribution lengths differ")
    return float(np.sum((a - b) ** 2))


def select_state(
    candidates: Iterable[StringState],
    j_star: Sequence[float],
    lut: ObserverLUT,
    phase_signal: float,
    current_state: StringState | None = None,
) -> StringState:
    """Cost-minimal candidate; ties break on fewest toggles, then canonical
    order."""
    best = None
    best_key = None
    for cand in candidates:
        cost = state_cost(j_star, signed_estimate(cand, lut, phase_signal))
        toggles = (
            topology.toggle_count(current_state, cand)
            if current_state is not None
            else 0
        )
        key = (cost, toggles, cand)
        if best_key is None or key < best_key:
            best, best_key = cand, key
    if best is None:
        raise ValueError("no candidate states")
    return best


class DelayLine:
    """Pure transport delay for feedback vectors.

    Pre-history reads as the zero vector (system at rest), so a step fed in
    at t0 appears at the output exactly at t0 + delay.
    """

    def __init__(self, delay: float, width: int):
        if delay < 0:
            raise ValueError("delay must be nonnegative")
        self.delay = float(delay)
        self.width = int(width)
        self._buf: deque[tuple[float, np.ndarray]] = deque()

    def push(self, t: float, sample: Sequence[float]) -> None:
        vec = np.asarray(sample, dtype=float)
        if vec.shape != (self.width,):
            raise ValueError("sample width mismatch")
        if self._buf and t < self._buf[-1][0]:
            raise ValueError("timestamps must be nondecreasing")
        self._buf.append((t, vec))

    def query(self, t: float) -> np.ndarray:
        target = t - self.delay + 1e-9
        buf = self._buf
        while len(buf) >= 2 and buf[1][0] <= target:
            buf.popleft()
        if buf and buf[0][0] <= target:
            return buf[0][1]
        return np.zeros(self.width)


def delay_feedback(dl: DelayLine, sample: Sequence[float], t: float) -> np.ndarray:
    """Feed the line at time t and read the delayed output at the same t."""
    dl.push(t, sample)
    return dl.query(t)
