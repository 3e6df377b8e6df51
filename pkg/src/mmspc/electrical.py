"""Battery modules and current distribution inside a parallel group.

A parallel group of n modules is a resistive ladder: each module is a
voltage source V_B behind its path resistance R_B, neighbors are joined by
a high-side link R_SH and a low-side link R_SL, and the group current
enters at the first module's low rail and leaves at the last module's high
rail. Two independent formulations of that network live here:

* ``assemble_system``/``solve_distribution``: n-1 mesh equations between
  adjacent modules plus one current-sum row. Row j carries the cumulative
  link resistance of all members up to j, so the matrix is lower
  triangular below a two-band upper part.
* ``nodal_oracle``: plain node-voltage analysis of the same ladder.

They must agree to solver precision; the nodal formulation is the
verification oracle for the mesh assembly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .topology import GroupLayout

DEFAULT_OCV_MIN = 20.0
DEFAULT_OCV_MAX = 25.2


class SingularSystemError(ArithmeticError):
    """The group impedance network is degenerate."""


def ocv(soc: float, v_min: float = DEFAULT_OCV_MIN, v_max: float = DEFAULT_OCV_MAX) -> float:
    """Affine open-circuit-voltage map; hook point for tabulated curves."""
    return v_min + soc * (v_max - v_min)


@dataclass
class BatteryModule:
    """Electrical state of one battery module (terminal model)."""

    soc: float
    capacity_ah: float = 6.2
    r_b: float = 1.5e-3
    v_min: float = DEFAULT_OCV_MIN
    v_max: float = DEFAULT_OCV_MAX
    v_b: float = field(init=False)

    def __post_init__(self) -> None:
        if self.capacity_ah <= 0:
            raise ValueError("capacity must be positive")
        if self.r_b <= 0:
            raise ValueError("battery path resistance must be positive")
        self.soc = min(1.0, max(0.0, self.soc))
        self.v_b = ocv(self.soc, self.v_min, self.v_max)


def step_battery(module: BatteryModule, i_b: float, dt: float) -> BatteryModule:
    """Coulomb counting; positive current discharges. SoC clamps to [0, 1]."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    soc = module.soc - i_b * dt / (3600.0 * module.capacity_ah)
    return BatteryModule(
        soc=soc,
        capacity_ah=module.capacity_ah,
        r_b=module.r_b,
        v_min=module.v_min,
        v_max=module.v_max,
    )


@dataclass(frozen=True)
class InterconnectResistances:
    """Per-path link resistances between adjacent modules."""

    r_sh: float = 0.75e-3
    r_sl: float = 0.75e-3

    def __post_init__(self) -> None:
        if self.r_sh <= 0 or self.r_sl <= 0:
            raise ValueError("interconnect resistances must be positive")


def ideal_share(layout: GroupLayout) -> np.ndarray:
    """Per-module share of the group current: 1/k inside an inserted group
    of size k, zero for modules whose group is out of the stack."""
    n = sum(len(g.members) for g in layout.groups)
    shares = np.zeros(n)
    for g in layout.groups:
        if g.polarity != 0:
            shares[list(g.members)] = 1.0 / len(g.members)
    return shares


@dataclass(frozen=True)
class ImpedanceSystem:
    """Assembled mesh system for one parallel group."""

    matrix: np.ndarray
    rhs: np.ndarray


def assemble_system(
    group: Sequence[int],
    modules: Sequence[BatteryModule],
    res: InterconnectResistances,
    i_l: float,
) -> ImpedanceSystem:
    """Build the n x n mesh system for a group carrying current ``i_l``.

    ``group`` lists the member module indices in string order. Raises
    SingularSystemError if the assembled matrix is (numerically) singular;
    with positive resistances it never is.
    """
    n = len(group)
    if n < 1:
        raise ValueError("group must have at least one member")
    mods = [modules[i] for i in group]
    m = np.zeros((n, n))
    rhs = np.zeros(n)
    r_link = res.r_sh + res.r_sl
    for j in range(n - 1):
        m[j, : j + 1] = -r_link
        m[j, j] -= mods[j].r_b
        m[j, j + 1] = mods[j + 1].r_b
        rhs[j] = mods[j + 1].v_b - mods[j].v_b - res.r_sl * i_l
    m[n - 1, :] = 1.0
    rhs[n - 1] = i_l
    if n > 1 and np.linalg.cond(m) > 1e12:
        raise SingularSystemError("degenerate group impedance matrix")
    return ImpedanceSystem(m, rhs)


def solve_distribution(system: ImpedanceSystem) -> np.ndarray:
    """Exact member currents (amperes, discharge positive) of a group."""
    try:
        return np.linalg.solve(system.matrix, system.rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from exc


def nodal_oracle(
    group: Sequence[int],
    modules: Sequence[BatteryModule],
    res: InterconnectResistances,
    i_l: float,
) -> np.ndarray:
    """Node-voltage solution of the group ladder; independent of the mesh path.

    Nodes are each module's high and low rail; the first module's low rail
    is the reference. Batteries are stamped as Norton equivalents, the
    group current enters the first low rail and leaves the last high rail.
    """
    n = len(group)
    if n < 1:
        raise ValueError("group must have at least one member")
    mods = [modules[i] for i in group]
    dim = 2 * n - 1

    def p(k: int) -> int:
        return k

    def m_(k: int) -> int | None:
        return None if k == 0 else n + k - 1

    g = np.zeros((dim, dim))
    inj = np.zeros(dim)

    def stamp(a: int | None, b: int | None, conductance: float) -> None:
        if a is not None:
            g[a, a] += conductance
        if b is not None:
            g[b, b] += conductance
        if a is not None and b is not None:
            g[a, b] -= conductance
            g[b, a] -= conductance

    def inject(node: int | None, current: float) -> None:
        if node is not None:
            inj[node] += current

    for k in range(n):
        gb = 1.0 / mods[k].r_b
        stamp(p(k), m_(k), gb)
        inject(p(k), mods[k].v_b * gb)
        inject(m_(k), -mods[k].v_b * gb)
    for k in range(n - 1):
        stamp(p(k), p(k + 1), 1.0 / res.r_sh)
        stamp(m_(k), m_(k + 1), 1.0 / res.r_sl)
    inject(m_(0), i_l)  # reference node, dropped
    inject(p(n - 1), -i_l)

    try:
        v = np.linalg.solve(g, inj)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from exc

    def volt(node: int | None) -> float:
        return 0.0 if node is None else v[node]

    return np.array(
        [(mods[k].v_b - (volt(p(k)) - volt(m_(k)))) / mods[k].r_b for k in range(n)]
    )


class StringCurrentSolver:
    """Per-tick module currents for a whole string state.

    The mesh matrices depend only on the constant resistances and the group
    composition, so their inverses are cached per contiguous member run;
    each tick then costs one small matvec per inserted group. A group
    inserted with negative polarity sees the phase current reversed.
    """

    def __init__(self, modules: Sequence[BatteryModule], res: InterconnectResistances):
        self._modules = modules
        self._res = res
        self._inverses: dict[tuple[int, int], np.ndarray] = {}

    def _inverse(self, start: int, size: int) -> np.ndarray:
        key = (start, size)
        inv = self._inverses.get(key)
        if inv is None:
            group = range(start, start + size)
            system = assemble_system(group, self._modules, self._res, 0.0)
            inv = np.linalg.inv(system.matrix)
            self._inverses[key] = inv
        return inv

    def currents(self, layout: GroupLayout, i_l: float, v_b: np.ndarray) -> np.ndarray:
        out = np.zeros(len(v_b))
        for grp in layout.groups:
            if grp.polarity == 0:
                continue
            start = grp.members[0]
            size = len(grp.members)
            i_grp = grp.polarity * i_l
            if size == 1:
                out[start] = i_grp
                continue
            rhs = np.empty(size)
            seg = v_b[start : start + size]
            rhs[: size - 1] = seg[1:] - seg[:-1] - self._res.r_sl * i_grp
            rhs[size - 1] = i_grp
            out[start : start + size] = self._inverse(start, size) @ rhs
        return out
