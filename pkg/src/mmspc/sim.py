"""The master tick loop: modulator, scheduler, electrical model, batteries.

One scenario is one strictly sequential pass; identical configs produce
bit-identical traces. Per tick the sigma-delta modulator emits the level,
the active scheduler picks a string state realizing it, the per-group mesh
solve yields the module currents, and coulomb counting advances the
batteries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import reference as ref_control
from .config import ScenarioConfig
from .control import (
    ControllerState,
    DelayLine,
    ObserverLUT,
    controller_step,
    demand_generator,
)
from .electrical import (
    BatteryModule,
    StringCurrentSolver,
    step_battery,
)
from .modulation import phase_current, reference_level, sigma_delta_step
from .topology import Connection, StringState


class SchedulerDeadEndError(RuntimeError):
    """No state realizes the demanded level; unreachable under slew limiting."""


@dataclass(frozen=True)
class TickRecord:
    t: float
    level: int
    i_l: float
    i_b: tuple[float, ...]
    soc: tuple[float, ...]
    state: StringState


class Trace:
    """Sequence of tick records backed by dense arrays."""

    def __init__(
        self,
        f_rate: float,
        f_out: float,
        t: np.ndarray,
        level: np.ndarray,
        i_l: np.ndarray,
        i_b: np.ndarray,
        soc: np.ndarray,
        state_idx: np.ndarray,
        lut: ObserverLUT,
    ):
        self.f_rate = f_rate
        self.f_out = f_out
        self.t = t
        self.level = level
        self.i_l = i_l
        self.i_b = i_b
        self.soc = soc
        self.state_idx = state_idx
        self.lut = lut

    @property
    def n_modules(self) -> int:
        return self.lut.n_modules

    @cached_property
    def states(self) -> list[StringState]:
        table = self.lut.states
        return [table[i] for i in self.state_idx]

    def module_current(self, module_index: int) -> np.ndarray:
        return self.i_b[:, module_index]

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, k: int) -> TickRecord:
        if k < 0:
            k += len(self)
        if not 0 <= k < len(self):
            raise IndexError(k)
        return TickRecord(
            t=float(self.t[k]),
            level=int(self.level[k]),
            i_l=float(self.i_l[k]),
            i_b=tuple(self.i_b[k]),
            soc=tuple(self.soc[k]),
            state=self.lut.states[self.state_idx[k]],
        )


def initial_state(n: int) -> StringState:
    """All modules paralleled into one group, kept out of the stack."""
    return (Connection.PARALLEL,) * (n - 1) + (Connection.BYPASS,)


class _ProposedScheduler:
    """Controller, observer LUT and toggle-limited least-squares selection."""

    def __init__(self, cfg: ScenarioConfig, lut: ObserverLUT, modules):
        self.lut = lut
        self.modules = modules
        self.n = cfg.n_modules
        self.dt = cfg.dt
        self.toggle_limit = cfg.control.toggle_limit
        self.sensorless = cfg.method == "proposed-sensorless"
        ki = cfg.control.ki_sensorless if self.sensorless else cfg.control.ki
        self.cs = ControllerState.zeros(
            self.n,
            kp=cfg.control.kp,
            ki=ki,
            windup_limit=cfg.windup_limit(),
            sensorless=self.sensorless,
        )
        self.delay = DelayLine(cfg.control.feedback_delay_s, self.n)
        self.demand_mode = cfg.control.demand_mode
        self.beta = cfg.control.demand_beta
        self.lut_update = cfg.control.lut_update
        self.lut_threshold = cfg.control.lut_update_threshold_v
        self.res = cfg.interconnect
        self.i_ref = max(cfg.waveform.i_pk, 1.0)
        self._vb_snapshot = np.array([m.v_b for m in modules])
        self._ps = 0.0

    def select(
        self, k: int, t: float, state_row: int, level: int, delta: int,
        i_l: float, v_ref: float,
    ) -> int:
        feedback = self.delay.query(t)
        if self.sensorless:
            mean_load = abs(level) / self.n
            self._ps = float(np.sign(v_ref))
        else:
            mean_load = abs(level) * abs(i_l) / self.n
            self._ps = abs(i_l) * float(np.sign(level))
        demand = demand_generator(self.modules, mean_load, self.demand_mode, self.beta)
        j_star, self.cs = controller_step(demand, feedback, self.cs, self.dt)
        rows, toggles = self.lut.transitions(state_row, delta, self.toggle_limit)
        if rows.size == 0:
            raise SchedulerDeadEndError(
                f"no state at level {level} within {self.toggle_limit} toggles"
            )
        cost = ((j_star - self._ps * self.lut.signed_shares[rows]) ** 2).sum(axis=1)
        # primary cost, then fewest toggles, then canonical order (rows are
        # canonical ranks)
        best = np.lexsort((rows, toggles, cost))[0]
        return int(rows[best])

    def after(self, t: float, state_row: int) -> None:
        estimate = self.lut.signed_shares[state_row] * self._ps
        self.delay.push(t, estimate)
        if self.lut_update:
            v_b = np.array([m.v_b for m in self.modules])
            if np.max(np.abs(v_b - self._vb_snapshot)) > self.lut_threshold:
                self.lut.refresh_from_solve(self.modules, self.res, self.i_ref)
                self._vb_snapshot = v_b


class _ReferenceScheduler:
    """Slow per-level ranking, frozen between epochs; transitions are free.

    The rebuild at an epoch boundary ranks with the charge states current
    at that boundary. Together with the per-epoch overcorrection this is
    what pins the load patterns to the update period (the sampled-feedback
    limit cycle): using older snapshots would only stretch the same
    patterns over more epochs.
    """

    def __init__(self, cfg: ScenarioConfig, lut: ObserverLUT, modules):
        self.lut = lut
        self.modules = modules
        period = cfg.reference.update_period_s
        self.period_ticks = max(1, int(round(period * cfg.waveform.f_rate)))
        self.state_list = ref_control.build_state_list(
            np.array([m.soc for m in modules]), lut, period
        )
        self._top_rows = self._freeze_tops()

    def _freeze_tops(self) -> dict[int, int]:
        return {
            lv: self.lut.index[ref_control.reference_select(self.state_list, lv)]
            for lv in range(-self.lut.n_modules, self.lut.n_modules + 1)
        }

    def select(
        self, k: int, t: float, state_row: int, level: int, delta: int,
        i_l: float, v_ref: float,
    ) -> int:
        if k > 0 and k % self.period_ticks == 0:
            socs = np.array([m.soc for m in self.modules])
            self.state_list = ref_control.slow_loop_rebuild(
                socs, t, self.state_list, self.lut
            )
            self._top_rows = self._freeze_tops()
        return self._top_rows[level]

    def after(self, t: float, state_row: int) -> None:
        pass


def _make_scheduler(cfg: ScenarioConfig, lut: ObserverLUT, modules):
    if cfg.method in ("proposed", "proposed-sensorless"):
        return _ProposedScheduler(cfg, lut, modules)
    if cfg.method == "reference":
        return _ReferenceScheduler(cfg, lut, modules)
    raise ValueError(f"unknown method {cfg.method!r}")


def run_scenario(cfg: ScenarioConfig, lut: ObserverLUT | None = None) -> Trace:
    """Run one scenario and return its trace.

    The observer table can be passed in to share the (N-dependent) state
    enumeration across runs; it is reset to ideal shares first.
    """
    cfg.validate()
    n = cfg.n_modules
    wf = cfg.waveform
    if lut is None:
        lut = ObserverLUT(n)
    else:
        if lut.n_modules != n:
            raise ValueError("shared LUT was built for a different module count")
        lut.reset_ideal()

    socs0 = cfg.initial_soc_vector()
    r_b = cfg.module_resistances()
    modules = [
        BatteryModule(
            soc=float(socs0[i]),
            capacity_ah=cfg.battery.capacity_ah,
            r_b=float(r_b[i]),
            v_min=cfg.battery.ocv_min_v,
            v_max=cfg.battery.ocv_max_v,
        )
        for i in range(n)
    ]
    solver = StringCurrentSolver(modules, cfg.interconnect)
    scheduler = _make_scheduler(cfg, lut, modules)

    n_ticks = cfg.n_ticks
    dt = cfg.dt
    t_arr = np.arange(n_ticks) * dt
    level_arr = np.zeros(n_ticks, dtype=np.int32)
    il_arr = np.zeros(n_ticks)
    ib_arr = np.zeros((n_ticks, n))
    soc_arr = np.zeros((n_ticks, n))
    idx_arr = np.zeros(n_ticks, dtype=np.int32)

    state_row = lut.index[initial_state(n)]
    level = 0
    acc = 0.0
    v_b = np.array([m.v_b for m in modules])

    for k in range(n_ticks):
        t = k * dt
        v_ref = reference_level(t, wf, n)
        i_l = phase_current(t, wf)
        prev_level = level
        level, acc = sigma_delta_step(v_ref, level, acc, n)
        delta = level - prev_level
        state_row = scheduler.select(k, t, state_row, level, delta, i_l, v_ref)

        i_b = solver.currents(lut.layouts[state_row], i_l, v_b)

        level_arr[k] = level
        il_arr[k] = i_l
        ib_arr[k] = i_b
        idx_arr[k] = state_row
        for i in range(n):
            soc_arr[k, i] = modules[i].soc
            if i_b[i] != 0.0:
                modules[i] = step_battery(modules[i], float(i_b[i]), dt)
                v_b[i] = modules[i].v_b
        scheduler.after(t, state_row)

    return Trace(
        f_rate=wf.f_rate,
        f_out=wf.f_out,
        t=t_arr,
        level=level_arr,
        i_l=il_arr,
        i_b=ib_arr,
        soc=soc_arr,
        state_idx=idx_arr,
        lut=lut,
    )
