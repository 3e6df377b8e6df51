"""Baseline scheduler: slow list optimization with a fast table lookup.

A low-speed loop periodically ranks, per output level, all feasible states
by a charge-balance cost and stores the result; the fast loop then serves
the top-ranked state for whatever level the modulator demands. Between
list updates the selection is frozen, which is exactly what imprints the
characteristic load patterns at the update rate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .control import ObserverLUT
from .topology import StringState

_EPOCH_TOL = 1e-9


def reference_cost(
    state: StringState, socs: Sequence[float], lut: ObserverLUT
) -> float:
    """Charge-weighted load cost plus the ripple-reduction term.

    Loads are weighted with the charge-positive current convention, so
    during discharge the cost drops when higher-charged modules take more
    of the load; the quadratic term penalizes lopsided distributions.
    """
    shares = lut.share(state)
    socs_arr = np.asarray(socs, dtype=float)
    return float(shares @ (socs_arr.mean() - socs_arr) + shares @ shares)


def _rank_all_levels(
    socs: Sequence[float], lut: ObserverLUT
) -> dict[int, tuple[StringState, ...]]:
    socs_arr = np.asarray(socs, dtype=float)
    costs = lut.shares @ (socs_arr.mean() - socs_arr) + lut.share_sq
    ranked: dict[int, tuple[StringState, ...]] = {}
    for level in range(-lut.n_modules, lut.n_modules + 1):
        rows = lut.level_rows(level)
        # rows are already in canonical order, so a stable sort on cost
        # breaks ties canonically
        order = rows[np.argsort(costs[rows], kind="stable")]
        ranked[level] = tuple(lut.states[i] for i in order)
    return ranked


@dataclass(frozen=True)
class OptimizedStateList:
    """Per-level rankings frozen between epochs."""

    ranked: Mapping[int, tuple[StringState, ...]]
    epoch: float
    update_period: float


def build_state_list(
    socs: Sequence[float],
    lut: ObserverLUT,
    update_period: float,
    epoch: float = 0.0,
) -> OptimizedStateList:
    if update_period <= 0:
        raise ValueError("update period must be positive")
    return OptimizedStateList(_rank_all_levels(socs, lut), epoch, update_period)


def slow_loop_rebuild(
    socs: Sequence[float],
    t: float,
    state_list: OptimizedStateList,
    lut: ObserverLUT,
) -> OptimizedStateList:
    """Re-rank once the update period has elapsed, else return unchanged.

    The new epoch advances by whole periods so list changes stay aligned to
    multiples of the update period no matter how sparsely this is called.
    """
    elapsed = t - state_list.epoch
    period = state_list.update_period
    if elapsed < period - _EPOCH_TOL:
        return state_list
    steps = int((elapsed + _EPOCH_TOL) // period)
    return OptimizedStateList(
        _rank_all_levels(socs, lut),
        state_list.epoch + steps * period,
        period,
    )


def reference_select(state_list: OptimizedStateList, level: int) -> StringState:
    """Top-ranked state for a level; constant across one update period."""
    try:
        return state_list.ranked[level][0]
    except KeyError:
        raise ValueError(f"level {level} outside the ranked range") from None
