"""Event-driven replay of a charging-session log.

Arrivals and departures drive the simulation: at every event the fleet
state is brought up to the event time by advancing whole slots of the
active schedule (plus the partial remainder when the event falls inside a
slot), the event is applied, and a fresh schedule anchored at the event
time is generated with the active policy.  Realized charging is accounted
per slot and vehicle in a ledger, from which the performance metrics are
accumulated.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fade import FadeModelParams
from .problem import ChargingTask, ProblemInstance
from .scheduler import (
    Admission,
    FleetState,
    Policy,
    StationLimits,
    VehicleState,
    admit_task,
    apply_slot,
    baseline_schedule,
    proposed_schedule,
)
from .solver import SolverConfig

__all__ = [
    "Event",
    "SimConfig",
    "MetricsReport",
    "DepartureRecord",
    "RunResult",
    "run",
    "peak_power_period",
    "charging_time",
    "value_loss",
]

ACTIVE_CURRENT_EPS = 1e-3  # A; below this a slot does not count as charging


@dataclass(frozen=True)
class Event:
    """Arrival or departure at the station, in hours on the run clock."""

    time_h: float
    kind: str                        # "arrival" | "departure"
    task: ChargingTask | None = None  # arrivals
    vehicle_id: str | None = None     # departures

    def __post_init__(self):
        if self.kind == "arrival" and self.task is None:
            raise ValueError("arrival event needs a task")
        if self.kind == "departure" and not self.vehicle_id:
            raise ValueError("departure event needs a vehicle id")
        if self.kind not in ("arrival", "departure"):
            raise ValueError(f"unknown event kind {self.kind!r}")


@dataclass(frozen=True)
class SimConfig:
    """Station, pack and reporting parameters of one simulated run."""

    dt: float = 0.5                  # slot length, h
    voltage: float = 410.0           # V
    c_bat: float = 210.0             # Ah
    i_max: float = 80.0              # A per vehicle
    ic_max: float = 400.0            # A station
    soc_xtra_ah: float = 21.0        # extra-charge headroom, Ah
    battery_cost_usd: float = 11610.0
    peak_threshold: float = 0.75     # fraction of maximum power
    default_soc_start: float = 0.4
    default_soc_dep: float = 0.8
    policy: Policy = field(default_factory=lambda: Policy("proposed"))
    solver: SolverConfig = field(default_factory=SolverConfig)
    fade_params: FadeModelParams = field(default_factory=FadeModelParams)

    def __post_init__(self):
        if not 0.0 < self.peak_threshold <= 1.0:
            raise ValueError("peak_threshold must be in (0, 1]")
        if self.battery_cost_usd <= 0:
            raise ValueError("battery_cost_usd must be > 0")

    @property
    def limits(self) -> StationLimits:
        return StationLimits(
            dt=self.dt,
            i_max=self.i_max,
            ic_max=self.ic_max,
            voltage=self.voltage,
            c_bat=self.c_bat,
            soc_xtra_ah=self.soc_xtra_ah,
            fade_params=self.fade_params,
        )


@dataclass
class MetricsReport:
    """Aggregate performance metrics of one run."""

    total_charging_cost: float = 0.0       # $
    total_fade_exact: float = 0.0          # Ah
    total_fade_approx: float = 0.0         # Ah
    total_value_loss: float = 0.0          # $
    total_peak_power_period: float = 0.0   # h, realized peak slots across vehicles
    total_charging_time: float = 0.0       # h, realized active vehicle-slots
    max_opt_time_ms: float = 0.0
    n_rejected: int = 0
    per_event_peak_period: list = field(default_factory=list)  # h per scheduled plan

    def as_dict(self, include_timing: bool = False) -> dict:
        out = {
            "total_charging_cost_usd": self.total_charging_cost,
            "total_fade_exact_ah": self.total_fade_exact,
            "total_fade_approx_ah": self.total_fade_approx,
            "total_value_loss_usd": self.total_value_loss,
            "total_peak_power_period_h": self.total_peak_power_period,
            "total_charging_time_h": self.total_charging_time,
            "n_rejected": self.n_rejected,
            "per_event_peak_period_h": list(self.per_event_peak_period),
        }
        if include_timing:
            out["max_opt_time_ms"] = self.max_opt_time_ms
        return out


@dataclass(frozen=True)
class DepartureRecord:
    vehicle_id: str
    soc_at_departure: float
    soc_dep_required: float
    soc_start: float


@dataclass
class RunResult:
    metrics: MetricsReport
    ledger: list                      # LedgerEntry, time-ordered
    departures: list                  # DepartureRecord
    rejected: list                    # (ChargingTask, reason)


def peak_power_period(alloc: np.ndarray, config: SimConfig) -> float:
    """Hours of slots allocated strictly more than the peak-power threshold.

    Summed across vehicles; a slot at exactly the threshold does not count.
    """
    if alloc.size == 0:
        return 0.0
    peaking = alloc * config.voltage > config.peak_threshold * config.i_max * config.voltage
    return float(np.sum(peaking)) * config.dt


def charging_time(alloc: np.ndarray, config: SimConfig) -> float:
    """Hours of slots with nonzero current, summed across vehicles."""
    if alloc.size == 0:
        return 0.0
    return float(np.sum(alloc > ACTIVE_CURRENT_EPS)) * config.dt


def value_loss(fade_ah: float, config: SimConfig) -> float:
    """Battery pack cost prorated by the fraction of nominal capacity faded."""
    if fade_ah < 0:
        raise ValueError("fade must be >= 0")
    return config.battery_cost_usd * fade_ah / config.c_bat


@dataclass
class _ActiveSchedule:
    inst: ProblemInstance
    alloc: np.ndarray
    consumed: int = 0  # whole slots already applied


def _advance(
    state: FleetState,
    schedule: _ActiveSchedule | None,
    until: float,
    result: RunResult,
    config: SimConfig,
):
    """Advance the fleet from state.now to ``until`` along the active schedule."""
    if until <= state.now + 1e-12:
        state.now = max(state.now, until)
        return
    if schedule is None or schedule.inst.n_vehicles == 0:
        state.now = until
        return
    inst, alloc = schedule.inst, schedule.alloc
    while state.now < until - 1e-12:
        i = schedule.consumed
        if i >= inst.horizon:
            state.now = until
            return
        slot_end = inst.grid.slot_start(i) + inst.grid.dt
        window = min(slot_end, until) - state.now
        duration = None if slot_end <= until + 1e-12 else window
        ledger = apply_slot(state, alloc, i, inst, duration=duration)
        peak_amps = config.peak_threshold * config.i_max
        for e in ledger.entries:
            result.ledger.append(e)
            result.metrics.total_charging_cost += e.cost_usd
            result.metrics.total_fade_exact += e.fade_exact_ah
            result.metrics.total_fade_approx += e.fade_approx_ah
            if e.current_a > ACTIVE_CURRENT_EPS:
                result.metrics.total_charging_time += e.duration_h
            if e.current_a > peak_amps:
                result.metrics.total_peak_power_period += e.duration_h
        if duration is None:
            schedule.consumed += 1
        else:
            return  # partial slot: the event re-anchors the grid


def _reschedule(
    state: FleetState,
    config: SimConfig,
    prices_fn: Callable[[float], float],
    result: RunResult,
) -> _ActiveSchedule:
    policy = config.policy
    if policy.kind == "baseline":
        alloc, inst = baseline_schedule(state, config.limits, prices_fn)
        opt_ms = 0.0
    else:
        t0 = _time.perf_counter()
        alloc, rep, inst = proposed_schedule(
            state, policy.weights, config.limits, prices_fn, config.solver
        )
        opt_ms = (_time.perf_counter() - t0) * 1000.0
    result.metrics.max_opt_time_ms = max(result.metrics.max_opt_time_ms, opt_ms)
    result.metrics.per_event_peak_period.append(peak_power_period(alloc, config))
    return _ActiveSchedule(inst=inst, alloc=alloc)


def run(
    events: list,
    prices_fn: Callable[[float], float],
    config: SimConfig,
) -> RunResult:
    """Replay an event list under one policy and accumulate metrics.

    Events are processed in time order with arrivals before departures at
    equal timestamps.  Deterministic: repeated runs produce identical
    results apart from measured optimization wall time.
    """
    order = {"arrival": 0, "departure": 1}
    events = sorted(
        events,
        key=lambda e: (e.time_h, order[e.kind],
                       e.task.vehicle_id if e.task else e.vehicle_id),
    )
    result = RunResult(
        metrics=MetricsReport(), ledger=[], departures=[], rejected=[]
    )
    if not events:
        return result

    state = FleetState(now=events[0].time_h, dt=config.dt)
    schedule: _ActiveSchedule | None = None
    for ev in events:
        _advance(state, schedule, ev.time_h, result, config)
        state.now = ev.time_h
        if ev.kind == "arrival":
            task = ev.task
            if task.vehicle_id in state.vehicles:
                raise ValueError(f"duplicate arrival for {task.vehicle_id}")
            if config.policy.kind == "proposed":
                admission: Admission = admit_task(task, state, config.limits)
                if not admission.accepted:
                    result.metrics.n_rejected += 1
                    result.rejected.append((task, admission.reason))
                    schedule = _reschedule(state, config, prices_fn, result)
                    continue
            state.vehicles[task.vehicle_id] = VehicleState(
                task=task, soc_cur=task.soc_start
            )
        else:
            vs = state.vehicles.pop(ev.vehicle_id, None)
            if vs is None:
                rejected_ids = {t.vehicle_id for t, _ in result.rejected}
                if ev.vehicle_id in rejected_ids:
                    continue  # rejected tasks never plugged in
                raise ValueError(f"unmatched-departure: {ev.vehicle_id}")
            result.departures.append(
                DepartureRecord(
                    vehicle_id=ev.vehicle_id,
                    soc_at_departure=vs.soc_cur,
                    soc_dep_required=vs.task.soc_dep,
                    soc_start=vs.task.soc_start,
                )
            )
        schedule = _reschedule(state, config, prices_fn, result)

    # Tail: drain any vehicles whose departure events were missing.
    while state.vehicles:
        last_dep = max(vs.task.t_dep for vs in state.vehicles.values())
        if last_dep <= state.now + 1e-12:
            break
        _advance(state, schedule, last_dep, result, config)
        state.now = last_dep
        break

    result.metrics.total_value_loss = value_loss(
        result.metrics.total_fade_exact, config
    )
    return result
