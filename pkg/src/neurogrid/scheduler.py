"""Deadline- and budget-constrained broker with three economy strategies.

Every tick the broker folds in completion notices, refreshes prices from a
directory snapshot, recomputes per-resource completion-rate forecasts and
asks the active strategy for a plan over all pending jobs.  Only the head of
each resource's plan (enough to keep it busy until the next tick) is
dispatched; the rest returns to the pending pool and is planned again with
fresher forecasts.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import groupby
from typing import Sequence

from .gmd import AO, CPU_SEC, RegistrySnapshot, ServiceEntry
from .workload import MetaJob

log = logging.getLogger(__name__)

TIME_MIN = "time"
COST_MIN = "cost"
COST_TIME = "cost-time"
STRATEGIES = (TIME_MIN, COST_MIN, COST_TIME)
_EPS = 1e-9


@dataclass(frozen=True)
class QoS:
    deadline: float  # seconds from experiment start
    budget: float  # G$
    strategy: str = TIME_MIN

    def __post_init__(self):
        if self.deadline <= 0:
            raise ValueError("deadline must be positive")
        if self.budget < 0:
            raise ValueError("budget must be non-negative")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; pick one of {STRATEGIES}")


@dataclass(frozen=True)
class Completion:
    job_id: int
    host: str
    wall_seconds: float
    cpu_seconds: float
    completed_at: float
    cost: float


@dataclass
class ResourceState:
    host: str
    nominal_speed: float = 1.0
    node_count: int = 1
    entry: ServiceEntry | None = None
    queue: list[int] = field(default_factory=list)
    history: list[Completion] = field(default_factory=list)
    # wall time per completed job divided by node_count, i.e. whole-resource seconds
    busy_seconds: float = 0.0
    probed: bool = False

    @property
    def bootstrap(self) -> bool:
        return not self.history

    @property
    def rate(self) -> float:
        return forecast_rate(self)

    def record(self, done: Completion) -> None:
        if self.history and done.completed_at < self.history[-1].completed_at:
            raise ValueError("completion history must be in time order")
        self.history.append(done)
        self.busy_seconds += done.wall_seconds / self.node_count


def forecast_rate(resource: ResourceState) -> float:
    """Cumulative mean completion rate in jobs per second; 0 before the first completion."""
    if not resource.history or resource.busy_seconds <= 0:
        return 0.0
    return len(resource.history) / resource.busy_seconds


def job_cost_estimate(job: MetaJob, resource: ResourceState) -> float:
    entry = resource.entry
    if entry is None:
        raise ValueError(f"{resource.host} has no published price")
    if entry.pricing_model == CPU_SEC:
        return entry.price * job.work_units / resource.nominal_speed
    if entry.pricing_model == AO:
        return entry.price
    raise ValueError(f"unknown pricing model {entry.pricing_model!r}")


@dataclass
class BrokerState:
    qos: QoS
    jobs: dict[int, MetaJob]
    resources: list[ResourceState]
    pending: list[int] = field(default_factory=list)
    spent: float = 0.0
    estimates: dict[int, float] = field(default_factory=dict)  # outstanding job -> estimate
    clock: float = 0.0
    tick_seconds: float = 60.0
    at_risk: bool = False
    inbox: list[Completion] = field(default_factory=list)

    @classmethod
    def create(cls, qos: QoS, jobs: Sequence[MetaJob], resources: Sequence[ResourceState],
               tick_seconds: float = 60.0) -> "BrokerState":
        return cls(qos=qos, jobs={j.id: j for j in jobs}, resources=list(resources),
                   pending=[j.id for j in jobs], tick_seconds=tick_seconds)

    @property
    def committed(self) -> float:
        return self.spent + sum(self.estimates.values())

    def resource(self, host: str) -> ResourceState:
        for r in self.resources:
            if r.host == host:
                return r
        raise KeyError(host)

    def notify(self, done: Completion) -> None:
        """Queue a completion; it is folded in at the next tick."""
        self.inbox.append(done)


# -- planning helpers --------------------------------------------------------

class _Plan:
    """Scratch bookkeeping while a strategy builds its assignment list."""

    def __init__(self, state: BrokerState):
        self.state = state
        self.committed = state.committed
        self.load = {r.host: len(r.queue) for r in state.resources}
        self.out: list[tuple[int, str]] = []

    def affordable(self, job_id: int, r: ResourceState) -> bool:
        cost = job_cost_estimate(self.state.jobs[job_id], r)
        return self.committed + cost <= self.state.qos.budget + _EPS

    def assign(self, job_id: int, r: ResourceState) -> None:
        self.committed += job_cost_estimate(self.state.jobs[job_id], r)
        self.load[r.host] += 1
        self.out.append((job_id, r.host))


def _priced(state: BrokerState) -> list[ResourceState]:
    return [r for r in state.resources if r.entry is not None]


def _active(state: BrokerState) -> list[ResourceState]:
    return [r for r in _priced(state) if forecast_rate(r) > 0]


def _bootstrap(state: BrokerState, plan: _Plan, jobs: list[int]) -> list[int]:
    """Send one probe to every resource with no history that has not had one yet."""
    for r in sorted(_priced(state), key=lambda r: r.host):
        if not jobs:
            break
        if r.probed or r.history:
            continue
        if plan.affordable(jobs[0], r):
            plan.assign(jobs.pop(0), r)
    return jobs


def _greedy_time(plan: _Plan, jobs: list[int], candidates: list[ResourceState]) -> list[int]:
    """Give each job to the resource with the earliest projected finish; return leftovers."""
    left = []
    for job_id in jobs:
        best, best_key = None, None
        for r in candidates:
            if not plan.affordable(job_id, r):
                continue
            rate = forecast_rate(r)
            key = ((plan.load[r.host] + 1) / rate, -rate, r.host)
            if best_key is None or key < best_key:
                best, best_key = r, key
        if best is None:
            left.append(job_id)
        else:
            plan.assign(job_id, best)
    return left


def _capacity(rate: float, remaining: float, load: int) -> int:
    return max(0, math.floor(rate * remaining + _EPS) - load)


def allocate_time_min(state: BrokerState) -> list[tuple[int, str]]:
    plan = _Plan(state)
    jobs = _bootstrap(state, plan, list(state.pending))
    _greedy_time(plan, jobs, _active(state))
    return plan.out


def allocate_cost_min(state: BrokerState) -> list[tuple[int, str]]:
    plan = _Plan(state)
    jobs = _bootstrap(state, plan, list(state.pending))
    active = _active(state)
    if not jobs or not active:
        return plan.out
    sample = state.jobs[jobs[0]]
    order = sorted(active, key=lambda r: (job_cost_estimate(sample, r), -forecast_rate(r), r.host))
    remaining_time = max(0.0, state.qos.deadline - state.clock)
    total_cap, wanted = 0, len(jobs)
    for r in order:
        cap = _capacity(forecast_rate(r), remaining_time, plan.load[r.host])
        total_cap += cap
        placed, rest = [], []
        for job_id in jobs:
            if len(placed) < cap and plan.affordable(job_id, r):
                plan.assign(job_id, r)
                placed.append(job_id)
            else:
                rest.append(job_id)
        jobs = rest
    if total_cap < wanted:
        state.at_risk = True
    if jobs:
        # best effort for whatever the deadline capacity could not absorb
        _greedy_time(plan, jobs, order)
    return plan.out


def allocate_cost_time(state: BrokerState) -> list[tuple[int, str]]:
    plan = _Plan(state)
    jobs = _bootstrap(state, plan, list(state.pending))
    active = _active(state)
    if not jobs or not active:
        return plan.out
    remaining_time = max(0.0, state.qos.deadline - state.clock)
    groups = [list(g) for _, g in groupby(sorted(active, key=lambda r: (r.entry.price, r.host)),
                                          key=lambda r: r.entry.price)]
    for i, group in enumerate(groups):
        if not jobs:
            break
        if i == len(groups) - 1:
            take, spill = jobs, []
        else:
            cap = _capacity(sum(forecast_rate(r) for r in group), remaining_time,
                            sum(plan.load[r.host] for r in group))
            take, spill = jobs[:cap], jobs[cap:]
        jobs = _greedy_time(plan, take, group) + spill
    return plan.out


ALLOCATORS = {
    TIME_MIN: allocate_time_min,
    COST_MIN: allocate_cost_min,
    COST_TIME: allocate_cost_time,
}


def _absorb(state: BrokerState) -> None:
    for done in sorted(state.inbox, key=lambda d: (d.completed_at, d.job_id)):
        r = state.resource(done.host)
        r.queue.remove(done.job_id)
        r.record(done)
        state.estimates.pop(done.job_id, None)
        state.spent += done.cost
    state.inbox.clear()


def _refresh_prices(state: BrokerState, snapshot: RegistrySnapshot | None, service: str) -> None:
    if snapshot is None:
        return
    for r in state.resources:
        r.entry = snapshot.price_of(r.host, service)


def dispatch_limit(r: ResourceState, horizon: float) -> int:
    """How many outstanding jobs a resource may hold: enough for one horizon of work."""
    return max(r.node_count, math.ceil(forecast_rate(r) * horizon - _EPS))


def tick(state: BrokerState, snapshot: RegistrySnapshot | None, clock: float | None = None,
         service: str = "meg-analysis") -> list[tuple[int, str]]:
    """Advance the broker one scheduling round, mutating ``state``; returns dispatched (job, host)."""
    if clock is not None:
        state.clock = clock
    _absorb(state)
    _refresh_prices(state, snapshot, service)
    state.at_risk = False
    if not state.pending:
        return []
    planned = ALLOCATORS[state.qos.strategy](state)

    dispatched = []
    for job_id, host in planned:
        r = state.resource(host)
        if r.probed and len(r.queue) >= dispatch_limit(r, state.tick_seconds):
            continue
        est = job_cost_estimate(state.jobs[job_id], r)
        r.queue.append(job_id)
        r.probed = True
        state.estimates[job_id] = est
        dispatched.append((job_id, host))
    taken = {j for j, _ in dispatched}
    state.pending = [j for j in state.pending if j not in taken]
    if state.at_risk:
        log.warning("t=%.0fs: forecast capacity cannot meet the deadline, best effort "
                    "(%d jobs still pending)", state.clock, len(state.pending))
    assert state.committed <= state.qos.budget + 1e-6
    return dispatched
