"""Discrete-event simulation of a priced, heterogeneous grid driven by the broker.

Time advances through a priority queue of events.  Each worker resource has
``node_count`` nodes running one job at a time; a job's wall time depends on
the node speed and a seeded, piecewise-constant load factor, while the CPU
time that gets billed does not.  The broker runs every ``tick_seconds`` and
only ever sees completions at tick boundaries.
"""

from __future__ import annotations

import heapq
import json
import math
from collections import Counter, deque
from dataclasses import asdict, dataclass, field, replace
from importlib import resources as _res
from pathlib import Path
from typing import Any

import numpy as np

from .gmd import CPU_SEC, DEFAULT_SERVICE, Registry, ServiceEntry
from .megdata import Recording
from .scheduler import COST_MIN, BrokerState, Completion, QoS, ResourceState, tick
from .wavelet import WaveletConfig
from .workload import WorkloadSpec, execute_meta_job, generate_meta_jobs

DISPATCHED = "DISPATCHED"
STARTED = "STARTED"
COMPLETED = "COMPLETED"
TICK = "TICK"
PRESTAGE_DONE = "PRESTAGE_DONE"
PRICE_UPDATE = "PRICE_UPDATE"

# same-instant ordering: finish work before the broker looks at it
_PRIORITY = {COMPLETED: 0, PRICE_UPDATE: 1, PRESTAGE_DONE: 2, TICK: 3, "ARRIVE": 4}


@dataclass(frozen=True)
class LoadProfile:
    seed: int = 0
    step_seconds: float = 300.0
    min_factor: float = 0.6
    max_factor: float = 1.0

    def __post_init__(self):
        if not 0 < self.min_factor <= self.max_factor <= 1:
            raise ValueError("need 0 < min_factor <= max_factor <= 1")
        if self.step_seconds <= 0:
            raise ValueError("step_seconds must be positive")


class LoadFactor:
    """Seeded random walk, constant over each ``step_seconds`` slot and clipped to its band."""

    def __init__(self, profile: LoadProfile, scenario_seed: int = 0):
        self.profile = profile
        self._rng = np.random.default_rng(np.random.SeedSequence([scenario_seed, profile.seed]))
        lo, hi = profile.min_factor, profile.max_factor
        self._values = [float(self._rng.uniform(lo, hi))]

    def slot(self, index: int) -> float:
        lo, hi = self.profile.min_factor, self.profile.max_factor
        while len(self._values) <= index:
            step = float(self._rng.normal(0.0, 0.25 * (hi - lo)))
            self._values.append(min(hi, max(lo, self._values[-1] + step)))
        return self._values[index]

    def __call__(self, t: float) -> float:
        return self.slot(int(t // self.profile.step_seconds))

    def finish_time(self, start: float, work: float, speed: float) -> float:
        """When ``work`` reference CPU-seconds started at ``start`` are done at ``speed``."""
        step = self.profile.step_seconds
        t, left = start, work
        idx = int(t // step)
        while True:
            rate = speed * self.slot(idx)
            # advance by index, not t // step, so float rounding cannot stall on a slot edge
            seg_end = max((idx + 1) * step, t)
            if rate * (seg_end - t) >= left:
                return t + left / rate
            left -= rate * (seg_end - t)
            t = seg_end
            idx += 1


@dataclass(frozen=True)
class ResourceSpec:
    host: str
    nominal_speed: float  # reference CPU-seconds per wall-second, per node
    node_count: int
    price: float
    pricing_model: str = CPU_SEC
    bandwidth_bytes_per_sec: float = 1e6
    worker: bool = True
    load_profile: LoadProfile = LoadProfile()
    provider_id: str = ""

    def __post_init__(self):
        if self.worker and self.nominal_speed <= 0:
            raise ValueError(f"{self.host}: worker needs a positive speed")
        if self.node_count < 1:
            raise ValueError(f"{self.host}: node_count must be >= 1")
        if self.bandwidth_bytes_per_sec <= 0:
            raise ValueError(f"{self.host}: bandwidth must be positive")

    def service_entry(self, service: str = DEFAULT_SERVICE) -> ServiceEntry:
        return ServiceEntry(self.provider_id or self.host, self.host, self.price,
                            self.pricing_model, service)


@dataclass(frozen=True)
class PriceChange:
    time: float
    host: str
    price: float


@dataclass(frozen=True)
class Scenario:
    resources: tuple[ResourceSpec, ...]
    workload: WorkloadSpec
    qos: QoS
    prestage: bool = True
    data_bytes: int = 24_000_000
    tick_seconds: float = 60.0
    seed: int = 42
    dispatch_latency: float = 1.0
    refresh_seconds: float | None = None  # directory refresh period; None = every tick
    price_changes: tuple[PriceChange, ...] = ()
    name: str = ""

    def __post_init__(self):
        if not any(r.worker for r in self.resources):
            raise ValueError("scenario needs at least one worker resource")
        if self.tick_seconds <= 0:
            raise ValueError("tick_seconds must be positive")

    @property
    def workers(self) -> list[ResourceSpec]:
        return [r for r in self.resources if r.worker]

    def with_strategy(self, strategy: str) -> "Scenario":
        return replace(self, qos=replace(self.qos, strategy=strategy))


@dataclass(frozen=True)
class LiveMode:
    """Run the real wavelet kernel for each completed job and archive its output."""

    recording: Recording
    cfg: WaveletConfig
    out_dir: Path


@dataclass
class Summary:
    strategy: str
    start: float
    completion: float | None
    spent: float
    jobs_done: int
    total_jobs: int
    deadline: float
    budget: float
    feasible_every_tick: bool = True

    @property
    def within_deadline(self) -> bool:
        return (self.completion is not None and self.jobs_done == self.total_jobs
                and self.completion <= self.deadline)

    @property
    def within_budget(self) -> bool:
        return self.spent <= self.budget + 1e-9

    @property
    def makespan(self) -> float | None:
        return None if self.completion is None else self.completion - self.start

    def row(self) -> str:
        done = "incomplete" if self.makespan is None else _num(self.makespan)
        return f"{self.strategy},{done},{_num(self.spent)}"


def _num(x: float) -> str:
    if float(x).is_integer():
        return str(int(x))
    return f"{x:.3f}".rstrip("0").rstrip(".")


@dataclass
class ExperimentLog:
    strategy: str
    hosts: list[str]
    total_jobs: int
    deadline: float
    budget: float
    events: list[dict[str, Any]] = field(default_factory=list)
    feasible_every_tick: bool = True

    def add(self, t: float, event: str, **payload) -> None:
        self.events.append({"t": t, "event": event, **payload})

    def of(self, kind: str) -> list[dict[str, Any]]:
        return [e for e in self.events if e["event"] == kind]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.events)

    @property
    def summary(self) -> Summary:
        return summarize(self)


class _Site:
    """Simulator-side view of one worker resource."""

    def __init__(self, spec: ResourceSpec, load: LoadFactor):
        self.spec = spec
        self.load = load
        self.free = spec.node_count
        self.waiting: deque[int] = deque()  # arrived, not yet started
        self.staged_at = 0.0


def run_simulation(scenario: Scenario, live: LiveMode | None = None,
                   horizon_factor: float = 10.0) -> ExperimentLog:
    """Simulate ``scenario`` end to end; identical inputs give an identical log."""
    jobs = generate_meta_jobs(scenario.workload)
    by_id = {j.id: j for j in jobs}
    qos = scenario.qos

    clock_box = [0.0]
    registry = Registry(clock=lambda: clock_box[0])
    for spec in scenario.resources:
        registry.publish(spec.service_entry())

    sites = {r.host: _Site(r, LoadFactor(r.load_profile, scenario.seed))
             for r in scenario.workers}
    broker = BrokerState.create(
        qos, jobs,
        [ResourceState(r.host, r.nominal_speed, r.node_count) for r in scenario.workers],
        tick_seconds=scenario.tick_seconds)
    log = ExperimentLog(qos.strategy, sorted(sites), len(jobs), qos.deadline, qos.budget)

    heap: list = []
    seq = 0

    def push(t: float, kind: str, data: Any = None) -> None:
        nonlocal seq
        heapq.heappush(heap, (t, _PRIORITY[kind], seq, kind, data))
        seq += 1

    for host, site in sites.items():
        if scenario.prestage:
            site.staged_at = scenario.data_bytes / site.spec.bandwidth_bytes_per_sec
            push(site.staged_at, PRESTAGE_DONE, host)
    for change in sorted(scenario.price_changes, key=lambda c: (c.time, c.host)):
        push(change.time, PRICE_UPDATE, change)
    push(0.0, TICK)

    refresh = scenario.refresh_seconds or scenario.tick_seconds
    snapshot, last_refresh = None, -math.inf
    running = completed = 0
    started_at: dict[int, float] = {}
    agreed: dict[int, tuple[float, str]] = {}  # price in force when the job was dispatched
    spent = 0.0
    horizon = horizon_factor * max(qos.deadline, scenario.tick_seconds)

    def try_start(site: _Site, now: float) -> None:
        nonlocal running
        if now < site.staged_at:
            return
        while site.free and site.waiting:
            job_id = site.waiting.popleft()
            site.free -= 1
            running += 1
            job = by_id[job_id]
            begin = now
            if not scenario.prestage:
                begin += scenario.data_bytes / site.spec.bandwidth_bytes_per_sec
            started_at[job_id] = now
            log.add(now, STARTED, job=job_id, host=site.spec.host)
            end = site.load.finish_time(begin, job.work_units, site.spec.nominal_speed)
            push(end, COMPLETED, (job_id, site.spec.host))

    while heap:
        now, _, _, kind, data = heapq.heappop(heap)
        clock_box[0] = now
        if kind == COMPLETED:
            job_id, host = data
            site = sites[host]
            job = by_id[job_id]
            cpu = job.work_units / site.spec.nominal_speed
            price, model = agreed.pop(job_id)
            cost = price * cpu if model == CPU_SEC else price
            running -= 1
            completed += 1
            spent += cost
            wall = now - started_at[job_id]
            payload = {}
            if live is not None:
                out = execute_meta_job(job, live.recording, live.cfg, Path(live.out_dir),
                                       window_len=scenario.workload.window_len)
                payload["archive"] = out.archive.name
            log.add(now, COMPLETED, job=job_id, host=host, cost=cost, cpu_seconds=cpu,
                    wall_seconds=wall, **payload)
            broker.notify(Completion(job_id, host, wall, cpu, now, cost))
            site.free += 1
            try_start(site, now)
        elif kind == "ARRIVE":
            job_id, host = data
            sites[host].waiting.append(job_id)
            try_start(sites[host], now)
        elif kind == PRESTAGE_DONE:
            log.add(now, PRESTAGE_DONE, host=data)
            try_start(sites[data], now)
        elif kind == PRICE_UPDATE:
            spec = next(r for r in scenario.resources if r.host == data.host)
            registry.publish(replace(spec.service_entry(), price=data.price))
            log.add(now, PRICE_UPDATE, host=data.host, price=data.price)
        elif kind == TICK:
            if completed == len(jobs):
                continue
            if now - last_refresh >= refresh - 1e-9:
                snapshot, last_refresh = registry.refresh(snapshot), now
            assigned = tick(broker, snapshot, clock=now)
            if qos.strategy == COST_MIN and broker.at_risk:
                log.feasible_every_tick = False
            for job_id, host in assigned:
                entry = broker.resource(host).entry
                agreed[job_id] = (entry.price, entry.pricing_model)
                log.add(now, DISPATCHED, job=job_id, host=host, estimate=broker.estimates[job_id])
                push(now + scenario.dispatch_latency, "ARRIVE", (job_id, host))
            pending = len(jobs) - completed - running
            log.add(now, TICK, pending=pending, running=running, completed=completed,
                    committed=broker.committed, feasible=not broker.at_risk)
            outstanding = len(jobs) - completed - len(broker.pending)
            future = any(k != TICK for _, _, _, k, _ in heap)
            if (outstanding or future) and now + scenario.tick_seconds <= horizon:
                push(now + scenario.tick_seconds, TICK)
    return log


# -- reporting views ---------------------------------------------------------

def summarize(log: ExperimentLog) -> Summary:
    done = log.of(COMPLETED)
    return Summary(
        strategy=log.strategy,
        start=0.0,
        completion=done[-1]["t"] if done else None,
        spent=sum(e["cost"] for e in done),
        jobs_done=len(done),
        total_jobs=log.total_jobs,
        deadline=log.deadline,
        budget=log.budget,
        feasible_every_tick=log.feasible_every_tick,
    )


def cumulative_series(log: ExperimentLog) -> list[tuple[float, int, float]]:
    rows, spent = [], 0.0
    for i, e in enumerate(log.of(COMPLETED), start=1):
        spent += e["cost"]
        rows.append((e["t"], i, spent))
    return rows


def per_host_series(log: ExperimentLog) -> dict[str, list[tuple[float, int]]]:
    out: dict[str, list[tuple[float, int]]] = {h: [] for h in log.hosts}
    for e in log.of(COMPLETED):
        series = out.setdefault(e["host"], [])
        series.append((e["t"], len(series) + 1))
    return out


def per_resource_shares(log: ExperimentLog) -> dict[str, int]:
    counts = Counter(e["host"] for e in log.of(COMPLETED))
    return {h: counts.get(h, 0) for h in sorted(set(log.hosts) | set(counts))}


def dispatch_trace(log: ExperimentLog) -> list[tuple[float, int, str]]:
    return [(e["t"], e["job"], e["host"]) for e in log.of(DISPATCHED)]


# -- scenario files ----------------------------------------------------------

def scenario_from_dict(d: dict) -> Scenario:
    resources = []
    for r in d["resources"]:
        r = dict(r)
        lp = r.pop("load_profile", None)
        resources.append(ResourceSpec(load_profile=LoadProfile(**lp) if lp else LoadProfile(), **r))
    return Scenario(
        resources=tuple(resources),
        workload=WorkloadSpec(**d["workload"]),
        qos=QoS(**d["qos"]),
        prestage=d.get("prestage", True),
        data_bytes=d.get("data_bytes", 24_000_000),
        tick_seconds=d.get("tick_seconds", 60.0),
        seed=d.get("seed", 42),
        dispatch_latency=d.get("dispatch_latency", 1.0),
        refresh_seconds=d.get("refresh_seconds"),
        price_changes=tuple(PriceChange(**c) for c in d.get("price_changes", ())),
        name=d.get("name", ""),
    )


def scenario_to_dict(s: Scenario) -> dict:
    d = asdict(s)
    d["resources"] = [asdict(r) for r in s.resources]
    d["price_changes"] = [asdict(c) for c in s.price_changes]
    return d


def load_scenario(path) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text()))


def bundled_scenario(**overrides) -> Scenario:
    """The bundled five-resource, 100-job replication scenario."""
    text = _res.files("neurogrid").joinpath("scenarios/testbed.json").read_text()
    scenario = scenario_from_dict(json.loads(text))
    return replace(scenario, **overrides) if overrides else scenario
