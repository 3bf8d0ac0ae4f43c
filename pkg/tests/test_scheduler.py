import copy

import pytest
from hypothesis import given, settings, strategies as st

from neurogrid.gmd import AO, CPU_SEC, Registry, ServiceEntry
from neurogrid.scheduler import (COST_MIN, COST_TIME, TIME_MIN, BrokerState, Completion, QoS,
                                 ResourceState, allocate_cost_min, allocate_cost_time,
                                 allocate_time_min, forecast_rate, job_cost_estimate, tick)
from neurogrid.workload import MetaJob
from oracles import greedy_projected_finish


def _job(i, work=1.0):
    return MetaJob(i, i, 1, 2, work, 0)


def _res(host, rate=None, price=1.0, nodes=1, speed=1.0, model=CPU_SEC):
    r = ResourceState(host, speed, nodes, ServiceEntry("p", host, price, model))
    if rate:
        r.record(Completion(0, host, nodes / rate, nodes / rate, 0.0, 0.0))
        r.probed = True
    return r


def _state(resources, n_jobs, budget=1e9, deadline=1000.0, strategy=TIME_MIN, work=1.0):
    jobs = [_job(i, work) for i in range(1, n_jobs + 1)]
    return BrokerState.create(QoS(deadline, budget, strategy), jobs, resources)


def _hosts(plan):
    return [h for _, h in plan]


# -- forecasts and cost ------------------------------------------------------

def test_forecast_cumulative_mean():
    r = ResourceState("h")
    for i in range(4):
        r.record(Completion(i, "h", 5.0, 5.0, float(i), 0.0))
    assert forecast_rate(r) == pytest.approx(0.2)


def test_forecast_empty_is_bootstrap():
    r = ResourceState("h")
    assert forecast_rate(r) == 0 and r.bootstrap


def test_forecast_smooths_spike():
    # three 10 s busy intervals completing 1, 5, 1 jobs: per-interval rates 0.1, 0.5, 0.1
    r = ResourceState("h")
    walls = [10.0] + [2.0] * 5 + [10.0]
    for i, w in enumerate(walls):
        r.record(Completion(i, "h", w, w, float(i), 0.0))
    assert forecast_rate(r) == pytest.approx((0.1 + 0.5 + 0.1) / 3)


def test_forecast_divides_wall_by_nodes():
    r = ResourceState("h", node_count=4)
    r.record(Completion(1, "h", 8.0, 8.0, 0.0, 0.0))
    assert forecast_rate(r) == pytest.approx(0.5)


def test_history_must_be_time_ordered():
    r = ResourceState("h")
    r.record(Completion(1, "h", 1.0, 1.0, 10.0, 0.0))
    with pytest.raises(ValueError):
        r.record(Completion(2, "h", 1.0, 1.0, 5.0, 0.0))


def test_cost_estimates():
    assert job_cost_estimate(_job(1, 10.0), _res("a", price=3, speed=2.0)) == 15
    assert job_cost_estimate(_job(1, 1e6), _res("a", price=5, model=AO)) == 5
    assert job_cost_estimate(_job(1, 10.0), _res("a", price=0)) == 0
    with pytest.raises(ValueError):
        job_cost_estimate(_job(1), ResourceState("bare"))


def test_qos_validation():
    with pytest.raises(ValueError):
        QoS(0, 10)
    with pytest.raises(ValueError):
        QoS(10, -1)
    with pytest.raises(ValueError):
        QoS(10, 10, "fastest")


# -- time minimisation -------------------------------------------------------

def test_time_min_projected_finish():
    s = _state([_res("r1", 1.0), _res("r2", 0.5)], 3)
    assert _hosts(allocate_time_min(s)) == ["r1", "r1", "r2"]
    assert greedy_projected_finish([1.0, 0.5], 3) == [0, 0, 1]


@given(st.lists(st.floats(0.05, 5.0), min_size=1, max_size=5), st.integers(0, 30),
       st.lists(st.integers(0, 5), min_size=5, max_size=5))
def test_time_min_matches_hand_rule(rates, n, loads):
    resources = [_res(f"r{i}", rate) for i, rate in enumerate(rates)]
    s = _state(resources, n)
    for r, load in zip(resources, loads):
        r.queue = [1000 + k for k in range(load)]
    got = _hosts(allocate_time_min(s))
    want = [f"r{i}" for i in greedy_projected_finish(rates, n, loads[:len(rates)])]
    assert got == want


def test_budget_forces_cheap_resource():
    s = _state([_res("fast", 10.0, price=10), _res("slow", 0.1, price=1)], 3, budget=5)
    assert _hosts(allocate_time_min(s)) == ["slow"] * 3


def test_unaffordable_jobs_stay_pending():
    s = _state([_res("a", 1.0, price=1)], 5, budget=2)
    assert len(allocate_time_min(s)) == 2


def test_bootstrap_probe_each_fresh_resource():
    s = _state([_res("known", 1.0), _res("fresh-b"), _res("fresh-a")], 6)
    plan = allocate_time_min(s)
    assert plan[:2] == [(1, "fresh-a"), (2, "fresh-b")]
    assert set(_hosts(plan[2:])) == {"known"}


# -- cost minimisation -------------------------------------------------------

def test_cost_min_fills_cheapest_then_spills():
    s = _state([_res("dear", 1.0, price=3), _res("cheap", 0.1, price=1)], 15,
               deadline=100, strategy=COST_MIN)
    hosts = _hosts(allocate_cost_min(s))
    assert hosts.count("cheap") == 10 and hosts.count("dear") == 5
    assert not s.at_risk


def test_cost_min_generous_deadline_all_to_cheapest():
    s = _state([_res("dear", 5.0, price=3), _res("cheap", 0.5, price=1)], 40,
               deadline=10_000, strategy=COST_MIN)
    assert set(_hosts(allocate_cost_min(s))) == {"cheap"}


def test_cost_min_equal_price_prefers_faster():
    s = _state([_res("a-slow", 0.2, price=1), _res("b-fast", 1.0, price=1)], 1,
               strategy=COST_MIN)
    assert _hosts(allocate_cost_min(s)) == ["b-fast"]


def test_cost_min_flags_at_risk_and_still_allocates():
    s = _state([_res("a", 0.01, price=1), _res("b", 0.01, price=2)], 10, deadline=100,
               strategy=COST_MIN)
    plan = allocate_cost_min(s)
    assert s.at_risk and len(plan) == 10


def test_cost_min_argmin_stable_under_price_scaling():
    def plan(c):
        rs = [_res("a", 0.3, price=2 * c), _res("b", 0.2, price=1 * c), _res("c", 1.0, price=3 * c)]
        return allocate_cost_min(_state(rs, 400, budget=600 * c, deadline=300, strategy=COST_MIN))
    base = plan(1)
    for c in (0.5, 3.0, 17.0):
        assert plan(c) == base


# -- cost-time ---------------------------------------------------------------

def _random_resources(data):
    n = data.draw(st.integers(1, 4))
    out = []
    for i in range(n):
        rate = data.draw(st.one_of(st.none(), st.floats(0.01, 3.0)))
        out.append(_res(f"h{i}", rate, price=2, nodes=data.draw(st.integers(1, 4))))
    return out


@given(st.data())
def test_cost_time_uniform_price_is_time_min(data):
    resources = _random_resources(data)
    n = data.draw(st.integers(0, 40))
    budget = data.draw(st.floats(0, 200))
    a = _state(copy.deepcopy(resources), n, budget=budget, strategy=COST_TIME)
    b = _state(copy.deepcopy(resources), n, budget=budget, strategy=TIME_MIN)
    assert allocate_cost_time(a) == allocate_time_min(b)


def test_cost_time_cheap_group_covers_everything():
    s = _state([_res("c1", 1.0, price=1), _res("c2", 0.5, price=1), _res("dear", price=3)], 20, deadline=1000,
               strategy=COST_TIME)
    hosts = _hosts(allocate_cost_time(s))
    assert hosts.count("dear") == 1  # the bootstrap probe only
    assert hosts[0] == "dear"
    assert set(hosts[1:]) == {"c1", "c2"}


def test_cost_time_spills_beyond_group_capacity():
    s = _state([_res("cheap", 0.05, price=1), _res("dear", 1.0, price=3)], 20, deadline=100,
               strategy=COST_TIME)
    hosts = _hosts(allocate_cost_time(s))
    assert hosts.count("cheap") == 5 and hosts.count("dear") == 15


# -- tick --------------------------------------------------------------------

def _registry(prices):
    reg = Registry(clock=lambda: 0.0)
    for host, price in prices.items():
        reg.publish(ServiceEntry("p", host, price))
    return reg


def test_tick_without_pending_is_noop():
    s = _state([_res("a", 1.0)], 0)
    before = copy.deepcopy(s)
    assert tick(s, None, clock=60) == []
    assert s.pending == before.pending and s.committed == before.committed


def test_tick_is_deterministic():
    build = lambda: _state([_res("a", 0.5, nodes=2), _res("b"), _res("c", 0.1)], 30)
    s1, s2 = build(), build()
    assert tick(s1, None, 0) == tick(s2, None, 0)
    assert s1.pending == s2.pending


def test_tick_folds_completions_and_releases_estimates():
    s = _state([_res("a", 1.0, price=2)], 3, work=5.0)
    dispatched = tick(s, None, 0)
    job_id, host = dispatched[0]
    assert s.committed == pytest.approx(10.0 * len(dispatched))
    s.notify(Completion(job_id, host, 4.0, 4.0, 4.0, 8.0))
    tick(s, None, 60)
    assert s.spent == 8.0
    assert job_id not in s.estimates and job_id not in s.resource("a").queue


def test_price_change_reorders_cost_min():
    resources = [_res("x", 1.0), _res("y", 1.0)]
    s = _state(resources, 200, deadline=1000, strategy=COST_MIN)
    first = tick(s, _registry({"x": 1, "y": 2}).snapshot(), 0)
    assert {h for _, h in first} == {"x"}
    for job_id, host in first:
        s.notify(Completion(job_id, host, 1.0, 1.0, 1.0, 1.0))
    second = tick(s, _registry({"x": 4, "y": 2}).snapshot(), 60)
    assert second[0][1] == "y"


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_budget_and_single_assignment_invariants(data):
    resources = [_res(f"h{i}", data.draw(st.one_of(st.none(), st.floats(0.01, 2.0))),
                      price=data.draw(st.integers(0, 4)), nodes=data.draw(st.integers(1, 8)))
                 for i in range(data.draw(st.integers(1, 4)))]
    strategy = data.draw(st.sampled_from([TIME_MIN, COST_MIN, COST_TIME]))
    s = _state(resources, data.draw(st.integers(0, 60)), budget=data.draw(st.floats(0, 100)),
               deadline=data.draw(st.floats(10, 5000)), strategy=strategy,
               work=data.draw(st.floats(0.1, 10)))
    for t in range(4):
        tick(s, None, 60.0 * t)
        assert s.committed <= s.qos.budget + 1e-6
        queued = [j for r in s.resources for j in r.queue]
        assert len(queued) == len(set(queued))
        assert not set(queued) & set(s.pending)
