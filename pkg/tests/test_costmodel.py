import statistics

import pytest
from hypothesis import given, strategies as st

from pipesched import (
    LinkId,
    LinkTrace,
    ModelSpec,
    NoProfileData,
    PlanConfig,
    PlanEstimate,
    ProfileStore,
    estimate_length,
    preemption_trace,
    profile_compute,
    profile_links,
    rank_candidates,
    simulate,
)
from pipesched.costmodel import rank_key
from pipesched.model import pipeline_links
from pipesched.planner import plan_for
from pipesched.simulator import simulate_ticks

from conftest import const_traces, comm_bound_model


def profiled(m, configs, traces, repeats=3, window=8, clock=0.0):
    store = ProfileStore(window)
    for c in configs:
        profile_links(plan_for(m, c), traces, clock, store, repeats)
    return profile_compute(m, {c.b for c in configs}), store


@given(
    S=st.integers(1, 4),
    G=st.sampled_from([4, 6, 8]),
    bw=st.floats(0.1, 10),
    latency=st.floats(0, 1),
    fwd_bytes=st.floats(0, 4),
    curve=st.booleans(),
    data=st.data(),
)
def test_surrogate_is_exact_on_constant_traces(S, G, bw, latency, fwd_bytes, curve, data):
    m = ModelSpec.uniform(
        S, G, forward_fixed=0.3, output_bytes_per_sample_fwd=fwd_bytes, output_bytes_per_sample_bwd=fwd_bytes * 1.5
    )
    b = data.draw(st.sampled_from(m.divisors()))
    k = data.draw(st.integers(1, G // b))
    cfg = PlanConfig.for_model(m, k, b)
    util = ((2.0, 0.6),) if curve else ()
    traces = {l: LinkTrace(l, bw, latency, (), util) for l in pipeline_links(S)}
    cp, store = profiled(m, [cfg], traces)
    est = estimate_length(plan_for(m, cfg), m, cp, store)
    assert est.estimated_length == simulate(plan_for(m, cfg), m, traces).pipeline_length


def test_noisy_stationary_estimate_within_ten_percent():
    m = comm_bound_model()
    cfg = PlanConfig.for_model(m, 2, 1)
    plan = plan_for(m, cfg)
    traces = {
        l: preemption_trace(l, 1.0, seed=11, horizon=5000, period=0.35, low=0.3, high=1.0, p_preempt=0.5)
        for l in pipeline_links(4)
    }
    cp, store = profiled(m, [cfg], traces, repeats=32, window=32)
    est = estimate_length(plan, m, cp, store).estimated_length
    lengths, t = [], 0
    for _ in range(60):
        r = simulate_ticks(plan, m, traces, offset=t)
        lengths.append(r.pipeline_length)
        t = r.end
    true_mean = statistics.fmean(lengths)
    assert abs(est - true_mean) <= 0.10 * true_mean


def test_stale_profiles_underestimate():
    m = comm_bound_model()
    cfg = PlanConfig.for_model(m, 1, 1)
    plan = plan_for(m, cfg)
    # bandwidth drops to a fifth at t=50; profiles were taken before that
    traces = {l: LinkTrace(l, 1.0, 0.0, ((50.0, 1e9, 0.2),)) for l in pipeline_links(4)}
    cp, store = profiled(m, [cfg], traces)
    est = estimate_length(plan, m, cp, store).estimated_length
    actual = simulate(plan, m, traces, start_time=100.0).pipeline_length
    assert est < actual


def test_missing_profiles_raise():
    m = comm_bound_model()
    cfg = PlanConfig.for_model(m, 1, 1)
    with pytest.raises(NoProfileData):
        estimate_length(plan_for(m, cfg), m, profile_compute(m, [1]), ProfileStore())
    _, store = profiled(m, [cfg], const_traces(4))
    with pytest.raises(NoProfileData):
        estimate_length(plan_for(m, cfg), m, {}, store)


def test_rank_key_rules():
    a = PlanEstimate(PlanConfig(1, 4, 8), 100.0)
    b = PlanEstimate(PlanConfig(2, 2, 16), 80.0)
    assert sorted([a, b], key=rank_key)[0] is b
    c = PlanEstimate(PlanConfig(3, 1, 32), 50.0)
    d = PlanEstimate(PlanConfig(2, 1, 32), 50.0)
    assert sorted([c, d], key=rank_key) == [d, c]
    e = PlanEstimate(PlanConfig(2, 2, 16), 50.0)
    assert sorted([c, d, e], key=rank_key) == [e, d, c]


def test_comm_bound_ranking():
    m = comm_bound_model()
    configs = [PlanConfig.for_model(m, k, 1) for k in (1, 2)]
    cp, store = profiled(m, configs, const_traces(4))
    ranked = rank_candidates(configs, m, cp, store)
    assert [e.config.k for e in ranked] == [2, 1]
    assert [e.estimated_length for e in ranked] == [36.0, 41.0]
    assert ranked[0].throughput == 8 / 36.0
    assert ranked[0].to_dict()["inputs"]["comm"]["0->1"] == 0.5
