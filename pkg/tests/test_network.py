import math
import random

import pytest
from hypothesis import given, strategies as st

from pipesched import InvalidConfig, LinkId, LinkTrace, NoProfileData, ProfileStore, preemption_trace, profile_links, transfer_duration
from pipesched.model import from_ticks, to_ticks
from pipesched.network import CommSample, lookup_trace, plan_buckets, trace_transfer_ticks
from pipesched.planner import plan_for
from pipesched import ModelSpec, PlanConfig

from oracles import integrate_delivered, isclose, moving_average, numeric_transfer

L = LinkId(0, 1)


def test_zero_bytes_is_latency():
    assert transfer_duration(LinkTrace(L, 10, 0.75), 0, 3.0) == 0.75


def test_constant_link():
    assert transfer_duration(LinkTrace(L, 10), 100, 0.0) == 10.0


def test_piecewise_example():
    tr = LinkTrace(L, 10, 0.0, ((0, 20, 0.5),))
    assert transfer_duration(tr, 150, 0.0) == 25.0
    assert abs(numeric_transfer(10, [(0, 20, 0.5)], 150, 0.0) - 25.0) < 1e-3
    assert trace_transfer_ticks(tr, 150, 0) == to_ticks(25.0)


def test_latency_then_efficiency():
    tr = LinkTrace(L, 10, 2.0, (), ((50, 0.5),))
    assert tr.efficiency(40) == 0.5 and tr.efficiency(60) == 1.0
    assert transfer_duration(tr, 40, 0.0) == 2.0 + 40 / 5
    assert transfer_duration(tr, 60, 0.0) == 2.0 + 6.0


def test_missing_link_is_ideal():
    tr = lookup_trace({}, L)
    assert transfer_duration(tr, 1e9, 0.0) == 0.0
    assert lookup_trace(None, L).base_bandwidth == math.inf


def test_fixed_duration_trace():
    tr = LinkTrace.fixed_duration(L, 3.25)
    assert transfer_duration(tr, 123.0, 7.0) == 3.25


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(base_bandwidth=0),
        dict(latency=-1),
        dict(segments=((5, 5, 0.5),)),
        dict(segments=((0, 5, 0.5), (4, 6, 0.5))),
        dict(segments=((0, 5, 0.0),)),
        dict(segments=((0, 5, 1.5),)),
        dict(utilization_curve=((10, 0),)),
    ],
)
def test_trace_validation(kwargs):
    with pytest.raises(InvalidConfig):
        LinkTrace(L, **kwargs)


def test_availability_lookup():
    tr = LinkTrace(L, 1, 0, ((2, 4, 0.5), (6, 8, 0.25)))
    assert [tr.availability(t) for t in (0, 2, 3.9, 4, 6, 7.99, 8, 100)] == [1, 0.5, 0.5, 1, 0.25, 0.25, 1, 1]


segments_st = st.lists(
    st.tuples(st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0.05, 1.0)), min_size=0, max_size=6
).map(lambda xs: _layout(xs))


def _layout(xs):
    t = 0.0
    out = []
    for gap, length, avail in xs:
        t += gap
        out.append((t, t + length, avail))
        t += length
    return tuple(out)


@given(
    segs=segments_st,
    base=st.floats(0.5, 50),
    nbytes=st.floats(0, 200),
    extra=st.floats(0, 100),
    start=st.floats(0, 20),
    latency=st.floats(0, 2),
)
def test_transfer_properties(segs, base, nbytes, extra, start, latency):
    tr = LinkTrace(L, base, latency, segs)
    d = transfer_duration(tr, nbytes, start)
    assert d >= latency
    # conservation of delivered bytes
    delivered = integrate_delivered(base, segs, start + latency, start + d)
    assert abs(delivered - nbytes) <= 1e-9 * max(1.0, nbytes) * 100
    # monotone in bytes
    assert transfer_duration(tr, nbytes + extra, start) >= d
    # lowering availability never shortens the transfer
    worse = LinkTrace(L, base, latency, tuple((a, b, v / 2) for a, b, v in segs))
    assert transfer_duration(worse, nbytes, start) >= d
    # tick walk agrees with the float walk to within rounding
    ticks = trace_transfer_ticks(tr, nbytes, to_ticks(start))
    assert abs(from_ticks(ticks) - d) <= 1e-6 * max(1.0, d)


def test_moving_average_examples():
    s = ProfileStore(window_size=2)
    for v in (2.0, 4.0):
        s.record_sample(CommSample(L, 8, 0, v))
    assert s.estimate(L, 8) == 3.0
    s = ProfileStore(window_size=2)
    for v in (1, 1, 1, 9):
        s.record_sample(CommSample(L, 8, 0, v))
    assert s.estimate(L, 8) == 5.0


def test_empty_bucket_raises():
    with pytest.raises(NoProfileData):
        ProfileStore().estimate(L, 1.0)


def test_noisy_mean_within_five_percent():
    rng = random.Random(20241)
    s = ProfileStore(window_size=32)
    for _ in range(32):
        s.record_sample(CommSample(L, 1, 0, rng.gauss(7.0, 1.0)))
    assert abs(s.estimate(L, 1) - 7.0) <= 0.05 * 7.0


@given(xs=st.lists(st.floats(0, 100), min_size=1, max_size=40), w=st.integers(1, 10))
def test_moving_average_matches_brute_force(xs, w):
    s = ProfileStore(window_size=w)
    for x in xs:
        s.record_sample(CommSample(L, 4, 0, x))
    assert isclose(s.estimate(L, 4), moving_average(xs, w))
    assert s.samples(L, 4) == xs[-w:]


def two_stage_plan(fwd_bytes=1.0, bwd_bytes=2.0):
    m = ModelSpec.uniform(2, 4, output_bytes_per_sample_fwd=fwd_bytes, output_bytes_per_sample_bwd=bwd_bytes)
    return plan_for(m, PlanConfig.for_model(m, 1, 1))


def test_profile_constant_link_three_identical_samples():
    plan = two_stage_plan()
    traces = {LinkId(0, 1): LinkTrace(LinkId(0, 1), 4.0), LinkId(1, 0): LinkTrace(LinkId(1, 0), 4.0)}
    store = ProfileStore()
    clock = profile_links(plan, traces, 10.0, store, repeats=3)
    assert store.samples(LinkId(0, 1), 1.0) == [0.25] * 3
    assert store.samples(LinkId(1, 0), 2.0) == [0.5] * 3
    assert store.buckets() == [(LinkId(0, 1), 1.0), (LinkId(1, 0), 2.0)]
    assert clock == 10.0 + 3 * 0.25 + 3 * 0.5


def test_profile_mid_degradation_replay():
    plan = two_stage_plan(bwd_bytes=1.0)
    segs = ((1.2, 100.0, 0.25),)
    traces = {l: LinkTrace(l, 2.0, 0.0, segs) for l in (LinkId(0, 1), LinkId(1, 0))}
    store = ProfileStore(window_size=8)
    profile_links(plan, traces, 0.0, store, repeats=3)
    # replay: each measurement starts where the previous ended
    t = 0.0
    expected = []
    for link, nbytes in plan_buckets(plan):
        for _ in range(3):
            d = transfer_duration(traces[link], nbytes, t)
            expected.append((link, d))
            t += d
    for link in (LinkId(0, 1), LinkId(1, 0)):
        want = [d for l, d in expected if l == link]
        got = store.samples(link, 1.0)
        assert all(isclose(a, b) for a, b in zip(got, want))
        assert isclose(store.estimate(link, 1.0), sum(want) / len(want))
    # the first bucket saw both regimes
    first = store.samples(LinkId(0, 1), 1.0)
    assert first[0] < first[-1]


def test_preemption_trace_is_seeded():
    a = preemption_trace(L, 10.0, seed=3, horizon=100, period=5)
    b = preemption_trace(L, 10.0, seed=3, horizon=100, period=5)
    c = preemption_trace(L, 10.0, seed=4, horizon=100, period=5)
    assert a == b and a != c
    assert all(0.2 <= v <= 1.0 for _, _, v in a.segments)
    assert preemption_trace(LinkId(1, 0), 10.0, seed=3, horizon=100, period=5) != a


def test_store_roundtrip_dict():
    s = ProfileStore(window_size=3)
    s.record_sample(CommSample(L, 2, 0, 1.5))
    c = s.copy()
    c.record_sample(CommSample(L, 2, 0, 2.5))
    assert s.samples(L, 2) == [1.5]
    assert s.to_dict() == {"window_size": 3, "buckets": [{"link": "0->1", "bytes": 2.0, "samples": [1.5], "mean": 1.5}]}
