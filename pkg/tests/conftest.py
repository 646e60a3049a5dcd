import os
import sys

import pytest
from hypothesis import HealthCheck, settings

from pipesched import LinkId, LinkTrace, ModelSpec, StageProfile
from pipesched.model import pipeline_links

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def comm_bound_model(S=4, global_batch=8, nbytes=0.5):
    return ModelSpec.uniform(
        S,
        global_batch,
        forward_per_sample=1.0,
        backward_per_sample=2.0,
        activation_bytes_per_sample=1.0,
        output_bytes_per_sample_fwd=nbytes,
        output_bytes_per_sample_bwd=nbytes,
    )


def const_traces(S, bw=1.0, latency=0.0):
    return {l: LinkTrace(l, bw, latency) for l in pipeline_links(S)}


def two_regime_model():
    return ModelSpec.uniform(
        4,
        32,
        forward_fixed=0.5,
        forward_per_sample=0.5,
        backward_fixed=1.0,
        backward_per_sample=1.0,
        activation_bytes_per_sample=1.0,
        output_bytes_per_sample_fwd=1.0,
        output_bytes_per_sample_bwd=1.0,
    )


def queue_scenario_model():
    # stage 1 runs at twice the speed of stage 0, so gradients pile up ahead of stage 0
    stages = (
        StageProfile(0, forward_per_sample=1, backward_per_sample=2,
                     output_bytes_per_sample_fwd=0.5, output_bytes_per_sample_bwd=0.5),
        StageProfile(1, forward_per_sample=0.5, backward_per_sample=1,
                     output_bytes_per_sample_fwd=0.5, output_bytes_per_sample_bwd=0.5),
    )
    return ModelSpec(stages, 9)


QUEUE_DIPS = ((5.0, 6.0, 0.1), (9.5, 11.5, 0.1))


def queue_scenario_traces(dips=QUEUE_DIPS):
    return {
        LinkId(0, 1): LinkTrace(LinkId(0, 1), 1.0),
        LinkId(1, 0): LinkTrace(LinkId(1, 0), 1.0, 0.0, dips),
    }


@pytest.fixture
def comm_bound():
    return comm_bound_model()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
