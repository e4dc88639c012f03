import sys
import numpy as np
import pytest

from flowcut import synthgen
from flowcut.flow import horn_schunck


@pytest.fixture(scope="session")
def flat_seq():
    return synthgen.generate(synthgen.flat_spec(seed=0))


@pytest.fixture(scope="session")
def flat_flows(flat_seq):
    fr = flat_seq.frames
    n = len(fr)
    fw = [horn_schunck(fr[t], fr[t + 1]) for t in range(n - 1)]
    bw = [None] + [horn_schunck(fr[t], fr[t - 1]) for t in range(1, n)]
    return fw, bw


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def small_spec(**kw):
    params = dict(height=32, width=48, object_size=(16, 24), n_frames=5, velocity=(1.0, 1.0))
    params.update(kw)
    return synthgen.flat_spec(**params)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
