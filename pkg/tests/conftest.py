import numpy as np
import pytest

from pnpest import MassArrayConfig, build_benchmark, design_lse
from pnpest.bench import build_extension


@pytest.fixture(scope="session")
def benchmark_graph():
    return build_benchmark(MassArrayConfig())


@pytest.fixture(scope="session")
def benchmark_designs(benchmark_graph):
    """Full design of every benchmark estimator, output communication on."""
    g = benchmark_graph
    return {sid: design_lse(g[sid], g.parent_data(sid)) for sid in g.ids}


@pytest.fixture(scope="session")
def benchmark_designs_delta0(benchmark_graph):
    """Same plant designed with all communication switches off."""
    g = benchmark_graph
    return {sid: design_lse(g[sid], g.parent_data(sid),
                            delta={j: 0 for j in g[sid].parents})
            for sid in g.ids}


@pytest.fixture(scope="session")
def benchmark_extension():
    return build_extension(MassArrayConfig())


def make_toy_graph():
    """Two-subsystem chain with mild coupling, cheap to design."""
    from pnpest import PlantGraph, Subsystem, from_box

    s1 = Subsystem(
        id=1,
        A=np.array([[0.5, 0.1], [0.0, 0.4]]),
        B=np.array([[1.0], [0.0]]),
        C=np.array([[1.0, 0.0]]),
        D=np.array([[0.1], [0.1]]),
        couplings={2: np.array([[0.05, 0.0], [0.0, 0.05]])},
        error_set=from_box([1.0, 1.0]),
        dist_set=from_box([0.01]),
    )
    s2 = Subsystem(
        id=2,
        A=np.array([[0.6, 0.0], [0.1, 0.3]]),
        C=np.eye(2),
        couplings={},
        error_set=from_box([1.0, 1.5]),
    )
    return PlantGraph([s1, s2])


@pytest.fixture()
def toy_graph():
    return make_toy_graph()
