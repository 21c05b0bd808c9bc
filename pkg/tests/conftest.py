import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from virtcolor.multigraph import MultiGraph

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_multigraph(rng: np.random.Generator, n: int, p: float, max_mult: int = 3) -> MultiGraph:
    iu, iv = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < p
    m = rng.integers(1, max_mult + 1, size=int(keep.sum()))
    return MultiGraph(n, iu[keep], iv[keep], m)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def multi_embedding(adjacent, num: int, mult: int):
    """Cluster embedding whose virtual vertices are paths of ``mult`` machines.

    Virtual vertices ``a`` and ``b`` with ``adjacent(a, b)`` get ``mult`` parallel
    links (machine ``i`` of ``a`` to machine ``i`` of ``b``), so pseudo-degrees
    are ``mult`` times the number of distinct neighbors.
    """
    from virtcolor.embedding import build_clusters
    from virtcolor.netsim import Network

    links = [(a * mult + i, a * mult + i + 1) for a in range(num) for i in range(mult - 1)]
    links += [(a * mult + i, b * mult + i) for a in range(num) for b in range(a + 1, num)
              if adjacent(a, b) for i in range(mult)]
    G = Network(num * mult, links)
    return build_clusters(G, [(list(range(a * mult, (a + 1) * mult)), a * mult) for a in range(num)])


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
