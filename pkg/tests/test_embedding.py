import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from virtcolor.embedding import (
    Embedding, build_clusters, build_identity, build_power, build_power_distributed, power_distance_ok,
    spider_example, validate_embedding,
)
from virtcolor.harness.generators import gnp_links
from virtcolor.harness.pipeline import color_embedding
from virtcolor.multigraph import InvalidArgument, verify_coloring
from virtcolor.netsim import Network


def cycle(n):
    return Network(n, [(i, (i + 1) % n) for i in range(n)])


def path(n):
    return Network(n, [(i, i + 1) for i in range(n - 1)])


def test_identity_cycle():
    E = build_identity(cycle(5))
    assert E.H.n == 5 and (E.H.pseudo_degree == 2).all()


def test_identity_k4_measure():
    E = build_identity(Network(4, list(itertools.combinations(range(4), 2))))
    assert E.measure() == (1, 1)
    assert E.measure("network") == (0, 0)


def test_identity_empty():
    E = build_identity(Network(0, []))
    assert E.H.n == 0 and E.H.num_edges == 0


def test_spider_measures():
    E = spider_example()
    assert E.measure("network") == (1, 3)
    assert bool(validate_embedding(E))


def test_power_c4():
    E = build_power(cycle(4), 2)
    assert (E.H.pseudo_degree == 4).all()
    assert E.H.multiplicity(0, 2) == 2 and E.H.multiplicity(0, 1) == 1


def test_power_c4_coloring():
    G = cycle(4)
    E = build_power(G, 2)
    colors, _ = color_embedding(E, seed=1)
    assert verify_coloring(E.H, colors, require_total=True)
    assert max(colors) <= 5
    assert power_distance_ok(G, 2, colors)


def test_power_path_middle():
    E = build_power(path(5), 2)
    assert E.H.pseudo_degree[2] == 4
    assert E.H.nbr_mult[E.H.indptr[2]:E.H.indptr[3]].max() == 1


def test_power_t1_is_identity_structure():
    rng = np.random.default_rng(3)
    G = Network(30, gnp_links(30, 0.2, rng))
    assert build_power(G, 1).H == build_identity(G).H


def test_power_rejects_t0():
    with pytest.raises(InvalidArgument):
        build_power(cycle(4), 0)


def test_power_star_congestion_audit():
    d = 6
    G = Network(d + 1, [(0, i) for i in range(1, d + 1)])
    E = build_power(G, 3)
    f = E.forest
    counts = {}
    for v, T in enumerate(E.tree_links):
        for a, b in T.tolist():
            key = (min(a, b), max(a, b))
            counts[key] = counts.get(key, 0) + 1
    assert E.measure()[0] == max(counts.values())
    assert f.congestion() == max(counts.values())
    assert E.H.pseudo_degree.max() <= d ** 3


def test_power_distributed_matches_centralized():
    rng = np.random.default_rng(8)
    G = Network(25, gnp_links(25, 0.15, rng))
    for t in (1, 2, 3):
        a = build_power(G, t)
        b, rounds = build_power_distributed(G, t)
        assert a.H == b.H
        assert [s.tolist() for s in a.supports] == [s.tolist() for s in b.supports]
        assert np.array_equal(a.edge_handler, b.edge_handler)
        assert rounds >= t


def test_clusters_singletons_match_identity():
    G = cycle(6)
    E = build_clusters(G, [([v], v) for v in range(6)])
    assert E.H == build_identity(G).H


def test_clusters_parallel_edges():
    G = Network(6, [(0, 1), (1, 2), (3, 4), (4, 5), (0, 3), (1, 4), (2, 5)])
    E = build_clusters(G, [([0, 1, 2], 0), ([3, 4, 5], 3)])
    assert E.H.multiplicity(0, 1) == 3
    assert E.H.pseudo_degree.tolist() == [3, 3]


def test_cluster_whole_graph():
    G = cycle(5)
    E = build_clusters(G, [(list(range(5)), 2)])
    assert E.H.n == 1 and E.H.num_edges == 0


def test_cluster_disconnected():
    with pytest.raises(InvalidArgument):
        build_clusters(path(4), [([0, 2], 0), ([1], 1)])


def test_validate_rejects_bad_handler():
    E = build_identity(cycle(5))
    eh = E.edge_handler.copy()
    eh[0] = 4  # machine 4 is not in V(0) ∩ V(1)
    with pytest.raises(InvalidArgument):
        Embedding(E.G, E.H, E.supports, E.tree_links, E.roots, E.edge_u, E.edge_v, eh)


def test_validate_rejects_cycle():
    G = Network(3, [(0, 1), (1, 2), (0, 2)])
    E = build_clusters(G, [([0, 1, 2], 0)])
    n = G.n
    # close the loop 0-1-2-0 through the link-nodes inside the support
    sup = [np.arange(n + G.num_links)]
    links = []
    for lid, (a, b) in enumerate(G.links.tolist()):
        links += [(a, n + lid), (n + lid, b)]
    bad = Embedding(G, E.H, sup, [np.array(links)], [0], [], [], [], validate=False)
    assert not validate_embedding(bad)


def test_json_round_trip(tmp_path):
    E = build_power(cycle(7), 2)
    p = tmp_path / "e.json"
    E.dump(str(p))
    F = Embedding.load(str(p))
    assert F.H == E.H and np.array_equal(F.edge_handler, E.edge_handler)


@pytest.mark.parametrize("t", [1, 2, 3])
def test_power_coloring_is_distance_coloring(t):
    ok = 0
    for seed in range(50):
        rng = np.random.default_rng([seed, t])
        n = int(rng.integers(6, 30))
        G = Network(n, gnp_links(n, float(rng.uniform(1.5, 3.5) / n), rng))
        E = build_power(G, t)
        colors, _ = color_embedding(E, seed=seed)
        ok += bool(verify_coloring(E.H, colors, require_total=True)) and power_distance_ok(G, t, colors)
    assert ok == 50


@given(st.integers(0, 10 ** 6))
def test_builders_validate(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 40))
    G = Network(n, gnp_links(n, 0.2, rng))
    for E in (build_identity(G), build_power(G, int(rng.integers(1, 4)))):
        assert bool(validate_embedding(E))
