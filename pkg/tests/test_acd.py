import itertools

import numpy as np
import pytest

from virtcolor import acd, sketches
from virtcolor.context import Params
from virtcolor.embedding import build_identity
from virtcolor.harness.generators import generate_instance
from virtcolor.harness.pipeline import make_context
from virtcolor.multigraph import MultiGraph
from virtcolor.netsim import Network

from conftest import random_multigraph


def clique_links(vertices):
    return list(itertools.combinations(vertices, 2))


def run_acd(links, n, seed=0, **over):
    emb = build_identity(Network(n, links))
    p = Params.forced_phase(**over)
    ctx = make_context(emb, p, seed)
    return emb, ctx, acd.compute_acd(ctx)


# --- inaccurate vertices ---------------------------------------------------


def test_simple_graph_has_no_inaccurate(rng):
    H = random_multigraph(rng, 40, 0.3, max_mult=1)
    assert not acd.detect_inaccurate(H, H.degree.astype(float), 2 * 0.01 ** 3).any()


@pytest.mark.parametrize("theta", [1 / 20, 1 / 100, 1 / 2000])
def test_doubled_edges_are_inaccurate(theta):
    H = MultiGraph.from_pairs(5, {(0, j): 2 for j in range(1, 5)})
    vin = acd.detect_inaccurate(H, H.degree.astype(float), 2 * theta ** 3)
    assert vin[0]


def test_borderline_excluded():
    # deg(v) = (1 + θ³)|N(v)| sits below the (1 + 2θ³) threshold
    theta = 0.5
    N = 8  # θ³·N = 1 extra edge
    H = MultiGraph.from_pairs(N + 1, {(0, j): 2 if j == 1 else 1 for j in range(1, N + 1)})
    assert H.pseudo_degree[0] == (1 + theta ** 3) * N
    assert not acd.detect_inaccurate(H, H.degree.astype(float), 2 * theta ** 3)[0]


def test_missing_estimate_not_flagged():
    H = MultiGraph.from_pairs(3, {(0, 1): 3, (1, 2): 1})
    assert not acd.detect_inaccurate(H, np.array([np.nan, 2.0, 1.0]), 0.01)[0]


# --- friendly classification -----------------------------------------------


def _neighborhood_fps(H, t, seed=1):
    Y = sketches.fingerprint_sets(seed, H.indptr, H.nbr, t)
    return Y, sketches.estimate_rows(Y)


def test_clique_pair_friendly():
    H = MultiGraph.from_edges(64, clique_links(range(64)))
    Y, d = _neighborhood_fps(H, 2048)
    f, ov = acd.classify_friendly(Y, d, np.array([0, 5]), np.array([1, 63]), 1 / 50)
    assert f.all() and not ov.any()


def test_disjoint_neighborhoods_unfriendly():
    edges = [(0, 1)] + [(0, 2 + i) for i in range(32)] + [(1, 34 + i) for i in range(32)]
    H = MultiGraph.from_edges(66, edges)
    hits = 0
    for seed in range(50):
        Y, d = _neighborhood_fps(H, 1024, seed)
        hits += acd.classify_friendly(Y, d, np.array([0]), np.array([1]), 0.05)[0][0]
    assert hits == 0


def _exact_friendly(H, theta):
    A = H.simple_adjacency().astype(np.int64)
    common = (A @ A).toarray()
    k = H.degree
    u, v = H.pair_u, H.pair_v
    return common[u, v] > (1 - theta) * np.minimum(k[u], k[v])


def test_friendly_superset_of_exact():
    theta, good = 0.1, 0
    for s in range(100):
        g = np.random.default_rng(s)
        size = int(g.integers(24, 48))
        H0 = random_multigraph(g, size, 0.97, max_mult=1)
        extra = random_multigraph(g, size + 10, 0.05, max_mult=1)
        pairs = {(int(a), int(b)): 1 for a, b in zip(H0.pair_u, H0.pair_v)}
        pairs.update({(int(a), int(b)): 1 for a, b in zip(extra.pair_u, extra.pair_v)})
        H = MultiGraph.from_pairs(size + 10, pairs)
        want = _exact_friendly(H, theta)
        Y, d = _neighborhood_fps(H, 4096, s)
        got, _ = acd.classify_friendly(Y, d, H.pair_u, H.pair_v, theta)
        good += bool((got | ~want).all())
    assert good >= 99


def test_friendly_empty_pairs():
    f, ov = acd.classify_friendly(np.zeros((3, 8), np.uint8), np.zeros(3), np.zeros(0, int), np.zeros(0, int), 0.1)
    assert f.size == ov.size == 0


# --- full decomposition ------------------------------------------------------


def test_disjoint_cliques_found():
    dl, s = 16, 64
    links = [e for b in range(3) for e in clique_links(range(b * s, (b + 1) * s))]
    emb, ctx, res = run_acd(links, 3 * s, delta_low=dl)
    assert len(res.cliques) == 3
    assert sorted(map(tuple, res.cliques)) == [tuple(range(b * s, (b + 1) * s)) for b in range(3)]
    assert not (res.label == acd.STAR).any() and not (res.label == acd.INACCURATE).any()
    assert acd.check_acd(emb.H, res)
    assert ctx.engine.round > 0


def test_cycle_all_low():
    n = 200
    emb, ctx, res = run_acd([(i, (i + 1) % n) for i in range(n)], n)
    assert (res.label == acd.LOW).all() and res.cliques == []
    assert res.diagnostics["skipped"]


def test_clique_plus_half_attached_vertex():
    dl, s = 16, 64
    links = clique_links(range(s)) + [(s, j) for j in range(s // 2)]
    emb, _, res = run_acd(links, s + 1, delta_low=dl)
    assert (res.label[:s] == acd.DENSE).all()
    assert res.label[s] in (acd.STAR, acd.DENSE)
    verdict = acd.check_acd(emb.H, res)
    assert verdict, verdict.failures


@pytest.mark.parametrize("seed", range(6))
def test_blob_family_passes_checker(seed):
    emb = generate_instance("clique-blobs", {"blobs": 3, "size": 96, "ext": 8, "sparse": 40}, seed)
    ctx = make_context(emb, Params.forced_phase(), seed)
    res = acd.compute_acd(ctx)
    v = acd.check_acd(emb.H, res, inacc_margin=ctx.params.inacc_margin)
    for item in ("partition", "dense-label", "item1-low", "item1-high", "item2-inaccurate",
                 "item4a", "item4b", "count-degree", "fact-E", "fact-A", "Delta_K-range",
                 "deg-vs-Delta_K", "diameter"):
        assert item not in v.failures, (item, v.failures)
    assert len(res.cliques) >= 3
    # cabal flag follows the e_K < ell definition
    assert np.array_equal(res.cabal, res.e_K < res.ell)
    assert "item4c_max" in v.ratios


def test_hand_built_violation_fails():
    s = 10
    H = MultiGraph.from_edges(s + 1, clique_links(range(s)) + [(s, 0)])
    clique = np.zeros(s + 1, dtype=np.int64)
    res = acd.finalize(acd.AcdResult(np.full(s + 1, acd.DENSE, np.int8), clique, [np.arange(s + 1)],
                                     eps=1 / 8, delta_low=2, ell=4), H)
    v = acd.check_acd(H, res)
    assert not v and v.failures["item4a"] >= 1


def test_count_degree_fact_exact(rng):
    H = random_multigraph(rng, 30, 0.8)
    clique = np.where(np.arange(30) < 20, 0, -1)
    res = acd.finalize(acd.AcdResult(np.where(clique >= 0, acd.DENSE, acd.STAR).astype(np.int8), clique,
                                     [np.arange(20)], eps=0.5, delta_low=1, ell=1), H)
    K = res.cliques[0]
    assert np.array_equal(H.pseudo_degree[K] + 1, K.size + res.e_v[K] - res.a_v[K])


def test_acd_json_roundtrip(tmp_path):
    s = 64
    emb, _, res = run_acd(clique_links(range(s)), s, delta_low=16)
    path = tmp_path / "acd.json"
    res.dump(str(path))
    import json
    doc = json.loads(path.read_text())
    assert doc["cliques"][0]["size"] == s and doc["labels"].count("dense") == s
