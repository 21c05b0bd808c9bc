import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from virtcolor import netsim
from virtcolor.embedding import build_identity, spider_example
from virtcolor.harness.generators import generate_instance, gnp_links
from virtcolor.netsim import (
    BandwidthExceeded, InvalidNetwork, Network, RoundEngine, SupportForest, Transcript, aggregate_on_trees,
    broadcast_on_trees, ceil_log2, default_bandwidth, measure_congestion_dilation,
)


def test_network_must_be_simple():
    with pytest.raises(InvalidNetwork):
        Network(3, [(0, 1), (1, 0)])
    with pytest.raises(InvalidNetwork):
        Network(3, [(1, 1)])


def test_default_bandwidth():
    assert default_bandwidth(2) == 8
    assert default_bandwidth(1 << 10) == 40


@given(st.integers(1, 1 << 40))
def test_ceil_log2(x):
    want = 0 if x <= 1 else (x - 1).bit_length()
    assert ceil_log2(x) == want
    assert ceil_log2(np.array([x]))[0] == want


def test_empty_round_advances():
    eng = RoundEngine(Network(2, [(0, 1)], bandwidth=8))
    assert eng.run_round({}) == {}
    assert eng.round == 1


def test_single_bit_delivery():
    net = Network(2, [(0, 1)], bandwidth=1)
    eng = RoundEngine(net)
    inbox = eng.run_round({0: [(1, "1")]})
    assert inbox == {1: [(0, "1")]}
    assert eng.ledger.total_bits == 1 == eng.transcript.total_bits


def test_two_full_messages_exceed():
    net = Network(2, [(0, 1)], bandwidth=4)
    eng = RoundEngine(net)
    with pytest.raises(BandwidthExceeded) as ei:
        eng.run_round({0: [(1, "1010"), (1, "0101")]})
    assert ei.value.link == 0 and ei.value.bits == 8


def test_directions_are_separate():
    net = Network(2, [(0, 1)], bandwidth=4)
    eng = RoundEngine(net)
    eng.run_round({0: [(1, "1010")], 1: [(0, "0101")]})
    assert eng.ledger.bits.tolist() == [4, 4]


def test_shared_budget_when_not_per_direction():
    net = Network(2, [(0, 1)], bandwidth=4, per_direction=False)
    with pytest.raises(BandwidthExceeded):
        RoundEngine(net).run_round({0: [(1, "1010")], 1: [(0, "0101")]})


def test_identity_broadcast_two_rounds():
    rng = np.random.default_rng(1)
    G = Network(60, gnp_links(60, 0.1, rng))
    E = build_identity(G)
    rho, d = E.measure()
    assert rho <= 2 and d <= 1
    eng = RoundEngine(E.S)
    res = broadcast_on_trees(eng, E.forest, {v: "1" * 5 for v in range(G.n)})
    assert 0 < res.rounds <= 2
    for i in range(E.forest.node.size):
        assert res.values[i] == "1" * 5


@pytest.mark.parametrize("rho", [1, 2, 5, 17])
def test_star_link_rounds_equal_congestion(rho):
    net = Network(2, [(0, 1)], bandwidth=16)
    forest = SupportForest.from_trees(net, [(0, {1: 0})] * rho)
    assert measure_congestion_dilation(forest) == (rho, 1)
    eng = RoundEngine(net)
    r = eng.tree_phase(forest, 1)
    assert r == rho


def test_empty_payload_zero_rounds():
    E = spider_example()
    eng = RoundEngine(E.S)
    assert broadcast_on_trees(eng, E.forest, {0: ""}).rounds == 0
    assert eng.round == 0


def test_fragmentation():
    net = Network(2, [(0, 1)], bandwidth=10)
    forest = SupportForest.from_trees(net, [(0, {1: 0})] * 4)  # tag = 2 bits, capacity 8
    eng = RoundEngine(net)
    assert eng.tree_phase(forest, 20) == 4 * 3
    assert eng.ledger.fragments.sum() == 12
    assert eng.ledger.total_bits == 4 * 20 + 12 * 2


def test_tag_too_large_exceeds():
    net = Network(2, [(0, 1)], bandwidth=2)
    forest = SupportForest.from_trees(net, [(0, {1: 0})] * 8)
    with pytest.raises(BandwidthExceeded):
        RoundEngine(net).tree_phase(forest, 1)


def test_aggregate_pseudo_degree():
    for emb in (spider_example(), generate_instance("power", {"n": 12, "t": 2}), generate_instance("clusters", {"n": 200, "clusters": 20}, 3)):
        eng = RoundEngine(emb.S)
        res = aggregate_on_trees(eng, emb.forest, emb.handled_per_record(), np.add, 0, 8)
        assert res.values.tolist() == emb.H.pseudo_degree.tolist()


def test_aggregate_identity_for_empty_contributions():
    net = Network(3, [(0, 1), (1, 2)])
    forest = SupportForest.from_trees(net, [(1, {0: 1, 2: 1})])
    vals = np.zeros(forest.node.size, np.int64)
    res = aggregate_on_trees(RoundEngine(net), forest, vals, np.maximum, 0, 4)
    assert res.values.tolist() == [0]


def test_aggregate_or_depth_three():
    net = Network(4, [(0, 1), (1, 2), (2, 3)], bandwidth=80)
    forest = SupportForest.from_trees(net, [(0, {1: 0, 2: 1, 3: 2})])
    rng = np.random.default_rng(5)
    vals = rng.integers(0, 1 << 62, size=4, dtype=np.int64)
    assert forest.dilation() == 3
    res = aggregate_on_trees(RoundEngine(net), forest, vals, np.bitwise_or, 0, 64)
    assert res.values[0] == np.bitwise_or.reduce(vals)
    perm = vals[::-1].copy()
    res2 = aggregate_on_trees(RoundEngine(net), forest, perm, np.bitwise_or, 0, 64)
    assert res2.values[0] == res.values[0]


@given(st.integers(0, 10 ** 6), st.integers(1, 40))
def test_round_bound_and_ledger(seed, bits):
    rng = np.random.default_rng(seed)
    emb = generate_instance("clusters", {"n": 120, "clusters": int(rng.integers(4, 30))}, seed)
    eng = RoundEngine(emb.S)
    f = emb.forest
    mask = rng.random(f.num_trees) < 0.7
    r = eng.tree_phase(f, bits, mask=mask, upward=bool(seed % 2))
    rho, d = emb.measure()
    cap = emb.S.bandwidth - int(f.tag_bits.max())
    assert r <= rho * d * -(-bits // cap)
    assert eng.ledger.total_bits == eng.transcript.total_bits


def test_transcript_file_matches_ledger(tmp_path):
    emb = generate_instance("clusters", {"n": 150, "clusters": 15}, 2)
    path = tmp_path / "t.ndjson"
    tr = Transcript(str(path))
    eng = RoundEngine(emb.S, transcript=tr)
    eng.virtual_round(emb.forest, 12, 7)
    tr.close()
    total = sum(json.loads(line)["bits"] for line in path.read_text().splitlines())
    assert total == eng.ledger.total_bits == tr.total_bits


def test_kernel_and_fallback_agree():
    if netsim._netkern is None:
        pytest.skip("compiled kernel not built")
    emb = generate_instance("clusters", {"n": 300, "clusters": 30}, 4)
    a = RoundEngine(emb.S)
    b = RoundEngine(emb.S, transcript=Transcript(os.devnull))  # file-backed: numpy path
    for eng in (a, b):
        eng.virtual_round(emb.forest, 33, 9)
        eng.tree_phase(emb.forest, 5, mask=np.arange(emb.n) % 3 == 0, upward=True)
    assert a.round == b.round
    assert np.array_equal(a.ledger.bits, b.ledger.bits)
    assert np.array_equal(a.ledger.fragments, b.ledger.fragments)
    assert a.transcript.total_bits == b.transcript.total_bits


def test_pure_python_switch():
    code = "import virtcolor.netsim as n, virtcolor.sketches as s; print(n._netkern is None, s.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env={**os.environ, "VIRTCOLOR_PURE_PYTHON": "1"},
                         capture_output=True, text=True, check=True).stdout.split()
    assert out == ["True", "python"]


def test_engine_rng_deterministic():
    net = Network(3, [(0, 1)])
    a, b = RoundEngine(net, seed=9), RoundEngine(net, seed=9)
    assert a.rng(2).integers(1 << 30) == b.rng(2).integers(1 << 30)
    assert a.rng(2).integers(1 << 30) != a.rng(1).integers(1 << 30)


def test_abort_phase_recorded():
    eng = RoundEngine(Network(2, [(0, 1)]))
    with pytest.raises(RuntimeError):
        with eng.phase("outer"):
            with eng.phase("inner"):
                raise RuntimeError("boom")
    assert eng.abort_phase == "inner"
