import itertools

import numpy as np
import pytest

from virtcolor import trials
from virtcolor.context import Params, PhaseFailure
from virtcolor.embedding import build_identity
from virtcolor.harness.generators import gnp_links
from virtcolor.harness.pipeline import make_context
from virtcolor.multigraph import clique_palette, verify_coloring
from virtcolor.netsim import Network

from conftest import multi_embedding


def ctx_for(links, n, seed=0, **over):
    return make_context(build_identity(Network(n, links)), Params(**over), seed)


# --- color spaces ------------------------------------------------------------


def test_color_space_rank_select():
    sp = trials.ColorSpace([0, 1], [1, 3], [10, 6], [0, 0], {0: [2, 5, 9]})
    assert sp.count().tolist() == [7, 3]
    assert [sp.subset(np.array([0])).select(np.array([j]))[0] for j in range(7)] == [1, 3, 4, 6, 7, 8, 10]
    assert sp.contains(np.array([5, 4])).tolist() == [False, True]


# --- clique-palette query ----------------------------------------------------


def _k(n):
    return ctx_for(list(itertools.combinations(range(n), 2)), n)


def test_query_uncolored_count():
    ctx = _k(20)
    K = np.arange(20)
    assert (trials.query_clique_palette(ctx, K, 20, 1, 20) == 20).all()
    assert ctx.engine.round > 0


def test_query_by_hand():
    ctx = _k(10)
    ctx.colors[[0, 1]] = [2, 5]
    K = np.arange(10)
    assert (trials.query_clique_palette(ctx, K, 6, 1, 6, "select", 1) == 1).all()
    assert (trials.query_clique_palette(ctx, K, 6, 1, 6, "select", 3) == 4).all()
    assert (trials.query_clique_palette(ctx, K, 6, 1, 6, "select", 5) == -1).all()
    assert (trials.query_clique_palette(ctx, K, 6, 1, 6, use="used") == 2).all()


def test_query_rejects_bad_range():
    ctx = _k(5)
    with pytest.raises(ValueError):
        trials.query_clique_palette(ctx, np.arange(5), 5, 3, 2)


def test_query_matches_oracle():
    ctx = _k(40)
    rng = np.random.default_rng(9)
    K = np.arange(40)
    for _ in range(500):
        cap = int(rng.integers(1, 41))
        ctx.colors[:] = np.where(rng.random(40) < 0.4, rng.integers(1, 41, 40), 0)
        a = rng.integers(1, cap + 1, 40)
        b = np.array([rng.integers(x, cap + 1) for x in a])
        i = rng.integers(1, 12, 40)
        pal = sorted(clique_palette(ctx.colors, K, cap))
        cnt = trials.query_clique_palette(ctx, K, cap, a, b)
        sel = trials.query_clique_palette(ctx, K, cap, a, b, "select", i)
        for v in range(40):
            window = [c for c in pal if a[v] <= c <= b[v]]
            assert cnt[v] == len(window)
            assert sel[v] == (window[i[v] - 1] if i[v] <= len(window) else -1)


# --- random color trial -------------------------------------------------------


def test_rct_independent_set_all_colored():
    n = 50
    ctx = ctx_for([(i, n + i) for i in range(n)], 2 * n)  # perfect matching; trial on one side
    S = np.arange(n)
    got = trials.random_color_trial(ctx, trials.interval_space(ctx, S, 1, 2), "t", np.random.default_rng(0))
    assert got == n and (ctx.colors[S] > 0).all()


def test_rct_k2_single_color():
    for seed in range(20):
        ctx = ctx_for([(0, 1)], 2, seed)
        trials.random_color_trial(ctx, trials.ColorSpace([0, 1], 1, 1), "t", np.random.default_rng(seed))
        assert (ctx.colors > 0).sum() <= 1


def test_rct_shrink_rate():
    n = 2000
    rng = np.random.default_rng(5)
    links = gnp_links(n, 0.004, rng)
    emb = build_identity(Network(n, links))
    ratios = []
    for seed in range(200):
        ctx = make_context(emb, Params(), seed)
        S = np.arange(n)
        mask = np.ones(n, bool)
        before = trials.uncolored_degree_within(ctx, mask).sum()
        trials.random_color_trial(ctx, trials.interval_space(ctx, S, 1, ctx.H.pseudo_degree + 1), "t",
                                  np.random.default_rng(seed))
        after = trials.uncolored_degree_within(ctx, ctx.colors == 0)[ctx.colors == 0].sum()
        ratios.append(after / before)
        assert verify_coloring(ctx.H, ctx.colors).ok
    assert np.mean(ratios) <= 1 - 1 / 128  # gamma = 1: nothing colored, the space is the whole list


# --- multicolor trial ---------------------------------------------------------


def test_mct_single_vertex_phase_one():
    ctx = ctx_for([(0, 1)], 2)
    res = trials.multicolor_trial(ctx, trials.ColorSpace([0], 1, 2), "t", np.random.default_rng(0))
    assert res.ok and ctx.colors[0] > 0 and res.colored == 1


@pytest.fixture(scope="module")
def reserved_instance():
    # 100 vertices, 30 uncolored neighbors each, pseudo-degree 270 >= r
    return multi_embedding(lambda a, b: min((a - b) % 100, (b - a) % 100) <= 15, 100, 9)


def test_mct_reserved_finish(reserved_instance):
    emb = reserved_instance
    assert emb.H.pseudo_degree.min() >= 255 and emb.H.degree.max() == 30
    S = np.arange(emb.n)
    for seed in range(300):
        ctx = make_context(emb, Params(), seed)
        res = trials.multicolor_trial(ctx, trials.ColorSpace(S, 1, 256), "reserved",
                                      np.random.default_rng(seed))
        assert res.ok, seed
        assert ctx.colors.max() <= 256 and verify_coloring(ctx.H, ctx.colors, require_total=True).ok


def test_mct_failure_verdict():
    ctx = ctx_for([(0, 1)], 2)
    res = trials.multicolor_trial(ctx, trials.ColorSpace([0, 1], 1, 1), "t", np.random.default_rng(0),
                                  max_phases=4)
    assert not res.ok and sorted(res.failed.tolist()) == [0, 1]


# --- clique-palette sampler --------------------------------------------------------


@pytest.fixture(scope="module")
def sampler_clique():
    return multi_embedding(lambda a, b: True, 64, 10)


def _sampler(emb, reserved, cap, seed=0, colored=()):
    ctx = make_context(emb, Params(), seed)
    for v, c in colored:
        ctx.colors[v] = c
    V = np.arange(emb.n)
    return ctx, trials.CliqueSampler(ctx, np.zeros(emb.n, np.int64), [V], reserved, np.array([cap]))


def test_sampler_never_reserved(sampler_clique):
    ctx, s = _sampler(sampler_clique, 64, 630, colored=[(0, 100), (1, 200), (2, 65)])
    V = np.arange(3, 64)
    out = np.concatenate([s.sample(V, i, charge=False) for i in range(1700)])
    assert out.size >= 10 ** 5
    drawn = out[out > 0]
    assert drawn.min() > 64
    assert not np.isin(drawn, [100, 200, 65]).any()
    assert ctx.monitors.hard_violations() == {}


def test_sampler_near_uniform(sampler_clique):
    _, s = _sampler(sampler_clique, 88, 600)
    V = np.arange(64)
    out = np.concatenate([s.sample(V, i, charge=False) for i in range(4000)])
    drawn = out[out > 0]
    assert (out == 0).mean() < 0.01
    assert set(np.unique(drawn)) <= set(range(89, 601))
    freq = np.bincount(drawn, minlength=601)[89:] / drawn.size
    assert freq.max() <= 8 / 512


def test_sampler_empty_target_fails(sampler_clique):
    # every non-reserved color below the cap is used inside K
    colored = [(v, 11 + v) for v in range(54)]
    _, s = _sampler(sampler_clique, 10, 64, colored=colored)
    assert trials.sample_color_cliquepal(s, 60, 0) == 0


# --- slice color -----------------------------------------------------------------


def test_slice_color_failing_sampler_freezes():
    ctx = ctx_for([(0, 1)], 2)
    lay = trials.slice_color(ctx, np.array([0, 1]), lambda V, i: np.zeros(V.size, np.int64), "t",
                             layer_cap=5)
    assert lay.num_layers == 1 and lay.max_load <= 5 and (ctx.colors == 0).all()


def test_slice_color_all_colored_early_exit():
    ctx = ctx_for([(0, 1)], 2)
    lay = trials.slice_color(ctx, np.array([0, 1]), lambda V, i: V + 1, "t", iters=10)
    assert lay.num_layers == 0 and ctx.colors.tolist() == [1, 2]


def test_slice_color_single_vertex_colored():
    ctx = ctx_for([(0, 1)], 2)
    ctx.colors[1] = 2
    lay = trials.slice_color(ctx, np.array([0]), lambda V, i: np.ones(V.size, np.int64), "t", layer_cap=0)
    assert ctx.colors[0] == 1 and lay.num_layers == 0


def test_slice_color_layer_invariant(sampler_clique):
    ctx, s = _sampler(sampler_clique, 16, 630)
    S = np.arange(64)
    lay = trials.slice_color(ctx, S, lambda V, i: s.sample(V, i), "slice", layer_cap=8)
    assert lay.max_load <= 8
    assert ctx.monitors.violations.get("slice:layer-invariant", 0) == 0
    assert verify_coloring(ctx.H, ctx.colors).ok and (ctx.colors[ctx.colors > 0] > 16).all()


def test_assign_rejects_out_of_space():
    ctx = ctx_for([(0, 1)], 2)
    with pytest.raises((PhaseFailure, AssertionError)):
        ctx.assign(np.array([0]), np.array([2]), "t", allowed=np.array([False]))
