import itertools
import math

import numpy as np
import pytest
from scipy import stats

from virtcolor import lowdeg
from virtcolor.context import Monitors, Params
from virtcolor.embedding import build_identity
from virtcolor.harness.generators import generate_instance, gnp_links
from virtcolor.harness.pipeline import make_context
from virtcolor.multigraph import UNCOLORED, MultiGraph, verify_coloring
from virtcolor.netsim import Network
from virtcolor.trials import STRIDE

from conftest import multi_embedding, random_multigraph


def ctx_for(links, n, seed=0, **over):
    return make_context(build_identity(Network(n, links)), Params(**over), seed)


def star(leaves):
    return MultiGraph.from_edges(leaves + 1, [(0, j) for j in range(1, leaves + 1)])


def _free(H, colors, v):
    s, e = H.indptr[v], H.indptr[v + 1]
    used = set(colors[H.nbr[s:e]].tolist())
    return [c for c in range(1, H.pseudo_degree[v] + 2) if c not in used]


def _dpsi(H, colors, v):
    s, e = H.indptr[v], H.indptr[v + 1]
    return int((H.nbr_mult[s:e] * (colors[H.nbr[s:e]] == UNCOLORED)).sum())


def _random_instance(g, n=14, p=0.5, max_mult=3):
    H = random_multigraph(g, n, p, max_mult=max_mult)
    colors = np.zeros(n, np.int64)
    for u in g.permutation(n):
        if g.random() < 0.5:
            free = _free(H, colors, u)
            colors[u] = free[int(g.integers(len(free)))]
    return H, colors


# --- free-color sampler -----------------------------------------------------------


def test_sampler_uniform_on_uncolored_neighborhood():
    H = star(3)
    got = lowdeg.sample_free_color(H, np.zeros(4, np.int64), 0, np.random.default_rng(0), size=10 ** 5)
    obs = np.bincount(got, minlength=5)[1:]
    assert obs.sum() == 10 ** 5
    assert stats.chisquare(obs).pvalue >= 0.01


def test_sampler_hand_trace():
    H = star(3)
    colors = np.array([0, 2, 0, 0])
    assert [lowdeg.sample_free_color(H, colors, 0, x=x) for x in (1, 2, 3)] == [1, 3, 4]
    assert lowdeg.free_color_image(H, colors, 0) == [1, 3, 4]


def test_sampler_rejects_bad_input():
    H = star(3)
    with pytest.raises(ValueError):
        lowdeg.sample_free_color(H, np.array([1, 0, 0, 0]), 0)
    with pytest.raises(ValueError):
        lowdeg.sample_free_color(H, np.zeros(4, np.int64), 0, x=5)


@pytest.mark.parametrize("arity", [2, 3, 5])
def test_sampler_injective_and_free(arity):
    g = np.random.default_rng(arity)
    for _ in range(500):
        H, colors = _random_instance(g)
        unc = np.flatnonzero(colors == UNCOLORED)
        if unc.size == 0:
            continue
        v = int(g.choice(unc))
        img = lowdeg.free_color_image(H, colors, v, arity)
        assert len(img) == _dpsi(H, colors, v) + 1
        assert len(set(img)) == len(img)
        assert set(img) <= set(_free(H, colors, v))


def test_sampler_exhaustive_small_degree():
    # every uncolored vertex of pseudo-degree ≤ 12, over every start rank
    g = np.random.default_rng(77)
    checked = 0
    for _ in range(200):
        H, colors = _random_instance(g, n=10, p=0.6)
        mon = Monitors()
        for v in np.flatnonzero((colors == UNCOLORED) & (H.pseudo_degree <= 12)):
            d = _dpsi(H, colors, v)
            img = [lowdeg.sample_free_color(H, colors, int(v), x=x, monitors=mon) for x in range(1, d + 2)]
            assert len(set(img)) == d + 1 and set(img) <= set(_free(H, colors, v))
            checked += 1
        assert mon.checks["palette-search:invariant"] > 0 if mon.checks else True
        assert mon.violations.get("palette-search:invariant", 0) == 0
    assert checked > 500


# --- degree reduction -----------------------------------------------------------


def test_reduction_identity_when_colored():
    ctx = ctx_for([(0, 1), (1, 2)], 3)
    ctx.colors[:] = [1, 2, 1]
    res = lowdeg.low_degree_reduction(ctx)
    assert res.colored == 0 and ctx.colors.tolist() == [1, 2, 1]
    assert all(p.size == 0 for p in res.parts)


@pytest.mark.parametrize("seed", range(5))
def test_reduction_proper_and_parts(seed):
    n = 1500
    links = gnp_links(n, 12 / n, np.random.default_rng(seed))
    ctx = make_context(build_identity(Network(n, links)), Params(), seed)
    res = lowdeg.low_degree_reduction(ctx)
    assert verify_coloring(ctx.H, ctx.colors).ok
    assert (ctx.colors <= ctx.H.pseudo_degree + 1).all()
    V1, V2 = res.parts
    assert np.intersect1d(V1, V2).size == 0
    assert (ctx.colors[np.concatenate(res.parts)] == UNCOLORED).all()
    assert max(res.part_max_degree) <= 4 * ctx.log2n
    assert ctx.monitors.violations.get("palette-search:invariant", 0) == 0


# --- palette learning -------------------------------------------------------------


def test_grow_palette_hand_example():
    ctx = ctx_for([(0, j) for j in range(1, 8)], 8)
    ctx.colors[[1, 2]] = [3, 6]
    D = np.array([0 * STRIDE + 1])
    keys = lowdeg.grow_palette(ctx, np.array([0]), D)
    cols = (keys % STRIDE).tolist()
    assert set(cols) <= {2, 4, 5, 7, 8}
    x = math.ceil(math.log(8) / math.log(7))
    assert len(cols) == min(5 - 1, x)


def test_grow_palette_full_known_set_is_empty():
    ctx = ctx_for([(0, 1), (0, 2)], 3)
    assert lowdeg.grow_palette(ctx, np.array([0]), np.array([1, 2])).size == 0  # |D| = deg_ψ


def test_grow_palette_oracle():
    g = np.random.default_rng(3)
    instances = 0
    while instances < 500:
        n = 20
        H0, colors = _random_instance(g, n=n, p=0.4, max_mult=1)
        ctx = ctx_for(list(zip(H0.pair_u.tolist(), H0.pair_v.tolist())), n)
        H = ctx.H
        ctx.colors[:] = colors
        V = np.flatnonzero(colors == UNCOLORED)
        dk = []
        for v in V:
            free = _free(H, colors, v)
            take = g.permutation(len(free))[: int(g.integers(0, len(free)))]
            dk += [int(v) * STRIDE + free[i] for i in take]
        dk = np.sort(np.array(dk, np.int64))
        keys = lowdeg.grow_palette(ctx, V, dk)
        assert np.intersect1d(keys, dk).size == 0 and np.unique(keys).size == keys.size
        for v in V:
            mine = keys[keys // STRIDE == v] % STRIDE
            assert set(mine.tolist()) <= set(_free(H, colors, v))
            dsz = int((dk // STRIDE == v).sum())
            cap = math.ceil(math.log(n) / math.log(max(H.pseudo_degree[v], 2)))
            assert mine.size == max(0, min(_dpsi(H, colors, v) - dsz, cap))
            instances += 1
        assert ctx.monitors.hard_violations() == {}


def test_learn_palette_isolated_vertex():
    ctx = ctx_for([(0, 1)], 3)
    ctx.colors[:2] = [1, 2]
    keys = lowdeg.learn_palette(ctx, np.array([2]), 4)
    assert keys.size == 1 and keys[0] // STRIDE == 2


@pytest.mark.parametrize("seed", range(4))
def test_learn_palette_size_and_free(seed):
    n = 400
    links = gnp_links(n, 10 / n, np.random.default_rng(seed))
    ctx = make_context(build_identity(Network(n, links)), Params(), seed)
    rng = np.random.default_rng(seed)
    for v in rng.permutation(n)[: n // 2]:
        free = _free(ctx.H, ctx.colors, v)
        ctx.colors[v] = free[0]
    V = np.flatnonzero(ctx.colors == UNCOLORED)
    dbar = int(lowdeg.distinct_degree_within(ctx, ctx.colors == UNCOLORED)[V].max())
    keys = lowdeg.learn_palette(ctx, V, dbar)
    own, cols = keys // STRIDE, keys % STRIDE
    nb = lowdeg.distinct_degree_within(ctx, ctx.colors == UNCOLORED)
    have = np.bincount(own, minlength=n)
    assert (have[V] >= np.minimum(nb[V], dbar) + 1).all()
    for v, c in zip(own.tolist(), cols.tolist()):
        assert c in _free(ctx.H, ctx.colors, v)
    assert ctx.monitors.hard_violations() == {}


# --- auxiliary coloring -------------------------------------------------------------


def test_linial_independent_set():
    ctx = ctx_for([], 10)
    aux = lowdeg.linial_virtual(ctx, np.arange(10))
    assert aux.phases == 0 and (aux.colors == 1).all()


@pytest.mark.parametrize("seed", range(4))
def test_linial_proper_and_small(seed):
    n = 2000
    links = gnp_links(n, 6 / n, np.random.default_rng(seed))
    ctx = make_context(build_identity(Network(n, links)), Params(), seed)
    V = np.arange(n)
    aux = lowdeg.linial_virtual(ctx, V)
    c = np.zeros(n, np.int64)
    c[V] = aux.colors
    assert (c[ctx.pu] != c[ctx.pv]).all()
    delta = int(ctx.H.pseudo_degree.max())
    assert aux.num_colors < n and aux.num_colors <= 4 * delta ** 4
    assert aux.history[0] == n and aux.history == sorted(aux.history, reverse=True)
    assert ctx.monitors.hard_violations() == {}


def test_linial_parameters():
    q, dg = lowdeg.linial_parameters(10 ** 6, 5)
    assert q ** (dg + 1) >= 10 ** 6 and q > 5 * dg and q * q < 10 ** 6
    assert lowdeg.linial_parameters(30, 10) is None


# --- finish ------------------------------------------------------------------------


def test_finish_single_vertex():
    ctx = ctx_for([(0, 1)], 2)
    ctx.colors[1] = 1
    V = np.array([0])
    keys = lowdeg.learn_palette(ctx, V, 1)
    fin = lowdeg.finish_components(ctx, V, keys, lowdeg.linial_virtual(ctx, V), iters=0)
    assert ctx.colors[0] == 2 and fin.component_sizes == [1]


@pytest.mark.parametrize("seed", range(4))
def test_finish_total_and_proper(seed):
    n = 800
    links = gnp_links(n, 8 / n, np.random.default_rng(seed))
    ctx = make_context(build_identity(Network(n, links)), Params(), seed)
    V = np.arange(n)
    dbar = int(ctx.H.degree.max())
    keys = lowdeg.learn_palette(ctx, V, dbar)
    fin = lowdeg.finish_components(ctx, V, keys, lowdeg.linial_virtual(ctx, V))
    assert verify_coloring(ctx.H, ctx.colors, require_total=True).ok
    assert fin.max_component <= max(dbar, 1) ** 2 * ctx.log2n
    assert ctx.monitors.hard_violations() == {}


# --- driver ---------------------------------------------------------------------------


def test_color_low_degree_identity_when_done():
    ctx = ctx_for([(0, 1)], 2)
    ctx.colors[:] = [1, 2]
    out = lowdeg.color_low_degree(ctx)
    assert out.colored == 0 and out.rounds == 0 and ctx.colors.tolist() == [1, 2]


@pytest.mark.parametrize("kind,params", [("gnp", {"n": 1200, "p": 0.01}), ("cycle", {"n": 500}),
                                         ("gnp", {"n": 300, "p": 0.05})])
def test_color_low_degree_end_to_end(kind, params):
    emb = generate_instance(kind, params, 2)
    ctx = make_context(emb, Params(fast_path=False), 2)
    out = lowdeg.color_low_degree(ctx)
    assert verify_coloring(ctx.H, ctx.colors, require_total=True).ok
    assert out.colored == emb.H.n and not out.fast_path
    assert ctx.monitors.violations.get("palette-search:invariant", 0) == 0
    assert ctx.monitors.hard_violations() == {}


def test_multigraph_low_degree():
    emb = multi_embedding(lambda a, b: (a * b) % 5 == 1, 60, 3)
    ctx = make_context(emb, Params(fast_path=False), 0)
    lowdeg.color_low_degree(ctx)
    assert verify_coloring(ctx.H, ctx.colors, require_total=True).ok


def test_kary_search_flag():
    emb = generate_instance("gnp", {"n": 500, "p": 0.02}, 0)
    ctx = make_context(emb, Params(kary_search=True, fast_path=False), 0)
    lowdeg.color_low_degree(ctx)
    assert verify_coloring(ctx.H, ctx.colors, require_total=True).ok
    assert ctx.monitors.hard_violations() == {}


@pytest.mark.parametrize("seed", range(3))
def test_fast_path_budget(seed):
    # the calibrated family: sparse G(n, p) with average degree in [1.5, 4]
    emb = generate_instance("gnp", {"n": 1500, "p": 2 / 1500}, seed)
    ctx = make_context(emb, Params(fast_path=True), seed)
    assert lowdeg.fast_path_applies(ctx)
    out = lowdeg.color_low_degree(ctx)
    assert out.fast_path and verify_coloring(ctx.H, ctx.colors, require_total=True).ok
    assert out.rounds <= out.fast_budget
    assert lowdeg.fast_path_budget(1, 1, 2, 16, c=1.0) == pytest.approx((2 / 4 + 1) * math.log2(4))
