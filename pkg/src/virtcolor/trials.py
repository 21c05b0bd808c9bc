"""Randomized coloring primitives shared by the dense and low-degree phases.

All primitives work on a vertex subset ``S`` and a per-vertex color space,
commit colors through :meth:`Ctx.assign` (which re-checks range and
freshness) and charge their communication through the context.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .context import Ctx, PhaseFailure
from .multigraph import UNCOLORED
from . import sketches

STRIDE = np.int64(1 << 32)


class ColorSpace:
    """Per-vertex interval ``[lo, hi]`` minus a per-group excluded color set.

    Vertices sharing a group (an almost-clique) share the exclusions, which
    is how clique palettes ``L(K) ∩ [lo, hi]`` are represented.  ``count``
    and ``select`` give rank/select access.
    """

    def __init__(self, vertices, lo, hi, group=None, excluded: dict[int, np.ndarray] | None = None):
        self.vertices = np.asarray(vertices, dtype=np.int64)
        k = self.vertices.size
        self.lo = np.broadcast_to(np.asarray(lo, dtype=np.int64), (k,)).copy()
        self.hi = np.broadcast_to(np.asarray(hi, dtype=np.int64), (k,)).copy()
        if group is None:
            group = np.full(k, -1, dtype=np.int64)
        self.group = np.asarray(group, dtype=np.int64)
        keys = []
        for g, cols in (excluded or {}).items():
            c = np.unique(np.asarray(cols, dtype=np.int64))
            c = c[c > 0]
            keys.append(np.int64(g + 1) * STRIDE + c)
        self._keys = np.sort(np.concatenate(keys)) if keys else np.zeros(0, np.int64)

    def _excl_upto(self, c: np.ndarray) -> np.ndarray:
        """Excluded colors of each vertex's group in [lo, c]."""
        g = (self.group + 1) * STRIDE
        return (np.searchsorted(self._keys, g + c, side="right")
                - np.searchsorted(self._keys, g + self.lo, side="left"))

    def count(self) -> np.ndarray:
        width = np.maximum(self.hi - self.lo + 1, 0)
        return np.maximum(width - np.where(width > 0, self._excl_upto(self.hi), 0), 0)

    def select(self, j: np.ndarray) -> np.ndarray:
        """0-based j-th allowed color of every vertex (caller keeps j < count)."""
        j = np.asarray(j, dtype=np.int64)
        c = self.lo + j
        for _ in range(self._keys.size + 2):
            nc = self.lo + j + self._excl_upto(c)
            if np.array_equal(nc, c):
                break
            c = nc
        return c

    def contains(self, colors: np.ndarray) -> np.ndarray:
        colors = np.asarray(colors, dtype=np.int64)
        inside = (colors >= self.lo) & (colors <= self.hi)
        g = (self.group + 1) * STRIDE + colors
        pos = np.searchsorted(self._keys, g)
        hit = np.zeros(colors.size, dtype=bool)
        if self._keys.size:
            pos = np.minimum(pos, self._keys.size - 1)
            hit = self._keys[pos] == g
        return inside & ~hit

    def subset(self, idx: np.ndarray) -> "ColorSpace":
        out = ColorSpace.__new__(ColorSpace)
        out.vertices = self.vertices[idx]
        out.lo, out.hi, out.group = self.lo[idx], self.hi[idx], self.group[idx]
        out._keys = self._keys
        return out


def interval_space(ctx: Ctx, S, lo, hi) -> ColorSpace:
    S = np.asarray(S, dtype=np.int64)
    hi = np.minimum(np.broadcast_to(np.asarray(hi, np.int64), S.shape), ctx.H.pseudo_degree[S] + 1)
    return ColorSpace(S, lo, hi)


def used_colors(ctx: Ctx, members: np.ndarray) -> np.ndarray:
    c = ctx.colors[members]
    return np.unique(c[c != UNCOLORED])


def clique_space(ctx: Ctx, S, clique_of: np.ndarray, cliques: list[np.ndarray], lo, cap) -> ColorSpace:
    """``C(v) = L(K_v) ∩ [lo, min(cap_v, deg(v)+1)]``."""
    S = np.asarray(S, dtype=np.int64)
    g = clique_of[S]
    excl = {int(k): used_colors(ctx, cliques[k]) for k in np.unique(g).tolist()}
    hi = np.minimum(np.broadcast_to(np.asarray(cap, np.int64), S.shape), ctx.H.pseudo_degree[S] + 1)
    return ColorSpace(S, lo, hi, g, excl)


# ---------------------------------------------------------------------------
# neighborhood helpers


def active_edges(ctx: Ctx, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distinct pairs with both endpoints in ``mask``."""
    both = mask[ctx.pu] & mask[ctx.pv]
    return ctx.pu[both], ctx.pv[both]


def uncolored_degree_within(ctx: Ctx, mask: np.ndarray) -> np.ndarray:
    """Pseudo-degree towards vertices in ``mask`` (edges with multiplicity)."""
    w = ctx.H.nbr_mult * mask[ctx.H.nbr]
    return np.bincount(ctx.src, weights=w, minlength=ctx.n).astype(np.int64)


def blocked_by_colored(ctx: Ctx, vertices: np.ndarray, colors: np.ndarray) -> np.ndarray:
    """True where a colored neighbor of ``vertices[k]`` already holds ``colors[k]``."""
    vertices = np.asarray(vertices, np.int64)
    if vertices.size == 0:
        return np.zeros(0, dtype=bool)
    key = vertices * STRIDE + colors
    nb_col = ctx.colors[ctx.H.nbr]
    has = nb_col != UNCOLORED
    used = np.unique(ctx.src[has] * STRIDE + nb_col[has])
    if used.size == 0:
        return np.zeros(vertices.size, dtype=bool)
    pos = np.minimum(np.searchsorted(used, key), used.size - 1)
    return used[pos] == key


# ---------------------------------------------------------------------------
# random color trial


def random_color_trial(ctx: Ctx, space: ColorSpace, phase: str, rng: np.random.Generator) -> int:
    """Each vertex tries a uniform color of its space; symmetric conflict drop."""
    S = space.vertices
    cnt = space.count()
    live = (cnt > 0) & (ctx.colors[S] == UNCOLORED)
    if not live.any():
        return 0
    j = (rng.random(S.size) * np.maximum(cnt, 1)).astype(np.int64)
    try_c = np.where(live, space.select(np.minimum(j, np.maximum(cnt - 1, 0))), 0)
    trial = np.zeros(ctx.n, dtype=np.int64)
    trial[S] = try_c
    clash = (trial[ctx.pu] == trial[ctx.pv]) & (trial[ctx.pu] > 0)
    lose = np.zeros(ctx.n, dtype=bool)
    lose[ctx.pu[clash]] = True
    lose[ctx.pv[clash]] = True
    keep = live & ~lose[S] & ~blocked_by_colored(ctx, S, try_c)
    mask = np.zeros(ctx.n, dtype=bool)
    mask[S[live]] = True
    ctx.vround(mask, ctx.color_bits, 1, kind=phase + ":rct")
    kidx = np.flatnonzero(keep)
    ctx.assign(S[kidx], try_c[kidx], phase, allowed=space.subset(kidx).contains(try_c[kidx]))
    return int(keep.sum())


# ---------------------------------------------------------------------------
# multicolor trial


@dataclass
class TrialResult:
    colored: int
    failed: np.ndarray
    phases: int = 0

    @property
    def ok(self) -> bool:
        return self.failed.size == 0


def _distinct_samples(rng: np.random.Generator, counts: np.ndarray, want: np.ndarray):
    """Uniform ``want[i]``-subsets of ``range(counts[i])``; returns (owner, j)."""
    want = np.minimum(want, counts)
    small = counts <= 4 * want
    own_parts, j_parts = [], []
    if small.any():
        idx = np.flatnonzero(small)
        o = np.repeat(idx, counts[idx])
        starts = np.repeat(np.cumsum(counts[idx]) - counts[idx], counts[idx])
        jj = np.arange(o.size) - starts
        order = np.lexsort((rng.random(o.size), o))
        o, jj = o[order], jj[order]
        first = np.repeat(np.cumsum(counts[idx]) - counts[idx], counts[idx])
        rank = np.arange(o.size) - first
        take = rank < want[o]
        own_parts.append(o[take])
        j_parts.append(jj[take])
    if (~small).any():
        idx = np.flatnonzero(~small)
        o = np.repeat(idx, want[idx])
        jj = (rng.random(o.size) * counts[o]).astype(np.int64)
        for _ in range(64):
            key = np.unique(o * STRIDE + jj)
            o, jj = key // STRIDE, key % STRIDE
            have = np.bincount(o, minlength=counts.size)
            miss = want - have
            miss[small] = 0
            if not (miss > 0).any():
                break
            extra = np.repeat(np.arange(counts.size), np.maximum(miss, 0))
            o = np.concatenate([o, extra])
            jj = np.concatenate([jj, (rng.random(extra.size) * counts[extra]).astype(np.int64)])
        own_parts.append(o)
        j_parts.append(jj)
    return np.concatenate(own_parts), np.concatenate(j_parts)


def multicolor_trial(ctx: Ctx, space: ColorSpace, phase: str, rng: np.random.Generator,
                     max_phases: int | None = None, cap: int | None = None) -> TrialResult:
    """Doubling multi-candidate trial.

    In phase ``j`` each uncolored vertex draws ``min(2^j, cap)`` distinct
    colors of its space, drops those held by colored neighbors or drawn by
    an uncolored neighbor, and keeps the smallest survivor.
    """
    max_phases = max_phases or ctx.params.mct_phases
    cap = cap or ctx.params.mct_cap
    S = space.vertices
    total = 0
    for j in range(max_phases):
        live_idx = np.flatnonzero(ctx.colors[S] == UNCOLORED)
        if live_idx.size == 0:
            return TrialResult(total, np.zeros(0, np.int64), j)
        sub = space.subset(live_idx)
        V = sub.vertices
        cnt = sub.count()
        k = np.full(V.size, min(2 ** j, cap), dtype=np.int64)
        own, jj = _distinct_samples(rng, cnt, k)
        if own.size == 0:
            break
        lo_sel = ColorSpace.__new__(ColorSpace)
        lo_sel.vertices, lo_sel.lo, lo_sel.hi = V[own], sub.lo[own], sub.hi[own]
        lo_sel.group, lo_sel._keys = sub.group[own], sub._keys
        col = lo_sel.select(jj)
        cv = V[own]
        # candidates claimed by uncolored neighbors in this phase
        mask = np.zeros(ctx.n, dtype=bool)
        mask[V] = True
        eu, ev = active_edges(ctx, mask)
        order = np.argsort(cv, kind="stable")
        cv, col = cv[order], col[order]
        ptr = np.searchsorted(cv, np.arange(ctx.n + 1))
        claimed = []
        for a, b in ((eu, ev), (ev, eu)):
            if a.size == 0:
                continue
            ln = ptr[a + 1] - ptr[a]
            rep_dst = np.repeat(b, ln)
            starts = np.repeat(ptr[a], ln)
            offs = np.arange(rep_dst.size) - np.repeat(np.cumsum(ln) - ln, ln)
            claimed.append(rep_dst * STRIDE + col[starts + offs])
        key = cv * STRIDE + col
        bad = blocked_by_colored(ctx, cv, col)
        if claimed:
            cl = np.unique(np.concatenate(claimed))
            pos = np.minimum(np.searchsorted(cl, key), max(cl.size - 1, 0))
            if cl.size:
                bad |= cl[pos] == key
        good = ~bad
        best = np.full(ctx.n, np.iinfo(np.int64).max, dtype=np.int64)
        np.minimum.at(best, cv[good], col[good])
        winners = V[best[V] < np.iinfo(np.int64).max]
        ctx.vround(mask, int(k.max()) * ctx.color_bits, int(k.max()), kind=phase + ":mct")
        where = np.full(ctx.n, -1, dtype=np.int64)
        where[V] = np.arange(V.size)
        allowed = sub.subset(where[winners]).contains(best[winners])
        ctx.assign(winners, best[winners], phase, allowed=allowed)
        total += winners.size
    failed = S[ctx.colors[S] == UNCOLORED]
    return TrialResult(total, failed, max_phases)


# ---------------------------------------------------------------------------
# clique-palette sampler


@dataclass
class CliqueSampler:
    """Hash-thinned uniform sampler over ``L(K) ∖ ψ(E_v) ∖ [reserved] ∩ [deg(v)+1]``.

    Each vertex hashes the colors of its range with a seed derived from the
    clique's shared seed for the iteration; colors surviving the threshold
    are checked against the clique's used-color bitmap and the colors of
    external neighbors, and one survivor is returned uniformly.  Colors in
    ``[reserved]`` are never scanned, so they can never be returned.
    """

    ctx: Ctx
    clique_of: np.ndarray
    cliques: list[np.ndarray]
    reserved: int
    cap: np.ndarray  # per-clique Δ_K + 1 (or Δ_{I_K} + 1)
    tag: str = "cliquepal"

    def blocked_lists(self, V: np.ndarray):
        ctx = self.ctx
        parts_o, parts_c = [], []
        g = self.clique_of[V]
        for k in np.unique(g).tolist():
            used = used_colors(ctx, self.cliques[k])
            idx = np.flatnonzero(g == k)
            parts_o.append(np.repeat(idx, used.size))
            parts_c.append(np.tile(used, idx.size))
        # external neighbors' colors
        pos = np.full(ctx.n, -1, dtype=np.int64)
        pos[V] = np.arange(V.size)
        src, nb = ctx.src, ctx.H.nbr
        sel = (pos[src] >= 0) & (ctx.colors[nb] != UNCOLORED) & (self.clique_of[nb] != self.clique_of[src])
        parts_o.append(pos[src[sel]])
        parts_c.append(ctx.colors[nb[sel]])
        o = np.concatenate(parts_o)
        c = np.concatenate(parts_c)
        key = np.unique(o * STRIDE + c)
        o, c = key // STRIDE, key % STRIDE
        ptr = np.searchsorted(o, np.arange(V.size + 1))
        return ptr, c

    def ranges(self, V: np.ndarray):
        lo = np.full(V.size, self.reserved + 1, dtype=np.int64)
        hi = np.minimum(self.cap[self.clique_of[V]], self.ctx.H.pseudo_degree[V] + 1)
        return lo, hi

    def thresholds(self, V: np.ndarray, lo, hi, ptr) -> np.ndarray:
        L = self.ctx.params.sampler_c * self.ctx.logn
        width = np.maximum(hi - lo + 1 - np.diff(ptr), 1).astype(np.float64)
        p = np.minimum(1.0, L / width)
        th = np.where(p >= 1.0, np.float64(2 ** 64 - 1), np.floor(p * 2.0 ** 64))
        out = np.empty(V.size, dtype=np.uint64)
        full = th >= 2.0 ** 64 - 1
        out[full] = np.uint64(0xFFFFFFFFFFFFFFFF)
        out[~full] = th[~full].astype(np.uint64)
        return out

    def sample(self, V: np.ndarray, iteration: int, charge: bool = True) -> np.ndarray:
        """One draw per vertex of ``V``; 0 marks Fail."""
        V = np.asarray(V, dtype=np.int64)
        if V.size == 0:
            return np.zeros(0, np.int64)
        ptr, blk = self.blocked_lists(V)
        lo, hi = self.ranges(V)
        th = self.thresholds(V, lo, hi, ptr)
        out = np.zeros(V.size, dtype=np.int64)
        # one shared seed per clique and iteration; vertices derive their own hash
        g = self.clique_of[V]
        for k in np.unique(g).tolist():
            idx = np.flatnonzero(g == k)
            seed = self.ctx.seed_for(self.tag, k, iteration)
            sub_ptr = np.concatenate([[0], np.cumsum(ptr[idx + 1] - ptr[idx])])
            sub_blk = np.concatenate([blk[ptr[i]:ptr[i + 1]] for i in idx]) if idx.size else blk[:0]
            res, _ = sketches.cliquepal_scan(seed, V[idx], lo[idx], hi[idx], th[idx], sub_ptr, sub_blk)
            out[idx] = res
        if charge:
            mask = np.zeros(self.ctx.n, dtype=bool)
            mask[V] = True
            bits = int(math.ceil(self.ctx.params.sampler_c * self.ctx.logn)) + self.ctx.color_bits
            self.ctx.clique_query(mask, bits, kind=self.tag)
        self.ctx.monitors.check(f"{self.tag}:no-reserved", (out == 0) | (out > self.reserved))
        return out


def sample_color_cliquepal(sampler: CliqueSampler, v: int, iteration: int) -> int:
    """Single-vertex form of the sampler; 0 means Fail."""
    return int(sampler.sample(np.asarray([v]), iteration, charge=False)[0])


# ---------------------------------------------------------------------------
# slice color


@dataclass
class LayerAssignment:
    layer: np.ndarray          # per vertex: 0 = not in S or colored, i >= 1 layer index
    num_layers: int
    cap: int
    max_load: int = 0

    def members(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.layer == i)


def slice_color(ctx: Ctx, S: np.ndarray, sample: Callable[[np.ndarray, int], np.ndarray],
                phase: str, iters: int | None = None, layer_cap: int | None = None) -> LayerAssignment:
    """Sampler-driven trials that freeze vertices into layers.

    At iteration ``i`` every active vertex draws one sampler color and keeps
    it unless a neighbor drew the same color; then every still-active vertex
    whose uncolored degree towards active vertices is at most ``layer_cap``
    freezes into layer ``i``.  Leftovers freeze into the last layer.  The
    invariant ``|N(v) ∩ L_{>=i}| <= layer_cap`` for ``v`` in layer ``i`` is
    checked.
    """
    iters = iters or ctx.params.slice_iters
    cap = layer_cap if layer_cap is not None else max(1, int(math.ceil(ctx.params.layer_cap_c * ctx.logn)))
    S = np.asarray(S, dtype=np.int64)
    layer = np.zeros(ctx.n, dtype=np.int64)
    active = np.zeros(ctx.n, dtype=bool)
    active[S[ctx.colors[S] == UNCOLORED]] = True
    i = 0
    for i in range(1, iters + 1):
        if not active.any():
            i -= 1
            break
        V = np.flatnonzero(active)
        c = sample(V, i)
        trial = np.zeros(ctx.n, dtype=np.int64)
        trial[V] = c
        clash = (trial[ctx.pu] == trial[ctx.pv]) & (trial[ctx.pu] > 0)
        lose = np.zeros(ctx.n, dtype=bool)
        lose[ctx.pu[clash]] = True
        lose[ctx.pv[clash]] = True
        ok = (c > 0) & ~lose[V] & ~blocked_by_colored(ctx, V, c)
        ctx.vround(active, ctx.color_bits, 1, kind=phase + ":slice-trial")
        ctx.assign(V[ok], c[ok], phase)
        active[V[ok]] = False
        if not active.any():
            break
        deg_act = uncolored_degree_within(ctx, active)
        ctx.vround(active, ctx.count_bits, ctx.count_bits, kind=phase + ":slice-degree")
        freeze = active & (deg_act <= cap)
        layer[freeze] = i
        active &= ~freeze
    if active.any():
        i = max(i, 1) + (1 if (layer == max(i, 1)).any() else 0)
        layer[active] = i
    num = int(layer.max(initial=0))
    # invariant: for v in layer i, neighbors in layers >= i
    max_load = 0
    ok = np.ones(ctx.n, dtype=bool)
    if num:
        src, nb = ctx.src, ctx.H.nbr
        lv, ln = layer[src], layer[nb]
        w = ctx.H.nbr_mult * ((lv > 0) & (ln >= lv) & (ctx.colors[nb] == UNCOLORED))
        load = np.bincount(src, weights=w, minlength=ctx.n).astype(np.int64)
        inl = layer > 0
        max_load = int(load[inl].max(initial=0))
        ok = load[inl] <= cap
        ctx.monitors.extreme(phase + ":layer-load", load[inl])
    ctx.monitors.check(phase + ":layer-invariant", ok, soft=True)
    return LayerAssignment(layer, num, cap, max_load)


# ---------------------------------------------------------------------------
# clique-palette query


def query_clique_palette(ctx: Ctx, K: np.ndarray, cap: int, a, b, mode: str = "count",
                         index=None, use: str = "palette") -> np.ndarray:
    """Leader-answered rank/select on ``C ∩ [a_v, b_v]`` for every v in K.

    ``use='palette'`` takes ``C = L(K) = [cap] ∖ ψ(K)``; ``use='used'`` takes
    ``C = ψ(K)``.  Select replies -1 when the index is out of range.
    """
    K = np.asarray(K, dtype=np.int64)
    a = np.broadcast_to(np.asarray(a, np.int64), K.shape)
    b = np.broadcast_to(np.asarray(b, np.int64), K.shape)
    if (a < 1).any() or (b > cap).any() or (a > b).any():
        raise ValueError("need 1 <= a_v <= b_v <= cap")
    used = used_colors(ctx, K)
    used_cap = used[used <= cap]
    if use == "palette":
        space = ColorSpace(K, a, b, np.zeros(K.size, np.int64), {0: used_cap})
    elif use == "used":
        space = None
    else:
        raise ValueError("use must be 'palette' or 'used'")
    mask = np.zeros(ctx.n, dtype=bool)
    mask[K] = True
    steps = max(1, int(math.ceil(math.log2(cap + 1))))
    for _ in range(steps if mode == "select" else 1):
        ctx.clique_query(mask, 2 * ctx.color_bits + ctx.count_bits, kind="clique-palette-query")
    if use == "used":
        lo_i = np.searchsorted(used_cap, a, side="left")
        hi_i = np.searchsorted(used_cap, b, side="right")
        cnt = hi_i - lo_i
        if mode == "count":
            return cnt
        idx = np.broadcast_to(np.asarray(index, np.int64), K.shape)
        ok = (idx >= 1) & (idx <= cnt)
        out = np.full(K.size, -1, dtype=np.int64)
        out[ok] = used_cap[lo_i[ok] + idx[ok] - 1]
        return out
    cnt = space.count()
    if mode == "count":
        return cnt
    idx = np.broadcast_to(np.asarray(index, np.int64), K.shape)
    ok = (idx >= 1) & (idx <= cnt)
    out = np.full(K.size, -1, dtype=np.int64)
    if ok.any():
        out[ok] = space.subset(np.flatnonzero(ok)).select(idx[ok] - 1)
    return out
