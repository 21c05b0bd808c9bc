"""Coloring the low-degree part.

Vertices learn about their palettes only through counts aggregated on their
support trees: "how many of my incident edges go to neighbors colored inside
this color interval".  Nested interval splitting on such counts gives both a
uniform free-color sampler and a way to discover several free colors at once.
On top of that sit the degree reduction, palette learning, a Linial-style
auxiliary coloring, shattering, and a deterministic finisher that walks the
auxiliary color classes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import calibration
from .context import Ctx, Monitors, PhaseFailure
from .multigraph import UNCOLORED, MultiGraph
from .netsim import ceil_log2
from .trials import STRIDE, active_edges, blocked_by_colored, uncolored_degree_within

# The fast-path budget constant is measured by `virtcolor calibrate`; see
# ``calibration.DEFAULTS``.
FAST_PATH_DEGREE_C = 3.0  # small-degree variant applies when Δ ≤ this · log n / log log n


class _ColoredIndex:
    """Edges (with multiplicity) from each vertex to colored neighbors, by color."""

    def __init__(self, H: MultiGraph, colors: np.ndarray, owners: np.ndarray | None = None):
        src = np.repeat(np.arange(H.n), H.degree)
        c = colors[H.nbr]
        sel = c != UNCOLORED
        if owners is not None:
            m = np.zeros(H.n, dtype=bool)
            m[owners] = True
            sel &= m[src]
        key = src[sel] * STRIDE + c[sel]
        order = np.argsort(key, kind="stable")
        self.key = key[order]
        self.cum = np.concatenate([[0], np.cumsum(H.nbr_mult[sel][order])])

    def count(self, owner, a, b) -> np.ndarray:
        """Colored edges of ``owner`` with color in ``[a, b]`` (0 when b < a)."""
        owner = np.asarray(owner, np.int64)
        lo = np.searchsorted(self.key, owner * STRIDE + a, side="left")
        hi = np.searchsorted(self.key, owner * STRIDE + b, side="right")
        return np.where(np.asarray(b) >= np.asarray(a), self.cum[hi] - self.cum[lo], 0)


def _keys_in(keys: np.ndarray, owner, a, b) -> np.ndarray:
    owner = np.asarray(owner, np.int64)
    return (np.searchsorted(keys, owner * STRIDE + b, side="right")
            - np.searchsorted(keys, owner * STRIDE + a, side="left"))


def uncolored_pseudo_degree(ctx: Ctx) -> np.ndarray:
    return uncolored_degree_within(ctx, ctx.colors == UNCOLORED)


def distinct_degree_within(ctx: Ctx, mask: np.ndarray) -> np.ndarray:
    """Number of distinct neighbors inside ``mask``."""
    return np.bincount(ctx.src, weights=mask[ctx.H.nbr], minlength=ctx.n).astype(np.int64)


def _vmask(n: int, V) -> np.ndarray:
    m = np.zeros(n, dtype=bool)
    m[np.asarray(V, dtype=np.int64)] = True
    return m


# ---------------------------------------------------------------------------
# palette search


def palette_search(owner, top, x, index: _ColoredIndex, arity=2, monitors: Monitors | None = None,
                   on_step=None) -> tuple[np.ndarray, int]:
    """The ``x``-th free color of ``[1, top]`` for every owner.

    Each step cuts the current interval into ``arity`` consecutive parts,
    asks for the colored-edge count of each, and descends into the first
    part whose free room reaches ``x``, reducing ``x`` by the free room of
    the parts skipped.  With ``x ≤ deg_ψ + 1`` the walk always ends on a
    free color, and distinct ``x`` end on distinct colors.
    """
    owner = np.asarray(owner, np.int64)
    lo = np.ones(owner.size, dtype=np.int64)
    hi = np.asarray(top, np.int64).copy()
    x = np.asarray(x, np.int64).copy()
    k_all = np.broadcast_to(np.asarray(arity, np.int64), owner.shape)
    steps = 0
    while True:
        size = hi - lo + 1
        q = index.count(owner, lo, hi)
        if monitors is not None:
            monitors.check("palette-search:invariant", (size >= x + q) & (x >= 1))
        act = np.flatnonzero(size > 1)
        if act.size == 0:
            return lo, steps
        steps += 1
        if on_step is not None:
            on_step(act, k_all[act])
        o, a, b, xx, k = owner[act], lo[act], hi[act], x[act], k_all[act]
        part = -(-(b - a + 1) // k)
        start = a.copy()
        done = np.zeros(act.size, dtype=bool)
        for _ in range(int(k.max())):
            end = np.minimum(start + part - 1, b)
            free = end - start + 1 - index.count(o, start, end)
            take = ~done & ((free >= xx) | (end >= b))
            lo[act[take]] = start[take]
            hi[act[take]] = end[take]
            done |= take
            skip = ~done
            xx = np.where(skip, xx - free, xx)
            start = np.where(skip, end + 1, start)
            if done.all():
                break
        x[act] = xx


def _arity(H: MultiGraph, V: np.ndarray, n: int, kary: bool) -> np.ndarray:
    if not kary:
        return np.full(V.size, 2, dtype=np.int64)
    d = np.maximum(H.pseudo_degree[V], 2)
    return np.maximum(2, np.floor(math.log(max(n, 2)) / np.log(d))).astype(np.int64)


def free_color_image(H: MultiGraph, colors, v: int, arity: int = 2) -> list[int]:
    """Colors reached by every start rank ``x ∈ [deg_ψ(v)+1]`` (exhaustive)."""
    colors = np.asarray(colors, np.int64)
    if colors[v] != UNCOLORED:
        raise ValueError("vertex is colored")
    s, e = H.indptr[v], H.indptr[v + 1]
    dpsi = int((H.nbr_mult[s:e] * (colors[H.nbr[s:e]] == UNCOLORED)).sum())
    xs = np.arange(1, dpsi + 2)
    idx = _ColoredIndex(H, colors, np.array([v]))
    out, _ = palette_search(np.full(xs.size, v), np.full(xs.size, H.pseudo_degree[v] + 1), xs, idx, arity)
    return out.tolist()


def sample_free_color(H: MultiGraph, colors, v: int, rng: np.random.Generator | None = None,
                      x: int | None = None, arity: int = 2, monitors: Monitors | None = None,
                      size: int | None = None):
    """One free color of ``v``; uniform over a ``deg_ψ(v)+1``-sized image.

    With ``size`` the search runs for that many independent ranks at once
    and an array of colors comes back.
    """
    colors = np.asarray(colors, np.int64)
    if colors[v] != UNCOLORED:
        raise ValueError("vertex is colored")
    s, e = H.indptr[v], H.indptr[v + 1]
    dpsi = int((H.nbr_mult[s:e] * (colors[H.nbr[s:e]] == UNCOLORED)).sum())
    if x is None:
        rng = rng or np.random.default_rng()
        xs = rng.integers(1, dpsi + 2, size=1 if size is None else size)
    else:
        xs = np.full(1 if size is None else size, x, dtype=np.int64)
    if ((xs < 1) | (xs > dpsi + 1)).any():
        raise ValueError("x must lie in [1, deg_psi + 1]")
    idx = _ColoredIndex(H, colors, np.array([v]))
    out, _ = palette_search(np.full(xs.size, v), np.full(xs.size, H.pseudo_degree[v] + 1), xs,
                            idx, arity, monitors)
    return out if size is not None else int(out[0])


def sample_free_colors(ctx: Ctx, V: np.ndarray, rng: np.random.Generator, phase: str) -> np.ndarray:
    """Distributed sampler for every vertex of ``V`` at once."""
    V = np.asarray(V, np.int64)
    if V.size == 0:
        return np.zeros(0, np.int64)
    H = ctx.H
    dpsi = uncolored_pseudo_degree(ctx)[V]
    x = 1 + np.floor(rng.random(V.size) * (dpsi + 1)).astype(np.int64)
    k = _arity(H, V, ctx.n, ctx.params.kary_search)
    ctx.vround(_vmask(ctx.n, V), 1, ctx.count_bits, kind=phase + ":deg")

    def charge(act, ka):
        bits = np.zeros(ctx.n, dtype=np.int64)
        up = np.zeros(ctx.n, dtype=np.int64)
        bits[V[act]] = 2 * ctx.color_bits
        up[V[act]] = ka * ctx.count_bits
        ctx.engine.virtual_round(ctx.forest, bits, up, kind=phase + ":search")

    idx = _ColoredIndex(H, ctx.colors, V)
    out, _ = palette_search(V, H.pseudo_degree[V] + 1, x, idx, k, ctx.monitors, charge)
    return out


# ---------------------------------------------------------------------------
# degree reduction


@dataclass
class ReductionResult:
    parts: tuple[np.ndarray, np.ndarray]
    iterations: int
    colored: int
    part_max_degree: tuple[int, int] = (0, 0)


def low_degree_reduction(ctx: Ctx, V=None, iters: int | None = None,
                         phase: str = "low-reduction") -> ReductionResult:
    """Coin-flip trials with the sampler; higher ids win ties; then split by uncolored degree."""
    n = ctx.n
    within = np.ones(n, dtype=bool) if V is None else _vmask(n, V)
    U = np.flatnonzero(within & (ctx.colors == UNCOLORED))
    dbar = int(distinct_degree_within(ctx, _vmask(n, U))[U].max(initial=0))
    if iters is None:
        iters = max(1, math.ceil(ctx.params.reduction_iters_c * math.log2(dbar + 1)))
    colored = 0
    for it in range(iters):
        U = np.flatnonzero(within & (ctx.colors == UNCOLORED))
        if U.size == 0:
            break
        rng = ctx.rng(phase, it)
        A = U[rng.random(U.size) < 0.5]
        if A.size == 0:
            continue
        c = sample_free_colors(ctx, A, rng, phase)
        trial = np.zeros(n, dtype=np.int64)
        trial[A] = c
        same = (trial[ctx.pu] == trial[ctx.pv]) & (trial[ctx.pu] > 0)
        lose = np.zeros(n, dtype=bool)
        lose[ctx.pu[same]] = True  # pair_u < pair_v, so the lower id yields
        ctx.vround(_vmask(n, A), ctx.color_bits, 1, kind=phase + ":trial")
        keep = ~lose[A]
        ctx.assign(A[keep], c[keep], phase)
        colored += int(keep.sum())
    U = np.flatnonzero(within & (ctx.colors == UNCOLORED))
    dpsi = uncolored_pseudo_degree(ctx)
    small = dpsi[U] <= ctx.params.split_c * ctx.log2n
    V1, V2 = U[small], U[~small]
    degs = []
    for P in (V1, V2):
        d = distinct_degree_within(ctx, _vmask(n, P))[P]
        degs.append(int(d.max(initial=0)))
    ctx.monitors.sample("lowdeg:part-degree-ratio", [max(degs) / ctx.log2n])
    return ReductionResult((V1, V2), iters, colored, tuple(degs))


# ---------------------------------------------------------------------------
# palette learning


def _select_outside(keys: np.ndarray, owner, a, m) -> np.ndarray:
    """Smallest color c ≥ a with exactly m colors of [a, c] outside the owner's key set."""
    c = a + m - 1
    while True:
        nc = a + m - 1 + _keys_in(keys, owner, a, c)
        if np.array_equal(nc, c):
            return c
        c = nc


def grow_palette(ctx: Ctx, V: np.ndarray, dkeys: np.ndarray, want=None,
                 phase: str = "learn-palette", index: _ColoredIndex | None = None) -> np.ndarray:
    """New free colors outside the known set, as sorted ``vertex*STRIDE + color`` keys.

    Each vertex targets ``min(want, ⌈log n / log deg⌉)`` colors, where
    ``want`` defaults to ``deg_ψ − |D_v|``.  Ranges of ``[deg+1] ∖ D_v``
    carry a target count and are split in half; a half is kept when it is
    certain to hold part of the target.
    """
    V = np.asarray(V, np.int64)
    H = ctx.H
    if V.size == 0:
        return np.zeros(0, np.int64)
    index = index or _ColoredIndex(H, ctx.colors, V)
    dsz = _keys_in(dkeys, V, 1, H.pseudo_degree[V] + 1)
    dpsi = uncolored_pseudo_degree(ctx)[V]
    base = dpsi - dsz if want is None else np.broadcast_to(np.asarray(want, np.int64), V.shape)
    cap = np.ceil(ctx.logn / np.log(np.maximum(H.pseudo_degree[V], 2))).astype(np.int64)
    x = np.minimum(base, cap)
    mask = _vmask(ctx.n, V)
    down = np.zeros(ctx.n, dtype=np.int64)
    down[V] = dsz * ctx.color_bits + 1
    up = np.zeros(ctx.n, dtype=np.int64)
    up[V] = ctx.count_bits
    ctx.engine.virtual_round(ctx.forest, down, up, mask=mask, kind=phase + ":known")
    live = np.flatnonzero(x > 0)
    own, a, b, y = V[live], np.ones(live.size, np.int64), H.pseudo_degree[V[live]] + 1, x[live]
    xmax = np.zeros(ctx.n, dtype=np.int64)
    xmax[V] = np.maximum(x, 0)
    found = []
    while own.size:
        size = b - a + 1 - _keys_in(dkeys, own, a, b)
        q = index.count(own, a, b)
        ctx.monitors.check("grow-palette:range-target", (size - q >= y) & (y >= 1))
        per = np.bincount(own, minlength=ctx.n)
        ctx.monitors.check("grow-palette:message", per[own] <= xmax[own])
        down = per * (2 * ctx.color_bits + ctx.count_bits)
        ctx.engine.virtual_round(ctx.forest, down, per * ctx.count_bits, kind=phase + ":ranges")
        one = size <= 1
        if one.any():
            found.append(own[one] * STRIDE + _select_outside(dkeys, own[one], a[one], np.ones(int(one.sum()), np.int64)))
        keep = ~one
        own, a, b, y, size = own[keep], a[keep], b[keep], y[keep], size[keep]
        if own.size == 0:
            break
        m = -(-size // 2)
        c = _select_outside(dkeys, own, a, m)
        q1 = index.count(own, a, c)
        room = m - q1
        first = room >= y
        second = ~first & (q1 >= m)
        both = ~first & ~second
        no = [own[first], own[second], own[both], own[both]]
        na = [a[first], c[second] + 1, a[both], c[both] + 1]
        nb = [c[first], b[second], c[both], b[both]]
        ny = [y[first], y[second], room[both], y[both] - room[both]]
        own, a, b, y = (np.concatenate(z) for z in (no, na, nb, ny))
    return np.sort(np.concatenate(found)) if found else np.zeros(0, np.int64)


def learn_palette(ctx: Ctx, V: np.ndarray, dbar: int, phase: str = "learn-palette") -> np.ndarray:
    """Free-color lists with ``|D_v| ≥ min(deg_ψ(v), Δ̄) + 1``; returns sorted keys."""
    V = np.asarray(V, np.int64)
    H = ctx.H
    dkeys = np.zeros(0, np.int64)
    if V.size == 0:
        return dkeys
    dpsi = uncolored_pseudo_degree(ctx)[V]
    target = np.minimum(dpsi, dbar) + 1
    index = _ColoredIndex(H, ctx.colors, V)
    for _ in range(int(target.max()) + 1):
        have = _keys_in(dkeys, V, 1, H.pseudo_degree[V] + 1)
        need = target - have
        act = need > 0
        if not act.any():
            break
        # the guaranteed free room is deg_ψ + 1 − |D_v|, so asking for
        # the remaining need keeps every range target satisfiable
        new = grow_palette(ctx, V[act], dkeys, want=need[act], phase=phase, index=index)
        dkeys = np.union1d(dkeys, new)
    have = _keys_in(dkeys, V, 1, H.pseudo_degree[V] + 1)
    nb = distinct_degree_within(ctx, _vmask(ctx.n, V))[V]
    ctx.monitors.check("learn-palette:size", have >= np.minimum(nb, dbar) + 1)
    owners, cols = dkeys // STRIDE, dkeys % STRIDE
    ctx.monitors.check("learn-palette:free", ~blocked_by_colored(ctx, owners, cols)
                       & (cols >= 1) & (cols <= H.pseudo_degree[owners] + 1))
    return dkeys


def full_palette(ctx: Ctx, V: np.ndarray, phase: str = "fast-palette") -> np.ndarray:
    """Every free color of ``[deg+1]``, learned by collecting all neighbor colors at once."""
    V = np.asarray(V, np.int64)
    H = ctx.H
    if V.size == 0:
        return np.zeros(0, np.int64)
    colored_deg = H.pseudo_degree[V] - uncolored_pseudo_degree(ctx)[V]
    up = np.zeros(ctx.n, dtype=np.int64)
    up[V] = np.maximum(colored_deg, 1) * ctx.color_bits
    ctx.engine.tree_phase(ctx.forest, up, upward=True, kind=phase)
    own = np.repeat(V, H.pseudo_degree[V] + 1)
    starts = np.repeat(np.cumsum(H.pseudo_degree[V] + 1) - (H.pseudo_degree[V] + 1), H.pseudo_degree[V] + 1)
    cols = np.arange(own.size) - starts + 1
    free = ~blocked_by_colored(ctx, own, cols)
    return np.sort(own[free] * STRIDE + cols[free])


# ---------------------------------------------------------------------------
# auxiliary coloring


def _is_prime(q: int) -> bool:
    if q < 2:
        return False
    return all(q % p for p in range(2, math.isqrt(q) + 1))


def _next_prime(q: int) -> int:
    while not _is_prime(q):
        q += 1
    return q


def linial_parameters(m: int, delta: int) -> tuple[int, int] | None:
    """Field size and polynomial degree for one reduction step from ``m`` colors.

    Needs ``q^(deg+1) ≥ m`` (one polynomial per color) and ``q > Δ·deg``
    (some evaluation point separates a vertex from all its neighbors).
    Returns None when the step would not shrink the palette.
    """
    best = None
    for dg in range(1, 64):
        if best is not None and delta * dg + 1 >= best[0]:
            break
        q = _next_prime(max(delta * dg + 1, 2, math.ceil(m ** (1 / (dg + 1))) - 1))
        while q ** (dg + 1) < m:
            q = _next_prime(q + 1)
        if best is None or q < best[0]:
            best = (q, dg)
    if best is None or best[0] ** 2 >= m:
        return None
    return best


def _poly_values(cur: np.ndarray, q: int, dg: int) -> np.ndarray:
    """Row v: the polynomial with base-q digits of ``cur[v]-1`` evaluated at 0..q-1."""
    c = cur - 1
    digits = []
    for _ in range(dg + 1):
        digits.append(c % q)
        c = c // q
    pts = np.arange(q, dtype=np.int64)
    val = np.zeros((cur.size, q), dtype=np.int64)
    for d in reversed(digits):
        val = (val * pts[None, :] + d[:, None]) % q
    return val


@dataclass
class AuxColoring:
    colors: np.ndarray
    num_colors: int
    phases: int
    history: list[int] = field(default_factory=list)


def linial_virtual(ctx: Ctx, V: np.ndarray, phase: str = "linial") -> AuxColoring:
    """Proper auxiliary coloring of ``H[V]`` starting from ids.

    Every step maps a color to the graph of a low-degree polynomial over a
    prime field; a vertex then binary-searches its evaluation points for one
    where no neighbor's polynomial agrees, using aggregated agreement counts.
    """
    V = np.asarray(V, np.int64)
    n = ctx.n
    cur = V + 1
    mask = _vmask(n, V)
    eu, ev = active_edges(ctx, mask)
    if V.size == 0 or eu.size == 0:
        return AuxColoring(np.ones(V.size, dtype=np.int64), 1 if V.size else 0, 0)
    pos = np.full(n, -1, dtype=np.int64)
    pos[V] = np.arange(V.size)
    both = mask[ctx.pu] & mask[ctx.pv]
    mult = ctx.H.pair_m[both]
    iu, iv = pos[eu], pos[ev]
    delta = int(np.bincount(np.concatenate([iu, iv]), weights=np.concatenate([mult, mult]),
                            minlength=V.size).max())
    E = iu.size
    inc = coo_matrix((np.concatenate([mult, mult]), (np.concatenate([iu, iv]), np.tile(np.arange(E), 2))),
                     shape=(V.size, E)).tocsr()
    m = n
    history = [m]
    phases = 0
    while True:
        par = linial_parameters(m, delta)
        if par is None:
            break
        q, dg = par
        for attempt in range(2):
            P = _poly_values(cur, q, dg)
            agree = (P[iu] == P[iv]).astype(np.int64)
            cnt = np.asarray(inc @ agree)
            pre = np.concatenate([np.zeros((V.size, 1), np.int64), np.cumsum(cnt, axis=1)], axis=1)
            lo = np.zeros(V.size, dtype=np.int64)
            hi = np.full(V.size, q, dtype=np.int64)  # half-open [lo, hi)
            ctx.vround(mask, max(1, ceil_log2(m + 1)), 1, kind=phase + ":color")
            rows = np.arange(V.size)
            while (hi - lo > 1).any():
                mid = lo + -(-(hi - lo) // 2)
                c1 = pre[rows, mid] - pre[rows, lo]
                go = c1 < (mid - lo)
                act = hi - lo > 1
                hi = np.where(act & go, mid, hi)
                lo = np.where(act & ~go, mid, lo)
                ctx.vround(mask, 2 * max(1, ceil_log2(q + 1)), ctx.count_bits, kind=phase + ":search")
            if (cnt[rows, lo] == 0).all():
                break
            if attempt == 1:
                raise PhaseFailure(phase, "set system does not separate neighbors")
            q = _next_prime(q + 1)
        cur = lo * q + P[rows, lo] + 1
        ctx.monitors.check(phase + ":proper", cur[iu] != cur[iv])
        m = q * q
        history.append(m)
        phases += 1
    ctx.monitors.extreme(phase + ":colors", [m])
    if delta:
        ctx.monitors.sample(phase + ":colors-per-delta4", [m / delta ** 4])
    return AuxColoring(cur, m, phases, history)


# ---------------------------------------------------------------------------
# shattering and the deterministic finish


@dataclass
class FinishResult:
    shatter_iters: int
    shattered: int
    component_sizes: list[int]
    classes: int
    dbar: int

    @property
    def max_component(self) -> int:
        return max(self.component_sizes, default=0)


def _free_list(ctx: Ctx, dkeys: np.ndarray, live: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    owners, cols = dkeys // STRIDE, dkeys % STRIDE
    sel = live[owners]
    owners, cols = owners[sel], cols[sel]
    ok = ~blocked_by_colored(ctx, owners, cols)
    return owners[ok], cols[ok]


def finish_components(ctx: Ctx, V: np.ndarray, dkeys: np.ndarray, aux: AuxColoring,
                      phase: str = "finish", iters: int | None = None) -> FinishResult:
    """Shatter with list trials, then color the leftover components class by class."""
    V = np.asarray(V, np.int64)
    n = ctx.n
    vm = _vmask(n, V)
    dbar = int(distinct_degree_within(ctx, vm)[V].max(initial=0))
    if iters is None:
        iters = math.ceil(ctx.params.shatter_c * math.log2(dbar + 1))
    list_len = np.bincount(dkeys // STRIDE, minlength=n)
    shattered = 0
    for it in range(iters):
        live = vm & (ctx.colors == UNCOLORED)
        if not live.any():
            break
        owners, cols = _free_list(ctx, dkeys, live)
        rng = ctx.rng(phase, it)
        order = np.lexsort((rng.random(owners.size), owners))
        owners, cols = owners[order], cols[order]
        first = np.ones(owners.size, dtype=bool)
        first[1:] = owners[1:] != owners[:-1]
        T, C = owners[first], cols[first]
        trial = np.zeros(n, dtype=np.int64)
        trial[T] = C
        clash = (trial[ctx.pu] == trial[ctx.pv]) & (trial[ctx.pu] > 0)
        lose = np.zeros(n, dtype=bool)
        lose[ctx.pu[clash]] = True
        lose[ctx.pv[clash]] = True
        up = np.where(live, list_len, 0)
        ctx.engine.virtual_round(ctx.forest, np.where(live, ctx.color_bits, 0), up, kind=phase + ":shatter")
        keep = ~lose[T]
        ctx.assign(T[keep], C[keep], phase)
        shattered += int(keep.sum())
    live = vm & (ctx.colors == UNCOLORED)
    R = np.flatnonzero(live)
    sizes: list[int] = []
    if R.size:
        eu, ev = active_edges(ctx, live)
        pos = np.full(n, -1, dtype=np.int64)
        pos[R] = np.arange(R.size)
        g = coo_matrix((np.ones(eu.size), (pos[eu], pos[ev])), shape=(R.size, R.size))
        _, lab = connected_components(g, directed=False)
        sizes = sorted(np.bincount(lab).tolist(), reverse=True)
        bound = max(dbar, 1) ** 2 * ctx.log2n
        ctx.monitors.sample("shatter:component-ratio", [sizes[0] / bound])
        ctx.monitors.check("shatter:component-bound", [sizes[0] <= ctx.params.component_c * bound], soft=True)
    ctx.monitors.extreme("shatter:max-component", [sizes[0] if sizes else 0])
    auxc = np.zeros(n, dtype=np.int64)
    auxc[V] = aux.colors
    classes = np.unique(auxc[R]).tolist()
    for cls in classes:
        members = np.flatnonzero(live & (auxc == cls) & (ctx.colors == UNCOLORED))
        if members.size == 0:
            continue
        owners, cols = _free_list(ctx, dkeys, _vmask(n, members))
        first = np.ones(owners.size, dtype=bool)
        first[1:] = owners[1:] != owners[:-1]
        got = np.zeros(n, dtype=np.int64)
        got[owners[first]] = cols[first]  # keys are sorted, so this is the lowest free color
        ctx.monitors.check(phase + ":list-nonempty", got[members] > 0)
        mm = _vmask(n, members)
        ctx.engine.virtual_round(ctx.forest, np.where(mm, ctx.color_bits, 0),
                                 np.where(mm, list_len, 0), kind=phase + ":class")
        ok = members[got[members] > 0]
        ctx.assign(ok, got[ok], phase)
    return FinishResult(iters, shattered, sizes, len(classes), dbar)


# ---------------------------------------------------------------------------
# driver


@dataclass
class LowDegreeOutcome:
    colored: int = 0
    fast_path: bool = False
    reduction: ReductionResult | None = None
    parts: list[dict] = field(default_factory=list)
    rounds: int = 0
    fast_budget: float | None = None


def fast_path_budget(rho: int, d: int, dbar: int, n: int, c: float | None = None) -> float:
    """Round budget of the small-degree variant for measured congestion and dilation."""
    if c is None:
        c = calibration.get("fast_path_c")
    lg = math.log2(max(n, 4))
    ld = math.log2(max(dbar, 2))
    return c * ((rho * dbar * ld / lg) + 1) * d * ld ** 2 * math.log2(lg)


def fast_path_applies(ctx: Ctx) -> bool:
    if not ctx.params.fast_path:
        return False
    U = ctx.colors == UNCOLORED
    top = int(uncolored_degree_within(ctx, U)[U].max(initial=0))
    lg = ctx.log2n
    return top <= FAST_PATH_DEGREE_C * lg / math.log2(max(lg, 2))


def color_low_degree(ctx: Ctx, phase: str = "low-degree") -> LowDegreeOutcome:
    """Extend the coloring to every uncolored vertex."""
    out = LowDegreeOutcome()
    start = ctx.engine.round
    U = np.flatnonzero(ctx.colors == UNCOLORED)
    if U.size == 0:
        return out
    with ctx.engine.phase(phase):
        um = _vmask(ctx.n, U)
        pdeg = uncolored_degree_within(ctx, um)[U]
        ctx.monitors.check(phase + ":input-degree", pdeg <= ctx.params.delta_low, soft=True)
        out.fast_path = fast_path_applies(ctx)
        if out.fast_path:
            parts = [U]
        else:
            out.reduction = low_degree_reduction(ctx, U, phase=phase + ":reduction")
            parts = list(out.reduction.parts)
        for i, P in enumerate(parts):
            P = P[ctx.colors[P] == UNCOLORED]
            if P.size == 0:
                continue
            pm = _vmask(ctx.n, P)
            dbar = int(distinct_degree_within(ctx, pm)[P].max(initial=0))
            if out.fast_path:
                dkeys = full_palette(ctx, P, phase=phase + ":palette")
            else:
                dkeys = learn_palette(ctx, P, dbar, phase=phase + ":palette")
            aux = linial_virtual(ctx, P, phase=phase + ":linial")
            fin = finish_components(ctx, P, dkeys, aux, phase=phase + ":finish")
            out.parts.append({"size": int(P.size), "dbar": dbar, "aux_colors": aux.num_colors,
                              "linial_phases": aux.phases, "max_component": fin.max_component,
                              "components": len(fin.component_sizes), "classes": fin.classes,
                              "shattered": fin.shattered})
        ctx.assert_proper(phase)
        ctx.monitors.check(phase + ":total", ctx.colors[U] != UNCOLORED)
    out.colored = int((ctx.colors[U] != UNCOLORED).sum())
    out.rounds = ctx.engine.round - start
    if out.fast_path:
        rho, d = ctx.emb.measure()
        dbar = max((p["dbar"] for p in out.parts), default=1)
        out.fast_budget = fast_path_budget(int(rho), int(d), dbar, ctx.n)
        ctx.monitors.check(phase + ":fast-budget", [out.rounds <= out.fast_budget], soft=True)
    return out
