"""High-degree phases: slack generation, V⋆, non-cabals, cabals, V_in.

Every step colors only the set it is responsible for.  A vertex a step
fails to color stays uncolored; later steps never touch it and the
low-degree finish takes it at the end (``DenseOutcome.deferred``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import trials
from .acd import AcdResult, DENSE, INACCURATE, LOW, STAR
from .context import Ctx, PhaseFailure
from .multigraph import UNCOLORED
from .trials import STRIDE, ColorSpace


@dataclass
class DensePhaseState:
    """Per-clique bookkeeping carried across the dense steps."""

    matching: np.ndarray            # M_K
    inlier: np.ndarray              # per vertex
    put_aside: dict[int, np.ndarray] = field(default_factory=dict)
    sct_sets: dict[int, np.ndarray] = field(default_factory=dict)
    delta_inliers: np.ndarray | None = None
    slack_path: set[int] = field(default_factory=set)
    checkpoints: list[dict] = field(default_factory=list)

    def checkpoint(self, ctx: Ctx, phase: str, **extra) -> None:
        rec = {"phase": phase, "round": ctx.engine.round,
               "colored": int((ctx.colors != UNCOLORED).sum())}
        rec.update(extra)
        self.checkpoints.append(rec)


# ---------------------------------------------------------------------------
# shared helpers


def _mask(n: int, S) -> np.ndarray:
    m = np.zeros(n, dtype=bool)
    m[np.asarray(S, dtype=np.int64)] = True
    return m


def _trial_then_mct(ctx: Ctx, S: np.ndarray, lo, phase: str, iters: int | None = None,
                    hi=None) -> np.ndarray:
    """RCT for a few iterations then MCT over ``[lo, min(hi, deg+1)]``; returns failures."""
    S = np.asarray(S, dtype=np.int64)
    S = S[ctx.colors[S] == UNCOLORED]
    if S.size == 0:
        return S
    hi = ctx.H.pseudo_degree[S] + 1 if hi is None else np.minimum(hi, ctx.H.pseudo_degree[S] + 1)
    space = ColorSpace(S, lo, hi)
    rng = ctx.rng(phase)
    for _ in range(iters if iters is not None else ctx.params.rct_iters):
        trials.random_color_trial(ctx, space, phase, rng)
    out = trials.multicolor_trial(ctx, space, phase, rng)
    return out.failed


def _available_in_clique_palette(ctx: Ctx, V: np.ndarray, clique_of: np.ndarray,
                                 cliques: list[np.ndarray], lo: int = 1) -> np.ndarray:
    """|L(v) ∩ L(K_v) ∩ [lo, deg(v)+1]| for every v in V."""
    V = np.asarray(V, dtype=np.int64)
    if V.size == 0:
        return np.zeros(0, np.int64)
    H = ctx.H
    pos = np.full(ctx.n, -1, dtype=np.int64)
    pos[V] = np.arange(V.size)
    hi = H.pseudo_degree[V] + 1
    sel = (pos[ctx.src] >= 0) & (ctx.colors[H.nbr] != UNCOLORED)
    parts = [pos[ctx.src[sel]] * STRIDE + ctx.colors[H.nbr[sel]]]
    g = clique_of[V]
    for k in np.unique(g[g >= 0]).tolist():
        used = trials.used_colors(ctx, cliques[k])
        idx = np.flatnonzero(g == k)
        parts.append((np.repeat(idx, used.size) * STRIDE + np.tile(used, idx.size)))
    key = np.unique(np.concatenate(parts))
    o, c = key // STRIDE, key % STRIDE
    inside = (c >= lo) & (c <= hi[o])
    blocked = np.bincount(o[inside], minlength=V.size)
    return np.maximum(hi - lo + 1, 0) - blocked


def _reserved_check(ctx: Ctx, vertices: np.ndarray, reserved: int, phase: str) -> None:
    c = ctx.colors[vertices]
    ctx.monitors.check(f"reserved:{phase}", (c == UNCOLORED) | (c > reserved))


def _count_degree_check(ctx: Ctx, res: AcdResult, phase: str) -> None:
    dense = np.flatnonzero(res.clique >= 0)
    if dense.size == 0:
        return
    size = res.size_K[res.clique[dense]]
    ctx.monitors.check(f"count-degree:{phase}",
                       ctx.H.pseudo_degree[dense] + 1 == size + res.e_v[dense] - res.a_v[dense])


# ---------------------------------------------------------------------------
# slack generation


def generate_slack(ctx: Ctx, Vsg: np.ndarray, r: int) -> np.ndarray:
    """One activation-and-trial step; returns the vertices colored.

    Active vertices draw from ``{r+1, ..., deg+1}`` and keep their draw
    unless a neighbor of higher (pseudo-degree, id) drew the same color.
    """
    H = ctx.H
    Vsg = np.asarray(Vsg, dtype=np.int64)
    rng = ctx.rng("slack-generation")
    act = Vsg[rng.random(Vsg.size) < ctx.params.p_gen]
    ctx.diag["sg_active"] = int(act.size)
    ctx.diag["sg_candidates"] = int(Vsg.size)
    act = act[H.pseudo_degree[act] > r]
    width = H.pseudo_degree[act] + 1 - r
    col = r + 1 + (rng.random(act.size) * width).astype(np.int64)
    trial = np.zeros(ctx.n, dtype=np.int64)
    trial[act] = col
    pu, pv = ctx.pu, ctx.pv
    same = (trial[pu] == trial[pv]) & (trial[pu] > 0)
    du, dv = H.pseudo_degree[pu], H.pseudo_degree[pv]
    u_high = (du > dv) | ((du == dv) & (pu > pv))
    lose = np.zeros(ctx.n, dtype=bool)
    lose[np.where(u_high, pv, pu)[same]] = True
    ctx.vround(_mask(ctx.n, act), ctx.color_bits, 1, kind="slack-generation")
    keep = act[~lose[act]]
    ctx.assign(keep, trial[keep], "slack-generation")
    ctx.assert_proper("slack-generation")
    return keep


def slack_fraction(ctx: Ctx, res: AcdResult, colored: np.ndarray, min_size: int = 64) -> dict:
    """Per clique: fraction of K colored by slack generation (≤ 1/10 expected)."""
    m = _mask(ctx.n, colored)
    out = {}
    for k, K in enumerate(res.cliques):
        if K.size >= min_size:
            out[k] = int(m[K].sum()) / K.size
    ok = [v <= 0.1 for v in out.values()]
    ctx.monitors.check("slack-fraction", np.asarray(ok, dtype=bool), soft=True)
    if out:
        ctx.monitors.extreme("slack-fraction:value", list(out.values()))
    return out


# ---------------------------------------------------------------------------
# V⋆ and V_in


def color_vstar(ctx: Ctx, res: AcdResult, r: int) -> np.ndarray:
    S = res.members(STAR)
    if S.size == 0:
        return S
    before = ctx.colors.copy()
    failed = _trial_then_mct(ctx, S, r + 1, "vstar")
    outside = np.ones(ctx.n, dtype=bool)
    outside[S] = False
    ctx.monitors.check("vstar:restriction", before[outside] == ctx.colors[outside])
    _reserved_check(ctx, np.arange(ctx.n), r, "vstar")
    ctx.monitors.check("vstar:total", ctx.colors[S] != UNCOLORED, soft=True)
    ctx.assert_proper("vstar")
    return failed


def color_inaccurate(ctx: Ctx, res: AcdResult) -> np.ndarray:
    S = res.members(INACCURATE)
    if S.size == 0:
        return S
    failed = _trial_then_mct(ctx, S, 1, "inaccurate")
    ctx.monitors.check("inaccurate:total", ctx.colors[S] != UNCOLORED, soft=True)
    ctx.assert_proper("inaccurate")
    return failed


# ---------------------------------------------------------------------------
# colorful matching


def _anti_edges(ctx: Ctx, K: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    A = ctx.H.simple_adjacency()[K][:, K].toarray().astype(bool)
    np.fill_diagonal(A, True)
    iu, iv = np.nonzero(~A)
    keep = iu < iv
    return K[iu[keep]], K[iv[keep]]


def colorful_matching(ctx: Ctx, res: AcdResult, ks: list[int], reserved: int,
                      targets: dict[int, int], phase: str) -> dict[int, int]:
    """Color anti-edge pairs of each clique with one fresh shared color per pair.

    Colors come from ``[max(ceil(|K|/10), reserved+1), floor((1-2ε)|K|)]``.
    Returns M_K per clique (pairs colored, each saving one color).
    """
    eps = res.eps
    M = {k: 0 for k in ks}
    anti = {}
    rng_lo, rng_hi = {}, {}
    for k in ks:
        K = res.cliques[k]
        anti[k] = _anti_edges(ctx, K)
        rng_lo[k] = max(math.ceil(K.size / 10), reserved + 1)
        rng_hi[k] = math.floor((1 - 2 * eps) * K.size)
    live = [k for k in ks if anti[k][0].size and rng_lo[k] <= rng_hi[k] and targets[k] > 0]
    rng = ctx.rng(phase + ":cm")
    for it in range(ctx.params.cm_rounds):
        if not live:
            break
        prop_u, prop_w, prop_c, prop_k = [], [], [], []
        for k in live:
            au, aw = anti[k]
            ok = (ctx.colors[au] == UNCOLORED) & (ctx.colors[aw] == UNCOLORED)
            au, aw = au[ok], aw[ok]
            if au.size == 0:
                continue
            # leader picks a random maximal set of disjoint anti-edges
            order = rng.permutation(au.size)
            taken: set[int] = set()
            cu, cw = [], []
            need = targets[k] - M[k]
            for i in order.tolist():
                a, b = int(au[i]), int(aw[i])
                if a in taken or b in taken:
                    continue
                taken.update((a, b))
                cu.append(a)
                cw.append(b)
                if len(cu) >= need:
                    break
            used = set(trials.used_colors(ctx, res.cliques[k]).tolist())
            free = np.asarray([c for c in range(rng_lo[k], rng_hi[k] + 1) if c not in used], np.int64)
            if free.size == 0:
                continue
            m = min(len(cu), free.size)
            cols = rng.choice(free, size=m, replace=False)
            prop_u += cu[:m]
            prop_w += cw[:m]
            prop_c.append(cols)
            prop_k += [k] * m
        ctx.clique_query(_mask(ctx.n, np.concatenate([res.cliques[k] for k in live])),
                         2 * ctx.id_bits + ctx.color_bits, kind=phase + ":cm-propose")
        if not prop_u:
            break
        pu_, pw_ = np.asarray(prop_u), np.asarray(prop_w)
        pc = np.concatenate(prop_c)
        pk = np.asarray(prop_k)
        # handler checks: colored neighbors, and neighbors proposing the same color
        trial = np.zeros(ctx.n, dtype=np.int64)
        trial[pu_] = pc
        trial[pw_] = pc
        owner = np.full(ctx.n, -1, dtype=np.int64)
        owner[pu_] = np.arange(pu_.size)
        owner[pw_] = np.arange(pw_.size)
        bad = np.zeros(pu_.size, dtype=bool)
        for end in (pu_, pw_):
            bad |= trials.blocked_by_colored(ctx, end, pc)
        a, b = ctx.pu, ctx.pv
        clash = (trial[a] == trial[b]) & (trial[a] > 0) & (owner[a] != owner[b])
        bad[owner[a[clash]]] = True
        bad[owner[b[clash]]] = True
        ctx.vround(_mask(ctx.n, np.concatenate([pu_, pw_])), ctx.color_bits, 1, kind=phase + ":cm-check")
        good = np.flatnonzero(~bad)
        ctx.assign(np.concatenate([pu_[good], pw_[good]]), np.concatenate([pc[good], pc[good]]),
                   phase + ":cm")
        lo_arr = np.asarray([rng_lo[k] for k in pk[good]], dtype=np.int64)
        hi_arr = np.asarray([rng_hi[k] for k in pk[good]], dtype=np.int64)
        ctx.monitors.check("colorful-matching:range", (pc[good] >= lo_arr) & (pc[good] <= hi_arr))
        for k in pk[good].tolist():
            M[k] += 1
        live = [k for k in live if M[k] < targets[k]]
    ctx.assert_proper(phase + ":cm")
    return M


def _matching_bookkeeping(ctx: Ctx, res: AcdResult, k: int, before_colored: int,
                          before_used: int, M: int, phase: str) -> None:
    K = res.cliques[k]
    colored = int((ctx.colors[K] != UNCOLORED).sum())
    used = trials.used_colors(ctx, K).size
    # each pair colors two vertices with a single new color
    ctx.monitors.check(f"{phase}:cm-bookkeeping",
                       [(used - before_used) == M and (colored - before_colored) == 2 * M])


# ---------------------------------------------------------------------------
# synchronized color trial


def synchronized_color_trial(ctx: Ctx, res: AcdResult, k: int, S_K: np.ndarray,
                             delta_I: int, reserved: int, phase: str,
                             alpha: float | None = None) -> np.ndarray | None:
    """Assign the π(i)-th color of [Δ_I+1] ∖ (ψ(K) ∪ [reserved]) to the i-th vertex of S_K.

    Returns the assigned trial colors (0 = none), or None when the
    precondition fails.  Adoption is resolved globally by the caller via
    :func:`resolve_sct`, since external neighbors run concurrently.
    """
    alpha = ctx.params.sct_alpha if alpha is None else alpha
    K = res.cliques[k]
    used = trials.used_colors(ctx, K)
    pal = np.setdiff1d(np.arange(reserved + 1, delta_I + 2), used)
    if S_K.size == 0 or pal.size < S_K.size or S_K.size < alpha * K.size:
        ctx.diag.setdefault("sct_refused", []).append(
            {"clique": k, "palette": int(pal.size), "S_K": int(S_K.size), "size": int(K.size)})
        return None
    rng = ctx.rng(phase + ":sct", k)
    perm = rng.permutation(pal.size)[:S_K.size]
    return pal[perm]


def resolve_sct(ctx: Ctx, proposals: dict[int, tuple[np.ndarray, np.ndarray]], phase: str,
                pal_check: dict[int, tuple[int, int, np.ndarray]]) -> None:
    if not proposals:
        return
    V = np.concatenate([p[0] for p in proposals.values()])
    C = np.concatenate([p[1] for p in proposals.values()])
    trial = np.zeros(ctx.n, dtype=np.int64)
    trial[V] = C
    clash = (trial[ctx.pu] == trial[ctx.pv]) & (trial[ctx.pu] > 0)
    lose = np.zeros(ctx.n, dtype=bool)
    lose[ctx.pu[clash]] = True
    lose[ctx.pv[clash]] = True
    keep = ~lose[V] & ~trials.blocked_by_colored(ctx, V, C) & (C <= ctx.H.pseudo_degree[V] + 1)
    # SCT colors must avoid ψ(K) and [reserved] and stay in [Δ_I + 1]
    for k, (V_k, C_k) in proposals.items():
        reserved, delta_I, used = pal_check[k]
        ctx.monitors.check("sct:palette", (C_k > reserved) & (C_k <= delta_I + 1) & ~np.isin(C_k, used))
    mask = _mask(ctx.n, V)
    steps = max(1, math.ceil(math.log2(max(ctx.log2n, 2))))
    for _ in range(steps):
        ctx.clique_query(mask, ctx.count_bits, kind=phase + ":sct-prefix")
    ctx.vround(mask, ctx.color_bits, 1, kind=phase + ":sct-trial")
    ctx.assign(V[keep], C[keep], phase + ":sct")


# ---------------------------------------------------------------------------
# non-cabals


def _inliers(res: AcdResult, k: int, matching: int | None = None) -> np.ndarray:
    K = res.cliques[k]
    ok_e = res.e_v[K] <= 20 * res.e_K[k]
    ok_a = res.a_v[K] <= (20 * res.a_K[k] if matching is None else matching)
    return K[ok_e & ok_a]


def _accounting(ctx: Ctx, res: AcdResult, ks: list[int], inlier: np.ndarray, lo: int, phase: str) -> None:
    if not ks:
        return
    V = np.concatenate([res.cliques[k] for k in ks])
    V = V[inlier[V] & (ctx.colors[V] == UNCOLORED)]
    if V.size == 0:
        return
    avail = _available_in_clique_palette(ctx, V, res.clique, res.cliques, lo=1)
    k_of = res.clique[V]
    denom = np.maximum(res.e_K[k_of] + res.a_K[k_of], 1e-9)
    ratio = avail / denom
    ctx.monitors.extreme("accounting:" + phase, ratio)
    ctx.monitors.sample("accounting-ratio", [float(ratio.min())])
    ctx.monitors.check("accounting", ratio >= ctx.params.gamma_acct, soft=True)


def _slice_and_finish(ctx: Ctx, res: AcdResult, S: np.ndarray, ks: list[int], reserved: int,
                      cap_K: np.ndarray, phase: str) -> np.ndarray:
    """Slice color with the clique sampler, then per-layer MCT over [reserved]."""
    S = S[ctx.colors[S] == UNCOLORED]
    if S.size == 0:
        return S
    sampler = trials.CliqueSampler(ctx, res.clique, res.cliques, reserved, cap_K, tag=phase + ":sampler")
    lay = trials.slice_color(ctx, S, lambda V, i: sampler.sample(V, i), phase + ":slice")
    _reserved_check(ctx, np.concatenate([res.cliques[k] for k in ks]), reserved, phase + ":slice")
    rng = ctx.rng(phase + ":layers")
    for i in range(lay.num_layers, 0, -1):
        L = lay.members(i)
        L = L[ctx.colors[L] == UNCOLORED]
        if L.size == 0:
            continue
        space = ColorSpace(L, 1, np.minimum(reserved, ctx.H.pseudo_degree[L] + 1))
        trials.multicolor_trial(ctx, space, phase + f":layer{i}", rng)
    ctx.diag.setdefault("layers", {})[phase] = {"count": lay.num_layers, "max_load": lay.max_load}
    left = S[ctx.colors[S] == UNCOLORED]
    return left


def _finish_in_clique(ctx: Ctx, res: AcdResult, k: int, P: np.ndarray, phase: str) -> None:
    """Leader-run greedy finish: gather constraints of P then assign sequentially.

    Each vertex takes the smallest free color of its palette, preferring
    colors of the clique palette.  Sequential greedy always succeeds for
    deg+1 lists; sets finished concurrently must be mutually non-adjacent.
    """
    P = P[ctx.colors[P] == UNCOLORED]
    if P.size == 0:
        return
    batch = max(1, ctx.engine.net.bandwidth // max(1, math.ceil(math.log2(max(res.cliques[k].size, 2)))))
    for a in range(0, P.size, batch):
        ctx.clique_query(_mask(ctx.n, P[a:a + batch]), ctx.count_bits + ctx.color_bits,
                         kind=phase + ":finish-gather")
    H = ctx.H
    used_K = set(trials.used_colors(ctx, res.cliques[k]).tolist())
    for v in P.tolist():
        nb = H.neighbors(v)
        taken = set(ctx.colors[nb][ctx.colors[nb] != UNCOLORED].tolist())
        cands = [c for c in range(1, H.pseudo_degree[v] + 2) if c not in taken]
        pref = [c for c in cands if c not in used_K]
        c = (pref or cands)[0]
        ctx.assign(np.asarray([v]), np.asarray([c]), phase + ":finish")
        used_K.add(c)
    ctx.clique_query(_mask(ctx.n, P), ctx.color_bits, kind=phase + ":finish-answer")


def color_non_cabals(ctx: Ctx, res: AcdResult, state: DensePhaseState, r: int) -> np.ndarray:
    ks = [k for k in range(len(res.cliques)) if not res.cabal[k]]
    if not ks:
        return np.zeros(0, np.int64)
    phase = "noncabal"
    p = ctx.params
    # 1. colorful matching
    cm_ks = [k for k in ks if res.a_K[k] >= p.c_cm_log * ctx.logn]
    before = {k: (int((ctx.colors[res.cliques[k]] != UNCOLORED).sum()),
                  trials.used_colors(ctx, res.cliques[k]).size) for k in cm_ks}
    targets = {k: math.ceil(res.a_K[k] / (4 * res.eps)) for k in cm_ks}
    M = colorful_matching(ctx, res, cm_ks, r, targets, phase)
    for k in cm_ks:
        state.matching[k] = M[k]
        _matching_bookkeeping(ctx, res, k, *before[k], M[k], phase)
        if M[k] < targets[k]:
            ctx.diag.setdefault("cm_short", []).append({"clique": k, "M": M[k], "target": targets[k]})
    # 2. outliers
    outl = []
    for k in ks:
        I = _inliers(res, k)
        state.inlier[I] = True
        K = res.cliques[k]
        O = K[~state.inlier[K]]
        ctx.monitors.check("outliers<=K/10", [O.size <= K.size / 10])
        outl.append(O)
    O = np.concatenate(outl)
    _trial_then_mct(ctx, O[ctx.colors[O] == UNCOLORED], r + 1, phase + ":outliers")
    ctx.assert_proper(phase + ":outliers")
    _count_degree_check(ctx, res, phase)
    _accounting(ctx, res, ks, state.inlier, r + 1, "after-outliers")
    # a large colorful matching gives ε|K| slack: finish like V⋆
    slack_path = [k for k in cm_ks if M[k] >= 2 * res.eps * res.cliques[k].size]
    for k in slack_path:
        state.slack_path.add(k)
        _trial_then_mct(ctx, res.cliques[k], r + 1, phase + ":cm-slack")
    ks_main = [k for k in ks if k not in state.slack_path]
    # 3. synchronized color trial
    proposals, checks = {}, {}
    for k in ks_main:
        K = res.cliques[k]
        I = K[state.inlier[K]]
        dI = int(ctx.H.pseudo_degree[I].max()) if I.size else int(res.Delta_K[k])
        state.delta_inliers[k] = dI
        unc = K[ctx.colors[K] == UNCOLORED]
        used = trials.used_colors(ctx, K)
        free_cnt = np.setdiff1d(np.arange(1, dI + 2), used).size
        ctx.monitors.check("sct:palette-room", [free_cnt >= unc.size - p.sct_c * ctx.logn], soft=True)
        cand = I[ctx.colors[I] == UNCOLORED]
        pal_size = np.setdiff1d(np.arange(r + 1, dI + 2), used).size
        rng = ctx.rng(phase + ":sk", k)
        S_K = rng.permutation(cand)[:min(cand.size, pal_size)]
        cols = synchronized_color_trial(ctx, res, k, S_K, dI, r, phase)
        if cols is not None:
            proposals[k] = (S_K, cols)
            checks[k] = (r, dI, used)
            state.sct_sets[k] = S_K
    resolve_sct(ctx, proposals, phase, checks)
    for k, (S_K, _) in proposals.items():
        left = int((ctx.colors[S_K] == UNCOLORED).sum())
        bound = 500 / p.sct_alpha * (res.e_K[k] + res.a_K[k]) + p.sct_c * ctx.logn
        ctx.monitors.sample("sct-leftover", [left / max(res.e_K[k] + res.a_K[k] + ctx.logn, 1)])
        ctx.monitors.sample("sct:leftover-excess",
                            [(left - 500 / p.sct_alpha * (res.e_K[k] + res.a_K[k])) / ctx.logn])
        ctx.monitors.check("sct:leftover", [left <= bound], soft=True)
    ctx.assert_proper(phase + ":sct")
    _reserved_check(ctx, np.arange(ctx.n), r, phase + ":sct")
    _accounting(ctx, res, ks_main, state.inlier, r + 1, "after-sct")
    # 4. random color trials in the clique palette
    S = np.concatenate([res.cliques[k] for k in ks_main]) if ks_main else np.zeros(0, np.int64)
    rng = ctx.rng(phase + ":rct")
    for _ in range(ctx.params.rct_iters):
        S = S[ctx.colors[S] == UNCOLORED]
        if S.size == 0:
            break
        space = trials.clique_space(ctx, S, res.clique, res.cliques, r + 1, ctx.H.pseudo_degree[S] + 1)
        trials.random_color_trial(ctx, space, phase + ":rct", rng)
    _reserved_check(ctx, np.arange(ctx.n), r, phase + ":rct")
    _accounting(ctx, res, ks_main, state.inlier, r + 1, "after-rct")
    # 5-6. slice color then reserved-color MCT per layer
    cap_K = res.Delta_K + 1
    left = _slice_and_finish(ctx, res, S, ks_main, r, cap_K, phase)
    ctx.assert_proper(phase)
    all_nc = np.concatenate([res.cliques[k] for k in ks])
    state.checkpoint(ctx, phase, cliques=len(ks), left=int((ctx.colors[all_nc] == UNCOLORED).sum()))
    return all_nc[ctx.colors[all_nc] == UNCOLORED]


# ---------------------------------------------------------------------------
# cabals


def compute_put_aside(ctx: Ctx, res: AcdResult, ks: list[int], inlier: np.ndarray,
                      size: int, phase: str = "cabal") -> dict[int, np.ndarray]:
    """Sample uncolored inliers; drop candidates adjacent to another cabal's sample."""
    n = ctx.n
    out: dict[int, np.ndarray] = {}
    pending = list(ks)
    for attempt in range(4):
        if not pending:
            break
        rng = ctx.rng(phase + ":put-aside", attempt)
        cand_of = np.full(n, -1, dtype=np.int64)
        for k in ks:
            K = res.cliques[k]
            pool = K[inlier[K] & (ctx.colors[K] == UNCOLORED)]
            if k in out:
                cand_of[out[k]] = k
                continue
            prob = min(1.0, ctx.params.c_pa * size / max(K.size, 1))
            cand_of[pool[rng.random(pool.size) < prob]] = k
        a, b = ctx.pu, ctx.pv
        cross = (cand_of[a] >= 0) & (cand_of[b] >= 0) & (cand_of[a] != cand_of[b])
        settled = np.zeros(n, dtype=bool)
        for k in out:
            settled[out[k]] = True
        # settled sets stay; otherwise the candidate of the higher cabal id yields
        lose_a = cross & ~settled[a] & (settled[b] | (cand_of[a] > cand_of[b]))
        lose_b = cross & ~settled[b] & (settled[a] | (cand_of[b] > cand_of[a]))
        drop = np.zeros(n, dtype=bool)
        drop[a[lose_a]] = True
        drop[b[lose_b]] = True
        ctx.vround(cand_of >= 0, ctx.id_bits, 1, kind=phase + ":put-aside")
        nxt = []
        for k in pending:
            members = np.flatnonzero((cand_of == k) & ~drop)
            if members.size >= size:
                out[k] = np.sort(ctx.rng(phase + ":pa-trunc", k).permutation(members)[:size])
            else:
                nxt.append(k)
        pending = nxt
    if pending:
        ctx.diag.setdefault("put_aside_abort", []).extend(int(k) for k in pending)
    # invariants over the settled sets
    owner = np.full(n, -1, dtype=np.int64)
    for k, P in out.items():
        owner[P] = k
        ctx.monitors.check("put-aside:size", [P.size == size])
        ctx.monitors.check("put-aside:uncolored-inliers", inlier[P] & (ctx.colors[P] == UNCOLORED))
    a, b = ctx.pu, ctx.pv
    inter = (owner[a] >= 0) & (owner[b] >= 0) & (owner[a] != owner[b])
    ctx.monitors.check("put-aside:no-inter-edges", ~inter)
    for k in out:
        K = res.cliques[k]
        touch = np.zeros(n, dtype=bool)
        other = (owner >= 0) & (owner != k)
        touch[a[other[b]]] = True
        touch[b[other[a]]] = True
        ctx.monitors.check("put-aside:K/100", [touch[K].sum() <= K.size / 100], soft=True)
    return out


def color_cabals(ctx: Ctx, res: AcdResult, state: DensePhaseState) -> np.ndarray:
    ks = [k for k in range(len(res.cliques)) if res.cabal[k]]
    if not ks:
        return np.zeros(0, np.int64)
    phase = "cabal"
    p = ctx.params
    rp = p.r_prime
    allV = np.concatenate([res.cliques[k] for k in ks])
    ctx.monitors.check("cabal:uncolored-at-entry", ctx.colors[allV] == UNCOLORED)
    # 1. colorful matching (high a_K) or the small-a_K variant
    hi_ks = [k for k in ks if res.a_K[k] >= p.c_cm_log * ctx.logn]
    lo_ks = [k for k in ks if k not in hi_ks]
    targets = {k: math.ceil(res.a_K[k] / (4 * res.eps)) for k in hi_ks}
    for k in lo_ks:
        a = np.sort(res.a_v[res.cliques[k]])
        targets[k] = int(a[max(0, math.ceil((1 - res.eps) * a.size) - 1)])
    M = colorful_matching(ctx, res, ks, rp, targets, phase)
    for k in ks:
        state.matching[k] = M[k]
    # 2. inliers and outliers
    outl = []
    for k in ks:
        I = _inliers(res, k, None if k in hi_ks else M[k])
        state.inlier[I] = True
        K = res.cliques[k]
        outl.append(K[~state.inlier[K]])
    O = np.concatenate(outl)
    _trial_then_mct(ctx, O, rp + 1, phase + ":outliers")
    _reserved_check(ctx, allV, rp, phase + ":outliers")
    # 3. put-aside sets
    P = compute_put_aside(ctx, res, ks, state.inlier, rp + p.ell, phase)
    state.put_aside = P
    in_P = np.zeros(ctx.n, dtype=bool)
    for S_ in P.values():
        in_P[S_] = True
    # cabals without a put-aside set (too small) are finished by their leader at the end
    # 4. synchronized color trial on K ∖ (dom ∪ P_K)
    proposals, checks = {}, {}
    for k in ks:
        K = res.cliques[k]
        I = K[state.inlier[K]]
        dI = int(ctx.H.pseudo_degree[I].max()) if I.size else int(res.Delta_K[k])
        state.delta_inliers[k] = dI
        S_K = K[(ctx.colors[K] == UNCOLORED) & ~in_P[K]]
        used = trials.used_colors(ctx, K)
        pal_size = np.setdiff1d(np.arange(rp + 1, dI + 2), used).size
        S_K = ctx.rng(phase + ":sk", k).permutation(S_K)[:min(S_K.size, pal_size)]
        cols = synchronized_color_trial(ctx, res, k, S_K, dI, rp, phase)
        if cols is not None:
            proposals[k] = (S_K, cols)
            checks[k] = (rp, dI, used)
            state.sct_sets[k] = S_K
    resolve_sct(ctx, proposals, phase, checks)
    for k, (S_K, _) in proposals.items():
        left = int((ctx.colors[S_K] == UNCOLORED).sum())
        bound = 500 / p.sct_alpha * (res.e_K[k] + res.a_K[k]) + p.sct_c * ctx.logn
        ctx.monitors.sample("sct-leftover", [left / max(res.e_K[k] + res.a_K[k] + ctx.logn, 1)])
        ctx.monitors.sample("sct:leftover-excess",
                            [(left - 500 / p.sct_alpha * (res.e_K[k] + res.a_K[k])) / ctx.logn])
        ctx.monitors.check("sct:leftover", [left <= bound], soft=True)
    _reserved_check(ctx, allV, rp, phase + ":sct")
    # 5-6. slice color over V' then MCT over [r'] per layer
    Vp = allV[(ctx.colors[allV] == UNCOLORED) & ~in_P[allV]]
    cap_K = res.Delta_K + 1
    _slice_and_finish(ctx, res, Vp, ks, rp, cap_K, phase)
    ctx.assert_proper(phase)
    # 7. put-aside finish (sets are mutually non-adjacent, so cabals run concurrently)
    for k, S_ in P.items():
        _finish_in_clique(ctx, res, k, S_, phase + ":put-aside")
    ctx.assert_proper(phase + ":put-aside")
    state.checkpoint(ctx, phase, cliques=len(ks), left=int((ctx.colors[allV] == UNCOLORED).sum()))
    return allV[ctx.colors[allV] == UNCOLORED]


# ---------------------------------------------------------------------------
# orchestration


@dataclass
class DenseOutcome:
    state: DensePhaseState
    deferred: np.ndarray
    slack_colored: np.ndarray
    slack_fraction: dict


def color_high_degree(ctx: Ctx, res: AcdResult) -> DenseOutcome:
    """Slack generation then V⋆, non-cabals, cabals and V_in, in that order."""
    p = ctx.params
    r = p.r
    k = len(res.cliques)
    state = DensePhaseState(np.zeros(k, dtype=np.int64), np.zeros(ctx.n, dtype=bool),
                            delta_inliers=np.zeros(k, dtype=np.int64))
    high = res.high()
    cabal_v = np.zeros(ctx.n, dtype=bool)
    for i in range(k):
        if res.cabal[i]:
            cabal_v[res.cliques[i]] = True
    with ctx.engine.phase("slack-generation"):
        Vsg = high[~cabal_v[high] & (res.label[high] != INACCURATE)]
        sg = generate_slack(ctx, Vsg, r)
        frac = slack_fraction(ctx, res, sg)
        _reserved_check(ctx, np.arange(ctx.n), r, "slack-generation")
        state.checkpoint(ctx, "slack-generation", active=ctx.diag.get("sg_active", 0))
    with ctx.engine.phase("vstar"):
        color_vstar(ctx, res, r)
        state.checkpoint(ctx, "vstar")
    with ctx.engine.phase("non-cabals"):
        color_non_cabals(ctx, res, state, r)
    with ctx.engine.phase("cabals"):
        color_cabals(ctx, res, state)
    with ctx.engine.phase("inaccurate"):
        color_inaccurate(ctx, res)
        state.checkpoint(ctx, "inaccurate")
    _count_degree_check(ctx, res, "high-end")
    deferred = high[ctx.colors[high] == UNCOLORED]
    ctx.monitors.check("high:total", ctx.colors[high] != UNCOLORED, soft=True)
    return DenseOutcome(state, deferred, sg, frac)
