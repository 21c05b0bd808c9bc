"""Almost-clique decomposition.

The construction estimates neighborhood sizes with fingerprints, marks
inaccurate vertices, keeps balanced friendly pairs of accurate vertices as a
graph D, labels highly-dense vertices of D and turns the D-components holding
a label into almost-cliques.  A peeling pass then moves any member that
breaks the ε-clique inequalities to V⋆, and the low-degree split pulls whole
cliques into V_low.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import sketches
from .context import Ctx
from .multigraph import MultiGraph

LOW, INACCURATE, STAR, DENSE = 0, 1, 2, 3
LABEL_NAMES = {LOW: "low", INACCURATE: "inaccurate", STAR: "star", DENSE: "dense"}


@dataclass
class AcdResult:
    label: np.ndarray
    clique: np.ndarray
    cliques: list[np.ndarray]
    eps: float
    delta_low: int
    ell: int
    e_v: np.ndarray = None
    a_v: np.ndarray = None
    ext_distinct: np.ndarray = None
    anti_distinct: np.ndarray = None
    deg_in: np.ndarray = None
    e_K: np.ndarray = None
    a_K: np.ndarray = None
    size_K: np.ndarray = None
    Delta_K: np.ndarray = None
    cabal: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def delta_e(self) -> np.ndarray:
        return self.e_v - self.ext_distinct

    @property
    def delta_a(self) -> np.ndarray:
        return self.anti_distinct - self.a_v

    def members(self, lab: int) -> np.ndarray:
        return np.flatnonzero(self.label == lab)

    def high(self) -> np.ndarray:
        return np.flatnonzero(self.label != LOW)

    def delta_inliers(self, k: int, inlier: np.ndarray, H: MultiGraph) -> int:
        K = self.cliques[k]
        I = K[inlier[K]]
        return int(H.pseudo_degree[I].max()) if I.size else int(self.Delta_K[k])

    def to_json(self) -> dict:
        return {
            "eps": self.eps, "delta_low": self.delta_low, "ell": self.ell,
            "labels": [LABEL_NAMES[int(x)] for x in self.label],
            "cliques": [{"members": K.tolist(), "size": int(self.size_K[i]),
                         "Delta_K": int(self.Delta_K[i]), "e_K": float(self.e_K[i]),
                         "a_K": float(self.a_K[i]), "cabal": bool(self.cabal[i])}
                        for i, K in enumerate(self.cliques)],
            "vertices": [{"e_v": int(self.e_v[v]), "a_v": int(self.a_v[v]),
                          "E_v": int(self.ext_distinct[v]), "A_v": int(self.anti_distinct[v])}
                         if self.clique[v] >= 0 else None for v in range(self.label.size)],
            "diagnostics": self.diagnostics,
        }

    def dump(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)


# ---------------------------------------------------------------------------
# exact neighborhood quantities


def clique_stats(H: MultiGraph, clique: np.ndarray, cliques: list[np.ndarray]):
    """e_v, a_v, |E_v|, |A_v|, deg(v; K) for every dense vertex (0 elsewhere)."""
    n = H.n
    src = np.repeat(np.arange(n), H.degree)
    same = (clique[src] >= 0) & (clique[src] == clique[H.nbr])
    deg_in = np.bincount(src, weights=H.nbr_mult * same, minlength=n).astype(np.int64)
    nb_in = np.bincount(src, weights=same, minlength=n).astype(np.int64)
    size = np.zeros(n, dtype=np.int64)
    for K in cliques:
        size[K] = K.size
    dense = clique >= 0
    e_v = np.where(dense, H.pseudo_degree - deg_in, 0)
    a_v = np.where(dense, size - 1 - deg_in, 0)
    ext = np.where(dense, H.degree - nb_in, 0)
    anti = np.where(dense, size - 1 - nb_in, 0)
    return e_v, a_v, ext, anti, deg_in, nb_in


def finalize(res: AcdResult, H: MultiGraph) -> AcdResult:
    e_v, a_v, ext, anti, deg_in, _ = clique_stats(H, res.clique, res.cliques)
    res.e_v, res.a_v, res.ext_distinct, res.anti_distinct, res.deg_in = e_v, a_v, ext, anti, deg_in
    k = len(res.cliques)
    res.size_K = np.asarray([K.size for K in res.cliques], dtype=np.int64)
    res.Delta_K = np.asarray([H.pseudo_degree[K].max() for K in res.cliques], dtype=np.int64)
    res.e_K = np.asarray([e_v[K].mean() for K in res.cliques]) if k else np.zeros(0)
    res.a_K = np.asarray([a_v[K].mean() for K in res.cliques]) if k else np.zeros(0)
    res.cabal = res.e_K < res.ell
    return res


# ---------------------------------------------------------------------------
# distributed steps


def detect_inaccurate(H: MultiGraph, dtilde: np.ndarray, margin: float) -> np.ndarray:
    """Vertices whose pseudo-degree exceeds (1 + margin) times the estimate."""
    d = np.asarray(dtilde, dtype=np.float64)
    bad = np.isnan(d)
    return (~bad) & (H.pseudo_degree >= (1 + margin) * d) & (H.degree > 0)


def classify_friendly(Yfp: np.ndarray, dtilde: np.ndarray, pu: np.ndarray, pv: np.ndarray,
                      theta: float) -> tuple[np.ndarray, np.ndarray]:
    """Friendly test at handlers: est(|N(u) ∪ N(v)|) <= (1+5θ)·max(d̃(u), d̃(v)).

    Returns (friendly flags, overflow flags); overflowing pairs are unfriendly.
    """
    if pu.size == 0:
        return np.zeros(0, bool), np.zeros(0, bool)
    out_f = np.zeros(pu.size, dtype=bool)
    out_o = np.zeros(pu.size, dtype=bool)
    chunk = max(1, (1 << 24) // max(Yfp.shape[1], 1))
    for a in range(0, pu.size, chunk):
        b = min(pu.size, a + chunk)
        joint = np.maximum(Yfp[pu[a:b]], Yfp[pv[a:b]])
        f = sketches.estimate_rows(joint)
        ov = np.isnan(f)
        w = np.fmax(dtilde[pu[a:b]], dtilde[pv[a:b]])
        out_f[a:b] = (~ov) & (f <= (1 + 5 * theta) * w)
        out_o[a:b] = ov
    return out_f, out_o


def _min_label_flood(n: int, eu: np.ndarray, ev: np.ndarray, members: np.ndarray) -> tuple[np.ndarray, int]:
    """Min-id flooding over D; returns labels and the number of rounds used."""
    lab = np.where(members, np.arange(n), n)
    rounds = 0
    while True:
        nl = lab.copy()
        np.minimum.at(nl, eu, lab[ev])
        np.minimum.at(nl, ev, lab[eu])
        rounds += 1
        if np.array_equal(nl, lab):
            return lab, rounds
        lab = nl


def _peel(H: MultiGraph, clique: np.ndarray, eps: float, max_rounds: int = 100000) -> int:
    """Remove (to unassigned) members violating |N∩K| >= (1-ε)|K| or deg <= (1+ε)|K|.

    One worst violator per clique per pass; returns number of removals.
    """
    n = H.n
    src = np.repeat(np.arange(n), H.degree)
    removed = 0
    for _ in range(max_rounds):
        same = (clique[src] >= 0) & (clique[src] == clique[H.nbr])
        nb_in = np.bincount(src, weights=same, minlength=n)
        ids = clique[clique >= 0]
        if ids.size == 0:
            return removed
        sizes = np.bincount(ids)
        size = np.where(clique >= 0, sizes[np.maximum(clique, 0)], 0)
        dense = clique >= 0
        # violation margins (positive = violated)
        m_a = (1 - eps) * size - nb_in
        m_b = H.pseudo_degree - (1 + eps) * size
        worst = np.where(dense, np.maximum(m_a / np.maximum(size, 1), m_b / np.maximum(size, 1)), -np.inf)
        viol = dense & ((m_a > 1e-9) | (m_b > 1e-9))
        if not viol.any():
            return removed
        kk = clique[viol]
        vv = np.flatnonzero(viol)
        order = np.lexsort((-worst[vv], kk))
        kk, vv = kk[order], vv[order]
        first = np.ones(kk.size, dtype=bool)
        first[1:] = kk[1:] != kk[:-1]
        clique[vv[first]] = -1
        removed += int(first.sum())
    return removed


def compute_acd(ctx: Ctx) -> AcdResult:
    """Run the decomposition inside the engine and return the partition."""
    H, p = ctx.H, ctx.params
    n = H.n
    label = np.full(n, LOW, dtype=np.int8)
    clique = np.full(n, -1, dtype=np.int64)
    diag: dict = {"skipped": False}
    if n == 0 or int(H.pseudo_degree.max(initial=0)) <= p.delta_low:
        diag["skipped"] = True
        return finalize(AcdResult(label, clique, [], p.eps, p.delta_low, p.ell, diagnostics=diag), H)
    t = p.fp_t
    src = np.repeat(np.arange(n), H.degree)
    nbr = H.nbr
    with ctx.engine.phase("acd"):
        # 1. neighborhood size estimates
        seed1 = ctx.seed_for("acd-degree")
        Y = sketches.fingerprint_sets(seed1, H.indptr, nbr, t)
        dtilde = sketches.estimate_rows(Y)
        width = sketches.encoded_length(Y)
        ctx.engine.tree_phase(ctx.forest, np.where(H.degree > 0, width, 0), upward=True,
                              kind="acd:degree-fingerprint")
        dtilde[H.degree == 0] = 0.0
        diag["degree_overflow"] = int(np.isnan(dtilde).sum())
        # 2. inaccurate vertices
        vin = detect_inaccurate(H, dtilde, p.inacc_margin)
        # 3. share fingerprints with handlers; friendliness per pair
        ctx.engine.tree_phase(ctx.forest, np.where(H.degree > 0, width, 0), upward=False,
                              kind="acd:share-fingerprint")
        pu, pv = ctx.pu, ctx.pv
        friendly, overflow = classify_friendly(Y, dtilde, pu, pv, p.theta)
        diag["friendly_pairs"] = int(friendly.sum())
        diag["friendly_overflow"] = int(overflow.sum())
        du, dv = H.pseudo_degree[pu], H.pseudo_degree[pv]
        balanced = np.minimum(du, dv) >= (1 - 2 * p.theta) * np.maximum(du, dv)
        inD = friendly & balanced & ~vin[pu] & ~vin[pv]
        eu, ev = pu[inD], pv[inD]
        ctx.vround(None, 1, 1, kind="acd:D-edges")
        # 4. estimate |N_D(v)| and label highly-dense vertices
        seed2 = ctx.seed_for("acd-D")
        nd_est = sketches.approx_predicate_neighbors(ctx.emb, ctx.engine, seed2, t,
                                                     np.concatenate([eu, ev]),
                                                     np.concatenate([ev, eu]), kind="acd:D-fingerprint")
        labeled = (~vin) & (H.degree > 0) & (np.nan_to_num(nd_est, nan=-1) >= (1 - p.label_theta) * H.pseudo_degree)
        # 5. components of D containing a label, via min-id flooding
        inVD = ~vin
        lab, frounds = _min_label_flood(n, eu, ev, inVD)
        for _ in range(frounds):
            ctx.vround(inVD, ctx.id_bits, ctx.id_bits, kind="acd:leader-flood")
        comp_has_label = np.zeros(n + 1, dtype=bool)
        comp_has_label[lab[labeled]] = True
        dense = inVD & comp_has_label[lab]
        roots = np.unique(lab[dense])
        remap = np.full(n + 1, -1, dtype=np.int64)
        remap[roots] = np.arange(roots.size)
        clique = np.where(dense, remap[lab], -1)
        diag["components"] = int(roots.size)
        diag["labeled"] = int(labeled.sum())
        diag["flood_rounds"] = frounds
        # 6. exact peeling of ε-clique violators
        peeled = _peel(H, clique, p.eps)
        diag["peeled"] = peeled
        ctx.vround(clique >= 0, ctx.count_bits, ctx.count_bits, kind="acd:peel-check")
        # 7. low-degree split pulls whole cliques
        low = H.pseudo_degree <= p.delta_low
        pulled = np.unique(clique[low & (clique >= 0)])
        if pulled.size:
            clique[np.isin(clique, pulled)] = -1
            low |= np.isin(np.arange(n), np.flatnonzero(np.isin(remap[lab], pulled) & dense))
        # renumber surviving cliques, drop empties
        ids = np.unique(clique[clique >= 0])
        ren = np.full(max(int(clique.max(initial=-1)) + 1, 1), -1, dtype=np.int64)
        ren[ids] = np.arange(ids.size)
        clique = np.where(clique >= 0, ren[np.maximum(clique, 0)], -1)
        cliques = [np.flatnonzero(clique == k) for k in range(ids.size)]
        label[:] = STAR
        label[vin] = INACCURATE
        label[clique >= 0] = DENSE
        label[low & (clique < 0)] = LOW
        # a pulled clique joins V_low entirely even when some members are above Δ_low
        diag["pulled_cliques"] = int(pulled.size)
        diag["sizes"] = {LABEL_NAMES[k]: int((label == k).sum()) for k in LABEL_NAMES}
    res = AcdResult(label, clique, cliques, p.eps, p.delta_low, p.ell, diagnostics=diag)
    return finalize(res, H)


# ---------------------------------------------------------------------------
# checker


@dataclass
class AcdVerdict:
    ok: bool
    failures: dict[str, int]
    ratios: dict[str, float]

    def __bool__(self) -> bool:
        return self.ok


def _sparsity_all(H: MultiGraph) -> np.ndarray:
    A = H.simple_adjacency().astype(np.int64)
    tri = np.asarray((A @ A).multiply(A).sum(axis=1)).ravel() // 2
    k = H.degree
    missing = k * (k - 1) // 2 - tri
    return np.where(k > 0, missing / np.maximum(k, 1), 0.0)


def _unevenness_all(H: MultiGraph) -> np.ndarray:
    src = np.repeat(np.arange(H.n), H.degree)
    du, dv = H.pseudo_degree[H.nbr], H.pseudo_degree[src]
    w = np.maximum(du - dv, 0) / (du + 1)
    return np.bincount(src, weights=w, minlength=H.n)


def check_acd(H: MultiGraph, res: AcdResult, gamma_check: float = 0.0,
              inacc_margin: float | None = None) -> AcdVerdict:
    """Centralized audit of the decomposition items (exact where the statement is)."""
    fails: dict[str, int] = {}
    ratios: dict[str, float] = {}
    deg = H.pseudo_degree
    nN = H.degree
    lab = res.label

    def fail(name: str, mask) -> None:
        c = int(np.asarray(mask).sum())
        if c:
            fails[name] = fails.get(name, 0) + c

    fail("partition", ~np.isin(lab, [LOW, INACCURATE, STAR, DENSE]))
    fail("dense-label", (lab == DENSE) != (res.clique >= 0))
    # item 1
    fail("item1-low", (lab == LOW) & (deg > 2 * res.delta_low))
    fail("item1-high", (lab != LOW) & (deg < res.delta_low))
    # item 2
    margin = inacc_margin if inacc_margin is not None else 2 * (res.eps / 100) ** 3
    vin = lab == INACCURATE
    fail("item2-inaccurate", vin & ((deg - nN) < margin / 4 * nN))
    acc = (lab != LOW) & ~vin
    fail("item2-accurate", acc & (deg > (1 + 2.5 * margin) * nN))
    # item 4(a), 4(b) and the derived facts
    for k, K in enumerate(res.cliques):
        s = K.size
        e_v, a_v = res.e_v[K], res.a_v[K]
        fail("item4a", (nN[K] - res.ext_distinct[K]) < (1 - res.eps) * s - 1e-9)
        fail("item4b", deg[K] > (1 + res.eps) * s + 1e-9)
        fail("count-degree", deg[K] + 1 != s + e_v - a_v)
        fail("fact-E", res.ext_distinct[K] > 2 * res.eps * s + 1e-9)
        fail("fact-A", res.anti_distinct[K] > res.eps * s + 1e-9)
        dK = deg[K].max()
        fail("Delta_K-range", [not ((1 - res.eps) * s - 1e-9 <= dK <= (1 + res.eps) * s + 1e-9)])
        fail("deg-vs-Delta_K", deg[K] < (1 - 2 * res.eps) * dK - 1e-9)
        fail("diameter", [not _diameter_two(H, K)])
    # items 3 and 4(c): report ratios against a calibrated constant
    zeta = _sparsity_all(H)
    eta = _unevenness_all(H)
    src = np.repeat(np.arange(H.n), H.degree)
    nin = np.bincount(src, weights=vin[H.nbr], minlength=H.n)
    slack = zeta + eta + nin
    star = lab == STAR
    if star.any():
        r3 = slack[star] / np.maximum(deg[star], 1)
        ratios["item3_min"] = float(r3.min())
        fail("item3", r3 < gamma_check)
    dense = lab == DENSE
    if dense.any():
        ratios["item4c_max"] = float((res.ext_distinct[dense] / np.maximum(slack[dense], 1e-9)).max())
    return AcdVerdict(not fails, fails, ratios)


def _diameter_two(H: MultiGraph, K: np.ndarray) -> bool:
    if K.size <= 1:
        return True
    sub, _ = H.induced(K)
    A = sub.simple_adjacency().astype(np.int32)
    A2 = A @ A + A
    A2.setdiag(1)
    return A2.nnz == K.size * K.size
