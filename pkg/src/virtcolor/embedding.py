"""Virtual-graph embeddings materialized on the subdivision graph.

Every embedding lives on ``S_G``: machines keep their ids ``0..n-1`` and the
link-node of link ``e`` gets id ``n + e``.  A virtual vertex owns a support
(set of S_G nodes), a spanning tree of that support given as a list of S_G
links, and a root.  Every parallel edge names the S_G node that handles it.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .multigraph import InvalidArgument, MultiGraph
from .netsim import InvalidNetwork, Network, RoundEngine, SupportForest, ceil_log2


@dataclass
class EmbeddingVerdict:
    ok: bool
    violations: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


class Embedding:
    """Virtual multigraph ``H`` embedded on network ``G`` via ``S_G``."""

    def __init__(self, G: Network, H: MultiGraph, supports: Sequence[np.ndarray],
                 tree_links: Sequence[np.ndarray], roots: Sequence[int],
                 edge_u, edge_v, edge_handler, validate: bool = True):
        self.G = G
        self.S = G.subdivision()
        self.H = H
        self.supports = [np.unique(np.asarray(s, dtype=np.int64)) for s in supports]
        self.tree_links = [np.asarray(t, dtype=np.int64).reshape(-1, 2) for t in tree_links]
        self.roots = np.asarray(roots, dtype=np.int64)
        self.edge_u = np.asarray(edge_u, dtype=np.int64)
        self.edge_v = np.asarray(edge_v, dtype=np.int64)
        self.edge_handler = np.asarray(edge_handler, dtype=np.int64)
        self._forest: SupportForest | None = None
        if validate:
            verdict = validate_embedding(self)
            if not verdict:
                raise InvalidArgument("invalid embedding: " + "; ".join(verdict.violations[:5]))

    @property
    def n(self) -> int:
        return self.H.n

    @property
    def forest(self) -> SupportForest:
        if self._forest is None:
            self._forest = _orient(self.S, self.supports, self.tree_links, self.roots)
        return self._forest

    # knowledge tables -------------------------------------------------------
    def vertices_at(self) -> dict[int, list[int]]:
        """V^{-1}(w): virtual vertices whose support contains node w."""
        out: dict[int, list[int]] = {}
        for v, s in enumerate(self.supports):
            for w in s.tolist():
                out.setdefault(w, []).append(v)
        return out

    def edges_at(self) -> np.ndarray:
        """|m^{-1}(w)| per S_G node."""
        return np.bincount(self.edge_handler, minlength=self.S.n)

    def handled_per_record(self) -> np.ndarray:
        """For each support record (v, w): edges incident to v handled at w."""
        f = self.forest
        key_rec = f.owner * self.S.n + f.node
        ends = np.concatenate([self.edge_u * self.S.n + self.edge_handler,
                               self.edge_v * self.S.n + self.edge_handler])
        uk, cnt = np.unique(ends, return_counts=True)
        pos = np.searchsorted(uk, key_rec)
        pos = np.minimum(pos, max(uk.size - 1, 0))
        out = np.zeros(key_rec.size, dtype=np.int64)
        if uk.size:
            hit = uk[pos] == key_rec
            out[hit] = cnt[pos[hit]]
        return out

    def measure(self, level: str = "subdivision") -> tuple[int, int]:
        """(congestion, dilation) on S_G, or projected onto G links.

        The projection counts a G link as used by T(v) when both of its
        half-links are, and measures depth in machine hops.
        """
        f = self.forest
        if level == "subdivision":
            return f.congestion(), f.dilation()
        if level != "network":
            raise InvalidArgument("level must be 'subdivision' or 'network'")
        n = self.G.n
        ln = f.node[f.rec] >= n
        # a half-link record whose child is a machine and parent a link-node
        # completes a G link traversal
        full = (~ln) & (f.parent[f.rec] >= n)
        use = np.bincount(f.parent[f.rec][full] - n, minlength=self.G.num_links)
        machines = f.node < n
        mdepth = f.depth[machines]
        root_is_link = f.node[f.ptr[:-1]] >= n if f.num_trees else np.zeros(0, bool)
        shift = root_is_link[f.owner[machines]].astype(np.int64)
        d = int(((mdepth - shift + 1) // 2).max()) if mdepth.size else 0
        return (int(use.max()) if use.size else 0), d

    # serialization ---------------------------------------------------------
    def to_json(self) -> dict:
        return {
            "network": self.G.to_json(),
            "vertices": [{"id": v, "support": self.supports[v].tolist(),
                          "tree": self.tree_links[v].tolist(), "root": int(self.roots[v])}
                         for v in range(self.n)],
            "edges": [{"u": int(a), "v": int(b), "handler": int(h)}
                      for a, b, h in zip(self.edge_u, self.edge_v, self.edge_handler)],
        }

    def dump(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def from_json(cls, data: dict) -> "Embedding":
        net = data["network"]
        G = Network(net["n"], net["links"], net.get("bandwidth"))
        verts = sorted(data["vertices"], key=lambda r: r["id"])
        if [r["id"] for r in verts] != list(range(len(verts))):
            raise InvalidArgument("vertex ids must be 0..n-1")
        eu = [e["u"] for e in data["edges"]]
        ev = [e["v"] for e in data["edges"]]
        eh = [e["handler"] for e in data["edges"]]
        H = MultiGraph(len(verts), eu, ev, np.ones(len(eu), np.int64))
        return cls(G, H, [r["support"] for r in verts], [r["tree"] for r in verts],
                   [r["root"] for r in verts], eu, ev, eh)

    @classmethod
    def load(cls, path: str) -> "Embedding":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def _flat_trees(S: Network, tree_links, roots):
    """Tree links as flat arrays plus the sorted (tree, node) record keys they touch."""
    nt = len(tree_links)
    N = max(S.n, 1)
    sizes = np.fromiter((t.shape[0] for t in tree_links), dtype=np.int64, count=nt)
    owner = np.repeat(np.arange(nt), sizes)
    TL = np.concatenate(tree_links) if nt else np.zeros((0, 2), np.int64)
    TL = TL.reshape(-1, 2).astype(np.int64)
    roots = np.asarray(roots, dtype=np.int64)
    keys = np.unique(np.concatenate([np.arange(nt) * N + roots, owner * N + TL[:, 0], owner * N + TL[:, 1]]))
    return owner, TL, keys, sizes


def _orient(S: Network, supports, tree_links, roots) -> SupportForest:
    """Parent pointers from the root of every tree, all trees at once.

    Records are ordered by tree, then depth, then node id.
    """
    nt = len(tree_links)
    N = max(S.n, 1)
    roots = np.asarray(roots, dtype=np.int64)
    owner, TL, keys, _ = _flat_trees(S, tree_links, roots)
    ia = np.searchsorted(keys, owner * N + TL[:, 0])
    ib = np.searchsorted(keys, owner * N + TL[:, 1])
    depth = np.full(keys.size, -1, dtype=np.int64)
    parent = np.full(keys.size, -1, dtype=np.int64)
    depth[np.searchsorted(keys, np.arange(nt) * N + roots)] = 0
    while True:
        fa = (depth[ia] >= 0) & (depth[ib] < 0)
        fb = (depth[ib] >= 0) & (depth[ia] < 0)
        if not (fa.any() or fb.any()):
            break
        child = np.concatenate([ib[fa], ia[fb]])
        par = np.concatenate([ia[fa], ib[fb]])
        depth[child] = depth[par] + 1
        parent[child] = par
    rec_owner, rec_node = keys // N, keys % N
    reached = np.flatnonzero(depth >= 0)
    order = reached[np.lexsort((rec_node[reached], depth[reached], rec_owner[reached]))]
    ptr = np.zeros(nt + 1, dtype=np.int64)
    np.cumsum(np.bincount(rec_owner[order], minlength=nt), out=ptr[1:])
    par_node = np.where(parent[order] >= 0, rec_node[np.maximum(parent[order], 0)], -1)
    return SupportForest(S, ptr, rec_node[order], par_node)


def _first(mask: np.ndarray, fmt: str, limit: int = 5) -> list[str]:
    return [fmt.format(int(i)) for i in np.flatnonzero(mask)[:limit]]


def validate_embedding(E: Embedding) -> EmbeddingVerdict:
    bad: list[str] = []
    S = E.S
    N = max(S.n, 1)
    if E.H.n > max(E.G.n, 1) ** 2:
        bad.append("more virtual vertices than |V_G|^2")
    nt = E.H.n
    if len(E.supports) != nt or len(E.tree_links) != nt or E.roots.size != nt:
        bad.append("support/tree/root count differs from |V_H|")
        return EmbeddingVerdict(False, bad)
    sup_size = np.fromiter((s.size for s in E.supports), dtype=np.int64, count=nt)
    sup_node = np.concatenate(E.supports) if nt else np.zeros(0, np.int64)
    sup_owner = np.repeat(np.arange(nt), sup_size)
    if sup_node.size and (sup_node.min() < 0 or sup_node.max() >= S.n):
        bad += _first(np.bincount(sup_owner[(sup_node < 0) | (sup_node >= S.n)], minlength=nt) > 0,
                      "support of {} has unknown nodes")
        return EmbeddingVerdict(False, bad)
    skeys = sup_owner * N + sup_node  # sorted: supports are unique-sorted per vertex

    def in_sup(o, x):
        k = np.asarray(o, np.int64) * N + np.asarray(x, np.int64)
        if skeys.size == 0:
            return np.zeros(k.shape, dtype=bool)
        i = np.minimum(np.searchsorted(skeys, k), skeys.size - 1)
        return skeys[i] == k

    bad += _first(~in_sup(np.arange(nt), E.roots), "root of {} outside its support")
    owner, TL, _, sizes = _flat_trees(S, E.tree_links, E.roots)
    bad += _first(sizes != sup_size - 1, "tree of {} has a link count that does not match its support (cycle or gap)")
    lo, hi = np.minimum(TL[:, 0], TL[:, 1]), np.maximum(TL[:, 0], TL[:, 1])
    k = lo * N + hi
    if S._keys.size:
        i = np.minimum(np.searchsorted(S._keys, k), S._keys.size - 1)
        is_link = S._keys[i] == k
    else:
        is_link = np.zeros(k.size, dtype=bool)
    bad += _first(np.bincount(owner[~is_link], minlength=nt) > 0, "tree of {} uses a non-link")
    inside = in_sup(owner, TL[:, 0]) & in_sup(owner, TL[:, 1])
    bad += _first(np.bincount(owner[~inside], minlength=nt) > 0, "tree of {} leaves its support")
    if not bad and skeys.size:
        ia = np.searchsorted(skeys, owner * N + TL[:, 0])
        ib = np.searchsorted(skeys, owner * N + TL[:, 1])
        g = coo_matrix((np.ones(ia.size), (ia, ib)), shape=(skeys.size, skeys.size))
        _, lab = connected_components(g, directed=False)
        first = np.repeat(np.cumsum(sup_size) - sup_size, sup_size)
        split = np.bincount(sup_owner[lab != lab[first]], minlength=nt) > 0
        bad += _first(split, "tree of {} does not span its support")
    if E.edge_u.size:
        if (E.edge_u == E.edge_v).any():
            bad += _first(E.edge_u == E.edge_v, "self-loop at edge {}")
        ok = in_sup(E.edge_u, E.edge_handler) & in_sup(E.edge_v, E.edge_handler)
        bad += _first(~ok, "handler of edge {} outside V(u)∩V(v)")
    # multiplicities must match the edge list
    check = MultiGraph(E.H.n, E.edge_u, E.edge_v, np.ones(E.edge_u.size, np.int64)) \
        if E.edge_u.size else MultiGraph(E.H.n, [], [], [])
    if check != E.H:
        bad.append("edge list does not match the virtual multigraph")
    if not bad:
        try:
            f = E.forest
            per_link = np.bincount(S.link_ids(TL[:, 0], TL[:, 1]), minlength=S.num_links) \
                if TL.size else np.zeros(S.num_links, np.int64)
            if not np.array_equal(per_link, f.trees_per_link):
                bad.append("T^{-1} table inconsistent with trees")
            if E.edges_at().sum() != E.edge_u.size:
                bad.append("m^{-1} table lost edges")
        except InvalidNetwork as exc:
            bad.append(str(exc))
    return EmbeddingVerdict(not bad, bad)


# ---------------------------------------------------------------------------
# builders


def _star_links(v: int, nodes: Iterable[int]) -> np.ndarray:
    return np.asarray([(v, x) for x in nodes], dtype=np.int64).reshape(-1, 2)


def build_identity(G: Network) -> Embedding:
    """H = G: each vertex is its machine plus its incident link-nodes."""
    n = G.n
    supports, trees = [], []
    for v in range(n):
        lnodes = (G.nbr_link[G.indptr[v]:G.indptr[v + 1]] + n).tolist()
        supports.append(np.asarray([v] + lnodes))
        trees.append(_star_links(v, lnodes))
    H = MultiGraph(n, G.links[:, 0], G.links[:, 1], np.ones(G.num_links, np.int64))
    handler = np.arange(G.num_links) + n
    return Embedding(G, H, supports, trees, np.arange(n), G.links[:, 0], G.links[:, 1], handler)


def build_clusters(G: Network, clusters: Sequence[tuple[Sequence[int], int]]) -> Embedding:
    """One virtual vertex per disjoint connected cluster ``(members, leader)``."""
    n = G.n
    owner = np.full(n, -1, dtype=np.int64)
    for x, (members, leader) in enumerate(clusters):
        mem = np.asarray(list(members), dtype=np.int64)
        if (owner[mem] >= 0).any():
            raise InvalidArgument("clusters must be disjoint")
        if leader not in set(mem.tolist()):
            raise InvalidArgument(f"leader of cluster {x} is not a member")
        owner[mem] = x
    supports, trees, roots = [], [], []
    for x, (members, leader) in enumerate(clusters):
        mem = set(int(w) for w in members)
        par: dict[int, int] = {leader: -1}
        dq = deque([leader])
        while dq:
            w = dq.popleft()
            s, e = G.indptr[w], G.indptr[w + 1]
            for y, lid in sorted(zip(G.nbr[s:e].tolist(), G.nbr_link[s:e].tolist())):
                ln = n + lid
                if ln not in par:
                    par[ln] = w
                    if y in mem and y not in par:
                        par[y] = ln
                        dq.append(y)
        if not mem <= set(par):
            raise InvalidArgument(f"cluster {x} is not connected")
        supports.append(np.asarray(sorted(par)))
        trees.append(np.asarray([(p, c) for c, p in par.items() if p >= 0], dtype=np.int64).reshape(-1, 2))
        roots.append(leader)
    a, b = owner[G.links[:, 0]], owner[G.links[:, 1]]
    cross = (a >= 0) & (b >= 0) & (a != b)
    eu, ev = a[cross], b[cross]
    handler = np.flatnonzero(cross) + n
    H = MultiGraph(len(clusters), eu, ev, np.ones(eu.size, np.int64))
    return Embedding(G, H, supports, trees, roots, eu, ev, handler)


def _bfs_tree(S: Network, root: int, radius: int) -> dict[int, int]:
    """BFS in S up to ``radius`` hops; parent tie-break by smallest id."""
    par = {root: -1}
    frontier = [root]
    for _ in range(radius):
        cand: dict[int, int] = {}
        for x in frontier:
            for y in S.neighbors(x).tolist():
                if y not in par and (y not in cand or x < cand[y]):
                    cand[y] = x
        par.update(cand)
        frontier = sorted(cand)
    return par


def _power_edges(G: Network, t: int, parents: Sequence[dict[int, int]]):
    """One edge per simple G path of length <= t realized in T(u) ∪ T(v)."""
    n = G.n
    eu, ev, eh = [], [], []

    def in_tree(p: dict[int, int], a: int, b: int) -> bool:
        return p.get(a) == b or p.get(b) == a

    for u in range(n):
        stack = [(u, [u], [])]
        while stack:
            x, path, lks = stack.pop()
            L = len(lks)
            if L:
                v = x
                if v > u:
                    seq = [path[0]]
                    for lk, y in zip(lks, path[1:]):
                        seq.extend((n + lk, y))
                    pu, pv = parents[u], parents[v]
                    if all(in_tree(pu, a, b) or in_tree(pv, a, b) for a, b in zip(seq, seq[1:])):
                        eu.append(u)
                        ev.append(v)
                        eh.append(seq[L])
            if L == t:
                continue
            s, e = G.indptr[x], G.indptr[x + 1]
            for y, lk in zip(G.nbr[s:e].tolist(), G.nbr_link[s:e].tolist()):
                if y not in path:
                    stack.append((y, path + [y], lks + [lk]))
    return eu, ev, eh


def _power_from_parents(G: Network, t: int, parents: list[dict[int, int]]) -> Embedding:
    supports = [np.asarray(sorted(p)) for p in parents]
    trees = [np.asarray([(q, c) for c, q in p.items() if q >= 0], dtype=np.int64).reshape(-1, 2)
             for p in parents]
    eu, ev, eh = _power_edges(G, t, parents)
    H = MultiGraph(G.n, eu, ev, np.ones(len(eu), np.int64))
    return Embedding(G, H, supports, trees, np.arange(G.n), eu, ev, eh)


def build_power(G: Network, t: int) -> Embedding:
    """Embedding whose deg+1 colorings are distance-t colorings of G."""
    if t < 1:
        raise InvalidArgument("t must be >= 1")
    S = G.subdivision()
    parents = [_bfs_tree(S, v, t) for v in range(G.n)]
    return _power_from_parents(G, t, parents)


def build_power_distributed(G: Network, t: int, engine: RoundEngine | None = None) -> tuple[Embedding, int]:
    """Construct the power embedding by flooding ``(origin, hops)`` records on S_G.

    Phase ``i`` forwards every record first learned in phase ``i-1``; a
    node adopts the smallest-id sender of a new origin as its parent.
    Messages are queued per link direction and drained through the round
    engine, so the returned round count reflects real congestion.
    """
    if t < 1:
        raise InvalidArgument("t must be >= 1")
    S = G.subdivision()
    engine = engine or RoundEngine(S)
    idb = ceil_log2(max(S.n, 2))
    hb = max(1, ceil_log2(t + 1))
    msg_bits = idb + hb
    per_round = max(1, engine.net.bandwidth // msg_bits)
    parent: list[dict[int, int]] = [dict() for _ in range(S.n)]  # node -> {origin: parent}
    fresh = [[] for _ in range(S.n)]
    for v in range(G.n):
        parent[v][v] = -1
        fresh[v].append(v)
    start = engine.round
    for hop in range(1, t + 1):
        queues: dict[tuple[int, int], deque] = {}
        for x in range(S.n):
            for o in fresh[x]:
                for y in S.neighbors(x).tolist():
                    queues.setdefault((x, y), deque()).append(o)
        fresh = [[] for _ in range(S.n)]
        offers: dict[int, dict[int, int]] = {}
        while any(queues.values()):
            plan: dict[int, list] = {}
            for (x, y), q in queues.items():
                for _ in range(min(per_round, len(q))):
                    o = q.popleft()
                    payload = format(o, f"0{idb}b") + format(hop - 1, f"0{hb}b")
                    plan.setdefault(x, []).append((y, payload))
            inbox = engine.run_round(plan)
            for y, msgs in inbox.items():
                for x, payload in msgs:
                    o = int(payload[:idb], 2)
                    if o in parent[y]:
                        continue
                    best = offers.setdefault(y, {})
                    if o not in best or x < best[o]:
                        best[o] = x
        for y, best in offers.items():
            for o, x in best.items():
                parent[y][o] = x
                fresh[y].append(o)
        for y in range(S.n):
            fresh[y].sort()
    trees: list[dict[int, int]] = [dict() for _ in range(G.n)]
    for x in range(S.n):
        for o, p in parent[x].items():
            trees[o][x] = p
    return _power_from_parents(G, t, trees), engine.round - start


def lift_network_trees(G: Network, H: MultiGraph, trees: Sequence[tuple[int, Sequence[tuple[int, int]]]],
                       edges: Sequence[tuple[int, int, int]]) -> Embedding:
    """Build an embedding from supports given as trees of G links.

    ``trees[v] = (root machine, [(a, b), ...] G links)`` and
    ``edges = [(u, v, handler machine), ...]``.  Each G link of a tree
    contributes its link-node and both half-links.
    """
    n = G.n
    supports, tls, roots = [], [], []
    for root, links in trees:
        nodes = {root}
        tl = []
        for a, b in links:
            ln = n + G.link_id(a, b)
            nodes.update((a, b, ln))
            tl.extend([(a, ln), (ln, b)])
        supports.append(np.asarray(sorted(nodes)))
        tls.append(np.asarray(tl, dtype=np.int64).reshape(-1, 2))
        roots.append(root)
    eu = [e[0] for e in edges]
    ev = [e[1] for e in edges]
    eh = [e[2] for e in edges]
    return Embedding(G, H, supports, tls, roots, eu, ev, eh)


def spider_example() -> Embedding:
    """Small embedding with unique support trees, congestion 1 and dilation 3.

    G is a spider: hub machine 0 with three legs of three machines each.
    Three virtual vertices own one leg each (rooted at the leg tip, so the
    tree has depth 3) and share the hub; a fourth virtual vertex sits on the
    hub alone and is joined to the first leg vertex by two parallel edges.
    """
    legs = [[1, 2, 3], [4, 5, 6], [7, 8, 9]]
    links = []
    for leg in legs:
        chain = [0] + leg
        links.extend(zip(chain, chain[1:]))
    G = Network(10, links)
    trees = []
    for leg in legs:
        chain = [0] + leg
        trees.append((leg[-1], list(zip(chain, chain[1:]))))
    trees.append((0, []))
    edges = [(0, 1, 0), (0, 2, 0), (1, 2, 0), (0, 3, 0), (0, 3, 0), (1, 3, 0), (2, 3, 0)]
    H = MultiGraph.from_edges(4, [(a, b) for a, b, _ in edges])
    return lift_network_trees(G, H, trees, edges)


def power_distance_ok(G: Network, t: int, colors) -> bool:
    """Brute-force check that machines within distance t have distinct colors."""
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import shortest_path
    c = np.asarray(colors)
    if G.n == 0:
        return True
    A = csr_matrix((np.ones(G.num_links), (G.links[:, 0], G.links[:, 1])), shape=(G.n, G.n))
    D = shortest_path(A, directed=False, unweighted=True)
    iu, ju = np.triu_indices(G.n, 1)
    close = D[iu, ju] <= t
    return not bool((c[iu[close]] == c[ju[close]]).any())
