"""Deterministic instance generators; every kind returns a validated Embedding."""

from __future__ import annotations

from collections import deque
from pathlib import Path

import numpy as np

from ..embedding import Embedding, build_clusters, build_identity, build_power
from ..lowerbound import NUM_INPUTS, build_lb_graphs
from ..multigraph import InvalidArgument, MultiGraph
from ..netsim import Network

KINDS = ("gnp", "cycle", "path", "clique-blobs", "power", "clusters", "lb-gadget", "file")


def _pair_index(n: int, k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Decode row-major indices of the strict upper triangle into (i, j)."""
    total = n * (n - 1) // 2
    i = n - 2 - np.floor(np.sqrt(-8.0 * k + 4.0 * n * (n - 1) - 7) / 2 - 0.5).astype(np.int64)
    j = k + i + 1 - total + (n - i) * (n - i - 1) // 2
    return i, j


def gnp_links(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    total = n * (n - 1) // 2
    if total == 0 or p <= 0:
        return np.zeros((0, 2), np.int64)
    m = rng.binomial(total, min(p, 1.0))
    k = np.sort(rng.choice(total, size=m, replace=False))
    i, j = _pair_index(n, k)
    return np.stack([i, j], axis=1)


def cycle_links(n: int) -> np.ndarray:
    a = np.arange(n)
    return np.stack([a, (a + 1) % n], axis=1)


def path_links(n: int) -> np.ndarray:
    a = np.arange(n - 1)
    return np.stack([a, a + 1], axis=1)


def blob_links(rng: np.random.Generator, blobs: int, size: int, p_in: float, ext: float,
               sparse: int, sparse_p: float) -> tuple[int, np.ndarray]:
    """Near-cliques of ``size`` with external degree about ``ext`` plus a sparse tail.

    ``ext`` steers e_K: zero keeps every blob isolated (a cabal at any ℓ),
    values at or above ℓ make the blobs non-cabals.  External degrees are
    nearly regular, since a heavy tail would push members past the
    (1 + ε)|K| degree cap of an almost-clique.
    """
    n = blobs * size + sparse
    parts = []
    iu, iv = np.triu_indices(size, 1)
    for b in range(blobs):
        keep = rng.random(iu.size) < p_in
        parts.append(np.stack([iu[keep], iv[keep]], axis=1) + b * size)
    if ext > 0 and blobs > 1:
        # each round joins every blob to a shifted partner blob by a random
        # bijection, adding two external edges per vertex; an odd remainder
        # uses half bijections
        rounds = int(np.ceil(ext / 2))
        for rd in range(rounds):
            shift = 1 + rd % (blobs - 1)
            half = ext % 2 and rd == rounds - 1
            for b in range(blobs):
                c = (b + shift) % blobs
                src = rng.permutation(size)[: size // 2 if half else size]
                dst = rng.permutation(size)[: src.size]
                parts.append(np.stack([b * size + src, c * size + dst], axis=1))
    if sparse:
        base = blobs * size
        tail = gnp_links(sparse, sparse_p, rng) + base
        hook = np.stack([base + rng.integers(sparse, size=sparse),
                         rng.integers(max(base, 1), size=sparse)], axis=1) if base else np.zeros((0, 2), np.int64)
        parts += [tail, hook]
    links = np.concatenate(parts) if parts else np.zeros((0, 2), np.int64)
    links = np.sort(links, axis=1)
    links = links[links[:, 0] != links[:, 1]]
    return n, np.unique(links, axis=0)


def voronoi_clusters(G: Network, centers: np.ndarray) -> list[tuple[list[int], int]]:
    """Multi-source BFS; ties go to the earliest center, so every cluster is connected."""
    owner = np.full(G.n, -1, dtype=np.int64)
    dq = deque()
    for x, c in enumerate(centers.tolist()):
        if owner[c] < 0:
            owner[c] = x
            dq.append(c)
    while dq:
        w = dq.popleft()
        for y in G.neighbors(w).tolist():
            if owner[y] < 0:
                owner[y] = owner[w]
                dq.append(y)
    out = []
    for x, c in enumerate(centers.tolist()):
        mem = np.flatnonzero(owner == x).tolist()
        if mem:
            out.append((mem, c))
    return out


def _network(n: int, links, bandwidth):
    arr = np.sort(np.asarray(links, np.int64).reshape(-1, 2), axis=1)
    arr = np.unique(arr[arr[:, 0] != arr[:, 1]], axis=0)
    return Network(n, arr, bandwidth)


def generate_instance(kind: str, params: dict | None = None, seed: int = 0,
                      bandwidth: int | None = None) -> Embedding:
    """Build an embedding of the given ``kind``; same arguments, same bytes."""
    p = dict(params or {})
    rng = np.random.default_rng([seed, KINDS.index(kind) if kind in KINDS else 99])
    if kind == "gnp":
        n = int(p.get("n", 200))
        return build_identity(_network(n, gnp_links(n, float(p.get("p", 0.05)), rng), bandwidth))
    if kind == "cycle":
        n = int(p.get("n", 100))
        return build_identity(_network(n, cycle_links(n), bandwidth))
    if kind == "path":
        n = int(p.get("n", 100))
        return build_identity(_network(n, path_links(n), bandwidth))
    if kind == "clique-blobs":
        p_in = float(p.get("p_in", 0.98))
        if p_in < 0.97:
            raise InvalidArgument("clique-blobs needs p_in >= 0.97")
        n, links = blob_links(rng, int(p.get("blobs", 4)), int(p.get("size", 128)), p_in,
                              float(p.get("ext", 0.0)), int(p.get("sparse", 0)),
                              float(p.get("sparse_p", 0.02)))
        return build_identity(_network(n, links, bandwidth))
    if kind == "power":
        base, n, t = p.get("base", "cycle"), int(p.get("n", 12)), int(p.get("t", 2))
        links = cycle_links(n) if base == "cycle" else gnp_links(n, float(p.get("p", 0.1)), rng)
        return build_power(_network(n, links, bandwidth), t)
    if kind == "clusters":
        n, m = int(p.get("n", 400)), int(p.get("clusters", 40))
        links = np.concatenate([path_links(n), gnp_links(n, float(p.get("p", 0.01)), rng)])
        G = _network(n, links, bandwidth)
        centers = rng.choice(n, size=min(m, n), replace=False)
        return build_clusters(G, voronoi_clusters(G, centers))
    if kind == "lb-gadget":
        k = int(p.get("k", 4))
        x = p.get("x", rng.integers(NUM_INPUTS, size=k))
        y = p.get("y", rng.integers(NUM_INPUTS, size=k))
        return build_lb_graphs(k, x, y, bandwidth).emb
    if kind == "file":
        path = Path(p["path"])
        if path.suffix == ".json":
            return Embedding.load(str(path))
        g = MultiGraph.from_text(path.read_text())
        if (g.pair_m > 1).any():
            raise InvalidArgument("a network file cannot have parallel links")
        return build_identity(_network(g.n, np.stack([g.pair_u, g.pair_v], axis=1), bandwidth))
    raise InvalidArgument(f"unknown instance kind {kind!r}; expected one of {KINDS}")
