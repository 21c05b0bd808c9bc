"""Multigraphs, partial colorings and exact slack quantities.

A :class:`MultiGraph` stores one multiplicity per unordered vertex pair and a
symmetric CSR adjacency index.  Colors are positive integers; the sentinel
:data:`UNCOLORED` marks vertices without a color.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

UNCOLORED = 0


class InvalidArgument(ValueError):
    """Raised for unknown vertex ids or malformed inputs."""


class MultiGraph:
    """Undirected loopless multigraph on vertices ``0..n-1``.

    Pairs are kept as three parallel arrays ``pair_u < pair_v`` with
    multiplicities ``pair_m``, sorted lexicographically.  ``indptr``/``nbr``/
    ``nbr_mult`` is the symmetric CSR view (one entry per distinct neighbor).
    """

    def __init__(self, n: int, pair_u, pair_v, pair_m):
        self.n = int(n)
        u = np.asarray(pair_u, dtype=np.int64)
        v = np.asarray(pair_v, dtype=np.int64)
        m = np.asarray(pair_m, dtype=np.int64)
        if not (u.shape == v.shape == m.shape):
            raise InvalidArgument("pair arrays must have equal length")
        if u.size:
            if (u == v).any():
                raise InvalidArgument("self-loops are not allowed")
            if min(u.min(), v.min()) < 0 or max(u.max(), v.max()) >= self.n:
                raise InvalidArgument("vertex id out of range")
            if (m < 0).any():
                raise InvalidArgument("negative multiplicity")
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        keep = m > 0
        lo, hi, m = lo[keep], hi[keep], m[keep]
        # merge duplicate pairs
        key = lo * max(self.n, 1) + hi
        uniq, inv = np.unique(key, return_inverse=True)
        mm = np.bincount(inv, weights=m, minlength=uniq.size).astype(np.int64)
        self.pair_u = (uniq // max(self.n, 1)).astype(np.int64)
        self.pair_v = (uniq % max(self.n, 1)).astype(np.int64)
        self.pair_m = mm
        self._build_csr()

    def _build_csr(self) -> None:
        n = self.n
        src = np.concatenate([self.pair_u, self.pair_v])
        dst = np.concatenate([self.pair_v, self.pair_u])
        mul = np.concatenate([self.pair_m, self.pair_m])
        pid = np.concatenate([np.arange(self.pair_u.size)] * 2)
        order = np.lexsort((dst, src))
        src, dst, mul, pid = src[order], dst[order], mul[order], pid[order]
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=self.indptr[1:])
        self.nbr = dst.astype(np.int64)
        self.nbr_mult = mul.astype(np.int64)
        self.nbr_pair = pid.astype(np.int64)
        self.degree = np.diff(self.indptr)
        self.pseudo_degree = np.bincount(src, weights=mul, minlength=n).astype(np.int64)

    # construction helpers -------------------------------------------------
    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "MultiGraph":
        """Build from a list of (possibly repeated) edges."""
        arr = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        return cls(n, arr[:, 0], arr[:, 1], np.ones(len(arr), dtype=np.int64))

    @classmethod
    def from_pairs(cls, n: int, pairs: dict[tuple[int, int], int]) -> "MultiGraph":
        items = list(pairs.items())
        u = [a for (a, _), _ in items]
        v = [b for (_, b), _ in items]
        m = [k for _, k in items]
        return cls(n, u, v, m)

    # queries ---------------------------------------------------------------
    @property
    def num_pairs(self) -> int:
        return int(self.pair_u.size)

    @property
    def num_edges(self) -> int:
        return int(self.pair_m.sum())

    def _check(self, v: int) -> int:
        v = int(v)
        if not 0 <= v < self.n:
            raise InvalidArgument(f"unknown vertex {v}")
        return v

    def neighbors(self, v: int) -> np.ndarray:
        v = self._check(v)
        return self.nbr[self.indptr[v]:self.indptr[v + 1]]

    def neighbor_mults(self, v: int) -> np.ndarray:
        v = self._check(v)
        return self.nbr_mult[self.indptr[v]:self.indptr[v + 1]]

    def multiplicity(self, u: int, v: int) -> int:
        u, v = self._check(u), self._check(v)
        nb = self.neighbors(u)
        i = np.searchsorted(nb, v)
        if i < nb.size and nb[i] == v:
            return int(self.nbr_mult[self.indptr[u] + i])
        return 0

    def deg(self, v: int) -> int:
        """Pseudo-degree (edges counted with multiplicity)."""
        return int(self.pseudo_degree[self._check(v)])

    def simple_adjacency(self):
        """Scipy CSR adjacency with unit weights."""
        from scipy.sparse import csr_matrix
        data = np.ones(self.nbr.size, dtype=np.int8)
        return csr_matrix((data, self.nbr, self.indptr), shape=(self.n, self.n))

    def induced(self, vertices: Sequence[int]) -> tuple["MultiGraph", np.ndarray]:
        """Subgraph induced by ``vertices``; returns it and the id map new->old."""
        old = np.unique(np.asarray(vertices, dtype=np.int64))
        pos = np.full(self.n, -1, dtype=np.int64)
        pos[old] = np.arange(old.size)
        keep = (pos[self.pair_u] >= 0) & (pos[self.pair_v] >= 0)
        return MultiGraph(old.size, pos[self.pair_u[keep]], pos[self.pair_v[keep]],
                          self.pair_m[keep]), old

    def edges_with_multiplicity(self) -> np.ndarray:
        """Array of shape (m, 2) listing every edge copy (u < v)."""
        return np.repeat(np.stack([self.pair_u, self.pair_v], axis=1), self.pair_m, axis=0)

    # text format -------------------------------------------------------------
    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"{self.n} {self.num_pairs}\n")
        for a, b, k in zip(self.pair_u.tolist(), self.pair_v.tolist(), self.pair_m.tolist()):
            buf.write(f"{a} {b} {k}\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "MultiGraph":
        lines = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
        if not lines or len(lines[0]) != 2:
            raise InvalidArgument("missing header 'n m_pairs'")
        n, mp = int(lines[0][0]), int(lines[0][1])
        body = lines[1:]
        if len(body) != mp:
            raise InvalidArgument(f"header announces {mp} pairs, found {len(body)}")
        if mp == 0:
            return cls(n, [], [], [])
        arr = np.asarray(body, dtype=np.int64)
        if arr.shape[1] != 3:
            raise InvalidArgument("pair lines must be 'u v mult'")
        return cls(n, arr[:, 0], arr[:, 1], arr[:, 2])

    def __eq__(self, other) -> bool:
        return (isinstance(other, MultiGraph) and self.n == other.n
                and np.array_equal(self.pair_u, other.pair_u)
                and np.array_equal(self.pair_v, other.pair_v)
                and np.array_equal(self.pair_m, other.pair_m))

    def __repr__(self) -> str:
        return f"MultiGraph(n={self.n}, pairs={self.num_pairs}, edges={self.num_edges})"


class PartialColoring:
    """Vertex -> color map backed by an int64 array (``UNCOLORED`` = no color)."""

    __slots__ = ("colors",)

    def __init__(self, n_or_colors):
        if isinstance(n_or_colors, (int, np.integer)):
            self.colors = np.zeros(int(n_or_colors), dtype=np.int64)
        else:
            self.colors = np.array(n_or_colors, dtype=np.int64)
        if (self.colors < 0).any():
            raise InvalidArgument("colors must be positive integers")

    def __array__(self, dtype=None, copy=None):
        return self.colors if dtype is None else self.colors.astype(dtype)

    def __len__(self) -> int:
        return self.colors.size

    def __getitem__(self, v):
        return self.colors[v]

    def __setitem__(self, v, c):
        self.colors[v] = c

    def copy(self) -> "PartialColoring":
        return PartialColoring(self.colors.copy())

    def domain(self) -> np.ndarray:
        return np.flatnonzero(self.colors != UNCOLORED)

    def is_colored(self, v: int) -> bool:
        return self.colors[v] != UNCOLORED

    def extends(self, other: "PartialColoring | np.ndarray") -> bool:
        """True iff this coloring agrees with ``other`` on ``dom other``."""
        o = np.asarray(other)
        d = o != UNCOLORED
        return bool(np.array_equal(self.colors[d], o[d]))

    def is_proper(self, g: MultiGraph) -> bool:
        cu, cv = self.colors[g.pair_u], self.colors[g.pair_v]
        return not bool(((cu == cv) & (cu != UNCOLORED)).any())


def as_colors(coloring) -> np.ndarray:
    return np.asarray(coloring, dtype=np.int64)


# ---------------------------------------------------------------------------
# slack quantities


def _vset(g: MultiGraph, S) -> np.ndarray:
    s = np.unique(np.asarray(list(S) if not isinstance(S, np.ndarray) else S, dtype=np.int64))
    if s.size and (s.min() < 0 or s.max() >= g.n):
        raise InvalidArgument("vertex set contains unknown ids")
    return s


def savings(g: MultiGraph, coloring, v: int, S) -> int:
    """|S ∩ dom c| − |c(S) ∩ [deg(v)+1]|, with ``v`` itself removed from S."""
    v = g._check(v)
    c = as_colors(coloring)
    s = _vset(g, S)
    s = s[s != v]
    cs = c[s]
    cs = cs[cs != UNCOLORED]
    in_range = np.unique(cs[cs <= g.pseudo_degree[v] + 1])
    return int(cs.size - in_range.size)


def redundancy(g: MultiGraph, v: int) -> int:
    """max over integer 0 <= t <= |N(v)|//12 of |N(v)| − t − #{u ∈ N(v): deg(u)+1 > t}."""
    nb = g.neighbors(v)
    k = nb.size
    degs = np.sort(g.pseudo_degree[nb] + 1)
    ts = np.arange(k // 12 + 1)
    above = k - np.searchsorted(degs, ts, side="right")
    return int((k - ts - above).max())


def inaccuracy(g: MultiGraph, v: int) -> int:
    return int(g.pseudo_degree[g._check(v)] - g.degree[v])


def simple_edges_within(g: MultiGraph, S) -> int:
    """Number of distinct adjacent pairs inside S."""
    s = _vset(g, S)
    mask = np.zeros(g.n, dtype=bool)
    mask[s] = True
    return int((mask[g.pair_u] & mask[g.pair_v]).sum())


def sparsity(g: MultiGraph, v: int) -> Fraction:
    nb = g.neighbors(v)
    k = nb.size
    if k == 0:
        return Fraction(0)
    missing = k * (k - 1) // 2 - simple_edges_within(g, nb)
    return Fraction(missing, k)


def unevenness(g: MultiGraph, v: int, S) -> Fraction:
    v = g._check(v)
    dv = int(g.pseudo_degree[v])
    total = Fraction(0)
    for u in _vset(g, S).tolist():
        du = int(g.pseudo_degree[u])
        if du > dv:
            total += Fraction(du - dv, du + 1)
    return total


@dataclass
class SlackProfile:
    savings: int
    redundancy: int
    inaccuracy: int
    unevenness: Fraction
    sparsity: Fraction
    inaccuracy_external: int | None = None
    inaccuracy_anti: int | None = None


def slack_profile(g: MultiGraph, coloring, v: int) -> SlackProfile:
    nb = g.neighbors(v)
    return SlackProfile(
        savings=savings(g, coloring, v, nb),
        redundancy=redundancy(g, v),
        inaccuracy=inaccuracy(g, v),
        unevenness=unevenness(g, v, nb),
        sparsity=sparsity(g, v),
    )


# ---------------------------------------------------------------------------
# verification


@dataclass
class Verdict:
    ok: bool
    conflicts: list[tuple[int, int]] = field(default_factory=list)
    out_of_range: list[int] = field(default_factory=list)
    uncolored: list[int] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok

    def summary(self) -> dict:
        return {"ok": self.ok, "conflicts": len(self.conflicts),
                "out_of_range": len(self.out_of_range), "uncolored": len(self.uncolored)}


def verify_coloring(g: MultiGraph, coloring, require_total: bool = False) -> Verdict:
    """Check properness, the deg+1 range and (optionally) totality."""
    c = as_colors(coloring)
    if c.size != g.n:
        raise InvalidArgument("coloring size does not match graph")
    cu, cv = c[g.pair_u], c[g.pair_v]
    bad = np.flatnonzero((cu == cv) & (cu != UNCOLORED))
    conflicts = list(zip(g.pair_u[bad].tolist(), g.pair_v[bad].tolist()))
    oor = np.flatnonzero((c != UNCOLORED) & (c > g.pseudo_degree + 1)).tolist()
    unc = np.flatnonzero(c == UNCOLORED).tolist() if require_total else []
    return Verdict(not (conflicts or oor or unc), conflicts, oor, unc)


def clique_palette(coloring, K, cap: int) -> set[int]:
    """[cap] minus the colors used inside K."""
    if cap < 1:
        raise InvalidArgument("cap must be >= 1")
    c = as_colors(coloring)
    used = set(c[np.asarray(list(K) if not isinstance(K, np.ndarray) else K, dtype=np.int64)].tolist())
    return {x for x in range(1, cap + 1) if x not in used}


def palette(g: MultiGraph, coloring, v: int) -> set[int]:
    """Colors of [deg(v)+1] not used by any neighbor."""
    c = as_colors(coloring)
    used = set(c[g.neighbors(v)].tolist())
    return {x for x in range(1, int(g.pseudo_degree[v]) + 2) if x not in used}


def colored_pseudo_degree(g: MultiGraph, coloring) -> np.ndarray:
    """Per-vertex number of incident edge copies whose other endpoint is colored."""
    c = as_colors(coloring)
    src = np.repeat(np.arange(g.n), g.degree)
    w = g.nbr_mult * (c[g.nbr] != UNCOLORED)
    return np.bincount(src, weights=w, minlength=g.n).astype(np.int64)


def uncolored_pseudo_degree(g: MultiGraph, coloring) -> np.ndarray:
    return g.pseudo_degree - colored_pseudo_degree(g, coloring)
