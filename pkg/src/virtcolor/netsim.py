"""Synchronous bandwidth-limited round engine and support-tree primitives.

The engine runs on a simple communication graph.  Every link carries at most
``bandwidth`` bits per round in each direction.  Explicit message passing goes
through :meth:`RoundEngine.run_round`; bulk tree traffic (broadcast and
converge-cast over support trees) is scheduled level by level with a FIFO per
link direction and charged through the same ledger.
"""

from __future__ import annotations

import contextlib
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import os

import numpy as np

try:
    if os.environ.get("VIRTCOLOR_PURE_PYTHON"):
        raise ImportError("fallback forced")
    from . import _netkern
except ImportError:  # pragma: no cover - depends on build
    _netkern = None


class BandwidthExceeded(RuntimeError):
    def __init__(self, link: int, round_no: int, bits: int, bandwidth: int):
        super().__init__(f"bandwidth exceeded on link {link} in round {round_no}: "
                         f"{bits} bits > {bandwidth}")
        self.link, self.round, self.bits, self.bandwidth = link, round_no, bits, bandwidth


class InvalidNetwork(ValueError):
    pass


def default_bandwidth(n: int, factor: float = 4.0) -> int:
    return max(8, math.ceil(factor * math.log2(max(n, 2))))


def ceil_log2(x) -> np.ndarray | int:
    """ceil(log2(x)) for x >= 1 (0 for x <= 1)."""
    if np.isscalar(x):
        return 0 if x <= 1 else int(x - 1).bit_length()
    a = np.asarray(x, dtype=np.int64)
    out = np.zeros(a.shape, dtype=np.int64)
    big = a > 1
    out[big] = np.ceil(np.log2(a[big].astype(np.float64))).astype(np.int64)
    # guard float rounding around exact powers of two
    fix = big & ((1 << np.clip(out, 0, 62)) < a)
    out[fix] += 1
    return out


class Network:
    """Simple undirected graph of machines with a per-direction bandwidth."""

    def __init__(self, n: int, links, bandwidth: int | None = None, per_direction: bool = True):
        self.n = int(n)
        arr = np.asarray(links, dtype=np.int64).reshape(-1, 2)
        if arr.size:
            if (arr[:, 0] == arr[:, 1]).any():
                raise InvalidNetwork("self-loop link")
            if arr.min() < 0 or arr.max() >= self.n:
                raise InvalidNetwork("link endpoint out of range")
        lo, hi = np.minimum(arr[:, 0], arr[:, 1]), np.maximum(arr[:, 0], arr[:, 1])
        key = lo * max(self.n, 1) + hi
        if np.unique(key).size != key.size:
            raise InvalidNetwork("network must be simple (duplicate link)")
        order = np.argsort(key, kind="stable")
        self.links = np.stack([lo[order], hi[order]], axis=1) if arr.size else np.zeros((0, 2), np.int64)
        self._keys = key[order]
        self.bandwidth = int(bandwidth) if bandwidth else default_bandwidth(self.n)
        self.per_direction = per_direction
        src = np.concatenate([self.links[:, 0], self.links[:, 1]])
        dst = np.concatenate([self.links[:, 1], self.links[:, 0]])
        lid = np.concatenate([np.arange(self.num_links)] * 2)
        o = np.lexsort((dst, src))
        self.indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=self.n), out=self.indptr[1:])
        self.nbr = dst[o]
        self.nbr_link = lid[o]

    @property
    def num_links(self) -> int:
        return int(self.links.shape[0])

    def neighbors(self, w: int) -> np.ndarray:
        return self.nbr[self.indptr[w]:self.indptr[w + 1]]

    def max_degree(self) -> int:
        return int(np.diff(self.indptr).max()) if self.n else 0

    def link_id(self, u: int, v: int) -> int:
        a, b = (u, v) if u < v else (v, u)
        k = a * max(self.n, 1) + b
        i = int(np.searchsorted(self._keys, k))
        if i >= self._keys.size or self._keys[i] != k:
            raise InvalidNetwork(f"no link between {u} and {v}")
        return i

    def link_ids(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        a, b = np.minimum(u, v), np.maximum(u, v)
        k = a * max(self.n, 1) + b
        i = np.searchsorted(self._keys, k)
        i = np.minimum(i, max(self._keys.size - 1, 0))
        if self._keys.size == 0 or (self._keys[i] != k).any():
            raise InvalidNetwork("unknown link in batch")
        return i

    def direction(self, src: np.ndarray | int, link) -> np.ndarray | int:
        """0 when traffic flows from the lower to the higher endpoint."""
        return (np.asarray(src) != self.links[link, 0]).astype(np.int64) if not np.isscalar(src) \
            else int(src != self.links[link, 0])

    def subdivision(self, bandwidth: int | None = None) -> "Network":
        """Bipartite graph with machines ``0..n-1`` and link-nodes ``n+e``."""
        m = self.num_links
        halves = np.empty((2 * m, 2), dtype=np.int64)
        halves[0::2, 0] = self.links[:, 0]
        halves[1::2, 0] = self.links[:, 1]
        halves[:, 1] = np.repeat(np.arange(m) + self.n, 2)
        net = Network(self.n + m, halves, bandwidth or self.bandwidth, self.per_direction)
        net.base_machines = self.n
        return net

    def to_json(self) -> dict:
        return {"n": self.n, "links": self.links.tolist(), "bandwidth": self.bandwidth}


@dataclass
class Ledger:
    """Bits per link direction plus event counters."""

    bits: np.ndarray
    fragments: np.ndarray
    bandwidth_exceeded: int = 0

    @classmethod
    def for_network(cls, net: Network) -> "Ledger":
        return cls(np.zeros(2 * net.num_links, np.int64), np.zeros(2 * net.num_links, np.int64))

    @property
    def total_bits(self) -> int:
        return int(self.bits.sum())

    def histogram(self, bins: int = 16) -> dict:
        per_link = self.bits.reshape(-1, 2).sum(axis=1)
        if per_link.size == 0:
            return {"edges": [], "counts": []}
        counts, edges = np.histogram(per_link, bins=bins)
        return {"edges": edges.tolist(), "counts": counts.tolist()}


class Transcript:
    """Newline-delimited JSON records of link traffic.

    When ``path`` is None records are only tallied, which keeps the corpus
    runs cheap while still allowing the ledger cross-check.
    """

    def __init__(self, path: str | None = None):
        self.path = path
        self._fh = open(path, "w") if path else None
        self.total_bits = 0
        self.records = 0

    def write(self, record: dict) -> None:
        self.total_bits += int(record["bits"])
        self.records += 1
        if self._fh:
            self._fh.write(json.dumps(record, separators=(",", ":")) + "\n")

    def add_block(self, bits: int, link_dirs: int) -> None:
        """Tally-only counterpart of ``write_block`` for transcripts without a file."""
        if self._fh:
            raise RuntimeError("file-backed transcripts need per-link records")
        self.total_bits += int(bits)
        self.records += int(link_dirs)

    def write_block(self, round_no: int, span: int, kind: str, link_dirs: np.ndarray,
                    bits: np.ndarray, frags: np.ndarray) -> None:
        self.total_bits += int(bits.sum())
        self.records += int(link_dirs.size)
        if self._fh:
            for ld, b, f in zip(link_dirs.tolist(), bits.tolist(), frags.tolist()):
                self._fh.write(json.dumps({"round": round_no, "span": span, "kind": kind,
                                           "link": ld >> 1, "dir": ld & 1, "bits": b,
                                           "fragments": f}, separators=(",", ":")) + "\n")

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None


@dataclass
class _LevelIndex:
    ld: np.ndarray
    inv: np.ndarray
    size: int
    level_start: np.ndarray
    key_level: np.ndarray
    nlevels: int
    scratch: np.ndarray


class SupportForest:
    """One rooted tree per virtual vertex over the nodes of a network.

    Stored flat: ``ptr`` delimits each vertex's members, ``node`` lists the
    members (root first), ``parent`` the parent node (-1 at the root),
    ``depth`` the depth in the tree.
    """

    def __init__(self, net: Network, ptr, node, parent):
        self.net = net
        self.ptr = np.asarray(ptr, dtype=np.int64)
        self.node = np.asarray(node, dtype=np.int64)
        self.parent = np.asarray(parent, dtype=np.int64)
        self.num_trees = self.ptr.size - 1
        self.owner = np.repeat(np.arange(self.num_trees), np.diff(self.ptr))
        self._index()

    @classmethod
    def from_trees(cls, net: Network, trees: Sequence[tuple[int, Mapping[int, int]]]) -> "SupportForest":
        """``trees[v] = (root, {node: parent})`` where the root is omitted from the map."""
        ptr, nodes, parents = [0], [], []
        for root, par in trees:
            nodes.append(root)
            parents.append(-1)
            for x, p in par.items():
                if x == root:
                    continue
                nodes.append(x)
                parents.append(p)
            ptr.append(len(nodes))
        return cls(net, ptr, nodes, parents)

    def _index(self) -> None:
        non_root = self.parent >= 0
        self.rec = np.flatnonzero(non_root)
        if self.rec.size:
            self.rec_link = self.net.link_ids(self.parent[self.rec], self.node[self.rec])
        else:
            self.rec_link = np.zeros(0, np.int64)
        # downward direction index for each record
        self.rec_down = (self.parent[self.rec] != self.net.links[self.rec_link, 0]).astype(np.int64) \
            if self.rec.size else np.zeros(0, np.int64)
        self.depth = self._depths()
        self.rec_depth = self.depth[self.rec]
        self.trees_per_link = np.bincount(self.rec_link, minlength=self.net.num_links)
        self.tag_bits = ceil_log2(np.maximum(self.trees_per_link, 1))
        self.rec_owner = self.owner[self.rec]
        self.rec_tag = self.tag_bits[self.rec_link].astype(np.int64)
        self.rec_rho = self.trees_per_link[self.rec_link].astype(np.int64)
        self._levels: dict[tuple[bool, bool], _LevelIndex] = {}

    def level_keys(self, upward: bool, per_direction: bool) -> "_LevelIndex":
        """(depth, link direction) classes of the records, cached per traffic direction."""
        key = (upward, per_direction)
        if key not in self._levels:
            d = self.rec_down if not upward else 1 - self.rec_down
            if not per_direction:
                d = np.zeros_like(d)
            ld = 2 * self.rec_link + d
            span = 2 * max(self.net.num_links, 1)
            uk, inv = np.unique(self.rec_depth * span + ld, return_inverse=True)
            lvl = uk // span
            start = np.flatnonzero(np.r_[True, lvl[1:] != lvl[:-1]]) if uk.size else np.zeros(0, np.int64)
            self._levels[key] = _LevelIndex(ld.astype(np.int64), inv.ravel().astype(np.int64), int(uk.size),
                                            start, lvl.astype(np.int64), int(lvl.max(initial=-1)) + 1,
                                            np.zeros(uk.size, dtype=np.int64))
        return self._levels[key]

    def _depths(self) -> np.ndarray:
        depth = np.full(self.node.size, -1, dtype=np.int64)
        n_nodes = max(self.net.n, 1)
        key = self.owner * n_nodes + self.node
        order = np.argsort(key, kind="stable")
        skey = key[order]
        if skey.size and (np.diff(skey) == 0).any():
            raise InvalidNetwork("a node appears twice in one tree")
        self.parent_pos = np.full(self.node.size, -1, dtype=np.int64)
        if self.rec.size:
            pkey = self.owner[self.rec] * n_nodes + self.parent[self.rec]
            j = np.minimum(np.searchsorted(skey, pkey), skey.size - 1)
            if (skey[j] != pkey).any():
                raise InvalidNetwork("a parent is missing from its tree")
            self.parent_pos[self.rec] = order[j]
        roots = self.parent < 0
        depth[roots] = 0
        for _ in range(self.node.size):
            pending = (depth < 0)
            if not pending.any():
                break
            pp = self.parent_pos[pending]
            ready = depth[pp] >= 0
            idx = np.flatnonzero(pending)[ready]
            if idx.size == 0:
                raise InvalidNetwork("support tree contains a cycle")
            depth[idx] = depth[self.parent_pos[idx]] + 1
        return depth

    def members(self, v: int) -> np.ndarray:
        return self.node[self.ptr[v]:self.ptr[v + 1]]

    def root(self, v: int) -> int:
        return int(self.node[self.ptr[v]])

    def congestion(self) -> int:
        return int(self.trees_per_link.max()) if self.trees_per_link.size else 0

    def dilation(self) -> int:
        return int(self.depth.max()) if self.depth.size else 0


def measure_congestion_dilation(forest: SupportForest) -> tuple[int, int]:
    return forest.congestion(), forest.dilation()


@dataclass
class TreeOpResult:
    rounds: int
    values: np.ndarray | None = None


def _tree_charge_numpy(forest: SupportForest, lv: "_LevelIndex", b: np.ndarray, sel: np.ndarray,
                       bw: int, nld: int):
    """Vectorized twin of the compiled kernel; returns None when no record is selected."""
    rsel = sel[forest.rec_owner]
    if not rsel.any():
        return None
    tag = forest.rec_tag[rsel]
    cap = bw - tag
    bad_local = np.flatnonzero(cap <= 0)
    bad = int(np.flatnonzero(rsel)[bad_local[0]]) if bad_local.size else -1
    cap = np.maximum(cap, 1)
    pb = b[forest.rec_owner[rsel]]
    frags = -(-pb // cap)
    lvl_load = np.bincount(lv.inv[rsel], weights=frags, minlength=lv.size).astype(np.int64)
    rounds = int(np.maximum.reduceat(lvl_load, lv.level_start).sum())
    bound = int(forest.rec_rho[rsel].max()) * int(forest.rec_depth[rsel].max()) * int(frags.max())
    ld = lv.ld[rsel]
    bits_ld = np.bincount(ld, weights=pb + frags * tag, minlength=nld).astype(np.int64)
    frag_ld = np.bincount(ld, weights=frags, minlength=nld).astype(np.int64)
    return rounds, bound, bits_ld, frag_ld, bad


class RoundEngine:
    """Round counter, ledger and transcript shared by all communication."""

    def __init__(self, net: Network, seed: int = 0, transcript: Transcript | None = None,
                 strict: bool = True):
        self.net = net
        self.seed = int(seed)
        self.round = 0
        self.ledger = Ledger.for_network(net)
        self.transcript = transcript or Transcript()
        self.strict = strict
        self.phase_rounds: dict[str, int] = defaultdict(int)
        self._phase = "unphased"
        self.abort_phase: str | None = None
        self.bound_violations = 0
        self._stamp = np.zeros(2 * net.num_links, dtype=np.int64)
        self._stamp_id = 0

    def rng(self, machine: int, round_no: int | None = None) -> np.random.Generator:
        r = self.round if round_no is None else round_no
        return np.random.default_rng([self.seed, int(machine), int(r)])

    @contextlib.contextmanager
    def phase(self, name: str):
        prev, self._phase = self._phase, name
        try:
            yield
        except BaseException:
            # the innermost phase that saw the exception names the abort
            if self.abort_phase is None:
                self.abort_phase = name
            raise
        finally:
            self._phase = prev

    def _advance(self, rounds: int) -> None:
        self.round += rounds
        self.phase_rounds[self._phase] += rounds

    def _exceeded(self, link: int, bits: int) -> None:
        self.ledger.bandwidth_exceeded += 1
        if self.strict:
            raise BandwidthExceeded(link, self.round, bits, self.net.bandwidth)

    def run_round(self, send_plan: Mapping[int, Iterable[tuple[int, str]]]) -> dict[int, list]:
        """Deliver one synchronous round.

        ``send_plan[w]`` lists ``(neighbor, payload)`` pairs where the
        payload is a string of '0'/'1'.  Returns inboxes mapping a machine to
        ``(sender, payload)`` pairs in sender-id order.
        """
        load: dict[int, int] = defaultdict(int)
        inbox: dict[int, list] = defaultdict(list)
        staged = []
        for w in sorted(send_plan):
            for dst, payload in send_plan[w]:
                link = self.net.link_id(w, dst)
                ld = 2 * link + self.net.direction(w, link) if self.net.per_direction else 2 * link
                load[ld] += len(payload)
                staged.append((w, dst, ld, payload))
        for ld, bits in load.items():
            if bits > self.net.bandwidth:
                self._exceeded(ld >> 1, bits)
        for w, dst, ld, payload in staged:
            inbox[dst].append((w, payload))
            self.ledger.bits[ld] += len(payload)
            self.ledger.fragments[ld] += 1
            self.transcript.write({"round": self.round, "kind": "message", "link": ld >> 1,
                                   "dir": ld & 1, "bits": len(payload), "fragments": 1})
        self._advance(1)
        return dict(inbox)

    # ---------------------------------------------------------------- tree ops
    def tree_phase(self, forest: SupportForest, bits, mask=None, upward: bool = False,
                   kind: str = "tree") -> int:
        """Charge one broadcast (or converge-cast) of ``bits`` per selected tree.

        ``bits`` is a scalar or a per-vertex array.  Each link direction sends
        at most one fragment per round; a fragment carries
        ``bandwidth - tag`` payload bits where the tag names the tree.
        Levels are processed in order (reversed for converge-casts), so the
        round count is the sum over levels of the busiest link direction.
        """
        bw = self.net.bandwidth
        nt = forest.num_trees
        b = np.broadcast_to(np.asarray(bits, dtype=np.int64), (nt,))
        sel = b > 0
        if mask is not None:
            sel = sel & np.asarray(mask, dtype=bool)
        if not sel.any() or forest.rec.size == 0:
            return 0
        sel = np.ascontiguousarray(sel)
        lv = forest.level_keys(upward, self.net.per_direction)
        if _netkern is not None and self.transcript.path is None:
            self._stamp_id += 1
            rounds, bound, total, used, bad = _netkern.tree_charge(
                b, sel.view(np.uint8), forest.rec_owner, lv.inv, lv.ld, forest.rec_tag, forest.rec_rho,
                forest.rec_depth, lv.key_level, lv.nlevels, bw, self.ledger.bits, self.ledger.fragments,
                lv.scratch, self._stamp, self._stamp_id)
            if bad >= 0:
                self._exceeded(int(forest.rec_link[bad]), int(forest.rec_tag[bad]))
            if used == 0:
                return 0
            self.transcript.add_block(total, used)
        else:
            out = _tree_charge_numpy(forest, lv, b, sel, bw, 2 * self.net.num_links)
            if out is None:
                return 0
            rounds, bound, bits_ld, frag_ld, bad = out
            if bad >= 0:
                self._exceeded(int(forest.rec_link[bad]), int(forest.rec_tag[bad]))
            self.ledger.bits += bits_ld
            self.ledger.fragments += frag_ld
            used = np.flatnonzero(frag_ld)
            self.transcript.write_block(self.round, rounds, kind, used, bits_ld[used], frag_ld[used])
        if rounds > bound:
            self.bound_violations += 1
            raise AssertionError(f"tree schedule used {rounds} rounds > bound {bound}")
        self._advance(rounds)
        return rounds

    def virtual_round(self, forest: SupportForest, down_bits, up_bits=0, mask=None,
                      kind: str = "virtual") -> int:
        """Broadcast then converge-cast on the selected trees."""
        r = self.tree_phase(forest, down_bits, mask, upward=False, kind=kind + ":down")
        r += self.tree_phase(forest, up_bits, mask, upward=True, kind=kind + ":up")
        return r

    def charge_rounds(self, rounds: int) -> None:
        """Rounds of pure local computation or waiting (no traffic)."""
        self._advance(int(rounds))


def broadcast_on_trees(engine: RoundEngine, forest: SupportForest,
                       payloads: Mapping[int, str]) -> TreeOpResult:
    """Send ``payloads[v]`` from the root of T(v) to every member.

    ``values`` holds, for every support record, the payload it received
    (``None`` outside the selected trees).
    """
    bits = np.zeros(forest.num_trees, dtype=np.int64)
    for v, p in payloads.items():
        bits[v] = len(p)
    rounds = engine.tree_phase(forest, bits, upward=False, kind="broadcast")
    held = np.empty(forest.node.size, dtype=object)
    # propagate parent to child, level by level
    order = np.argsort(forest.depth, kind="stable")
    for i in order.tolist():
        v = int(forest.owner[i])
        if v not in payloads or len(payloads[v]) == 0:
            continue
        held[i] = payloads[v] if forest.parent[i] < 0 else held[forest.parent_pos[i]]
    return TreeOpResult(rounds, held)


def aggregate_on_trees(engine: RoundEngine, forest: SupportForest, leaf_values: np.ndarray,
                       combiner: np.ufunc, identity, value_width: int) -> TreeOpResult:
    """Fold per-member values up to each root with an associative ufunc.

    ``leaf_values[i]`` is the contribution of support record ``i``.
    Returns the root value of every tree.
    """
    vals = np.array(leaf_values, copy=True)
    if vals.shape[0] != forest.node.size:
        raise ValueError("leaf_values must have one entry per support record")
    rounds = engine.tree_phase(forest, value_width, upward=True, kind="aggregate")
    if forest.node.size:
        for d in range(int(forest.depth.max()), 0, -1):
            idx = np.flatnonzero(forest.depth == d)
            combiner.at(vals, forest.parent_pos[idx], vals[idx])
    out = np.full(forest.num_trees, identity, dtype=vals.dtype)
    roots = forest.ptr[:-1][np.diff(forest.ptr) > 0]
    out[forest.owner[roots]] = vals[roots]
    return TreeOpResult(rounds, out)
