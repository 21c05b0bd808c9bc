"""The matching 3-coloring gadget and the embedding that funnels it through one link.

Alice and Bob each hold 8 nodes and a perfect matching over them; node ``j``
of Alice is tied to node ``j`` of Bob.  Without communication some input pair
always ends with a monochromatic edge.  This module enumerates the inputs,
evaluates zero-communication strategies exactly, and builds the virtual graph
whose left supports all cross a single central link.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np

from .embedding import Embedding
from .multigraph import MultiGraph
from .netsim import Network

SIDE = 8
COLORS = 3
ERROR_FLOOR = Fraction(1, 196)


def _matchings(items: tuple[int, ...]):
    if not items:
        yield ()
        return
    a, rest = items[0], items[1:]
    for i, b in enumerate(rest):
        for tail in _matchings(rest[:i] + rest[i + 1:]):
            yield ((a, b),) + tail


@lru_cache(maxsize=None)
def enumerate_matchings(m: int = SIDE) -> tuple[tuple[tuple[int, int], ...], ...]:
    """All perfect matchings of ``0..m-1`` in lexicographic order (105 for m = 8)."""
    if m % 2:
        raise ValueError("need an even number of nodes")
    return tuple(_matchings(tuple(range(m))))


def matching_count(m: int) -> int:
    """(m)! / (2^(m/2) (m/2)!) without enumeration."""
    out = 1
    for k in range(m - 1, 0, -2):
        out *= k
    return out


def pair_frequency(m: int = SIDE) -> dict[tuple[int, int], int]:
    """How many matchings contain each pair."""
    cnt = {p: 0 for p in itertools.combinations(range(m), 2)}
    for mt in enumerate_matchings(m):
        for p in mt:
            cnt[p] += 1
    return cnt


def _partner_table() -> np.ndarray:
    """partner[x, j] = node matched with j in matching x."""
    M = enumerate_matchings()
    out = np.zeros((len(M), SIDE), dtype=np.int64)
    for x, mt in enumerate(M):
        for a, b in mt:
            out[x, a], out[x, b] = b, a
    return out


PARTNER = _partner_table()
NUM_INPUTS = PARTNER.shape[0]


# ---------------------------------------------------------------------------
# strategies


@dataclass
class ZeroCommStrategy:
    """Colors each side outputs for every input matching (rows) and node (columns)."""

    alice: np.ndarray  # (105, 8), values in {1, 2, 3}
    bob: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.alice = np.asarray(self.alice, dtype=np.int64).reshape(NUM_INPUTS, SIDE)
        self.bob = np.asarray(self.bob, dtype=np.int64).reshape(NUM_INPUTS, SIDE)
        for side in (self.alice, self.bob):
            if side.min() < 1 or side.max() > COLORS:
                raise ValueError("strategy colors must lie in {1, 2, 3}")

    def proper_on_own(self) -> bool:
        rows = np.arange(NUM_INPUTS)[:, None]
        return bool((self.alice != self.alice[rows, PARTNER]).all()
                    and (self.bob != self.bob[rows, PARTNER]).all())


def _side_bad(side: np.ndarray) -> np.ndarray:
    rows = np.arange(NUM_INPUTS)[:, None]
    return (side == side[rows, PARTNER]).any(axis=1)


def failure_matrix(s: ZeroCommStrategy) -> np.ndarray:
    """fail[x, y]: some edge is monochromatic on input pair (x, y)."""
    cross = (s.alice[:, None, :] == s.bob[None, :, :]).any(axis=2)
    return cross | _side_bad(s.alice)[:, None] | _side_bad(s.bob)[None, :]


def eval_strategy(s: ZeroCommStrategy) -> Fraction:
    """Exact error probability over the uniform 105 × 105 input pairs."""
    return Fraction(int(failure_matrix(s).sum()), NUM_INPUTS ** 2)


def eval_joint(strategies: list[ZeroCommStrategy], chunk: int = 1024) -> Fraction:
    """Exact error of per-gadget strategies run side by side, by full enumeration.

    Only two gadgets are practical (11025² input combinations); the result
    must equal ``1 - Π(1 - error_i)``.
    """
    if len(strategies) != 2:
        raise ValueError("joint enumeration is implemented for two gadgets")
    f1 = failure_matrix(strategies[0]).ravel()
    f2 = failure_matrix(strategies[1]).ravel()
    bad = 0
    for a in range(0, f1.size, chunk):
        bad += int((f1[a:a + chunk, None] | f2[None, :]).sum())
    return Fraction(bad, f1.size * f2.size)


def random_proper_strategy(rng: np.random.Generator, name: str = "random") -> ZeroCommStrategy:
    """Each side colors every pair of its matching with two distinct random colors."""
    sides = []
    for _ in range(2):
        out = np.zeros((NUM_INPUTS, SIDE), dtype=np.int64)
        for x, mt in enumerate(enumerate_matchings()):
            for a, b in mt:
                ca, cb = rng.choice(COLORS, size=2, replace=False) + 1
                out[x, a], out[x, b] = ca, cb
        sides.append(out)
    return ZeroCommStrategy(sides[0], sides[1], name)


def _by_rule(rule) -> np.ndarray:
    out = np.zeros((NUM_INPUTS, SIDE), dtype=np.int64)
    for x, mt in enumerate(enumerate_matchings()):
        for a, b in mt:
            out[x, a], out[x, b] = rule(a, b)
    return out


def handcrafted_strategies() -> list[ZeroCommStrategy]:
    """Twenty structured strategies, all proper on their own matchings."""
    pairs = [(c1, c2) for c1 in range(1, 4) for c2 in range(1, 4) if c1 != c2]
    out: list[ZeroCommStrategy] = []
    # the smaller node of each pair gets one color, the larger another
    for i, (a1, a2) in enumerate(pairs):
        b1, b2 = pairs[(i + 3) % len(pairs)]
        out.append(ZeroCommStrategy(_by_rule(lambda a, b, a1=a1, a2=a2: (a1, a2)),
                                    _by_rule(lambda a, b, b1=b1, b2=b2: (b1, b2)), f"order-{i}"))

    def fixed_low(fix: dict[int, int], other: tuple[int, int]):
        """Nodes in ``fix`` keep their color when the partner allows it."""
        def rule(a, b):
            ca, cb = fix.get(a), fix.get(b)
            if ca is not None and cb is not None and ca != cb:
                return ca, cb
            if ca is not None:
                return ca, next(c for c in other + (1, 2, 3) if c != ca)
            if cb is not None:
                return next(c for c in other + (1, 2, 3) if c != cb), cb
            return other
        return rule

    for t in range(12):
        gap = 1 if t < 8 else 3
        fa = {t % 8: 1, (t + gap) % 8: 2, (t + 2 * gap) % 8: 3}
        fb = {t % 8: 2, (t + gap) % 8: 3, (t + 2 * gap) % 8: 1}
        out.append(ZeroCommStrategy(_by_rule(fixed_low(fa, (1, 2))), _by_rule(fixed_low(fb, (3, 1))),
                                    f"fixed-{t}"))
    # parity of node index picks the color pair
    out.append(ZeroCommStrategy(_by_rule(lambda a, b: (1 + a % 2, 3) if a % 2 == b % 2 else (1 + a % 2, 1 + b % 2)),
                                _by_rule(lambda a, b: (3, 1 + b % 2) if a % 2 == b % 2 else (2 - a % 2, 2 - b % 2)),
                                "parity"))
    out.append(ZeroCommStrategy(_by_rule(lambda a, b: ((a % 3) + 1, ((a % 3) + 1) % 3 + 1)),
                                _by_rule(lambda a, b: (((b % 3) + 1) % 3 + 1, (b % 3) + 1)), "mod3"))
    return out


def strategy_suite(seed: int = 0, random_count: int = 100) -> list[ZeroCommStrategy]:
    rng = np.random.default_rng(seed)
    rand = [random_proper_strategy(rng, f"random-{i}") for i in range(random_count)]
    return rand + handcrafted_strategies()


def local_search(seed: int = 0, steps: int = 4000, start: ZeroCommStrategy | None = None
                 ) -> tuple[ZeroCommStrategy, Fraction]:
    """Hill climbing over proper-on-own strategies; recolors one pair per move."""
    rng = np.random.default_rng(seed)
    cur = start or handcrafted_strategies()[0]
    A, B = cur.alice.copy(), cur.bob.copy()
    M = enumerate_matchings()
    best = int(failure_matrix(ZeroCommStrategy(A, B)).sum())
    for _ in range(steps):
        side = A if rng.random() < 0.5 else B
        x = int(rng.integers(NUM_INPUTS))
        a, b = M[x][int(rng.integers(SIDE // 2))]
        old = side[x, a], side[x, b]
        side[x, a], side[x, b] = rng.choice(COLORS, size=2, replace=False) + 1
        val = int(failure_matrix(ZeroCommStrategy(A, B)).sum())
        if val <= best:
            best = val
        else:
            side[x, a], side[x, b] = old
    s = ZeroCommStrategy(A, B, "local-search")
    return s, Fraction(best, NUM_INPUTS ** 2)


def write_strategy(s: ZeroCommStrategy, path: str | Path) -> None:
    """Alice's 105 rows, then Bob's 105 rows; 8 colors per row."""
    lines = ["# alice"] + [" ".join(map(str, r)) for r in s.alice.tolist()]
    lines += ["# bob"] + [" ".join(map(str, r)) for r in s.bob.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_strategy(path: str | Path) -> ZeroCommStrategy:
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        vals = [int(t) for t in line.split()]
        if len(vals) != SIDE:
            raise ValueError(f"expected {SIDE} colors per line, got {len(vals)}")
        rows.append(vals)
    if len(rows) != 2 * NUM_INPUTS:
        raise ValueError(f"expected {2 * NUM_INPUTS} rows, got {len(rows)}")
    return ZeroCommStrategy(np.array(rows[:NUM_INPUTS]), np.array(rows[NUM_INPUTS:]), Path(path).stem)


# ---------------------------------------------------------------------------
# the virtual graph H_{k,x,y} on the two-star network


@dataclass
class LowerBoundInstance:
    emb: Embedding
    k: int
    x: np.ndarray
    y: np.ndarray
    central_link: int          # index in G
    central_halves: np.ndarray  # S_G link ids of the two half-links

    def central_tree_count(self) -> int:
        """Trees that cross the central link (both half-links), by direct audit."""
        f = self.emb.forest
        use = np.zeros((f.num_trees, 2), dtype=bool)
        for h, half in enumerate(self.central_halves.tolist()):
            use[f.rec_owner[f.rec_link == half], h] = True
        return int(use.all(axis=1).sum())


def build_lb_graphs(k: int, x, y, bandwidth: int | None = None) -> LowerBoundInstance:
    """Gadgets ``0..k-1`` with inputs ``x[i], y[i] ∈ [0, 105)``.

    Machines: 0 and 1 are the two centers, ``2 + 8i + j`` the left leaves and
    ``2 + 8k + 8i + j`` the right leaves.  Virtual vertex ``8i + j`` is left
    node j of gadget i; ``8k + 8i + j`` is its right twin.  Left supports run
    leaf, left center, right center and are rooted at the leaf.
    """
    x = np.asarray(x, dtype=np.int64).reshape(-1)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if x.size != k or y.size != k:
        raise ValueError("x and y need one matching index per gadget")
    if ((x < 0) | (x >= NUM_INPUTS) | (y < 0) | (y >= NUM_INPUTS)).any():
        raise ValueError("matching indices must lie in [0, 105)")
    L, R = 0, 1
    nl = SIDE * k
    leaves_l = 2 + np.arange(nl)
    leaves_r = 2 + nl + np.arange(nl)
    links = [(L, R)] + [(L, int(w)) for w in leaves_l] + [(R, int(w)) for w in leaves_r]
    G = Network(2 + 2 * nl, links, bandwidth)
    n = G.n
    c = G.link_id(L, R)
    supports, trees, roots = [], [], []
    for v in range(nl):
        w = int(leaves_l[v])
        e = G.link_id(L, w)
        supports.append(np.array([w, L, R, n + e, n + c]))
        trees.append(np.array([(w, n + e), (n + e, L), (L, n + c), (n + c, R)]))
        roots.append(w)
    for v in range(nl):
        w = int(leaves_r[v])
        e = G.link_id(R, w)
        supports.append(np.array([w, R, n + e]))
        trees.append(np.array([(w, n + e), (n + e, R)]))
        roots.append(w)
    eu, ev, hd = [], [], []
    for i in range(k):
        base = SIDE * i
        for j in range(SIDE):
            eu.append(base + j)
            ev.append(nl + base + j)
            hd.append(R)
        for a, b in enumerate_matchings()[x[i]]:
            eu.append(base + a)
            ev.append(base + b)
            hd.append(L)
        for a, b in enumerate_matchings()[y[i]]:
            eu.append(nl + base + a)
            ev.append(nl + base + b)
            hd.append(R)
    H = MultiGraph(2 * nl, eu, ev, np.ones(len(eu), np.int64))
    emb = Embedding(G, H, supports, trees, roots, eu, ev, hd)
    S = emb.S
    halves = np.array([S.link_id(L, n + c), S.link_id(n + c, R)])
    return LowerBoundInstance(emb, k, x, y, c, halves)


def is_two_regular(H: MultiGraph) -> bool:
    return bool((H.pseudo_degree == 2).all() and (H.degree == 2).all())


@dataclass
class LbRun:
    k: int
    bandwidth: int
    rounds: int
    central_bits: int
    max_color: int
    proper: bool


def lb_round_experiment(k: int, bandwidth: int | None = None, seed: int = 0, algorithm=None) -> LbRun:
    """Color a random H_{k,x,y} and report rounds and bits over the central link.

    ``algorithm(emb, seed)`` must return ``(colors, engine)``; the default is
    the full pipeline.
    """
    rng = np.random.default_rng(seed)
    inst = build_lb_graphs(k, rng.integers(NUM_INPUTS, size=k), rng.integers(NUM_INPUTS, size=k), bandwidth)
    if algorithm is None:
        from .harness.pipeline import color_embedding
        algorithm = color_embedding
    colors, engine = algorithm(inst.emb, seed)
    from .multigraph import verify_coloring
    ok = bool(verify_coloring(inst.emb.H, colors, require_total=True))
    bits = engine.ledger.bits.reshape(-1, 2)[inst.central_halves].sum()
    return LbRun(k, inst.emb.S.bandwidth, int(engine.round), int(bits), int(np.max(colors)), ok)
