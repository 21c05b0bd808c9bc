"""Shared run state for the distributed phases.

Phases compute their outcome with vectorized numpy over information the
simulated vertices are entitled to, and pay for the communication that
information needs through the round engine.  A *virtual round* is one
broadcast on every selected support tree, the handler exchange, and one
converge-cast back to the roots.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, asdict
from typing import Any

import numpy as np

from . import calibration
from .embedding import Embedding
from .multigraph import UNCOLORED, MultiGraph, verify_coloring
from .netsim import RoundEngine, ceil_log2


class PhaseFailure(RuntimeError):
    """A sub-step could not meet its postcondition."""

    def __init__(self, phase: str, message: str, witness: Any = None):
        super().__init__(f"{phase}: {message}")
        self.phase, self.witness = phase, witness


class InvariantViolation(AssertionError):
    pass


@dataclass
class Monitors:
    """Counters, extremes and samples recorded by runtime checks."""

    checks: dict[str, int] = field(default_factory=dict)
    violations: dict[str, int] = field(default_factory=dict)
    extremes: dict[str, list[float]] = field(default_factory=dict)
    samples: dict[str, list[float]] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    strict: bool = True
    soft_names: set[str] = field(default_factory=set)

    def check(self, name: str, ok, detail: str = "", soft: bool = False) -> bool:
        """Count outcomes; a hard failure raises in strict mode, a soft one is only recorded."""
        ok_arr = np.asarray(ok, dtype=bool)
        n_ok = int(ok_arr.sum())
        n = int(ok_arr.size)
        self.checks[name] = self.checks.get(name, 0) + n
        bad = n - n_ok
        if bad:
            self.violations[name] = self.violations.get(name, 0) + bad
            if soft:
                self.soft_names.add(name)
            elif self.strict:
                raise InvariantViolation(f"{name}: {bad} violation(s) {detail}")
        return bad == 0

    def extreme(self, name: str, values) -> None:
        v = np.asarray(values, dtype=np.float64).ravel()
        v = v[np.isfinite(v)]
        if v.size == 0:
            return
        lo, hi = float(v.min()), float(v.max())
        if name in self.extremes:
            a, b = self.extremes[name]
            self.extremes[name] = [min(a, lo), max(b, hi)]
        else:
            self.extremes[name] = [lo, hi]

    def sample(self, name: str, values) -> None:
        self.samples.setdefault(name, []).extend(np.asarray(values, dtype=np.float64).ravel().tolist())

    def to_json(self) -> dict:
        return {"checks": dict(sorted(self.checks.items())),
                "violations": dict(sorted(self.violations.items())),
                "extremes": dict(sorted(self.extremes.items())),
                "soft": sorted(self.soft_names)}

    def hard_violations(self) -> dict[str, int]:
        return {k: v for k, v in self.violations.items() if k not in self.soft_names}


@dataclass
class Params:
    """Every tunable constant of the pipeline."""

    eps: float = 1 / 2000
    theta: float | None = None          # defaults to eps / 100
    inacc_margin: float | None = None   # defaults to 2 * theta**3
    label_theta: float | None = None    # highly-dense label slack; defaults to theta
    delta_low: int | None = None        # defaults to min(n, max(64, ceil(log2(n)**21)))
    ell: int | None = None
    r: int | None = None
    r_prime: int | None = None          # defaults to 150 * ell
    c1: float = 1.0
    fp_t: int | None = None             # fingerprint repetitions; None -> from fp_xi/fp_delta
    fp_xi: float = 0.2
    fp_delta: float = 1e-3
    p_gen: float = 1 / 20
    rct_iters: int = 6
    mct_phases: int = 10
    mct_cap: int = 64
    slice_iters: int | None = None
    layer_cap_c: float = 2.0
    sampler_c: float = 4.0
    c_cm_log: float = 1.0               # colorful matching runs when a_K >= c_cm_log * log n
    cm_rounds: int = 12
    c_pa: float = 2.0
    split_c: float = 4.0
    shatter_c: float = 1.0
    reduction_iters_c: float = 2.0
    gamma_acct: float | None = None     # None -> calibrated
    sct_c: float | None = None          # None -> calibrated
    component_c: float | None = None    # None -> calibrated
    sct_alpha: float = 0.25
    forced: bool = False
    fast_path: bool = False
    kary_search: bool = False
    strict: bool = True

    def resolve(self, n: int) -> "Params":
        p = Params(**asdict(self))
        lg = math.log2(max(n, 4))
        if p.theta is None:
            p.theta = p.eps / 100
        if p.label_theta is None:
            p.label_theta = p.theta
        if p.inacc_margin is None:
            p.inacc_margin = 2 * p.theta ** 3
        if p.delta_low is None:
            p.delta_low = int(min(max(n, 1), max(64, math.ceil(lg ** 21))))
        if p.ell is None:
            p.ell = max(16, math.ceil(p.c1 * lg ** 1.2))
        if p.r is None:
            p.r = max(16, math.ceil(p.c1 * lg ** 1.1))
        if p.r_prime is None:
            p.r_prime = 150 * p.ell
        if p.fp_t is None:
            from .sketches import repetitions
            p.fp_t = repetitions(p.fp_xi, p.fp_delta)
        for name in ("gamma_acct", "sct_c", "component_c"):
            if getattr(p, name) is None:
                setattr(p, name, calibration.get(name))
        if p.slice_iters is None:
            p.slice_iters = max(4, math.ceil(math.log2(max(lg, 2))) + 4)
        return p

    @classmethod
    def forced_phase(cls, **overrides) -> "Params":
        """Desk-scale constants that make every dense branch reachable."""
        base = dict(eps=1 / 8, theta=0.1, inacc_margin=0.5, label_theta=0.2, delta_low=48, ell=8, r=16,
                    r_prime=24, fp_t=1024, forced=True, c_cm_log=0.5,
                    layer_cap_c=1.5)
        base.update(overrides)
        return cls(**base)


class Ctx:
    """Run state threaded through every phase."""

    def __init__(self, emb: Embedding, engine: RoundEngine, params: Params, seed: int,
                 monitors: Monitors | None = None):
        self.emb = emb
        self.H: MultiGraph = emb.H
        self.n = emb.H.n
        self.engine = engine
        self.forest = emb.forest
        self.params = params.resolve(self.n)
        self.seed = int(seed)
        self.colors = np.zeros(self.n, dtype=np.int64)
        self.monitors = monitors or Monitors(strict=params.strict)
        self.logn = math.log(max(self.n, 2))
        self.log2n = math.log2(max(self.n, 2))
        self.id_bits = max(1, ceil_log2(max(self.n, 2)))
        self.color_bits = max(1, ceil_log2(int(self.H.pseudo_degree.max(initial=0)) + 2))
        self.count_bits = self.color_bits + 1
        self.diag: dict[str, Any] = {}
        # precomputed edge arrays (one entry per distinct pair)
        self.pu, self.pv = self.H.pair_u, self.H.pair_v
        self.src = np.repeat(np.arange(self.n), self.H.degree)

    # randomness ---------------------------------------------------------------
    def rng(self, tag: str, *keys: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, zlib.crc32(tag.encode()), *map(int, keys)])

    def seed_for(self, tag: str, *keys: int) -> int:
        ss = np.random.SeedSequence([self.seed, zlib.crc32(tag.encode()), *map(int, keys)])
        return int(ss.generate_state(1, dtype=np.uint64)[0])

    # communication ------------------------------------------------------------
    def vround(self, mask, down_bits, up_bits=1, kind: str = "virtual") -> int:
        """One virtual round for the vertices in ``mask``."""
        return self.engine.virtual_round(self.forest, down_bits, up_bits, mask=mask, kind=kind)

    def clique_query(self, mask, bits: int, kind: str = "clique-query") -> int:
        """Leader round trip inside almost-cliques of diameter two.

        Requests climb two hops of a BFS tree of K and answers come back
        down: four virtual rounds on the participating vertices.
        """
        r = 0
        for _ in range(2):
            r += self.vround(mask, bits, bits, kind=kind + ":up")
        for _ in range(2):
            r += self.vround(mask, bits, bits, kind=kind + ":down")
        return r

    # invariants ---------------------------------------------------------------
    def assert_proper(self, phase: str) -> None:
        v = verify_coloring(self.H, self.colors, require_total=False)
        self.monitors.check(f"{phase}:proper", not v.conflicts and not v.out_of_range,
                            detail=str(v.summary()))

    def uncolored(self) -> np.ndarray:
        return self.colors == UNCOLORED

    def assign(self, vertices: np.ndarray, colors: np.ndarray, phase: str,
               allowed=None) -> None:
        """Commit colors after range, freshness and optional membership checks."""
        vertices = np.asarray(vertices, dtype=np.int64)
        colors = np.asarray(colors, dtype=np.int64)
        if vertices.size == 0:
            return
        ok = (colors >= 1) & (colors <= self.H.pseudo_degree[vertices] + 1) \
            & (self.colors[vertices] == UNCOLORED)
        if allowed is not None:
            ok &= np.asarray(allowed, dtype=bool)
        self.monitors.check(f"{phase}:assignment", ok)
        self.colors[vertices[ok]] = colors[ok]
