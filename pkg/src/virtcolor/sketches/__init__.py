"""Geometric-max fingerprints for approximate counting over support trees.

Every vertex ``u`` owns ``t`` geometric(1/2) draws derived from a
counter-based hash of ``(seed, u, i)``, so any machine can regenerate them.
A fingerprint of a set is the coordinate-wise max of its members' draws; the
cardinality follows from how many coordinates fall at or below a quantile.

The compiled kernels in ``_kernels`` are used when importable; otherwise the
numpy versions in ``_fallback`` take over.  Set ``VIRTCOLOR_PURE_PYTHON=1`` to
force the fallback.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import _fallback

try:
    if os.environ.get("VIRTCOLOR_PURE_PYTHON"):
        raise ImportError("fallback forced")
    from . import _kernels as _backend
    BACKEND = "compiled"
except ImportError:  # pragma: no cover - depends on build
    _backend = _fallback
    BACKEND = "python"

OVERFLOW = float("nan")
QUOTA_NUM, QUOTA_DEN = 27, 40


def quota(t: int) -> int:
    """Smallest integer count reaching the 27/40 quantile threshold."""
    return -(-QUOTA_NUM * t // QUOTA_DEN)


def repetitions(xi: float, delta: float) -> int:
    """t = ceil(50 ln(6/δ) / ξ²), the size meeting failure probability δ."""
    if not 0 < xi < 1 or not 0 < delta < 1:
        raise ValueError("need 0 < xi < 1 and 0 < delta < 1")
    return math.ceil(50 * math.log(6 / delta) / xi ** 2)


def failure_bound(xi: float, t: int) -> float:
    return 6 * math.exp(-xi ** 2 * t / 50)


def is_overflow(x) -> np.ndarray | bool:
    return np.isnan(x)


@dataclass(frozen=True)
class Fingerprint:
    Y: np.ndarray  # uint8, length t

    @property
    def t(self) -> int:
        return int(self.Y.size)

    def combine(self, other: "Fingerprint") -> "Fingerprint":
        return Fingerprint(np.maximum(self.Y, other.Y))

    def __eq__(self, other) -> bool:
        return isinstance(other, Fingerprint) and np.array_equal(self.Y, other.Y)

    def __hash__(self) -> int:
        return hash(self.Y.tobytes())


def geometric_matrix(seed: int, ids, t: int) -> np.ndarray:
    return _backend.geometric_matrix(int(seed), np.asarray(ids, dtype=np.int64), int(t))


def fingerprint_leaf(seed: int, u: int, t: int) -> Fingerprint:
    if t < 1:
        raise ValueError("t must be >= 1")
    return Fingerprint(geometric_matrix(seed, [u], t)[0])


def fingerprint_of_set(seed: int, members, t: int) -> Fingerprint:
    m = np.asarray(list(members) if not isinstance(members, np.ndarray) else members, dtype=np.int64)
    return Fingerprint(_backend.fingerprint_max(int(seed), np.array([0, m.size]), m, int(t))[0])


def fingerprint_sets(seed: int, indptr, members, t: int) -> np.ndarray:
    """One fingerprint row per CSR set.

    When members repeat across sets, each distinct member's draws are
    generated once and then max-combined; the result is identical.
    """
    indptr = np.asarray(indptr, np.int64)
    members = np.asarray(members, np.int64)
    uniq, rows = np.unique(members, return_inverse=True)
    if uniq.size * 2 > members.size:
        return _backend.fingerprint_max(int(seed), indptr, members, int(t))
    leaf = geometric_matrix(seed, uniq, t)
    return _backend.max_combine(leaf, rows.astype(np.int64), indptr)


def estimate_rows(Y: np.ndarray) -> np.ndarray:
    Y = np.atleast_2d(np.asarray(Y, dtype=np.uint8))
    return _backend.estimate_rows(Y, quota(Y.shape[1]))


def estimate_cardinality(F: Fingerprint) -> float:
    """ln(Z/t) / ln(1 - 2^-K) at the quota quantile K; NaN on overflow."""
    return float(estimate_rows(F.Y[None, :])[0])


# ---------------------------------------------------------------------------
# codec: Elias-gamma of the median coordinate, then per coordinate the
# bit-complemented Elias-gamma of zigzag(Y_i - median) + 1, so an offset of
# zero costs the single bit "0". Max-of-geometrics coordinates sit within a
# few units of the median: about 3.4 bits each, lossless, no escape symbol.


def _gamma(x: int) -> str:
    b = format(x, "b")
    return "0" * (len(b) - 1) + b


def _read_gamma(bits: str, pos: int) -> tuple[int, int]:
    z = 0
    while pos + z < len(bits) and bits[pos + z] == "0":
        z += 1
    if pos + 2 * z + 1 > len(bits):
        raise ValueError("truncated fingerprint code")
    return int(bits[pos + z:pos + 2 * z + 1], 2), pos + 2 * z + 1


_FLIP = str.maketrans("01", "10")


def _zigzag(off: np.ndarray) -> np.ndarray:
    return np.where(off >= 0, 2 * off, -2 * off - 1)


def _median_base(Y: np.ndarray) -> np.ndarray:
    return np.sort(Y, axis=-1)[..., Y.shape[-1] // 2]


def encode_fingerprint(F: Fingerprint) -> str:
    Y = F.Y.astype(np.int64)
    if Y.size == 0 or int(Y.min()) < 1:
        raise ValueError("cannot encode an empty fingerprint")
    base = int(_median_base(Y))
    body = "".join(_gamma(z + 1) for z in _zigzag(Y - base).tolist())
    return _gamma(base) + body.translate(_FLIP)


def decode_fingerprint(bits: str, t: int) -> Fingerprint:
    base, pos = _read_gamma(bits, 0)
    body = bits[pos:].translate(_FLIP)
    pos, vals = 0, []
    for _ in range(t):
        z, pos = _read_gamma(body, pos)
        z -= 1
        vals.append(base + (z // 2 if z % 2 == 0 else -(z + 1) // 2))
    if pos != len(body):
        raise ValueError("trailing bits after fingerprint")
    return Fingerprint(np.asarray(vals, dtype=np.uint8))


def _gamma_len(x: np.ndarray) -> np.ndarray:
    return 2 * np.floor(np.log2(x)).astype(np.int64) + 1


def encoded_length(Y: np.ndarray) -> np.ndarray:
    """Codec length per row without building strings."""
    Y = np.atleast_2d(np.asarray(Y, dtype=np.int64))
    base = _median_base(Y)
    body = _gamma_len(_zigzag(Y - base[:, None]) + 1).sum(axis=1)
    return _gamma_len(np.maximum(base, 1)) + body


# ---------------------------------------------------------------------------
# distributed approximate neighborhood counting


def approx_predicate_neighbors(embedding, engine, seed: int, t: int, hits_u, hits_v,
                               kind: str = "fingerprint") -> np.ndarray:
    """Estimate |{u ∈ N(v) : P_v(u)}| for every vertex v.

    ``hits_v[j]`` learns that ``hits_u[j]`` satisfies its predicate; the pair
    must be an edge of H so that its handler knows the hit.  Handlers inject
    the fingerprint of ``u`` into T(v), the trees max-combine, and each root
    estimates.  Rows without hits report exactly 0; NaN marks overflow.
    Communication: one converge-cast of the encoded fingerprint length on
    every tree (the largest encoding sets the per-tree payload).
    """
    n = embedding.n
    hu = np.asarray(hits_u, dtype=np.int64)
    hv = np.asarray(hits_v, dtype=np.int64)
    order = np.lexsort((hu, hv))
    hu, hv = hu[order], hv[order]
    keep = np.ones(hu.size, dtype=bool)
    keep[1:] = (hu[1:] != hu[:-1]) | (hv[1:] != hv[:-1])
    hu, hv = hu[keep], hv[keep]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(hv, minlength=n), out=indptr[1:])
    Y = fingerprint_sets(seed, indptr, hu, t)
    est = estimate_rows(Y)
    width = np.where(indptr[1:] > indptr[:-1], encoded_length(Y), 0)
    if engine is not None:
        engine.tree_phase(embedding.forest, width, upward=True, kind=kind)
    return est


def estimate_sets(seed: int, indptr, members, t: int) -> np.ndarray:
    """Centralized estimate over CSR sets (oracle for the distributed path)."""
    return estimate_rows(fingerprint_sets(seed, indptr, members, t))


def sample_max_law(rng: np.random.Generator, d: int, trials: int, t: int) -> np.ndarray:
    """Draw Y matrices from the exact law of a max of d geometrics.

    Pr[Y <= k] = (1 - 2^-k)^d; used where materializing d*t draws per trial
    would be too slow.  Values are clipped to 255.
    """
    u = rng.random((trials, t))
    with np.errstate(divide="ignore"):
        y = np.ceil(-np.log2(-np.expm1(np.log(u) / d)))
    return np.clip(y, 1, 255).astype(np.uint8)


def cliquepal_scan(seed: int, vertices, lo, hi, thresh, blk_ptr, blk):
    """Hash-thinned scan used by the clique-palette sampler (see ``trials``)."""
    return _backend.cliquepal_scan(int(seed), np.asarray(vertices, np.int64),
                                   np.asarray(lo, np.int64), np.asarray(hi, np.int64),
                                   np.asarray(thresh, np.uint64), np.asarray(blk_ptr, np.int64),
                                   np.asarray(blk, np.int64))
