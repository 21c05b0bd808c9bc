"""Pure numpy versions of the hot kernels; bit-identical to ``_kernels.pyx``."""

from __future__ import annotations

import numpy as np

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLD = np.uint64(0x9E3779B97F4A7C15)
_STEP = np.uint64(0xD1B54A32D192ED03)
MAX_GEOM = 64


def mix(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z ^ (z >> np.uint64(30))
        z = z * _M1
        z = z ^ (z >> np.uint64(27))
        z = z * _M2
        z = z ^ (z >> np.uint64(31))
    return z


def prf(seed: int, u, i) -> np.ndarray:
    """Counter-based 64-bit hash of (seed, u, i)."""
    s = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    u = np.asarray(u, dtype=np.uint64)
    i = np.asarray(i, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix(mix(s ^ (u * _GOLD)) + i * _STEP)


def geometric_from_bits(z: np.ndarray) -> np.ndarray:
    """1 + trailing zeros (64 when z == 0), so Pr[X = k] = 2^-k."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        low = z & (~z + np.uint64(1))
    _, e = np.frexp(low.astype(np.float64))
    out = e.astype(np.int64)  # low = 2^(e-1) -> 1 + ctz = e
    out[z == 0] = MAX_GEOM
    return out.astype(np.uint8)


def geometric_matrix(seed: int, ids: np.ndarray, t: int) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    return geometric_from_bits(prf(seed, ids[:, None], np.arange(t, dtype=np.uint64)[None, :]))


def fingerprint_max(seed: int, indptr: np.ndarray, members: np.ndarray, t: int) -> np.ndarray:
    """Row s = coordinate-wise max of the leaf draws of ``members[indptr[s]:indptr[s+1]]``."""
    indptr = np.asarray(indptr, dtype=np.int64)
    members = np.asarray(members, dtype=np.int64)
    ns = indptr.size - 1
    out = np.zeros((ns, t), dtype=np.uint8)
    if members.size == 0:
        return out
    owner = np.repeat(np.arange(ns), np.diff(indptr))
    chunk = max(1, (1 << 22) // max(t, 1))
    for a in range(0, members.size, chunk):
        b = min(members.size, a + chunk)
        Y = geometric_matrix(seed, members[a:b], t)
        np.maximum.at(out, owner[a:b], Y)
    return out


def estimate_rows(Y: np.ndarray, quota: int) -> np.ndarray:
    """Cardinality estimate per row; NaN marks overflow (or an all-zero row)."""
    Y = np.atleast_2d(np.asarray(Y, dtype=np.uint8))
    k, t = Y.shape
    out = np.full(k, np.nan)
    if t == 0:
        return out
    S = np.sort(Y, axis=1)
    kstar = S[:, quota - 1].astype(np.int64)
    Z = (Y <= kstar[:, None]).sum(axis=1)
    ok = (Z < t) & (S[:, 0] > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        est = np.log(Z / t) / np.log1p(-np.exp2(-kstar.astype(np.float64)))
    out[ok] = est[ok]
    out[S[:, -1] == 0] = 0.0
    return out


def cliquepal_scan(seed, vertices, lo, hi, thresh, blk_ptr, blk):
    vertices = np.asarray(vertices, dtype=np.int64)
    out = np.zeros(vertices.size, dtype=np.int64)
    cnt = np.zeros(vertices.size, dtype=np.int64)
    s = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    for k, v in enumerate(vertices.tolist()):
        xs = np.arange(lo[k], hi[k] + 1, dtype=np.int64)
        if xs.size == 0:
            continue
        with np.errstate(over="ignore"):
            base = mix(s ^ (np.uint64(v) * _GOLD))
            h = mix(base + xs.astype(np.uint64) * _STEP)
        keep = (h <= np.uint64(thresh[k])) & ~np.isin(xs, blk[blk_ptr[k]:blk_ptr[k + 1]])
        kept = xs[keep]
        cnt[k] = kept.size
        if kept.size:
            with np.errstate(over="ignore"):
                sel = int(mix(base ^ np.uint64(0xA5A5A5A5A5A5A5A5)))
            out[k] = kept[sel % kept.size]
    return out, cnt


def max_combine(leaf: np.ndarray, rows: np.ndarray, indptr: np.ndarray) -> np.ndarray:
    indptr = np.asarray(indptr, dtype=np.int64)
    rows = np.asarray(rows, dtype=np.int64)
    ns = indptr.size - 1
    out = np.zeros((ns, leaf.shape[1]), dtype=np.uint8)
    nonempty = np.flatnonzero(np.diff(indptr) > 0)
    if nonempty.size == 0:
        return out
    chunk = max(1, (1 << 24) // max(leaf.shape[1], 1))
    # reduceat over contiguous runs of sets, bounded in memory
    a = 0
    while a < nonempty.size:
        b = a
        while b < nonempty.size and indptr[nonempty[b] + 1] - indptr[nonempty[a]] <= chunk:
            b += 1
        b = max(b, a + 1)
        sets = nonempty[a:b]
        lo, hi = indptr[sets[0]], indptr[sets[-1] + 1]
        block = leaf[rows[lo:hi]]
        out[sets] = np.maximum.reduceat(block, indptr[sets] - lo, axis=0)
        a = b
    return out
