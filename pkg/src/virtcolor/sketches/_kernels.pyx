# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops; must stay bit-identical to ``_fallback``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, log1p, exp2, NAN
from libc.stdint cimport uint64_t, int64_t, uint8_t

cnp.import_array()

cdef extern from *:
    int __builtin_ctzll(unsigned long long) nogil

cdef inline uint64_t _mix(uint64_t z) nogil:
    z ^= z >> 30
    z *= 0xBF58476D1CE4E5B9ULL
    z ^= z >> 27
    z *= 0x94D049BB133111EBULL
    z ^= z >> 31
    return z

cdef inline uint64_t _prf(uint64_t seed, uint64_t u, uint64_t i) nogil:
    return _mix(_mix(seed ^ (u * 0x9E3779B97F4A7C15ULL)) + i * 0xD1B54A32D192ED03ULL)

cdef inline uint8_t _geom(uint64_t z) nogil:
    if z == 0:
        return 64
    return <uint8_t>(1 + __builtin_ctzll(z))


def prf(seed, u, i):
    cdef uint64_t s = (<object>seed) & 0xFFFFFFFFFFFFFFFF
    uu, ii = np.broadcast_arrays(np.asarray(u, dtype=np.uint64), np.asarray(i, dtype=np.uint64))
    cdef cnp.ndarray[uint64_t, ndim=1] fu = np.ascontiguousarray(uu).ravel()
    cdef cnp.ndarray[uint64_t, ndim=1] fi = np.ascontiguousarray(ii).ravel()
    cdef cnp.ndarray[uint64_t, ndim=1] out = np.empty(fu.shape[0], dtype=np.uint64)
    cdef Py_ssize_t k
    with nogil:
        for k in range(fu.shape[0]):
            out[k] = _prf(s, fu[k], fi[k])
    return out.reshape(uu.shape)


def geometric_matrix(seed, ids, Py_ssize_t t):
    cdef uint64_t s = (<object>seed) & 0xFFFFFFFFFFFFFFFF
    cdef cnp.ndarray[int64_t, ndim=1] a = np.ascontiguousarray(ids, dtype=np.int64)
    cdef cnp.ndarray[uint8_t, ndim=2] out = np.empty((a.shape[0], t), dtype=np.uint8)
    cdef Py_ssize_t r, i
    cdef uint64_t base
    with nogil:
        for r in range(a.shape[0]):
            base = _mix(s ^ (<uint64_t>a[r] * 0x9E3779B97F4A7C15ULL))
            for i in range(t):
                out[r, i] = _geom(_mix(base + <uint64_t>i * 0xD1B54A32D192ED03ULL))
    return out


def fingerprint_max(seed, indptr, members, Py_ssize_t t):
    cdef uint64_t s = (<object>seed) & 0xFFFFFFFFFFFFFFFF
    cdef cnp.ndarray[int64_t, ndim=1] ptr = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef cnp.ndarray[int64_t, ndim=1] mem = np.ascontiguousarray(members, dtype=np.int64)
    cdef Py_ssize_t ns = ptr.shape[0] - 1
    cdef cnp.ndarray[uint8_t, ndim=2] out = np.zeros((ns, t), dtype=np.uint8)
    cdef Py_ssize_t r, j, i
    cdef uint64_t base
    cdef uint8_t g
    with nogil:
        for r in range(ns):
            for j in range(ptr[r], ptr[r + 1]):
                base = _mix(s ^ (<uint64_t>mem[j] * 0x9E3779B97F4A7C15ULL))
                for i in range(t):
                    g = _geom(_mix(base + <uint64_t>i * 0xD1B54A32D192ED03ULL))
                    if g > out[r, i]:
                        out[r, i] = g
    return out


def estimate_rows(Y, Py_ssize_t quota):
    cdef cnp.ndarray[uint8_t, ndim=2] a = np.ascontiguousarray(np.atleast_2d(Y), dtype=np.uint8)
    cdef Py_ssize_t k = a.shape[0], t = a.shape[1]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(k, dtype=np.float64)
    cdef int64_t cnt[256]
    cdef Py_ssize_t r, i, v, acc, kstar, mx, z
    with nogil:
        for r in range(k):
            for v in range(256):
                cnt[v] = 0
            mx = 0
            for i in range(t):
                cnt[a[r, i]] += 1
                if a[r, i] > mx:
                    mx = a[r, i]
            if t == 0:
                out[r] = NAN
                continue
            if mx == 0:
                out[r] = 0.0
                continue
            if cnt[0] > 0:
                out[r] = NAN
                continue
            acc = 0
            kstar = 0
            for v in range(256):
                acc += cnt[v]
                if acc >= quota:
                    kstar = v
                    break
            z = acc
            if z >= t:
                out[r] = NAN
            else:
                out[r] = log(<double>z / <double>t) / log1p(-exp2(-<double>kstar))
    return out


def cliquepal_scan(seed, vertices, lo, hi, thresh, blk_ptr, blk):
    """Clique-palette sampler scan.

    For vertex ``vertices[k]`` keep colors x in [lo[k], hi[k]] whose hash
    falls under ``thresh[k]`` and that are absent from the sorted blocked list
    ``blk[blk_ptr[k]:blk_ptr[k+1]]``; return one kept color chosen by a
    second hash (0 when none is kept) and the number of kept colors.
    """
    cdef uint64_t s = (<object>seed) & 0xFFFFFFFFFFFFFFFF
    cdef cnp.ndarray[int64_t, ndim=1] vv = np.ascontiguousarray(vertices, dtype=np.int64)
    cdef cnp.ndarray[int64_t, ndim=1] a = np.ascontiguousarray(lo, dtype=np.int64)
    cdef cnp.ndarray[int64_t, ndim=1] b = np.ascontiguousarray(hi, dtype=np.int64)
    cdef cnp.ndarray[uint64_t, ndim=1] th = np.ascontiguousarray(thresh, dtype=np.uint64)
    cdef cnp.ndarray[int64_t, ndim=1] bp = np.ascontiguousarray(blk_ptr, dtype=np.int64)
    cdef cnp.ndarray[int64_t, ndim=1] bl = np.ascontiguousarray(blk, dtype=np.int64)
    cdef Py_ssize_t nv = vv.shape[0]
    cdef cnp.ndarray[int64_t, ndim=1] out = np.zeros(nv, dtype=np.int64)
    cdef cnp.ndarray[int64_t, ndim=1] cnt = np.zeros(nv, dtype=np.int64)
    cdef Py_ssize_t k, p, pend
    cdef int64_t x, c, pick
    cdef uint64_t base
    with nogil:
        for k in range(nv):
            base = _mix(s ^ (<uint64_t>vv[k] * 0x9E3779B97F4A7C15ULL))
            c = 0
            p = bp[k]
            pend = bp[k + 1]
            for x in range(a[k], b[k] + 1):
                while p < pend and bl[p] < x:
                    p += 1
                if p < pend and bl[p] == x:
                    continue
                if _mix(base + <uint64_t>x * 0xD1B54A32D192ED03ULL) <= th[k]:
                    c += 1
            cnt[k] = c
            if c == 0:
                continue
            pick = <int64_t>(_mix(base ^ 0xA5A5A5A5A5A5A5A5ULL) % <uint64_t>c)
            p = bp[k]
            for x in range(a[k], b[k] + 1):
                while p < pend and bl[p] < x:
                    p += 1
                if p < pend and bl[p] == x:
                    continue
                if _mix(base + <uint64_t>x * 0xD1B54A32D192ED03ULL) <= th[k]:
                    if pick == 0:
                        out[k] = x
                        break
                    pick -= 1
    return out, cnt


def max_combine(leaf, rows, indptr):
    """out[s] = max over leaf[rows[indptr[s]:indptr[s+1]]] (coordinate-wise)."""
    cdef const uint8_t[:, ::1] L = np.ascontiguousarray(leaf, dtype=np.uint8)
    cdef const int64_t[::1] rw = np.ascontiguousarray(rows, dtype=np.int64)
    cdef const int64_t[::1] ptr = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef Py_ssize_t ns = ptr.shape[0] - 1, t = L.shape[1]
    res = np.zeros((ns, t), dtype=np.uint8)
    cdef uint8_t[:, ::1] out = res
    cdef Py_ssize_t r, j, i
    cdef const uint8_t* src
    cdef uint8_t* dst
    with nogil:
        for r in range(ns):
            dst = &out[r, 0] if t > 0 else NULL
            for j in range(ptr[r], ptr[r + 1]):
                src = &L[rw[j], 0]
                for i in range(t):
                    dst[i] = src[i] if src[i] > dst[i] else dst[i]
    return res
