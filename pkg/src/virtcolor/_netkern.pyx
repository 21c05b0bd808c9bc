# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled tree-phase accounting; must match ``netsim._tree_charge_numpy``."""

import numpy as np
from libc.stdint cimport int64_t, uint8_t


def tree_charge(const int64_t[:] bits, const uint8_t[::1] sel, const int64_t[::1] owner,
                const int64_t[::1] inv, const int64_t[::1] ld, const int64_t[::1] tag,
                const int64_t[::1] rho, const int64_t[::1] depth, const int64_t[::1] key_level,
                int64_t nlevels, int64_t bw, int64_t[::1] lbits, int64_t[::1] lfrags,
                int64_t[::1] load, int64_t[::1] stamp, int64_t stamp_id):
    """One pass over the support-tree records.

    Returns (rounds, bound, total_bits, link directions used, first record
    whose tag leaves no payload room or -1).
    """
    cdef Py_ssize_t R = owner.shape[0], r, k, nt = 0
    cdef int64_t b, cap, f, o, l, total = 0, used = 0, bad = -1
    cdef int64_t maxf = 0, maxrho = 0, maxd = 0, rounds = 0
    cdef int64_t[::1] touched = np.empty(R, dtype=np.int64)
    cdef int64_t[::1] lvl = np.zeros(max(nlevels, 1), dtype=np.int64)
    with nogil:
        for r in range(R):
            o = owner[r]
            if not sel[o]:
                continue
            b = bits[o]
            cap = bw - tag[r]
            if cap <= 0:
                if bad < 0:
                    bad = r
                cap = 1
            f = (b + cap - 1) // cap
            k = inv[r]
            if load[k] == 0:
                touched[nt] = k
                nt += 1
            load[k] += f
            l = ld[r]
            lbits[l] += b + f * tag[r]
            lfrags[l] += f
            total += b + f * tag[r]
            if stamp[l] != stamp_id:
                stamp[l] = stamp_id
                used += 1
            if f > maxf:
                maxf = f
            if rho[r] > maxrho:
                maxrho = rho[r]
            if depth[r] > maxd:
                maxd = depth[r]
        for r in range(nt):
            k = touched[r]
            if load[k] > lvl[key_level[k]]:
                lvl[key_level[k]] = load[k]
            load[k] = 0
        for r in range(nlevels):
            rounds += lvl[r]
    return rounds, maxrho * maxd * maxf, total, used, bad
