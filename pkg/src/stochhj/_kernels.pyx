# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled min-plus sweep.  Must stay operation-for-operation identical to
``_kernels_py.dp_sweep`` so both backends agree bitwise."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def dp_sweep(double[::1] V0, int n1, int n2, long long[:, ::1] offsets,
             double[::1] kin, double[:, ::1] vel, double[:, ::1] F,
             double[:, :, ::1] DF, double[:, :, ::1] Bq, double[::1] wq,
             int J, int N2, double amp, int[::1] record, bint track):
    cdef Py_ssize_t K = Bq.shape[0]
    cdef Py_ssize_t m = F.shape[1]
    cdef Py_ssize_t d = DF.shape[2]
    cdef Py_ssize_t noff = offsets.shape[0]
    cdef Py_ssize_t ncell = n1 * n2
    cdef Py_ssize_t Jd2 = J if d == 2 else 0
    cdef Py_ssize_t k, i1, i2, s1, s2, o, j, c, l, nf, tf, sf, cell, src
    cdef long long o1, o2
    cdef double best, cand, bt, bs, acc, g, forcing, cost
    cdef int bi
    cdef int nrec = 0
    for k in range(K + 1):
        if record[k]:
            nrec += 1
    V_np = np.array(V0, dtype=np.float64, copy=True)
    W_np = np.empty(ncell, dtype=np.float64)
    BT_np = np.empty(ncell, dtype=np.float64)
    BS_np = np.empty(ncell, dtype=np.float64)
    rec_np = np.empty((nrec, ncell), dtype=np.float64)
    arg_np = np.empty((K if track else 0, ncell), dtype=np.int32)
    cdef double[::1] V = V_np
    cdef double[::1] W = W_np
    cdef double[::1] BT = BT_np
    cdef double[::1] BS = BS_np
    cdef double[:, ::1] rec = rec_np
    cdef int[:, ::1] arg = arg_np
    cdef int ir = 0
    if record[0]:
        rec[ir, :] = V
        ir += 1
    for k in range(K):
        for i1 in range(n1):
            for i2 in range(n2):
                cell = i1 * n2 + i2
                tf = (i1 * J) * N2 + i2 * Jd2
                bt = 0.0
                bs = 0.0
                for c in range(m):
                    bt += F[tf, c] * Bq[k, J, c]
                for c in range(m):
                    bs += F[tf, c] * Bq[k, 0, c]
                BT[cell] = bt
                BS[cell] = bs
        for i1 in range(n1):
            for i2 in range(n2):
                cell = i1 * n2 + i2
                best = INFINITY
                bi = -1
                for o in range(noff):
                    o1 = offsets[o, 0]
                    o2 = offsets[o, 1]
                    s1 = i1 - o1
                    s2 = i2 - o2
                    if s1 < 0 or s1 >= n1 or s2 < 0 or s2 >= n2:
                        continue
                    src = s1 * n2 + s2
                    if V[src] == INFINITY:
                        continue
                    acc = 0.0
                    for j in range(J + 1):
                        nf = (s1 * J + j * o1) * N2 + (s2 * Jd2 + j * o2)
                        g = 0.0
                        for c in range(m):
                            for l in range(d):
                                g += DF[nf, c, l] * (vel[o, l] * Bq[k, j, c])
                        acc += wq[j] * g
                    forcing = (BT[cell] - BS[src]) - acc
                    cost = kin[o] + amp * forcing
                    cand = V[src] + cost
                    if cand < best:
                        best = cand
                        bi = <int>o
                W[cell] = best
                if track:
                    arg[k, cell] = bi
        V[:] = W
        if record[k + 1]:
            rec[ir, :] = V
            ir += 1
    return V_np, arg_np, rec_np
