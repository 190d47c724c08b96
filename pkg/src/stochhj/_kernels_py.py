"""Pure-NumPy min-plus sweep, vectorized over lattice cells.

Mirrors ``_kernels.pyx`` operation for operation (same summation order, same
strict-less tie-break), so results agree bitwise with the compiled backend.
"""
from __future__ import annotations

import numpy as np


def dp_sweep(V0, n1, n2, offsets, kin, vel, F, DF, Bq, wq, J, N2, amp, record, track):
    K = Bq.shape[0]
    m = F.shape[1]
    d = DF.shape[2]
    ncell = n1 * n2
    Jd2 = J if d == 2 else 0
    i1s, i2s = np.divmod(np.arange(ncell, dtype=np.int64), n2)
    tf = (i1s * J) * N2 + i2s * Jd2
    V = np.array(V0, dtype=np.float64, copy=True)
    recs = []
    arg = np.empty((K if track else 0, ncell), dtype=np.int32)
    if record[0]:
        recs.append(V.copy())
    for k in range(K):
        BT = np.zeros(ncell)
        BS = np.zeros(ncell)
        for c in range(m):
            BT += F[tf, c] * Bq[k, J, c]
        for c in range(m):
            BS += F[tf, c] * Bq[k, 0, c]
        best = np.full(ncell, np.inf)
        bi = np.full(ncell, -1, dtype=np.int32)
        for o in range(offsets.shape[0]):
            o1, o2 = int(offsets[o, 0]), int(offsets[o, 1])
            s1 = i1s - o1
            s2 = i2s - o2
            ok = (s1 >= 0) & (s1 < n1) & (s2 >= 0) & (s2 < n2)
            if not ok.any():
                continue
            cells = np.nonzero(ok)[0]
            s1, s2 = s1[ok], s2[ok]
            src = s1 * n2 + s2
            acc = np.zeros(len(cells))
            for j in range(J + 1):
                nf = (s1 * J + j * o1) * N2 + (s2 * Jd2 + j * o2)
                g = np.zeros(len(cells))
                for c in range(m):
                    for l in range(d):
                        g += DF[nf, c, l] * (vel[o, l] * Bq[k, j, c])
                acc += wq[j] * g
            forcing = (BT[cells] - BS[src]) - acc
            cost = kin[o] + amp * forcing
            cand = V[src] + cost
            better = cand < best[cells]
            upd = cells[better]
            best[upd] = cand[better]
            bi[upd] = o
        V = best
        if track:
            arg[k] = bi
        if record[k + 1]:
            recs.append(V.copy())
    rec = np.array(recs).reshape(len(recs), ncell)
    return V, arg, rec


def edge_costs(k, n1, n2, offsets, kin, vel, F, DF, Bq, wq, J, N2, amp):
    """Cost of every lattice edge in slice k as an (noff, ncell) array indexed by
    target cell; inadmissible edges are +inf.  Same arithmetic as the sweep."""
    m = F.shape[1]
    d = DF.shape[2]
    ncell = n1 * n2
    Jd2 = J if d == 2 else 0
    i1s, i2s = np.divmod(np.arange(ncell, dtype=np.int64), n2)
    tf = (i1s * J) * N2 + i2s * Jd2
    BT = np.zeros(ncell)
    BS = np.zeros(ncell)
    for c in range(m):
        BT += F[tf, c] * Bq[k, J, c]
    for c in range(m):
        BS += F[tf, c] * Bq[k, 0, c]
    out = np.full((offsets.shape[0], ncell), np.inf)
    for o in range(offsets.shape[0]):
        o1, o2 = int(offsets[o, 0]), int(offsets[o, 1])
        s1 = i1s - o1
        s2 = i2s - o2
        ok = (s1 >= 0) & (s1 < n1) & (s2 >= 0) & (s2 < n2)
        cells = np.nonzero(ok)[0]
        s1, s2 = s1[ok], s2[ok]
        src = s1 * n2 + s2
        acc = np.zeros(len(cells))
        for j in range(J + 1):
            nf = (s1 * J + j * o1) * N2 + (s2 * Jd2 + j * o2)
            g = np.zeros(len(cells))
            for c in range(m):
                for l in range(d):
                    g += DF[nf, c, l] * (vel[o, l] * Bq[k, j, c])
            acc += wq[j] * g
        forcing = (BT[cells] - BS[src]) - acc
        out[o, cells] = kin[o] + amp * forcing
    return out
