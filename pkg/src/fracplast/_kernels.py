"""Compiled inner loops (single-threaded, fixed sweep order)."""

import numba
import numpy as np


@numba.njit(cache=True)
def projected_sor_sweeps(
    indptr, indices, data, diag, b, x, lo, hi, free, omega, n_sweeps
):
    """In-place projected SOR sweeps for 0.5 x'Qx - b'x subject to lo<=x<=hi.

    Nodes with ``free == False`` are never updated.  Each coordinate update
    over-relaxes toward the unconstrained coordinate minimizer and clips to
    the bounds, which keeps the energy non-increasing for 0 < omega < 2.
    """
    n = x.shape[0]
    for _ in range(n_sweeps):
        for i in range(n):
            if not free[i]:
                continue
            s = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                if j != i:
                    s += data[k] * x[j]
            target = (b[i] - s) / diag[i]
            xi = x[i] + omega * (target - x[i])
            if xi < lo[i]:
                xi = lo[i]
            elif xi > hi[i]:
                xi = hi[i]
            x[i] = xi
