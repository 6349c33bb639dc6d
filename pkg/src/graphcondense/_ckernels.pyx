# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Fused arc-cosine fc step for the kernel recursion.

Single pass over the block with no temporaries; contract matches
graphcondense._gntk_np.fc_step.
"""

from libc.math cimport sqrt, acos, sin, cos, M_PI

import numpy as np


def fc_step(double[:, ::1] sig, double[:, ::1] ker,
            double[::1] diag1, double[::1] diag2, double c=2.0):
    cdef Py_ssize_t n1 = sig.shape[0]
    cdef Py_ssize_t n2 = sig.shape[1]
    cdef Py_ssize_t i, j
    cdef double du, dv, norm, rho, theta, ns, nd
    cdef double scale = c / (2.0 * M_PI)

    for i in range(n1):
        du = diag1[i]
        if du < 0.0:
            raise ValueError("negative variance input")
        for j in range(n2):
            dv = diag2[j]
            if dv < 0.0:
                raise ValueError("negative variance input")
            norm = sqrt(du * dv)
            if norm <= 0.0:
                ker[i, j] = 0.0
                sig[i, j] = 0.0
                continue
            rho = sig[i, j] / norm
            if rho > 1.0:
                rho = 1.0
            elif rho < -1.0:
                rho = -1.0
            theta = acos(rho)
            ns = scale * norm * (sin(theta) + (M_PI - theta) * cos(theta))
            nd = scale * (M_PI - theta)
            ker[i, j] = ker[i, j] * nd + ns
            sig[i, j] = ns
    return np.asarray(sig), np.asarray(ker)
