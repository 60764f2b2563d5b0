# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled mode-field synthesis: same contract as _pykernels.synthesize."""
import numpy as np

cdef enum:
    GRAD = 0
    TE = 1


cdef inline void _cross(double* a, double* b, double* out) noexcept nogil:
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


def synthesize(int family, double k, x_in, P, h_in, bint want_jac):
    cdef const double[:, ::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef const double[:, ::1] h = np.ascontiguousarray(h_in, dtype=np.float64)
    cdef Py_ssize_t Q = x.shape[0]
    cdef int order = h.shape[0] - 1
    cdef const double[::1] P0 = np.ascontiguousarray(P[0], dtype=np.float64)
    cdef const double[:, ::1] P1 = np.ascontiguousarray(P[1], dtype=np.float64).reshape(Q, 3)
    dummy = np.zeros((1, 9))
    cdef const double[:, ::1] P2 = (np.ascontiguousarray(P[2], dtype=np.float64).reshape(Q, 9)
                              if order >= 2 else dummy)
    cdef const double[:, ::1] P3 = (np.ascontiguousarray(P[3], dtype=np.float64).reshape(Q, 27)
                              if order >= 3 else np.zeros((1, 27)))
    val_a = np.empty((Q, 3))
    curl_a = np.zeros((Q, 3))
    jac_a = np.empty((Q, 3, 3)) if want_jac else None
    cdef double[:, ::1] val = val_a
    cdef double[:, ::1] curl = curl_a
    cdef double[:, ::1] jac = jac_a.reshape(Q, 9) if want_jac else dummy
    cdef Py_ssize_t q
    cdef int a, b, c, l, i, j
    cdef double xv[3]
    cdef double dh[3]
    cdef double ddh[9]
    cdef double g1[3]
    cdef double g2[9]
    cdef double gphi[3]
    cdef double col[3]
    cdef double tmp[3]
    cdef double g, h0, h1, h2, h3, p0, s, k2 = k * k
    cdef bint need3 = want_jac and family != GRAD and family != TE
    if need3 and order < 3:
        raise ValueError("TM Jacobians need radial derivatives up to order 3")
    with nogil:
        for q in range(Q):
            xv[0] = x[q, 0]; xv[1] = x[q, 1]; xv[2] = x[q, 2]
            h0 = h[0, q]; h1 = h[1, q]
            h2 = h[2, q] if order >= 2 else 0.0
            h3 = h[3, q] if order >= 3 else 0.0
            p0 = P0[q]
            g = p0 * h0
            for a in range(3):
                dh[a] = 2.0 * xv[a] * h1
                g1[a] = P1[q, a] * h0 + p0 * dh[a]
            if family == GRAD and not want_jac:
                for a in range(3):
                    val[q, a] = g1[a]
                continue
            for a in range(3):
                for b in range(3):
                    ddh[3 * a + b] = 4.0 * xv[a] * xv[b] * h2 + (2.0 * h1 if a == b else 0.0)
                    g2[3 * a + b] = (P2[q, 3 * a + b] * h0 + P1[q, a] * dh[b] + dh[a] * P1[q, b]
                                     + p0 * ddh[3 * a + b])
            if family == GRAD:
                for a in range(3):
                    val[q, a] = g1[a]
                for a in range(9):
                    jac[q, a] = g2[a]
                continue
            for j in range(3):
                s = 0.0
                for l in range(3):
                    s = s + xv[l] * g2[3 * l + j]
                gphi[j] = 2.0 * g1[j] + s
            if family == TE:
                _cross(g1, xv, tmp)
                for j in range(3):
                    val[q, j] = k * tmp[j]
                    curl[q, j] = k * (gphi[j] + k2 * g * xv[j])
                if want_jac:
                    for i in range(3):
                        # column i of g2 crossed with x, plus g1 x e_i
                        col[0] = g2[i]; col[1] = g2[3 + i]; col[2] = g2[6 + i]
                        _cross(col, xv, tmp)
                        for j in range(3):
                            jac[q, 3 * i + j] = k * tmp[j]
                        jac[q, 3 * i + (i + 1) % 3] += k * g1[(i + 2) % 3]
                        jac[q, 3 * i + (i + 2) % 3] -= k * g1[(i + 1) % 3]
                continue
            # TM
            _cross(g1, xv, tmp)
            for j in range(3):
                val[q, j] = k * (gphi[j] + k2 * g * xv[j])
                curl[q, j] = k * k2 * tmp[j]
            if want_jac:
                for i in range(3):
                    for j in range(3):
                        s = 3.0 * g2[3 * i + j] + k2 * g1[i] * xv[j]
                        if i == j:
                            s = s + k2 * g
                        for l in range(3):
                            # g3_lij
                            a = 9 * l + 3 * i + j
                            s = s + xv[l] * (P3[q, a] * h0
                                             + P2[q, 3 * l + i] * dh[j] + P2[q, 3 * l + j] * dh[i]
                                             + P2[q, 3 * i + j] * dh[l]
                                             + P1[q, l] * ddh[3 * i + j] + P1[q, i] * ddh[3 * l + j]
                                             + P1[q, j] * ddh[3 * l + i]
                                             + p0 * (8.0 * xv[l] * xv[i] * xv[j] * h3
                                                     + 4.0 * h2 * ((xv[j] if l == i else 0.0)
                                                                   + (xv[i] if l == j else 0.0)
                                                                   + (xv[l] if i == j else 0.0))))
                        jac[q, 3 * i + j] = k * s
    return val_a, curl_a, jac_a
