"""Numpy implementation of the mode-field synthesis kernel."""
import numpy as np

EPS3 = np.zeros((3, 3, 3))
EPS3[0, 1, 2] = EPS3[1, 2, 0] = EPS3[2, 0, 1] = 1.0
EPS3[0, 2, 1] = EPS3[2, 1, 0] = EPS3[1, 0, 2] = -1.0

GRAD, TE, TM = 0, 1, 2


def potential_derivs(x, P, h, order):
    """g = P(x) h(|x|^2) and its Cartesian derivatives up to ``order`` (<= 3)."""
    I = np.eye(3)
    out = [P[0] * h[0]]
    if order >= 1:
        dh = 2.0 * x * h[1][:, None]
        out.append(P[1] * h[0][:, None] + P[0][:, None] * dh)
    if order >= 2:
        ddh = 2.0 * I[None] * h[1][:, None, None] + 4.0 * np.einsum("qa,qb->qab", x, x) * h[2][:, None, None]
        g2 = (P[2] * h[0][:, None, None] + np.einsum("qa,qb->qab", P[1], dh)
              + np.einsum("qa,qb->qab", dh, P[1]) + P[0][:, None, None] * ddh)
        out.append(g2)
    if order >= 3:
        sym = (np.einsum("ab,qc->qabc", I, x) + np.einsum("ac,qb->qabc", I, x)
               + np.einsum("bc,qa->qabc", I, x))
        dddh = 4.0 * sym * h[2][:, None, None, None] \
            + 8.0 * np.einsum("qa,qb,qc->qabc", x, x, x) * h[3][:, None, None, None]
        g3 = (P[3] * h[0][:, None, None, None]
              + np.einsum("qab,qc->qabc", P[2], dh) + np.einsum("qac,qb->qabc", P[2], dh)
              + np.einsum("qbc,qa->qabc", P[2], dh)
              + np.einsum("qa,qbc->qabc", P[1], ddh) + np.einsum("qb,qac->qabc", P[1], ddh)
              + np.einsum("qc,qab->qabc", P[1], ddh)
              + P[0][:, None, None, None] * dddh)
        out.append(g3)
    return out


def synthesize(family, k, x, P, h, want_jac):
    """Unnormalized field, curl and Jacobian d_i u_j of one mode.

    ``P`` lists the solid harmonic and its derivative tensors, ``h`` the
    radial factor and its s-derivatives (s = |x|^2).
    """
    x = np.asarray(x, float)
    if family == GRAD:
        d = potential_derivs(x, P, h, 2 if want_jac else 1)
        return d[1], np.zeros_like(d[1]), (d[2] if want_jac else None)
    if family == TE:
        g, g1, g2 = potential_derivs(x, P, h, 2)
        val = k * np.cross(g1, x)
        gphi = 2.0 * g1 + np.einsum("ql,qlj->qj", x, g2)
        curl = k * (gphi + k * k * g[:, None] * x)
        jac = None
        if want_jac:
            # d_i u_j = k (eps_jab g_ai x_b + eps_jai g_a)
            jac = k * (np.einsum("jab,qai,qb->qij", EPS3, g2, x) + np.einsum("jai,qa->qij", EPS3, g1))
        return val, curl, jac
    d = potential_derivs(x, P, h, 3 if want_jac else 2)
    g, g1, g2 = d[0], d[1], d[2]
    gphi = 2.0 * g1 + np.einsum("ql,qlj->qj", x, g2)
    val = k * (gphi + k * k * g[:, None] * x)
    curl = k ** 3 * np.cross(g1, x)
    jac = None
    if want_jac:
        jac = k * (3.0 * g2 + np.einsum("ql,qlij->qij", x, d[3])
                   + k * k * (np.einsum("qi,qj->qij", g1, x) + g[:, None, None] * np.eye(3)[None]))
    return val, curl, jac
