"""Compiled first-principles kernels.

Everything here runs in nopython mode on contiguous float64 arrays in SI
units. The robot parameters arrive as the unpacked fields of
`KernelParams` in declaration order. Rigid-body terms come from a
recursive Newton-Euler pass in link frames; the mass matrix is assembled
column by column from unit-acceleration passes.
"""

import math

import numpy as np
from numba import njit

DIVERGENCE_LIMIT = 1e6
"""Any state component above this magnitude counts as a diverged rollout"""

SCHEME_EULER = 0
SCHEME_RK4 = 1


@njit(cache=True)
def _cross(a0, a1, a2, b0, b1, b2):  # type: ignore
    return a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0


@njit(cache=True)
def _mul(R, v0, v1, v2):  # type: ignore
    return (
        R[0, 0] * v0 + R[0, 1] * v1 + R[0, 2] * v2,
        R[1, 0] * v0 + R[1, 1] * v1 + R[1, 2] * v2,
        R[2, 0] * v0 + R[2, 1] * v1 + R[2, 2] * v2,
    )


@njit(cache=True)
def _mul_t(R, v0, v1, v2):  # type: ignore
    return (
        R[0, 0] * v0 + R[1, 0] * v1 + R[2, 0] * v2,
        R[0, 1] * v0 + R[1, 1] * v1 + R[2, 1] * v2,
        R[0, 2] * v0 + R[1, 2] * v1 + R[2, 2] * v2,
    )


@njit(cache=True)
def link_transforms(q, dh, R, p):  # type: ignore
    """Fills R[j] (rotation of frame j in frame j-1) and p[j] (origin of
    frame j in frame j-1)
    """
    n = q.shape[0]
    for j in range(n):
        ca = math.cos(dh[j, 1])
        sa = math.sin(dh[j, 1])
        theta = q[j] + dh[j, 3]
        ct = math.cos(theta)
        st = math.sin(theta)
        R[j, 0, 0] = ct
        R[j, 0, 1] = -st
        R[j, 0, 2] = 0.0
        R[j, 1, 0] = st * ca
        R[j, 1, 1] = ct * ca
        R[j, 1, 2] = -sa
        R[j, 2, 0] = st * sa
        R[j, 2, 1] = ct * sa
        R[j, 2, 2] = ca
        p[j, 0] = dh[j, 0]
        p[j, 1] = -sa * dh[j, 2]
        p[j, 2] = ca * dh[j, 2]


@njit(cache=True)
def merge_payload(mass, com, inertia, payload_offset, m_e, mass_out, com_out, inertia_out):  # type: ignore
    """Lumps a point payload at payload_offset into the last segment"""
    n = mass.shape[0]
    mass_out[:] = mass
    com_out[:, :] = com
    inertia_out[:, :, :] = inertia
    if m_e == 0.0:
        return
    j = n - 1
    m = mass[j]
    total = m + m_e
    c = np.empty(3)
    for k in range(3):
        c[k] = (m * com[j, k] + m_e * payload_offset[k]) / total
    d1 = com[j] - c
    d2 = payload_offset - c
    n1 = d1[0] ** 2 + d1[1] ** 2 + d1[2] ** 2
    n2 = d2[0] ** 2 + d2[1] ** 2 + d2[2] ** 2
    for r in range(3):
        for s in range(3):
            eye = 1.0 if r == s else 0.0
            inertia_out[j, r, s] = (
                inertia[j, r, s]
                + m * (n1 * eye - d1[r] * d1[s])
                + m_e * (n2 * eye - d2[r] * d2[s])
            )
    mass_out[j] = total
    com_out[j, :] = c


@njit(cache=True)
def base_acceleration(beta, g0, out):  # type: ignore
    # gravity is g0 * (-cos beta, 0, sin beta) in the base frame; the
    # recursion accelerates the base by its negative
    out[0] = g0 * math.cos(beta)
    out[1] = 0.0
    out[2] = -g0 * math.sin(beta)


@njit(cache=True)
def rnea(R, p, qd, qdd, a0, mass, com, inertia, tau):  # type: ignore
    """Joint torques of the rigid chain for the given motion, with the base
    linearly accelerated by a0
    """
    n = qd.shape[0]
    F = np.empty((n, 3))
    N = np.empty((n, 3))
    w0 = 0.0
    w1 = 0.0
    w2 = 0.0
    e0 = 0.0
    e1 = 0.0
    e2 = 0.0
    v0 = a0[0]
    v1 = a0[1]
    v2 = a0[2]
    for j in range(n):
        Rj = R[j]
        px = p[j, 0]
        py = p[j, 1]
        pz = p[j, 2]
        c0, c1, c2 = _cross(e0, e1, e2, px, py, pz)
        d0, d1, d2 = _cross(w0, w1, w2, px, py, pz)
        f0, f1, f2 = _cross(w0, w1, w2, d0, d1, d2)
        v0, v1, v2 = _mul_t(Rj, v0 + c0 + f0, v1 + c1 + f1, v2 + c2 + f2)

        rw0, rw1, rw2 = _mul_t(Rj, w0, w1, w2)
        re0, re1, re2 = _mul_t(Rj, e0, e1, e2)
        x0, x1, x2 = _cross(rw0, rw1, rw2, 0.0, 0.0, qd[j])
        w0 = rw0
        w1 = rw1
        w2 = rw2 + qd[j]
        e0 = re0 + x0
        e1 = re1 + x1
        e2 = re2 + x2 + qdd[j]

        cx = com[j, 0]
        cy = com[j, 1]
        cz = com[j, 2]
        h0, h1, h2 = _cross(e0, e1, e2, cx, cy, cz)
        k0, k1, k2 = _cross(w0, w1, w2, cx, cy, cz)
        l0, l1, l2 = _cross(w0, w1, w2, k0, k1, k2)
        m = mass[j]
        F[j, 0] = m * (v0 + h0 + l0)
        F[j, 1] = m * (v1 + h1 + l1)
        F[j, 2] = m * (v2 + h2 + l2)

        I = inertia[j]
        iw0, iw1, iw2 = _mul(I, w0, w1, w2)
        ie0, ie1, ie2 = _mul(I, e0, e1, e2)
        g0, g1, g2 = _cross(w0, w1, w2, iw0, iw1, iw2)
        N[j, 0] = ie0 + g0
        N[j, 1] = ie1 + g1
        N[j, 2] = ie2 + g2

    f0 = 0.0
    f1 = 0.0
    f2 = 0.0
    t0 = 0.0
    t1 = 0.0
    t2 = 0.0
    for j in range(n - 1, -1, -1):
        if j < n - 1:
            Rn = R[j + 1]
            a_0, a_1, a_2 = _mul(Rn, f0, f1, f2)
            b_0, b_1, b_2 = _mul(Rn, t0, t1, t2)
            s0, s1, s2 = _cross(p[j + 1, 0], p[j + 1, 1], p[j + 1, 2], a_0, a_1, a_2)
        else:
            a_0 = a_1 = a_2 = 0.0
            b_0 = b_1 = b_2 = 0.0
            s0 = s1 = s2 = 0.0
        r0, r1, r2 = _cross(com[j, 0], com[j, 1], com[j, 2], F[j, 0], F[j, 1], F[j, 2])
        f0 = F[j, 0] + a_0
        f1 = F[j, 1] + a_1
        f2 = F[j, 2] + a_2
        t0 = N[j, 0] + b_0 + s0 + r0
        t1 = N[j, 1] + b_1 + s1 + r1
        t2 = N[j, 2] + b_2 + s2 + r2
        tau[j] = t2


@njit(cache=True)
def mass_matrix_from_links(R, p, mass, com, inertia, M):  # type: ignore
    n = M.shape[0]
    zeros = np.zeros(n)
    unit = np.zeros(n)
    a0 = np.zeros(3)
    col = np.empty(n)
    for j in range(n):
        unit[:] = 0.0
        unit[j] = 1.0
        rnea(R, p, zeros, unit, a0, mass, com, inertia, col)
        M[:, j] = col
    for r in range(n):
        for s in range(r + 1, n):
            avg = 0.5 * (M[r, s] + M[s, r])
            M[r, s] = avg
            M[s, r] = avg


@njit(cache=True)
def passive_torques(q, qd, joint_k, consts, out):  # type: ignore
    """Stiffness, friction and contact torques s + d + b"""
    k_bs = consts[1]
    k_bd = consts[2]
    qdot_c = consts[3]
    q_bt = consts[4]
    for i in range(q.shape[0]):
        tau = joint_k[i, 0] * q[i]
        tau += joint_k[i, 1] * qd[i] + joint_k[i, 2] * math.tanh(qd[i] * math.pi / qdot_c)
        magnitude = abs(q[i])
        if magnitude > q_bt:
            dq = magnitude - q_bt
            sign = 1.0 if q[i] > 0 else -1.0
            tau += sign * dq**1.5 * k_bs + math.sqrt(dq) * qd[i] * k_bd
        out[i] = tau


@njit(cache=True)
def cholesky_solve(M, rhs, out):  # type: ignore
    """Solves M out = rhs for symmetric positive definite M; False when the
    factorization breaks down
    """
    n = M.shape[0]
    L = np.zeros((n, n))
    for j in range(n):
        s = M[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not s > 0.0:
            return False
        L[j, j] = math.sqrt(s)
        for i in range(j + 1, n):
            t = M[i, j]
            for k in range(j):
                t -= L[i, k] * L[j, k]
            L[i, j] = t / L[j, j]
    y = np.empty(n)
    for i in range(n):
        t = rhs[i]
        for k in range(i):
            t -= L[i, k] * y[k]
        y[i] = t / L[i, i]
    for i in range(n - 1, -1, -1):
        t = y[i]
        for k in range(i + 1, n):
            t -= L[k, i] * out[k]
        out[i] = t / L[i, i]
    return True


@njit(cache=True)
def fp_derivative_prepared(x, u, dh, mass_e, com_e, inertia_e, a0, joint_k, consts, out):  # type: ignore
    """State derivative for a payload already merged into the last segment
    and a precomputed base acceleration
    """
    n = dh.shape[0]
    q = x[:n]
    qd = x[n:]
    R = np.empty((n, 3, 3))
    p = np.empty((n, 3))
    link_transforms(q, dh, R, p)

    bias = np.empty(n)
    rnea(R, p, qd, np.zeros(n), a0, mass_e, com_e, inertia_e, bias)
    M = np.empty((n, n))
    mass_matrix_from_links(R, p, mass_e, com_e, inertia_e, M)

    passive = np.empty(n)
    passive_torques(q, qd, joint_k, consts, passive)
    rhs = np.empty(n)
    for i in range(n):
        actuation = consts[0] * (u[2 * i] - u[2 * i + 1])
        rhs[i] = actuation - bias[i] - passive[i]

    qdd = np.empty(n)
    if not cholesky_solve(M, rhs, qdd):
        return False
    for i in range(n):
        out[i] = qd[i]
        out[n + i] = qdd[i]
    return True


@njit(cache=True)
def prepare_domain(m_e, beta, mass, com, inertia, payload_offset, consts):  # type: ignore
    n = mass.shape[0]
    mass_e = np.empty(n)
    com_e = np.empty((n, 3))
    inertia_e = np.empty((n, 3, 3))
    merge_payload(mass, com, inertia, payload_offset, m_e, mass_e, com_e, inertia_e)
    a0 = np.empty(3)
    base_acceleration(beta, consts[5], a0)
    return mass_e, com_e, inertia_e, a0


@njit(cache=True)
def fp_derivative(x, u, m_e, beta, dh, mass, com, inertia, payload_offset, joint_k, consts, out):  # type: ignore
    mass_e, com_e, inertia_e, a0 = prepare_domain(
        m_e, beta, mass, com, inertia, payload_offset, consts
    )
    return fp_derivative_prepared(
        x, u, dh, mass_e, com_e, inertia_e, a0, joint_k, consts, out
    )


@njit(cache=True)
def _finite_and_bounded(x):  # type: ignore
    for i in range(x.shape[0]):
        if not abs(x[i]) <= DIVERGENCE_LIMIT:
            return False
    return True


@njit(cache=True, nogil=True)
def fp_rollout(x0, u_traj, m_e, beta, h, substeps, scheme, dh, mass, com, inertia, payload_offset, joint_k, consts, traj):  # type: ignore
    """Fixed-step rollout with zero-order hold inputs. traj has one more row
    than u_traj. Returns the failing macro step index, or -1 on success.
    """
    mass_e, com_e, inertia_e, a0 = prepare_domain(
        m_e, beta, mass, com, inertia, payload_offset, consts
    )
    dim = x0.shape[0]
    x = x0.copy()
    traj[0, :] = x
    k1 = np.empty(dim)
    k2 = np.empty(dim)
    k3 = np.empty(dim)
    k4 = np.empty(dim)
    tmp = np.empty(dim)
    for k in range(u_traj.shape[0]):
        u = u_traj[k]
        for _ in range(substeps):
            if not fp_derivative_prepared(x, u, dh, mass_e, com_e, inertia_e, a0, joint_k, consts, k1):
                return k
            if scheme == SCHEME_EULER:
                for i in range(dim):
                    x[i] += h * k1[i]
                continue
            for i in range(dim):
                tmp[i] = x[i] + 0.5 * h * k1[i]
            if not fp_derivative_prepared(tmp, u, dh, mass_e, com_e, inertia_e, a0, joint_k, consts, k2):
                return k
            for i in range(dim):
                tmp[i] = x[i] + 0.5 * h * k2[i]
            if not fp_derivative_prepared(tmp, u, dh, mass_e, com_e, inertia_e, a0, joint_k, consts, k3):
                return k
            for i in range(dim):
                tmp[i] = x[i] + h * k3[i]
            if not fp_derivative_prepared(tmp, u, dh, mass_e, com_e, inertia_e, a0, joint_k, consts, k4):
                return k
            for i in range(dim):
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        if not _finite_and_bounded(x):
            return k
        traj[k + 1, :] = x
    return -1


@njit(cache=True, nogil=True)
def fp_batch(X, U, D, eps, want_jacobian, dh, mass, com, inertia, payload_offset, joint_k, consts, F, J, ok):  # type: ignore
    """Per-row state derivatives for rows of (x, u, [m_e, beta]) and, when
    requested, central-difference state Jacobians J[b, i, k] = dF_i/dx_k
    """
    B = X.shape[0]
    dim = X.shape[1]
    for b in range(B):
        mass_e, com_e, inertia_e, a0 = prepare_domain(
            D[b, 0], D[b, 1], mass, com, inertia, payload_offset, consts
        )
        f = np.empty(dim)
        good = fp_derivative_prepared(X[b], U[b], dh, mass_e, com_e, inertia_e, a0, joint_k, consts, f)
        good = good and _finite_and_bounded(f)
        if good and want_jacobian:
            xp = X[b].copy()
            fp = np.empty(dim)
            fm = np.empty(dim)
            for k in range(dim):
                xp[k] = X[b, k] + eps[k]
                g1 = fp_derivative_prepared(xp, U[b], dh, mass_e, com_e, inertia_e, a0, joint_k, consts, fp)
                xp[k] = X[b, k] - eps[k]
                g2 = fp_derivative_prepared(xp, U[b], dh, mass_e, com_e, inertia_e, a0, joint_k, consts, fm)
                xp[k] = X[b, k]
                if not (g1 and g2):
                    good = False
                    break
                for i in range(dim):
                    J[b, i, k] = (fp[i] - fm[i]) / (2.0 * eps[k])
        for i in range(dim):
            F[b, i] = f[i]
        ok[b] = good


@njit(cache=True, nogil=True)
def dynamics_terms_batch(Q, QD, QDD, D, dh, mass, com, inertia, payload_offset, joint_k, consts, G, MQDD, C):  # type: ignore
    """Per-row gravity torques g, inertial torques M q̈ and Coriolis torques c"""
    B = Q.shape[0]
    n = Q.shape[1]
    for b in range(B):
        mass_e, com_e, inertia_e, a0 = prepare_domain(
            D[b, 0], D[b, 1], mass, com, inertia, payload_offset, consts
        )
        R = np.empty((n, 3, 3))
        p = np.empty((n, 3))
        link_transforms(Q[b], dh, R, p)
        zeros = np.zeros(n)
        no_base = np.zeros(3)
        out = np.empty(n)
        rnea(R, p, zeros, zeros, a0, mass_e, com_e, inertia_e, out)
        G[b, :] = out
        rnea(R, p, zeros, QDD[b], no_base, mass_e, com_e, inertia_e, out)
        MQDD[b, :] = out
        rnea(R, p, QD[b], zeros, no_base, mass_e, com_e, inertia_e, out)
        C[b, :] = out
