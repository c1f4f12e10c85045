"""Compiled inner loops for the fixed-step RK4 integrators.

Everything here is plain float64 array arithmetic so numba can compile it;
validation, shape handling, and dense output live in the calling modules.
Status codes: 0 = ok, 1 = norm bound exceeded or non-finite state (blow-up).
"""

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_BLOWUP = 1


@njit(cache=True)
def _sym(a):
    return 0.5 * (a + a.T.copy())


@njit(cache=True)
def _mu1(t, ex0, m, k):
    w = np.exp(-k * t)
    return ex0 * w + m * (1.0 - w)


@njit(cache=True)
def _riccati_rhs(t, a00, a11, a10, b0, b1, gamma, k0, k, m0, m, ss0, ss1, ex0):
    """Right-hand sides of the six coupled coefficient ODEs at time t."""
    a10t = a10.T.copy()
    mu = _mu1(t, ex0, m, k)

    p0 = ss0 @ a00          # Sigma0 Sigma0^T A00
    q1 = ss1 @ a10          # Sigma Sigma^T A10
    da00 = -gamma * (a00 @ p0) - gamma * (a10t @ q1) + 2.0 * k0 * a00
    da11 = -gamma * (a11 @ (ss1 @ a11)) + 2.0 * k * a11
    da10 = -gamma * (a10 @ p0) - gamma * (a11 @ q1) + (k0 + k) * a10

    ss0b0 = ss0 @ b0
    ss1b1 = ss1 @ b1
    db0 = (-gamma * (a00 @ ss0b0) + k0 * b0 - gamma * (a10t @ ss1b1)
           - k0 * (a00 @ m0) - k * (a10t @ m))
    w = a10 @ (ss0 @ (a10t @ mu))
    db1 = (-gamma * (a11 @ ss1b1) + k * b1 - gamma * (w + a10 @ ss0b0)
           - k * (a11 @ m) - k0 * (a10 @ m0))
    dc = (-0.5 * gamma * np.dot(b0, ss0b0) - 0.5 * gamma * np.dot(b1, ss1b1)
          - k0 * np.dot(b0, m0) - k * np.dot(b1, m)
          + 0.5 * gamma * np.dot(mu, w)
          - 0.5 * np.trace(a00 @ ss0) - 0.5 * np.trace(a11 @ ss1))
    return da00, da11, da10, db0, db1, dc


@njit(cache=True)
def _state_norm(a00, a11, a10, b0, b1, c):
    n = abs(c)
    n = max(n, np.abs(a00).max())
    n = max(n, np.abs(a11).max())
    n = max(n, np.abs(a10).max())
    n = max(n, np.abs(b0).max())
    n = max(n, np.abs(b1).max())
    return n


@njit(cache=True)
def riccati_backward(a00F, a11F, a10F, b0F, b1F, cF,
                     gamma, k0, k, m0, m, ss0, ss1, ex0,
                     horizon, n_steps, bound, symmetrize):
    """Classical RK4 from t=T down to t=0 on a uniform grid of n_steps steps.

    Returns node paths for the six coefficients plus their stored right-hand
    sides, and a status flag. The terminal node holds the inputs bitwise.
    """
    d0 = a00F.shape[0]
    d = a11F.shape[0]
    n = n_steps
    h = horizon / n

    a00 = np.empty((n + 1, d0, d0))
    a11 = np.empty((n + 1, d, d))
    a10 = np.empty((n + 1, d, d0))
    b0 = np.empty((n + 1, d0))
    b1 = np.empty((n + 1, d))
    c = np.empty(n + 1)
    da00 = np.empty((n + 1, d0, d0))
    da11 = np.empty((n + 1, d, d))
    da10 = np.empty((n + 1, d, d0))
    db0 = np.empty((n + 1, d0))
    db1 = np.empty((n + 1, d))
    dc = np.empty(n + 1)

    a00[n] = a00F
    a11[n] = a11F
    a10[n] = a10F
    b0[n] = b0F
    b1[n] = b1F
    c[n] = cF

    status = STATUS_OK
    blow_index = -1
    for idx in range(n, -1, -1):
        t = idx * h
        ya00, ya11, ya10 = a00[idx], a11[idx], a10[idx]
        yb0, yb1, yc = b0[idx], b1[idx], c[idx]

        k1 = _riccati_rhs(t, ya00, ya11, ya10, yb0, yb1, gamma, k0, k, m0, m, ss0, ss1, ex0)
        da00[idx], da11[idx], da10[idx], db0[idx], db1[idx] = k1[0], k1[1], k1[2], k1[3], k1[4]
        dc[idx] = k1[5]
        if idx == 0:
            break

        tm = t - 0.5 * h
        s_a00 = ya00 - 0.5 * h * k1[0]
        s_a11 = ya11 - 0.5 * h * k1[1]
        if symmetrize:
            s_a00 = _sym(s_a00)
            s_a11 = _sym(s_a11)
        k2 = _riccati_rhs(tm, s_a00, s_a11, ya10 - 0.5 * h * k1[2],
                          yb0 - 0.5 * h * k1[3], yb1 - 0.5 * h * k1[4],
                          gamma, k0, k, m0, m, ss0, ss1, ex0)

        s_a00 = ya00 - 0.5 * h * k2[0]
        s_a11 = ya11 - 0.5 * h * k2[1]
        if symmetrize:
            s_a00 = _sym(s_a00)
            s_a11 = _sym(s_a11)
        k3 = _riccati_rhs(tm, s_a00, s_a11, ya10 - 0.5 * h * k2[2],
                          yb0 - 0.5 * h * k2[3], yb1 - 0.5 * h * k2[4],
                          gamma, k0, k, m0, m, ss0, ss1, ex0)

        s_a00 = ya00 - h * k3[0]
        s_a11 = ya11 - h * k3[1]
        if symmetrize:
            s_a00 = _sym(s_a00)
            s_a11 = _sym(s_a11)
        k4 = _riccati_rhs(t - h, s_a00, s_a11, ya10 - h * k3[2],
                          yb0 - h * k3[3], yb1 - h * k3[4],
                          gamma, k0, k, m0, m, ss0, ss1, ex0)

        w = h / 6.0
        na00 = ya00 - w * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        na11 = ya11 - w * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        if symmetrize:
            na00 = _sym(na00)
            na11 = _sym(na11)
        a00[idx - 1] = na00
        a11[idx - 1] = na11
        a10[idx - 1] = ya10 - w * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        b0[idx - 1] = yb0 - w * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
        b1[idx - 1] = yb1 - w * (k1[4] + 2.0 * k2[4] + 2.0 * k3[4] + k4[4])
        c[idx - 1] = yc - w * (k1[5] + 2.0 * k2[5] + 2.0 * k3[5] + k4[5])

        nrm = _state_norm(a00[idx - 1], a11[idx - 1], a10[idx - 1], b0[idx - 1], b1[idx - 1], c[idx - 1])
        if not np.isfinite(nrm) or nrm > bound:
            status = STATUS_BLOWUP
            blow_index = idx - 1
            break

    return a00, a11, a10, b0, b1, c, da00, da11, da10, db0, db1, dc, status, blow_index


@njit(cache=True)
def symmetric_riccati_forward(alpha_half, forcing_half, y0, dt, bound):
    """RK4 for dY/dt = -Y^2 + alpha Y + Y alpha^T + forcing, Y(0) = y0.

    alpha_half and forcing_half are sampled on the half grid (2n+1 points) so
    the RK4 stages read stage-time data directly instead of interpolating.
    """
    n = (alpha_half.shape[0] - 1) // 2
    d0 = y0.shape[0]
    out = np.empty((n + 1, d0, d0))
    dout = np.empty((n + 1, d0, d0))
    out[0] = y0
    status = STATUS_OK
    blow_index = -1
    for i in range(n):
        y = out[i]
        a1, f1 = alpha_half[2 * i], forcing_half[2 * i]
        a2, f2 = alpha_half[2 * i + 1], forcing_half[2 * i + 1]
        a3, f3 = alpha_half[2 * i + 2], forcing_half[2 * i + 2]

        k1 = -(y @ y) + a1 @ y + y @ a1.T.copy() + f1
        dout[i] = k1
        y2 = _sym(y + 0.5 * dt * k1)
        k2 = -(y2 @ y2) + a2 @ y2 + y2 @ a2.T.copy() + f2
        y3 = _sym(y + 0.5 * dt * k2)
        k3 = -(y3 @ y3) + a2 @ y3 + y3 @ a2.T.copy() + f2
        y4 = _sym(y + dt * k3)
        k4 = -(y4 @ y4) + a3 @ y4 + y4 @ a3.T.copy() + f3
        out[i + 1] = _sym(y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))

        nrm = np.abs(out[i + 1]).max()
        if not np.isfinite(nrm) or nrm > bound:
            status = STATUS_BLOWUP
            blow_index = i + 1
            break
    yl = out[n] if status == STATUS_OK else out[blow_index]
    al = alpha_half[2 * n] if status == STATUS_OK else alpha_half[2 * blow_index]
    fl = forcing_half[2 * n] if status == STATUS_OK else forcing_half[2 * blow_index]
    idx_last = n if status == STATUS_OK else blow_index
    dout[idx_last] = -(yl @ yl) + al @ yl + yl @ al.T.copy() + fl
    return out, dout, status, blow_index


@njit(cache=True)
def variance_forward(alpha_half, zeta_half, etaeta_half, v, dt, bound):
    """RK4 for the filter-variance equation
    drho/dt = eta eta^T + alpha rho + rho alpha^T - zeta rho - rho zeta - rho^2,
    rho(0) = v, with stage data on the half grid."""
    n = (alpha_half.shape[0] - 1) // 2
    d0 = v.shape[0]
    out = np.empty((n + 1, d0, d0))
    out[0] = v
    status = STATUS_OK
    blow_index = -1
    for i in range(n):
        y = out[i]
        a1, z1, q1 = alpha_half[2 * i], zeta_half[2 * i], etaeta_half[2 * i]
        a2, z2, q2 = alpha_half[2 * i + 1], zeta_half[2 * i + 1], etaeta_half[2 * i + 1]
        a3, z3, q3 = alpha_half[2 * i + 2], zeta_half[2 * i + 2], etaeta_half[2 * i + 2]

        k1 = q1 + a1 @ y + y @ a1.T.copy() - z1 @ y - y @ z1 - y @ y
        ym = _sym(y + 0.5 * dt * k1)
        k2 = q2 + a2 @ ym + ym @ a2.T.copy() - z2 @ ym - ym @ z2 - ym @ ym
        ym = _sym(y + 0.5 * dt * k2)
        k3 = q2 + a2 @ ym + ym @ a2.T.copy() - z2 @ ym - ym @ z2 - ym @ ym
        ym = _sym(y + dt * k3)
        k4 = q3 + a3 @ ym + ym @ a3.T.copy() - z3 @ ym - ym @ z3 - ym @ ym
        out[i + 1] = _sym(y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))

        nrm = np.abs(out[i + 1]).max()
        if not np.isfinite(nrm) or nrm > bound:
            status = STATUS_BLOWUP
            blow_index = i + 1
            break
    return out, status, blow_index
