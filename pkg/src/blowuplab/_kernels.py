"""Compiled inner loops for the method-of-lines system.

The dissipation integral D(t) = int int u_t^2 is advanced as an extra RK
component whose stage derivatives are the weighted squares of the u-stages,
so the ledger's D uses the same stage values as the state update.
"""
import numpy as np
from numba import njit

# Dormand-Prince 5(4) tableau
_C2, _C3, _C4, _C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)

STATUS_OK = 0
STATUS_UNDERFLOW = 1
STATUS_NONFINITE = 2


@njit(cache=True)
def rhs(u, out, coef, W, dirichlet, p, diffusion, reaction):
    M = u.shape[0]
    for i in range(M):
        out[i] = 0.0
    if diffusion:
        for i in range(M - 1):
            f = coef[i] * (u[i + 1] - u[i])
            out[i] += f
            out[i + 1] -= f
        for i in range(M):
            out[i] /= W[i]
    if reaction:
        for i in range(M):
            a = abs(u[i])
            out[i] += a ** (p - 1.0) * u[i]
    if diffusion:
        for i in range(M):
            if dirichlet[i]:
                out[i] = 0.0


@njit(cache=True)
def _wsq(W, k):
    s = 0.0
    for i in range(k.shape[0]):
        s += W[i] * k[i] * k[i]
    return s


@njit(cache=True)
def functionals(u, coef, W, p):
    """Return (grad_sq, int |u|^{p+1}, max |u|, argmax)."""
    M = u.shape[0]
    g = 0.0
    for i in range(M - 1):
        d = u[i + 1] - u[i]
        g += coef[i] * d * d
    P = 0.0
    umax = 0.0
    imax = 0
    for i in range(M):
        a = abs(u[i])
        P += W[i] * a ** (p + 1.0)
        if a > umax:
            umax = a
            imax = i
    return g, P, umax, imax


@njit(cache=True)
def advance(u, k1, dt, coef, W, dirichlet, p, diffusion, reaction,
            dt_cap_diff, reaction_safety, rtol, dt_min, work):
    """Take one accepted DOPRI5 step.

    Returns (status, u_new, k_new, dt_used, dt_next, dD, n_rejected).
    ``work`` is a (6, M) scratch array.
    """
    M = u.shape[0]
    k2 = work[0]
    k3 = work[1]
    k4 = work[2]
    k5 = work[3]
    k6 = work[4]
    y = work[5]
    u_new = np.empty(M)
    k7 = np.empty(M)
    umax = 0.0
    for i in range(M):
        a = abs(u[i])
        if a > umax:
            umax = a
    cap = np.inf
    if diffusion:
        cap = dt_cap_diff
    if reaction and umax > 0.0:
        rc = reaction_safety * umax ** (1.0 - p)
        if rc < cap:
            cap = rc
    n_rej = 0
    while True:
        if dt > cap:
            dt = cap
        if dt < dt_min:
            return STATUS_UNDERFLOW, u, k1, dt, dt, 0.0, n_rej
        for i in range(M):
            y[i] = u[i] + dt * _A21 * k1[i]
        rhs(y, k2, coef, W, dirichlet, p, diffusion, reaction)
        for i in range(M):
            y[i] = u[i] + dt * (_A31 * k1[i] + _A32 * k2[i])
        rhs(y, k3, coef, W, dirichlet, p, diffusion, reaction)
        for i in range(M):
            y[i] = u[i] + dt * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i])
        rhs(y, k4, coef, W, dirichlet, p, diffusion, reaction)
        for i in range(M):
            y[i] = u[i] + dt * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i])
        rhs(y, k5, coef, W, dirichlet, p, diffusion, reaction)
        for i in range(M):
            y[i] = u[i] + dt * (_A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i]
                                + _A64 * k4[i] + _A65 * k5[i])
        rhs(y, k6, coef, W, dirichlet, p, diffusion, reaction)
        for i in range(M):
            u_new[i] = u[i] + dt * (_B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i]
                                    + _B5 * k5[i] + _B6 * k6[i])
        rhs(u_new, k7, coef, W, dirichlet, p, diffusion, reaction)
        err = 0.0
        finite = True
        for i in range(M):
            e = dt * (_E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i]
                      + _E6 * k6[i] + _E7 * k7[i])
            a = abs(u[i])
            b = abs(u_new[i])
            sc = rtol * (1.0 + (a if a > b else b))
            r = abs(e) / sc
            if not np.isfinite(u_new[i]) or not np.isfinite(r):
                finite = False
            elif r > err:
                err = r
        if not finite:
            dt *= 0.1
            n_rej += 1
            continue
        if err <= 1.0:
            dD = dt * (_B1 * _wsq(W, k1) + _B3 * _wsq(W, k3) + _B4 * _wsq(W, k4)
                       + _B5 * _wsq(W, k5) + _B6 * _wsq(W, k6))
            if err == 0.0:
                fac = 5.0
            else:
                fac = 0.9 * err ** -0.2
                if fac > 5.0:
                    fac = 5.0
                if fac < 0.2:
                    fac = 0.2
            return STATUS_OK, u_new, k7, dt, dt * fac, dD, n_rej
        fac = 0.9 * err ** -0.2
        if fac < 0.1:
            fac = 0.1
        dt *= fac
        n_rej += 1
