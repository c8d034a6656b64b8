"""Hot loops in the numba subset, compiled with ``njit``.

The uncompiled source stays reachable through ``.py_func``; the
vectorized numpy counterparts live in ``_np_kernels``.
"""
import math

import numpy as np

from ._accel import njit


@njit(cache=True)
def dominated_mask(E, deg):
    """Flag rows of ``E`` that dominate a strictly smaller row.

    ``E`` holds one exponent vector per row, sorted by nondecreasing
    total degree ``deg``; duplicates are assumed removed.
    """
    P, d = E.shape
    out = np.zeros(P, dtype=np.bool_)
    for i in range(P):
        for j in range(P):
            if deg[j] >= deg[i]:
                break
            below = True
            for k in range(d):
                if E[j, k] > E[i, k]:
                    below = False
                    break
            if below:
                out[i] = True
                break
    return out


# Bogacki-Shampine 3(2); all third-order weights are positive, which keeps
# sign-definite increments sign-definite after the update.
_A21 = 0.5
_A32 = 0.75
_B1 = 2.0 / 9.0
_B2 = 1.0 / 3.0
_B3 = 4.0 / 9.0
_E1 = _B1 - 7.0 / 24.0
_E2 = _B2 - 0.25
_E3 = _B3 - 1.0 / 3.0
_E4 = -0.125


@njit(cache=True)
def _actions(y, n, omega, X):
    """Recover ``X`` from the prefix sums held in ``y[:n]``."""
    prev = 0.0
    for j in range(n):
        X[j] = (y[j] - prev) / omega[j]
        prev = y[j]


@njit(cache=True)
def _mode_rhs(tau, y, n, omega, E, coef, Wt, params, X, out):
    """Log-time right-hand side for the packed state ``(Xt, A)``.

    ``params = (p_amp, r_amp, sign, eps, kappa, N_n, delta)``. Monomials
    are evaluated on ``max(X, 0)``, so without forcing every ``Xt``
    increment is a nonnegative combination of nonpositive terms.
    """
    t = math.expm1(tau)
    P = E.shape[0]
    p_amp = params[0]
    r_amp = params[1]
    sign = params[2]
    _actions(y, n, omega, X)
    for j in range(n):
        X[j] = max(X[j], 0.0)
    for j in range(n + 1):
        out[j] = 0.0
    mono = np.empty(P)
    for p in range(P):
        mx = 1.0
        mt = 1.0
        for j in range(n):
            e = E[p, j]
            if e:
                mx *= X[j] ** e
                mt *= max(y[j], 0.0) ** e
        mono[p] = mx
        for j in range(n):
            out[j] -= Wt[p, j] * coef[p] * mx
        out[n] += mt
    if p_amp != 0.0 or r_amp != 0.0:
        forcing = np.zeros(n)
        if p_amp != 0.0:
            xsum = 0.0
            msum = 0.0
            for j in range(n):
                xsum += X[j]
            for p in range(P):
                msum += mono[p]
            for j in range(n):
                weighted = 0.0
                for p in range(P):
                    weighted += mono[p] * E[p, j]
                forcing[j] += p_amp * (xsum * weighted + X[j] * msum)
        if r_amp != 0.0:
            eps = params[3]
            kappa = params[4]
            Nn = params[5]
            delta = params[6]
            Y = eps * eps / (1.0 + 2.0 * Nn * eps ** (4.0 * Nn) * t) ** (1.0 / (2.0 * Nn))
            W = eps ** kappa / (1.0 + eps ** kappa * t)
            r = eps ** (2.0 - delta) * math.sqrt(Y) * W ** 1.5
            r += eps ** 3 * (1.0 + t * t) ** (-0.5625) * math.sqrt(Y * W)
            for j in range(n):
                forcing[j] += r_amp * r
        acc = 0.0
        for j in range(n):
            acc += omega[j] * sign * forcing[j]
            out[j] += acc
    jac = 1.0 + t
    for j in range(n + 1):
        out[j] *= jac


@njit(cache=True)
def integrate_modes(x0, omega, E, coef, Wt, params, C0, tau_out, rtol, atol, h_max, max_steps):
    """Adaptive Bogacki-Shampine integration of the reduced mode system.

    The state is ``(Xt, A)`` in log time ``tau = log(1 + t)`` with
    ``Xt_j = sum_{k<=j} omega_k X_k``; it is advanced with the nonnegative
    weight matrix ``Wt``, so that without forcing ``Xt`` and
    ``exp(-C0 A) Xt`` can only decrease. Steps that leave some ``X_j``
    negative beyond roundoff are rejected.

    Returns sampled states at ``tau_out``, step statistics
    ``(accepted, rejected, max_hat_increase, 0)``, per-mode counts of steps
    where ``X_j`` grew, a status code (0 ok, 1 step underflow, 2 step
    budget) and the failure time.
    """
    n = x0.shape[0]
    size = n + 1
    K = tau_out.shape[0]
    samples = np.zeros((K, size))
    stats = np.zeros(4)
    grew = np.zeros(n, dtype=np.int64)
    y = np.zeros(size)
    acc = 0.0
    for j in range(n):
        acc += omega[j] * x0[j]
        y[j] = acc
    X = np.empty(n)
    Xold = np.empty(n)
    Xnew = np.empty(n)
    k1 = np.empty(size)
    k2 = np.empty(size)
    k3 = np.empty(size)
    k4 = np.empty(size)
    ytmp = np.empty(size)
    ynew = np.empty(size)
    tau = tau_out[0]
    samples[0, :] = y
    _mode_rhs(tau, y, n, omega, E, coef, Wt, params, X, k1)
    scale = 0.0
    slope = 0.0
    for j in range(size):
        scale = max(scale, abs(y[j]))
        slope = max(slope, abs(k1[j]))
    h = h_max
    if slope > 0.0 and scale > 0.0:
        h = min(h_max, 0.01 * scale / slope)
    h = max(h, 1e-12)
    status = 0
    t_fail = 0.0
    steps = 0
    nxt = 1
    roundoff = 64.0 * 2.220446049250313e-16
    while nxt < K:
        target = tau_out[nxt]
        hit = False
        h_free = h
        if tau + h >= target:
            h = target - tau
            hit = True
        for j in range(size):
            ytmp[j] = y[j] + h * _A21 * k1[j]
        _mode_rhs(tau + 0.5 * h, ytmp, n, omega, E, coef, Wt, params, X, k2)
        for j in range(size):
            ytmp[j] = y[j] + h * _A32 * k2[j]
        _mode_rhs(tau + 0.75 * h, ytmp, n, omega, E, coef, Wt, params, X, k3)
        for j in range(size):
            ynew[j] = y[j] + h * (_B1 * k1[j] + _B2 * k2[j] + _B3 * k3[j])
        _mode_rhs(tau + h, ynew, n, omega, E, coef, Wt, params, X, k4)
        err = 0.0
        for j in range(size):
            e = h * (_E1 * k1[j] + _E2 * k2[j] + _E3 * k3[j] + _E4 * k4[j])
            sc = atol + rtol * max(abs(y[j]), abs(ynew[j]))
            err = max(err, abs(e) / sc)
        _actions(ynew, n, omega, Xnew)
        negative = False
        prev = 0.0
        for j in range(n):
            if ynew[j] < 0.0 or omega[j] * Xnew[j] < -roundoff * prev:
                negative = True
            prev = ynew[j]
        steps += 1
        if err <= 1.0 and not negative:
            stats[0] += 1.0
            _actions(y, n, omega, Xold)
            decay_old = math.exp(-C0 * y[n])
            decay_new = math.exp(-C0 * ynew[n])
            for j in range(n):
                if Xnew[j] > Xold[j]:
                    grew[j] += 1
                rise = decay_new * ynew[j] - decay_old * y[j]
                if rise > stats[2]:
                    stats[2] = rise
            tau = target if hit else tau + h
            for j in range(size):
                y[j] = ynew[j]
                k1[j] = k4[j]
            if hit:
                samples[nxt, :] = y
                nxt += 1
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** (-1.0 / 3.0)))
            h = min(max(h, h_free) * fac if hit else h * fac, h_max)
        else:
            stats[1] += 1.0
            if negative:
                h *= 0.5
            else:
                h *= max(0.1, 0.9 * err ** (-1.0 / 3.0))
        if h < 1e-14 * max(1.0, tau):
            status = 1
            t_fail = math.expm1(tau)
            break
        if steps >= max_steps:
            status = 2
            t_fail = math.expm1(tau)
            break
    return samples, stats, grew, status, t_fail


@njit(cache=True)
def kg_evolve(vecs, omega, a, b, dt, nsteps, lam, damp, weights):
    """Composed Strang steps for cubic Klein-Gordon in eigen-coordinates.

    ``a, b`` are the eigen-coefficients of ``u`` and ``v = u_t``. Each step
    of size ``dt`` runs one Strang substep (half kick, exact rotation per
    mode, half kick) per entry of ``weights``, with size ``weight * dt``;
    ``weights = [1]`` is plain Strang, the triple jump gives fourth order.
    ``damp`` multiplies the grid velocity after every full step. Adjacent
    half kicks are fused whenever no damping sits between them.
    """
    a = a.copy()
    b = b.copy()
    S = weights.shape[0]
    c = np.empty((S, omega.shape[0]))
    s = np.empty((S, omega.shape[0]))
    for i in range(S):
        c[i] = np.cos(omega * weights[i] * dt)
        s[i] = np.sin(omega * weights[i] * dt)
    absorbing = False
    for i in range(damp.shape[0]):
        if damp[i] != 1.0:
            absorbing = True
            break
    vt = np.ascontiguousarray(vecs.T)
    nonlinear = lam != 0.0
    kick = np.zeros_like(a)
    if nonlinear:
        u = vecs @ a
        kick = vt @ (u * u * u)
        b += 0.5 * weights[0] * dt * lam * kick
    for step in range(nsteps):
        last = step == nsteps - 1
        for i in range(S):
            a_new = c[i] * a + (s[i] / omega) * b
            b = -omega * s[i] * a + c[i] * b
            a = a_new
            if nonlinear:
                u = vecs @ a
                kick = vt @ (u * u * u)
                w = 0.5 * weights[i]
                if i < S - 1:
                    w += 0.5 * weights[i + 1]
                elif not (absorbing or last):
                    w += 0.5 * weights[0]
                b += w * dt * lam * kick
        if absorbing:
            b = vt @ ((vecs @ b) * damp)
            if nonlinear and not last:
                b += 0.5 * weights[0] * dt * lam * kick
    return a, b
