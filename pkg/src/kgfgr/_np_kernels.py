"""Vectorized numpy versions of the compiled kernels.

Same signatures and step logic as ``_jit_kernels``; inner loops over
pairs and modes become array operations, the time-step loop stays in
Python.
"""
import math

import numpy as np

from ._jit_kernels import _A21, _A32, _B1, _B2, _B3, _E1, _E2, _E3, _E4


def dominated_mask(E, deg, chunk=512):
    """Flag rows of ``E`` that dominate a row of strictly smaller degree."""
    E = np.asarray(E)
    deg = np.asarray(deg)
    out = np.zeros(E.shape[0], dtype=bool)
    for s in range(0, E.shape[0], chunk):
        rows = E[s:s + chunk]
        le = np.all(E[None, :, :] <= rows[:, None, :], axis=2)
        le &= deg[None, :] < deg[s:s + chunk, None]
        out[s:s + chunk] = le.any(axis=1)
    return out


def _actions(y, n, omega):
    return np.diff(y[:n], prepend=0.0) / omega


def _mode_rhs(tau, y, n, omega, E, coef, Wt, params):
    t = math.expm1(tau)
    p_amp, r_amp, sign = params[0], params[1], params[2]
    X = np.maximum(_actions(y, n, omega), 0.0)
    mono = np.prod(X[None, :] ** E, axis=1)
    out = np.empty(n + 1)
    out[:n] = -(coef * mono) @ Wt
    out[n] = np.prod(np.maximum(y[:n], 0.0)[None, :] ** E, axis=1).sum()
    if p_amp != 0.0 or r_amp != 0.0:
        forcing = np.zeros(n)
        if p_amp != 0.0:
            forcing += p_amp * (X.sum() * (mono @ E) + X * mono.sum())
        if r_amp != 0.0:
            eps, kappa, Nn, delta = params[3], params[4], params[5], params[6]
            Y = eps * eps / (1.0 + 2.0 * Nn * eps ** (4.0 * Nn) * t) ** (1.0 / (2.0 * Nn))
            W = eps ** kappa / (1.0 + eps ** kappa * t)
            r = eps ** (2.0 - delta) * math.sqrt(Y) * W ** 1.5
            r += eps ** 3 * (1.0 + t * t) ** (-0.5625) * math.sqrt(Y * W)
            forcing += r_amp * r
        out[:n] += np.cumsum(omega * sign * forcing)
    return out * (1.0 + t)


def integrate_modes(x0, omega, E, coef, Wt, params, C0, tau_out, rtol, atol, h_max, max_steps):
    """Adaptive Bogacki-Shampine integration; see ``_jit_kernels.integrate_modes``."""
    n = x0.shape[0]
    K = tau_out.shape[0]
    E = np.asarray(E, dtype=float)
    samples = np.zeros((K, n + 1))
    stats = np.zeros(4)
    grew = np.zeros(n, dtype=np.int64)
    y = np.zeros(n + 1)
    y[:n] = np.cumsum(omega * x0)
    rhs = lambda tau, v: _mode_rhs(tau, v, n, omega, E, coef, Wt, params)  # noqa: E731
    tau = tau_out[0]
    samples[0] = y
    k1 = rhs(tau, y)
    scale = np.max(np.abs(y))
    slope = np.max(np.abs(k1))
    h = min(h_max, 0.01 * scale / slope) if slope > 0.0 and scale > 0.0 else h_max
    h = max(h, 1e-12)
    status, t_fail, steps, nxt = 0, 0.0, 0, 1
    roundoff = 64.0 * np.finfo(float).eps
    while nxt < K:
        target = tau_out[nxt]
        hit = False
        h_free = h
        if tau + h >= target:
            h = target - tau
            hit = True
        k2 = rhs(tau + 0.5 * h, y + h * _A21 * k1)
        k3 = rhs(tau + 0.75 * h, y + h * _A32 * k2)
        ynew = y + h * (_B1 * k1 + _B2 * k2 + _B3 * k3)
        k4 = rhs(tau + h, ynew)
        e = h * (_E1 * k1 + _E2 * k2 + _E3 * k3 + _E4 * k4)
        err = float(np.max(np.abs(e) / (atol + rtol * np.maximum(np.abs(y), np.abs(ynew)))))
        Xnew = _actions(ynew, n, omega)
        prev = np.concatenate(([0.0], ynew[:n - 1]))
        negative = bool(np.any(ynew[:n] < 0.0) or np.any(omega * Xnew < -roundoff * prev))
        steps += 1
        if err <= 1.0 and not negative:
            stats[0] += 1.0
            Xold = _actions(y, n, omega)
            grew += Xnew > Xold
            rise = math.exp(-C0 * ynew[n]) * ynew[:n] - math.exp(-C0 * y[n]) * y[:n]
            stats[2] = max(stats[2], float(rise.max()))
            tau = target if hit else tau + h
            y = ynew
            k1 = k4
            if hit:
                samples[nxt] = y
                nxt += 1
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** (-1.0 / 3.0)))
            h = min(max(h, h_free) * fac if hit else h * fac, h_max)
        else:
            stats[1] += 1.0
            h *= 0.5 if negative else max(0.1, 0.9 * err ** (-1.0 / 3.0))
        if h < 1e-14 * max(1.0, tau):
            status, t_fail = 1, math.expm1(tau)
            break
        if steps >= max_steps:
            status, t_fail = 2, math.expm1(tau)
            break
    return samples, stats, grew, status, t_fail


def kg_evolve(vecs, omega, a, b, dt, nsteps, lam, damp, weights):
    """Composed Strang steps; see ``_jit_kernels.kg_evolve``."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    c = np.cos(np.outer(weights, omega) * dt)
    s = np.sin(np.outer(weights, omega) * dt)
    absorbing = bool(np.any(damp != 1.0))
    S = len(weights)
    kick = np.zeros_like(a)

    def force(a):
        u = vecs @ a
        return vecs.T @ (u * u * u)

    if lam != 0.0:
        kick = force(a)
        b += 0.5 * weights[0] * dt * lam * kick
    for step in range(nsteps):
        last = step == nsteps - 1
        for i in range(S):
            a, b = c[i] * a + (s[i] / omega) * b, -omega * s[i] * a + c[i] * b
            if lam != 0.0:
                kick = force(a)
                w = 0.5 * weights[i]
                if i < S - 1:
                    w += 0.5 * weights[i + 1]
                elif not (absorbing or last):
                    w += 0.5 * weights[0]
                b += w * dt * lam * kick
        if absorbing:
            b = vecs.T @ ((vecs @ b) * damp)
            if lam != 0.0 and not last:
                b += 0.5 * weights[0] * dt * lam * kick
    return a, b
