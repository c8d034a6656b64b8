"""Reduced dynamics of the discrete modes.

The bound-state actions ``X_j`` obey

    dX_j/dt = -sum_{(lam, rho) in Lambda*} (lam_j - rho_j) c X^(lam+rho) + P_j + R_j,

where bad resonances (``lam_j < rho_j``) feed mode ``j``. The weighted
prefix sums ``Xt_j = sum_{k<=j} omega_k X_k`` cancel that growth, and

    Xh = exp(-C0 int_0^t sum_{Lambda*} Xt^(lam+rho) ds) Xt

is nonincreasing. ``integrate`` advances ``(Xt, A)`` in log time with a
Bogacki-Shampine pair and recovers ``X`` by differencing; see
``_kernels.integrate_modes``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .resonance import (
    ContractError,
    FrequencySpec,
    compute_exponents,
    default_max_order,
    enumerate_lambda,
    minimal_set,
)

C0_DEFAULT = 10.0
SUSPICIOUS_CONSTANT = 1e3
SLOPE_TOL = 0.05


class NegativeStateWarning(RuntimeWarning):
    """Negative actions were clamped to zero."""


@dataclass
class OdeSystem:
    """The reduced mode system and its forcing model.

    Attributes
    ----------
    freq : FrequencySpec
    lambda_star : list of ResonancePair
    coefficients : ndarray
        ``c_{lam rho} > 0``, aligned with ``lambda_star``.
    lambda_full : list of ResonancePair
        Truncated resonance set; sets ``kappa`` and the sum in ``rhs_hat``.
    C0 : float
    eps : float
        Smallness scale of the data, ``X_n(0) ~ eps^2``.
    p_amp, r_amp : float
        Prefactors of the perturbative and error envelopes.
    r_sign : float
        ``+1`` pushes the actions up (adversarial), ``-1`` down.
    c_hat : ndarray
        Per-mode constants of the renormalized damping form.
    """

    freq: FrequencySpec
    lambda_star: list
    coefficients: np.ndarray = None
    lambda_full: list = None
    C0: float = C0_DEFAULT
    eps: float = 0.1
    p_amp: float = 0.0
    r_amp: float = 0.0
    r_sign: float = 1.0
    c_hat: np.ndarray = None
    exponents: object = field(init=False, repr=False)

    def __post_init__(self):
        pairs = list(self.lambda_star)
        if not pairs:
            raise ValueError("lambda_star is empty")
        n = self.freq.n
        if self.coefficients is None:
            self.coefficients = np.ones(len(pairs))
        coeffs = np.asarray(self.coefficients, dtype=float)
        if coeffs.shape != (len(pairs),):
            raise ValueError("one coefficient per minimal pair is required")
        order = sorted(range(len(pairs)), key=lambda i: pairs[i].sort_key)
        self.lambda_star = [pairs[i] for i in order]
        self.coefficients = coeffs[order]
        if np.any(self.coefficients <= 0):
            raise ValueError("coefficients must be positive")
        if self.c_hat is None:
            self.c_hat = np.ones(n)
        self.c_hat = np.asarray(self.c_hat, dtype=float)
        if self.lambda_full is None:
            self.lambda_full = list(self.lambda_star)
        if not (0.0 < self.eps < 1.0):
            raise ValueError("eps must lie in (0, 1)")
        if self.C0 <= 0:
            raise ValueError("C0 must be positive")
        self.exponents = compute_exponents(self.freq, self.lambda_full)
        if np.any(self.weights < -1e-12):
            p = self.lambda_star[int(np.argmin(self.weights.min(axis=1)))]
            raise ContractError(f"negative weighted cancellation for {p}")

    @property
    def n(self):
        return self.freq.n

    @property
    def E(self):
        """Exponent rows ``lam + rho``."""
        return np.array([p.total for p in self.lambda_star], dtype=np.int64)

    @property
    def D(self):
        """Rows ``lam - rho``."""
        return np.array([p.theta for p in self.lambda_star], dtype=float)

    @property
    def weights(self):
        """``W[p, j] = sum_{k<=j} omega_k (lam_k - rho_k)``."""
        return np.cumsum(self.D * self.freq.omega, axis=1)

    @property
    def delta(self):
        return 1.0 / (100.0 * self.exponents.N[-1])


def build_system(freq, max_order=None, lambda_star=None, coefficients="ones", seed=0, **kw):
    """Assemble an ``OdeSystem`` from frequencies.

    ``coefficients`` is ``"ones"``, ``"random"`` (uniform on [0.5, 2]
    from ``seed``) or an explicit array.
    """
    max_order = default_max_order(freq) if max_order is None else max_order
    full = enumerate_lambda(freq, max_order)
    star = minimal_set(full) if lambda_star is None else sorted(lambda_star)
    if isinstance(coefficients, str):
        if coefficients == "ones":
            coefficients = np.ones(len(star))
        elif coefficients == "random":
            coefficients = np.random.default_rng(seed).uniform(0.5, 2.0, len(star))
        else:
            raise ValueError(f"unknown coefficient model {coefficients!r}")
    return OdeSystem(freq, star, coefficients=coefficients, lambda_full=full, **kw)


def toy_system(**kw):
    """Two modes ``omega = (0.45, 0.25)``, ``m = 1`` with unit coefficients."""
    return build_system(FrequencySpec(1.0, (0.45, 0.25)), **kw)


def monomials(X, E):
    """``X^e`` for every exponent row of ``E``."""
    return np.prod(np.asarray(X, dtype=float)[None, :] ** E, axis=1)


def _clamped(X):
    X = np.asarray(X, dtype=float)
    if np.any(X < 0):
        warnings.warn("negative actions clamped to zero", NegativeStateWarning, stacklevel=3)
        X = np.maximum(X, 0.0)
    return X


def comparison_Y(t, eps, Nn):
    """``eps^2 / (1 + 2 N_n eps^(4 N_n) t)^(1/(2 N_n))``, solving ``Y' = -Y^(2N_n+1)``."""
    t = np.asarray(t, dtype=float)
    return eps ** 2 / (1.0 + 2.0 * Nn * eps ** (4 * Nn) * t) ** (1.0 / (2 * Nn))


def comparison_W(t, eps, kappa):
    """``eps^kappa / (1 + eps^kappa t)``, solving ``W' = -W^2``."""
    t = np.asarray(t, dtype=float)
    return eps ** kappa / (1.0 + eps ** kappa * t)


def forcing(X, t, sys):
    """The modelled ``P + R`` at state ``X`` and time ``t``."""
    X = np.maximum(np.asarray(X, dtype=float), 0.0)
    out = np.zeros(sys.n)
    if sys.p_amp:
        mono = monomials(X, sys.E)
        out += sys.p_amp * (X.sum() * (mono @ sys.E) + X * mono.sum())
    if sys.r_amp:
        ex = sys.exponents
        Y = comparison_Y(t, sys.eps, ex.N[-1])
        W = comparison_W(t, sys.eps, ex.kappa)
        r = sys.eps ** (2 - sys.delta) * np.sqrt(Y) * W ** 1.5
        r += sys.eps ** 3 * (1.0 + t * t) ** (-9.0 / 16.0) * np.sqrt(Y * W)
        out += sys.r_amp * r
    return sys.r_sign * out


def rhs_X(X, sys, t=0.0):
    """``dX/dt`` of the reduced system (negative inputs are clamped with a warning)."""
    X = _clamped(X)
    mono = sys.coefficients * monomials(X, sys.E)
    return -(mono @ sys.D) + forcing(X, t, sys)


def to_tilde(X, freq):
    """``Xt_j = sum_{k<=j} omega_k X_k`` (works along a leading time axis)."""
    return np.cumsum(np.asarray(X, dtype=float) * freq.omega, axis=-1)


def from_tilde(Xt, freq):
    Xt = np.asarray(Xt, dtype=float)
    return np.diff(Xt, axis=-1, prepend=0.0) / freq.omega


def to_hat(Xt, accumulator, C0=C0_DEFAULT):
    """``exp(-C0 A) Xt``."""
    acc = np.asarray(accumulator, dtype=float)
    if np.any(acc < 0):
        raise ValueError("accumulator must be nonnegative")
    return np.exp(-C0 * acc)[..., None] * np.asarray(Xt, dtype=float)


def rhs_hat(Xh, sys, R_hat=0.0):
    """Renormalized damping form of ``dXh/dt``.

    ``-c_j (sum_{Lambda} sum_{k<=j} (lam_k+rho_k) Xh^e + Xh_j sum_{Lambda*} Xh^e) + R_j``.
    """
    Xh = _clamped(Xh)
    Ef = np.array([p.total for p in sys.lambda_full], dtype=np.int64)
    full = monomials(Xh, Ef) @ np.cumsum(Ef, axis=1)
    star = monomials(Xh, sys.E).sum()
    return -sys.c_hat * (full + Xh * star) + R_hat


@dataclass
class ModeTrajectory:
    times: np.ndarray
    X: np.ndarray
    X_tilde: np.ndarray
    X_hat: np.ndarray
    accumulator: np.ndarray
    stats: dict = field(default_factory=dict)

    @property
    def norm(self):
        return self.X.sum(axis=1)

    @property
    def hat_norm(self):
        return self.X_hat.sum(axis=1)


class IntegrationError(RuntimeError):
    def __init__(self, message, t):
        super().__init__(message)
        self.t = t


def sample_times(t_end, samples_per_decade=20, t_min=None):
    """``0`` followed by a log-spaced grid up to ``t_end``."""
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    t_min = min(1.0, t_end / 1e3) if t_min is None else t_min
    decades = max(math.log10(t_end / t_min), 1e-9)
    K = max(int(math.ceil(decades * samples_per_decade)) + 1, 2)
    return np.concatenate([[0.0], np.geomspace(t_min, t_end, K)])


def integrate(sys, X0, t_end, rel_tol=1e-8, samples_per_decade=20, abs_tol=1e-300,
              max_steps=10_000_000, h_max=0.25):
    """Integrate the reduced system from ``X0`` to ``t_end``.

    Returns a ``ModeTrajectory`` sampled at ``sample_times``. Raises
    ``IntegrationError`` with the failure time if the step size underflows
    or the step budget runs out.
    """
    X0 = np.asarray(X0, dtype=float)
    if X0.shape != (sys.n,) or np.any(X0 < 0):
        raise ValueError("X0 must be a nonnegative vector of length n")
    times = sample_times(t_end, samples_per_decade)
    ex = sys.exponents
    params = np.array([sys.p_amp, sys.r_amp, sys.r_sign, sys.eps, ex.kappa, ex.N[-1], sys.delta])
    samples, stats, grew, status, t_fail = _kernels.integrate_modes(
        X0, sys.freq.omega, sys.E, sys.coefficients, np.ascontiguousarray(sys.weights),
        params, float(sys.C0), np.log1p(times), float(rel_tol), float(abs_tol), float(h_max),
        int(max_steps),
    )
    if status:
        reason = "step size underflow" if status == 1 else "step budget exhausted"
        raise IntegrationError(f"{reason} at t={t_fail:.6g}", t_fail)
    n = sys.n
    Xt = samples[:, :n]
    A = samples[:, n]
    # differencing can leave roundoff-sized negatives in modes far below their prefix
    X = np.maximum(from_tilde(Xt, sys.freq), 0.0)
    info = {
        "accepted": int(stats[0]),
        "rejected": int(stats[1]),
        "max_hat_increase": float(stats[2]),
        "x_increase_steps": [int(g) for g in grew],
    }
    return ModeTrajectory(times, X, Xt, to_hat(Xt, A, sys.C0), A, info)


def default_initial(sys, amplitudes=None, powers=None):
    """``X_j(0) = a_j eps^(p_j)``; defaults ``a_j = 1`` and ``p_j = 2 alpha_j``."""
    a = np.ones(sys.n) if amplitudes is None else np.asarray(amplitudes, dtype=float)
    p = 2.0 * np.asarray(sys.exponents.alpha) if powers is None else np.asarray(powers, dtype=float)
    return a * sys.eps ** p


def rescaled_horizon(sys, t_end):
    """``t_end eps^(-4 N_n)``: a horizon in units of the slowest decay time."""
    return t_end * sys.eps ** (-4 * sys.exponents.N[-1])


def fit_decay_exponent(times, values, window=None):
    """Least-squares slope of ``log values`` against ``log t`` over ``window``.

    The default window is the last two decades of ``times``. Windows
    shorter than one decade are rejected.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    t_hi = times[-1]
    lo, hi = (t_hi / 100.0, t_hi) if window is None else window
    if not (lo > 0 and hi / lo >= 10.0 * (1 - 1e-12)):
        raise ValueError("fit window must span at least one decade")
    sel = (times >= lo * (1 - 1e-12)) & (times <= hi * (1 + 1e-12)) & (values > 0)
    if sel.sum() < 3:
        raise ValueError("too few positive samples in the fit window")
    slope, _ = np.polyfit(np.log(times[sel]), np.log(values[sel]), 1)
    return float(slope)


@dataclass
class BoundCheck:
    name: str
    constant: float
    slope: float
    status: str
    detail: str = ""


@dataclass
class BoundReport:
    checks: list
    fitted_exponents: dict
    hat_monotone: bool
    hat_nonnegative: bool
    hat_window_ok: bool
    accumulator: float
    eps: float

    @property
    def status(self):
        states = {c.status for c in self.checks}
        return "fail" if "fail" in states else ("suspicious" if "suspicious" in states else "pass")

    @property
    def passed(self):
        return self.status != "fail"


def _ratio_check(name, times, ratio, detail=""):
    ratio = np.asarray(ratio, dtype=float)
    pos = times > 0
    C = float(np.max(ratio[pos])) if np.any(pos) else 0.0
    try:
        slope = fit_decay_exponent(times, ratio)
    except ValueError:
        slope = 0.0
    if slope > SLOPE_TOL:
        status = "fail"
    elif C > SUSPICIOUS_CONSTANT:
        status = "suspicious"
    else:
        status = "pass"
    return BoundCheck(name, C, slope, status, detail)


def verify_theorem_bounds(traj, sys):
    """Fit the constants of the decay estimates along a trajectory.

    A bound fails when the ratio of the two sides still grows over the
    final two decades (log-log slope above ``SLOPE_TOL``); fitted
    constants above ``SUSPICIOUS_CONSTANT`` are flagged, not failed.
    """
    ex = sys.exponents
    t = traj.times
    eps = sys.eps
    Y = comparison_Y(t, eps, ex.N[-1])
    W = comparison_W(t, eps, ex.kappa)
    Xh = traj.X_hat
    tiny = 1e-300
    checks = []
    for j in range(sys.n):
        checks.append(_ratio_check(f"Xh_{j + 1} <= C Y^alpha_{j + 1}", t,
                                   Xh[:, j] / np.maximum(Y ** ex.alpha[j], tiny)))
    norm = traj.hat_norm
    checks.append(_ratio_check("|Xh| <= C Y", t, norm / Y))
    checks.append(_ratio_check("c Y <= |Xh|", t, Y / np.maximum(norm, tiny)))
    early = [p for p in sys.lambda_star if any(p.total[k] for k in range(ex.j0 - 1))]
    bracket = np.sqrt(1.0 + t * t)
    for p in sys.lambda_star:
        mono = np.prod(Xh ** np.array(p.total), axis=1)
        checks.append(_ratio_check(f"Xh^{p.total} <= C Y W", t, mono / (Y * W)))
        if p in early:
            rhs = Y ** (1 + sys.delta) / bracket
            checks.append(_ratio_check(f"Xh^{p.total} <= C Y^(1+delta)/<t>", t, mono / rhs))
    acc = float(traj.accumulator[-1])
    C_acc = acc / eps
    checks.append(BoundCheck("int sum Xt^e <= C eps", C_acc, 0.0,
                             "suspicious" if C_acc > SUSPICIOUS_CONSTANT else "pass"))
    fitted = {}
    for j in range(sys.n):
        try:
            fitted[f"X_{j + 1}"] = fit_decay_exponent(t, traj.X[:, j])
        except ValueError:
            fitted[f"X_{j + 1}"] = float("nan")
    try:
        fitted["|X|"] = fit_decay_exponent(t, traj.norm)
    except ValueError:
        fitted["|X|"] = float("nan")
    factor = np.exp(-sys.C0 * traj.accumulator)
    return BoundReport(
        checks=checks,
        fitted_exponents=fitted,
        hat_monotone=traj.stats.get("max_hat_increase", 0.0) <= 0.0
        and bool(np.all(np.diff(Xh, axis=0) <= 0)),
        hat_nonnegative=bool(np.all(Xh >= 0)),
        hat_window_ok=bool(np.all(factor >= 1 - eps ** sys.delta)),
        accumulator=acc,
        eps=eps,
    )


def lambda_sums(X, sys, tilde=False):
    """``sum_{Lambda} sum_{k<=j} (lam_k + rho_k) V^e`` with ``V = X`` or ``Xt``."""
    X = np.asarray(X, dtype=float)
    V = to_tilde(X, sys.freq) if tilde else X
    Ef = np.array([p.total for p in sys.lambda_full], dtype=np.int64)
    return monomials(V, Ef) @ np.cumsum(Ef, axis=1)


class EtaModel:
    """Complex slot dynamics with the isolated resonant couplings.

    ``deta_a/dt = -i omega_a eta_a - i dZ0/deta_bar_a + i sum_blocks F_a``,
    where each block contributes
    ``sum_{b,b'} eta^(mu+nu') etabar^(nu+mu') / etabar_a (nu_a c_bb' + mu'_a conj(c_b'b))``
    with ``c = T_re + i T_im`` from ``fgr.build_matrices``.
    """

    def __init__(self, freq, Z0, blocks):
        if not Z0.is_real():
            raise ValueError("Z0 must be real")
        self.freq = freq
        self.omega = freq.slot_omegas
        L = self.omega.size
        self.dZ = [Z0.derivative(a, conjugate=True) for a in range(L)]
        terms = []
        for blk in blocks:
            T = blk.T
            for i, (mu, nu) in enumerate(blk.basis):
                for k, (mu2, nu2) in enumerate(blk.basis):
                    e_eta = np.add(mu, nu2)
                    e_bar = np.add(nu, mu2)
                    for a in range(L):
                        w = nu[a] * T[i, k] + mu2[a] * np.conj(T[k, i])
                        if w == 0:
                            continue
                        eb = e_bar.copy()
                        eb[a] -= 1
                        terms.append((a, e_eta, eb, w))
        self.terms = terms

    def __call__(self, t, eta):
        eta = np.asarray(eta, dtype=complex)
        out = -1j * self.omega * eta
        out -= 1j * np.array([d(eta) for d in self.dZ])
        bar = np.conj(eta)
        for a, e_eta, e_bar, w in self.terms:
            out[a] += 1j * w * np.prod(eta ** e_eta) * np.prod(bar ** e_bar)
        return out

    def actions(self, eta):
        """``X_j = 1/2 sum_k |eta_jk|^2``."""
        return 0.5 * np.bincount(self.freq.slot_modes, weights=np.abs(eta) ** 2, minlength=self.freq.n)

    def action_rates(self, eta):
        """``dX_j/dt = Re sum_k conj(eta_jk) deta_jk/dt``."""
        eta = np.asarray(eta, dtype=complex)
        rate = np.real(np.conj(eta) * self(0.0, eta))
        return np.bincount(self.freq.slot_modes, weights=rate, minlength=self.freq.n)


def rhs_eta(eta, Z0, blocks, freq):
    """Right-hand side of the complex slot system; see ``EtaModel``."""
    return EtaModel(freq, Z0, blocks)(0.0, eta)


def perturbative_envelope(X, sys):
    """``|X| sum X^e (lam_j + rho_j) + X_j sum X^e`` over ``Lambda*``."""
    X = np.maximum(np.asarray(X, dtype=float), 0.0)
    mono = monomials(X, sys.E)
    return X.sum() * (mono @ sys.E) + X * mono.sum()


def eta_consistency(eta, model, blocks, sys):
    """Compare the action rates of the complex system with ``rhs_X``.

    ``c_{lam rho}`` are evaluated at ``eta`` from the blocks. Returns
    ``(residual, envelope)`` per mode.
    """
    from .fgr import c_lambda_rho, gamma_vector

    X = model.actions(eta)
    coeffs = []
    for p, blk in zip(sys.lambda_star, blocks):
        g = gamma_vector(eta, blk.basis)
        coeffs.append(c_lambda_rho(g, blk.T_im, float(np.prod(X ** np.array(p.total)))))
    local = OdeSystem(sys.freq, sys.lambda_star, coefficients=np.array(coeffs),
                      lambda_full=sys.lambda_full, eps=sys.eps)
    residual = model.action_rates(eta) - rhs_X(X, local)
    return residual, perturbative_envelope(X, sys)
