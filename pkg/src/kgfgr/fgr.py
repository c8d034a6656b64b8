"""Fermi Golden Rule matrices from a discretized continuum.

The continuum is given by the eigenpairs ``(lambda_k, e_k)`` of ``B``
restricted to its continuous subspace. Pairings are bilinear,
``<f, g> = sum f g``, and a coupling ``Phi`` enters through its spectral
coefficients ``(e_k . Phi)``. The resolvent trace splits as

    <Phi, (B - E - i0)^-1 conj(Phi')> = a + i b,

with ``a`` a principal value and ``b = pi <Phi, delta(B - E) conj(Phi')>``.
Both are regularized at a finite ``width``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .resonance import ResonancePair


@dataclass
class ContinuumOperator:
    """Discrete spectral data of ``B`` on the continuum.

    Attributes
    ----------
    eigenvalues : ndarray
        Sorted energies ``lambda_k >= m``.
    eigenvectors : ndarray
        Orthonormal columns ``e_k``.
    weights : ndarray
        Quadrature weights of the spectral measure (default ones).
    m : float
        Continuum threshold.
    b_squared : ndarray, optional
        Full matrix of ``B^2`` in the same coordinates, used by the
        direct resolvent route.
    bound_vectors : ndarray, optional
        Columns spanning the discrete subspace; ``P_c = I - V V^T``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    weights: np.ndarray = None
    m: float = None
    b_squared: np.ndarray = None
    bound_vectors: np.ndarray = None

    def __post_init__(self):
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=float)
        self.eigenvectors = np.asarray(self.eigenvectors, dtype=float)
        if self.eigenvectors.ndim != 2 or self.eigenvectors.shape[1] != self.eigenvalues.size:
            raise ValueError("eigenvectors must have one column per eigenvalue")
        if np.any(np.diff(self.eigenvalues) < 0):
            raise ValueError("eigenvalues must be sorted")
        if self.weights is None:
            self.weights = np.ones_like(self.eigenvalues)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.m is None:
            self.m = float(self.eigenvalues[0])
        if self.eigenvalues[0] < self.m - 1e-8:
            raise ValueError("continuum eigenvalues below threshold m")
        gram = self.eigenvectors.T @ self.eigenvectors
        if not np.allclose(gram, np.eye(gram.shape[0]), atol=1e-8):
            raise ValueError("eigenvectors are not orthonormal")

    @property
    def dim(self):
        return self.eigenvectors.shape[0]

    def coefficients(self, phi):
        """Spectral coefficients ``e_k . phi`` (columns for 2-D input)."""
        return self.eigenvectors.T @ np.asarray(phi)

    def local_spacing(self, E):
        """Mean gap of the three eigenvalues nearest to ``E``."""
        ev = self.eigenvalues
        if ev.size < 2:
            return 1.0
        k = int(np.clip(np.searchsorted(ev, E), 1, ev.size - 1))
        lo, hi = max(k - 2, 0), min(k + 2, ev.size - 1)
        return float((ev[hi] - ev[lo]) / (hi - lo))

    def default_width(self, E):
        return 4.0 * self.local_spacing(E)

    def projector(self):
        """``P_c`` as a dense matrix."""
        if self.bound_vectors is not None:
            V = np.asarray(self.bound_vectors, dtype=float).reshape(self.dim, -1)
            return np.eye(self.dim) - V @ V.T
        return self.eigenvectors @ self.eigenvectors.T

    def b_matrix(self):
        """``B`` on the whole space via a matrix square root of ``B^2``."""
        if self.b_squared is None:
            Q = self.eigenvectors
            B2 = (Q * self.eigenvalues ** 2) @ Q.T
        else:
            B2 = np.asarray(self.b_squared, dtype=float)
        return np.real(scipy.linalg.sqrtm(B2))


def gaussian_kernel(x, width):
    return np.exp(-0.5 * (x / width) ** 2) / (width * math.sqrt(2 * math.pi))


def lorentzian_kernel(x, width):
    return (width / math.pi) / (x * x + width * width)


KERNELS = {"gaussian": gaussian_kernel, "lorentzian": lorentzian_kernel}


def _check_energy(op, E, width):
    if not E > op.m:
        raise ValueError(f"shell energy {E} must exceed the threshold m={op.m}")
    if not width > 0:
        raise ValueError("width must be positive")


def _pairing(op, phi, phi2):
    return op.coefficients(phi) * np.conj(op.coefficients(phi2))


def shell_projection(op, E, width, phi, phi2, kernel="gaussian"):
    """``pi <phi, delta_width(B - E) conj(phi2)>`` on the discrete measure."""
    _check_energy(op, E, width)
    g = KERNELS[kernel](op.eigenvalues - E, width)
    return complex(math.pi * np.sum(op.weights * g * _pairing(op, phi, phi2)))


def resolvent_pv(op, E, width, phi, phi2):
    """Regularized principal value ``<phi, PV (B - E)^-1 conj(phi2)>``."""
    _check_energy(op, E, width)
    x = op.eigenvalues - E
    return complex(np.sum(op.weights * x / (x * x + width * width) * _pairing(op, phi, phi2)))


def resolvent_direct(op, E, width, phi, phi2):
    """``<phi, (B - E - i width)^-1 P_c conj(phi2)>`` by a dense solve.

    Independent of the spectral sums above: ``B`` comes from a matrix
    square root and the resolvent from an LU solve. With unit weights it
    equals ``resolvent_pv + i * shell_projection(kernel='lorentzian')``.
    """
    _check_energy(op, E, width)
    B = op.b_matrix()
    rhs = op.projector() @ np.conj(np.asarray(phi2, dtype=complex))
    sol = scipy.linalg.solve(B - (E + 1j * width) * np.eye(op.dim), rhs)
    return complex(np.asarray(phi) @ sol)


@dataclass
class ResonanceMatrices:
    T_re: np.ndarray
    T_im: np.ndarray
    shell_energy: float
    basis: list
    width: float
    kernel: str = "gaussian"

    @property
    def T(self):
        return self.T_re + 1j * self.T_im


def m_basis(pair, freq):
    """Slot multi-indices ``(mu, nu)`` with ``sum_k nu_jk = lam_j``, ``sum_k mu_jk = rho_j``."""

    def spread(counts):
        parts = []
        for j, c in enumerate(counts):
            l = freq.multiplicities[j]
            parts.append([tuple(v) for v in _compositions(c, l)])
        return [sum(combo, ()) for combo in itertools.product(*parts)]

    return sorted(
        ((mu, nu) for nu in spread(pair.lam) for mu in spread(pair.rho)),
        key=lambda k: (k[1], k[0]),
    )


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def collapse(key, freq):
    """The pair ``(lam, rho)`` a slot key ``(mu, nu)`` belongs to."""
    mu, nu = key
    modes = freq.slot_modes
    lam = np.bincount(modes, weights=nu, minlength=freq.n).astype(int)
    rho = np.bincount(modes, weights=mu, minlength=freq.n).astype(int)
    return ResonancePair(lam, rho)


def build_matrices(pair, couplings, op, width=None, freq=None, kernel="gaussian", E=None):
    """Assemble ``T_re`` and ``T_im`` for one resonance pair.

    ``couplings`` maps slot keys ``(mu, nu)`` to vectors. When ``freq`` is
    given every key must collapse to ``pair`` and the shell energy is
    ``omega . (lam - rho)``; otherwise ``E`` must be supplied.
    """
    basis = sorted(couplings, key=lambda k: (k[1], k[0]))
    if freq is not None:
        bad = [k for k in basis if collapse(k, freq) != pair]
        if bad:
            raise ValueError(f"couplings {bad[:3]} do not belong to {pair}")
        E = pair.dot(freq) if E is None else E
    if E is None:
        raise ValueError("shell energy unknown: pass freq or E")
    width = op.default_width(E) if width is None else float(width)
    _check_energy(op, E, width)
    if not basis:
        z = np.zeros((0, 0))
        return ResonanceMatrices(z, z.copy(), E, [], width, kernel)
    Phi = np.column_stack([np.asarray(couplings[k], dtype=complex) for k in basis])
    C = op.coefficients(Phi)
    x = op.eigenvalues - E
    g = math.pi * op.weights * KERNELS[kernel](x, width)
    pv = op.weights * x / (x * x + width * width)
    T_im = (C.T * g) @ np.conj(C)
    T_re = (C.T * pv) @ np.conj(C)
    T_im = 0.5 * (T_im + T_im.conj().T)
    T_re = 0.5 * (T_re + T_re.conj().T)
    return ResonanceMatrices(T_re, T_im, float(E), basis, width, kernel)


@dataclass
class FGRVerdict:
    status: str
    min_eigenvalue: float
    tol_def: float
    null_vector: np.ndarray = field(default=None, repr=False)

    @property
    def definite(self):
        return self.status == "definite"


def check_fgr(T_im, tol_def=None):
    """Classify ``T_im`` as ``definite`` or ``semidefinite-degenerate``."""
    T = np.atleast_2d(np.asarray(T_im))
    dim = T.shape[0]
    if dim == 0:
        return FGRVerdict("semidefinite-degenerate", 0.0, 0.0, np.zeros(0))
    if tol_def is None:
        tol_def = 1e-8 * float(np.real(np.trace(T))) / dim
    w, V = np.linalg.eigh(0.5 * (T + T.conj().T))
    if w[0] > tol_def:
        return FGRVerdict("definite", float(w[0]), tol_def)
    return FGRVerdict("semidefinite-degenerate", float(w[0]), tol_def, V[:, 0])


UNDERFLOW = 1e-300


def c_lambda_rho(gamma, T_im, X_power):
    """``Re(Gamma T_im conj(Gamma)^T) / X^(lam+rho)``."""
    if not X_power > UNDERFLOW:
        raise ValueError("X^(lam+rho) below the underflow floor")
    g = np.asarray(gamma, dtype=complex)
    return float(np.real(g @ np.asarray(T_im) @ np.conj(g))) / X_power


def gamma_vector(eta, basis):
    """``{eta^mu conj(eta)^nu}`` over an ``M_{lam,rho}`` basis."""
    eta = np.asarray(eta, dtype=complex)
    return np.array([np.prod(eta ** np.array(mu)) * np.prod(np.conj(eta) ** np.array(nu)) for mu, nu in basis])


def synthetic_operator(dim=200, m=1.0, e_max=4.0, seed=0):
    """Random orthonormal continuum with evenly spaced energies in ``[m, e_max]``."""
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    ev = np.linspace(m, e_max, dim)
    return ContinuumOperator(ev, Q, m=m, b_squared=(Q * ev ** 2) @ Q.T)


def synthetic_couplings(basis, op, center=None, spread=0.5, seed=0, complex_valued=True):
    """Gaussian-enveloped random spectral profiles, one vector per basis key."""
    rng = np.random.default_rng(seed)
    ev = op.eigenvalues
    center = 0.5 * (ev[0] + ev[-1]) if center is None else center
    env = np.exp(-0.5 * ((ev - center) / spread) ** 2)
    out = {}
    for key in basis:
        c = rng.standard_normal(ev.size)
        if complex_valued:
            c = c + 1j * rng.standard_normal(ev.size)
        out[key] = op.eigenvectors @ (env * c)
    return out
