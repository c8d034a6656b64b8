"""Sparse polynomial algebra in the discrete mode variables and the
Birkhoff normal form of the discrete sector.

Monomials ``xi^mu conj(xi)^nu`` are keyed by a pair of integer tuples
``(mu, nu)`` over the ``L`` degenerate slots; each slot carries its
frequency ``omega_jk = omega_j``. The bracket convention is

    {P, Q} = i sum_a (dP/dxi_a dQ/dxibar_a - dP/dxibar_a dQ/dxi_a),

so that ``{H_L, xi^mu xibar^nu} = i omega.(nu - mu) xi^mu xibar^nu`` for
``H_L = sum omega_a |xi_a|^2``.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .resonance import TOL_GAP, FrequencySpec

COEFF_TOL = 1e-12
DIVISOR_FLOOR = 1e-6


class SmallDivisorWarning(RuntimeWarning):
    """A non-resonant divisor is smaller than ``DIVISOR_FLOOR``."""


def _key_order(key):
    mu, nu = key
    return (sum(mu) + sum(nu), mu, nu)


class SparsePolynomial:
    """Finite sum of monomials ``c xi^mu xibar^nu`` with complex ``c``.

    Parameters
    ----------
    omegas : array_like
        Slot frequencies; two polynomials interact only if these agree.
    terms : mapping, optional
        ``{(mu, nu): coefficient}``; coefficients below ``tol`` in modulus
        are dropped.
    tol : float
        Pruning threshold.

    Instances are treated as immutable.
    """

    __slots__ = ("omegas", "terms")

    def __init__(self, omegas, terms=None, tol=COEFF_TOL):
        self.omegas = tuple(float(w) for w in omegas)
        L = len(self.omegas)
        clean = {}
        for (mu, nu), c in (terms or {}).items():
            mu = tuple(int(a) for a in mu)
            nu = tuple(int(b) for b in nu)
            if len(mu) != L or len(nu) != L:
                raise ValueError(f"monomial {mu},{nu} does not match {L} slots")
            c = complex(c)
            if abs(c) > tol:
                clean[(mu, nu)] = c
        self.terms = clean

    @classmethod
    def zero(cls, omegas):
        return cls(omegas)

    @classmethod
    def monomial(cls, omegas, mu, nu, coeff=1.0):
        return cls(omegas, {(tuple(mu), tuple(nu)): coeff})

    @classmethod
    def quadratic_part(cls, omegas):
        """``H_L = sum_a omega_a |xi_a|^2``."""
        L = len(omegas)
        terms = {}
        for a, w in enumerate(omegas):
            e = tuple(int(i == a) for i in range(L))
            terms[(e, e)] = w
        return cls(omegas, terms)

    @property
    def nslots(self):
        return len(self.omegas)

    def _check(self, other):
        if not isinstance(other, SparsePolynomial):
            raise TypeError("expected a SparsePolynomial")
        if not np.allclose(self.omegas, other.omegas, rtol=0, atol=1e-14):
            raise ValueError("frequency contexts differ")

    def __iter__(self):
        for key in sorted(self.terms, key=_key_order):
            yield key, self.terms[key]

    def __len__(self):
        return len(self.terms)

    def __getitem__(self, key):
        mu, nu = key
        return self.terms.get((tuple(mu), tuple(nu)), 0.0)

    def __repr__(self):
        body = " + ".join(f"({c:.6g})*{mu}{nu}" for (mu, nu), c in list(self)[:6])
        more = " + ..." if len(self) > 6 else ""
        return f"SparsePolynomial[{body or '0'}{more}]"

    def __eq__(self, other):
        if not isinstance(other, SparsePolynomial):
            return NotImplemented
        return (self - other).is_zero()

    __hash__ = None

    def is_zero(self, tol=COEFF_TOL):
        return all(abs(c) <= tol for c in self.terms.values())

    def __add__(self, other):
        self._check(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0.0) + c
        return SparsePolynomial(self.omegas, out)

    def __neg__(self):
        return SparsePolynomial(self.omegas, {k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, s):
        return SparsePolynomial(self.omegas, {k: s * c for k, c in self.terms.items()})

    def __mul__(self, other):
        if not isinstance(other, SparsePolynomial):
            return self.scale(other)
        self._check(other)
        out = {}
        for (mu, nu), c in self.terms.items():
            for (mu2, nu2), c2 in other.terms.items():
                key = (tuple(a + b for a, b in zip(mu, mu2)), tuple(a + b for a, b in zip(nu, nu2)))
                out[key] = out.get(key, 0.0) + c * c2
        return SparsePolynomial(self.omegas, out)

    def __rmul__(self, s):
        return self.scale(s)

    def conj(self):
        """Complex conjugate as a polynomial: swaps ``mu`` and ``nu``."""
        return SparsePolynomial(self.omegas, {(nu, mu): c.conjugate() for (mu, nu), c in self.terms.items()})

    def norm(self):
        """Largest coefficient modulus."""
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def is_real(self, tol=1e-10):
        """``coeff(mu, nu) == conj(coeff(nu, mu))`` relative to ``max(1, norm)``."""
        tol = tol * max(1.0, self.norm())
        return all(abs(c - self[(nu, mu)].conjugate()) <= tol for (mu, nu), c in self.terms.items())

    def degrees(self):
        return sorted({sum(mu) + sum(nu) for mu, nu in self.terms})

    def min_degree(self):
        """Lowest total degree present, or ``math.inf`` for the zero polynomial."""
        d = self.degrees()
        return d[0] if d else math.inf

    def max_degree(self):
        d = self.degrees()
        return d[-1] if d else -math.inf

    def homogeneous(self, degree):
        return SparsePolynomial(
            self.omegas, {k: c for k, c in self.terms.items() if sum(k[0]) + sum(k[1]) == degree}
        )

    def truncate(self, max_degree):
        return SparsePolynomial(
            self.omegas, {k: c for k, c in self.terms.items() if sum(k[0]) + sum(k[1]) <= max_degree}
        )

    def divisor(self, key):
        mu, nu = key
        return float(np.dot(self.omegas, np.subtract(mu, nu)))

    def derivative(self, slot, conjugate=False):
        """Partial derivative in ``xi_slot`` (or ``xibar_slot``)."""
        out = {}
        for (mu, nu), c in self.terms.items():
            e = nu if conjugate else mu
            p = e[slot]
            if p == 0:
                continue
            e2 = e[:slot] + (p - 1,) + e[slot + 1:]
            key = (mu, e2) if conjugate else (e2, nu)
            out[key] = out.get(key, 0.0) + p * c
        return SparsePolynomial(self.omegas, out)

    def __call__(self, xi):
        """Evaluate at a complex slot vector ``xi``."""
        xi = np.asarray(xi, dtype=complex)
        xb = xi.conj()
        total = 0j
        for (mu, nu), c in self.terms.items():
            total += c * np.prod(xi ** np.array(mu)) * np.prod(xb ** np.array(nu))
        return total


def poisson_bracket(P, Q, max_degree=None):
    """``{P, Q}``, optionally truncated at total degree ``max_degree``."""
    P._check(Q)
    L = P.nslots
    out = {}
    for (mu, nu), p in P.terms.items():
        dP = sum(mu) + sum(nu)
        for (mu2, nu2), q in Q.terms.items():
            if max_degree is not None and dP + sum(mu2) + sum(nu2) - 2 > max_degree:
                continue
            smu = [a + b for a, b in zip(mu, mu2)]
            snu = [a + b for a, b in zip(nu, nu2)]
            for a in range(L):
                w = mu[a] * nu2[a] - nu[a] * mu2[a]
                if w == 0:
                    continue
                smu[a] -= 1
                snu[a] -= 1
                key = (tuple(smu), tuple(snu))
                out[key] = out.get(key, 0.0) + 1j * w * p * q
                smu[a] += 1
                snu[a] += 1
    return SparsePolynomial(P.omegas, out)


def split_normal_form(K, tol_gap=TOL_GAP):
    """Solve ``{H_L, chi} + Z = K``.

    Returns ``(Z, chi)`` with ``Z`` the resonant monomials of ``K`` and
    ``chi = sum i a/(omega.(mu-nu)) xi^mu xibar^nu`` over the rest. Warns
    with ``SmallDivisorWarning`` when a divisor is below ``DIVISOR_FLOOR``.
    """
    Z, chi = {}, {}
    for key, a in K.terms.items():
        d = K.divisor(key)
        if abs(d) <= tol_gap:
            Z[key] = a
            continue
        if abs(d) < DIVISOR_FLOOR:
            warnings.warn(f"small divisor {d:.3g} at monomial {key}", SmallDivisorWarning, stacklevel=2)
        chi[key] = 1j * a / d
    Z = SparsePolynomial(K.omegas, Z)
    chi = SparsePolynomial(K.omegas, chi)
    H_L = SparsePolynomial.quadratic_part(K.omegas)
    scale = max([abs(c) for c in K.terms.values()] + [1.0])
    residual = poisson_bracket(H_L, chi) + Z - K
    if not residual.is_zero(tol=COEFF_TOL * scale * 10):
        raise ArithmeticError("homological equation not satisfied")
    return Z, chi


def lie_transform(H, chi, max_degree):
    """``H o phi_chi = sum_k ad_chi^k H / k!`` truncated at ``max_degree``.

    ``ad_chi H = {chi, H}``; each application raises the degree by
    ``deg(chi) - 2 >= 1``, so the series is finite after truncation.
    """
    if chi.is_zero():
        return H.truncate(max_degree)
    if chi.min_degree() < 3:
        raise ValueError("generator must have minimum degree >= 3")
    out = H.truncate(max_degree)
    term = out
    k = 0
    while not term.is_zero():
        k += 1
        term = poisson_bracket(chi, term, max_degree=max_degree).scale(1.0 / k)
        out = out + term
    return out


@dataclass
class NormalFormResult:
    Z0: SparsePolynomial
    generators: list = field(default_factory=list)
    remainder: SparsePolynomial = None
    achieved_order: int = 4
    max_degree: int = None


def birkhoff(H_P, r, max_degree=None, tol_gap=TOL_GAP):
    """Iterated Birkhoff normal form of ``H_L + H_P`` in the discrete sector.

    Step ``s`` removes the non-resonant part of the degree ``2s+2`` terms.
    After ``r`` steps the remainder starts at degree ``2r+4`` or higher.
    """
    if r < 0:
        raise ValueError("r must be nonnegative")
    if H_P.min_degree() < 4:
        raise ValueError("H_P must start at degree 4")
    max_degree = 2 * r + 6 if max_degree is None else max_degree
    H_L = SparsePolynomial.quadratic_part(H_P.omegas)
    Z = SparsePolynomial.zero(H_P.omegas)
    rest = H_P.truncate(max_degree)
    generators = []
    for s in range(1, r + 1):
        K = rest.homogeneous(2 * s + 2)
        Zs, chi = split_normal_form(K, tol_gap)
        generators.append(chi)
        H = lie_transform(H_L + Z + rest, chi, max_degree)
        Z = Z + Zs
        rest = H - H_L - Z
        low = rest.min_degree()
        if low < 2 * s + 4:
            raise ArithmeticError(f"step {s}: residual degree {low} below {2 * s + 4}")
    return NormalFormResult(Z0=Z, generators=generators, remainder=rest,
                            achieved_order=2 * r + 4, max_degree=max_degree)


def mode_action(freq, j):
    """``sum_k |xi_jk|^2`` over the slots of 1-based mode ``j``."""
    slots = np.flatnonzero(freq.slot_modes == j - 1)
    L = int(sum(freq.multiplicities))
    terms = {}
    for a in slots:
        e = tuple(int(i == a) for i in range(L))
        terms[(e, e)] = 1.0
    return SparsePolynomial(freq.slot_omegas, terms)


@dataclass
class PseudoOneDReport:
    brackets: dict
    offending: list

    @property
    def ok(self):
        return not self.offending


def check_pseudo_1d(Z0, freq):
    """Check ``{sum_k |xi_jk|^2, Z0} = 0`` for every mode ``j``.

    ``offending`` lists ``(j, monomial, coefficient)`` for each nonzero
    term found.
    """
    if not np.allclose(Z0.omegas, freq.slot_omegas):
        raise ValueError("Z0 frequency context does not match freq")
    brackets, offending = {}, []
    for j in range(1, freq.n + 1):
        br = poisson_bracket(mode_action(freq, j), Z0)
        brackets[j] = br
        offending.extend((j, key, c) for key, c in br if abs(c) > 1e-10)
    return PseudoOneDReport(brackets, offending)


def build_quartic_hamiltonian(overlaps, freq, tol=1e-12):
    """Discrete quartic part ``-1/4 sum I_abcd prod_s (xi_s + xibar_s)/sqrt(2 omega_s)``.

    ``overlaps`` is an ``L x L x L x L`` real tensor over slots and must be
    invariant under every index permutation.
    """
    I = np.asarray(overlaps, dtype=float)
    omegas = freq.slot_omegas
    L = omegas.size
    if I.shape != (L,) * 4:
        raise ValueError(f"overlap tensor must have shape {(L,) * 4}")
    for perm in itertools.permutations(range(4)):
        if not np.allclose(I, I.transpose(perm), atol=tol, rtol=0):
            raise ValueError("overlap tensor is not permutation symmetric")
    lin = []
    for a in range(L):
        e = tuple(int(i == a) for i in range(L))
        z = tuple([0] * L)
        lin.append(SparsePolynomial(omegas, {(e, z): 1.0, (z, e): 1.0}).scale(1.0 / math.sqrt(2 * omegas[a])))
    out = SparsePolynomial.zero(omegas)
    for a, b, c, d in itertools.combinations_with_replacement(range(L), 4):
        weight = I[a, b, c, d]
        if weight == 0.0:
            continue
        count = len(set(itertools.permutations((a, b, c, d))))
        out = out + (lin[a] * lin[b] * lin[c] * lin[d]).scale(-0.25 * weight * count)
    return out


def hermite_overlaps(freq, nodes=80):
    """Stock overlap tensor from Hermite functions, one per slot.

    Slot ``a`` uses the normalized Hermite function of order ``a``;
    ``I_abcd`` is computed by Gauss-Hermite quadrature, so it is exactly
    permutation symmetric and real.
    """
    L = int(sum(freq.multiplicities))
    x, w = np.polynomial.hermite.hermgauss(nodes)
    # h_k(x) exp(-x^2/2) normalized; the quadrature weight absorbs exp(-x^2)
    # and the remaining exp(-x^2) of the four-fold product is applied here.
    phis = []
    for k in range(L):
        c = np.zeros(k + 1)
        c[k] = 1.0
        norm = 1.0 / math.sqrt(2.0 ** k * math.factorial(k) * math.sqrt(math.pi))
        phis.append(norm * np.polynomial.hermite.hermval(x, c))
    P = np.array(phis)
    wq = w * np.exp(-x ** 2)
    return np.einsum("q,aq,bq,cq,dq->abcd", wq, P, P, P, P)


def stock_quartic(freq=None):
    """Quartic Hamiltonian on ``freq`` (default two modes 0.45, 0.25)."""
    freq = freq or FrequencySpec(1.0, (0.45, 0.25))
    return build_quartic_hamiltonian(hermite_overlaps(freq), freq)
