"""Resonance sets of a discrete Klein-Gordon spectrum.

A resonance pair ``(lam, rho)`` couples the bound states to the continuum
when ``|lam + rho|`` is odd and ``omega . (lam - rho) > m``. This module
enumerates those pairs up to a truncation order, extracts the minimal
elements, audits their structure and derives the decay exponents.

Mode labels ``j`` in the public API are 1-based, matching the usual
mathematical numbering ``omega_1 > ... > omega_n``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

TOL_GAP = 1e-9


class ResonanceBoundaryError(ValueError):
    """A pair sits within ``TOL_GAP`` of the continuum threshold."""

    def __init__(self, message, pairs=()):
        super().__init__(message)
        self.pairs = list(pairs)


class ContractError(ArithmeticError):
    """A quantity that the theory bounds fell outside its bounds."""


@dataclass(frozen=True)
class FrequencySpec:
    """Spectral data: mass ``m``, eigenfrequencies and their multiplicities."""

    m: float
    omegas: tuple
    multiplicities: tuple = None

    def __post_init__(self):
        omegas = tuple(float(w) for w in self.omegas)
        if not omegas:
            raise ValueError("at least one eigenfrequency is required")
        mult = self.multiplicities
        mult = (1,) * len(omegas) if mult is None else tuple(int(l) for l in mult)
        if len(mult) != len(omegas):
            raise ValueError("multiplicities and omegas differ in length")
        if any(l < 1 for l in mult):
            raise ValueError("multiplicities must be positive")
        m = float(self.m)
        if not m > 0:
            raise ValueError("mass must be positive")
        if any(not (0.0 < w < m) for w in omegas):
            raise ValueError(f"eigenfrequencies must lie in (0, m={m})")
        if any(a <= b for a, b in zip(omegas, omegas[1:])):
            raise ValueError("eigenfrequencies must be strictly decreasing")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "multiplicities", mult)

    @property
    def n(self):
        return len(self.omegas)

    @property
    def omega(self):
        return np.asarray(self.omegas, dtype=float)

    @property
    def slot_omegas(self):
        """Frequencies expanded over degenerate slots, ``omega_jk = omega_j``."""
        return np.repeat(self.omega, self.multiplicities)

    @property
    def slot_modes(self):
        """0-based mode index of every slot."""
        return np.repeat(np.arange(self.n), self.multiplicities)

    def resonance_orders(self):
        """``N_j`` with ``m/(2N_j+1) < omega_j < m/(2N_j-1)``, or ``None`` where absent."""
        out = []
        for w in self.omegas:
            ratio = self.m / w
            N = int(math.floor((ratio + 1.0) / 2.0))
            ok = N >= 1 and (2 * N - 1) + TOL_GAP < ratio < (2 * N + 1) - TOL_GAP
            out.append(N if ok else None)
        return out

    @property
    def N(self):
        orders = self.resonance_orders()
        missing = [j + 1 for j, N in enumerate(orders) if N is None]
        if missing:
            raise ValueError(f"no resonance order N_j exists for modes {missing}")
        return tuple(orders)


class ResonancePair:
    """Multi-index pair ``(lam, rho)``; sorting is by (degree, lam, rho)."""

    __slots__ = ("lam", "rho")

    def __init__(self, lam, rho):
        lam = tuple(int(a) for a in lam)
        rho = tuple(int(b) for b in rho)
        if len(lam) != len(rho):
            raise ValueError("lam and rho differ in length")
        if any(a < 0 for a in lam + rho):
            raise ValueError("multi-indices must be nonnegative")
        self.lam = lam
        self.rho = rho

    def __hash__(self):
        return hash((self.lam, self.rho))

    def __eq__(self, other):
        if not isinstance(other, ResonancePair):
            return NotImplemented
        return self.lam == other.lam and self.rho == other.rho

    def __lt__(self, other):
        return self.sort_key < other.sort_key

    def __repr__(self):
        return f"ResonancePair({self.lam}, {self.rho})"

    @property
    def sort_key(self):
        return (self.degree, self.lam, self.rho)

    @property
    def degree(self):
        return sum(self.lam) + sum(self.rho)

    @property
    def theta(self):
        return tuple(a - b for a, b in zip(self.lam, self.rho))

    @property
    def total(self):
        """The exponent vector ``lam + rho``."""
        return tuple(a + b for a, b in zip(self.lam, self.rho))

    def dot(self, freq):
        return float(np.dot(freq.omega, np.subtract(self.lam, self.rho)))

    def bad_modes(self):
        """1-based modes ``j`` with ``lam_j - rho_j < 0``."""
        return [j + 1 for j, (a, b) in enumerate(zip(self.lam, self.rho)) if a < b]

    def below(self, other):
        """Componentwise ``self <= other`` on the concatenated ``(lam, rho)``."""
        return all(a <= b for a, b in zip(self.lam + self.rho, other.lam + other.rho))


@dataclass
class AssumptionReport:
    """Outcome of the numeric (V3)/(V4)/(V5) scans."""

    max_order: int
    orders: list
    v3_failures: list = field(default_factory=list)
    v4_violations: list = field(default_factory=list)
    v5_violations: list = field(default_factory=list)

    @property
    def v3_ok(self):
        return not self.v3_failures

    @property
    def v4_ok(self):
        return not self.v4_violations

    @property
    def v5_ok(self):
        return not self.v5_violations

    @property
    def ok(self):
        return self.v3_ok and self.v4_ok and self.v5_ok

    def summary(self):
        flags = {"V3": self.v3_ok, "V4": self.v4_ok, "V5": self.v5_ok}
        return ", ".join(f"{k}={'pass' if v else 'FAIL'}" for k, v in flags.items())


@dataclass
class Exponents:
    N: tuple
    alpha: tuple
    kappa: float
    j0: int


@dataclass
class StructureReport:
    lambda_star: list
    bad_resonances: list
    lemma_violations: list
    assumption_flags: dict = field(default_factory=dict)

    @property
    def ok(self):
        return not self.lemma_violations


def integer_vectors(n, max_order):
    """All ``mu`` in Z^n with ``sum |mu_j| <= max_order`` (as an int array)."""
    axis = np.arange(-max_order, max_order + 1)
    grid = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    return grid[np.abs(grid).sum(axis=1) <= max_order]


def check_assumptions(freq, max_order, tol_gap=TOL_GAP):
    """Scan the nonresonance assumptions over ``|mu| <= max_order``.

    Violations are collected with their witnessing ``mu``; nothing raises.
    ``|mu|`` is the l1 length, and (V4)/(V5) are split by its parity.
    """
    if max_order < 3 or max_order % 2 == 0:
        raise ValueError("max_order must be odd and >= 3")
    orders = freq.resonance_orders()
    report = AssumptionReport(max_order=max_order, orders=orders)
    for j, N in enumerate(orders):
        if N is None:
            report.v3_failures.append((j + 1, "no N_j with m/(2N_j+1) < omega_j < m/(2N_j-1)"))
    known = [N for N in orders if N is not None]
    if len(known) == len(orders) and any(a > b for a, b in zip(known, known[1:])):
        report.v3_failures.append((None, f"N_j not nondecreasing: {known}"))

    mu = integer_vectors(freq.n, max_order)
    mu = mu[np.abs(mu).sum(axis=1) > 0]
    vals = mu @ freq.omega
    odd = np.abs(mu).sum(axis=1) % 2 == 1
    for idx in np.flatnonzero(odd & (np.abs(vals - freq.m) <= tol_gap)):
        report.v4_violations.append((tuple(int(x) for x in mu[idx]), float(vals[idx])))
    for idx in np.flatnonzero(~odd & (np.abs(vals) <= tol_gap)):
        report.v5_violations.append((tuple(int(x) for x in mu[idx]), float(vals[idx])))
    return report


def default_max_order(freq):
    """One parity level above the slowest intrinsic resonance, ``2 N_n + 3``."""
    return 2 * freq.N[-1] + 3


def compositions(total, parts):
    """All nonnegative integer vectors of length ``parts`` summing to ``total``."""
    if parts == 1:
        return np.array([[total]], dtype=np.int64)
    rows = []
    for bars in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        row = []
        for b in bars:
            row.append(b - prev - 1)
            prev = b
        row.append(total + parts - 2 - prev)
        rows.append(row)
    return np.array(rows, dtype=np.int64)


def enumerate_lambda(freq, max_order, tol_gap=TOL_GAP):
    """The truncated resonance set, sorted by (degree, lam, rho).

    Raises ``ResonanceBoundaryError`` if some pair has
    ``|omega . (lam - rho) - m| <= tol_gap``.
    """
    if max_order % 2 == 0 or max_order < 1:
        raise ValueError("max_order must be a positive odd integer")
    n = freq.n
    omega2 = np.concatenate([freq.omega, -freq.omega])
    found, boundary = [], []
    for d in range(1, max_order + 1, 2):
        comp = compositions(d, 2 * n)
        dots = comp @ omega2
        for row in comp[np.abs(dots - freq.m) <= tol_gap]:
            boundary.append(ResonancePair(row[:n], row[n:]))
        for row in comp[dots > freq.m + tol_gap]:
            found.append(ResonancePair(row[:n], row[n:]))
    if boundary:
        raise ResonanceBoundaryError(
            f"{len(boundary)} pair(s) within {tol_gap:g} of the threshold, e.g. {boundary[0]}",
            boundary,
        )
    return sorted(found)


def minimal_set(pairs):
    """Componentwise-minimal elements of a finite set of pairs."""
    pairs = sorted(set(pairs))
    if not pairs:
        return []
    E = np.array([p.lam + p.rho for p in pairs], dtype=np.int64)
    deg = E.sum(axis=1)
    dominated = _kernels.dominated_mask(E, deg)
    return [p for p, d in zip(pairs, dominated) if not d]


def lambda_star(freq, max_order=None):
    max_order = default_max_order(freq) if max_order is None else max_order
    return minimal_set(enumerate_lambda(freq, max_order))


def theta_minimal(theta, freq, tol_gap=TOL_GAP):
    """Split ``theta`` into positive and negative parts.

    Returns ``(pair, in_lambda)``; ``in_lambda`` says whether the pair is a
    resonance (odd degree and ``omega . theta > m``).
    """
    theta = np.asarray(theta, dtype=np.int64)
    pair = ResonancePair(np.maximum(theta, 0), np.maximum(-theta, 0))
    in_lambda = pair.degree % 2 == 1 and float(freq.omega @ theta) > freq.m + tol_gap
    return pair, bool(in_lambda)


def verify_lambda_star_structure(lambda_star, freq=None, max_order=None):
    """Audit minimal pairs: ``|rho| <= 1``, and ``rho_j = 1`` forces ``j >= 2``
    with ``lam_k = 0`` for every ``k >= j``.

    Also checks that no two minimal pairs share ``lam - rho``. When ``freq``
    is given the assumption scan is attached to the report.
    """
    violations, bad = [], []
    by_theta = {}
    for p in lambda_star:
        for j in p.bad_modes():
            bad.append((p, j))
        nrho = sum(p.rho)
        if nrho > 1:
            violations.append((p, f"|rho|={nrho}"))
        elif nrho == 1:
            j = p.rho.index(1)
            if j == 0:
                violations.append((p, "rho_1=1"))
            elif any(p.lam[k] for k in range(j, len(p.lam))):
                violations.append((p, f"rho_{j + 1}=1 but lam_k>0 for some k>={j + 1}"))
        prev = by_theta.setdefault(p.theta, p)
        if prev != p:
            violations.append((p, f"shares theta={p.theta} with {prev}"))
    flags = {}
    if freq is not None:
        order = max_order or max([p.degree for p in lambda_star] + [3])
        order = order if order % 2 else order + 1
        flags = {"assumptions": check_assumptions(freq, max(order, 3))}
    return StructureReport(list(lambda_star), bad, violations, flags)


def cancellation_bounds(freq, degree):
    """Bounds ``(c_lo, c_hi)`` on the weighted-to-plain ratio for pairs of a given degree."""
    return min(freq.omegas[-1], freq.m / degree), freq.omegas[0]


def weighted_cancellation(pair, j, freq):
    """``sum_{k<=j} omega_k (lam_k - rho_k)`` with its positivity contract checked."""
    lam = np.asarray(pair.lam[:j])
    rho = np.asarray(pair.rho[:j])
    value = float(freq.omega[:j] @ (lam - rho))
    plain = int((lam + rho).sum())
    if plain == 0:
        return value
    c_lo, c_hi = cancellation_bounds(freq, pair.degree)
    ratio = value / plain
    if not (value > 0 and c_lo - TOL_GAP <= ratio <= c_hi + TOL_GAP):
        raise ContractError(
            f"weighted cancellation {value:.6g} for {pair}, j={j}: ratio {ratio:.6g} "
            f"outside [{c_lo:.6g}, {c_hi:.6g}]"
        )
    return value


def compute_exponents(freq, pairs):
    """Decay exponents ``N``, ``alpha``, ``kappa`` and the index ``j0`` (1-based)."""
    N = freq.N
    Nn = N[-1]
    alpha = tuple(min(Nn / Nj, 3.0) for Nj in N)
    kappa = 8.0
    a = np.asarray(alpha)
    for p in pairs:
        kappa = min(kappa, 2.0 * float(np.dot(p.total, a)) - 2.0)
    j0 = next(j for j, Nj in enumerate(N) if Nj == Nn) + 1
    return Exponents(N=N, alpha=alpha, kappa=kappa, j0=j0)
