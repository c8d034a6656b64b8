"""One-dimensional cubic Klein-Gordon simulator with a trapping potential.

Solves ``u_tt - u_xx + m^2 u + V u = lam u^3`` on a periodic box with a
dense Fourier-spectral discretization of ``H = -d^2/dx^2 + V``. The linear
flow is exact in the eigenbasis of ``H``; the cubic term enters through
Strang splitting. This is a 1D analog: the decay mechanism (bound states
radiating into the continuum) is reproduced, while dispersive rates
differ from three dimensions.

Grid functions are normalized in the discrete ``L^2`` inner product
``<f, g> = h sum f g``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _kernels
from .fgr import ContinuumOperator
from .resonance import FrequencySpec


@dataclass(frozen=True)
class Grid:
    L: float
    M: int
    boundary: str = "periodic"

    def __post_init__(self):
        if self.M % 2 or self.M < 4:
            raise ValueError("M must be even and >= 4")
        if self.L <= 0:
            raise ValueError("L must be positive")
        if self.boundary not in ("periodic", "absorbing"):
            raise ValueError("boundary must be 'periodic' or 'absorbing'")

    @property
    def h(self):
        return 2.0 * self.L / self.M

    @property
    def x(self):
        return -self.L + self.h * np.arange(self.M)

    @property
    def k_max(self):
        return math.pi / self.h


def poschl_teller(V0=2.0, a=1.0):
    """``V(x) = -V0 sech^2(x / a)``."""
    return lambda x: -V0 / np.cosh(np.asarray(x) / a) ** 2


def poschl_teller_levels(V0, a=1.0):
    """Analytic bound-state energies of ``-V0 sech^2(x/a)``, lowest first."""
    s = 0.5 * (-1.0 + math.sqrt(1.0 + 4.0 * V0 * a * a))
    levels = []
    k = 0
    while s - k > 1e-12:
        levels.append(-((s - k) / a) ** 2)
        k += 1
    return levels


def second_derivative_matrix(grid):
    """Dense periodic Fourier-spectral ``d^2/dx^2`` (symmetric circulant)."""
    k = 2.0 * np.pi * np.fft.fftfreq(grid.M, d=grid.h)
    col = np.real(np.fft.ifft(-(k ** 2)))
    return scipy.linalg.circulant(col)


@dataclass
class SpectralDecomposition:
    """Eigen-data of ``H = -d^2/dx^2 + V`` and the functional calculus of ``B``."""

    grid: Grid
    m: float
    H: np.ndarray
    eigenvalues: np.ndarray
    vectors: np.ndarray
    n_bound: int
    V: np.ndarray = field(repr=False, default=None)

    @property
    def omega(self):
        """``sqrt(m^2 + lambda_k)`` for every eigenpair."""
        return np.sqrt(self.m ** 2 + self.eigenvalues)

    @property
    def bound_energies(self):
        return self.eigenvalues[: self.n_bound]

    @property
    def bound_states(self):
        """Bound eigenfunctions ``phi_j`` as columns, ``h sum phi^2 = 1``."""
        return self.vectors[:, : self.n_bound] / math.sqrt(self.grid.h)

    @property
    def bound_omegas(self):
        return self.omega[: self.n_bound]

    def continuum_projector(self):
        Vc = self.vectors[:, self.n_bound:]
        return Vc @ Vc.T

    def bound_projector(self):
        Vb = self.vectors[:, : self.n_bound]
        return Vb @ Vb.T

    def B_function(self, f):
        """Dense matrix ``f(B)`` from the full eigendecomposition."""
        vals = f(self.omega)
        return (self.vectors * vals) @ self.vectors.T

    def B(self):
        return self.B_function(lambda w: w)

    def B_sqrt(self):
        return self.B_function(np.sqrt)

    def B_inv_sqrt(self):
        return self.B_function(lambda w: 1.0 / np.sqrt(w))

    def propagator(self, t):
        """``exp(-i B t)``."""
        Q = self.vectors
        return (Q * np.exp(-1j * self.omega * t)) @ Q.T

    def frequency_spec(self, tol=1e-8):
        """Bound frequencies as a ``FrequencySpec`` with detected multiplicities."""
        w = self.bound_omegas[::-1]
        if w.size == 0:
            raise ValueError("no bound states")
        groups = [[w[0]]]
        for v in w[1:]:
            if abs(v - groups[-1][-1]) <= tol:
                groups[-1].append(v)
            else:
                groups.append([v])
        omegas = [float(np.mean(g)) for g in groups]
        mult = [len(g) for g in groups]
        order = np.argsort(omegas)[::-1]
        return FrequencySpec(self.m, [omegas[i] for i in order], [mult[i] for i in order])

    def continuum_operator(self):
        """``fgr.ContinuumOperator`` with Euclidean-orthonormal eigenvectors.

        Couplings given as grid functions must be multiplied by ``sqrt(h)``
        to match the ``L^2`` pairing.
        """
        return ContinuumOperator(
            self.omega[self.n_bound:],
            self.vectors[:, self.n_bound:],
            m=self.m,
            b_squared=self.H + self.m ** 2 * np.eye(self.grid.M),
            bound_vectors=self.vectors[:, : self.n_bound],
        )

    def overlaps(self):
        """``I_abcd = h sum phi_a phi_b phi_c phi_d`` over the bound states."""
        P = self.bound_states
        return self.grid.h * np.einsum("xa,xb,xc,xd->abcd", P, P, P, P)


def discretize(V, grid, m, eig_tol=1e-6):
    """Eigendecomposition of ``-d^2/dx^2 + V`` on ``grid``.

    ``V`` is a callable or an array of samples. Eigenvalues below
    ``-eig_tol`` are bound states. Raises ``ValueError`` if ``H + m^2`` is
    not positive definite.
    """
    Vx = V(grid.x) if callable(V) else np.asarray(V, dtype=float)
    H = -second_derivative_matrix(grid) + np.diag(Vx)
    H = 0.5 * (H + H.T)
    vals, vecs = scipy.linalg.eigh(H)
    if vals[0] + m * m <= 0:
        raise ValueError(f"H + m^2 is not positive definite (lowest eigenvalue {vals[0]:.6g})")
    n_bound = int(np.sum(vals < -eig_tol))
    # fix eigenvector signs: first significant entry positive
    idx = np.argmax(np.abs(vecs) > 1e-8, axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    vecs = vecs * np.where(signs == 0, 1.0, signs)
    return SpectralDecomposition(grid, float(m), H, vals, vecs, n_bound, Vx)


@dataclass
class FieldState:
    u: np.ndarray
    v: np.ndarray
    t: float = 0.0


def default_dt(grid, V):
    Vx = V(grid.x) if callable(V) else np.asarray(V)
    return 0.5 * grid.h / math.sqrt(1.0 + grid.k_max ** 2 + abs(float(np.min(Vx))))


def to_coeffs(state, spec):
    Q = spec.vectors
    return Q.T @ state.u, Q.T @ state.v


def from_coeffs(a, b, spec, t):
    Q = spec.vectors
    return FieldState(Q @ a, Q @ b, t)


def sponge(grid, strength=1.0, fraction=0.15):
    """Damping rate ``sigma(x)``: zero inside, quadratic ramp over the outer layer."""
    x = np.abs(grid.x)
    inner = grid.L * (1.0 - fraction)
    s = np.clip((x - inner) / (grid.L - inner), 0.0, 1.0)
    return strength * s ** 2


class SimulationError(FloatingPointError):
    pass


_CBRT2 = 2.0 ** (1.0 / 3.0)
SCHEMES = {
    "strang": np.array([1.0]),
    "yoshida4": np.array([1.0, -_CBRT2, 1.0]) / (2.0 - _CBRT2),
}


def evolve(state, dt, nsteps, lam_nl, spec, sigma=None, scheme="strang"):
    """Advance ``nsteps`` steps of size ``dt`` (negative ``dt`` runs backwards).

    ``scheme`` is ``"strang"`` (second order) or ``"yoshida4"``, the
    symmetric triple-jump composition of Strang substeps (fourth order).
    ``sigma`` is an optional damping rate on ``v``; it is applied as the
    factor ``exp(-sigma dt)`` after each step.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {sorted(SCHEMES)}")
    a, b = to_coeffs(state, spec)
    damp = np.ones(spec.grid.M) if sigma is None else np.exp(-np.asarray(sigma) * abs(dt))
    a, b = _kernels.kg_evolve(np.ascontiguousarray(spec.vectors), spec.omega, a, b,
                              float(dt), int(nsteps), float(lam_nl), damp, SCHEMES[scheme])
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise SimulationError(f"non-finite field after t={state.t + nsteps * dt:.6g}")
    return from_coeffs(a, b, spec, state.t + nsteps * dt)


def step(state, dt, lam_nl, spec):
    """One Strang step: half kick, exact linear rotation, half kick."""
    return evolve(state, dt, 1, lam_nl, spec)


@dataclass
class ModeProjection:
    q: np.ndarray
    p: np.ndarray
    xi: np.ndarray
    u_c: np.ndarray
    v_c: np.ndarray


def project_modes(state, spec):
    """Bound-state coordinates ``q, p``, ``xi = (q sqrt(w) + i p / sqrt(w)) / sqrt(2)``
    and the continuum parts ``P_c u``, ``P_c v``."""
    h = spec.grid.h
    phi = spec.bound_states
    q = h * phi.T @ state.u
    p = h * phi.T @ state.v
    w = spec.bound_omegas
    xi = (q * np.sqrt(w) + 1j * p / np.sqrt(w)) / math.sqrt(2.0)
    return ModeProjection(q, p, xi, state.u - phi @ q, state.v - phi @ p)


def energy(state, spec, lam_nl):
    """``1/2 <v,v> + 1/2 <u, (H + m^2) u> - lam/4 h sum u^4``."""
    h = spec.grid.h
    u, v = state.u, state.v
    lin = 0.5 * h * (v @ v) + 0.5 * h * (u @ (spec.H @ u) + spec.m ** 2 * (u @ u))
    return float(lin - 0.25 * lam_nl * h * np.sum(u ** 4))


@dataclass
class KGConfig:
    """Experiment description; see ``run_experiment``."""

    L: float = 40.0
    M: int = 512
    V0: float = 2.0
    a: float = 1.0
    m: float = 1.1
    lambda_nl: float = 1.0
    eps: float = 0.5
    amplitudes: tuple = None
    seed_amplitude: float = 0.0
    seed_width: float = 2.0
    seed_center: float = 0.0
    t_end: float = 100.0
    dt: float = None
    samples: int = 101
    absorber: bool = True
    t_absorb: float = 20.0
    absorber_strength: float = 1.0
    boundary: str = "periodic"
    eig_tol: float = 1e-6
    scheme: str = "yoshida4"

    @classmethod
    def from_mapping(cls, data):
        known = {f for f in cls.__dataclass_fields__}
        flat = dict(data)
        pot = flat.pop("potential", {}) or {}
        init = flat.pop("init", {}) or {}
        if pot.get("family", "poschl_teller") != "poschl_teller":
            raise ValueError("only the poschl_teller potential family is available")
        flat.setdefault("V0", pot.get("V0", cls.V0))
        flat.setdefault("a", pot.get("a", cls.a))
        if "amplitudes" in init:
            flat["amplitudes"] = tuple(init["amplitudes"])
        for key, name in (("continuum_seed", "seed_amplitude"), ("continuum_width", "seed_width"),
                          ("continuum_center", "seed_center")):
            if key in init:
                flat[name] = init[key]
        unknown = set(flat) - known
        if unknown:
            raise ValueError(f"unknown kg config keys: {sorted(unknown)}")
        return cls(**flat)


@dataclass
class KGResult:
    times: np.ndarray
    xi_abs: np.ndarray
    q_abs: np.ndarray
    continuum_sup: np.ndarray
    energy: np.ndarray
    l2_u: np.ndarray
    l2_v: np.ndarray
    spec: SpectralDecomposition = field(repr=False)
    t_absorb: float = math.inf
    dt: float = 0.0

    def columns(self):
        nb = self.xi_abs.shape[1]
        cols = {"t": self.times}
        for j in range(nb):
            cols[f"xi_{j + 1}"] = self.xi_abs[:, j]
        for j in range(nb):
            cols[f"q_{j + 1}"] = self.q_abs[:, j]
        cols["sup_Pc_u"] = self.continuum_sup
        cols["energy"] = self.energy
        cols["l2_u"] = self.l2_u
        cols["l2_v"] = self.l2_v
        return cols

    def energy_drift(self, before=None):
        """Largest relative energy deviation up to ``before`` (default: absorber start)."""
        before = self.t_absorb if before is None else before
        sel = self.times <= before + 1e-12
        E = self.energy[sel]
        return float(np.max(np.abs(E - E[0])) / max(abs(E[0]), 1e-300))


def initial_state(cfg, spec):
    """Bound-state amplitudes ``eps^alpha_j`` (or explicit ones) plus a Gaussian seed."""
    nb = spec.n_bound
    if cfg.amplitudes is not None:
        amps = np.asarray(cfg.amplitudes, dtype=float)
        if amps.size != nb:
            raise ValueError(f"{amps.size} amplitudes for {nb} bound states")
    else:
        amps = np.full(nb, cfg.eps)
    x = spec.grid.x
    u = spec.bound_states @ amps if nb else np.zeros_like(x)
    if cfg.seed_amplitude:
        u = u + cfg.seed_amplitude * np.exp(-0.5 * ((x - cfg.seed_center) / cfg.seed_width) ** 2)
    return FieldState(u, np.zeros_like(u), 0.0)


def run_experiment(cfg):
    """Evolve the configured field and record mode and continuum diagnostics."""
    grid = Grid(cfg.L, cfg.M, cfg.boundary)
    V = poschl_teller(cfg.V0, cfg.a)
    spec = discretize(V, grid, cfg.m, cfg.eig_tol)
    dt_max = default_dt(grid, V)
    dt = dt_max if cfg.dt is None else float(cfg.dt)
    period = 2 * math.pi / float(spec.omega.max())
    if dt > period / 8:
        raise ValueError(f"dt={dt:.4g} gives fewer than 8 steps per fastest period")
    state = initial_state(cfg, spec)
    absorbing = cfg.absorber or cfg.boundary == "absorbing"
    t_absorb = cfg.t_absorb if absorbing else math.inf
    times = np.linspace(0.0, cfg.t_end, cfg.samples)
    if t_absorb < cfg.t_end:
        # dense energy record over the conservative window
        times = np.union1d(times, np.linspace(0.0, t_absorb, 41))
    sigma = sponge(grid, cfg.absorber_strength)
    rows = []
    h = grid.h

    def record(s):
        proj = project_modes(s, spec)
        rows.append((np.abs(proj.xi), np.abs(proj.q), float(np.max(np.abs(proj.u_c))),
                     energy(s, spec, cfg.lambda_nl), math.sqrt(h * s.u @ s.u), math.sqrt(h * s.v @ s.v)))

    record(state)
    for t_next in times[1:]:
        while state.t < t_next - 1e-12:
            remaining = t_next - state.t
            nsteps = max(int(math.ceil(remaining / dt - 1e-9)), 1)
            local_dt = remaining / nsteps
            damp = sigma if state.t >= t_absorb - 1e-12 else None
            if damp is None and state.t + remaining > t_absorb + 1e-12:
                nsteps = max(int(math.ceil((t_absorb - state.t) / dt - 1e-9)), 1)
                local_dt = (t_absorb - state.t) / nsteps
            state = evolve(state, local_dt, nsteps, cfg.lambda_nl, spec, damp, cfg.scheme)
        record(state)
    xi, q, sup, E, l2u, l2v = (np.array(c) for c in zip(*rows))
    return KGResult(times, xi.reshape(len(times), -1), q.reshape(len(times), -1), sup, E, l2u, l2v,
                    spec, t_absorb, dt)
