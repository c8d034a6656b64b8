import math

import numpy as np
import pytest

from kgfgr.kgsim import (
    SCHEMES,
    FieldState,
    Grid,
    KGConfig,
    SimulationError,
    default_dt,
    discretize,
    energy,
    evolve,
    initial_state,
    poschl_teller,
    poschl_teller_levels,
    project_modes,
    run_experiment,
    sponge,
    step,
)


@pytest.fixture(scope="module")
def pt_spec():
    return discretize(poschl_teller(2.0, 1.0), Grid(40.0, 256), 1.07)


@pytest.fixture(scope="module")
def small_spec():
    return discretize(poschl_teller(2.0, 1.0), Grid(20.0, 64), 1.07)


def bound_state(spec, amp, j=0):
    return FieldState(amp * spec.bound_states[:, j], np.zeros(spec.grid.M), 0.0)


# -- grid and operator ---------------------------------------------------------------

def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(10.0, 63)
    with pytest.raises(ValueError):
        Grid(-1.0, 64)
    with pytest.raises(ValueError):
        Grid(10.0, 64, "reflecting")
    g = Grid(10.0, 64)
    assert g.h == pytest.approx(20.0 / 64) and g.x[0] == -10.0
    assert g.k_max == pytest.approx(math.pi / g.h)


def test_levels_formula():
    assert poschl_teller_levels(2.0) == [-1.0]
    assert poschl_teller_levels(6.0) == [-4.0, -1.0]
    assert poschl_teller_levels(0.5, 2.0) == [pytest.approx(-0.25)]
    assert poschl_teller_levels(0.0) == []


@pytest.mark.parametrize("V0,m", [(2.0, 1.07), (6.0, 2.5)])
def test_eigenvalues_match_levels(V0, m):
    spec = discretize(poschl_teller(V0, 1.0), Grid(40.0, 1024), m)
    levels = poschl_teller_levels(V0)
    assert spec.n_bound == len(levels)
    assert np.allclose(spec.bound_energies, levels, atol=1e-8)


def test_free_operator_has_no_bound_states():
    spec = discretize(lambda x: np.zeros_like(x), Grid(20.0, 64), 1.0)
    assert spec.n_bound == 0
    assert spec.eigenvalues.min() > -1e-10
    with pytest.raises(ValueError):
        spec.frequency_spec()


def test_not_positive_definite():
    with pytest.raises(ValueError):
        discretize(poschl_teller(2.0), Grid(20.0, 64), 0.9)


def test_ground_state_is_sech(pt_spec):
    x = pt_spec.grid.x
    phi = pt_spec.bound_states[:, 0]
    assert np.max(np.abs(phi - 1.0 / (np.sqrt(2.0) * np.cosh(x)))) < 1e-6
    assert pt_spec.grid.h * phi @ phi == pytest.approx(1.0)


def test_completeness(pt_spec):
    Q = pt_spec.vectors
    I = np.eye(pt_spec.grid.M)
    assert np.allclose(Q.T @ Q, I, atol=1e-10)
    assert np.allclose(pt_spec.bound_projector() + pt_spec.continuum_projector(), I, atol=1e-10)


def test_functional_calculus(pt_spec):
    B = pt_spec.B()
    B2 = pt_spec.H + pt_spec.m ** 2 * np.eye(pt_spec.grid.M)
    assert np.allclose(B @ B, B2, atol=1e-9)
    assert np.allclose(pt_spec.B_sqrt() @ pt_spec.B_inv_sqrt(), np.eye(pt_spec.grid.M), atol=1e-10)
    U = pt_spec.propagator(0.7)
    assert np.allclose(U @ U.conj().T, np.eye(pt_spec.grid.M), atol=1e-10)


def test_frequency_spec_from_operator(pt_spec):
    f = pt_spec.frequency_spec()
    assert f.n == 1 and f.omega[0] == pytest.approx(math.sqrt(1.07 ** 2 - 1.0), abs=1e-8)
    assert f.N == (1,)
    op = pt_spec.continuum_operator()
    assert op.dim == pt_spec.grid.M and op.eigenvalues[0] >= 1.07 - 1e-8


def test_overlaps_symmetric(pt_spec):
    I = pt_spec.overlaps()
    # h sum phi^4 with phi = sech/sqrt2: int sech^4 / 4 = 1/3
    assert I[0, 0, 0, 0] == pytest.approx(1.0 / 3.0, rel=1e-8)


# -- stepping ------------------------------------------------------------------------

def test_reversibility(small_spec):
    rng = np.random.default_rng(0)
    M = small_spec.grid.M
    s0 = FieldState(0.3 * rng.standard_normal(M) * np.exp(-small_spec.grid.x ** 2 / 20), np.zeros(M))
    for scheme in SCHEMES:
        s1 = evolve(s0, 0.05, 200, -1.0, small_spec, scheme=scheme)
        back = evolve(s1, -0.05, 200, -1.0, small_spec, scheme=scheme)
        assert np.max(np.abs(back.u - s0.u)) < 1e-12
        assert np.max(np.abs(back.v - s0.v)) < 1e-12
        assert back.t == pytest.approx(0.0, abs=1e-12)


def test_linear_flow_preserves_mode_modulus(pt_spec):
    s0 = bound_state(pt_spec, 0.5)
    xi0 = abs(project_modes(s0, pt_spec).xi[0])
    s = evolve(s0, 0.1, 5000, 0.0, pt_spec)
    assert abs(abs(project_modes(s, pt_spec).xi[0]) / xi0 - 1.0) < 1e-12
    w = pt_spec.bound_omegas[0]
    # exact rotation: u = q cos(w t) phi
    assert np.allclose(s.u, 0.5 * math.cos(w * s.t) * pt_spec.bound_states[:, 0], atol=1e-12)


def test_bound_state_energy(pt_spec):
    q = 0.4
    s = bound_state(pt_spec, q)
    w = pt_spec.bound_omegas[0]
    assert energy(s, pt_spec, 0.0) == pytest.approx(0.5 * w * w * q * q, rel=1e-10)
    proj = project_modes(s, pt_spec)
    assert energy(s, pt_spec, 0.0) == pytest.approx(w * abs(proj.xi[0]) ** 2, rel=1e-10)


def test_energy_conservation_long_run(small_spec):
    s0 = bound_state(small_spec, 1.0)
    dt = default_dt(small_spec.grid, poschl_teller(2.0, 1.0))
    E0 = energy(s0, small_spec, -1.0)
    s = evolve(s0, dt, 100_000, -1.0, small_spec, scheme="yoshida4")
    assert abs(energy(s, small_spec, -1.0) - E0) / abs(E0) < 1e-6


def test_scheme_orders(small_spec):
    s0 = bound_state(small_spec, 1.0)
    T = 4.0
    ref = evolve(s0, T / 3200, 3200, -1.0, small_spec, scheme="yoshida4")

    def err(scheme, n):
        s = evolve(s0, T / n, n, -1.0, small_spec, scheme=scheme)
        return np.max(np.abs(s.u - ref.u))

    r2 = err("strang", 50) / err("strang", 100)
    r4 = err("yoshida4", 50) / err("yoshida4", 100)
    assert r2 == pytest.approx(4.0, rel=0.15)
    assert r4 == pytest.approx(16.0, rel=0.25)


def test_step_is_single_strang_step(small_spec):
    s0 = bound_state(small_spec, 0.8)
    a = step(s0, 0.03, -1.0, small_spec)
    b = evolve(s0, 0.03, 1, -1.0, small_spec, scheme="strang")
    assert np.array_equal(a.u, b.u)
    with pytest.raises(ValueError):
        evolve(s0, 0.03, 1, -1.0, small_spec, scheme="euler")


def test_parity_preserved(pt_spec):
    x = pt_spec.grid.x
    u = 0.8 * np.exp(-x ** 2)
    s = evolve(FieldState(u, np.zeros_like(u)), 0.03, 300, -1.0, pt_spec)
    # x -> -x maps index i to M - i on the periodic grid
    flip = np.roll(s.u[::-1], 1)
    assert np.max(np.abs(s.u - flip)) < 1e-10


def test_blowup_raises(small_spec):
    s0 = bound_state(small_spec, 30.0)
    with pytest.raises(SimulationError):
        evolve(s0, 0.05, 2000, 1.0, small_spec)


def test_sponge_profile():
    g = Grid(40.0, 256)
    s = sponge(g, 2.0)
    assert np.all(s[np.abs(g.x) < 0.85 * 40.0 - 1e-9] == 0.0)
    assert s.max() <= 2.0 and s.max() > 1.5


# -- projections -----------------------------------------------------------------------

def test_project_modes_examples(pt_spec):
    q = 0.3
    proj = project_modes(bound_state(pt_spec, q), pt_spec)
    w = pt_spec.bound_omegas[0]
    assert proj.q[0] == pytest.approx(q) and proj.p[0] == pytest.approx(0.0, abs=1e-14)
    assert proj.xi[0] == pytest.approx(q * math.sqrt(w / 2))
    assert np.max(np.abs(proj.u_c)) < 1e-12
    v = pt_spec.bound_states[:, 0]
    proj = project_modes(FieldState(np.zeros_like(v), v), pt_spec)
    assert proj.xi[0] == pytest.approx(1j / math.sqrt(2 * w))


# -- experiment driver ---------------------------------------------------------------------

def test_config_parsing():
    cfg = KGConfig.from_mapping({"potential": {"family": "poschl_teller", "V0": 6.0, "a": 1.0},
                                 "m": 2.5, "init": {"amplitudes": [0.1, 0.2], "continuum_seed": 0.01}})
    assert cfg.V0 == 6.0 and cfg.amplitudes == (0.1, 0.2) and cfg.seed_amplitude == 0.01
    with pytest.raises(ValueError):
        KGConfig.from_mapping({"potential": {"family": "square"}})
    with pytest.raises(ValueError):
        KGConfig.from_mapping({"colour": 1})


def test_initial_state_amplitude_check():
    cfg = KGConfig(M=64, L=20.0, m=1.07, amplitudes=(0.1, 0.2))
    spec = discretize(poschl_teller(2.0), Grid(20.0, 64), 1.07)
    with pytest.raises(ValueError):
        initial_state(cfg, spec)


def test_dt_too_large_rejected():
    with pytest.raises(ValueError):
        run_experiment(KGConfig(M=64, L=20.0, m=1.07, dt=1.0, t_end=10.0))


def test_short_linear_run():
    cfg = KGConfig(M=64, L=20.0, m=1.07, lambda_nl=0.0, eps=0.2, t_end=50.0, samples=11,
                   absorber=False, dt=0.05)
    res = run_experiment(cfg)
    assert res.times[-1] == pytest.approx(50.0)
    assert np.max(np.abs(res.xi_abs[:, 0] / res.xi_abs[0, 0] - 1.0)) < 1e-12
    assert res.energy_drift(before=50.0) < 1e-12
    cols = res.columns()
    assert list(cols)[:3] == ["t", "xi_1", "q_1"]
