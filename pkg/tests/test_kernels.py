import json
import os
import subprocess
import sys

import numpy as np
import pytest

from kgfgr import _jit_kernels as jit
from kgfgr import _np_kernels as npk
from kgfgr._accel import USE_NUMBA, backend
from kgfgr.kgsim import SCHEMES, Grid, discretize, poschl_teller
from kgfgr.modedyn import rescaled_horizon, sample_times, toy_system
from kgfgr.resonance import FrequencySpec, enumerate_lambda


def test_backend_name():
    assert backend() == ("numba" if USE_NUMBA else "numpy")


def test_dominated_mask_agrees():
    pairs = sorted(enumerate_lambda(FrequencySpec(1.0, (0.61, 0.43, 0.29)), 7))
    E = np.array([list(p.lam) + list(p.rho) for p in pairs])
    deg = E.sum(axis=1)
    assert np.array_equal(jit.dominated_mask(E, deg), npk.dominated_mask(E, deg, chunk=17))


@pytest.mark.parametrize("forced", [False, True])
def test_integrate_modes_agrees(forced):
    sys_ = toy_system(eps=0.1, p_amp=0.3 if forced else 0.0, r_amp=0.3 if forced else 0.0)
    times = sample_times(rescaled_horizon(sys_, 1e4), 5)
    ex = sys_.exponents
    params = np.array([sys_.p_amp, sys_.r_amp, 1.0, sys_.eps, ex.kappa, ex.N[-1], sys_.delta])
    args = (np.array([1e-3, 1e-2]), sys_.freq.omega, sys_.E, sys_.coefficients,
            np.ascontiguousarray(sys_.weights), params, 10.0, np.log1p(times), 1e-9, 1e-300, 0.25,
            10 ** 7)
    a = jit.integrate_modes(*args)
    b = npk.integrate_modes(*args)
    assert np.allclose(a[0], b[0], rtol=1e-10, atol=0)
    assert a[3] == b[3] == 0
    # accepted-step counts may differ by roundoff-driven controller choices only
    assert abs(a[1][0] - b[1][0]) <= 2


@pytest.mark.parametrize("absorbing", [False, True])
def test_kg_evolve_agrees(absorbing):
    M = 64
    spec = discretize(poschl_teller(2.0, 1.0), Grid(20.0, M), 1.07)
    rng = np.random.default_rng(1)
    a0 = 0.2 * rng.standard_normal(M)
    b0 = 0.2 * rng.standard_normal(M)
    damp = np.exp(-0.03 * np.linspace(0, 1, M)) if absorbing else np.ones(M)
    for w in SCHEMES.values():
        args = (np.ascontiguousarray(spec.vectors), spec.omega, a0, b0, 0.03, 50, -1.0, damp, w)
        ra = np.concatenate(jit.kg_evolve(*args))
        rb = np.concatenate(npk.kg_evolve(*args))
        assert np.max(np.abs(ra - rb)) < 1e-12


SCRIPT = """
import json, numpy as np
from kgfgr import _kernels, _np_kernels
from kgfgr._accel import backend
from kgfgr.modedyn import toy_system, integrate
from kgfgr.resonance import FrequencySpec, lambda_star
tr = integrate(toy_system(eps=0.1), [1e-3, 1e-2], 1e8)
print(json.dumps({"backend": backend(), "same": _kernels.impl is _np_kernels,
                  "X": tr.X[-1].tolist(), "star": len(lambda_star(FrequencySpec(1.0, (0.45, 0.25)), 5))}))
"""


def run_script(flag):
    env = dict(os.environ, KGFGR_DISABLE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True,
                         check=True, timeout=300)
    return json.loads(out.stdout.strip().splitlines()[-1])


def test_env_flag_selects_numpy_backend():
    off = run_script("1")
    on = run_script("0")
    assert off["backend"] == "numpy" and off["same"]
    assert on["backend"] == "numba" and not on["same"]
    assert off["star"] == on["star"] == 4
    assert np.allclose(off["X"], on["X"], rtol=1e-9)
