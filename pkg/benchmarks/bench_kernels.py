"""Time the numba kernels against their numpy counterparts.

Usage: python benchmarks/bench_kernels.py [--repeat 3] [--quick]

Each kernel runs once untimed to trigger compilation; the best of
``--repeat`` runs is reported along with the largest output difference.
"""
import argparse
import time

import numpy as np

from kgfgr import _jit_kernels as jit
from kgfgr import _np_kernels as npk
from kgfgr._accel import USE_NUMBA
from kgfgr.kgsim import SCHEMES, Grid, discretize, poschl_teller
from kgfgr.modedyn import rescaled_horizon, sample_times, toy_system
from kgfgr.resonance import FrequencySpec, enumerate_lambda


def best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def case_domination(quick):
    freq = FrequencySpec(1.0, (0.61, 0.43, 0.29))
    pairs = sorted(enumerate_lambda(freq, 7 if quick else 9))
    E = np.array([list(p.lam) + list(p.rho) for p in pairs])
    deg = E.sum(axis=1)
    return f"dominated_mask ({len(pairs)} pairs)", (E, deg), lambda k, a: k.dominated_mask(*a)


def case_modes(quick):
    sys = toy_system(eps=0.1, p_amp=0.3, r_amp=0.3)
    times = sample_times(rescaled_horizon(sys, 1e6 if quick else 1e12))
    ex = sys.exponents
    params = np.array([sys.p_amp, sys.r_amp, 1.0, sys.eps, ex.kappa, ex.N[-1], sys.delta])
    args = (np.array([1e-2, 1e-2]), sys.freq.omega, sys.E, sys.coefficients,
            np.ascontiguousarray(sys.weights), params, 10.0, np.log1p(times),
            1e-8, 1e-300, 0.25, 10 ** 7)
    return "integrate_modes (toy, forced)", args, lambda k, a: k.integrate_modes(*a)[0]


def case_kg(quick):
    M = 128 if quick else 256
    grid = Grid(40.0, M, "periodic")
    spec = discretize(poschl_teller(2.0, 1.0), grid, 1.07)
    rng = np.random.default_rng(0)
    a0 = 0.1 * rng.standard_normal(M)
    b0 = 0.1 * rng.standard_normal(M)
    args = (np.ascontiguousarray(spec.vectors), spec.omega, a0, b0, 0.03, 200, -1.0,
            np.ones(M), SCHEMES["yoshida4"])
    return f"kg_evolve (M={M}, 200 steps)", args, lambda k, a: np.concatenate(k.kg_evolve(*a))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = ap.parse_args(argv)
    if not USE_NUMBA:
        print("numba disabled by KGFGR_DISABLE_NUMBA; the numba column runs as plain Python loops")
    print(f"{'kernel':<36} {'numba [s]':>11} {'numpy [s]':>11} {'speedup':>9} {'max diff':>10}")
    for case in (case_domination, case_modes, case_kg):
        name, a, call = case(args.quick)
        call(jit, a)  # compile
        t_jit, r_jit = best_of(lambda: call(jit, a), args.repeat)
        t_np, r_np = best_of(lambda: call(npk, a), args.repeat)
        diff = float(np.max(np.abs(np.asarray(r_jit, float) - np.asarray(r_np, float))))
        print(f"{name:<36} {t_jit:>11.4g} {t_np:>11.4g} {t_np / t_jit:>9.1f} {diff:>10.2g}")


if __name__ == "__main__":
    main()
