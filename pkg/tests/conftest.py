import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kgfgr.resonance import FrequencySpec, ResonancePair, check_assumptions

settings.register_profile(
    "kgfgr", deadline=None, suppress_health_check=[HealthCheck.too_slow], print_blob=True
)
settings.load_profile("kgfgr")


def brute_lambda(freq, max_order, tol=1e-9):
    """Every (lam, rho) with odd degree <= max_order and omega.(lam-rho) > m, by a
    plain scan of all exponent vectors with bounded sum."""
    n = freq.n
    out = set()

    def vectors(slots, budget):
        if slots == 0:
            yield ()
            return
        for first in range(budget + 1):
            for rest in vectors(slots - 1, budget - first):
                yield (first,) + rest

    w = np.asarray(freq.omegas)
    for v in vectors(2 * n, max_order):
        if sum(v) % 2 == 0:
            continue
        lam, rho = v[:n], v[n:]
        if float(w @ (np.array(lam) - np.array(rho))) > freq.m + tol:
            out.add(ResonancePair(lam, rho))
    return out


def brute_minimal(pairs):
    """Elements not dominated by any other element (all pairs compared)."""
    pairs = list(pairs)
    return {
        p for p in pairs
        if not any(q != p and all(a <= b for a, b in zip(q.lam + q.rho, p.lam + p.rho)) for q in pairs)
    }


def random_spec(rng, n_max=3, max_order=9):
    """A random m=1 spec passing the assumption scan at ``max_order``."""
    while True:
        n = int(rng.integers(1, n_max + 1))
        w = np.sort(rng.uniform(0.12, 0.95, n))[::-1]
        if n > 1 and np.min(-np.diff(w)) < 1e-3:
            continue
        try:
            freq = FrequencySpec(1.0, tuple(float(x) for x in w))
        except ValueError:
            continue
        if check_assumptions(freq, max_order).ok:
            return freq


@pytest.fixture
def toy_freq():
    return FrequencySpec(1.0, (0.45, 0.25))


@pytest.fixture
def bad_freq():
    return FrequencySpec(1.0, (0.32, 0.21))


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one verdict line per acceptance criterion for the summary."""
    return request.config.stash.setdefault(_ACCEPTANCE, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_ACCEPTANCE, None)
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(log):
        terminalreporter.write_line(log[k])
