import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_lambda, brute_minimal, random_spec
from kgfgr.resonance import (
    ContractError,
    FrequencySpec,
    ResonanceBoundaryError,
    ResonancePair,
    check_assumptions,
    compositions,
    compute_exponents,
    default_max_order,
    enumerate_lambda,
    lambda_star,
    minimal_set,
    theta_minimal,
    verify_lambda_star_structure,
    weighted_cancellation,
)

P = ResonancePair


# -- frequency data ---------------------------------------------------------

def test_frequency_spec_validation():
    with pytest.raises(ValueError):
        FrequencySpec(1.0, (0.25, 0.45))
    with pytest.raises(ValueError):
        FrequencySpec(1.0, (1.2,))
    with pytest.raises(ValueError):
        FrequencySpec(1.0, (0.5, 0.3), (1,))
    with pytest.raises(ValueError):
        FrequencySpec(-1.0, (0.5,))
    f = FrequencySpec(1.0, (0.45, 0.25), (2, 1))
    assert f.n == 2
    assert list(f.slot_omegas) == [0.45, 0.45, 0.25]
    assert list(f.slot_modes) == [0, 0, 1]


def test_resonance_orders():
    assert FrequencySpec(1.0, (0.45, 0.25)).N == (1, 2)
    assert FrequencySpec(1.0, (0.8,)).N == (1,)
    assert FrequencySpec(1.0, (0.3,)).N == (2,)
    # m / omega = 5 sits on an interval endpoint
    assert FrequencySpec(1.0, (0.2, 0.1)).resonance_orders() == [None, 5]


# -- assumption scan ----------------------------------------------------------

def test_assumptions_pass_for_toy(toy_freq):
    rep = check_assumptions(toy_freq, 5)
    assert rep.ok and rep.orders == [1, 2]


def test_assumptions_flag_exact_threshold_hits():
    rep = check_assumptions(FrequencySpec(1.0, (0.5, 0.25)), 5)
    assert not rep.ok
    mus = {mu for mu, _ in rep.v4_violations}
    # omega_1 + 2 omega_2 = 1 and 3 omega_1 - 2 omega_2 = 1, both of odd length
    assert (1, 2) in mus and (3, -2) in mus
    assert rep.v5_violations == []


def test_assumptions_v5_even_length():
    # 2 omega_2 - omega_1 ... use omega = (0.6, 0.3): omega_1 - 2 omega_2 = 0 has odd length,
    # 2 omega_1 - 4 omega_2 = 0 has even length 6
    rep = check_assumptions(FrequencySpec(1.0, (0.6, 0.3)), 7)
    assert (2, -4) in {mu for mu, _ in rep.v5_violations}


def test_assumptions_v3_endpoint():
    rep = check_assumptions(FrequencySpec(1.0, (0.2, 0.1)), 3)
    assert not rep.v3_ok
    assert [j for j, _ in rep.v3_failures] == [1]


def test_assumptions_reject_even_order(toy_freq):
    with pytest.raises(ValueError):
        check_assumptions(toy_freq, 4)


# -- enumeration --------------------------------------------------------------

def test_compositions_count():
    from math import comb

    for total, parts in [(0, 3), (1, 1), (3, 4), (5, 2)]:
        rows = compositions(total, parts)
        assert rows.shape == (comb(total + parts - 1, parts - 1), parts)
        assert np.all(rows.sum(axis=1) == total)
        assert len({tuple(r) for r in rows}) == rows.shape[0]


def test_lambda_examples(toy_freq):
    lam = enumerate_lambda(toy_freq, 5)
    assert P((2, 1), (0, 0)) in lam  # 2 omega_1 + omega_2 = 1.15
    assert P((1, 2), (0, 0)) not in lam  # omega_1 + 2 omega_2 = 0.95
    assert enumerate_lambda(toy_freq, 1) == []
    assert lam == sorted(lam)


def test_lambda_errors(toy_freq):
    with pytest.raises(ValueError):
        enumerate_lambda(toy_freq, 4)
    with pytest.raises(ResonanceBoundaryError) as info:
        enumerate_lambda(FrequencySpec(1.0, (0.5, 0.25)), 3)
    assert P((1, 2), (0, 0)) in info.value.pairs


def test_lambda_matches_brute_force_on_presets(toy_freq, bad_freq):
    for f, K in [(toy_freq, 7), (bad_freq, 7), (FrequencySpec(1.0, (0.8,)), 9)]:
        assert set(enumerate_lambda(f, K)) == brute_lambda(f, K)


@settings(max_examples=60)
@given(seed=st.integers(0, 2 ** 32 - 1), K=st.sampled_from([3, 5, 7, 9]))
def test_lambda_oracle_property(seed, K):
    freq = random_spec(np.random.default_rng(seed), n_max=4 if K <= 5 else 3, max_order=K)
    lam = enumerate_lambda(freq, K)
    assert set(lam) == brute_lambda(freq, K)
    assert set(minimal_set(lam)) == brute_minimal(lam)


# -- minimal set ---------------------------------------------------------------

def test_minimal_set_toy(toy_freq):
    star = minimal_set(enumerate_lambda(toy_freq, 5))
    assert set(star) == {P((3, 0), (0, 0)), P((2, 1), (0, 0)), P((1, 4), (0, 0)), P((0, 5), (0, 0))}


def test_minimal_set_bad_resonance(bad_freq):
    star = minimal_set(enumerate_lambda(bad_freq, 5))
    assert P((4, 0), (0, 1)) in star
    assert abs(P((4, 0), (0, 1)).dot(bad_freq) - 1.07) < 1e-12


def test_minimal_set_small_cases():
    p = P((1, 2), (0, 0))
    assert minimal_set([p]) == [p]
    assert minimal_set([]) == []
    assert minimal_set([p, p]) == [p]


@settings(max_examples=200)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_minimal_set_is_antichain(seed):
    freq = random_spec(np.random.default_rng(seed), max_order=7)
    star = minimal_set(enumerate_lambda(freq, 7))
    for a in star:
        for b in star:
            assert a == b or not a.below(b)


# -- theta classes ---------------------------------------------------------------

def test_theta_minimal_examples(toy_freq):
    assert theta_minimal((3, 0), toy_freq) == (P((3, 0), (0, 0)), True)
    assert theta_minimal((0, 0), toy_freq) == (P((0, 0), (0, 0)), False)
    assert theta_minimal((2, -1), toy_freq) == (P((2, 0), (0, 1)), False)


@settings(max_examples=200)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_theta_classes_have_unique_minimum(seed):
    freq = random_spec(np.random.default_rng(seed), max_order=7)
    lam = enumerate_lambda(freq, 7)
    star = minimal_set(lam)
    by_theta = {}
    for p in star:
        by_theta.setdefault(p.theta, []).append(p)
    assert all(len(v) == 1 for v in by_theta.values())
    for p in lam:
        q, inside = theta_minimal(p.theta, freq)
        assert inside and q.below(p)


# -- structure of the minimal set ------------------------------------------------

def test_structure_examples(toy_freq, bad_freq):
    rep = verify_lambda_star_structure(lambda_star(toy_freq, 5), toy_freq, 5)
    assert rep.ok and rep.bad_resonances == []
    rep = verify_lambda_star_structure(lambda_star(bad_freq, 5), bad_freq, 5)
    assert rep.ok
    assert (P((4, 0), (0, 1)), 2) in rep.bad_resonances
    rep = verify_lambda_star_structure([P((1, 1), (2, 0))])
    assert any("|rho|=2" in msg for _, msg in rep.lemma_violations)
    rep = verify_lambda_star_structure([P((1, 2), (1, 0))])
    assert any("rho_1=1" in msg for _, msg in rep.lemma_violations)
    rep = verify_lambda_star_structure([P((0, 4, 1), (0, 1, 0))])
    assert not rep.ok


@settings(max_examples=1000)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_structure_holds_on_random_specs(seed):
    freq = random_spec(np.random.default_rng(seed), max_order=9)
    K = min(default_max_order(freq), 9)
    K = max(K, 3)
    rep = verify_lambda_star_structure(lambda_star(freq, K))
    assert rep.ok, rep.lemma_violations


@settings(max_examples=200)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_pure_harmonics_are_resonant(seed):
    freq = random_spec(np.random.default_rng(seed), max_order=9)
    K = 2 * max(freq.N) + 1
    lam = set(enumerate_lambda(freq, K))
    for j, Nj in enumerate(freq.N):
        e = [0] * freq.n
        e[j] = 2 * Nj + 1
        assert P(e, [0] * freq.n) in lam


# -- cancellation and exponents ---------------------------------------------------

def test_weighted_cancellation_examples(toy_freq, bad_freq):
    assert weighted_cancellation(P((4, 0), (0, 1)), 2, bad_freq) == pytest.approx(1.07)
    assert weighted_cancellation(P((3, 0), (0, 0)), 1, toy_freq) == pytest.approx(1.35)
    assert weighted_cancellation(P((0, 5), (0, 0)), 1, toy_freq) == 0.0
    with pytest.raises(ContractError):
        weighted_cancellation(P((0, 1), (1, 0)), 2, toy_freq)


@settings(max_examples=200)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_weighted_cancellation_contract_on_minimal_pairs(seed):
    freq = random_spec(np.random.default_rng(seed), max_order=7)
    for p in lambda_star(freq, 7):
        for j in range(1, freq.n + 1):
            weighted_cancellation(p, j, freq)


def test_exponents_examples(toy_freq):
    ex = compute_exponents(toy_freq, enumerate_lambda(toy_freq, 5))
    assert ex.N == (1, 2) and ex.alpha == (2.0, 1.0) and ex.kappa == 8.0 and ex.j0 == 2
    ex = compute_exponents(FrequencySpec(1.0, (0.8,)), [P((3,), (0,))])
    assert ex.N == (1,) and ex.alpha == (1.0,) and ex.j0 == 1 and ex.kappa == 4.0
    ex = compute_exponents(FrequencySpec(1.0, (0.3,)), [P((5,), (0,))])
    assert ex.N == (2,) and ex.alpha == (1.0,)
    with pytest.raises(ValueError):
        compute_exponents(FrequencySpec(1.0, (0.2, 0.1)), [])


def test_alpha_capped_at_three():
    f = FrequencySpec(1.0, (0.8, 0.13))  # N = (1, 4)
    assert compute_exponents(f, []).alpha == (3.0, 1.0)


def test_pair_api():
    p = P((4, 0), (0, 1))
    assert p.degree == 5 and p.theta == (4, -1) and p.total == (4, 1)
    assert p.bad_modes() == [2]
    assert P((1, 0), (0, 0)) < P((0, 1), (0, 0)) or P((0, 1), (0, 0)) < P((1, 0), (0, 0))
    with pytest.raises(ValueError):
        P((1,), (0, 0))
    with pytest.raises(ValueError):
        P((-1,), (0,))
