import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gaussian_sectors.errors import DomainError
from gaussian_sectors.ratios_lab import (TABLE_CASES, A_k, delta_bruteforce, delta_table,
                                         gamma_average_check, ideal_sum_A_k, inverse_series_check,
                                         lemma_A_derivative_check, lemma_A_is_1_check,
                                         local_factor_G_series, mu_k, prime_angle, prime_class,
                                         run_suite, write_report)
from gaussian_sectors.special_functions import local_factor_G

TH5 = prime_angle(5)


def test_prime_class():
    assert [prime_class(p) for p in (2, 3, 5, 7, 13)] == ["two", "3mod4", "1mod4", "3mod4", "1mod4"]
    with pytest.raises(DomainError):
        prime_class(8)


def test_A_k_cases():
    k = np.arange(1, 30)
    assert np.all(A_k("3mod4", None, k, 3) == 0)
    assert np.all(A_k("3mod4", None, k, 4) == 1)
    assert np.array_equal(A_k("two", None, k, 3).real, (-1.0) ** (3 * k))
    assert np.allclose(A_k("1mod4", TH5, k, 1), 2 * np.cos(4 * k * TH5))


def test_A_k_needs_angle_for_split():
    with pytest.raises(DomainError):
        A_k("1mod4", None, 3, 1)


@pytest.mark.parametrize("p", [2, 5, 13])
def test_A_k_equals_ideal_enumeration(p):
    th = prime_angle(p) if p % 4 == 1 else None
    cls = prime_class(p)
    for l in range(5):
        for k in range(21):
            got = complex(A_k(cls, th, np.array(k), l))
            assert abs(got - ideal_sum_A_k(p, l, k)) < 1e-12, (p, l, k)


def test_A_k_for_inert_equals_ideal_enumeration():
    for l in range(5):
        for k in range(21):
            assert abs(complex(A_k("3mod4", None, np.array(k), l)) - ideal_sum_A_k(3, l, k)) < 1e-12


def test_mu_k():
    k = np.arange(1, 10)
    assert np.all(mu_k("3mod4", None, k, 2) == -1)
    assert np.all(mu_k("1mod4", TH5, k, 2) == 1)
    assert np.all(mu_k("two", None, k, 2) == 0)
    assert np.allclose(mu_k("1mod4", TH5, k, 1), -2 * np.cos(4 * k * TH5))
    assert np.all(mu_k("two", None, k, 5) == 0)
    with pytest.raises(DomainError):
        mu_k("two", None, k, -1)
    with pytest.raises(DomainError):
        mu_k("two", None, k, 1.5)


def test_table_covers_twelve_distinct_cases():
    assert len(TABLE_CASES) == 12
    assert len({(c, m, n, h, l) for c, _, (m, n, h, l) in TABLE_CASES}) == 12


@pytest.mark.parametrize("cls,p,mnhl,expected", [
    ("1mod4", 5, (1, 1, 0, 0), 2.0),
    ("3mod4", 3, (2, 2, 0, 2), -1.0),
    ("two", 2, (1, 0, 0, 1), -1.0),
])
def test_delta_examples(cls, p, mnhl, expected):
    assert delta_table(cls, *mnhl) == expected
    th = prime_angle(p) if cls == "1mod4" else None
    assert abs(delta_bruteforce(cls, th, *mnhl, K_avg=100_000) - expected) < 1e-2


def test_delta_bruteforce_needs_large_K():
    with pytest.raises(DomainError):
        delta_bruteforce("two", None, 1, 0, 0, 1, K_avg=10)


def test_delta_convergence_rate():
    # error at K ~ 1/K for a split-prime case
    errs = [abs(delta_bruteforce("1mod4", TH5, 2, 2, 1, 1, K) - delta_table("1mod4", 2, 2, 1, 1))
            for K in (2_000, 32_000)]
    assert errs[1] < errs[0] / 4


def test_gamma_average():
    emp, pred = gamma_average_check(0.1, 10_000)
    assert abs(emp - pred) < 10 / 10_000
    emp0, pred0 = gamma_average_check(0.0, 100)
    assert emp0 == pytest.approx(1.0) and pred0 == 1.0
    with pytest.raises(DomainError):
        gamma_average_check(0.6, 10)


def test_gamma_error_halves():
    e1, p1 = gamma_average_check(0.1, 10_000)
    e2, p2 = gamma_average_check(0.1, 20_000)
    assert 1.5 <= abs(e1 - p1) / abs(e2 - p2) <= 2.5


@pytest.mark.parametrize("p", [2, 3, 5, 7, 13])
def test_series_G_matches_closed_form(p):
    shifts = (0.03, -0.02 + 0.01j, 0.01, 0.02j)
    val, tail = local_factor_G_series(p, *shifts)
    assert abs(val - local_factor_G(p, *shifts)) <= tail + 1e-13


def test_lemma_A_is_1():
    assert lemma_A_is_1_check(0.05, 0.01 - 0.03j) < 1e-12
    assert lemma_A_is_1_check(0.0, 0.0) < 1e-14
    assert lemma_A_is_1_check(0.05, 0.01 - 0.03j, series=True) < 1e-9


@settings(max_examples=25, deadline=None)
@given(st.complex_numbers(max_magnitude=0.1), st.complex_numbers(max_magnitude=0.1))
def test_lemma_A_is_1_random_shifts(a, b):
    assert lemma_A_is_1_check(a, b, primes=(2, 3, 5, 7, 11, 13, 17, 101)) < 1e-10


def test_lemma_A_derivative():
    fd, formula = lemma_A_derivative_check(0.02, 1e-4, 100_000)
    assert abs(fd - formula) / abs(formula) < 1e-4


def test_lemma_A_derivative_symmetric_point_real():
    fd, formula = lemma_A_derivative_check(0.0, 1e-4, 10_000)
    assert abs(fd.imag) < 1e-10 and abs(formula.imag) < 1e-12


def test_lemma_A_derivative_improves_with_P_max():
    # both sides share the prime cut-off; against the large-P_max limit the error shrinks
    _, limit = lemma_A_derivative_check(0.02j, 1e-4, 400_000)
    devs = [abs(lemma_A_derivative_check(0.02j, 1e-4, P)[0] - limit) for P in (100, 1_000, 20_000)]
    assert devs[0] > devs[1] > devs[2]


def test_lemma_A_derivative_conditioning_warning():
    with pytest.warns(RuntimeWarning):
        lemma_A_derivative_check(0.0, 0.1, 1_000)


@pytest.mark.parametrize("k", [1, 3, 5])
def test_inverse_series(k):
    r = inverse_series_check(k)
    assert r["convolution_defect"] < 1e-12
    assert abs(r["product"] - 1) < r["tail_estimate"]


def test_suite_and_report(tmp_path):
    res = run_suite(K_avg=10_000, deriv_P_max=10_000)
    assert all(r.passed for r in res)
    write_report(res, tmp_path / "r.json")
    data = json.loads((tmp_path / "r.json").read_text())
    assert {"name", "params", "deviation", "tolerance", "passed"} <= set(data[0])
