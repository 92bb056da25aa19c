import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gaussian_sectors.errors import (CacheHeaderError, CacheMismatchError, CacheTruncatedError,
                                     DomainError, ResourceError)
from gaussian_sectors.ideal_stream import (build_prime_table, cache_load, cache_path, cache_store,
                                           enumerate_prime_ideals, enumerate_weighted_terms,
                                           load_or_build, power_angle, sieve_primes,
                                           two_square_decompose, two_square_many)


def is_prime(n):
    return n > 1 and all(n % d for d in range(2, math.isqrt(n) + 1))


def trial_division_primes(n):
    out = []
    for m in range(2, n + 1):
        if is_prime(m):
            out.append(m)
    return out


def brute_prime_power_ideals(X):
    """(norm, angle, log N(p)) for every prime-power ideal of Z[i] with norm <= X.

    Independent of the sieve: generators are enumerated directly in the first quadrant.
    """
    gens = {}
    r = math.isqrt(X)
    for x in range(1, r + 1):
        for y in range(0, r + 1):
            n = x * x + y * y
            if n <= X:
                gens[(x, y)] = n
    # Gaussian primes among first-quadrant generators: norm prime, or (p, 0) with p = 3 mod 4
    primes = []
    for (x, y), n in gens.items():
        if is_prime(n) or (y == 0 and is_prime(x) and x % 4 == 3):
            primes.append((x, y, n))
    out = []
    for x, y, n in primes:
        k, px, py, pn = 1, x, y, n
        while pn <= X:
            out.append((pn, math.atan2(py, px), math.log(n)))
            px, py = px * x - py * y, px * y + py * x
            while not (px > 0 and py >= 0):
                px, py = py, -px
            pn *= n
            k += 1
    return out


def test_sieve_matches_trial_division():
    assert sieve_primes(20_000).tolist() == trial_division_primes(20_000)


def test_sieve_small_segments_same_result():
    assert np.array_equal(sieve_primes(100_000, segment_size=1024), sieve_primes(100_000))


@pytest.mark.parametrize("p,expected", [(5, (2, 1)), (13, (3, 2)), (17, (4, 1)), (29, (5, 2))])
def test_two_square_small(p, expected):
    assert two_square_decompose(p) == expected


def test_two_square_large_prime():
    p = 999_999_937  # largest prime below 1e9
    assert p % 4 == 1
    a, b = two_square_decompose(p)
    assert a * a + b * b == p and a > b > 0


def test_two_square_rejects_3_mod_4():
    with pytest.raises(DomainError):
        two_square_decompose(7)


def test_two_square_vectorised_agrees_with_scalar():
    ps = sieve_primes(50_000)
    ps = ps[ps % 4 == 1]
    a, b = two_square_many(ps)
    assert all((int(x), int(y)) == two_square_decompose(int(p)) for p, x, y in zip(ps[::37], a[::37], b[::37]))
    assert np.all(a * a + b * b == ps)


def test_prime_ideals_X5():
    ideals = enumerate_prime_ideals(5)
    got = [(int(n), float(t), r.cls) for n, t, r in zip(ideals.norm, ideals.angle, ideals.records())]
    assert got == [(2, math.pi / 4, "ramified"), (5, math.atan(0.5), "split"), (5, math.atan(2.0), "split")]


def test_prime_ideals_small_X():
    ideals = enumerate_prime_ideals(10)
    got = sorted((int(n), round(float(t), 12)) for n, t in zip(ideals.norm, ideals.angle))
    want = sorted([(2, round(math.pi / 4, 12)), (5, round(math.atan2(1, 2), 12)),
                   (5, round(math.atan2(2, 1), 12)), (9, 0.0)])
    assert got == want


def test_prime_ideal_counts_match_prime_counts():
    X = 50_000
    ideals = enumerate_prime_ideals(X)
    ps = sieve_primes(X)
    expected = 1 + 2 * np.count_nonzero(ps % 4 == 1) + np.count_nonzero((ps % 4 == 3) & (ps * ps <= X))
    assert len(ideals) == expected


def test_weighted_terms_match_brute_enumeration():
    X = 3000
    terms = enumerate_weighted_terms(X)
    got = sorted((int(n), round(float(a), 11), round(float(w), 11))
                 for n, a, w in zip(terms.norm, terms.angle, terms.weight))
    want = sorted((n, round(a, 11), round(w, 11)) for n, a, w in brute_prime_power_ideals(X))
    assert got == want


def test_weighted_total_at_X5():
    # (1+i), (1+i)^2, and the two ideals above 5; weight log N(p) per power
    terms = enumerate_weighted_terms(5)
    assert Counter(terms.norm.tolist()) == Counter({2: 1, 4: 1, 5: 2})
    assert math.isclose(math.fsum(terms.weight), 2 * math.log(2) + 2 * math.log(5), rel_tol=1e-15)


def test_terms_ordered_by_norm_then_angle(terms_1e4):
    key = np.lexsort((terms_1e4.angle, terms_1e4.norm))
    assert np.array_equal(key, np.arange(len(terms_1e4)))


def test_angles_in_first_quadrant(terms_1e4):
    assert terms_1e4.angle.min() >= 0.0 and terms_1e4.angle.max() < math.pi / 2


def test_conjugate_symmetry(terms_1e4):
    # angles of non-real, non-diagonal terms come in pairs theta, pi/2 - theta
    ref = terms_1e4.reflected()
    a = np.sort(np.round(terms_1e4.angle, 10))
    b = np.sort(np.round(ref.angle, 10))
    assert np.array_equal(a, b)


def test_deterministic_enumeration():
    a = enumerate_weighted_terms(20_000)
    b = enumerate_weighted_terms(20_000)
    assert np.array_equal(a.angle, b.angle) and np.array_equal(a.weight, b.weight)


@given(st.integers(1, 60), st.integers(0, 60), st.integers(1, 5))
def test_power_angle_is_r_times_angle_mod_quarter_turn(a, b, r):
    th = math.atan2(b, a)
    expected = math.fmod(r * th, math.pi / 2)
    got = power_angle(a, b, r)
    d = abs(got - expected)
    assert min(d, math.pi / 2 - d) < 1e-12


def test_cache_round_trip(tmp_path):
    t = build_prime_table(30_000)
    path = cache_store(cache_path(tmp_path, 30_000), t)
    u = cache_load(path, 30_000)
    assert np.array_equal(t.p, u.p) and np.array_equal(t.a, u.a) and np.array_equal(t.b, u.b)


def test_cache_rejects_corruption(tmp_path):
    path = cache_store(cache_path(tmp_path, 30_000), build_prime_table(30_000))
    raw = path.read_bytes()
    with pytest.raises(CacheMismatchError):
        cache_load(path, 40_000)
    path.write_bytes(raw[:-7])
    with pytest.raises(CacheTruncatedError):
        cache_load(path, 30_000)
    path.write_bytes(b"NOTPRIME" + raw[8:])
    with pytest.raises(CacheHeaderError):
        cache_load(path, 30_000)


def test_load_or_build_without_permission(tmp_path):
    with pytest.raises(ResourceError):
        load_or_build(10_000, tmp_path, build=False)
    load_or_build(10_000, tmp_path)
    assert load_or_build(10_000, tmp_path, build=False).limit == 10_000


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 5000))
def test_weighted_total_matches_chebyshev_sum(X):
    # sum of log N(p) over prime-power ideals with norm <= X, computed from rational primes
    terms = enumerate_weighted_terms(X)
    total = 0.0
    for p in trial_division_primes(X):
        if p == 2:
            total += math.log(2) * int(math.log2(X) + 1e-12)
        elif p % 4 == 1:
            k = 0
            while p ** (k + 1) <= X:
                k += 1
            total += 2 * k * math.log(p)
        else:
            k = 0
            while p ** (2 * (k + 1)) <= X:
                k += 1
            total += 2 * k * math.log(p)
    assert math.isclose(math.fsum(terms.weight), total, rel_tol=1e-12, abs_tol=1e-12)


def test_prime_ideal_invariants():
    X = 200_000
    ideals = enumerate_prime_ideals(X)
    split = ideals.cls == 0
    assert np.all(ideals.a[split] ** 2 + ideals.b[split] ** 2 == ideals.norm[split])
    ang = np.sort(ideals.angle[split])
    assert np.allclose(ang, np.sort(math.pi / 2 - ideals.angle[split]), rtol=0, atol=1e-14)
    ps = sieve_primes(math.isqrt(X))
    assert ideals.count(1) == np.count_nonzero(ps % 4 == 3)


def test_first_powers_reproduce_prime_ideals():
    X = 50_000
    terms = enumerate_weighted_terms(X, 1.0)
    ideals = enumerate_prime_ideals(X)
    first = terms.exponent == 1
    got = sorted(zip(terms.norm[first].tolist(), np.round(terms.angle[first], 12).tolist()))
    want = sorted(zip(ideals.norm.tolist(), np.round(ideals.angle, 12).tolist()))
    assert got == want
