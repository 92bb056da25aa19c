import dataclasses
import math
import os
import subprocess
import sys

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gaussian_sectors.errors import DegenerateInputError, DomainError
from gaussian_sectors.ideal_stream import enumerate_weighted_terms
from gaussian_sectors.spectral import (default_k_max, export_hecke_csv, hecke_sums,
                                       hecke_sums_fft, mean_value, psi_eval, variance_direct,
                                       variance_spectral, window_weights)
from gaussian_sectors.windows import get_pair

HALF_PI = math.pi / 2


def rotated(terms, c):
    ang = np.mod(terms.angle + c, HALF_PI)
    return dataclasses.replace(terms, angle=ang)


def test_S_at_X5_brute_force(indicator):
    # ideals of norm <= 5: (1+i) at pi/4, (1+i)^2 = (2) at 0, and 2 +- i
    S = hecke_sums(enumerate_weighted_terms(5), indicator.phi, 5, 6)
    mpmath.mp.dps = 30
    pts = [(mpmath.log(2), mpmath.pi / 4), (mpmath.log(2), 0),
           (mpmath.log(5), mpmath.atan2(1, 2)), (mpmath.log(5), mpmath.atan2(2, 1))]
    for k in range(7):
        ref = sum(w * mpmath.expj(4 * k * t) for w, t in pts)
        assert abs(S.values[k] - complex(ref)) < 1e-14
    assert abs(S.S0 - (2 * math.log(2) + 2 * math.log(5))) < 1e-14


def test_hecke_sums_against_numpy(terms_1e4, indicator):
    S = hecke_sums(terms_1e4, indicator.phi, 10_000, 300)
    w, th = window_weights(terms_1e4, indicator.phi, 10_000)
    k = np.arange(301)
    ref = (w[None, :] * np.exp(4j * np.outer(k, th))).sum(axis=1)
    assert np.max(np.abs(S.values - ref)) < 1e-9


def test_hecke_sums_are_real(terms_1e4, bump):
    # angles come in pairs theta, pi/2 - theta, so e^{4ik theta} sums to a real number
    S = hecke_sums(terms_1e4, bump.phi, 10_000, 500)
    assert np.max(np.abs(S.values.imag)) < 1e-9 * S.S0


def test_hecke_sums_deterministic(terms_1e4, indicator):
    a = hecke_sums(terms_1e4, indicator.phi, 10_000, 2000)
    b = hecke_sums(terms_1e4, indicator.phi, 10_000, 2000)
    assert np.array_equal(a.values, b.values)


def test_hecke_modulus_rotation_invariant(terms_1e4, indicator):
    a = hecke_sums(terms_1e4, indicator.phi, 10_000, 200)
    b = hecke_sums(rotated(terms_1e4, 0.3), indicator.phi, 10_000, 200)
    assert np.max(np.abs(np.abs(a.values) - np.abs(b.values))) < 1e-9


def test_fft_route_within_its_bound(terms_1e4, bump):
    exact = hecke_sums(terms_1e4, bump.phi, 10_000, 4000)
    fast = hecke_sums_fft(terms_1e4, bump.phi, 10_000, 4000)
    dev = np.max(np.abs(exact.values - fast.values))
    assert dev <= fast.error_bound + 1e-9
    assert fast.error_bound < 1e-12 * exact.S0


def test_empty_stream_is_degenerate(indicator):
    with pytest.raises(DegenerateInputError):
        hecke_sums(enumerate_weighted_terms(1), indicator.phi, 1, 10)


def test_kmax_must_be_positive(terms_1e4, indicator):
    with pytest.raises(DomainError):
        hecke_sums(terms_1e4, indicator.phi, 10_000, 0)


def test_mean_value(terms_1e4, indicator):
    S = hecke_sums(terms_1e4, indicator.phi, 10_000, 1)
    m = mean_value(S, indicator.f, 32, indicator.phi)
    assert m["exact"] == S.S0 / 32
    assert m["asymptotic"] == 10_000 / 32
    assert abs(m["exact"] / m["asymptotic"] - 1) < 0.02


@pytest.mark.parametrize("name", ["indicator", "bump"])
def test_mean_identity_via_psi(name, terms_1e4):
    pair = get_pair(name)
    K = 16
    n = 40_000
    grid = (np.arange(n) + 0.5) * HALF_PI / n
    psi = psi_eval(terms_1e4, pair.f, K, grid, pair.phi)
    S = hecke_sums(terms_1e4, pair.phi, 10_000, 1)
    mean = mean_value(S, pair.f, K)["exact"]
    assert abs(psi.mean() / mean - 1) < (2e-3 if name == "indicator" else 1e-9)


def test_variance_via_psi_grid_matches_direct(terms_1e4, bump):
    K = 16
    n = 80_000
    grid = (np.arange(n) + 0.5) * HALF_PI / n
    psi = psi_eval(terms_1e4, bump.f, K, grid, bump.phi)
    var_grid = np.mean((psi - psi.mean()) ** 2)
    var = variance_direct(terms_1e4, bump.f, K, bump.phi).value
    assert abs(var_grid / var - 1) < 1e-8


@pytest.mark.parametrize("K", [8, 32, 128])
def test_indicator_spectral_vs_direct(terms_1e4, indicator, K):
    S = hecke_sums(terms_1e4, indicator.phi, 10_000, default_k_max(indicator.f, K))
    sp = variance_spectral(S, indicator.f, K)
    d = variance_direct(terms_1e4, indicator.f, K, indicator.phi)
    assert abs(sp.value - d.value) <= sp.tail_bound + 1e-9 * d.value


@pytest.mark.parametrize("K", [8, 100])
def test_indicator_direct_routes_agree(terms_1e4, indicator, K):
    a = variance_direct(terms_1e4, indicator.f, K, indicator.phi, method="sweep")
    b = variance_direct(terms_1e4, indicator.f, K, indicator.phi, method="pairs")
    assert abs(a.value - b.value) < 1e-11 * a.value


def test_smooth_direct_routes_agree(terms_1e4, bump):
    K = 400
    a = variance_direct(terms_1e4, bump.f, K, bump.phi, method="grid")
    b = variance_direct(terms_1e4, bump.f, K, bump.phi, method="pairs")
    assert abs(a.value - b.value) < 1e-10 * a.value


def test_window_too_wide(terms_1e4, indicator):
    with pytest.raises(DomainError):
        variance_direct(terms_1e4, indicator.f, 1, indicator.phi)


def test_variance_rotation_invariant(terms_1e4, bump):
    a = variance_direct(terms_1e4, bump.f, 32, bump.phi).value
    b = variance_direct(rotated(terms_1e4, 0.123), bump.f, 32, bump.phi).value
    assert abs(a - b) < 1e-10 * a


@settings(max_examples=15, deadline=None)
@given(st.integers(200, 3000), st.integers(3, 60))
def test_spectral_and_direct_agree_small_X(X, K):
    pair = get_pair("bump")
    terms = enumerate_weighted_terms(X, pair.phi.support_cap)
    S = hecke_sums(terms, pair.phi, X, 8 * K)
    sp = variance_spectral(S, pair.f, K)
    d = variance_direct(terms, pair.f, K, pair.phi, X)
    assert sp.value >= 0 and d.value >= 0
    assert abs(sp.value - d.value) <= sp.tail_bound + 1e-8 * d.value + 1e-12


def test_spectral_tail_warning(terms_1e4, indicator):
    S = hecke_sums(terms_1e4, indicator.phi, 10_000, 100)
    with pytest.warns(RuntimeWarning):
        est = variance_spectral(S, indicator.f, 32, tolerance=1e-12)
    assert est.status == "warning"


def test_export_hecke_csv(tmp_path, terms_1e4, indicator):
    S = hecke_sums(terms_1e4, indicator.phi, 10_000, 5)
    p = tmp_path / "s.csv"
    export_hecke_csv(S, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "k,abs_S,re_S,im_S" and len(lines) == 7


def test_reflected_stream_gives_conjugate(terms_1e4, indicator):
    # drop the self-conjugate terms so the reflection changes the multiset
    keep = terms_1e4.angle < 0.7
    half = dataclasses.replace(terms_1e4, norm=terms_1e4.norm[keep], weight=terms_1e4.weight[keep],
                               angle=terms_1e4.angle[keep], exponent=terms_1e4.exponent[keep])
    a = hecke_sums(half, indicator.phi, 10_000, 300)
    b = hecke_sums(half.reflected(), indicator.phi, 10_000, 300)
    assert np.max(np.abs(a.values.imag)) > 1.0
    assert np.max(np.abs(b.values - np.conj(a.values))) < 1e-9


def test_mean_identity_exact_for_indicator(terms_1e4, indicator):
    # psi is piecewise constant; integrate exactly over the pieces between breakpoints
    K = 16
    w, th = window_weights(terms_1e4, indicator.phi, 10_000)
    r = 0.5 * HALF_PI / K
    edges = np.unique(np.concatenate([[0.0, HALF_PI], np.mod(th - r, HALF_PI), np.mod(th + r, HALF_PI)]))
    mids = 0.5 * (edges[1:] + edges[:-1])
    psi = psi_eval(terms_1e4, indicator.f, K, mids, indicator.phi)
    integral = math.fsum(psi * np.diff(edges)) / HALF_PI
    S = hecke_sums(terms_1e4, indicator.phi, 10_000, 1)
    assert abs(integral / mean_value(S, indicator.f, K)["exact"] - 1) < 1e-12


def test_worker_count_does_not_change_results(tmp_path):
    code = ("import numba, hashlib\n"
            "from gaussian_sectors.ideal_stream import enumerate_weighted_terms\n"
            "from gaussian_sectors.windows import get_pair\n"
            "from gaussian_sectors.spectral import hecke_sums, variance_direct\n"
            "p = get_pair('indicator'); t = enumerate_weighted_terms(20000)\n"
            "S = hecke_sums(t, p.phi, 20000, 3000)\n"
            "v = variance_direct(t, p.f, 64, p.phi).value\n"
            "print(numba.get_num_threads(), hashlib.sha256(S.values.tobytes()).hexdigest(), repr(v))\n")
    outs = {}
    for n in ("1", "3"):
        env = {**os.environ, "NUMBA_NUM_THREADS": n}
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        threads, digest, v = res.stdout.split()
        assert threads == n
        outs[n] = (digest, v)
    assert outs["1"] == outs["3"]
