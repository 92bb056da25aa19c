"""Brute-force checks of the ingredients of the ratios recipe for the Hecke family.

Coefficients on prime powers, for the character Xi_k(a) = e^{4 i k theta_a}:

    A_k(p^l) = sum_{r = -l, -l+2, ..., l} e^{4 i k r theta_p}   p = 1 (mod 4)
             = [l even]                                         p = 3 (mod 4)
             = (-1)^{l k}                                       p = 2

and mu_k, the coefficients of 1/L_k, vanish beyond p^2.
"""

from __future__ import annotations

import cmath
import json
import math
import os
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError
from .ideal_stream import sieve_primes, two_square_decompose
from .special_functions import a_prime_sum, gamma_ratio, local_factor_G, local_factor_Y_euler

SERIES_CUT = 60
CLASSES = ("1mod4", "3mod4", "two")


def prime_class(p: int) -> str:
    if p == 2:
        return "two"
    if p % 4 == 1:
        return "1mod4"
    if p % 4 == 3:
        return "3mod4"
    raise DomainError(f"{p} is not a prime")


def prime_angle(p: int) -> float:
    """theta_p in (0, pi/2) for a split prime (either conjugate gives the same A_k)."""
    a, b = two_square_decompose(p)
    return math.atan2(b, a)


def _check_class(p_class):
    if p_class not in CLASSES:
        raise DomainError(f"unknown prime class {p_class!r}; expected one of {CLASSES}")


def A_k(p_class: str, theta_p, k, l: int):
    """A_k(p^l); vectorised over k."""
    _check_class(p_class)
    if l < 0:
        raise DomainError("l must be non-negative")
    k = np.asarray(k)
    if p_class == "1mod4":
        if theta_p is None:
            raise DomainError("split primes need theta_p")
        r = np.arange(-l, l + 1, 2)
        return np.exp(4j * np.multiply.outer(k, r) * theta_p).sum(axis=-1)
    if p_class == "3mod4":
        return np.full(k.shape, 1.0 if l % 2 == 0 else 0.0, dtype=complex)
    return np.where((l * k) % 2 == 0, 1.0, -1.0).astype(complex)


def mu_k(p_class: str, theta_p, k, h: int):
    """Coefficient of p^{-hs} in 1/L_k(s) at a single prime."""
    _check_class(p_class)
    if h not in (0, 1, 2):
        if isinstance(h, (int, np.integer)) and h > 2:
            return np.zeros(np.shape(k), dtype=complex)
        raise DomainError(f"h must be a non-negative integer, got {h!r}")
    k = np.asarray(k)
    if h == 0:
        return np.ones(k.shape, dtype=complex)
    if h == 1:
        return -A_k(p_class, theta_p, k, 1)
    if p_class == "two":
        return np.zeros(k.shape, dtype=complex)
    return np.full(k.shape, -1.0 if p_class == "3mod4" else 1.0, dtype=complex)


def ideal_sum_A_k(p: int, l: int, k: int) -> complex:
    """sum over ideals of norm p^l of e^{4 i k theta}, by enumerating a + bi with a > 0, b >= 0."""
    n = p ** l
    total = 0j
    a = 1
    while a * a <= n:
        b2 = n - a * a
        b = math.isqrt(b2)
        if b * b == b2:
            total += cmath.exp(4j * k * math.atan2(b, a))
        a += 1
    return total


# ---------------------------------------------------------------------------
# coefficient averages
# ---------------------------------------------------------------------------

def delta_table(p_class: str, m: int, n: int, h: int, l: int) -> float:
    """Limit of <mu_k(p^h) mu_k(p^l) A_k(p^n) A_k(p^m)> over 0 < |k| <= K."""
    _check_class(p_class)
    if min(m, n, h, l) < 0:
        raise DomainError("indices must be non-negative")
    if p_class == "1mod4":
        if h > 2 or l > 2:
            return 0.0
        lo = min(m, n) + 1
        even = (m + n) % 2 == 0
        if h != 1 and l != 1:
            return float(lo) if even else 0.0
        if (h == 1) != (l == 1):
            return -2.0 * lo if not even else 0.0
        if m == n:
            return 4.0 * n + 2.0
        return 4.0 * lo if even else 0.0
    if p_class == "3mod4":
        if h not in (0, 2) or l not in (0, 2) or m % 2 or n % 2:
            return 0.0
        return 1.0 if h == l else -1.0
    if h > 1 or l > 1:
        return 0.0
    if h == l:
        return 1.0 if (m + n) % 2 == 0 else 0.0
    return -1.0 if (m + n) % 2 == 1 else 0.0


def delta_bruteforce(p_class: str, theta_p, m: int, n: int, h: int, l: int,
                     K_avg: int) -> float:
    """<mu_k(p^h) mu_k(p^l) A_k(p^n) A_k(p^m)> over 0 < |k| <= K_avg."""
    if K_avg < 1000:
        raise DomainError("K_avg must be at least 1000")
    k = np.concatenate([np.arange(-K_avg, 0), np.arange(1, K_avg + 1)])
    prod = (mu_k(p_class, theta_p, k, h) * mu_k(p_class, theta_p, k, l)
            * A_k(p_class, theta_p, k, n) * A_k(p_class, theta_p, k, m))
    avg = math.fsum(prod.real) / k.size
    return avg


# the twelve table rows exercised by the verification suite: (class, p, (m, n, h, l))
TABLE_CASES = (
    ("1mod4", 5, (1, 1, 0, 0)),
    ("1mod4", 5, (2, 4, 0, 2)),
    ("1mod4", 13, (1, 2, 0, 0)),
    ("1mod4", 5, (1, 2, 1, 2)),
    ("1mod4", 13, (2, 2, 1, 1)),
    ("1mod4", 5, (1, 3, 1, 1)),
    ("3mod4", 3, (2, 4, 0, 0)),
    ("3mod4", 7, (2, 2, 0, 2)),
    ("3mod4", 3, (1, 1, 2, 2)),
    ("two", 2, (1, 1, 1, 1)),
    ("two", 2, (1, 0, 0, 1)),
    ("two", 2, (1, 0, 0, 0)),
)


# ---------------------------------------------------------------------------
# gamma average
# ---------------------------------------------------------------------------

def gamma_average_check(alpha: float, K: int) -> tuple[float, float]:
    """(<Gamma(1/2 - a + |2k|) / Gamma(1/2 + a + |2k|)> over 0 < |k| <= K, (2K)^{-2a}/(1-2a))."""
    if not 0 <= alpha < 0.5:
        raise DomainError("need 0 <= alpha < 1/2")
    if K < 1:
        raise DomainError("K must be positive")
    k = np.arange(1, K + 1)
    vals = gamma_ratio(alpha, k).real
    emp = math.fsum(vals[::-1]) / K          # symmetric in k
    pred = (2.0 * K) ** (-2.0 * alpha) / (1.0 - 2.0 * alpha)
    return emp, pred


# ---------------------------------------------------------------------------
# Euler-product lemmas
# ---------------------------------------------------------------------------

def local_factor_G_series(p: int, alpha, beta, gamma, delta, cut: int = SERIES_CUT) -> tuple[complex, float]:
    """G_p by summing delta_p(m,n,h,l) p^{-(h(1/2+g) + l(1/2+d) + n(1/2+a) + m(1/2+b))}.

    Returns (value, geometric tail bound for m or n > cut).
    """
    cls = prime_class(p)
    al, be, ga, de = (complex(v) for v in (alpha, beta, gamma, delta))
    hl = range(3)
    xa = p ** -(0.5 + al)
    xb = p ** -(0.5 + be)
    pa = xa ** np.arange(cut + 1)
    pb = xb ** np.arange(cut + 1)
    total = 0j
    for h in hl:
        for l in hl:
            w = p ** -(h * (0.5 + ga) + l * (0.5 + de))
            D = np.array([[delta_table(cls, m, n, h, l) for n in range(cut + 1)]
                          for m in range(cut + 1)])
            if not D.any():
                continue
            total += w * (pb @ D @ pa)
    r = max(abs(xa), abs(xb))
    # |delta| <= 4(cut + 2) for the rows beyond the cut; count both directions
    tail = 9 * 2 * 4 * (cut + 2) * r ** (cut + 1) / (1 - r) ** 3 * max(1.0, p ** (2 * max(abs(ga.real), abs(de.real))))
    return total, float(tail)


def lemma_A_is_1_check(alpha, beta, primes=(2, 3, 5, 13, 17), series: bool = False) -> float:
    """max_p |G_p(alpha, beta, alpha, beta) - 1| (closed form, or the truncated series)."""
    dev = 0.0
    for p in primes:
        if series:
            g, _ = local_factor_G_series(p, alpha, beta, alpha, beta)
        else:
            g = local_factor_G(p, alpha, beta, alpha, beta)
        dev = max(dev, abs(g - 1.0))
    return dev


def _log_A(alpha, beta, primes):
    parts = [cmath.log(local_factor_G(p, -alpha, -beta, alpha, beta)
                       / local_factor_Y_euler(p, -alpha, -beta, alpha, beta)) for p in primes]
    re = math.fsum(z.real for z in parts[::-1])
    im = math.fsum(z.imag for z in parts[::-1])
    return complex(re, im)


def lemma_A_derivative_check(beta, step: float = 1e-4, P_max: int = 100_000) -> tuple[complex, complex]:
    """(central difference of A_beta(alpha) at alpha = -beta, -2 * a_prime_sum(beta, P_max)).

    A_beta(alpha) = prod_{p <= P_max} G_p(-alpha, -beta, alpha, beta) / Y_p(-alpha, -beta, alpha, beta)
    with Y_p the Euler factor of the zeta/L ratio.
    """
    if step > 1e-2 or step < 1e-7:
        warnings.warn(f"step {step:g} is badly conditioned for a central difference",
                      RuntimeWarning, stacklevel=2)
    beta = complex(beta)
    primes = sieve_primes(int(P_max)).tolist()
    a0 = -beta
    lp = _log_A(a0 + step, beta, primes)
    lm = _log_A(a0 - step, beta, primes)
    fd = (cmath.exp(lp) - cmath.exp(lm)) / (2 * step)
    formula, _ = a_prime_sum(beta, int(P_max))
    return fd, -2.0 * formula


# ---------------------------------------------------------------------------
# coefficient-inverse consistency
# ---------------------------------------------------------------------------

def _multiplicative_table(N: int, k: int, kind: str) -> np.ndarray:
    out = np.zeros(N + 1, dtype=complex)
    out[1] = 1.0
    primes = sieve_primes(N).tolist()
    # build by factorising with a smallest-prime-factor table
    spf = np.zeros(N + 1, dtype=np.int64)
    for p in primes:
        sl = spf[p::p]
        sl[sl == 0] = p
    theta = {}
    for n in range(2, N + 1):
        p = int(spf[n])
        e, m = 0, n
        while m % p == 0:
            m //= p
            e += 1
        if p not in theta:
            theta[p] = prime_angle(p) if p % 4 == 1 else None
        cls = prime_class(p)
        v = A_k(cls, theta[p], np.array(k), e) if kind == "A" else mu_k(cls, theta[p], np.array(k), e)
        out[n] = out[m] * complex(v)
    return out


def inverse_series_check(k: int, N: int = 2000, s: float = 2.0) -> dict:
    """(sum mu_k(n) n^-s)(sum A_k(n) n^-s) over n <= N, and the Dirichlet convolution defect."""
    A = _multiplicative_table(N, k, "A")
    mu = _multiplicative_table(N, k, "mu")
    n = np.arange(N + 1, dtype=float)
    n[0] = np.inf
    prod = complex(np.sum(mu / n ** s) * np.sum(A / n ** s))
    conv = np.zeros(N + 1, dtype=complex)
    for d in range(1, N + 1):
        if mu[d] != 0:
            conv[d::d] += mu[d] * A[1: N // d + 1]
    conv[1] -= 1.0
    # |A_k(n)|, |mu_k(n)| <= d(n) and sum_{n > N} d(n) n^-2 ~ (log N + 2 gamma) / N
    tail = 2.0 * (math.log(N) + 2.0) / N ** (s - 1.0)
    return {"product": prod, "convolution_defect": float(np.max(np.abs(conv[1:]))),
            "tail_estimate": tail}


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    params: dict
    deviation: float
    tolerance: float
    passed: bool


def run_suite(K_avg: int = 100_000, alpha: float = 0.1, gamma_K: int = 10_000,
              tol_delta: float = 5e-2, tol_lemma: float = 1e-10, tol_deriv: float = 1e-4,
              deriv_beta: float = 0.02, deriv_P_max: int = 100_000) -> list[CheckResult]:
    out = []
    for cls, p, (m, n, h, l) in TABLE_CASES:
        th = prime_angle(p) if cls == "1mod4" else None
        got = delta_bruteforce(cls, th, m, n, h, l, K_avg)
        want = delta_table(cls, m, n, h, l)
        dev = abs(got - want)
        out.append(CheckResult("delta", {"p": p, "m": m, "n": n, "h": h, "l": l, "K_avg": K_avg,
                                         "table": want, "average": got}, dev, tol_delta, dev <= tol_delta))
    e1, p1 = gamma_average_check(alpha, gamma_K)
    e2, p2 = gamma_average_check(alpha, 2 * gamma_K)
    ratio = abs(e1 - p1) / abs(e2 - p2)
    out.append(CheckResult("gamma_average_halving", {"alpha": alpha, "K": gamma_K, "ratio": ratio},
                           abs(ratio - 2.0), 0.5, abs(ratio - 2.0) <= 0.5))
    dev = lemma_A_is_1_check(0.05, 0.01 - 0.03j)
    out.append(CheckResult("lemma_A_is_1", {"alpha": 0.05, "beta": "0.01-0.03j"}, dev, tol_lemma,
                           dev <= tol_lemma))
    fd, formula = lemma_A_derivative_check(deriv_beta, 1e-4, deriv_P_max)
    rel = abs(fd - formula) / abs(formula)
    out.append(CheckResult("lemma_A_derivative", {"beta": deriv_beta, "P_max": deriv_P_max,
                                                  "finite_difference": str(fd), "formula": str(formula)},
                           rel, tol_deriv, rel <= tol_deriv))
    return out


def write_report(results: list[CheckResult], path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        json.dump([asdict(r) for r in results], fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
