"""Variance predictions and the constants that enter them.

Constants are computed from the window pair: moments directly, and the
arithmetic constants C_zeta, C_L, A' either as line integrals over
Re beta = 0 of |Phi~(1/2 + it)|^2 against a pole-free kernel, or as the
equivalent Dirichlet series against the autocorrelation
R(tau) = int phi(y) phi(y + tau) dy of phi(y) = Phi(e^y) e^{y/2}:

    C_zeta = 8 pi^2 sum Lambda(n)/n R(2 log n) - 2 pi^2 Phi~(1/2)^2
    C_L    = 8 pi^2 sum Lambda(n) chi_4(n)/n R(2 log n)
    A'     = -16 pi^2 sum_{p = 3 mod 4} log p sum_{m >= 1} p^{-2m} R(4 m log p)

The two routes share no code and are compared in the tests.

Line integrals use the trapezoid rule on t = k h. The integrands are analytic
in |Im t| < 1/4, so the discretisation error is about exp(-pi / (2h)); the
truncation at |t| = T is estimated by comparing T with T/2.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DomainError, InvariantError, NumericError, UnsupportedPointError
from .ideal_stream import sieve_primes
from .special_functions import (
    a_prime_sum_terms,
    dirichlet_L,
    dirichlet_L_prime,
    l_log_derivative_grid,
    primes_3mod4,
    zeta,
    zeta_log_derivative_grid,
    zeta_prime,
)
from .windows import WindowPair

log = logging.getLogger(__name__)

PI2 = math.pi ** 2
LOG_TERM = math.log(PI2 / 4.0) + 2.0
BIFURCATIONS = (0.5, 1.0)
BIFURCATION_GAP = 0.02
IMAG_TOL = 1e-10
INVARIANT_TOL = 1e-9

DEFAULT_H = 0.05
DEFAULT_T_INDICATOR = 4000.0
DEFAULT_P_MAX = 10_000


@dataclass(frozen=True)
class Constant:
    value: float
    error: float
    provenance: str          # closed form | quadrature | prime sum | assembled


@dataclass(frozen=True)
class ConstantsBundle:
    pair: str
    c_f: Constant
    C_f: Constant
    C_phi: Constant
    C_phi_prime: Constant
    phi_half: Constant
    mean_const: Constant          # int f * int Phi: the mean is (X/K) * mean_const
    delta: Constant
    C_zeta: Constant
    C_L: Constant
    A_prime: Constant
    kappa: Constant
    K_phi: Constant
    settings: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------

def constants_direct(pair: WindowPair) -> dict[str, Constant]:
    f, phi = pair.f, pair.phi
    kind = "closed form" if pair.kind == "analytic" else "quadrature"
    err = 0.0 if kind == "closed form" else 1e-12
    return {
        "c_f": Constant(f.integral / (4 * PI2), err, kind),
        "C_f": Constant(f.l2 / (4 * PI2), err, kind),
        "C_phi": Constant(4 * PI2 * phi.l2, 4 * PI2 * err, kind),
        "C_phi_prime": Constant(4 * PI2 * phi.log_l2, 4 * PI2 * err, kind),
        "phi_half": Constant(phi.phi_half, err, kind),
        "mean_const": Constant(f.integral * phi.integral, err, kind),
    }


# ---------------------------------------------------------------------------
# line integrals on Re beta = 0
# ---------------------------------------------------------------------------

def _grid(T: float, h: float) -> np.ndarray:
    n = int(round(T / h))
    return h * np.arange(n + 1)


def _trap_even(g: np.ndarray, h: float) -> float:
    """int_{-T}^{T} of an even function sampled at t = 0, h, ..., T."""
    w = np.ones(g.size)
    w[-1] = 0.5
    # 2 * (g0/2 + g1 + ... + g_{n-1} + g_n/2) * h
    return float(h * (2.0 * math.fsum(w[1:] * g[1:]) + g[0]))


def _mellin_line(pair: WindowPair, t: np.ndarray) -> np.ndarray:
    return pair.phi.mellin(0.5 + 1j * t)


def line_cutoff(pair: WindowPair, tol: float = 1e-16) -> float:
    """T beyond which |Phi~(1/2 + it)|^2 t stays below tol (indicator: fixed default)."""
    if pair.phi.name == "indicator":
        return DEFAULT_T_INDICATOR
    t = 8.0
    while t < 2000.0:
        probe = t + np.linspace(0.0, 8.0, 17)
        env = np.max(np.abs(_mellin_line(pair, probe)) ** 2 * probe)
        if env < tol:
            return t
        t += 8.0
    raise NumericError("Mellin transform decays too slowly for a finite cutoff", achieved=env)


def _indicator_sq_tail(T: float) -> float:
    # int_{|t| > T} dt / (1/4 + t^2)
    return 2.0 * 2.0 * (0.5 * math.pi - math.atan(2.0 * T))


def _indicator_prime_tail(T: float) -> float:
    # int_{|t| > T} -(1/2) dt / (1/4 + t^2)^2, using int dt/(a^2+t^2)^2 = t/(2a^2(a^2+t^2)) + atan(t/a)/(2a^3)
    a = 0.5
    F = lambda x: x / (2 * a * a * (a * a + x * x)) + math.atan(x / a) / (2 * a ** 3)
    full = math.pi / (2 * a ** 3)
    return -0.5 * (full - 2.0 * F(T))


def _zero_imag(z: complex, what: str) -> float:
    if abs(z.imag) > IMAG_TOL:
        raise NumericError(f"{what}: imaginary residue {z.imag:.3e} exceeds {IMAG_TOL}",
                           achieved=abs(z.imag))
    if z.imag != 0.0:
        log.info("%s: zeroed imaginary residue %.3e", what, z.imag)
    return float(z.real)


def c_phi_contour_check(pair: WindowPair, T: float | None = None, h: float = DEFAULT_H) -> dict:
    """C_Phi and C'_Phi from their moment definitions (lhs) and as line integrals (rhs).

    rhs: 2 pi int |Phi~(1/2+it)|^2 dt and 2 pi int Phi~(1/2+it) Phi~'(1/2-it) dt.
    For the indicator the tails beyond |t| = T are added in closed form.
    """
    T = line_cutoff(pair) if T is None else T
    n = int(round(T / h))
    t = h * np.arange(-n, n + 1)
    w = np.ones(t.size)
    w[0] = w[-1] = 0.5
    m = pair.phi.mellin(0.5 + 1j * t)
    mp = pair.phi.mellin_prime(0.5 - 1j * t)
    c = 2 * math.pi * h * np.sum(w * np.abs(m) ** 2)
    cp = 2 * math.pi * h * np.sum(w * m * mp)
    if pair.phi.name == "indicator":
        c += 2 * math.pi * _indicator_sq_tail(t[-1])
        cp += 2 * math.pi * _indicator_prime_tail(t[-1])
    d = constants_direct(pair)
    return {
        "C_phi": (d["C_phi"].value, float(c)),
        "C_phi_prime": (d["C_phi_prime"].value, _zero_imag(complex(cp), "C'_Phi line integral")),
    }


def _line_value(pair, kernel, T, h):
    t = _grid(T, h)
    k, kerr = kernel(t)
    m2 = np.abs(_mellin_line(pair, t)) ** 2
    full = _trap_even(m2 * k, h)
    half = _trap_even((m2 * k)[: (t.size - 1) // 2 + 1], h) if (t.size - 1) % 2 == 0 else None
    if half is None:
        tt = _grid(T / 2, h)
        half = _trap_even(m2[: tt.size] * k[: tt.size], h)
    disc = math.exp(-math.pi / (2 * h)) * _trap_even(m2 * np.abs(k), h)
    evals = _trap_even(m2 * kerr, h)
    return full, abs(full - half) + disc + evals


def _zeta_kernel(h):
    def k(t):
        return zeta_log_derivative_grid(h, t.size)
    return k


def _l_kernel(h):
    def k(t):
        return l_log_derivative_grid(h, t.size)
    return k


def _a_line(pair, P_max, T, h, chunk=1024):
    """4 pi int_R |Phi~|^2 P(it) dt accumulated per prime.

    Returns (value, error) where the error adds the P_max -> P_max/2 and
    T -> T/2 differences and the trapezoid discretisation estimate.
    """
    if P_max < 100:
        raise DomainError("P_max must be at least 100")
    primes = primes_3mod4(int(P_max))
    t = _grid(T, h)
    m2 = np.abs(_mellin_line(pair, t)) ** 2
    w = np.full(t.size, 2.0 * h)
    w[0] = h
    w[-1] = h
    half_n = _grid(T / 2, h).size
    w_half = np.where(np.arange(t.size) < half_n, w, 0.0)
    w_half[half_n - 1] = h
    per_p = np.zeros(primes.size)
    per_p_half = np.zeros(primes.size)
    absmass = np.zeros(primes.size)
    for i in range(0, t.size, chunk):
        sl = slice(i, i + chunk)
        terms = a_prime_sum_terms(1j * t[sl], primes).real * m2[sl, None]
        per_p += w[sl] @ terms
        per_p_half += w_half[sl] @ terms
        absmass += w[sl] @ np.abs(terms)
    value = math.fsum(per_p[::-1])
    dropped = math.fsum(per_p[primes > P_max // 2][::-1])
    trunc_T = abs(value - math.fsum(per_p_half[::-1]))
    disc = math.exp(-math.pi / (2 * h)) * float(absmass.sum())
    return 4 * math.pi * value, 4 * math.pi * (abs(dropped) + trunc_T + disc)


def c_phi_zeta(pair: WindowPair, route: str = "line", T: float | None = None,
               h: float = DEFAULT_H, tol: float | None = None) -> Constant:
    """-2 pi int_R |Phi~(1/2+it)|^2 [zeta'/zeta(1+2it) + zeta'/zeta(1-2it)] dt."""
    _check_route(route)
    if route == "series":
        return _c_zeta_series(pair)
    T = line_cutoff(pair) if T is None else T
    v, e = _line_value(pair, _zeta_kernel(h), T, h)
    return _checked(Constant(-2 * math.pi * v, 2 * math.pi * e, "quadrature"), tol, "C_zeta")


def c_phi_L(pair: WindowPair, route: str = "line", T: float | None = None,
            h: float = DEFAULT_H, tol: float | None = None) -> Constant:
    """-2 pi int_R |Phi~(1/2+it)|^2 [L'/L(1+2it) + L'/L(1-2it)] dt."""
    _check_route(route)
    if route == "series":
        return _c_l_series(pair)
    T = line_cutoff(pair) if T is None else T
    v, e = _line_value(pair, _l_kernel(h), T, h)
    return _checked(Constant(-2 * math.pi * v, 2 * math.pi * e, "quadrature"), tol, "C_L")


def a_phi_prime(pair: WindowPair, route: str = "line", P_max: int = DEFAULT_P_MAX,
                T: float | None = None, h: float = DEFAULT_H, tol: float | None = None) -> Constant:
    """4 pi int |Phi~(1/2+it)|^2 P(it) dt with P the p = 3 (mod 4) prime sum."""
    _check_route(route)
    if route == "series":
        return _a_prime_series(pair)
    T = line_cutoff(pair) if T is None else T
    v, e = _a_line(pair, P_max, T, h)
    return _checked(Constant(v, e, "quadrature"), tol, "A'")


def _check_route(route: str) -> None:
    if route not in ("line", "series"):
        raise DomainError(f"unknown route {route!r}; use 'line' or 'series'")


def _checked(c: Constant, tol, what):
    if tol is not None and c.error > tol:
        raise NumericError(f"{what}: error estimate {c.error:.2e} exceeds {tol:.2e}; raise T",
                           achieved=c.error)
    return c


# ---------------------------------------------------------------------------
# Dirichlet-series routes
# ---------------------------------------------------------------------------

def _series_reach(pair: WindowPair) -> float | None:
    """Largest tau with R(tau) != 0, or None for unbounded support."""
    phi = pair.phi
    if phi.support_floor <= 0:
        return None
    return math.log(phi.support_cap / phi.support_floor)


def _von_mangoldt_upto(n_max: int):
    ns, lam = [], []
    for p in sieve_primes(max(n_max, 2)).tolist():
        q = p
        while q <= n_max:
            ns.append(q)
            lam.append(math.log(p))
            q *= p
    order = np.argsort(ns)
    return np.array(ns)[order], np.array(lam)[order]


def _chi4_arr(n):
    r = n % 4
    return np.where(r == 1, 1.0, np.where(r == 3, -1.0, 0.0))


def _c_zeta_series(pair):
    phi_half = pair.phi.phi_half
    reach = _series_reach(pair)
    if reach is None:
        if pair.phi.name != "indicator":
            raise DomainError("series route needs compact log-support or the indicator")
        # R(2 log n) = 1/n: the Dirichlet series is -zeta'/zeta(2)
        s = -(zeta_prime(2.0) / zeta(2.0)).real
        return Constant(8 * PI2 * s - 2 * PI2 * phi_half ** 2, 1e-13, "closed form")
    n, lam = _von_mangoldt_upto(int(math.exp(reach / 2)) + 1)
    r = pair.phi.autocorrelation(2 * np.log(n))
    s = math.fsum(lam / n * r)
    return Constant(8 * PI2 * s - 2 * PI2 * phi_half ** 2, 1e-11, "prime sum")


def _c_l_series(pair):
    reach = _series_reach(pair)
    if reach is None:
        if pair.phi.name != "indicator":
            raise DomainError("series route needs compact log-support or the indicator")
        s = -(dirichlet_L_prime(2.0) / dirichlet_L(2.0)).real
        return Constant(8 * PI2 * s, 1e-13, "closed form")
    n, lam = _von_mangoldt_upto(int(math.exp(reach / 2)) + 1)
    r = pair.phi.autocorrelation(2 * np.log(n))
    return Constant(8 * PI2 * math.fsum(lam * _chi4_arr(n) / n * r), 1e-11, "prime sum")


def _a_prime_series(pair, P_max: int = 1_000_000):
    reach = _series_reach(pair)
    if reach is None:
        if pair.phi.name != "indicator":
            raise DomainError("series route needs compact log-support or the indicator")
        p = primes_3mod4(P_max).astype(float)
        lp = np.log(p)
        # sum_m p^{-4m} = 1/(p^4 - 1)
        terms = lp / (p ** 4 - 1.0)
        return Constant(-16 * PI2 * math.fsum(terms[::-1]), 1e-16, "prime sum")
    total = []
    for p in primes_3mod4(max(100, int(math.exp(reach / 4)) + 1)).tolist():
        m = 1
        while 4 * m * math.log(p) < reach:
            total.append(math.log(p) * p ** (-2.0 * m) * float(pair.phi.autocorrelation(4 * m * math.log(p))))
            m += 1
    return Constant(-16 * PI2 * math.fsum(total), 1e-11, "prime sum")


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def delta_phi(C_phi_prime: float, phi_half: float) -> float:
    return C_phi_prime - PI2 * phi_half ** 2


def k_phi_direct(C_zeta, C_L, A_prime, phi_half, C_phi) -> float:
    return C_zeta - C_L - A_prime + 2 * PI2 * phi_half ** 2 + C_phi * LOG_TERM


def kappa_value(C_zeta, C_L, A_prime, phi_half, C_phi, C_phi_prime) -> float:
    return C_phi * LOG_TERM + C_zeta - C_L + C_phi_prime - PI2 * phi_half ** 2 - A_prime


def k_phi_from_kappa(kappa, C_phi_prime, phi_half) -> float:
    """K_Phi = kappa - C'_Phi + 3 pi^2 Phi~(1/2)^2 (algebra between the two definitions)."""
    return kappa - C_phi_prime + 3 * PI2 * phi_half ** 2


def assert_invariants(b: ConstantsBundle) -> None:
    ph, cp = b.phi_half.value, b.C_phi_prime.value
    checks = {
        "delta": (b.delta.value, delta_phi(cp, ph)),
        "K_phi": (b.K_phi.value, k_phi_direct(b.C_zeta.value, b.C_L.value, b.A_prime.value,
                                              ph, b.C_phi.value)),
        "kappa": (b.kappa.value, kappa_value(b.C_zeta.value, b.C_L.value, b.A_prime.value,
                                             ph, b.C_phi.value, cp)),
        "K_phi via kappa": (b.K_phi.value, k_phi_from_kappa(b.kappa.value, cp, ph)),
    }
    for name, (got, want) in checks.items():
        if abs(got - want) > INVARIANT_TOL * max(1.0, abs(want)):
            raise InvariantError(f"constants bundle: {name} = {got!r}, expected {want!r}")


def build_constants(pair: WindowPair, route: str = "line", T: float | None = None,
                    h: float = DEFAULT_H, P_max: int = DEFAULT_P_MAX) -> ConstantsBundle:
    d = constants_direct(pair)
    cz = c_phi_zeta(pair, route, T, h)
    cl = c_phi_L(pair, route, T, h)
    ap = a_phi_prime(pair, route, P_max, T, h)
    ph, cp, cphi = d["phi_half"], d["C_phi_prime"], d["C_phi"]
    delta = Constant(delta_phi(cp.value, ph.value), cp.error + 2 * PI2 * abs(ph.value) * ph.error,
                     "assembled")
    ph_err = 4 * PI2 * abs(ph.value) * ph.error
    kap = Constant(kappa_value(cz.value, cl.value, ap.value, ph.value, cphi.value, cp.value),
                   cz.error + cl.error + ap.error + cp.error + LOG_TERM * cphi.error + ph_err,
                   "assembled")
    kph = Constant(k_phi_direct(cz.value, cl.value, ap.value, ph.value, cphi.value),
                   cz.error + cl.error + ap.error + LOG_TERM * cphi.error + ph_err, "assembled")
    settings = {"route": route, "h": h, "P_max": P_max,
                "T": (line_cutoff(pair) if T is None else T) if route == "line" else None}
    b = ConstantsBundle(pair.name, d["c_f"], d["C_f"], cphi, cp, ph, d["mean_const"], delta,
                        cz, cl, ap, kap, kph, settings)
    assert_invariants(b)
    return b


@lru_cache(maxsize=8)
def cached_constants(pair: WindowPair, route: str = "line") -> ConstantsBundle:
    return build_constants(pair, route)


# ---------------------------------------------------------------------------
# predictions
# ---------------------------------------------------------------------------

def predict_rmt(pair: WindowPair, X: float, K: float) -> float:
    """int f^2 * int Phi^2 * min(log X, 2 log K)."""
    return pair.f.l2 * pair.phi.l2 * min(math.log(X), 2.0 * math.log(K))


def predict_theorem(pair: WindowPair, X: float, lam: float,
                    constants: ConstantsBundle | None = None) -> float:
    """C_f X^{1-lam} (C_Phi log X + C'_Phi + pi^2 Phi~(1/2)^2), lam > 1."""
    if lam <= 1:
        raise DomainError("the large-K formula needs lambda > 1")
    c = constants or cached_constants(pair)
    return _theorem(c, X, lam)


def _theorem(c, X, lam):
    L = math.log(X)
    return c.C_f.value * X ** (1 - lam) * (c.C_phi.value * L + c.C_phi_prime.value
                                           + PI2 * c.phi_half.value ** 2)


def _check_lambda(lam: float, force: bool) -> None:
    if lam <= 0:
        raise DomainError("lambda must be positive")
    for b in BIFURCATIONS:
        gap = abs(lam - b)
        if gap == 0.0:
            raise UnsupportedPointError(f"lambda = {b} is a bifurcation point")
        if gap < BIFURCATION_GAP:
            if not force:
                raise UnsupportedPointError(
                    f"lambda = {lam} is within {BIFURCATION_GAP} of the bifurcation at {b}; "
                    "pass force=True to evaluate anyway")
            warnings.warn(f"lambda = {lam} is near the bifurcation at {b}", RuntimeWarning,
                          stacklevel=3)


def predict_refined(pair: WindowPair, X: float, lam: float,
                    constants: ConstantsBundle | None = None, force: bool = False) -> float:
    """Three-regime variance with lower-order constants.

    lam < 1/2:      C_f X^{1-lam} (2 lam C_Phi log X - K_Phi)
    1/2 < lam < 1:  C_f X^{1-lam} (C_Phi log X + Delta_Phi)
    lam > 1:        predict_theorem
    """
    _check_lambda(lam, force)
    c = constants or cached_constants(pair)
    L = math.log(X)
    if lam > 1:
        return _theorem(c, X, lam)
    pre = c.C_f.value * X ** (1 - lam)
    if lam > 0.5:
        return pre * (c.C_phi.value * L + c.delta.value)
    return pre * (2 * lam * c.C_phi.value * L - c.K_phi.value)


@dataclass(frozen=True)
class PredictionCurve:
    X: int
    model: str
    normalization: str
    lam: np.ndarray
    ratio: np.ndarray


def normaliser(pair: WindowPair, X: float, lam: float, constants: ConstantsBundle,
               mean: float | None = None) -> float:
    """<psi> log X, with <psi> the asymptotic (X/K) int f int Phi unless `mean` is given."""
    if mean is None:
        mean = X ** (1 - lam) * constants.mean_const.value
    return mean * math.log(X)


def ratio_curve(pair: WindowPair, X: float, lam_grid, normalization: str = "asymptotic",
                means=None, constants: ConstantsBundle | None = None,
                force: bool = False) -> dict[str, PredictionCurve]:
    """rmt and refined predictions divided by <psi> log X, lambda ascending.

    Predicted variances are per unit of X/K, i.e. Var ~ (X/K) * predict_rmt; the
    refined model already carries X^{1 - lambda}. Empirical normalization needs
    `means`, one per lambda.
    """
    c = constants or cached_constants(pair)
    lam = np.asarray(lam_grid, dtype=float)
    order = np.argsort(lam, kind="stable")
    lam = lam[order]
    if normalization == "empirical":
        if means is None:
            raise DomainError("empirical normalization needs the measured means")
        mu = np.asarray(means, dtype=float)[order]
    elif normalization == "asymptotic":
        mu = [None] * lam.size
    else:
        raise DomainError(f"unknown normalization {normalization!r}")
    rmt, ref = [], []
    for l, m in zip(lam, mu):
        K = X ** l
        norm = normaliser(pair, X, l, c, m)
        rmt.append(X ** (1 - l) * predict_rmt(pair, X, K) / norm)
        ref.append(predict_refined(pair, X, l, c, force) / norm)
    return {
        "rmt": PredictionCurve(int(X), "rmt", normalization, lam, np.array(rmt)),
        "refined": PredictionCurve(int(X), "refined", normalization, lam, np.array(ref)),
    }


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

def export_constants_json(b: ConstantsBundle, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        json.dump(b.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def export_constants_csv(b: ConstantsBundle, path: str | os.PathLike) -> None:
    d = b.as_dict()
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["name", "value", "error", "provenance"])
        for k, v in d.items():
            if isinstance(v, dict) and "value" in v:
                wr.writerow([k, repr(v["value"]), repr(v["error"]), v["provenance"]])


def export_curves_csv(curves: dict[str, PredictionCurve], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["model", "normalization", "lambda", "ratio"])
        for name in sorted(curves):
            c = curves[name]
            for l, r in zip(c.lam, c.ratio):
                wr.writerow([name, c.normalization, repr(float(l)), repr(float(r))])
