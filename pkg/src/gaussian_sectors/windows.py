"""Test functions: the angular window f, the radial weight Phi, and their transforms.

Conventions
    f^(y)     = int f(x) exp(-2 pi i x y) dx
    Phi~(s)   = int_0^inf Phi(x) x^(s-1) dx
    F_K(t)    = sum_j f( (K / (pi/2)) (t - j pi/2) )          (pi/2-periodic)

Two pairs are built in: the indicator pair (closed forms everywhere) and a
C-infinity bump pair whose transforms come from adaptive Gauss–Kronrod
quadrature (QUADPACK through scipy).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import DomainError, NumericError

HALF_PI = 0.5 * math.pi

MOMENT_TOL = 1e-12
LINE_TOL = 1e-10


@dataclass(frozen=True)
class WindowF:
    name: str
    evaluate: Callable[[np.ndarray], np.ndarray]
    fourier: Callable[[np.ndarray], np.ndarray]
    support_radius: float
    integral: float          # int f
    l2: float                # int f^2
    analytic: bool
    tail_sq: Callable[[float, int], float] = field(repr=False, default=None)

    def fourier_tail_sq(self, K: float, k_max: int) -> float:
        """sum_{k > k_max} f^(k/K)^2 (one side)."""
        return self.tail_sq(K, k_max)


@dataclass(frozen=True)
class WindowPhi:
    name: str
    evaluate: Callable[[np.ndarray], np.ndarray]
    mellin: Callable[[np.ndarray], np.ndarray]
    mellin_prime: Callable[[np.ndarray], np.ndarray]
    support_cap: float
    support_floor: float
    integral: float          # int Phi
    l2: float                # int Phi^2
    log_l2: float            # int log x Phi(x)^2 dx
    analytic: bool
    autocorrelation: Callable[[np.ndarray], np.ndarray] = field(repr=False, default=None)

    @property
    def phi_half(self) -> float:
        return float(np.real(self.mellin(np.array([0.5 + 0j]))[0]))


@dataclass(frozen=True)
class WindowPair:
    name: str
    f: WindowF
    phi: WindowPhi

    @property
    def kind(self) -> str:
        return "analytic" if self.f.analytic and self.phi.analytic else "quadrature"


def _quad(fn, a, b, tol, what, **kw):
    val, err = integrate.quad(fn, a, b, epsabs=tol, epsrel=0.0, limit=400, **kw)
    if not np.isfinite(val) or err > 10 * tol:
        raise NumericError(f"{what}: quadrature reached only {err:.2e}", achieved=err)
    return val


# ---------------------------------------------------------------------------
# indicator pair
# ---------------------------------------------------------------------------

def _indicator_tail_sq(K: float, k_max: int) -> float:
    # sum_{k > k_max} sinc(k/K)^2. For integer K group k by residue mod K and use
    # sum_{m >= 0} 1/(x + m)^2 = trigamma(x); otherwise bound sin^2 by 1.
    if float(K).is_integer():
        K = int(K)
        r = np.arange(K)
        start = k_max + 1
        first = start + (r - start) % K          # smallest k >= start with k = r mod K
        s2 = np.sin(np.pi * r / K) ** 2
        total = np.sum(s2 * special.polygamma(1, first / K)) / K ** 2
        return float(total * K ** 2 / np.pi ** 2)
    return float(K ** 2 / (np.pi ** 2 * k_max))


def indicator_window(radius: float = 0.5) -> WindowF:
    """f = 1 on [-radius, radius]."""
    w = 2.0 * radius

    def evaluate(x):
        return (np.abs(np.asarray(x, dtype=float)) <= radius).astype(float)

    def fourier(y):
        return w * np.sinc(w * np.asarray(y, dtype=float))

    def tail(K, k_max):
        if radius == 0.5:
            return _indicator_tail_sq(K, k_max)
        return float(K ** 2 / (np.pi ** 2 * k_max))

    return WindowF("indicator", evaluate, fourier, radius, w, w, True, tail)


def builtin_indicator_pair() -> WindowPair:
    def phi_eval(x):
        x = np.asarray(x, dtype=float)
        return ((x > 0) & (x <= 1.0)).astype(float)

    def mellin(s):
        return 1.0 / np.asarray(s, dtype=complex)

    def mellin_prime(s):
        return -1.0 / np.asarray(s, dtype=complex) ** 2

    def autocorr(tau):
        # int phi(y) phi(y + tau) dy with phi(y) = Phi(e^y) e^{y/2}
        return np.exp(-0.5 * np.abs(np.asarray(tau, dtype=float)))

    phi = WindowPhi("indicator", phi_eval, mellin, mellin_prime, 1.0, 0.0,
                    1.0, 1.0, -1.0, True, autocorr)
    return WindowPair("indicator", indicator_window(0.5), phi)


# ---------------------------------------------------------------------------
# smooth bump pair
# ---------------------------------------------------------------------------

def _bump(u, a):
    """exp(-a (1/(1-u^2) - 1)) on |u| < 1, zero outside; equals 1 at u = 0."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    m = np.abs(u) < 1.0
    out[m] = np.exp(-a * (1.0 / (1.0 - u[m] ** 2) - 1.0))
    return out


def _bump_scalar(u, a):
    if abs(u) >= 1.0:
        return 0.0
    return math.exp(-a * (1.0 / (1.0 - u * u) - 1.0))


def builtin_smooth_pair(f_shape: float = 12.0, phi_shape: float = 6.0, log_width: float = 4.0,
                        tol: float = MOMENT_TOL, line_tol: float = LINE_TOL) -> WindowPair:
    """C-infinity pair.

    f(x)   = bump(2x; f_shape) on [-1/2, 1/2]
    Phi(x) = bump(1 + 2 log(x)/log_width; phi_shape) on [exp(-log_width), 1]
    """
    if f_shape <= 0 or phi_shape <= 0 or log_width <= 0:
        raise DomainError("shape parameters must be positive")
    fa, pa, L = float(f_shape), float(phi_shape), float(log_width)

    f_s = lambda x: _bump_scalar(2.0 * x, fa)
    f_int = 2.0 * _quad(f_s, 0.0, 0.5, tol, "int f")
    f_l2 = 2.0 * _quad(lambda x: f_s(x) ** 2, 0.0, 0.5, tol, "int f^2")

    @lru_cache(maxsize=1 << 16)
    def fourier_scalar(y):
        if y == 0.0:
            return f_int
        return 2.0 * _quad(f_s, 0.0, 0.5, tol, f"f^({y})", weight="cos", wvar=2.0 * math.pi * y)

    def fourier(y):
        y = np.abs(np.asarray(y, dtype=float))
        flat = [fourier_scalar(float(v)) for v in y.ravel()]
        return np.array(flat, dtype=float).reshape(y.shape)

    def tail(K, k_max):
        # explicit sum until the summands are negligible against the running total
        total, k = 0.0, k_max + 1
        while True:
            v = fourier_scalar(float(k / K)) ** 2
            total += v
            if k / K > 48.0:          # |f^| is below 1e-15 f^(0) from here on
                return total
            k += 1

    f = WindowF("bump", lambda x: _bump(2.0 * np.asarray(x, dtype=float), fa),
                fourier, 0.5, f_int, f_l2, False, tail)

    # Phi in the log variable y = log x on [-L, 0]
    g = lambda y: _bump_scalar(1.0 + 2.0 * y / L, pa)
    phi_int = _quad(lambda y: g(y) * math.exp(y), -L, 0.0, tol, "int Phi")
    phi_l2 = _quad(lambda y: g(y) ** 2 * math.exp(y), -L, 0.0, tol, "int Phi^2")
    phi_log = _quad(lambda y: y * g(y) ** 2 * math.exp(y), -L, 0.0, tol, "int log x Phi^2")

    def _mellin_scalar(s, power):
        # int_{-L}^0 g(y) y^power e^{sigma y} e^{i t y} dy
        sig, t = s.real, s.imag
        base = lambda y: g(y) * (y ** power) * math.exp(sig * y)
        if t == 0.0:
            return complex(_quad(base, -L, 0.0, line_tol, f"Mellin({s})"), 0.0)
        re = _quad(base, -L, 0.0, line_tol, f"Mellin({s})", weight="cos", wvar=t)
        im = _quad(base, -L, 0.0, line_tol, f"Mellin({s})", weight="sin", wvar=t)
        return complex(re, im)

    @lru_cache(maxsize=1 << 16)
    def mellin_scalar(s):
        return _mellin_scalar(s, 0)

    @lru_cache(maxsize=1 << 16)
    def mellin_prime_scalar(s):
        return _mellin_scalar(s, 1)

    def mellin(s):
        s = np.asarray(s, dtype=complex)
        return np.array([mellin_scalar(complex(v)) for v in s.ravel()]).reshape(s.shape)

    def mellin_prime(s):
        s = np.asarray(s, dtype=complex)
        return np.array([mellin_prime_scalar(complex(v)) for v in s.ravel()]).reshape(s.shape)

    @lru_cache(maxsize=1 << 12)
    def autocorr_scalar(tau):
        # int phi(y) phi(y + tau) dy, phi(y) = g(y) e^{y/2}
        tau = abs(tau)
        if tau >= L:
            return 0.0
        fn = lambda y: g(y) * g(y + tau) * math.exp(y + 0.5 * tau)
        return _quad(fn, -L, -tau, tol, "autocorrelation")

    def autocorr(tau):
        tau = np.asarray(tau, dtype=float)
        return np.array([autocorr_scalar(float(v)) for v in tau.ravel()]).reshape(tau.shape)

    def phi_eval(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        m = x > 0
        out[m] = _bump(1.0 + 2.0 * np.log(x[m]) / L, pa)
        return out

    phi = WindowPhi("bump", phi_eval, mellin, mellin_prime, 1.0, math.exp(-L),
                    phi_int, phi_l2, phi_log, False, autocorr)
    return WindowPair("bump", f, phi)


_REGISTRY = {"indicator": builtin_indicator_pair, "bump": builtin_smooth_pair}
_BUILT: dict[str, WindowPair] = {}


def get_pair(name: str) -> WindowPair:
    if name not in _REGISTRY:
        raise DomainError(f"unknown window pair {name!r}; known: {sorted(_REGISTRY)}")
    if name not in _BUILT:
        _BUILT[name] = _REGISTRY[name]()
    return _BUILT[name]


# ---------------------------------------------------------------------------
# periodised window
# ---------------------------------------------------------------------------

def F_K_eval(f: WindowF, K: float, theta) -> np.ndarray:
    """F_K(theta) = sum_j f((K/(pi/2))(theta - j pi/2)), summing only contributing j."""
    if K < 1:
        raise DomainError("K must be >= 1")
    th = np.asarray(theta, dtype=float)
    scale = K / HALF_PI
    reach = f.support_radius / K            # in units of the period
    u = th / HALF_PI
    j_lo = np.floor(u - reach).astype(np.int64)
    j_hi = np.ceil(u + reach).astype(np.int64)
    out = np.zeros(th.shape, dtype=float)
    for off in range(int(np.max(j_hi - j_lo, initial=0)) + 1):
        j = j_lo + off
        live = j <= j_hi
        arg = scale * (th - HALF_PI * j)
        out += np.where(live, f.evaluate(arg), 0.0)
    return out


def parseval_check(f: WindowF, K: float, k_cut: int | None = None) -> tuple[float, float]:
    """Return ((2/pi) int_0^{pi/2} F_K^2, K^-2 sum_k f^(k/K)^2) computed independently."""
    if K <= 2 * f.support_radius:
        raise DomainError(f"K={K} does not exceed the support diameter {2 * f.support_radius}; "
                          "periodised copies of f overlap")
    half = f.support_radius * HALF_PI / K
    edges = [0.0, half, HALF_PI - half, HALF_PI]
    fk2 = lambda t: float(F_K_eval(f, K, np.array([t]))[0]) ** 2
    lhs = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        lhs += _quad(fk2, lo, hi, 1e-14, "int F_K^2")
    lhs *= 2.0 / math.pi

    k_cut = k_cut or int(64 * K)
    k = np.arange(1, k_cut + 1)
    body = np.sort(f.fourier(k / K) ** 2)            # ascending: small terms first
    total = f.fourier(np.array([0.0]))[0] ** 2 + 2.0 * (math.fsum(body) + f.fourier_tail_sq(K, k_cut))
    rhs = total / K ** 2
    return lhs, rhs
