"""Hecke sums S_k, the sector count psi_{K,X}, its mean and its variance.

The variance is available two ways that share no code path:

* spectral: (2/K^2) sum_{k=1}^{k_max} f^(k/K)^2 |S_k|^2 plus a tail bound;
* direct: integrate (psi - mean)^2 over a period without any Fourier data —
  an exact step-function sweep for the indicator, a periodic trapezoid grid
  (or, for very large K, pairwise window overlaps) for smooth windows.

Angles live in [0, pi/2); S_k = sum_a w_a e^{4 i k theta_a}, w_a = Lambda(a) Phi(N(a)/X).
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import DegenerateInputError, DomainError
from .ideal_stream import WeightedTerms
from .windows import F_K_eval, WindowF, WindowPhi

HALF_PI = 0.5 * math.pi
K_BLOCK = 256                 # k-range per kernel task; fixed so results never depend on threads
GRID_PER_WINDOW = 128         # smooth direct route: grid points per window width
GRID_LIMIT = 1 << 24          # above this many grid points the smooth route switches to pairs
_GL_NODES = 256


@dataclass(frozen=True)
class HeckeSumVector:
    X: int
    k_max: int
    values: np.ndarray
    term_count: int
    error_bound: float = 0.0          # per-entry bound on |S_k - exact| (fast path only)

    @property
    def S0(self) -> float:
        return float(self.values[0].real)


@dataclass(frozen=True)
class VarianceEstimate:
    value: float
    method: str
    X: int
    K: float
    k_max: int | None = None
    tail_bound: float = 0.0
    status: str = "ok"
    detail: dict = field(default_factory=dict)

    @property
    def lam(self) -> float:
        return math.log(self.K) / math.log(self.X)


def window_weights(terms: WeightedTerms, phi: WindowPhi, X: float) -> tuple[np.ndarray, np.ndarray]:
    """(weights, angles) with Phi(N/X) applied and zero-weight terms dropped."""
    w = terms.weight * phi.evaluate(terms.norm / float(X))
    keep = w != 0.0
    return np.ascontiguousarray(w[keep]), np.ascontiguousarray(terms.angle[keep])


# ---------------------------------------------------------------------------
# Hecke sums
# ---------------------------------------------------------------------------

@numba.njit(parallel=True, cache=True)
def _hecke_kernel(w, theta, k_max, block):
    nb = (k_max + block) // block
    out = np.zeros(k_max + 1, dtype=np.complex128)
    for bi in numba.prange(nb):
        k0 = bi * block
        k1 = min(k_max + 1, k0 + block)
        m = k1 - k0
        sr = np.zeros(m)
        si = np.zeros(m)
        cr = np.zeros(m)
        ci = np.zeros(m)
        for n in range(w.shape[0]):
            a = 4.0 * theta[n]
            step = complex(math.cos(a), math.sin(a))
            ph = w[n] * complex(math.cos(k0 * a), math.sin(k0 * a))
            for j in range(m):
                # Neumaier on both parts
                x = ph.real
                t = sr[j] + x
                if abs(sr[j]) >= abs(x):
                    cr[j] += (sr[j] - t) + x
                else:
                    cr[j] += (x - t) + sr[j]
                sr[j] = t
                y = ph.imag
                t = si[j] + y
                if abs(si[j]) >= abs(y):
                    ci[j] += (si[j] - t) + y
                else:
                    ci[j] += (y - t) + si[j]
                si[j] = t
                ph *= step
        for j in range(m):
            out[k0 + j] = complex(sr[j] + cr[j], si[j] + ci[j])
    return out


def hecke_sums(terms: WeightedTerms, phi: WindowPhi, X: float, k_max: int) -> HeckeSumVector:
    """S_k for k = 0..k_max by direct summation (O(N k_max), deterministic)."""
    if k_max < 1:
        raise DomainError("k_max must be >= 1")
    w, th = window_weights(terms, phi, X)
    if w.size == 0:
        raise DegenerateInputError("no terms carry weight; S_k is identically zero")
    vals = _hecke_kernel(w, th, int(k_max), K_BLOCK)
    vals[0] = vals[0].real
    vals.flags.writeable = False
    return HeckeSumVector(int(X), int(k_max), vals, int(w.size))


def hecke_sums_fft(terms: WeightedTerms, phi: WindowPhi, X: float, k_max: int,
                   oversample: int = 4, order: int | None = None) -> HeckeSumVector:
    """S_k via angle binning and FFTs, with a Taylor correction in the in-bin offset.

    With bin width h = (pi/2)/M, M = oversample * 2 k_max, and offsets |d| <= h/2,
    e^{4ikd} is expanded to `order` terms; the remainder is bounded by
    S0 * x^{p+1}/(p+1)! * e^x with x = 4 k_max h / 2.
    """
    if k_max < 1:
        raise DomainError("k_max must be >= 1")
    if oversample < 1:
        raise DomainError("oversample must be >= 1")
    w, th = window_weights(terms, phi, X)
    if w.size == 0:
        raise DegenerateInputError("no terms carry weight; S_k is identically zero")
    M = int(oversample) * 2 * int(k_max)
    h = HALF_PI / M
    j = np.rint(th / h).astype(np.int64)
    d = th - j * h
    j %= M
    x = 4.0 * k_max * h / 2.0
    if order is None:
        order = 1
        while x ** (order + 1) / math.factorial(order + 1) * math.exp(x) > 1e-17:
            order += 1
    S0 = math.fsum(w)
    k = np.arange(k_max + 1)
    out = np.zeros(k_max + 1, dtype=complex)
    moment = w.copy()
    coef = np.ones(k_max + 1, dtype=complex)
    for p in range(order + 1):
        if p:
            moment *= d
            coef *= (4j * k) / p
        binned = np.bincount(j, weights=moment, minlength=M)
        # sum_j b_j e^{+2 pi i k j / M} = M * ifft(b)[k]
        out += coef * (M * np.fft.ifft(binned)[: k_max + 1])
    bound = S0 * x ** (order + 1) / math.factorial(order + 1) * math.exp(x)
    out[0] = S0
    out.flags.writeable = False
    return HeckeSumVector(int(X), int(k_max), out, int(w.size), float(bound))


# ---------------------------------------------------------------------------
# mean and spectral variance
# ---------------------------------------------------------------------------

def mean_value(S: HeckeSumVector, f: WindowF, K: float, phi: WindowPhi | None = None) -> dict:
    """Exact mean f^(0) S0 / K; with `phi`, also the asymptotic (X/K) * int Phi * f^(0)."""
    f0 = float(f.fourier(np.array([0.0]))[0])
    out = {"exact": f0 * S.S0 / K}
    if phi is not None:
        out["asymptotic"] = (S.X / K) * phi.integral * f0
    return out


def default_k_max(f: WindowF, K: float) -> int:
    """Indicator: max(1e5, 1000 K). Smooth: 8 K."""
    if f.name == "indicator":
        return int(max(100_000, math.ceil(1000 * K)))
    return int(math.ceil(8 * K))


def variance_spectral(S: HeckeSumVector, f: WindowF, K: float,
                      tolerance: float | None = None) -> VarianceEstimate:
    """(2/K^2) sum_{k=1}^{k_max} f^(k/K)^2 |S_k|^2 with a bound on the omitted tail."""
    k = np.arange(1, S.k_max + 1)
    fh2 = f.fourier(k / K) ** 2
    terms = fh2 * np.abs(S.values[1:]) ** 2
    value = 2.0 * math.fsum(terms) / K ** 2
    tail = 2.0 * S.S0 ** 2 * f.fourier_tail_sq(K, S.k_max) / K ** 2
    if S.error_bound:
        # |S_k|^2 perturbation, k = 1..k_max
        e = S.error_bound
        tail += 2.0 * math.fsum(fh2 * (2 * np.abs(S.values[1:]) * e + e * e)) / K ** 2
    status = "ok"
    if tolerance is not None and tail > tolerance:
        status = "warning"
        warnings.warn(f"spectral tail bound {tail:.3e} exceeds tolerance {tolerance:.3e}",
                      RuntimeWarning, stacklevel=2)
    return VarianceEstimate(value, "spectral", S.X, K, S.k_max, tail, status)


# ---------------------------------------------------------------------------
# direct variance
# ---------------------------------------------------------------------------

def _merged_by_angle(w, th):
    order = np.argsort(th, kind="stable")
    th = th[order]
    w = w[order]
    keep = np.empty(th.size, dtype=bool)
    keep[0] = True
    keep[1:] = th[1:] != th[:-1]
    idx = np.flatnonzero(keep)
    return np.add.reduceat(w, idx), th[idx]


@numba.njit(cache=True)
def _neumaier_add(s, c, x):
    t = s + x
    if abs(s) >= abs(x):
        c += (s - t) + x
    else:
        c += (x - t) + s
    return t, c


@numba.njit(cache=True)
def _sweep_kernel(w, th, width, period, mean):
    """int_0^period (psi - mean)^2 for psi = sum_a w_a 1[|theta - th_a|_circ <= width/2]."""
    n = th.shape[0]
    half = 0.5 * width
    starts = np.empty(n)
    ends = np.empty(n)
    for i in range(n):
        s = th[i] - half
        if s < 0:
            s += period
        e = th[i] + half
        if e >= period:
            e -= period
        starts[i] = s
        ends[i] = e
    so = np.argsort(starts, kind="mergesort")
    eo = np.argsort(ends, kind="mergesort")
    # psi at theta = 0: windows whose arc covers 0
    psi = 0.0
    pc = 0.0
    for i in range(n):
        if th[i] <= half or th[i] >= period - half:
            if not (th[i] - half == 0.0):   # a start exactly at 0 is handled as an event
                psi, pc = _neumaier_add(psi, pc, w[i])
    acc = 0.0
    ac = 0.0
    pos = 0.0
    i = 0
    j = 0
    while i < n or j < n:
        if j >= n or (i < n and starts[so[i]] < ends[eo[j]]):
            x = starts[so[i]]
            dlt = w[so[i]]
            i += 1
        else:
            x = ends[eo[j]]
            dlt = -w[eo[j]]
            j += 1
        v = (psi + pc) - mean
        acc, ac = _neumaier_add(acc, ac, v * v * (x - pos))
        pos = x
        psi, pc = _neumaier_add(psi, pc, dlt)
    v = (psi + pc) - mean
    acc, ac = _neumaier_add(acc, ac, v * v * (period - pos))
    return acc + ac


@numba.njit(cache=True)
def _pair_overlap_kernel(w, th, width, period):
    """sum_{a,b} w_a w_b max(0, width - d_ab) with d the circular distance."""
    n = th.shape[0]
    acc = 0.0
    c = 0.0
    for i in range(n):
        acc, c = _neumaier_add(acc, c, w[i] * w[i] * width)
        j = i + 1
        while True:
            jj = j % n
            if jj == i:
                break
            d = th[jj] - th[i]
            if j >= n:
                d += period
            if d >= width:
                break
            acc, c = _neumaier_add(acc, c, 2.0 * w[i] * w[jj] * (width - d))
            j += 1
    return acc + c


def _check_direct(K):
    width = HALF_PI / K
    if width > HALF_PI / 2:
        raise DomainError(f"K={K}: window width {width:.4f} exceeds pi/4")
    return width


def variance_direct(terms: WeightedTerms, f: WindowF, K: float, phi: WindowPhi,
                    X: float | None = None, method: str = "auto") -> VarianceEstimate:
    """Var(psi) from the definition, with no Fourier data.

    Indicator: method "sweep" (exact step-function integral, O(N log N)) or
    "pairs" (sum of window overlaps max(0, w - d) over close pairs).
    Smooth: "grid" (periodic trapezoid with GRID_PER_WINDOW points per window,
    exact up to aliasing of f^ beyond GRID_PER_WINDOW / 2) or "pairs"
    (Gauss–Legendre overlap integral per close pair).
    """
    X = terms.X if X is None else X
    width = _check_direct(K)
    w, th = window_weights(terms, phi, X)
    if w.size == 0:
        raise DegenerateInputError("no terms carry weight")
    w, th = _merged_by_angle(w, th)
    S0 = math.fsum(w)
    if method == "auto":
        if f.name == "indicator":
            method = "sweep"
        else:
            method = "grid" if GRID_PER_WINDOW * K <= GRID_LIMIT else "pairs"
    if f.name == "indicator":
        if 2 * f.support_radius != 1.0:
            raise DomainError("indicator direct routes assume unit-width f")
        mean = S0 / K
        if method == "sweep":
            val = _sweep_kernel(w, th, width, HALF_PI, mean) / HALF_PI
        elif method == "pairs":
            val = _pair_overlap_kernel(w, th, width, HALF_PI) / HALF_PI - mean * mean
        else:
            raise DomainError(f"unknown indicator method {method!r}")
    else:
        if method == "grid":
            val = _grid_variance(w, th, f, K)
        elif method == "pairs":
            val = _smooth_pairs_variance(w, th, f, K, S0)
        else:
            raise DomainError(f"unknown smooth method {method!r}")
    return VarianceEstimate(float(val), "direct", int(X), K, detail={"route": method})


def _grid_variance(w, th, f, K):
    M = int(math.ceil(GRID_PER_WINDOW * K))
    if M > GRID_LIMIT:
        raise DomainError(f"grid of {M} points exceeds {GRID_LIMIT}; use method='pairs'")
    psi = _scatter_window(w, th, f, K, M)
    m = math.fsum(psi) / M
    return math.fsum((psi - m) ** 2) / M


def _scatter_window(w, th, f, K, M, chunk=1 << 16):
    """psi on the grid theta_j = j (pi/2)/M."""
    h = HALF_PI / M
    r = f.support_radius * HALF_PI / K
    span = int(math.ceil(r / h)) + 1
    offs = np.arange(-span, span + 1)
    psi = np.zeros(M)
    for s in range(0, th.size, chunk):
        t = th[s:s + chunk]
        c = np.rint(t / h).astype(np.int64)
        idx = c[:, None] + offs[None, :]
        arg = (idx * h - t[:, None]) * (K / HALF_PI)
        vals = f.evaluate(arg.ravel()).reshape(arg.shape) * w[s:s + chunk, None]
        psi += np.bincount((idx % M).ravel(), weights=vals.ravel(), minlength=M)
    return psi


def _overlap_table(f):
    x, gw = np.polynomial.legendre.leggauss(_GL_NODES)

    def g(u):
        # int f(y) f(y - u) dy over the common support, u >= 0
        u = np.asarray(u, dtype=float)
        R = f.support_radius
        lo, hi = u - R, np.full_like(u, R)
        mid, hw = 0.5 * (lo + hi), 0.5 * (hi - lo)
        y = mid[:, None] + hw[:, None] * x[None, :]
        return hw * ((f.evaluate(y) * f.evaluate(y - u[:, None])) @ gw)
    return g


@numba.njit(cache=True)
def _close_pairs(th, reach, period):
    n = th.shape[0]
    cnt = 0
    for i in range(n):
        j = i + 1
        while True:
            jj = j % n
            if jj == i:
                break
            d = th[jj] - th[i] + (period if j >= n else 0.0)
            if d >= reach:
                break
            cnt += 1
            j += 1
    I = np.empty(cnt, dtype=np.int64)
    J = np.empty(cnt, dtype=np.int64)
    D = np.empty(cnt)
    cnt = 0
    for i in range(n):
        j = i + 1
        while True:
            jj = j % n
            if jj == i:
                break
            d = th[jj] - th[i] + (period if j >= n else 0.0)
            if d >= reach:
                break
            I[cnt] = i
            J[cnt] = jj
            D[cnt] = d
            cnt += 1
            j += 1
    return I, J, D


def _smooth_pairs_variance(w, th, f, K, S0, chunk=1 << 15):
    width = HALF_PI / K
    reach = 2 * f.support_radius * width
    if reach > HALF_PI / 2:
        raise DomainError("window support too wide for the pair route")
    g = _overlap_table(f)
    diag = float(g(np.array([0.0]))[0]) * width
    parts = [diag * math.fsum(w * w)]
    I, J, D = _close_pairs(th, reach, HALF_PI)
    for s in range(0, D.size, chunk):
        u = D[s:s + chunk] / width
        parts.append(2.0 * width * math.fsum(w[I[s:s + chunk]] * w[J[s:s + chunk]] * g(u)))
    f0 = f.integral
    mean = f0 * S0 / K
    return math.fsum(parts) / HALF_PI - mean * mean


# ---------------------------------------------------------------------------
# psi on a grid
# ---------------------------------------------------------------------------

def psi_eval(terms: WeightedTerms, f: WindowF, K: float, theta_grid, phi: WindowPhi,
             X: float | None = None, chunk: int = 4096) -> np.ndarray:
    """psi_{K,X}(theta) = sum_a w_a F_K(theta - theta_a) at each grid point."""
    X = terms.X if X is None else X
    grid = np.asarray(theta_grid, dtype=float)
    w, th = window_weights(terms, phi, X)
    order = np.argsort(th)
    w, th = w[order], th[order]
    r = f.support_radius * HALF_PI / K
    out = np.zeros(grid.shape)
    flat = grid.ravel()
    acc = np.zeros(flat.size)
    for s in range(0, flat.size, chunk):
        g = flat[s:s + chunk]
        tot = np.zeros(g.size)
        for shift in (-HALF_PI, 0.0, HALF_PI):
            lo = np.searchsorted(th, g - r + shift, side="left")
            hi = np.searchsorted(th, g + r + shift, side="right")
            for q in np.flatnonzero(hi > lo):
                seg = slice(lo[q], hi[q])
                tot[q] += np.dot(w[seg], F_K_eval(f, K, g[q] + shift - th[seg]))
        acc[s:s + chunk] = tot
    out[...] = acc.reshape(grid.shape)
    return out


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

def export_hecke_csv(S: HeckeSumVector, path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["k", "abs_S", "re_S", "im_S"])
        for k, v in enumerate(S.values):
            wr.writerow([k, repr(float(abs(v))), repr(float(v.real)), repr(float(v.imag))])


def export_psi_csv(theta, psi, path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["theta", "psi"])
        for t, v in zip(np.ravel(theta), np.ravel(psi)):
            wr.writerow([repr(float(t)), repr(float(v))])
