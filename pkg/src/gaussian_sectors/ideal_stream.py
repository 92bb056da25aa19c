"""Prime ideals of Z[i] with exact sector angles.

Everything is built from one table of rational primes ``p <= limit`` together
with a generator ``a + bi`` of a prime ideal above ``p``:

* split    (p = 1 mod 4):  a > b > 0 with a^2 + b^2 = p
* inert    (p = 3 mod 4):  (a, b) = (p, 0), ideal norm p^2
* ramified (p = 2):        (a, b) = (1, 1)

The table is what gets cached on disk; ideals and weighted prime powers are
derived from it on demand.
"""

from __future__ import annotations

import csv
import math
import os
import struct
from dataclasses import dataclass
from math import isqrt
from pathlib import Path
from typing import Iterator

import numba
import numpy as np

from .errors import (
    CacheHeaderError,
    CacheMismatchError,
    CacheTruncatedError,
    DomainError,
    InvariantError,
    ResourceError,
)

HALF_PI = 0.5 * math.pi

SPLIT, INERT, RAMIFIED = 0, 1, 2
CLASS_NAMES = ("split", "inert", "ramified")

DEFAULT_SEGMENT = 1 << 20          # odd numbers per sieve segment
DEFAULT_MEMORY_BUDGET = 4 << 30    # bytes allowed for a materialised prime list

_KERNEL_LIMIT = 1 << 31            # int64 mulmod in the batch kernel is exact below this


# ---------------------------------------------------------------------------
# rational primes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RationalPrime:
    p: int

    @property
    def residue_class(self) -> str:
        if self.p == 2:
            return "2"
        return "1 mod 4" if self.p % 4 == 1 else "3 mod 4"


def _small_primes(n: int) -> np.ndarray:
    if n < 2:
        return np.empty(0, dtype=np.int64)
    flags = np.ones(n + 1, dtype=bool)
    flags[:2] = False
    for q in range(2, isqrt(n) + 1):
        if flags[q]:
            flags[q * q::q] = False
    return np.flatnonzero(flags).astype(np.int64)


def estimated_prime_bytes(limit: int) -> int:
    """Upper estimate of the memory of an int64 array of all primes <= limit."""
    if limit < 17:
        return 64
    # Rosser–Schoenfeld: pi(x) < 1.25506 x / log x
    return int(8 * 1.25506 * limit / math.log(limit)) + 64


def iter_prime_segments(limit: int, segment_size: int = DEFAULT_SEGMENT) -> Iterator[np.ndarray]:
    """Yield ascending int64 arrays whose concatenation is every prime <= limit.

    Odd-only segmented Eratosthenes; each segment holds ``segment_size`` odd
    candidates, so peak memory is independent of ``limit``.
    """
    if segment_size < 1:
        raise DomainError("segment_size must be positive")
    if limit < 2:
        return
    yield np.array([2], dtype=np.int64)
    if limit < 3:
        return
    base = _small_primes(isqrt(limit) + 1)[1:]      # odd base primes
    low = 3
    while low <= limit:
        high = min(low + 2 * segment_size, limit + 1 + (limit % 2 == 0))
        count = (high - low + 1) // 2
        mask = np.ones(count, dtype=bool)
        for q in base:
            q = int(q)
            qq = q * q
            if qq >= high:
                break
            start = max(qq, ((low + q - 1) // q) * q)
            if start % 2 == 0:
                start += q
            if start >= high:
                continue
            mask[(start - low) // 2::q] = False
        seg = low + 2 * np.flatnonzero(mask).astype(np.int64)
        seg = seg[seg <= limit]
        if seg.size:
            yield seg
        low += 2 * count


def sieve_primes(limit: int, segment_size: int = DEFAULT_SEGMENT,
                 memory_budget: int = DEFAULT_MEMORY_BUDGET) -> np.ndarray:
    """All primes <= limit, ascending, as one int64 array."""
    need = estimated_prime_bytes(limit)
    if need > memory_budget:
        raise ResourceError(
            f"materialising primes <= {limit} needs ~{need} bytes (budget {memory_budget}); "
            f"stream them with iter_prime_segments(limit, segment_size={segment_size}) "
            f"which holds only {segment_size} bytes of sieve state at a time")
    parts = list(iter_prime_segments(limit, segment_size))
    if not parts:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(parts)


def rational_primes(limit: int, segment_size: int = DEFAULT_SEGMENT) -> Iterator[RationalPrime]:
    for seg in iter_prime_segments(limit, segment_size):
        for p in seg.tolist():
            yield RationalPrime(p)


# ---------------------------------------------------------------------------
# sums of two squares
# ---------------------------------------------------------------------------

def _sqrt_minus_one(p: int) -> int:
    for c in range(2, 10_000):
        e = pow(c, (p - 1) // 2, p)
        if e == p - 1:
            x = pow(c, (p - 1) // 4, p)
            if x * x % p != p - 1:
                raise InvariantError(f"{p}: c^((p-1)/4) is not a square root of -1")
            return x
        if e != 1:
            raise InvariantError(f"{p} fails Euler's criterion for base {c}; not prime")
    raise InvariantError(f"no quadratic non-residue found below 10000 for {p}")


def two_square_decompose(p: int) -> tuple[int, int]:
    """Return (a, b) with a^2 + b^2 = p and a > b > 0 (Hermite–Serret descent)."""
    p = int(p)
    if p % 4 != 1:
        raise DomainError(f"{p} is not 1 mod 4; it is not a sum of two coprime squares")
    x = _sqrt_minus_one(p)
    r0, r1 = p, x
    while r1 * r1 > p:
        r0, r1 = r1, r0 % r1
    a, b = r1, r0 % r1
    if a * a + b * b != p:
        raise InvariantError(f"descent for {p} produced {a}^2 + {b}^2 != p")
    return (a, b) if a > b else (b, a)


@numba.njit(cache=True)
def _mulmod(x, y, m):
    return (x * y) % m


@numba.njit(cache=True)
def _powmod(base, e, m):
    result = 1
    base %= m
    while e > 0:
        if e & 1:
            result = (result * base) % m
        base = (base * base) % m
        e >>= 1
    return result


@numba.njit(cache=True)
def _two_square_kernel(ps, out_a, out_b):
    bad = -1
    for i in range(ps.shape[0]):
        p = ps[i]
        x = -1
        for c in range(2, 10000):
            e = _powmod(c, (p - 1) // 2, p)
            if e == p - 1:
                x = _powmod(c, (p - 1) // 4, p)
                break
            if e != 1:
                break
        if x < 0 or _mulmod(x, x, p) != p - 1:
            bad = i
            break
        r0 = p
        r1 = x
        while r1 * r1 > p:
            t = r0 % r1
            r0 = r1
            r1 = t
        a = r1
        b = r0 % r1
        if a * a + b * b != p:
            bad = i
            break
        if a > b:
            out_a[i] = a
            out_b[i] = b
        else:
            out_a[i] = b
            out_b[i] = a
    return bad


def two_square_many(primes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised two_square_decompose for an array of primes = 1 mod 4."""
    ps = np.ascontiguousarray(primes, dtype=np.int64)
    if ps.size and np.any(ps % 4 != 1):
        raise DomainError("two_square_many expects primes = 1 mod 4 only")
    if ps.size and ps.max() >= _KERNEL_LIMIT:
        pairs = [two_square_decompose(int(p)) for p in ps]
        return (np.array([q[0] for q in pairs], dtype=np.int64),
                np.array([q[1] for q in pairs], dtype=np.int64))
    a = np.empty_like(ps)
    b = np.empty_like(ps)
    bad = _two_square_kernel(ps, a, b)
    if bad >= 0:
        raise InvariantError(f"two-square descent failed for {int(ps[bad])}; not a prime = 1 mod 4")
    return a, b


# ---------------------------------------------------------------------------
# prime table (the cached object)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PrimeTable:
    """Rational primes <= limit with one generator a + bi of an ideal above each."""
    limit: int
    p: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __len__(self) -> int:
        return int(self.p.size)


def _freeze(*arrays):
    for arr in arrays:
        arr.flags.writeable = False


def build_prime_table(limit: int, segment_size: int = DEFAULT_SEGMENT) -> PrimeTable:
    ps, aa, bb = [], [], []
    for seg in iter_prime_segments(limit, segment_size):
        a = np.empty(seg.size, dtype=np.int64)
        b = np.zeros(seg.size, dtype=np.int64)
        one = seg % 4 == 1
        three = seg % 4 == 3
        a[three] = seg[three]
        a[seg == 2] = 1
        b[seg == 2] = 1
        if one.any():
            a[one], b[one] = two_square_many(seg[one])
        ps.append(seg)
        aa.append(a)
        bb.append(b)
    if ps:
        table = PrimeTable(int(limit), np.concatenate(ps), np.concatenate(aa), np.concatenate(bb))
    else:
        e = np.empty(0, dtype=np.int64)
        table = PrimeTable(int(limit), e, e.copy(), e.copy())
    _freeze(table.p, table.a, table.b)
    return table


# Cache file: 32-byte header then fixed-width little-endian records (p:u8, a:u4, b:u4).
_MAGIC = b"GZIPRIME"
_VERSION = 1
_REVISION = 1
_HEADER = struct.Struct("<8sIIQQ")
_RECORD = np.dtype([("p", "<u8"), ("a", "<u4"), ("b", "<u4")])


def cache_store(path: str | os.PathLike, table: PrimeTable) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rec = np.empty(len(table), dtype=_RECORD)
    rec["p"] = table.p
    rec["a"] = table.a
    rec["b"] = table.b
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, _REVISION, table.limit, len(table)))
        rec.tofile(fh)
    os.replace(tmp, path)
    return path


def cache_load(path: str | os.PathLike, X: int) -> PrimeTable:
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise CacheHeaderError(f"{path}: header is {len(raw)} bytes, expected {_HEADER.size}")
        magic, version, revision, limit, count = _HEADER.unpack(raw)
        if magic != _MAGIC or version != _VERSION or revision != _REVISION:
            raise CacheHeaderError(
                f"{path}: bad header (magic={magic!r}, version={version}, revision={revision})")
        if limit != X:
            raise CacheMismatchError(f"{path}: cache was built for X={limit}, requested X={X}")
        size = path.stat().st_size
        expected = _HEADER.size + count * _RECORD.itemsize
        if size < expected:
            raise CacheTruncatedError(f"{path}: {size} bytes on disk, header promises {expected}")
        rec = np.fromfile(fh, dtype=_RECORD, count=count)
    if rec.size != count:
        raise CacheTruncatedError(f"{path}: read {rec.size} of {count} records")
    table = PrimeTable(int(limit), rec["p"].astype(np.int64), rec["a"].astype(np.int64),
                       rec["b"].astype(np.int64))
    _freeze(table.p, table.a, table.b)
    return table


def cache_path(cache_dir: str | os.PathLike, X: int) -> Path:
    return Path(cache_dir) / f"primes_{int(X)}.bin"


def load_or_build(X: int, cache_dir: str | os.PathLike | None = None,
                  build: bool = True) -> PrimeTable:
    """Prime table for limit X, read from ``cache_dir`` when present."""
    if cache_dir is None:
        return build_prime_table(X)
    path = cache_path(cache_dir, X)
    if path.exists():
        return cache_load(path, X)
    if not build:
        raise ResourceError(f"no prime cache at {path} and building was not permitted")
    table = build_prime_table(X)
    cache_store(path, table)
    return table


def _table_for(X: int, table: PrimeTable | None) -> PrimeTable:
    if table is None:
        return build_prime_table(X)
    if table.limit < X:
        raise DomainError(f"prime table covers {table.limit} < {X}")
    return table


# ---------------------------------------------------------------------------
# prime ideals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PrimeIdealRecord:
    norm: int
    angle: float
    cls: str
    a: int
    b: int


@dataclass(frozen=True)
class PrimeIdealTable:
    norm: np.ndarray
    angle: np.ndarray
    cls: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __len__(self) -> int:
        return int(self.norm.size)

    def records(self) -> Iterator[PrimeIdealRecord]:
        for i in range(len(self)):
            yield PrimeIdealRecord(int(self.norm[i]), float(self.angle[i]),
                                   CLASS_NAMES[self.cls[i]], int(self.a[i]), int(self.b[i]))

    def count(self, cls: int) -> int:
        return int(np.count_nonzero(self.cls == cls))


def enumerate_prime_ideals(X: int, table: PrimeTable | None = None) -> PrimeIdealTable:
    """Every prime ideal of Z[i] with norm <= X, ordered by (norm, angle)."""
    if X < 2:
        raise DomainError("X must be at least 2")
    t = _table_for(X, table)
    p, a, b = t.p, t.a, t.b
    split = (p % 4 == 1) & (p <= X)
    inert = (p % 4 == 3) & (p * p <= X)
    sp, sa, sb = p[split], a[split], b[split]
    n = sp.size
    norm = np.repeat(sp, 2)
    ga = np.empty(2 * n, dtype=np.int64)
    gb = np.empty(2 * n, dtype=np.int64)
    ga[0::2], gb[0::2] = sa, sb
    ga[1::2], gb[1::2] = sb, sa
    angle = np.arctan2(gb.astype(np.float64), ga.astype(np.float64))
    cls = np.full(2 * n, SPLIT, dtype=np.int8)

    ip = p[inert]
    norm = np.concatenate([[2], ip * ip, norm])
    angle = np.concatenate([[0.25 * math.pi], np.zeros(ip.size), angle])
    cls = np.concatenate([[RAMIFIED], np.full(ip.size, INERT, dtype=np.int8), cls]).astype(np.int8)
    ga = np.concatenate([[1], ip, ga])
    gb = np.concatenate([[1], np.zeros(ip.size, dtype=np.int64), gb])
    order = np.lexsort((angle, norm))
    out = PrimeIdealTable(norm[order], angle[order], cls[order], ga[order], gb[order])
    _freeze(out.norm, out.angle, out.cls, out.a, out.b)
    return out


def export_ideals_csv(ideals: PrimeIdealTable, path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["norm", "angle", "class", "a", "b"])
        for r in ideals.records():
            w.writerow([r.norm, repr(r.angle), r.cls, r.a, r.b])


# ---------------------------------------------------------------------------
# weighted prime powers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightedTerm:
    norm: int
    weight: float
    angle: float
    exponent: int


@dataclass(frozen=True)
class WeightedTerms:
    """Struct-of-arrays stream of prime-power ideals with von Mangoldt weights."""
    norm: np.ndarray
    weight: np.ndarray
    angle: np.ndarray
    exponent: np.ndarray
    X: int
    support_cap: float

    def __len__(self) -> int:
        return int(self.norm.size)

    def __iter__(self) -> Iterator[WeightedTerm]:
        for i in range(len(self)):
            yield WeightedTerm(int(self.norm[i]), float(self.weight[i]),
                               float(self.angle[i]), int(self.exponent[i]))

    def reflected(self) -> "WeightedTerms":
        """The same terms with every angle sent to pi/2 - angle (mod pi/2)."""
        ang = np.where(self.angle == 0.0, 0.0, HALF_PI - self.angle)
        return WeightedTerms(self.norm, self.weight, ang, self.exponent, self.X, self.support_cap)


def _first_quadrant(x: int, y: int) -> tuple[int, int]:
    # multiply by -i until the generator sits in {x > 0, y >= 0}
    while not (x > 0 and y >= 0):
        x, y = y, -x
    return x, y


def _gauss_pow(x: int, y: int, r: int) -> tuple[int, int]:
    rx, ry = 1, 0
    for _ in range(r):
        rx, ry = rx * x - ry * y, rx * y + ry * x
    return _first_quadrant(rx, ry)


def power_angle(a: int, b: int, r: int) -> float:
    """Angle in [0, pi/2) of the ideal generated by (a + bi)^r, via exact integer powers."""
    x, y = _gauss_pow(a, b, r)
    return math.atan2(y, x)


def enumerate_weighted_terms(X: int, support_cap: float = 1.0,
                             table: PrimeTable | None = None) -> WeightedTerms:
    """All prime-power ideals p^r with N(p^r) <= support_cap * X.

    Ordered by (norm, angle). Weight is log N(p) for every power.
    """
    if X < 1 or support_cap <= 0:
        raise DomainError("need X >= 1 and support_cap > 0")
    bound = int(math.floor(support_cap * X + 1e-9))
    if bound < 2:
        e = np.empty(0)
        return WeightedTerms(e.astype(np.int64), e, e.copy(), e.astype(np.int16), X, support_cap)
    t = _table_for(bound, table)
    p, a, b = t.p, t.a, t.b

    # bulk: split primes, r = 1, already ordered by (norm, angle)
    sel = (p % 4 == 1) & (p <= bound)
    sp, sa, sb = p[sel], a[sel], b[sel]
    n = sp.size
    norm = np.repeat(sp, 2)
    angle = np.empty(2 * n)
    angle[0::2] = np.arctan2(sb.astype(np.float64), sa.astype(np.float64))
    angle[1::2] = np.arctan2(sa.astype(np.float64), sb.astype(np.float64))
    del sa, sb, sel

    # sparse extras: every term whose norm is not a rational prime
    en, ew, ea, er = [], [], [], []
    small = p[p * p <= bound] if p.size else p
    for i in range(small.size):
        q = int(p[i])
        ai, bi = int(a[i]), int(b[i])
        if q == 2:
            r, nr = 1, 2
            while nr <= bound:
                en.append(nr); ew.append(math.log(2)); ea.append(power_angle(1, 1, r)); er.append(r)
                r += 1
                nr *= 2
        elif q % 4 == 3:
            r, nr = 1, q * q
            while nr <= bound:
                en.append(nr); ew.append(2 * math.log(q)); ea.append(0.0); er.append(r)
                r += 1
                nr *= q * q
        else:
            r, nr = 2, q * q
            while nr <= bound:
                for ga, gb in ((ai, bi), (bi, ai)):
                    en.append(nr); ew.append(math.log(q)); ea.append(power_angle(ga, gb, r)); er.append(r)
                r += 1
                nr *= q
    if bound >= 2 and (not small.size or small[0] != 2):
        en.append(2); ew.append(math.log(2)); ea.append(0.25 * math.pi); er.append(1)
    en = np.array(en, dtype=np.int64)
    ew = np.array(ew, dtype=np.float64)
    ea = np.array(ea, dtype=np.float64)
    er = np.array(er, dtype=np.int16)
    o = np.lexsort((ea, en))
    en, ew, ea, er = en[o], ew[o], ea[o], er[o]

    # extras never share a norm with a split prime, so a positional merge keeps the order
    pos = np.searchsorted(norm, en)
    weight = np.log(norm.astype(np.float64))
    norm = np.insert(norm, pos, en)
    weight = np.insert(weight, pos, ew)
    angle = np.insert(angle, pos, ea)
    exponent = np.insert(np.ones(2 * n, dtype=np.int16), pos, er)
    out = WeightedTerms(norm, weight, angle, exponent, int(X), float(support_cap))
    _freeze(out.norm, out.weight, out.angle, out.exponent)
    return out
