"""Command-line driver: sieve cache, constants, single points, lambda scans, verification, plots.

Configuration is a plain ``key = value`` file (``#`` comments) whose first
meaningful line is ``schema = gaussian-sectors/1``. Any key may be overridden
on the command line with ``--set key=value``; the cache directory may also be
overridden by the ``GAUSSIAN_SECTORS_CACHE_DIR`` environment variable.

Exit codes: 0 success, 2 configuration or domain error, 3 numeric tolerance
failure, 4 resource error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import json
import math
import os
import sys
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from . import __version__
from .errors import (ConfigError, DomainError, NumericError, ResourceError, SectorError,
                     UnsupportedPointError)
from .ideal_stream import cache_path, cache_store, build_prime_table, enumerate_weighted_terms, load_or_build
from .predictions import (build_constants, c_phi_contour_check, export_constants_csv,
                          export_constants_json, predict_refined, predict_rmt, ratio_curve)
from .spectral import (default_k_max, hecke_sums, variance_direct, variance_spectral,
                       window_weights)
from .windows import get_pair

SCHEMA = "gaussian-sectors/1"
CACHE_ENV = "GAUSSIAN_SECTORS_CACHE_DIR"
CSV_COLUMNS = ("lambda", "K", "var", "var_tail", "mean", "ratio_emp", "ratio_asym",
               "pred_rmt", "pred_refined")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    X: int = 100_000
    lambdas: list[float] | None = None
    Ks: list[int] | None = None
    pair: str = "indicator"
    variance_method: str = "direct"        # direct | spectral
    k_max: int | None = None               # spectral only; None -> truncation policy
    workers: int = 1
    tol_spectral_tail: float = 1e-6        # relative to the variance; spectral only
    tol_delta: float = 5e-2
    tol_lemma: float = 1e-10
    tol_derivative: float = 1e-4
    tol_contour: float = 1e-8
    cache_dir: str | None = None
    build_cache: bool = True
    output_dir: str = "gs_out"
    normalization: str = "both"            # asymptotic | empirical | both
    constants_route: str = "line"          # line | series
    P_max: int = 10_000
    force: bool = False
    svg: bool = True

    def snapshot(self) -> dict:
        d = dataclasses.asdict(self)
        d["schema"] = SCHEMA
        # where files go does not change results
        d.pop("output_dir")
        d.pop("cache_dir")
        return d


def _floats(s):
    return [float(v) for v in s.replace(",", " ").split()]


def _ints(s):
    return [int(float(v)) for v in s.replace(",", " ").split()]


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_int(s):
    return None if s.strip().lower() in ("", "auto", "none") else int(float(s))


def _opt_str(s):
    return None if s.strip().lower() in ("", "none") else s.strip()


_PARSERS = {
    "X": lambda s: int(float(s)), "lambdas": _floats, "Ks": _ints, "pair": str.strip,
    "variance_method": str.strip, "k_max": _opt_int, "workers": int,
    "tol_spectral_tail": float, "tol_delta": float, "tol_lemma": float,
    "tol_derivative": float, "tol_contour": float, "cache_dir": _opt_str,
    "build_cache": _bool, "output_dir": str.strip, "normalization": str.strip,
    "constants_route": str.strip, "P_max": int, "force": _bool, "svg": _bool,
}
_CHOICES = {"variance_method": ("direct", "spectral"),
            "normalization": ("asymptotic", "empirical", "both"),
            "constants_route": ("line", "series")}


def parse_config(text: str, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                   comment_prefixes=("#",), inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from exc
    raw = dict(cp["run"])
    raw.update(overrides or {})
    schema = raw.pop("schema", None)
    if schema is None:
        raise ConfigError(f"config has no schema line; expected 'schema = {SCHEMA}'")
    if schema.strip() != SCHEMA:
        raise ConfigError(f"unsupported config schema {schema.strip()!r}; this build reads {SCHEMA!r}")
    cfg = ExperimentConfig()
    for k, v in raw.items():
        if k not in _PARSERS:
            raise ConfigError(f"unknown config key {k!r}")
        try:
            setattr(cfg, k, _PARSERS[k](v))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {k}: {v!r} ({exc})") from exc
    validate_config(cfg)
    return cfg


def load_config(path: str | os.PathLike | None, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    text = f"schema = {SCHEMA}\n"
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, overrides)


def validate_config(cfg: ExperimentConfig) -> None:
    for k, allowed in _CHOICES.items():
        if getattr(cfg, k) not in allowed:
            raise ConfigError(f"{k} must be one of {allowed}, got {getattr(cfg, k)!r}")
    if cfg.lambdas is not None and cfg.Ks is not None:
        raise ConfigError("give either lambdas or Ks, not both")
    if cfg.X < 1000:
        raise ConfigError("X must be at least 1000")
    for k in ("tol_spectral_tail", "tol_delta", "tol_lemma", "tol_derivative", "tol_contour"):
        if not getattr(cfg, k) > 0:
            raise ConfigError(f"{k} must be positive")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    if cfg.lambdas is not None and any(l <= 0 for l in cfg.lambdas):
        raise ConfigError("lambdas must be positive")
    if cfg.Ks is not None and any(k < 2 for k in cfg.Ks):
        raise ConfigError("Ks must be >= 2")
    try:
        get_pair(cfg.pair)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc


def resolve_cache_dir(cfg: ExperimentConfig) -> str | None:
    return os.environ.get(CACHE_ENV) or cfg.cache_dir


def _points(cfg: ExperimentConfig) -> list[int]:
    """Integer K values for the configured points, lambda order preserved."""
    if cfg.Ks is not None:
        return list(cfg.Ks)
    if cfg.lambdas is None:
        raise ConfigError("no lambdas or Ks configured")
    return [int(round(cfg.X ** l)) for l in cfg.lambdas]


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return format(v, ".17g")


def _terms(cfg: ExperimentConfig):
    pair = get_pair(cfg.pair)
    bound = int(math.floor(pair.phi.support_cap * cfg.X + 1e-9))
    cache_dir = resolve_cache_dir(cfg)
    table = load_or_build(bound, cache_dir, build=cfg.build_cache)
    terms = enumerate_weighted_terms(cfg.X, pair.phi.support_cap, table)
    del table
    return pair, terms


def compute_point(cfg: ExperimentConfig, pair, terms, K: int, constants, S0: float) -> dict:
    X = cfg.X
    if K < 2:
        raise DomainError(f"K={K} is below 2")
    lam = math.log(K) / math.log(X)
    if cfg.variance_method == "spectral":
        k_max = cfg.k_max or default_k_max(pair.f, K)
        S = hecke_sums(terms, pair.phi, X, k_max)
        est = variance_spectral(S, pair.f, K)
        if est.tail_bound > cfg.tol_spectral_tail * abs(est.value):
            warnings.warn(f"K={K}: spectral tail {est.tail_bound:.3e} exceeds "
                          f"{cfg.tol_spectral_tail:g} x variance", RuntimeWarning)
    else:
        est = variance_direct(terms, pair.f, K, pair.phi, X)
    f0 = pair.f.integral
    mean = f0 * S0 / K
    L = math.log(X)
    asym = X / K * constants.mean_const.value
    try:
        refined = predict_refined(pair, X, lam, constants, force=cfg.force) / (asym * L)
    except UnsupportedPointError as exc:
        warnings.warn(f"K={K}: {exc}", RuntimeWarning)
        refined = float("nan")
    rmt = (X / K) * predict_rmt(pair, X, K) / (asym * L)
    return {"lambda": lam, "K": int(K), "var": est.value, "var_tail": est.tail_bound,
            "mean": mean, "ratio_emp": est.value / (mean * L), "ratio_asym": est.value / (asym * L),
            "pred_rmt": rmt, "pred_refined": refined}


def run_points(cfg: ExperimentConfig, Ks: list[int]) -> dict:
    numba.set_num_threads(min(cfg.workers, numba.config.NUMBA_NUM_THREADS))
    t0 = time.perf_counter()
    pair, terms = _terms(cfg)
    w, _ = window_weights(terms, pair.phi, cfg.X)
    S0 = math.fsum(w)
    constants = build_constants(pair, cfg.constants_route, P_max=cfg.P_max)
    t1 = time.perf_counter()
    rows = [compute_point(cfg, pair, terms, K, constants, S0) for K in Ks]
    rows.sort(key=lambda r: r["lambda"])
    t2 = time.perf_counter()
    return {
        "record": {"version": __version__, "config": cfg.snapshot(), "X": cfg.X,
                   "term_count": int(w.size), "S0": S0, "K_phi": constants.K_phi.value,
                   "delta_phi": constants.delta.value, "rows": rows},
        "timing": {"setup_s": t1 - t0, "points_s": t2 - t1, "points": len(rows)},
    }


def write_rows_csv(rows: list[dict], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(CSV_COLUMNS)
        for r in rows:
            wr.writerow([_fmt(r[c]) for c in CSV_COLUMNS])


def read_rows_csv(path: str | os.PathLike) -> list[dict]:
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        if tuple(rd.fieldnames or ()) != CSV_COLUMNS:
            raise ConfigError(f"{path}: expected columns {','.join(CSV_COLUMNS)}")
        return [{k: (int(v) if k == "K" else float(v)) for k, v in row.items()} for row in rd]


def _write_json(obj, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _outdir(cfg) -> Path:
    p = Path(cfg.output_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_sieve(cfg: ExperimentConfig) -> Path:
    cache_dir = resolve_cache_dir(cfg)
    if cache_dir is None:
        raise ConfigError(f"sieve needs cache_dir (config) or {CACHE_ENV}")
    Path(cache_dir).mkdir(parents=True, exist_ok=True)
    bound = int(math.floor(get_pair(cfg.pair).phi.support_cap * cfg.X + 1e-9))
    path = cache_path(cache_dir, bound)
    cache_store(path, build_prime_table(bound))
    return path


def cmd_constants(cfg: ExperimentConfig) -> Path:
    out = _outdir(cfg)
    b = build_constants(get_pair(cfg.pair), cfg.constants_route, P_max=cfg.P_max)
    path = out / f"constants_{cfg.pair}.json"
    export_constants_json(b, path)
    export_constants_csv(b, out / f"constants_{cfg.pair}.csv")
    return path


def cmd_point(cfg: ExperimentConfig, lam: float | None = None, K: int | None = None) -> dict:
    if K is None:
        if lam is None:
            Ks = _points(cfg)[:1]
        else:
            Ks = [int(round(cfg.X ** lam))]
    else:
        Ks = [int(K)]
    res = run_points(cfg, Ks)
    out = _outdir(cfg)
    write_rows_csv(res["record"]["rows"], out / "point.csv")
    _write_json(res["record"], out / "point.json")
    return res["record"]["rows"][0]


def cmd_scan(cfg: ExperimentConfig) -> dict:
    res = run_points(cfg, _points(cfg))
    out = _outdir(cfg)
    write_rows_csv(res["record"]["rows"], out / "scan.csv")
    _write_json(res["record"], out / "scan.json")
    _write_json(res["timing"], out / "scan.timing.json")
    return res["record"]


def cmd_verify(cfg: ExperimentConfig) -> dict:
    from . import ratios_lab
    from .special_functions import dirichlet_L, stieltjes_gamma0, zeta

    checks = []

    def add(name, params, dev, tol):
        checks.append({"name": name, "params": params, "deviation": float(dev),
                       "tolerance": float(tol), "passed": bool(dev <= tol)})

    for r in ratios_lab.run_suite(tol_delta=cfg.tol_delta, tol_lemma=cfg.tol_lemma,
                                  tol_deriv=cfg.tol_derivative):
        add(r.name, r.params, r.deviation, r.tolerance)
    for name in ("indicator", "bump"):
        cc = c_phi_contour_check(get_pair(name))
        for k, (lhs, rhs) in cc.items():
            add(f"contour_{k}", {"pair": name, "direct": lhs, "line": rhs},
                abs(lhs - rhs) / abs(lhs), cfg.tol_contour)
    add("zeta_2", {}, abs(zeta(2.0).real - math.pi ** 2 / 6), 1e-12)
    add("L_1", {}, abs(dirichlet_L(1.0).real - math.pi / 4), 1e-12)
    add("gamma_0", {}, abs(stieltjes_gamma0() - 0.57721566490153286061), 1e-12)
    report = {"version": __version__, "checks": checks,
              "passed": all(c["passed"] for c in checks)}
    _write_json(report, _outdir(cfg) / "verify.json")
    return report


def cmd_plotdata(cfg: ExperimentConfig, record_path: str | os.PathLike | None = None) -> Path:
    out = _outdir(cfg)
    record_path = Path(record_path) if record_path else out / "scan.json"
    try:
        record = json.loads(record_path.read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read run record {record_path}: {exc}") from exc
    rows = record["rows"]
    X = record["X"]
    pair = get_pair(record["config"]["pair"])
    constants = build_constants(pair, record["config"].get("constants_route", "line"),
                                P_max=record["config"].get("P_max", 10_000))
    grid = [round(0.05 + 0.005 * i, 6) for i in range(int((1.5 - 0.05) / 0.005) + 1)]
    grid = [l for l in grid if min(abs(l - 0.5), abs(l - 1.0)) >= 0.02]
    curves = ratio_curve(pair, X, grid, "asymptotic", constants=constants)
    path = out / "plot.csv"
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["series", "lambda", "ratio"])
        for name in ("rmt", "refined"):
            c = curves[name]
            for l, r in zip(c.lam, c.ratio):
                wr.writerow([name, _fmt(l), _fmt(r)])
        for key in ("ratio_emp", "ratio_asym"):
            for r in rows:
                wr.writerow([key, _fmt(r["lambda"]), _fmt(r[key])])
    if cfg.svg:
        svg = render_svg(curves, rows, X, pair.name)
        (out / "plot.svg").write_text(svg)
    return path


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------

def _segments(lam, vals):
    # break polylines across the bifurcation gaps
    seg, out = [], []
    prev = None
    for l, v in zip(lam, vals):
        if prev is not None and l - prev > 0.011:
            out.append(seg)
            seg = []
        if math.isfinite(v):
            seg.append((l, v))
        prev = l
    out.append(seg)
    return [s for s in out if len(s) > 1]


def render_svg(curves, rows, X, pair_name, width=640, height=420) -> str:
    """Ratio versus lambda: rmt and refined curves, empirical points under both normalizations."""
    left, right, top, bottom = 60, 20, 30, 50
    x0, x1 = 0.0, 1.5
    vals = [v for c in curves.values() for v in c.ratio if math.isfinite(v)]
    vals += [r[k] for r in rows for k in ("ratio_emp", "ratio_asym") if math.isfinite(r[k])]
    y0, y1 = 0.0, max(1.2, math.ceil(max(vals, default=1.0) * 10) / 10)
    sx = lambda l: left + (l - x0) / (x1 - x0) * (width - left - right)
    sy = lambda v: height - bottom - (v - y0) / (y1 - y0) * (height - top - bottom)
    P = lambda v: f"{v:.2f}"
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2:.0f}" y="18" text-anchor="middle">Var / (mean log X) vs lambda, '
             f'X = {X}, {pair_name} pair</text>']
    # axes and ticks
    parts.append(f'<line x1="{P(sx(x0))}" y1="{P(sy(y0))}" x2="{P(sx(x1))}" y2="{P(sy(y0))}" stroke="black"/>')
    parts.append(f'<line x1="{P(sx(x0))}" y1="{P(sy(y0))}" x2="{P(sx(x0))}" y2="{P(sy(y1))}" stroke="black"/>')
    for i in range(7):
        l = x0 + 0.25 * i
        parts.append(f'<line x1="{P(sx(l))}" y1="{P(sy(y0))}" x2="{P(sx(l))}" y2="{P(sy(y0) + 5)}" stroke="black"/>')
        parts.append(f'<text x="{P(sx(l))}" y="{P(sy(y0) + 18)}" text-anchor="middle">{l:.2f}</text>')
    n_y = int(round((y1 - y0) / 0.2))
    for i in range(n_y + 1):
        v = y0 + 0.2 * i
        parts.append(f'<line x1="{P(sx(x0) - 5)}" y1="{P(sy(v))}" x2="{P(sx(x0))}" y2="{P(sy(v))}" stroke="black"/>')
        parts.append(f'<text x="{P(sx(x0) - 8)}" y="{P(sy(v) + 4)}" text-anchor="end">{v:.1f}</text>')
    parts.append(f'<text x="{width / 2:.0f}" y="{height - 12}" text-anchor="middle">lambda = log K / log X</text>')
    styles = {"rmt": ("#1f77b4", "4,3"), "refined": ("#d62728", "")}
    for name in ("rmt", "refined"):
        colour, dash = styles[name]
        c = curves[name]
        for seg in _segments(list(c.lam), list(c.ratio)):
            pts = " ".join(f"{P(sx(l))},{P(sy(v))}" for l, v in seg)
            da = f' stroke-dasharray="{dash}"' if dash else ""
            parts.append(f'<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="1.5"{da}/>')
    marks = {"ratio_asym": ("black", "asymptotic mean"), "ratio_emp": ("#2ca02c", "empirical mean")}
    for key, (colour, _) in marks.items():
        for r in rows:
            if math.isfinite(r[key]) and x0 <= r["lambda"] <= x1:
                parts.append(f'<circle cx="{P(sx(r["lambda"]))}" cy="{P(sy(r[key]))}" r="3" '
                             f'fill="{"none" if key == "ratio_emp" else colour}" stroke="{colour}"/>')
    legend = [("rmt", "#1f77b4", "RMT"), ("refined", "#d62728", "refined")]
    for i, (_, colour, label) in enumerate(legend):
        y = top + 14 * i + 10
        parts.append(f'<line x1="{width - 190}" y1="{y}" x2="{width - 170}" y2="{y}" stroke="{colour}" stroke-width="1.5"/>')
        parts.append(f'<text x="{width - 164}" y="{y + 4}">{label}</text>')
    for i, (key, (colour, label)) in enumerate(marks.items()):
        y = top + 14 * (i + 2) + 10
        fill = "none" if key == "ratio_emp" else colour
        parts.append(f'<circle cx="{width - 180}" cy="{y}" r="3" fill="{fill}" stroke="{colour}"/>')
        parts.append(f'<text x="{width - 164}" y="{y + 4}">data, {label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def _overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for p in pairs or []:
        if "=" not in p:
            raise ConfigError(f"--set expects key=value, got {p!r}")
        k, v = p.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gaussian-sectors",
                                 description="Variance of Gaussian prime angles in narrow sectors.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="key = value config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
    sub.add_parser("sieve", parents=[common], help="build the prime cache for X")
    sub.add_parser("constants", parents=[common], help="compute and export the constants bundle")
    p = sub.add_parser("point", parents=[common], help="one (X, K) point")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--K", type=int)
    sub.add_parser("scan", parents=[common], help="all configured lambdas or Ks")
    sub.add_parser("verify", parents=[common], help="ratios-recipe and constant checks")
    p = sub.add_parser("plotdata", parents=[common], help="plot CSV and SVG from a scan record")
    p.add_argument("--record", help="scan.json (default: <output_dir>/scan.json)")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides(args.set))
        if args.command == "sieve":
            print(cmd_sieve(cfg))
        elif args.command == "constants":
            print(cmd_constants(cfg))
        elif args.command == "point":
            row = cmd_point(cfg, args.lam, args.K)
            print(",".join(CSV_COLUMNS))
            print(",".join(_fmt(row[c]) for c in CSV_COLUMNS))
        elif args.command == "scan":
            rec = cmd_scan(cfg)
            print(f"{len(rec['rows'])} points -> {Path(cfg.output_dir) / 'scan.csv'}")
        elif args.command == "verify":
            rep = cmd_verify(cfg)
            for c in rep["checks"]:
                print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']} deviation={c['deviation']:.3e}")
            if not rep["passed"]:
                return NumericError.exit_code
        elif args.command == "plotdata":
            print(cmd_plotdata(cfg, args.record))
    except SectorError as exc:
        print(f"gaussian-sectors: {exc}", file=sys.stderr)
        return exc.exit_code
    except MemoryError as exc:
        print(f"gaussian-sectors: out of memory: {exc}", file=sys.stderr)
        return ResourceError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
