import json
import math
import xml.etree.ElementTree as ET

import pytest

from gaussian_sectors.errors import ConfigError
from gaussian_sectors.runner import (CACHE_ENV, CSV_COLUMNS, SCHEMA, cmd_scan, load_config, main,
                                     parse_config, read_rows_csv, resolve_cache_dir)


def cfg_text(**kw):
    lines = [f"schema = {SCHEMA}"] + [f"{k} = {v}" for k, v in kw.items()]
    return "\n".join(lines) + "\n"


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(cfg_text(X=20000, lambdas="0.3, 0.5, 0.7, 1.2", pair="indicator",
                          output_dir=tmp_path / "out", cache_dir=tmp_path / "cache"))
    return p


def test_parse_defaults_and_types():
    cfg = parse_config(cfg_text(X="1e5", lambdas="0.25 0.75", force="yes") + "# comment\n")
    assert cfg.X == 100_000 and cfg.lambdas == [0.25, 0.75] and cfg.force is True
    assert cfg.pair == "indicator" and cfg.variance_method == "direct"


def test_schema_required():
    with pytest.raises(ConfigError, match="schema"):
        parse_config("X = 1000\n")
    with pytest.raises(ConfigError, match="unsupported"):
        parse_config("schema = gaussian-sectors/9\n")


@pytest.mark.parametrize("extra", [{"lambda": "0.5"}, {"X": "many"}, {"pair": "gaussian"},
                                   {"variance_method": "fast"}, {"X": 10},
                                   {"lambdas": "0.3", "Ks": "10"}, {"tol_delta": "-1"},
                                   {"workers": 0}, {"Ks": "1"}])
def test_bad_config(extra):
    with pytest.raises(ConfigError):
        parse_config(cfg_text(**extra))


def test_overrides_win():
    cfg = parse_config(cfg_text(X=1000), {"X": "5000", "pair": "bump"})
    assert cfg.X == 5000 and cfg.pair == "bump"


def test_cache_env_override(monkeypatch, tmp_path):
    cfg = parse_config(cfg_text(cache_dir="/nowhere"))
    monkeypatch.setenv(CACHE_ENV, str(tmp_path))
    assert resolve_cache_dir(cfg) == str(tmp_path)
    monkeypatch.delenv(CACHE_ENV)
    assert resolve_cache_dir(cfg) == "/nowhere"


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg")


def test_scan_outputs_and_rerun_identical(small_cfg, tmp_path):
    with pytest.warns(RuntimeWarning, match="bifurcation"):
        assert main(["scan", "-c", str(small_cfg)]) == 0
    out = tmp_path / "out"
    csv1, json1 = (out / "scan.csv").read_bytes(), (out / "scan.json").read_bytes()
    rows = read_rows_csv(out / "scan.csv")
    assert (out / "scan.csv").read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
    assert [r["K"] for r in rows] == [round(20000 ** l) for l in (0.3, 0.5, 0.7, 1.2)]
    half = rows[1]
    assert math.isnan(half["pred_refined"]) and math.isfinite(half["ratio_emp"])
    assert all(abs(r["lambda"] - l) < 0.01 for r, l in zip(rows, (0.3, 0.5, 0.7, 1.2)))
    assert json.loads((out / "scan.timing.json").read_text())["points"] == 4
    with pytest.warns(RuntimeWarning):
        main(["scan", "-c", str(small_cfg)])
    assert (out / "scan.csv").read_bytes() == csv1
    assert (out / "scan.json").read_bytes() == json1


def test_spectral_and_direct_rows_agree(tmp_path):
    base = dict(X=10000, Ks="8, 32", pair="bump", output_dir=tmp_path / "a")
    d = cmd_scan(parse_config(cfg_text(**base)))
    spectral = {**base, "variance_method": "spectral", "tol_spectral_tail": 1e-2,
                "output_dir": tmp_path / "b"}
    s = cmd_scan(parse_config(cfg_text(**spectral)))
    for a, b in zip(d["rows"], s["rows"]):
        assert abs(a["var"] - b["var"]) <= b["var_tail"] + 1e-8 * a["var"]


def test_point_and_plot(small_cfg, tmp_path, capsys):
    assert main(["point", "-c", str(small_cfg), "--K", "300000"]) == 0
    printed = capsys.readouterr().out.splitlines()
    assert printed[0] == ",".join(CSV_COLUMNS) and printed[1].split(",")[1] == "300000"
    with pytest.warns(RuntimeWarning):
        main(["scan", "-c", str(small_cfg)])
    assert main(["plotdata", "-c", str(small_cfg)]) == 0
    svg = ET.parse(tmp_path / "out" / "plot.svg").getroot()
    assert svg.tag.endswith("svg")
    assert len([e for e in svg.iter() if e.tag.endswith("circle")]) >= 8
    assert "refined" in (tmp_path / "out" / "plot.csv").read_text()


def test_sieve_command(small_cfg, tmp_path):
    assert main(["sieve", "-c", str(small_cfg)]) == 0
    assert (tmp_path / "cache" / "primes_20000.bin").exists()


def test_constants_command(tmp_path):
    assert main(["constants", "--set", f"output_dir={tmp_path}", "--set", "pair=bump"]) == 0
    d = json.loads((tmp_path / "constants_bump.json").read_text())
    assert d["pair"] == "bump"


def test_exit_codes(tmp_path, capsys):
    assert main(["scan", "--set", "X=10"]) == 2
    assert main(["scan", "--set", "nonsense"]) == 2
    assert main(["scan", "--set", f"cache_dir={tmp_path}", "--set", "build_cache=false",
                 "--set", "lambdas=0.3", "--set", f"output_dir={tmp_path}"]) == 4
    assert "building was not permitted" in capsys.readouterr().err


def test_verify_pass_and_fail(tmp_path):
    assert main(["verify", "--set", f"output_dir={tmp_path}"]) == 0
    rep = json.loads((tmp_path / "verify.json").read_text())
    assert rep["passed"] and len(rep["checks"]) >= 20
    assert main(["verify", "--set", f"output_dir={tmp_path}", "--set", "tol_lemma=1e-30"]) == 3


def test_K_list_and_lambda_list_agree(tmp_path):
    X = 20000
    lams = [0.3, 0.7, 1.2]
    a = cmd_scan(parse_config(cfg_text(X=X, lambdas=", ".join(map(str, lams)), output_dir=tmp_path / "a")))
    Ks = ", ".join(str(round(X ** l)) for l in lams)
    b = cmd_scan(parse_config(cfg_text(X=X, Ks=Ks, output_dir=tmp_path / "b")))
    assert a["rows"] == b["rows"]
    assert (tmp_path / "a" / "scan.csv").read_bytes() == (tmp_path / "b" / "scan.csv").read_bytes()
