import csv
import json
import math
from pathlib import Path

import pytest

from spiked_lss import ConfigError, parse_config, resolve_spikes
from spiked_lss.cli import kernel_filename, main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

MINIMAL = {"p": 50, "n": 200, "bulk": [{"value": 1.0, "weight": 1.0}], "kernels": ["x"]}


def write(tmp_path, cfg, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


# --- parse_config -----------------------------------------------------------

def test_minimal_defaults():
    cfg = parse_config(MINIMAL)
    assert (cfg.margin, cfg.nodes_single, cfg.nodes_double) == (0.1, 1024, 256)
    assert cfg.reps == 3000
    assert cfg.entry_dist == "gaussian"
    assert cfg.spikes == ()


def test_round_trip(tmp_path):
    cfg = parse_config(CONFIGS / "spectrum1.json")
    again = parse_config(write(tmp_path, cfg.to_dict()))
    assert again == cfg
    assert parse_config(cfg.to_json()) == cfg


def test_spectrum3_fixture_resolves():
    cfg = parse_config(CONFIGS / "spectrum3.json")
    groups = resolve_spikes(cfg.spectrum)
    expected = [3000.0, math.sqrt(3000), 3000 ** (1 / 3)]
    assert [m for _, m in groups] == [6, 6, 6]
    for (v, _), e in zip(groups, expected):
        assert v == pytest.approx(e, rel=1e-14)


def test_all_shipped_configs_parse():
    for path in CONFIGS.glob("*.json"):
        parse_config(path)


@pytest.mark.parametrize(
    "patch,field",
    [
        ({"bulk": [{"value": 1.0, "weight": -1.0}]}, "bulk[0].weight"),
        ({"bulk": [{"value": 1.0, "weight": 0.5}]}, "bulk"),
        ({"kernels": ["sin"]}, "kernels[0]"),
        ({"p": 0}, "p"),
        ({"simulation": {"reps": 0}}, "simulation.reps"),
        ({"simulation": {"entry_dist": "cauchy"}}, "simulation.entry_dist"),
        ({"contour": {"nodes_single": 101}}, "contour.nodes_single"),
        ({"spikes": [{"coeff": 1, "exponent": "1/x"}]}, "spikes[0].exponent"),
        ({"extra": 1}, "extra"),
    ],
)
def test_errors_name_the_field(patch, field):
    with pytest.raises(ConfigError) as err:
        parse_config({**MINIMAL, **patch})
    assert str(err.value).startswith(field)


def test_missing_required_field():
    with pytest.raises(ConfigError, match="^n:"):
        parse_config({"p": 10, "bulk": [{"value": 1, "weight": 1}]})


def test_bulk_counts_must_match():
    with pytest.raises(ConfigError, match="p - M"):
        parse_config({"p": 10, "n": 100, "bulk": [{"value": 1, "count": 8}], "spikes": [{"coeff": 0, "offset": 5}]})


def test_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        parse_config(str(path))


def test_fraction_exponent():
    cfg = parse_config({**MINIMAL, "spikes": [{"coeff": 1, "exponent": "1/4", "offset": -2, "multiplicity": 2}]})
    assert cfg.spikes == ((1.0, 0.25, -2.0, 2),)


# --- CLI --------------------------------------------------------------------

def test_kernel_filename():
    assert kernel_filename("poly:1,0,3") == "poly_1_0_3"
    assert kernel_filename("x^2") == "x_2"


def test_cli_theory(tmp_path, capsys):
    out = tmp_path / "theory"
    code = main(["theory", "--config", str(CONFIGS / "spectrum3.json"), "--out", str(out), "--nodes", "256"])
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["seed"] == 20240601
    assert rep["config"]["resolved_spikes"][0]["value"] == pytest.approx(3000.0)
    assert abs(rep["prediction"]["mean"][0]) < 1e-8
    assert rep["prediction"]["cov"][0][0] > 0
    assert rep["validation"]["ok"]


def test_cli_simulate_writes_files(tmp_path):
    out = tmp_path / "sim"
    code = main(["simulate", "--config", str(CONFIGS / "spectrum2.json"), "--out", str(out),
                 "--reps", "20", "--kernels", "x,log", "--nodes", "256"])
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["reps"] == 20 and rep["seed"] == 20240601
    assert len(rep["samples"]["x"]) == 20
    for name in ("x", "log"):
        with (out / f"hist_{name}.csv").open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["bin_left", "bin_right", "count", "density"]
        assert len(rows) == 51


def test_cli_simulate_deterministic(tmp_path):
    reports = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        main(["simulate", "--config", str(CONFIGS / "spectrum1.json"), "--out", str(out), "--reps", "10", "--nodes", "256"])
        rep = json.loads((out / "report.json").read_text())
        rep.pop("runtime_s")
        rep["config"]["output"].pop("dir")
        reports.append(rep)
    assert reports[0] == reports[1]


def test_cli_compare_exit_codes(tmp_path):
    cfg = json.loads((CONFIGS / "spectrum2.json").read_text())
    # tolerances sized for 200 reps: the sd of a sample variance is about 0.1 there
    ok = write(tmp_path, {**cfg, "compare": {"mean_tol": 0.3, "var_tol": 0.45}}, "ok.json")
    assert main(["compare", "--config", ok, "--out", str(tmp_path / "c1"), "--reps", "200", "--nodes", "256"]) == 0
    strict = write(tmp_path, {**cfg, "compare": {"mean_tol": 1e-9, "var_tol": 1e-9}}, "strict.json")
    assert main(["compare", "--config", strict, "--out", str(tmp_path / "c2"), "--reps", "20", "--nodes", "256"]) == 3
    rep = json.loads((tmp_path / "c2" / "report.json").read_text())
    assert rep["passed"] is False and rep["comparison"][0]["pass"] is False


def test_cli_config_error_exit(tmp_path, capsys):
    bad = write(tmp_path, {**MINIMAL, "bulk": [{"value": 1.0, "weight": -1.0}]})
    assert main(["theory", "--config", bad, "--out", str(tmp_path)]) == 1
    assert "bulk[0].weight" in capsys.readouterr().err
    assert main(["theory", "--config", str(tmp_path / "missing.json")]) == 1
    assert main(["theory", "--config", write(tmp_path, MINIMAL, "m.json"), "--kernels", "poly:1,2"]) == 1


def test_cli_numeric_error_exit(tmp_path):
    # p > n puts exact zeros in the spectrum, where log is undefined
    cfg = {"p": 60, "n": 30, "bulk": [{"value": 1.0, "weight": 1.0}], "kernels": ["log"]}
    assert main(["theory", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2


def test_cli_density_marchenko_pastur(tmp_path):
    cfg = {"p": 250, "n": 1000, "bulk": [{"value": 1.0, "weight": 1.0}], "kernels": ["x"]}
    out = tmp_path / "dens"
    assert main(["density", "--config", write(tmp_path, cfg), "--out", str(out), "--points", "401"]) == 0
    with (out / "density.csv").open() as fh:
        rows = [tuple(map(float, r)) for r in list(csv.reader(fh))[1:]]
    assert len(rows) == 401
    inside = [x for x, d in rows if d > 0]
    assert min(inside) >= 0.25 - 1e-12 and max(inside) <= 2.25 + 1e-12
    assert min(inside) < 0.27 and max(inside) > 2.23
    for x, d in rows:
        if 0.3 < x < 2.2:
            mp = math.sqrt((2.25 - x) * (x - 0.25)) / (2 * math.pi * 0.25 * x)
            assert d == pytest.approx(mp, rel=1e-8)
