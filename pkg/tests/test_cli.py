import csv
import json
import xml.etree.ElementTree as ET

import pytest

from spwell.cli import CSV_COLUMNS, ConfigError, ExperimentConfig, main

SMALL = "grid.n = 400\n"


def _write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _assert_self_contained_svg(path):
    text = path.read_text(encoding="utf-8")
    root = ET.fromstring(text.split("?>", 1)[1].split(">", 1)[1] if "<!DOCTYPE" in text else text)
    assert root.tag.endswith("svg") and root.get("version") == "1.1"
    for el in root.iter():
        for key, val in el.attrib.items():
            if key.endswith("href"):
                assert val.startswith("#"), val
    assert "<image" not in text


# -- configuration -------------------------------------------------------------


def test_config_defaults_and_fractions():
    cfg = ExperimentConfig.from_text("p = 8/3\nlambda = 100, 400\nmu = 0.05,0.1\n")
    assert cfg.p == pytest.approx(8 / 3)
    assert cfg.lambdas == (100.0, 400.0) and cfg.mus == (0.05, 0.1)
    assert cfg.mu_scale == "fraction" and cfg.grid_kind == "radial"
    assert ExperimentConfig.default().n == 2000


@pytest.mark.parametrize("text", ["colour = blue\n", "p = 7\n", "lambda =\n", "lambda = -1\n", "mu.scale = relative\n",
                                  "grid.n = ten\n", "grid.kind = sphere\n", "just some words\n", "seed = -3\n"])
def test_config_rejects(text):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text(text)


@pytest.mark.parametrize("text", ["colour = blue\n", "not a key value line\n", "p = 1.5\n"])
def test_bad_config_exit_64(tmp_path, text, capsys):
    assert main(["solve", "--config", _write(tmp_path, text), "--out", str(tmp_path / "o")]) == 64
    assert "config error" in capsys.readouterr().err


def test_bad_arguments_exit_64(tmp_path):
    assert main(["explode"]) == 64
    assert main(["solve", "--config", str(tmp_path / "missing.cfg")]) == 64
    assert main(["solve", "--jobs", "0", "--config", _write(tmp_path, SMALL)]) == 64


def test_solve_needs_single_point(tmp_path):
    cfg = _write(tmp_path, SMALL + "lambda = 100, 200\n")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 64


# -- solve ------------------------------------------------------------------------


def test_solve_existence(tmp_path, capsys):
    out = tmp_path / "ok"
    cfg = _write(tmp_path, SMALL + "lambda = 200\nmu = 0.1\n")
    assert main(["solve", "--config", cfg, "--out", str(out)]) == 0
    rec = json.loads((out / "report.json").read_text())
    assert rec["outcome"] == "Converged"
    assert rec["norm_lambda"] <= rec["T"] and rec["within_T"] is True
    assert rec["residual_max"] <= 1e-8
    assert rec["moser"]["satisfied"] is True
    rows = list(csv.reader((out / "profile.csv").open()))
    assert rows[0] == ["r", "u", "phi_u"] and len(rows) == 401
    _assert_self_contained_svg(out / "profile.svg")
    assert json.loads(capsys.readouterr().out)["outcome"] == "Converged"


def test_solve_nonexistence_exit_2(tmp_path):
    cfg = _write(tmp_path, SMALL + "p = 3\nlambda = 10\nmu = 0.3\nmu.scale = absolute\nsolver.max_outer = 1500\n")
    out = tmp_path / "ne"
    assert main(["solve", "--config", cfg, "--out", str(out)]) == 2
    assert json.loads((out / "report.json").read_text())["outcome"] == "CollapsedToZero"


# -- sweep ------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def sweep_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("sweep")
    cfg = tmp / "s.cfg"
    cfg.write_text("grid.n = 300\nlambda = 100, 200, 400\nmu = 0, 0.05, 0.1\nsweep.limit = none\n")
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp / "a")]) == 0
    return tmp


def test_sweep_rows_lambda_major(sweep_dir):
    rows = list(csv.DictReader((sweep_dir / "a" / "sweep.csv").open()))
    assert tuple(rows[0].keys()) == CSV_COLUMNS
    assert len(rows) == 9
    order = [(float(r["lambda"]), float(r["mu"])) for r in rows]
    assert order == sorted(order)
    assert [float(r["lambda"]) for r in rows] == [100.0] * 3 + [200.0] * 3 + [400.0] * 3
    for r in rows:
        if r["outcome"] == "Converged":
            assert all(r[c] != "" for c in CSV_COLUMNS if c != "dist_to_limit")
            assert r["dist_to_limit"] == ""
        else:
            assert all(r[c] == "" for c in CSV_COLUMNS[4:])


def test_sweep_mass_trend(sweep_dir):
    rows = list(csv.DictReader((sweep_dir / "a" / "sweep.csv").open()))
    for mu in {r["mu"] for r in rows}:
        masses = [float(r["mass_in_omega"]) for r in rows if r["mu"] == mu and r["outcome"] == "Converged"]
        assert masses == sorted(masses)


def test_sweep_outputs_consistent(sweep_dir):
    lines = (sweep_dir / "a" / "sweep.jsonl").read_text().splitlines()
    assert len(lines) == 9
    recs = [json.loads(s) for s in lines]
    assert all(rec["lambda"] > 0 for rec in recs)
    _assert_self_contained_svg(sweep_dir / "a" / "sweep.svg")


def test_sweep_rerun_byte_identical(sweep_dir):
    cfg = sweep_dir / "s.cfg"
    assert main(["sweep", "--config", str(cfg), "--out", str(sweep_dir / "b"), "--jobs", "2"]) == 0
    for name in ("sweep.csv", "sweep.jsonl", "sweep.svg"):
        assert (sweep_dir / "a" / name).read_bytes() == (sweep_dir / "b" / name).read_bytes()


# -- verify -----------------------------------------------------------------------------


def test_verify_subset_passes(tmp_path):
    cfg = _write(tmp_path, "verify.criteria = 1,3\n")
    assert main(["verify", "--config", cfg, "--out", str(tmp_path / "v")]) == 0
    recs = [json.loads(s) for s in (tmp_path / "v" / "verify.jsonl").read_text().splitlines()]
    assert [r["criterion"] for r in recs] == [1, 3]
    assert all(r["status"] == "pass" for r in recs)


def test_verify_kernel_perturbation_fails(tmp_path):
    cfg = _write(tmp_path, "verify.criteria = 1\nverify.kernel_origin_scale = 1.5\n")
    assert main(["verify", "--config", cfg, "--out", str(tmp_path / "v")]) == 1
    rec = json.loads((tmp_path / "v" / "verify.jsonl").read_text())
    assert rec["status"] == "fail"


def test_verify_mu_above_threshold_inapplicable(tmp_path):
    cfg = _write(tmp_path, "verify.criteria = 4\nverify.mu_fraction = 1.5\n")
    assert main(["verify", "--config", cfg, "--out", str(tmp_path / "v")]) == 0
    rec = json.loads((tmp_path / "v" / "verify.jsonl").read_text())
    assert rec["status"] == "inapplicable"
