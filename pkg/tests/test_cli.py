import json
import math

import numpy as np
import pytest

from fatdisc import __version__
from fatdisc.cli import main
from fatdisc.report import RunReport, canonical_json, csv_text, to_plain


def run(tmp_path, *argv):
    out = tmp_path / "out"
    code = main([*argv, "--out", str(out), "--quiet"])
    return code, out


def report(out):
    return json.loads((out / "report.json").read_text())


# ---------------------------------------------------------------------------
# check


def test_check_model_passes(tmp_path, capsys):
    code, out = run(tmp_path, "check", "--model", "holomorphic_contact", "--points", "40")
    assert code == 0
    doc = report(out)
    assert doc["version"] == __version__
    assert doc["config"]["seed"] == 0 and doc["config"]["points"] == 40
    assert {"report.json", "report.txt", "metadata.json", "samples.csv"} <= {p.name for p in out.iterdir()}


def test_check_integrable_fails_on_fatness(tmp_path):
    code, out = run(tmp_path, "check", "--model", "integrable", "--points", "10")
    assert code == 1
    assert "fatness" in json.dumps(report(out)["results"])


def test_check_type_two_four_cites_divisibility(tmp_path):
    code, out = run(tmp_path, "check", "--type", "2", "4", "--points", "10")
    assert code == 1
    assert "divisible by 4" in json.dumps(report(out)["results"])


def test_parse_errors_exit_two_with_location(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("model = holomorphic_contact\nresolution = many\n")
    assert main(["check", "--config", str(cfg)]) == 2
    assert f"{cfg}:2" in capsys.readouterr().err
    assert main(["check", "--set", "seed"]) == 2
    assert "--set seed" in capsys.readouterr().err
    assert main(["check", "--resolution", "1"]) == 2
    assert "resolution" in capsys.readouterr().err
    cfg.write_text("alpha1 = dz1 + sqrt(x1)*dx1\nalpha2 = dz2\n")
    assert main(["check", "--config", str(cfg)]) == 2
    assert f"{cfg}:1" in capsys.readouterr().err


def test_unknown_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 2


def test_expression_config_runs_check(tmp_path):
    cfg = tmp_path / "model.cfg"
    cfg.write_text("alpha1 = dz1 - y1*dx1 + y2*dx2\nalpha2 = dz2 - y2*dx1 - y1*dx2\n"
                   "Z1 = [0, 0, 0, 0, 1, 0]\nZ2 = [0, 0, 0, 0, 0, 1]\npoints = 20\n")
    code, out = run(tmp_path, "check", "--config", str(cfg))
    assert code == 0
    assert report(out)["config"]["alpha1"] == "dz1 - y1*dx1 + y2*dx2"


# ---------------------------------------------------------------------------
# the other commands


def test_frames_writes_matrices(tmp_path):
    code, out = run(tmp_path, "frames", "--point", "0.1", "0.2", "0.3", "0.4", "0.5", "0.6")
    assert code == 0
    res = report(out)["results"]
    A = np.array(res["A"])
    assert np.allclose(A @ A, -np.eye(4), atol=1e-10)


def test_fixtures_round_trip(tmp_path):
    from fatdisc.mesh import load_map_json

    code, out = run(tmp_path, "fixtures", "--fixture", "legendrian", "--resolution", "8")
    assert code == 0
    f = load_map_json(out / "map.json")
    assert f.values.shape == (f.mesh.n_nodes, 6)


def test_solve_linearized_zero_and_degenerate(tmp_path):
    code, out = run(tmp_path, "solve-linearized", "--data", "zero", "--resolution", "8")
    assert code == 0
    code, out = run(tmp_path, "solve-linearized", "--fixture", "degenerate", "--resolution", "8")
    assert code == 1
    assert (out / "discriminant.png").exists() and (out / "admissibility.csv").exists()


def test_invert_z1_bump(tmp_path):
    code, out = run(tmp_path, "invert", "--amplitude", "1e-3", "--resolution", "16")
    assert code == 0
    assert report(out)["results"]["reduction"] >= 1e3
    assert (out / "newton.csv").exists()


def test_invert_stagnation_is_exit_one_with_log(tmp_path):
    code, out = run(tmp_path, "invert", "--amplitude", "1.0", "--component", "x1", "--resolution", "8",
                    "--set", "damping=1.0", "--set", "max_iters=3")
    assert code == 1


def test_homotopy_horizontal_input(tmp_path):
    code, out = run(tmp_path, "homotopy", "--resolution", "16", "--t-samples", "3")
    assert code == 0
    rows = (out / "family_steps.csv").read_text().splitlines()
    assert len(rows) == 4


# ---------------------------------------------------------------------------
# reports


def test_reports_are_byte_identical_across_runs(tmp_path):
    argv = ["solve-linearized", "--resolutions", "8", "16", "--quiet"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main([*argv, "--out", str(a)]) == 0
    assert main([*argv, "--out", str(b)]) == 0
    for name in ("report.json", "report.txt", "convergence.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    meta = json.loads((a / "metadata.json").read_text())
    assert meta["version"] == __version__ and "timestamp" in meta
    assert "timestamp" not in (a / "report.json").read_text()


def test_report_helpers():
    assert to_plain({"x": np.float64(math.nan), "y": (np.int64(2), math.inf), "z": 1 + 2j}) == {
        "x": "nan", "y": [2, "inf"], "z": [1.0, 2.0]}
    assert canonical_json({"b": 1, "a": [0.1]}) == '{\n  "a": [\n    0.1\n  ],\n  "b": 1\n}\n'
    assert csv_text(["h", "e"], [[0.1, np.float64(1 / 3)]]) == "h,e\n0.1,0.3333333333333333\n"
    rep = RunReport("check", {"seed": 1}, verdict="ok")
    assert rep.document()["version"] == __version__
    assert rep.text().startswith(f"fatdisc {__version__}  check")
