import json

import pytest

from nsverify import cli

ZERO = """mesh_n: 2
tau: 0.1
T_final: 0.2
nu: 1
initial_data: {id: zero}
forcing: {mode: zero, id: zero}
"""

TINY = """mesh_n: 2
tau: 0.1
T_final: 0.2
nu: 1.0
initial_data: {id: taylor_green, amplitude: 1.0e-4}
forcing: {mode: zero}
"""

DIVERGING = """mesh_n: 2
tau: 1.0
T_final: 1.0
nu: 0.001
initial_data:
  id: custom-coefficients
  modes:
    - {k: [1, 0, 0], amplitude: [0, 10, 3], phase: 0.3}
    - {k: [0, 1, 1], amplitude: [7, 4, -4], phase: 1.1}
    - {k: [1, 1, 0], amplitude: [5, -5, 6], phase: 2.0}
"""


def _write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_zero_config_certifies(tmp_path):
    out = tmp_path / "r.json"
    assert cli.main(["verify-ns", "--config", _write(tmp_path, ZERO), "--out", str(out),
                     "--csv", str(tmp_path / "csv")]) == 0
    rep = json.loads(out.read_text())
    assert rep["certifiedT"] == pytest.approx(0.2)
    assert rep["constants"]["c_e1"] == 24.0 and len(rep["configHash"]) == 64
    assert {"residual_ledger.csv", "nodes.csv", "horizons.csv"} <= {p.name for p in (tmp_path / "csv").iterdir()}


def test_tiny_config_is_deterministic(tmp_path):
    cfg = _write(tmp_path, TINY)
    codes, texts = [], []
    for k in range(2):
        out = tmp_path / f"r{k}.json"
        codes.append(cli.main(["verify-ns", "--config", cfg, "--out", str(out)]))
        texts.append(out.read_bytes())
    assert codes[0] == codes[1] == 2
    assert texts[0] == texts[1]
    rep = json.loads(texts[0])
    assert rep["certifiedT"] is None and rep["failingBreakdown"]["dominantTerm"] in ("B1", "B2")


def test_step_failure_exit_code(tmp_path, capsys):
    assert cli.main(["verify-ns", "--config", _write(tmp_path, DIVERGING)]) == 1
    assert "step 1" in capsys.readouterr().err


@pytest.mark.parametrize("text, line, path", [
    ("mesh_n: 2\ntau: 0.1\nT_final: 0.25\nnu: 1\ninitial_data: {id: zero}\n", 3, "T_final"),
    ("mesh_n: 1\ntau: 0.1\nT_final: 0.2\nnu: 1\ninitial_data: {id: zero}\n", 1, "mesh_n"),
    ("mesh_n: 2\ntau: 0.1\nT_final: 0.2\nnu: -1\ninitial_data: {id: zero}\n", 4, "nu"),
    ("mesh_n: 2\ntau: 0.1\nT_final: 0.2\nnu: 1\ninitial_data:\n  id: blah\n", 6, "initial_data.id"),
    ("mesh_n: 2\ntau: 0.1\nT_final: 0.2\nnu: 1\ninitial_data: {id: zero}\nforcing:\n  mode: affine\n"
     "  id: modulated_taylor_green\n", 7, "forcing.mode"),
    ("mesh_n: 2\ntau: 0.1\nT_final: 0.2\nnu: 1\ninitial_data: {id: zero}\nconstants:\n  c_bogus: 3\n",
     7, "constants.c_bogus"),
    ("mesh_n: 2\ntau: 0.1\nT_final: 0.2\nnu: 1\ninitial_data: {id: zero}\nextra: 1\n", 6, "extra"),
])
def test_line_precise_errors(tmp_path, capsys, text, line, path):
    cfg = _write(tmp_path, text)
    assert cli.main(["verify-ns", "--config", cfg]) == 1
    err = capsys.readouterr().err
    assert f"{cfg}:{line}: {path}:" in err


def test_json_config_accepted(tmp_path):
    cfg = _write(tmp_path, json.dumps({"mesh_n": 2, "tau": 0.1, "T_final": 0.1, "nu": 1,
                                       "initial_data": {"id": "zero"}}), "cfg.json")
    assert cli.main(["verify-ns", "--config", cfg, "--out", str(tmp_path / "r.json")]) == 0


def test_missing_file_and_bad_usage(tmp_path):
    assert cli.main(["verify-ns", "--config", str(tmp_path / "nope.yaml")]) == 1
    assert cli.main(["bogus"]) == 1


def test_estimate_only(tmp_path):
    out = tmp_path / "e.json"
    assert cli.main(["estimate-only", "--config", _write(tmp_path, TINY), "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert "configHash" in data


@pytest.mark.parametrize("args, code, certified", [
    (["--y0", "0", "--tau", "0.1", "--steps", "10"], 0, 1.0),
    (["--y0", "1", "--tau", "0.1", "--T", "0.9"], 2, None),
    (["--y0", "0.1", "--tau", "0.01", "--T", "0.5"], 0, 0.5),
])
def test_verify_ode(tmp_path, args, code, certified):
    out = tmp_path / "o.json"
    assert cli.main(["verify-ode", *args, "--out", str(out)]) == code
    data = json.loads(out.read_text())
    assert data["certifiedT"] == (None if certified is None else pytest.approx(certified))


def test_verify_ode_validation():
    assert cli.main(["verify-ode", "--y0", "0.1", "--tau", "0.1", "--T", "0.25"]) == 1
    assert cli.main(["verify-ode", "--y0", "0.1", "--tau", "0.1"]) == 1


def test_dump_mesh(tmp_path):
    out = tmp_path / "m.json"
    assert cli.main(["dump-mesh", "--n", "2", "--out", str(out)]) == 0
    assert len(json.loads(out.read_text())["cells"]) == 48
    assert cli.main(["dump-mesh", "--n", "1"]) == 1


def test_config_hash_is_canonical():
    a = cli.parse_config(ZERO)
    b = cli.parse_config("nu: 1.0\n" + ZERO.replace("nu: 1\n", ""))
    assert a.hash() == b.hash()
