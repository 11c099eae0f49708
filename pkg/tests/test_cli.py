import csv
import json
import os

import pytest

from eqindex.cli import SUBCOMMANDS, default_scenario, main
from eqindex.runner import CSV_COLUMNS


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


QUICK = {
    "index": "s2_rotation_index.yaml",
    "cm": "torus_cm.yaml",
    "jlo-limit": "torus_jlo_limit.yaml",
    "heat-trace": "sphere_heat_trace.yaml",
    "volterra-check": "volterra_check.yaml",
}


@pytest.mark.parametrize("cmd", sorted(QUICK))
def test_bundled_scenarios_pass(cmd, tmp_path):
    out = tmp_path / "out"
    assert main([cmd, "--out", str(out)]) == 0
    name = os.path.splitext(QUICK[cmd])[0]
    doc = json.loads((out / f"{name}.json").read_text())
    assert doc["schema_version"] == 1
    assert all(c["pass"] for c in doc["checks"])
    with open(out / f"{name}.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == CSV_COLUMNS
    assert len(rows) > 1


def test_every_subcommand_has_a_default():
    for kind, fname in SUBCOMMANDS.values():
        assert os.path.exists(default_scenario(fname))


def test_bad_t_grid_exits_2(tmp_path, capsys):
    cfg = _write(tmp_path, "bad.yaml", "kind: heat_trace\nname: bad\nmodel: {type: sphere, lmax: 3, monopole_k: 0}\n"
                                       "t_grid: [0.1, -0.2, 0.3]\n")
    assert main(["heat-trace", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "t_grid[1]" in capsys.readouterr().err


def test_yaml_syntax_error_reports_position(tmp_path, capsys):
    cfg = _write(tmp_path, "broken.yaml", "kind: cm_cocycle\nq: [1, 2\n")
    assert main(["cm", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "line" in capsys.readouterr().err


def test_kind_mismatch_exits_2(tmp_path, capsys):
    assert main(["cm", "--config", default_scenario("sphere_heat_trace.yaml"), "--out", str(tmp_path)]) == 2
    assert "kind" in capsys.readouterr().err


def test_reports_are_deterministic(tmp_path):
    cfgs = [default_scenario("torus_cm.yaml"), default_scenario("torus_cm_translated.yaml")]
    args = sum((["--config", c] for c in cfgs), [])
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["cm", *args, "--out", str(a)]) == 0
    assert main(["cm", *args, "--out", str(b), "--threads", "2"]) == 0
    for f in sorted(os.listdir(a)):
        assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_verify_filter(tmp_path, capsys):
    assert main(["verify", "--filter", "cm", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "criterion 10" in out and "criterion 11" in out and "criterion  1 " not in out
    doc = json.loads((tmp_path / "verify.json").read_text())
    assert [c["name"] for c in doc["checks"]] == ["10-cm-top-degree", "11-cm-constants"]


def test_verify_unknown_filter(tmp_path):
    assert main(["verify", "--filter", "nothing-matches", "--out", str(tmp_path)]) == 2


def test_threads_must_be_positive(tmp_path):
    assert main(["cm", "--threads", "0", "--out", str(tmp_path)]) == 2


def test_exported_model_reloads(tmp_path):
    out = tmp_path / "out"
    assert main(["heat-trace", "--out", str(out)]) == 0
    cfg = _write(out, "reload.yaml", "kind: heat_trace\nname: reload\nmodel: {file: sphere_k2.json}\n"
                                     "t_grid: [0.05, 0.5, 5]\ntolerance: 1e-10\n")
    assert main(["heat-trace", "--config", cfg, "--out", str(out)]) == 0
    a = json.loads((out / "sphere_heat_trace.json").read_text())["results"]
    b = json.loads((out / "reload.json").read_text())["results"]
    assert [r["value_re"] for r in a] == pytest.approx([r["value_re"] for r in b], abs=1e-12)


def test_jlo_numeric_subcommand(tmp_path):
    assert main(["jlo-numeric", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "torus_jlo_numeric.png").exists()


INLINE = """kind: fixed_point_index
name: inline_poles
precision: exact
n: 2
strata:
  - a: 0
    nodes:
      - {normal_angles: ["pi/2"], Rpp: [[0, 1, {"1,2": 1}]], orientation: -1}
  - a: 0
    nodes:
      - {normal_angles: ["pi/2"], Rpp: [[0, 1, {"1,2": 1}]], orientation: 1}
expected: 0
tolerance: 1e-12
"""


def test_inline_strata(tmp_path):
    cfg = _write(tmp_path, "inline.yaml", INLINE)
    assert main(["index", "--config", cfg, "--out", str(tmp_path)]) == 0
    with open(tmp_path / "inline_poles.csv", newline="") as fh:
        row = list(csv.DictReader(fh))[0]
    assert row["value_exact"] == "0"
