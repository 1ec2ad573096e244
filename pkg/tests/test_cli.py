import json
import os

import pytest

from cwhyp import cli


@pytest.fixture(autouse=True)
def _pin_time(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")


def _run(tmp_path, *args):
    return cli.main(list(args))


def test_shadow_zero_noise_artifact(tmp_path):
    out = tmp_path / "run.json"
    rc = cli.main(["shadow", "--spec", "torus", "--beta", "0.05", "--delta", "0", "--len", "150",
                   "--seed", "7", "--out", str(out), "--svg", str(tmp_path / "trace.svg")])
    assert rc == 0
    art = json.loads(out.read_text())
    assert set(art) == {"config_echo", "results", "provenance", "checks"}
    assert art["provenance"]["seed"] == 7 and art["provenance"]["version"] == "0.1.0"
    names = {c["name"]: c for c in art["checks"]}
    assert names["max_dev_zero_noise"]["pass"]
    assert (tmp_path / "run.deviations.csv").read_text().startswith("run,k,deviation\n")
    assert (tmp_path / "trace.svg").exists()


def test_reruns_are_byte_identical(tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / f"r{i}.json"
        assert cli.main(["shadow", "--spec", "sphere", "--delta", "1e-4", "--len", "200", "--runs", "3",
                         "--seed", "11", "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    a = json.loads(outs[0])
    assert json.dumps(a["results"], sort_keys=True) == json.dumps(json.loads(outs[1])["results"], sort_keys=True)


def test_report_rebuilds_checks(tmp_path, capsys):
    out = tmp_path / "c.json"
    assert cli.main(["analyze", "census", "--spec", "torus", "--k", "1", "--k", "2", "--out", str(out)]) == 0
    art = json.loads(out.read_text())
    capsys.readouterr()
    assert cli.main(["report", str(out)]) == 0
    table = capsys.readouterr().out
    assert "census_k2_determinant" in table and "PASS" in table
    # a tampered value flips the rebuilt check and the exit status
    art["checks"][1]["value"] = 4
    out.write_text(json.dumps(art))
    assert cli.main(["report", str(out)]) == 1


def test_missing_seed_is_a_schema_error(tmp_path):
    assert cli.main(["shadow", "--spec", "torus", "--out", str(tmp_path / "x.json")]) == 2
    assert not (tmp_path / "x.json").exists()


def test_failed_run_leaves_no_artifact(tmp_path):
    out = tmp_path / "bad.json"
    # t > 0 with a non-standard matrix is not a valid spec
    spec = '{"space":"torus","matrix":[[3,1],[2,1]],"t":0.5}'
    assert cli.main(["cwmetric", "--spec", spec, "--seed", "1", "--out", str(out)]) == 2
    assert not out.exists()
    assert not [p for p in os.listdir(tmp_path) if p.endswith(".tmp")]


def test_analyze_product_and_cwn(tmp_path):
    out = tmp_path / "p.json"
    assert cli.main(["analyze", "product", "--factor", "sphere", "--factor", "torus", "--eps", "0.1",
                     "--expect", "2", "--out", str(out)]) == 0
    out = tmp_path / "w.json"
    svg = tmp_path / "w.svg"
    assert cli.main(["analyze", "cwn", "--spec", "sphere", "--eps", "0.08", "--grid", "60",
                     "--out", str(out), "--svg", str(svg)]) == 0
    assert json.loads(out.read_text())["results"]["max_count"] == 2
    assert svg.read_text().count("<path ") == 4


def test_conjugacy_writes_field_and_artifact(tmp_path):
    out = tmp_path / "h.field"
    rc = cli.main(["conjugacy", "--t", "1", "--grid", "64", "--terms", "40", "--seed", "0",
                   "--probes", "200", "--probe-grid", "64", "--out", str(out)])
    assert rc == 0
    head = out.read_bytes().split(b"\n", 1)[0]
    assert json.loads(head)["grid_n"] == 64
    assert (tmp_path / "h.field.json").exists()


def test_simulate_with_leaves(tmp_path):
    out = tmp_path / "s.json"
    svg = tmp_path / "f.svg"
    assert cli.main(["simulate", "--spec", "sphere", "--seed", "3", "--len", "20", "--leaves", "3",
                     "--out", str(out), "--svg", str(svg)]) == 0
    assert svg.read_text().count("<path ") == 4
    assert (tmp_path / "s.orbit.csv").exists()


def test_spec_loading(tmp_path):
    p = tmp_path / "s.json"
    p.write_text('{"space":"sphere","matrix":[[2,1],[1,1]],"t":0.5}')
    assert cli.load_spec(str(p)).t == 0.5
    assert cli.load_spec("torus:0.25").t == 0.25
    with pytest.raises(cli.SchemaError):
        cli.load_spec(str(tmp_path / "missing.json"))


def test_svg_needs_a_drawable_command(tmp_path):
    assert cli.main(["analyze", "census", "--spec", "torus", "--k", "1", "--svg", str(tmp_path / "x.svg"),
                     "--out", str(tmp_path / "c.json")]) == 2
    # simulate without leaves has no foliation to draw
    assert cli.main(["simulate", "--spec", "torus", "--seed", "1", "--svg", str(tmp_path / "y.svg")]) == 2
    assert not list(tmp_path.iterdir())
