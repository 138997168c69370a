import csv
import json

import pytest

from kinwave import cli
from kinwave import experiments as ex
from kinwave import network as nw
from kinwave import scenarios as sc
from kinwave.fundamental_diagram import Triangular


@pytest.mark.parametrize("sid", sc.builtin_ids())
def test_builtin_round_trip_is_byte_identical(sid):
    doc = sc.load_builtin(sid)
    text = sc.serialize(doc)
    assert sc.serialize(sc.parse(text)) == text
    if doc.get("model", "network") == "network":
        sc.build(doc)


def test_hash_tracks_semantic_fields_only():
    doc = sc.load_builtin("ch3-merge")
    h = sc.manifest_hash(doc)
    assert sc.manifest_hash({**doc, "description": "something else"}) == h
    assert sc.manifest_hash(sc.apply_overrides(doc, ["numerics.cells=64"])) != h
    assert sc.manifest_hash(sc.apply_overrides(doc, ["numerics.cells=64"])) == \
        sc.manifest_hash(sc.apply_overrides(doc, ["numerics.cells=64"]))


def test_parameterized_id_sets_split():
    doc = sc.load_builtin("ch7-equilibrium(0.6)")
    assert doc["boundary_conditions"]["origins"][0]["split"] == pytest.approx([0.6, 0.4])


def test_schema_errors():
    with pytest.raises(sc.SchemaError):
        sc.parse("{not json")
    with pytest.raises(sc.SchemaError):
        sc.parse(json.dumps({"schema_version": 1}))
    with pytest.raises(sc.SchemaError, match="no such field"):
        sc.apply_overrides(sc.load_builtin("ch3-merge"), ["links.99.cells=3"])
    with pytest.raises(sc.SchemaError):
        sc.load_builtin("no-such-scenario")


def test_simulate_writes_tables_and_manifest(tmp_path):
    code = cli.main(["simulate", "ch3-merge", "--out", str(tmp_path),
                     "--set", "numerics.cells=32", "--probe", "d:0"])
    assert code == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["scenario"] == "ch3-merge"
    assert manifest["cfl"] <= 1.0
    assert manifest["hash"] == sc.manifest_hash(sc.parse((tmp_path / "scenario.json").read_text()))
    for name in manifest["files"]:
        assert (tmp_path / name).exists()
    assert any(f.startswith("probe_d") for f in manifest["files"])
    rows = list(csv.reader((tmp_path / "final_density.csv").open()))
    assert len(rows) > 2


def test_simulate_mixed_ring(tmp_path):
    assert cli.main(["simulate", "ch5-mixed-ring", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "ring.csv").exists()


def test_malformed_scenario_exits_two(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{oops")
    assert cli.main(["simulate", str(bad), "--out", str(tmp_path / "o")]) == cli.EXIT_SCHEMA
    assert cli.main(["simulate", "ch3-merge", "--out", str(tmp_path / "o"),
                     "--set", "links.42.x=1"]) == cli.EXIT_SCHEMA


def test_cfl_violation_exits_three(tmp_path):
    code = cli.main(["simulate", "ch6-network", "--out", str(tmp_path),
                     "--set", "numerics.steps_per_cell=20"])
    assert code == cli.EXIT_CFL


def test_consistency_failure_exits_four(tmp_path, monkeypatch):
    def broken(self):
        raise nw.ConsistencyError("negative density")

    monkeypatch.setattr(nw.Simulator, "step", broken)
    code = cli.main(["simulate", "ch3-merge", "--out", str(tmp_path), "--set", "numerics.cells=16"])
    assert code == cli.EXIT_CONSISTENCY


def _riemann(capsys, *args):
    assert cli.main(["riemann", *args]) == 0
    return json.loads(capsys.readouterr().out)


def test_riemann_link_identical_states(capsys):
    body = _riemann(capsys, "link", "--left", "0.3", "--right", "0.3")
    assert body["type"] == 7
    assert body["waves"] == []


def test_riemann_link_lane_drop(capsys):
    body = _riemann(capsys, "link", "--left", "2,0.2", "--right", "1,0.9")
    assert body["model"] == "link"
    assert 1 <= body["type"] <= 10


def test_riemann_diverge_jammed_downstream(capsys):
    body = _riemann(capsys, "diverge", "--left", "0.3,0.2", "--right", "1.0")
    assert body["type"] == 7


def test_riemann_mixed(capsys):
    body = _riemann(capsys, "mixed", "--left", "0.001,0", "--right", "0.0065,0")
    assert len(body["intermediate"]) == 2


def test_riemann_bad_input_exits_two():
    assert cli.main(["riemann", "link", "--left", "1,2,3", "--right", "0.1"]) == cli.EXIT_SCHEMA


def test_sweep_empty_range_writes_header_only(capsys):
    assert cli.main(["sweep", "ch7-equilibrium", "--range", "0.5:0.4:0.1"]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert out == ["xi"]


def test_sweep_balanced_split_equalizes_routes(tmp_path):
    out = tmp_path / "sweep.csv"
    code = cli.main(["sweep", "ch7-equilibrium", "--values", str(5 / 6), "--out", str(out),
                     "--set", "numerics.cells=25", "--set", "numerics.horizon=20"])
    assert code == 0
    row = next(csv.DictReader(out.open()))
    assert row["reached"] == "1"
    assert float(row["ATT0"]) == pytest.approx(float(row["ATT1"]), rel=1e-6)


def test_sweep_rejects_unknown_parameter():
    with pytest.raises(sc.SchemaError):
        ex.sweep(sc.load_builtin("ch7-equilibrium"), "nonsense.field", [1.0])


def test_verify_is_reproducible(tmp_path, capsys):
    for name in ("a", "b"):
        assert cli.main(["verify", "ch2-ring-homogeneous", "ch5-mixed-ring",
                         "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "verdict.json").read_bytes() == (tmp_path / "b" / "verdict.json").read_bytes()
    assert "PASS" in capsys.readouterr().out


def test_verify_detects_a_perturbed_model(monkeypatch, capsys):
    original = Triangular.lane_speed
    monkeypatch.setattr(Triangular, "lane_speed", lambda self, u: 0.9 * original(self, u))
    assert cli.main(["verify", "ch3-merge"]) == cli.EXIT_FAIL
    out = capsys.readouterr().out
    assert "FAIL" in out and "delta" in out


def test_verify_json_format(capsys):
    assert cli.main(["verify", "ch2-ring-homogeneous", "--format", "json"]) == 0
    body = json.loads(capsys.readouterr().out)
    assert isinstance(body, (list, dict))
