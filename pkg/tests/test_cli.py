import json

import jsonschema
import pytest

from siegelcap import cli

FAST = {"schema_version": 1, "n": 1, "seed": 0,
        "subcommands": {"verify-geometry": {"samples": 2000, "volume_samples": 500_000}}}


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_verify_geometry_passes_and_writes_artifacts(tmp_path, capsys):
    code = cli.main(["verify-geometry", "--config", _write(tmp_path, FAST), "--out", str(tmp_path / "o"),
                     "--seed", "3"])
    assert code == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out
    reports = list((tmp_path / "o").glob("verify-geometry_seed3_*.json"))
    assert len(reports) == 1
    rep = json.loads(reports[0].read_text())
    jsonschema.validate(rep, cli.load_schema("report.schema.json"))
    assert rep["seed"] == 3 and rep["passed"]
    assert reports[0].name == f"verify-geometry_seed3_{rep['config_hash'][:8]}.json"
    for name in rep["tables"]:
        assert (tmp_path / "o" / f"verify-geometry_{name}_seed3_{rep['config_hash'][:8]}.csv").exists()


def test_reports_are_byte_identical_across_runs(tmp_path):
    cfg = _write(tmp_path, FAST)
    cli.run("verify-geometry", cfg, 5, tmp_path / "a")
    cli.run("verify-geometry", cfg, 5, tmp_path / "b")
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == sorted(p.name for p in (tmp_path / "b").iterdir())
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_config_hash_ignores_seed_and_threads(tmp_path):
    cfg = _write(tmp_path, FAST)
    _, r1 = cli.run("verify-geometry", cfg, 1, tmp_path / "a", threads=1)
    _, r2 = cli.run("verify-geometry", cfg, 2, tmp_path / "b", threads=2)
    assert r1["config_hash"] == r2["config_hash"]


def test_csv_roundtrip(tmp_path):
    _, rep = cli.run("verify-geometry", _write(tmp_path, FAST), 0, tmp_path)
    for name, path in zip(sorted(rep["tables"]), cli.emit_csv(rep, tmp_path)):
        tab = cli.read_csv(path)
        assert tab["columns"] == rep["tables"][name]["columns"]
        assert tab["rows"] == rep["tables"][name]["rows"]


def test_empty_table_gives_header_only_csv(tmp_path):
    rep = {"subcommand": "subcap", "seed": 0, "config_hash": "0" * 64,
           "tables": {"ratios": {"columns": ["family", "ratio"], "rows": []}}}
    (path,) = cli.emit_csv(rep, tmp_path)
    assert path.read_text() == "family,ratio\n"
    assert cli.read_csv(path) == {"columns": ["family", "ratio"], "rows": []}


@pytest.mark.parametrize("cfg, field", [
    ({"schema_version": 1, "n": "one"}, "n"),
    ({"schema_version": 1, "bogus": 1}, "bogus"),
    ({"schema_version": 2}, "schema_version"),
    ({"schema_version": 1, "subcommands": {"verify-geometry": {"samples": "many"}}},
     "subcommands.verify-geometry.samples"),
    ({"schema_version": 1, "subcommands": {"verify-geometry": {"nope": 3}}},
     "subcommands.verify-geometry.nope"),
])
def test_malformed_config_exits_2_naming_field(tmp_path, capsys, cfg, field):
    code = cli.main(["verify-geometry", _write(tmp_path, cfg), "--out", str(tmp_path)])
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["field"] == field and err["exit_code"] == 2
    jsonschema.validate(err, cli.load_schema("error.schema.json"))
    assert json.loads((tmp_path / "error.json").read_text()) == err


def test_alpha_out_of_range_is_config_error(tmp_path, capsys):
    cfg = {"schema_version": 1, "alpha": 0.3}
    assert cli.main(["capacity", _write(tmp_path, cfg), "--out", str(tmp_path)]) == 2
    assert json.loads(capsys.readouterr().err.strip())["field"] == "alpha"


def test_unparseable_config_exits_2(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert cli.main(["verify-geometry", str(p), "--out", str(tmp_path)]) == 2


def test_environment_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv("SIEGELCAP_CONFIG", _write(tmp_path, FAST))
    monkeypatch.setenv("SIEGELCAP_SEED", "11")
    monkeypatch.setenv("SIEGELCAP_OUT", str(tmp_path / "env"))
    assert cli.main(["verify-geometry"]) == 0
    assert list((tmp_path / "env").glob("verify-geometry_seed11_*.json"))
    # flags beat the environment
    assert cli.main(["verify-geometry", "--seed", "12"]) == 0
    assert list((tmp_path / "env").glob("verify-geometry_seed12_*.json"))
    monkeypatch.setenv("SIEGELCAP_SEED", "x")
    assert cli.main(["verify-geometry"]) == 2


def test_packaged_configs_validate():
    schema = cli.load_schema("config.schema.json")
    for name in ("default.json", "two-ball.json"):
        jsonschema.validate(json.loads(open(cli.default_config_path(name)).read()), schema)


def test_config_hash_is_canonical():
    a = {"x": 1, "y": [1.0, 2.0]}
    b = {"y": [1.0, 2.0], "x": 1}
    assert cli.config_hash(a) == cli.config_hash(b)
    assert len(cli.config_hash(a)) == 64
