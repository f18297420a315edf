"""Table serialization invariants and the command-line interface."""

import json
import subprocess
import sys

import numpy as np
import pytest

from squeezenh.tables import (
    OutputTable,
    config_hash,
    provenance_for,
    read_csv,
    write_csv,
    write_json,
)
from squeezenh.cli import cli_main


def _table():
    return OutputTable(
        "demo",
        3,
        ("a", "b"),
        ("chi_t", "dimensionless"),
        ((1.0, 0.1234567890123456789), (2.0, 3e-300)),
        {"config": "abc123", "code": "0.1.0"},
        (("note", "x"),),
    )


def test_output_table_validation():
    with pytest.raises(ValueError, match="schema"):
        OutputTable("", 1, ("a",), ("u",), ())
    with pytest.raises(ValueError, match="one unit per column"):
        OutputTable("s", 1, ("a", "b"), ("u",), ())
    with pytest.raises(ValueError, match="row length"):
        OutputTable("s", 1, ("a",), ("u",), ((1.0, 2.0),))
    with pytest.raises(ValueError, match="finite"):
        OutputTable("s", 1, ("a",), ("u",), ((float("nan"),),))
    with pytest.raises(ValueError, match="finite"):
        OutputTable("s", 1, ("a",), ("u",), ((float("inf"),),))


def test_output_table_column_access():
    t = _table()
    assert t.column("a") == [1.0, 2.0]
    with pytest.raises(KeyError, match="no column named"):
        t.column("missing")


def test_csv_round_trip(tmp_path):
    t = _table()
    path = tmp_path / "demo.csv"
    write_csv(t, path)
    back = read_csv(path)
    assert back.schema == "demo"
    assert back.version == 3
    assert back.columns == t.columns
    assert back.units == t.units
    assert back.provenance == t.provenance
    assert back.extra == t.extra
    # 17 significant digits: exact double round trip
    assert back.rows == t.rows


def test_csv_layout(tmp_path):
    path = tmp_path / "demo.csv"
    write_csv(_table(), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# schema=demo/3"
    assert lines[1].startswith("# provenance: ")
    assert "code=0.1.0" in lines[1] and "config=abc123" in lines[1]
    assert lines[2] == "# units: a=chi_t,b=dimensionless"
    assert lines[3] == "# note=x"
    assert lines[4] == "a,b"
    assert len(lines) == 7


def test_json_output(tmp_path):
    path = tmp_path / "demo.json"
    write_json(_table(), path)
    doc = json.loads(path.read_text())
    assert doc["schema"] == "demo"
    assert doc["columns"] == ["a", "b"]
    assert doc["rows"][1][1] == 3e-300
    assert doc["extra"] == {"note": "x"}


def test_config_hash_is_canonical():
    h1 = config_hash({"a": 1, "b": [1, 2]})
    h2 = config_hash({"b": [1, 2], "a": 1})
    assert h1 == h2
    assert len(h1) == 12
    assert h1 != config_hash({"a": 2, "b": [1, 2]})
    prov = provenance_for({"a": 1})
    assert set(prov) == {"config", "code"}


def test_cli_no_subcommand_is_config_error(capsys):
    assert cli_main([]) == 1
    assert "usage" in capsys.readouterr().err


def test_cli_unknown_subcommand(capsys):
    assert cli_main(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err


def test_cli_rejects_small_n(capsys):
    rc = cli_main(["steady", "--n", "1", "--gamma-over-chi", "1.0"])
    assert rc == 1
    assert "N >= 2" in capsys.readouterr().err


def test_cli_missing_required_key(capsys):
    rc = cli_main(["steady", "--n", "8"])
    assert rc == 1
    assert "gamma_over_chi" in capsys.readouterr().err


def test_cli_numerical_failure_exit_2(tmp_path, capsys):
    # gamma ~ 0 makes the top of the spectrum degenerate across parities
    rc = cli_main(
        ["steady", "--n", "8", "--gamma-over-chi", "1e-13",
         "--out", str(tmp_path)]
    )
    assert rc == 2
    assert "ambiguous" in capsys.readouterr().err


def test_cli_rejects_unknown_config_key(tmp_path, capsys):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"N": 8, "gamma_over_chi": 1.0, "bogus": 1}))
    rc = cli_main(["steady", "--config", str(conf)])
    assert rc == 1
    assert "bogus" in capsys.readouterr().err


def test_cli_rejects_invalid_json(tmp_path, capsys):
    conf = tmp_path / "c.json"
    conf.write_text("{not json")
    rc = cli_main(["steady", "--config", str(conf)])
    assert rc == 1
    assert "invalid JSON" in capsys.readouterr().err


def test_cli_rejects_bad_format(tmp_path, capsys):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"N": 8, "gamma_over_chi": 1.0, "format": "xml"}))
    rc = cli_main(["steady", "--config", str(conf)])
    assert rc == 1
    assert "csv or json" in capsys.readouterr().err


def test_cli_rejects_bad_workers_env(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("SQUEEZENH_WORKERS", "abc")
    rc = cli_main(
        ["steady", "--n", "8", "--gamma-over-chi", "1.0", "--out", str(tmp_path)]
    )
    assert rc == 1
    assert "SQUEEZENH_WORKERS" in capsys.readouterr().err


def test_cli_steady_writes_table(tmp_path, capsys):
    rc = cli_main(
        ["steady", "--n", "20", "--gamma-over-chi", "1.19",
         "--out", str(tmp_path)]
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "xi2_steady=0.16271314208751" in out
    table = read_csv(tmp_path / "steady_N20_g1.19.csv")
    assert table.schema == "steady"
    assert table.column("xi2_steady")[0] == pytest.approx(
        0.16271314208751622, rel=1e-15
    )
    assert table.column("e_imag")[0] == pytest.approx(
        -0.9674218236753945, rel=1e-12
    )


def test_cli_steady_reruns_are_byte_identical(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    for out in (a, b):
        rc = cli_main(
            ["steady", "--n", "12", "--gamma-over-chi", "0.9", "--out", str(out)]
        )
        assert rc == 0
    fa = (a / "steady_N12_g0.9.csv").read_bytes()
    fb = (b / "steady_N12_g0.9.csv").read_bytes()
    assert fa == fb


def test_cli_evolve_with_q_snapshots(tmp_path, capsys):
    conf = tmp_path / "e.json"
    conf.write_text(
        json.dumps(
            {"N": 10, "gamma_over_chi": 0.5, "duration": 0.2,
             "q_times": [0.1, 0.2], "theta_points": 31, "phi_points": 61,
             "out": str(tmp_path)}
        )
    )
    rc = cli_main(["evolve", "--config", str(conf)])
    assert rc == 0
    trace = read_csv(tmp_path / "trace_N10_g0.5.csv")
    assert trace.schema == "trace"
    assert trace.columns == ("t", "xi2", "alpha_min", "p", "jz_mean")
    p = trace.column("p")
    assert all(b <= a + 1e-12 for a, b in zip(p, p[1:]))
    for t in ("0.1", "0.2"):
        q = read_csv(tmp_path / f"qfunc_N10_g0.5_t{t}.csv")
        assert len(q.rows) == 31 * 61


def test_cli_qfunc_steady(tmp_path, capsys):
    conf = tmp_path / "q.json"
    conf.write_text(
        json.dumps(
            {"N": 10, "gamma_over_chi": 0.8, "steady": True,
             "theta_points": 61, "phi_points": 121, "out": str(tmp_path)}
        )
    )
    rc = cli_main(["qfunc", "--config", str(conf)])
    assert rc == 0
    assert "norm_integral=" in capsys.readouterr().out
    table = read_csv(tmp_path / "qfunc_N10_g0.8_steady.csv")
    assert table.schema == "qfunc"
    assert len(table.rows) == 61 * 121
    assert all(q >= 0 for q in table.column("q"))


def test_cli_sweep_dynamic_small(tmp_path, capsys):
    conf = tmp_path / "s.json"
    conf.write_text(
        json.dumps(
            {"N": 20, "gamma_grid": [0.4673, 1.19, 1.6393], "dynamic": True,
             "out": str(tmp_path)}
        )
    )
    rc = cli_main(["sweep", "--config", str(conf)])
    assert rc == 0
    table = read_csv(tmp_path / "dynamic_sweep_N20.csv")
    assert table.schema == "dynamic_sweep"
    extras = dict(table.extra)
    assert extras["xi2_min_monotone_increasing_with_gamma"] == "true"
    assert extras["t_min_monotone_decreasing_with_gamma"] == "true"
    assert table.column("interior") == [0.0, 0.0, 1.0]


def test_cli_fit_roundtrip(tmp_path, capsys):
    xs = np.array([100.0, 200.0, 400.0, 800.0])
    table = OutputTable(
        "scaling_steady",
        1,
        ("N", "xi2"),
        ("count", "dimensionless"),
        tuple((x, 4.0 * x**-1.0) for x in xs),
    )
    path = tmp_path / "scaling_steady.csv"
    write_csv(table, path)
    rc = cli_main(["fit", "--in", str(path), "--x", "N", "--y", "xi2"])
    assert rc == 0
    out = capsys.readouterr().out
    amp = float(out.split("amplitude=")[1].splitlines()[0])
    expo = float(out.split("exponent=")[1].splitlines()[0])
    assert amp == pytest.approx(4.0, rel=1e-12)
    assert expo == pytest.approx(-1.0, abs=1e-12)


def test_cli_fit_missing_file_exit_1(capsys):
    rc = cli_main(["fit", "--in", "/nonexistent/x.csv", "--x", "N", "--y", "xi2"])
    assert rc == 1


def test_cli_fit_unknown_column_exit_1(tmp_path, capsys):
    path = tmp_path / "t.csv"
    write_csv(_table(), path)
    rc = cli_main(["fit", "--in", str(path), "--x", "a", "--y", "nope"])
    assert rc == 1


def test_console_script_smoke(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "squeezenh.cli", "steady", "--n", "10",
         "--gamma-over-chi", "1.0", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "xi2_steady=" in proc.stdout
    assert (tmp_path / "steady_N10_g1.csv").exists()
