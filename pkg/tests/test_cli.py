import csv
import io
import json

import numpy as np
import pytest

from mnmdoa.cli import main


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), stdout=out)
    return code, out.getvalue()


def test_geometry_json_and_csv():
    code, text = run("geometry", "--geometry", "nested:3,4")
    assert code == 0
    rep = json.loads(text)
    assert rep["positions"] == [0, 1, 2, 3, 6, 9]
    assert rep["coarray"]["contiguous_len"] == 10
    assert rep["aperture"] == 9
    code, text = run("geometry", "--geometry", "sirca:2", "--format", "csv")
    lines = text.strip().splitlines()
    assert lines[0] == "i,j" and len(lines) == 37
    rep = json.loads(run("geometry", "--geometry", "sirna:3,4")[1])
    assert rep["sensor_count"] == 36
    assert rep["contiguous_halfwidth"] == 9
    assert rep["block_correlation_dimension"] == 100


def test_simulate_and_reproducibility(tmp_path):
    args = ["simulate", "--geometry", "coprime:4,2,4,3", "--sources=-0.2,0.3", "--snapshots", "5", "--seed", "4"]
    assert run(*args, "--output-dir", str(tmp_path / "a"))[0] == 0
    assert run(*args, "--output-dir", str(tmp_path / "b"))[0] == 0
    a = (tmp_path / "a" / "snapshots.csv").read_bytes()
    assert a == (tmp_path / "b" / "snapshots.csv").read_bytes()
    rows = list(csv.reader(io.StringIO(a.decode())))
    assert len(rows) == 6 and len(rows[0]) == 12
    meta = json.loads((tmp_path / "a" / "snapshots.json").read_text())
    assert meta["config"]["seed"] == 4
    # round-trip precision
    float(rows[1][0]) == pytest.approx(float(rows[1][0]))


def test_correlate_from_input(tmp_path):
    d = str(tmp_path)
    run("simulate", "--geometry", "nested:3,4", "--sources", "0.1", "--snapshots", "20", "--output-dir", d)
    code, _ = run("correlate", "--input", str(tmp_path / "snapshots.csv"), "--output-dir", d, "--lag-count", "8")
    assert code == 0
    meta = json.loads((tmp_path / "correlation.json").read_text())
    assert meta["dimension"] == 8 and meta["construction"] == "linear-toeplitz"
    raw = np.loadtxt(tmp_path / "correlation.csv", delimiter=",", skiprows=1)
    R = raw[:, 0::2] + 1j * raw[:, 1::2]
    assert np.array_equal(R, R.conj().T)


def test_correlate_planar(tmp_path):
    code, _ = run("correlate", "--geometry", "sirca:2", "--sources", "0.297:0.46,0:-0.094",
                  "--output-dir", str(tmp_path))
    assert code == 0
    assert json.loads((tmp_path / "correlation.json").read_text())["dimension"] == 64


def test_spectrum_linear(tmp_path):
    code, text = run("spectrum", "--geometry", "coprime:4,2,4,3", "--sources=-0.7,-0.35,0,0.3,0.6",
                     "--method", "mnm,music", "--exact", "--output-dir", str(tmp_path))
    assert code == 0
    peaks = json.loads(text)
    for m in ("mnm", "music"):
        locs = sorted(p["location"] for p in peaks[m])
        assert np.allclose(locs, [-0.7, -0.35, 0, 0.3, 0.6], atol=1e-3)
    rows = (tmp_path / "spectrum_mnm.csv").read_text().splitlines()
    assert rows[0] == "u,value" and len(rows) == 2002


def test_spectrum_planar_linear_and_direct(tmp_path):
    code, text = run("spectrum", "--geometry", "sirna:3,4", "--sources", "0.297:0.46,0:-0.094",
                     "--exact", "--output-dir", str(tmp_path / "lin"))
    assert code == 0
    pairs = sorted(map(tuple, json.loads(text)["mnm"]))
    assert np.allclose(pairs, [(0.0, -0.094), (0.297, 0.46)], atol=1e-3)
    code, text = run("spectrum", "--geometry", "sirca:2", "--sources", "0.3:0.45,0:-0.1", "--exact",
                     "--planar", "direct", "--grid-step", "0.05", "--output-dir", str(tmp_path / "dir"))
    assert code == 0
    locs = sorted(tuple(p["location"]) for p in json.loads(text)["mnm"])
    assert np.allclose(locs, [(0.0, -0.1), (0.3, 0.45)], atol=1e-6)
    header = (tmp_path / "dir" / "spectrum_mnm.csv").read_text().splitlines()[0]
    assert header == "u_x,u_y,value"


def test_metrics_with_toml(tmp_path):
    cfg = tmp_path / "exp.toml"
    cfg.write_text(
        'geometry = "nested:3,4"\ntrials = 10\nseed = 3\n'
        '[sweep]\nvariable = "snr-db"\nvalues = [-5, 5]\n'
    )
    out = tmp_path / "out"
    code, _ = run("metrics", "--config", str(cfg), "--output-dir", str(out))
    assert code == 0
    rows = list(csv.DictReader(open(out / "resolution.csv")))
    assert [r["algorithm"] for r in rows] == ["mnm", "music", "mnm", "music"]
    assert {r["trials"] for r in rows} == {"10"}
    assert (out / "rmse.csv").exists()
    meta = json.loads((out / "metrics.json").read_text())
    assert meta["config"]["seed"] == 3
    first = (out / "rmse.csv").read_bytes()
    run("metrics", "--config", str(cfg), "--output-dir", str(out))
    assert (out / "rmse.csv").read_bytes() == first


def test_json_config_and_env_output(tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"geometry": "ula:10", "sources": [0.1], "snapshots": 3}))
    monkeypatch.setenv("MNMDOA_OUTPUT_DIR", str(tmp_path / "env"))
    assert run("simulate", "--config", str(cfg))[0] == 0
    assert (tmp_path / "env" / "snapshots.csv").exists()


def test_missing_config_no_outputs(tmp_path, capsys):
    code, _ = run("metrics", "--config", str(tmp_path / "nope.toml"), "--output-dir", str(tmp_path / "o"))
    assert code != 0
    assert not (tmp_path / "o").exists()
    assert "not found" in capsys.readouterr().err


def test_config_errors_listed(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text('geometry = "coprime:4,2,4,4"\nbogus = 1\nsnapshots = 0\nmethods = ["esprit"]\n')
    code, _ = run("spectrum", "--config", str(cfg), "--output-dir", str(tmp_path / "o"))
    err = capsys.readouterr().err
    assert code == 2
    for part in ("bogus", "gcd", "snapshots", "esprit"):
        assert part in err
    assert not (tmp_path / "o").exists()


def test_lag_count_error_reported(tmp_path, capsys):
    code, _ = run("correlate", "--geometry", "coprime:4,2,4,3", "--sources", "0.1", "--lag-count", "9",
                  "--output-dir", str(tmp_path / "o"))
    assert code == 1
    assert "lag 8" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()
