import csv
import json

import numpy as np
import pytest

from mongeampere.cli import ConfigError, load_config, main, parse_measure_flag, parse_schedule


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_parse_schedule():
    assert parse_schedule("2:16") == [2, 4, 8, 16]
    assert parse_schedule("2,4,8") == [2, 4, 8]
    assert parse_schedule([3, 5]) == [3, 5]
    for bad in ("4,2", "0,1", "a:b", "2,2"):
        with pytest.raises(ConfigError):
            parse_schedule(bad)


def test_parse_measure_flag():
    assert parse_measure_flag("hardy:s=2") == {"kind": "hardy", "s": 2.0}
    assert parse_measure_flag("lebesgue") == {"kind": "lebesgue"}


def test_toml_error_reports_position(tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text('seed = 1\nmesh = { n = }\n')
    with pytest.raises(ConfigError) as exc:
        load_config(cfg)
    assert "line 2" in str(exc.value)
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_solve_lebesgue(tmp_path):
    out = tmp_path / "solve"
    assert main(["solve", "--mesh", "101", "--out", str(out)]) == 0
    m = _manifest(out)
    assert m["status"] == 0 and m["command"] == "solve"
    assert {"solution.csv", "result.json", "ledger.csv"} <= set(m["files"])
    rows = _rows(out / "solution.csv")
    assert rows[0][:3] == ["x [length]", "y [length]", "u [value]"]
    vals = np.array([[float(c) for c in r] for r in rows[1:]])
    np.testing.assert_allclose(vals[:, 2], (vals[:, 0] ** 2 - 1) / 2, atol=1e-4)


def test_solve_singular_ledger(tmp_path):
    out = tmp_path / "hardy"
    assert main(["solve", "--mesh", "801", "--measure", "hardy:s=1.5", "--m-schedule", "2:64", "--out", str(out)]) == 0
    rows = _rows(out / "ledger.csv")
    assert rows[0][0].startswith("m")
    assert [r[0] for r in rows[1:]] == ["2", "4", "8", "16", "32", "64"]


def test_eigen_ladder(tmp_path):
    out = tmp_path / "eig"
    assert main(["eigen", "--mesh", "201", "--measure", "hardy:s=2", "--m-schedule", "2:16", "--out", str(out)]) == 0
    rows = _rows(out / "ladder.csv")[1:]
    lams = [float(r[1]) for r in rows]
    assert all(b <= a + 1e-9 for a, b in zip(lams, lams[1:]))


def test_check_deterministic(tmp_path, monkeypatch):
    monkeypatch.delenv("MA_SEED", raising=False)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["check", "--suite", "blocki", "--trials", "10", "--out", str(a)]) == 0
    assert main(["check", "--suite", "blocki", "--trials", "10", "--out", str(b)]) == 0
    assert (a / "checks.csv").read_bytes() == (b / "checks.csv").read_bytes()
    assert len(_rows(a / "checks.csv")) == 11
    assert _manifest(a)["seed"] == 0xA1E5


def test_seed_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "c.toml"
    cfg.write_text("seed = 5\n[check]\nsuite = \"energy\"\ntrials = 3\n")
    out = tmp_path / "o"
    assert main(["check", "--config", str(cfg), "--out", str(out)]) == 0
    assert _manifest(out)["seed"] == 5
    monkeypatch.setenv("MA_SEED", "11")
    main(["check", "--config", str(cfg), "--out", str(out)])
    assert _manifest(out)["seed"] == 11
    main(["check", "--config", str(cfg), "--out", str(out), "--seed", "13"])
    assert _manifest(out)["seed"] == 13


def test_oracle_dump(tmp_path):
    out = tmp_path / "or"
    assert main(["oracle", "--name", "hardy_family", "--alpha", "0.25", "--out", str(out)]) == 0
    res = json.loads((out / "result.json").read_text())
    assert res["lambda"] == pytest.approx(0.75)
    assert (out / "function.csv").exists() and (out / "measure.csv").exists()


@pytest.mark.parametrize(
    "argv",
    [
        ["solve", "--tol", "-1"],
        ["solve", "--measure", "bogus"],
        ["solve", "--mesh", "2"],
        ["oracle", "--name", "nope"],
        ["eigen", "--m-schedule", "8,4"],
    ],
)
def test_usage_errors(tmp_path, argv):
    assert main(argv + ["--out", str(tmp_path / "x")]) == 2


def test_argparse_rejects_unknown_suite(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["check", "--suite", "nope", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_repro_subset(tmp_path):
    out = tmp_path / "rep"
    assert main(["repro", "--only", "2,3", "--out", str(out)]) == 0
    rows = _rows(out / "acceptance.csv")
    assert len(rows) == 3
