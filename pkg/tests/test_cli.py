import csv
import io
import json
import math
import subprocess
import sys

import pytest

from freqest import cli
from freqest.harness import CSV_COLUMNS

PI = math.pi

SMALL = """
seed = 5
trials = 12
n_values = [16, 20, 24, 28, 32]
plot = true

[[strategies]]
kind = "fixed"

[[strategies]]
kind = "linear"

[[strategies]]
kind = "exponential"
base = 1.125

[[strategies]]
kind = "adaptive"
"""


def bounds(capsys, *argv):
    code = cli.main(["bounds", *argv])
    out = capsys.readouterr().out
    if code:
        return code, None
    rows = list(csv.DictReader(io.StringIO(out)))
    return code, rows[0]


def test_bounds_linear(capsys):
    code, row = bounds(capsys, "--linear", "--n", "100")
    assert code == 0
    assert float(row["crb"]) == pytest.approx(6 / (PI**2 * 100 * 101 * 201), rel=1e-14)


def test_bounds_fixed_single(capsys):
    _, row = bounds(capsys, "--fixed", "--n", "1")
    assert float(row["crb"]) == pytest.approx(1 / PI**2, rel=1e-15)


def test_bounds_ultimate(capsys):
    _, row = bounds(capsys, "--ultimate", "--n", "124", "--t2", "1e4pi")
    assert float(row["crb_ultimate"]) == pytest.approx(math.e**2 / (124 * (1e4 * PI) ** 2), rel=1e-14)


def test_bounds_json(capsys):
    assert cli.main(["bounds", "--times", "1,2,3", "--format", "json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["n"] == 3 and data["crb"] == pytest.approx(1 / 14)


@pytest.mark.parametrize(
    "argv",
    [["--times", ""], ["--linear"], ["--times", "1,-2"], ["--fixed", "--n", "3", "--eta", "2"], ["--ultimate"], []],
)
def test_bounds_errors_exit_one(argv, capsys):
    assert cli.main(["bounds", *argv]) == cli.EXIT_CONFIG


def test_bounds_seventeen_digits(capsys):
    _, row = bounds(capsys, "--linear", "--n", "7")
    from freqest.model import crb
    from freqest.strategies import StrategySpec, schedule

    assert float(row["crb"]) == crb(schedule(StrategySpec("linear", 7)))


@pytest.fixture(scope="module")
def run_outputs(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    cfg = root / "small.toml"
    cfg.write_text(SMALL)
    codes = [cli.main(["run", str(cfg), "--out-dir", str(root / d)]) for d in ("a", "b")]
    return root, codes


def test_run_writes_bundle(run_outputs):
    root, codes = run_outputs
    assert codes == [0, 0]
    names = sorted(p.name for p in (root / "a").iterdir())
    assert names == ["config.toml", "fits.json", "risk.csv", "risk.svg", "schedules.json"]
    rows = list(csv.reader((root / "a" / "risk.csv").open()))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert {r[0] for r in rows[1:]} == {"fixed", "linear", "exp(1.125)", "adaptive"}
    assert len(rows) == 1 + 4 * 5


def test_rerun_is_byte_identical(run_outputs):
    root, _ = run_outputs
    for name in ("risk.csv", "risk.svg", "fits.json", "schedules.json", "config.toml"):
        assert (root / "a" / name).read_bytes() == (root / "b" / name).read_bytes(), name


def test_csv_floats_round_trip(run_outputs):
    root, _ = run_outputs
    for r in csv.DictReader((root / "a" / "risk.csv").open()):
        for c in ("risk_mean", "crb", "floor"):
            assert cli.fmt(float(r[c])) == r[c]


def test_written_config_round_trips(run_outputs, tmp_path):
    root, _ = run_outputs
    from freqest import config as C

    cfg = C.load(root / "a" / "config.toml")
    assert C.loads(C.dumps(cfg)) == cfg and cfg.trials == 12


def test_run_json_format(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text(SMALL.replace("plot = true", "plot = false"))
    assert cli.main(["run", str(cfg), "--out-dir", str(tmp_path / "o"), "--format", "json", "--trials", "3"]) == 0
    data = json.loads((tmp_path / "o" / "risk.json").read_text())
    assert data["columns"] == list(CSV_COLUMNS) and data["meta"]["t2"] == "inf"
    assert not (tmp_path / "o" / "risk.svg").exists()


def test_trials_zero_exits_one(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text(SMALL.replace("trials = 12", "trials = 0"))
    assert cli.main(["run", str(cfg), "--out-dir", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    assert "trials" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()
    assert cli.main(["run", "fig1_noiseless", "--trials", "0", "--out-dir", str(tmp_path / "o")]) == 1


def test_unknown_key_exits_one_with_line(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("workers = 1\nsede = 2\n" + SMALL)
    assert cli.main(["run", str(cfg)]) == cli.EXIT_CONFIG
    assert "line 2" in capsys.readouterr().err


def test_cell_failures_exit_two(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('trials = 200\nn_values = [3, 4, 5]\n[[strategies]]\nkind = "linear"\nestimator = "fourier"\n')
    assert cli.main(["run", str(cfg), "--out-dir", str(tmp_path / "o")]) == cli.EXIT_CELLS
    assert (tmp_path / "o" / "risk.csv").exists()


def test_plot_is_deterministic(run_outputs, tmp_path):
    root, _ = run_outputs
    table = root / "a" / "risk.csv"
    for name in ("p1.svg", "p2.svg"):
        assert cli.main(["plot", str(table), str(table), "-o", str(tmp_path / name)]) == 0
    svg = (tmp_path / "p1.svg").read_bytes()
    assert svg == (tmp_path / "p2.svg").read_bytes()
    assert svg.startswith(b"<?xml") and b"adaptive" in svg


def test_plot_rejects_empty_and_incomplete_tables(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text(",".join(CSV_COLUMNS) + "\n")
    assert cli.main(["plot", str(empty), "-o", str(tmp_path / "x.svg")]) == cli.EXIT_CONFIG
    partial = tmp_path / "partial.csv"
    partial.write_text("strategy,n\nfixed,3\n")
    assert cli.main(["plot", str(partial), "-o", str(tmp_path / "x.svg")]) == cli.EXIT_CONFIG
    assert cli.main(["plot", str(tmp_path / "missing.csv")]) == cli.EXIT_CONFIG
    assert not (tmp_path / "x.svg").exists()


def test_optimize_base(tmp_path):
    code = cli.main(
        ["optimize-base", "--n", "20", "--bases", "1.1,1.125", "--trials", "50", "--out-dir", str(tmp_path), "--format", "json"]
    )
    assert code == 0
    data = json.loads((tmp_path / "optimize_base.json").read_text())
    assert data["best"] in (1.1, 1.125) and len(data["rows"]) == 2


def test_optimize_base_bad_grid_exits_one():
    assert cli.main(["optimize-base", "--bases", "2.5", "--trials", "5"]) == cli.EXIT_CONFIG
    assert cli.main(["optimize-base", "--bases", "a:b", "--trials", "5"]) == cli.EXIT_CONFIG


def test_write_bundle_removes_partial_output(tmp_path, monkeypatch):
    import os

    calls = {"n": 0}
    real = os.replace

    def failing(src, dst):
        calls["n"] += 1
        if calls["n"] == 2:
            raise OSError("disk full")
        real(src, dst)

    monkeypatch.setattr(os, "replace", failing)
    with pytest.raises(OSError):
        cli.write_bundle(tmp_path, {"a.txt": "1", "b.txt": "2"})
    assert list(tmp_path.iterdir()) == []


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "freqest", "bounds", "--fixed", "--n", "1"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("n,crb")
