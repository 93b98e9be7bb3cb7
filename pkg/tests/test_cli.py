import json
import os
import subprocess
import sys

import pytest

from xlpol.cli import main
from xlpol.harness import read_csv_records


def _scenario(tmp_path, body="n_elements: 16\ntrials: 2\nseed: 3\n"):
    p = tmp_path / "scen.yaml"
    p.write_text(body)
    return str(p)


def test_simulate_writes_records(tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(["simulate", "--scenario", _scenario(tmp_path), "--values", "0,10", "--arms", "proposed_as,all_on",
               "--format", "both", "--out", str(out), "--dump-channel", "1"])
    assert rc == 0
    rows = read_csv_records(str(out / "records.csv"))
    assert len(rows) == 2 * 2 * 2
    assert not (out / "records.partial.csv").exists()
    head = (out / "records.csv").read_text().splitlines()[:2]
    cfg = json.loads(head[1][len("# config: "):])
    assert cfg["scenario"]["n_elements"] == 16 and cfg["arms"] == ["proposed_as", "all_on"]
    assert (out / "records.json").exists() and (out / "channel_trial1.txt").exists()
    assert str(out / "records.csv") in capsys.readouterr().out


def test_simulate_other_axis(tmp_path):
    out = tmp_path / "o"
    rc = main(["simulate", "--scenario", _scenario(tmp_path), "--sweep", "chi", "--values", "0.1,0.3",
               "--arms", "proposed_as", "--trials", "1", "--out", str(out)])
    assert rc == 0
    assert {r["axis_value"] for r in read_csv_records(str(out / "records.csv"))} == {"0.1", "0.3"}


def test_bench_complexity(tmp_path):
    path = tmp_path / "bench.csv"
    assert main(["bench-complexity", "--n-grid", "8,16", "--k-grid", "1,2", "--out", str(path)]) == 0
    rows = read_csv_records(str(path))
    assert len(rows) == 4 and "model_ga" in rows[0]
    assert path.read_text().startswith("# xlpol")


@pytest.mark.parametrize("kind", ["pol_heatmap", "power_imbalance", "ddmap"])
def test_figure_kinds(tmp_path, kind):
    out = tmp_path / kind
    assert main(["figure", "--kind", kind, "--out", str(out)]) == 0
    assert os.listdir(out)


def test_figure_sweep_kind(tmp_path):
    out = tmp_path / "se"
    rc = main(["figure", "--kind", "se", "--scenario", _scenario(tmp_path), "--values", "0,20",
               "--arms", "proposed_as,all_on", "--out", str(out)])
    assert rc == 0 and (out / "se.csv").exists()


def test_errors_exit_nonzero(tmp_path, capsys):
    assert main(["simulate", "--arms", "bogus", "--out", str(tmp_path / "x")]) == 2
    assert "bogus" in capsys.readouterr().err
    bad = _scenario(tmp_path, "n_elements: 8\npaths:\n  - chi: 3\n")
    assert main(["simulate", "--scenario", bad, "--out", str(tmp_path / "y")]) == 2
    err = capsys.readouterr().err
    assert "paths[0].chi" in err and "line 3" in err
    assert main(["simulate", "--scenario", str(tmp_path / "missing.yaml"), "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit):
        main(["figure", "--kind", "nope"])


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "xlpol.cli", "bench-complexity", "--n-grid", "4"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "measured_comparisons" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "xlpol.cli", "simulate", "--arms", "x"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode != 0 and proc.stderr
