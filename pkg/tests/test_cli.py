import csv
import io
import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from fencesim.camera import PIXEL_REFERENCE
from fencesim.cli import main

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


@pytest.fixture
def pack(tmp_path):
    dst = tmp_path / "scenarios"
    shutil.copytree(SCENARIOS, dst)
    return dst


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_pixel_table_defaults(capsys):
    code, out, _ = run(capsys, "pixel-table")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["distance", "pixelsW", "pixelsH"]
    assert [int(r[0]) for r in rows[1:]] == sorted(PIXEL_REFERENCE)
    for d, w, h in rows[1:]:
        tw, th = PIXEL_REFERENCE[int(d)]
        assert abs(int(w) - tw) <= 1 and abs(int(h) - th) <= 1


def test_pixel_table_options(capsys):
    assert run(capsys, "pixel-table", "--distances", "40")[1].splitlines()[1] == "40,50,38"
    assert run(capsys, "pixel-table", "--distances", "10", "--animal", "0", "0")[1].splitlines()[1] == "10,0,0"
    code, _, err = run(capsys, "pixel-table", "--distances", "10", "-5")
    assert code == 3 and "distances" in err
    code, out, _ = run(capsys, "pixel-table", "--config", SCENARIOS / "pixel_table.json", "--distances", "80")
    assert code == 0 and out.splitlines()[1] == "80,25,19"


def test_budget(capsys, tmp_path):
    code, out, _ = run(capsys, "budget")
    assert code == 0
    assert "19.11 28.61" in out
    assert out.rstrip().endswith("In total: 823")
    assert "0.75 x 36 = 27" in out
    assert "19.11 28.61" in run(capsys, "budget", "--config", SCENARIOS / "budget.json")[1]
    cfg = tmp_path / "one.json"
    cfg.write_text(json.dumps({"budget": [{"name": "only", "min": 1, "max": 2}]}))
    assert "In total: 1.00 2.00" in run(capsys, "budget", "--config", cfg)[1]
    cfg.write_text(json.dumps({"cost": [{"device": "x", "unit_cost": -1}]}))
    code, _, err = run(capsys, "budget", "--config", cfg)
    assert code == 3 and "$.cost" in err


def test_simulate_table3(capsys, pack, tmp_path):
    out = tmp_path / "t3"
    code, _, _ = run(capsys, "simulate", pack / "table3_m2.json", "--out", out)
    assert code == 0
    rows = list(csv.DictReader((out / "readings.csv").open(newline="")))
    assert [float(r["x"]) for r in rows] == [20, 15, 15, 10, 5]
    assert (out / "offsets.csv").exists()


def test_simulate_is_reproducible(capsys, pack, tmp_path):
    for name in ("a", "b"):
        assert run(capsys, "simulate", pack / "layout_a.json", "--seed", "7", "--out", tmp_path / name)[0] == 0
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_seed_flag_beats_environment(capsys, pack, tmp_path, monkeypatch):
    monkeypatch.setenv("FENCESIM_SEED", "99")
    run(capsys, "simulate", pack / "table3_m2.json", "--seed", "7", "--out", tmp_path / "x")
    assert json.loads((tmp_path / "x" / "report.json").read_text())["seed"] == 7
    run(capsys, "simulate", pack / "table3_m2.json", "--out", tmp_path / "y")
    assert json.loads((tmp_path / "y" / "report.json").read_text())["seed"] == 99


def test_simulate_errors_leave_no_outputs(capsys, tmp_path, pack):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    out = tmp_path / "out"
    code, _, err = run(capsys, "simulate", pack / "table3_m2.json", bad, "--out", out)
    assert code == 2 and "malformed" in err
    assert not out.exists()

    code, _, err = run(capsys, "simulate", tmp_path / "missing.json", "--out", out)
    assert code == 2

    invalid = tmp_path / "invalid.json"
    invalid.write_text(json.dumps({"layouts": [{"kind": "B", "spacing": 0}]}))
    code, _, err = run(capsys, "simulate", invalid, "--out", out)
    assert code == 3 and "$.layouts[0]" in err
    assert not out.exists()


def test_simulate_many_with_jobs(capsys, pack, tmp_path):
    code, out, _ = run(
        capsys, "simulate", pack / "table3_m2.json", pack / "layout_b.json", "--jobs", "2", "--out", tmp_path / "many"
    )
    assert code == 0
    assert (tmp_path / "many" / "table3_m2" / "report.json").exists()
    assert (tmp_path / "many" / "layout_b" / "report.json").exists()


def test_layout_exports(capsys, tmp_path):
    code, out, _ = run(capsys, "layout", SCENARIOS / "layout_a.json")
    assert code == 0 and "40 sensors" in out
    fractions = {}
    for kind in "ac":
        target = tmp_path / f"{kind}.json"
        assert run(capsys, "layout", SCENARIOS / f"layout_{kind}.json", "--export", target)[0] == 0
        (rec,) = json.loads(target.read_text())["layouts"]
        fractions[kind] = rec["blindFraction"]
        assert rec["regions"] and rec["sensors"]
    assert fractions["c"] > fractions["a"]
    target = tmp_path / "c.csv"
    assert run(capsys, "layout", SCENARIOS / "layout_c.json", "--export", target)[0] == 0
    rows = list(csv.DictReader(target.open(newline="")))
    assert {r["record"] for r in rows} == {"sensor", "region", "blindFraction"}
    assert run(capsys, "layout", SCENARIOS / "layout_c.json", "--export", tmp_path / "c.txt")[0] == 3


def test_layout_counts_per_side(capsys, tmp_path):
    cfg = tmp_path / "a.json"
    cfg.write_text(json.dumps({"field": {"width": 30, "height": 20}, "layouts": [{"kind": "A", "spacing": 5}]}))
    target = tmp_path / "a_out.json"
    run(capsys, "layout", cfg, "--export", target)
    (rec,) = json.loads(target.read_text())["layouts"]
    per_side = {}
    for s in rec["sensors"]:
        per_side[s["side"]] = per_side.get(s["side"], 0) + 1
    assert per_side == {"A": 12, "B": 8, "C": 12, "D": 8}


def test_inputs_untouched(capsys, pack, tmp_path):
    before = {p.name: p.read_bytes() for p in pack.iterdir()}
    run(capsys, "simulate", pack / "table3_m2.json", "--out", tmp_path / "o")
    run(capsys, "layout", pack / "layout_b.json")
    assert {p.name: p.read_bytes() for p in pack.iterdir()} == before


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "fencesim.cli", "pixel-table", "--distances", "40"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[1] == "40,50,38"
