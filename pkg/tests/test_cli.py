import json
import os
from pathlib import Path

import pytest

from ginoq.cli import main, parse_seeds


def _run_dir(capsys):
    out = capsys.readouterr().out
    return Path(out.strip().splitlines()[-1].split("outputs: ")[1]), out


def test_plan_reports_nonindexable_crossings(capsys):
    assert main(["plan", "--config", "nonindexable_10_7"]) == 0
    run, out = _run_dir(capsys)
    assert "NOT indexable" in out
    assert Path(os.environ["GINOQ_OUT"]) in run.parents
    rows = (run / "crossings.csv").read_text().splitlines()
    assert rows[0] == "# schema: ginoq.crossings/1"
    s1 = [float(r.split(",")[2]) for r in rows[2:] if r.split(",")[1] == "1"]
    assert any(abs(z + 4) < 0.01 for z in s1) and any(abs(z - 2) < 0.01 for z in s1)
    plan = json.loads((run / "plan.json").read_text())
    man = json.loads((run / "manifest.json").read_text())
    assert plan["config_hash"] == man["config_hash"] and man["finished"]


def test_certify_json(capsys):
    assert main(["certify", "--config", "patrol_10_4", "--json"]) == 0
    out = capsys.readouterr().out
    docs = json.loads(out[: out.rindex("]") + 1])
    assert [d["indexable"] for d in docs] == [True, True]


def test_train_rerun_is_bit_identical(capsys):
    argv = ["train", "--config", "nonindexable_10_7", "--algo", "gino-q,wibq", "--seeds", "2",
            "--horizon", "4000"]
    assert main(argv) == 0
    a, _ = _run_dir(capsys)
    assert main(argv + ["--jobs", "2"]) == 0
    b, _ = _run_dir(capsys)
    assert a != b
    for f in sorted(a.glob("diagnostics_*.csv")):
        assert f.read_bytes() == (b / f.name).read_bytes()
    assert len(list(a.glob("diagnostics_*.csv"))) == 4
    lines = (Path(os.environ["GINOQ_OUT"]) / "manifest.jsonl").read_text().splitlines()
    assert len(lines) == 2


def test_eval_table(capsys, tmp_path):
    assert main(["eval", "--config", "patrol_10_4", "random", "gain", "--seeds", "3",
                 "--horizon", "500"]) == 0
    run, out = _run_dir(capsys)
    rows = (run / "comparison.csv").read_text().splitlines()
    assert rows[0] == "# schema: ginoq.comparison/1"
    assert rows[1].endswith("upper_bound") and len(rows) == 4


def test_eval_without_policies_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["eval", "--config", "patrol_10_4"])
    assert exc.value.code == 2


def test_whittle_refused_on_nonindexable(capsys):
    assert main(["eval", "--config", "nonindexable_10_7", "whittle", "--seeds", "1"]) == 1
    assert "not indexable" in capsys.readouterr().err


def test_malformed_config_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[instance]\nbudget = 1\n[[class]]\nname = 'a'\ncount = 2\nstates = x\n")
    assert main(["plan", "--config", str(bad)]) == 1
    assert f"{bad}:6" in capsys.readouterr().err


def test_grid_flag_consistent(capsys):
    main(["plan", "--config", "nonindexable_10_7", "--grid", "0.01"])
    a, _ = _run_dir(capsys)
    main(["plan", "--config", "nonindexable_10_7", "--grid", "0.001"])
    b, _ = _run_dir(capsys)
    la = json.loads((a / "plan.json").read_text())["lambda_star"]
    lb = json.loads((b / "plan.json").read_text())["lambda_star"]
    assert abs(la - lb) < 0.01


def test_seed_syntax():
    assert parse_seeds("3") == [0, 1, 2]
    assert parse_seeds("4,9") == [4, 9]
    assert parse_seeds("5-7") == [5, 6, 7]
