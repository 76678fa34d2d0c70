import json
import math
import os

import numpy as np
import pytest

from discofit.bench import ExperimentConfig, gen_dataset
from discofit.cli import main, read_dataset, write_dataset
from discofit.hybrid import eval_hybrid, load_model

SUBCOMMANDS = ["fit", "eval", "detect", "repair", "bench", "certify"]


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    write_dataset(d / "A.csv", gen_dataset(ExperimentConfig(), False))
    write_dataset(d / "B.csv", gen_dataset(ExperimentConfig(), True))
    return d


@pytest.fixture(scope="module")
def model_b(files):
    path = files / "b.json"
    assert main(["fit", str(files / "B.csv"), str(path)]) == 0
    return path


def test_csv_round_trip(tmp_path):
    data = gen_dataset(ExperimentConfig(), True)
    write_dataset(tmp_path / "d.csv", data)
    back = read_dataset(tmp_path / "d.csv")
    assert back.inputs.tobytes() == data.inputs.tobytes()
    assert back.targets.tobytes() == data.targets.tobytes()


def test_csv_comments_and_header(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("# generated\nx1,x2,y\n1,2,3\n# note\n4,5,6\n")
    data = read_dataset(path)
    np.testing.assert_array_equal(data.inputs, [[1, 2], [4, 5]])


def test_fit_reports_the_spike(files, model_b, capsys):
    main(["fit", str(files / "B.csv"), str(files / "b2.json")])
    out = capsys.readouterr().out
    assert "jumps: 1" in out
    line = [l for l in out.splitlines() if l.strip().startswith("row 29")][0]
    assert "x=(3.141592654)" in line
    height = float(line.split("height=")[1])
    assert abs(height + 1) < 0.05


def test_fit_clean(files, capsys):
    assert main(["fit", str(files / "A.csv"), str(files / "a.json")]) == 0
    assert "jumps: 0" in capsys.readouterr().out


def test_ragged_csv(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("x1,y\n" + "".join(f"{i},{i}\n" for i in range(25)) + "3\n")
    out = tmp_path / "m.json"
    assert main(["fit", str(bad), str(out)]) == 2
    assert not out.exists()
    err = capsys.readouterr().err
    assert len(err.strip().splitlines()) == 1


def test_bad_header(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert main(["detect", str(bad)]) == 2


def test_eval_point(model_b, capsys):
    assert main(["eval", str(model_b), "--point", repr(math.pi)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "x1,y"
    value = float(lines[1].split(",")[1])
    assert value == eval_hybrid(load_model(model_b), np.array([[math.pi]]))[0]


def test_eval_batch_equals_rows(model_b, files, capsys):
    assert main(["eval", str(model_b), str(files / "A.csv")]) == 0
    batch = [float(l.split(",")[1]) for l in capsys.readouterr().out.strip().splitlines()[1:]]
    model = load_model(model_b)
    X = read_dataset(files / "A.csv").inputs
    singles = [model.predict(x[None, :])[0] for x in X]
    assert batch == singles


def test_eval_emit_plot(model_b, files, tmp_path):
    plot = tmp_path / "plot.csv"
    assert main(["eval", str(model_b), str(files / "B.csv"), "--emit-plot", str(plot)]) == 0
    lines = plot.read_text().splitlines()
    assert lines[0] == "x,truth,smooth,hybrid"
    assert len(lines) == 61


def test_eval_dimension_mismatch(model_b):
    assert main(["eval", str(model_b), "--point", "1,2"]) == 2


def test_eval_corrupt_model(model_b, tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text(model_b.read_text().replace('"epsilon": 0.01', '"epsilon": 0.02'))
    assert main(["eval", str(broken), "--point", "1"]) == 2
    assert main(["eval", str(tmp_path / "missing.json"), "--point", "1"]) == 2


def test_detect(files, tmp_path, capsys):
    out = tmp_path / "cont.csv"
    assert main(["detect", str(files / "B.csv"), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "candidates: 1" in text and "row 29" in text
    assert len(read_dataset(out)) == 59


def test_repair(files, tmp_path):
    out = tmp_path / "rep.csv"
    model = tmp_path / "m.json"
    assert main(["repair", str(files / "B.csv"), str(out), "--model-out", str(model)]) == 0
    rows = np.loadtxt(out, delimiter=",", skiprows=1)
    at_pi = rows[rows[:, 0] == math.pi][0]
    assert at_pi[1] == -2.0 and abs(at_pi[3] + 2) < 0.05
    assert model.exists()


def test_certify(tmp_path, capsys):
    jumps = tmp_path / "j.csv"
    jumps.write_text("x1,x2,h\n0,0,1\n1,0,-2\n")
    assert main(["certify", str(jumps), "--epsilon", "0.01"]) == 0
    out = capsys.readouterr().out
    assert "units: 2" in out
    residual = float(out.split("certified residual: ")[1].split()[0])
    assert residual < 0.01


def test_certify_budget_failure(tmp_path):
    jumps = tmp_path / "j.csv"
    jumps.write_text("x1,h\n0,1\n")
    assert main(["certify", str(jumps), "--kernel", "morlet", "--max-doublings", "0"]) == 3


def test_certify_custom_table(tmp_path):
    table = tmp_path / "k.csv"
    r = np.linspace(0, 5, 101)
    table.write_text("radius,value\n" + "".join(f"{float(a)!r},{float(b)!r}\n" for a, b in zip(r, np.exp(-r ** 2))))
    jumps = tmp_path / "j.csv"
    jumps.write_text("x1,h\n0,1\n")
    assert main(["certify", str(jumps), "--kernel", f"table:{table}"]) == 0


def test_bench_default(tmp_path, capsys):
    assert main(["bench", "--out", str(tmp_path / "o")]) == 0
    doc = json.loads((tmp_path / "o" / "table1.json").read_text())
    assert [(r["dataset"], r["model"], r["neurons"]) for r in doc["rows"]] == [
        ("A", "mlp", 4), ("B", "mlp", 4), ("B", "mlp", 10), ("B", "hybrid", 4)
    ]


def test_bench_seed_changes_only_seeded_fields(tmp_path):
    main(["bench", "--out", str(tmp_path / "s42")])
    main(["bench", "--out", str(tmp_path / "s43"), "--seed", "43"])
    a = json.loads((tmp_path / "s42" / "table1.json").read_text())
    b = json.loads((tmp_path / "s43" / "table1.json").read_text())
    assert a["details"]["test_rows"] != b["details"]["test_rows"]
    a["config"].pop("seed"), b["config"].pop("seed")
    assert a["config"] == b["config"]
    assert a["reference_rows"] == b["reference_rows"]
    assert a["details"]["jumps"][0]["location"] == b["details"]["jumps"][0]["location"]


def test_bench_example2_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"experiment": "example2"}))
    assert main(["bench", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    doc = json.loads((tmp_path / "o" / "example2.json").read_text())
    assert abs(doc["details"]["hybrid_at_origin"] - 2) < 0.05


def test_bench_bad_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"experiment": "table1", "bogus": 1}))
    assert main(["bench", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()


@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_help(cmd, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    with pytest.raises(SystemExit) as info:
        main([cmd, "--help"])
    assert info.value.code == 0
    assert "usage" in capsys.readouterr().out
    assert list(tmp_path.iterdir()) == []


def test_unknown_flag(files):
    with pytest.raises(SystemExit) as info:
        main(["detect", str(files / "B.csv"), "--bogus"])
    assert info.value.code == 2


def test_thread_cap_env(files, monkeypatch):
    monkeypatch.setenv("DISCOFIT_THREADS", "1")
    assert main(["detect", str(files / "B.csv")]) == 0
    monkeypatch.setenv("DISCOFIT_THREADS", "zero")
    assert main(["detect", str(files / "B.csv")]) == 2


def test_no_partial_output(files, tmp_path):
    target = tmp_path / "missing_dir" / "m.json"
    assert main(["fit", str(files / "B.csv"), str(target)]) == 2
    assert not target.parent.exists()
    assert not [p for p in files.iterdir() if p.name.endswith(".tmp")]


def test_module_entry_point(files):
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "discofit", "detect", str(files / "A.csv")],
                         capture_output=True, text=True, env={**os.environ})
    assert res.returncode == 0
    assert "candidates: 0" in res.stdout
