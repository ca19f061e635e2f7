"""End-to-end tests of the command-line interface."""

import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from keq.cli import main, read_equating_table, read_metrics_csv, write_equating_table
from keq.core import EquatingTable, ScoreScale
from keq.simulate import ScenarioSpec, gen_population


def write_person_csv(path, dataset):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        names = list(dataset.columns)
        writer.writerow(["score"] + names)
        for i in range(dataset.n):
            writer.writerow([dataset.scores[i]] + [dataset.columns[n][i] for n in names])


@pytest.fixture()
def person_files(tmp_path):
    sc = replace(ScenarioSpec.from_table(1), n=1500)
    p = gen_population("P", sc, seed=10)
    q = gen_population("Q", sc, seed=11)
    p_path, q_path = tmp_path / "p.csv", tmp_path / "q.csv"
    write_person_csv(p_path, p)
    write_person_csv(q_path, q)
    return p_path, q_path


NEC_FLAGS = [
    "--covariates", "school,attempt,other_score",
    "--bin", "other_score=50,60,70,80,100",
    "--scale", "0,100",
]


class TestCmdEquate:
    def test_nec_happy_path(self, person_files, tmp_path):
        p_path, q_path = person_files
        out = tmp_path / "table.csv"
        code = main(["equate", "--design", "nec", "--p", str(p_path),
                     "--q", str(q_path), *NEC_FLAGS, "--out", str(out)])
        assert code == 0
        table = read_equating_table(out)
        assert table.method == "GKE"
        assert table.source_scale == ScoreScale(0, 100)
        assert np.all(np.diff(table.equated) >= -1e-9)

    def test_sequential_records_covariate_summary(self, person_files, tmp_path):
        p_path, q_path = person_files
        out = tmp_path / "seq.csv"
        code = main(["equate", "--design", "nec", "--p", str(p_path),
                     "--q", str(q_path), *NEC_FLAGS,
                     "--sequential", "--equate-covariate", "other_score",
                     "--out", str(out)])
        assert code == 0
        text = out.read_text(encoding="utf-8")
        assert "# method: sequential GKE" in text
        assert "# covariate_mean_shift:" in text
        assert read_equating_table(out).method == "sequential GKE"

    def test_identical_files_give_identity(self, person_files, tmp_path):
        p_path, _ = person_files
        out = tmp_path / "ident.csv"
        code = main(["equate", "--design", "eg", "--p", str(p_path),
                     "--q", str(p_path), "--scale", "0,100",
                     "--out", str(out), "--precision", "full"])
        assert code == 0
        table = read_equating_table(out)
        assert np.max(np.abs(table.equated - table.source_scale.points)) < 1e-6

    def test_bootstrap_appends_see(self, person_files, tmp_path):
        p_path, q_path = person_files
        out = tmp_path / "boot.csv"
        code = main(["equate", "--design", "eg", "--p", str(p_path),
                     "--q", str(q_path), "--scale", "0,100", "--no-presmooth",
                     "--bootstrap", "12", "--seed", "5", "--out", str(out),
                     "--dump-replicates", str(tmp_path / "reps.csv")])
        assert code == 0
        table = read_equating_table(out)
        assert table.see is not None
        assert np.all(table.see >= 0)
        reps = (tmp_path / "reps.csv").read_text(encoding="utf-8").splitlines()
        assert reps[0].startswith("score,replicate_0")
        assert len(reps) == 102

    def test_malformed_csv_exits_2_with_line(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("score,g\n3,a\n,b\n", encoding="utf-8")
        ok = tmp_path / "ok.csv"
        ok.write_text("score,g\n3,a\n", encoding="utf-8")
        code = main(["equate", "--design", "eg", "--p", str(bad),
                     "--q", str(ok), "--out", str(tmp_path / "o.csv")])
        assert code == 2
        assert "line 3" in capsys.readouterr().err

    def test_sequential_without_covariate_exits_2(self, person_files, tmp_path):
        p_path, q_path = person_files
        code = main(["equate", "--design", "nec", "--p", str(p_path),
                     "--q", str(q_path), *NEC_FLAGS, "--sequential",
                     "--out", str(tmp_path / "o.csv")])
        assert code == 2


class TestCmdSimulate:
    def test_smoke_report(self, tmp_path):
        out = tmp_path / "metrics.csv"
        code = main(["simulate", "--scenario", "1", "--reps", "2", "--seed", "1",
                     "--score-range", "0,60", "--out", str(out)])
        assert code == 0
        per_method, summary = read_metrics_csv(out)
        assert set(per_method) == {"GKE", "sequential GKE"}
        for vecs in per_method.values():
            assert np.all(np.isfinite(vecs["bias"]))
            assert np.all(np.isfinite(vecs["see"]))
            assert np.all(np.isfinite(vecs["rmse"]))
        assert "mean_ediff" in summary and "dtm_exceed" in summary

    def test_unknown_scenario_exits_2(self, tmp_path):
        code = main(["simulate", "--scenario", "99", "--reps", "2",
                     "--out", str(tmp_path / "m.csv")])
        assert code == 2

    def test_byte_identical_reruns(self, tmp_path):
        out1, out2 = tmp_path / "m1.csv", tmp_path / "m2.csv"
        args = ["simulate", "--scenario", "1", "--reps", "2", "--seed", "7",
                "--score-range", "0,60"]
        assert main(args + ["--out", str(out1)]) == 0
        assert main(args + ["--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_custom_scenario_config(self, tmp_path):
        config = {
            "relationship": "weak", "alpha": 0.5, "beta": 30.0,
            "covariate_shift": 10.0, "y_transform": [1.0, 0.0], "n": 800,
            "generator": {"score_range": [0, 80], "error_sd": 8.0},
        }
        cfg_path = tmp_path / "scenario.json"
        cfg_path.write_text(json.dumps(config), encoding="utf-8")
        out = tmp_path / "m.csv"
        code = main(["simulate", "--scenario-config", str(cfg_path),
                     "--reps", "2", "--seed", "3", "--out", str(out)])
        assert code == 0
        per_method, _ = read_metrics_csv(out)
        assert per_method["GKE"]["score"][-1] == 80

    def test_scenario_flags_are_exclusive(self, tmp_path):
        assert main(["simulate", "--reps", "2",
                     "--out", str(tmp_path / "m.csv")]) == 2


def write_chain_fixture(tmp_path, cyclic=False):
    rng = np.random.default_rng(3)
    forms = {}
    for name, shift in (("s2017", 0), ("s2018", 1), ("f2017", -4), ("f2018", -3)):
        n = 1200
        school = rng.integers(0, 2, size=n)
        scores = np.clip(np.round(rng.normal(25 + 3 * school + shift, 6, n)),
                         0, 50).astype(int)
        path = tmp_path / f"{name}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["score", "school"])
            for i in range(n):
                writer.writerow([scores[i], school[i]])
        forms[name] = f"{name}.csv"
    steps = [
        {"source": "s2018", "target": "s2017", "design": "eg"},
        {"source": "f2018", "target": "f2017", "design": "eg"},
        {"source": "f2017", "target": "s2017", "design": "nec",
         "covariates": ["school"]},
    ]
    if cyclic:
        steps.append({"source": "g1", "target": "g2", "design": "eg"})
        steps.append({"source": "g2", "target": "g1", "design": "eg"})
    plan = {
        "baseline": "s2017",
        "scale": [0, 50],
        "covariates": {"school": {"type": "categorical"}},
        "datasets": forms,
        "steps": steps,
    }
    plan_path = tmp_path / "plan.json"
    plan_path.write_text(json.dumps(plan), encoding="utf-8")
    return plan_path


class TestCmdChain:
    def test_chain_runs_and_writes_tables(self, tmp_path):
        plan_path = write_chain_fixture(tmp_path)
        out_dir = tmp_path / "out"
        code = main(["chain", "--plan", str(plan_path), "--out-dir", str(out_dir),
                     "--precision", "full"])
        assert code == 0
        step_files = sorted(f.name for f in out_dir.glob("step_*.csv"))
        assert len(step_files) == 3
        composed = sorted(f.name for f in out_dir.glob("composed_*.csv"))
        assert composed == ["composed_f2017.csv", "composed_f2018.csv",
                            "composed_s2018.csv"]
        for f in out_dir.glob("*.csv"):
            table = read_equating_table(f)
            assert np.all(np.diff(table.equated) >= -1e-9)

    def test_one_step_chain_matches_cmd_equate(self, tmp_path):
        plan_path = write_chain_fixture(tmp_path)
        out_dir = tmp_path / "out"
        assert main(["chain", "--plan", str(plan_path),
                     "--out-dir", str(out_dir), "--precision", "full"]) == 0
        direct = tmp_path / "direct.csv"
        assert main(["equate", "--design", "eg",
                     "--p", str(tmp_path / "s2018.csv"),
                     "--q", str(tmp_path / "s2017.csv"),
                     "--covariates", "school", "--scale", "0,50",
                     "--out", str(direct), "--precision", "full"]) == 0
        chain_table = read_equating_table(out_dir / "step_s2018-_s2017.csv")
        direct_table = read_equating_table(direct)
        assert np.allclose(chain_table.equated, direct_table.equated, atol=1e-12)

    def test_cyclic_plan_exits_2(self, tmp_path, capsys):
        plan_path = write_chain_fixture(tmp_path, cyclic=True)
        code = main(["chain", "--plan", str(plan_path),
                     "--out-dir", str(tmp_path / "out")])
        assert code == 2
        assert "cycle" in capsys.readouterr().err

    def test_byte_identical_reruns(self, tmp_path):
        plan_path = write_chain_fixture(tmp_path)
        d1, d2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["chain", "--plan", str(plan_path), "--out-dir", str(d1)]) == 0
        assert main(["chain", "--plan", str(plan_path), "--out-dir", str(d2)]) == 0
        for f1 in sorted(d1.glob("*.csv")):
            assert f1.read_bytes() == (d2 / f1.name).read_bytes()


class TestCmdPlotData:
    def test_metrics_reshape_to_three_panels(self, tmp_path):
        metrics = tmp_path / "metrics.csv"
        assert main(["simulate", "--scenario", "1", "--reps", "2", "--seed", "2",
                     "--score-range", "0,60", "--out", str(metrics)]) == 0
        out = tmp_path / "plot.csv"
        assert main(["plot-data", str(metrics), "--out", str(out),
                     "--svg", str(tmp_path / "svg")]) == 0
        lines = out.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "x,series,value,panel"
        panels = {line.split(",")[-1] for line in lines[1:]}
        assert panels == {"bias", "see", "rmse"}
        series = {line.split(",")[1] for line in lines[1:]}
        assert series == {"GKE", "sequential GKE"}
        svgs = sorted(f.name for f in (tmp_path / "svg").glob("*.svg"))
        assert svgs == ["bias.svg", "rmse.svg", "see.svg"]

    def test_tables_overlay_with_identity_and_see_bands(self, tmp_path):
        t1 = EquatingTable(ScoreScale(0, 4), [0.5, 1.4, 2.5, 3.6, 4.4],
                           see=[0.1] * 5, method="GKE")
        t2 = EquatingTable(ScoreScale(0, 4), [0.2, 1.2, 2.2, 3.2, 4.2],
                           method="sequential GKE")
        p1, p2 = tmp_path / "t1.csv", tmp_path / "t2.csv"
        write_equating_table(t1, p1, "full")
        write_equating_table(t2, p2, "full")
        out = tmp_path / "plot.csv"
        assert main(["plot-data", str(p1), str(p2), "--out", str(out)]) == 0
        lines = out.read_text(encoding="utf-8").splitlines()[1:]
        series = {line.split(",")[1] for line in lines}
        assert series == {"GKE", "GKE +see", "GKE -see", "sequential GKE",
                          "identity"}

    def test_malformed_input_exits_2(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n", encoding="utf-8")
        assert main(["plot-data", str(bad), "--out", str(tmp_path / "o.csv")]) == 2


class TestRoundTrip:
    def test_equating_table_full_precision_round_trip(self, tmp_path):
        rng = np.random.default_rng(8)
        equated = np.cumsum(rng.uniform(0.3, 1.4, size=21)) - 3.123456789
        table = EquatingTable(ScoreScale(0, 20), equated,
                              see=rng.uniform(0.0, 1.0, size=21), method="GKE")
        path = tmp_path / "t.csv"
        write_equating_table(table, path, "full")
        back = read_equating_table(path)
        assert back.source_scale == table.source_scale
        assert np.array_equal(back.equated, table.equated)
        assert np.array_equal(back.see, table.see)
        assert back.method == table.method
