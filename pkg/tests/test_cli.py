import csv
import io
import json
import subprocess
import sys

import pytest

from harmcalc import cli, verify
from harmcalc.modelfile import export_model


@pytest.fixture
def model_path(tmp_path, treatment):
    scm, util = treatment
    p = tmp_path / "treatment.json"
    export_model(p, scm, util)
    return str(p)


def run_json(capsys, argv):
    code = cli.main(argv)
    out = capsys.readouterr().out
    assert code == 0, out
    return json.loads(out)


class TestQueries:
    def test_expected(self, capsys, model_path):
        res = run_json(capsys, ["expected", "--model", model_path])
        assert res["default_expected_utility"] == pytest.approx(0.5)
        assert res["actions"]["2"]["expected_harm"] == pytest.approx(0.1)
        assert abs(res["actions"]["1"]["decomposition_residual"]) < 1e-12

    def test_harm(self, capsys, model_path):
        res = run_json(capsys, ["harm", "--model", model_path, "--action", "2", "--outcome", "Y=0"])
        assert res["harm"] == pytest.approx(0.5)
        assert res["benefit"] == 0.0

    def test_policy(self, capsys, model_path):
        res = run_json(capsys, ["policy", "--model", model_path, "--lambda", "0,1"])
        assert [r["action"] for r in res["policy"]] == [1, 1]

    def test_cate_and_pn(self, capsys, model_path):
        res = run_json(capsys, ["cate", "--model", model_path, "--action", "1"])
        assert res["control"] == 0 and res["cate"] == pytest.approx(0.3)
        res = run_json(capsys, ["pn", "--model", model_path, "--action", "1", "--outcome", "Y=1", "--intervened"])
        # P(Y_0 = 0 | do(T=1), Y = 1) = 0.3 / 0.8
        assert res["pn"] == pytest.approx(0.375)


class TestDose:
    def test_stdout_csv(self, capsys):
        assert cli.main(["dose", "--grid", "0:30:0.1", "--lambda", "0,100"]) == 0
        text = capsys.readouterr().out
        meta = [l for l in text.splitlines() if l.startswith("#")]
        assert "# optimal_dose_lambda_0: 19.3" in meta
        assert "# optimal_dose_lambda_100: 17.3" in meta
        rows = list(csv.DictReader(io.StringIO("\n".join(l for l in text.splitlines() if not l.startswith("#")))))
        best = max(rows, key=lambda r: float(r["hpu_lambda_0"]))
        assert float(best["dose"]) == 19.3

    def test_files_and_summary(self, capsys, tmp_path):
        out = tmp_path / "dose.csv"
        res = run_json(capsys, ["dose", "--out", str(out), "--samples", "20000", "--beta", "0.01"])
        assert out.exists() and (tmp_path / "dose_tradeoff.csv").exists()
        assert res["optimal_dose"]["0"] == 19.3
        mc = res["monte_carlo_harm_at_optimum"]["0"]
        assert abs(mc["estimate"] - mc["closed_form"]) < 4 * mc["stderr"]
        assert set(res["shifted_model"]["hpu_argmax"]) == {"1.0", "10.0", "100.0"}


class TestAdversaryAndZoo:
    def test_single_action(self, capsys, model_path):
        res = run_json(capsys, ["adversary", "--model", model_path, "--action", "1"])
        assert res["harmful"] and res["witness"] == 1

    def test_two_actions_write_files(self, capsys, model_path, tmp_path):
        d = tmp_path / "w"
        res = run_json(capsys, ["adversary", "--model", model_path, "--action", "1,2", "--out", str(d)])
        assert res["environment"] in ("M+", "M-")
        names = sorted(p.name for p in d.iterdir())
        assert names == ["witness_M0.json", "witness_Mminus.json", "witness_Mplus.json", "witness_table.csv"]

    @pytest.mark.parametrize("name", ["treatment", "assistant", "preemption"])
    def test_zoo(self, capsys, name):
        res = run_json(capsys, ["zoo", name])
        assert res["model"] == name and "published" in res

    def test_zoo_preemption_values(self, capsys):
        res = run_json(capsys, ["zoo", "preemption"])
        assert res["expected_harm"] == {"0": 0.0, "1": 1.0}


class TestExitCodes:
    def test_missing_model(self, capsys):
        assert cli.main(["expected"]) == 2
        assert "--model" in capsys.readouterr().err

    def test_bad_action(self, capsys, model_path):
        assert cli.main(["harm", "--model", model_path, "--action", "9", "--outcome", "Y=0"]) == 2
        assert "not a value" in capsys.readouterr().err

    def test_unreadable_file(self, capsys, tmp_path):
        assert cli.main(["expected", "--model", str(tmp_path / "nope.json")]) == 2

    def test_bad_lambda(self, capsys, model_path):
        assert cli.main(["policy", "--model", model_path, "--lambda", "x"]) == 2

    def test_bad_grid(self, capsys):
        assert cli.main(["dose", "--grid", "0:30"]) == 2

    def test_verify_pass(self, capsys):
        assert cli.main(["verify", "--check", "treatment-model"]) == 0
        assert "1/1 checks passed" in capsys.readouterr().out

    def test_verify_failure(self, capsys, monkeypatch):
        monkeypatch.setitem(verify.CHECKS, "treatment-model", lambda: (False, "forced"))
        assert cli.main(["verify", "--check", "treatment-model"]) == 3
        assert "FAIL" in capsys.readouterr().out

    def test_console_entry(self):
        r = subprocess.run([sys.executable, "-m", "harmcalc.cli", "zoo", "preemption"],
                           capture_output=True, text=True)
        assert r.returncode == 0 and json.loads(r.stdout)["expected_harm"]["1"] == 1.0
