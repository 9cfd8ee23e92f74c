import json

import pytest
from click.testing import CliRunner

from milpforge.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(main, [str(a) for a in args], catch_exceptions=False)


class TestRun:
    def test_factory_outcome_json(self, runner, data_dir):
        result = invoke(runner, "run", data_dir / "instances" / "factory.json",
                        "--config", data_dir / "configs" / "factory_scripted.json")
        assert result.exit_code == 0, result.output
        outcome = json.loads(result.output)
        assert outcome["status"] == "Optimal"
        assert outcome["objective"] == pytest.approx(1500.0)

    def test_missing_transcript_errors_json(self, runner, tmp_path, data_dir):
        config = tmp_path / "c.json"
        config.write_text(json.dumps({"backend": {"kind": "scripted",
                                                  "transcript": "nope.json"}}))
        result = runner.invoke(main, ["run",
                                      str(data_dir / "instances" / "factory.json"),
                                      "--config", str(config)])
        assert result.exit_code != 0


class TestStage:
    def test_stage_by_stage_and_precondition_exit_2(self, runner, tmp_path, data_dir):
        desc = json.loads((data_dir / "instances" / "factory.json").read_text())
        config = {"backend": {"kind": "scripted",
                              "transcript": str(data_dir / "transcripts" / "factory.json")}}
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(config))
        root = tmp_path / "projects"
        created = invoke(runner, "init", desc["description"], "--root", root,
                         "--config", cfg_path, "--project-id", "p1")
        assert created.exit_code == 0
        # premature stage -> exit code 2 with machine-readable stderr
        early = runner.invoke(main, ["stage", "p1", "Formulate", "--root", str(root)])
        assert early.exit_code == 2
        err = json.loads(early.stderr)
        assert err["error"] == "StagePrecondition"
        for stage in ("ExtractParams", "ExtractClauses", "Formulate", "Code",
                      "Assemble"):
            result = invoke(runner, "stage", "p1", stage, "--root", root)
            assert result.exit_code == 0, result.output
        outcome = json.loads(result.output)["outcome"]
        assert outcome["status"] == "Optimal"


class TestEval:
    def test_suite_with_ablation(self, runner, tmp_path, data_dir):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"backend": {
            "kind": "scripted",
            "transcript": str(data_dir / "transcripts" / "suite_faulty.json")}}))
        full = invoke(runner, "eval", "--suite", data_dir / "instances",
                      "--config", cfg)
        assert json.loads(full.output)["accuracy"] == 1.0
        ablated = invoke(runner, "eval", "--suite", data_dir / "instances",
                         "--config", cfg, "--ablate", "disable_debug",
                         "--csv", tmp_path / "report.csv")
        doc = json.loads(ablated.output)
        assert doc["accuracy"] == pytest.approx(2 / 3)
        assert (tmp_path / "report.csv").read_text().count("\n") == 4


class TestSiftAndEquiv:
    def test_sift_rows_csv(self, runner, tmp_path, data_dir):
        out = tmp_path / "hist.csv"
        result = invoke(runner, "sift", "rows", data_dir / "lp" / "scuc_like.lp",
                        "--seed", 11, "--init-k", 60, "--csv", out)
        assert result.exit_code == 0, result.output
        summary = json.loads(result.output)
        assert summary["status"] == "Optimal"
        assert summary["final_active"] < summary["total"]
        assert out.read_text().startswith("iteration,active,objective")

    def test_equiv_identity(self, runner, data_dir):
        lp = data_dir / "golden" / "two_var.lp"
        result = invoke(runner, "equiv", lp, lp)
        assert result.exit_code == 0
        doc = json.loads(result.output)
        assert doc["equivalent"] and doc["variables"] == {"x": "x", "y": "y"}

    def test_equiv_mismatch_exit_1(self, runner, tmp_path, data_dir):
        other = tmp_path / "other.lp"
        other.write_text("""Minimize
 obj: x
Subject To
 c1: x + y <= 4
End
""")
        result = runner.invoke(main, ["equiv",
                                      str(data_dir / "golden" / "two_var.lp"),
                                      str(other)])
        assert result.exit_code == 1
        assert json.loads(result.output)["equivalent"] is False


class TestLpUtils:
    def test_lp_write_canonicalizes(self, runner, tmp_path):
        messy = tmp_path / "m.lp"
        messy.write_text("""maximize
 obj: 3x + 2 y
subject to
 c1: x + y <= 4
 c2: x <= 2
end
""".replace("3x", "3 x"))
        result = invoke(runner, "lp", "write", messy)
        assert result.exit_code == 0
        assert result.output.startswith("\\ columns: x y")

    def test_lp_check(self, runner, data_dir):
        result = invoke(runner, "lp", "check", data_dir / "golden" / "two_var.lp")
        assert result.exit_code == 0
        doc = json.loads(result.output)
        assert doc["roundtrip"] and doc["stable"]
