"""End-to-end command-line tests: every exit code of every subcommand.

Exit contract: 0 success, 1 input error, 2 solver failure, 3 a verification
suite measured a violation.  stdout is one JSON object per line.
"""

from __future__ import annotations

import json

import numpy as np
import pytest

from goursat2d.cli import main
from goursat2d.fileio import read_grid_csv, read_report_json
from goursat2d.norms import classical_l2_norm
from goursat2d.operator import make_context, residual
from goursat2d.problem import BUILTIN_PROBLEMS
from goursat2d.grid import build_grid


def run_cli(argv):
    """main() plus argparse's SystemExit, reduced to a plain return code."""
    try:
        return main(argv)
    except SystemExit as exc:
        return exc.code


def stdout_lines(capsys):
    out = capsys.readouterr().out
    return [json.loads(line) for line in out.splitlines() if line.strip()]


LINEAR_MEMORY_DOC = {
    "meta": {"n": 1, "B": 1.0, "b": "0"},
    "functions": {"f1": ["0.5*z1"], "f2": ["0"]},
    "coefficients": {"A1": [["1"]], "A2": [["1"]], "A1x": [["0"]], "A2y": [["0"]]},
    "label": "memory-a1",
}

STIFF_DOC = {
    "meta": {"n": 1, "B": 200.0, "b": "0"},
    "functions": {"f1": ["200*z1"], "f2": ["0"]},
    "coefficients": {"A1": [["0"]], "A2": [["0"]], "A1x": [["0"]], "A2y": [["0"]]},
    "label": "stiff",
}


@pytest.fixture
def linear_doc(tmp_path):
    path = tmp_path / "linear.json"
    path.write_text(json.dumps(LINEAR_MEMORY_DOC))
    return str(path)


@pytest.fixture
def stiff_doc(tmp_path):
    path = tmp_path / "stiff.json"
    path.write_text(json.dumps(STIFF_DOC))
    return str(path)


class TestSolve:
    def test_zero_problem_unit_rhs(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = run_cli(["solve", "--builtin", "zero", "--n", "16",
                        "--rhs", "1", "--out", str(out)])
        assert code == 0
        lines = stdout_lines(capsys)
        assert lines[-1]["converged"] is True
        g, state = read_grid_csv(f"{out}.grid.csv")
        # z_xy = 1 with zero edges integrates to z = xy
        assert state.z.values[-1, -1, 0] == pytest.approx(1.0, abs=1e-14)
        report = read_report_json(f"{out}.report.json")
        assert report["result"]["converged"] is True
        assert report["result"]["iterations"] == 1

    def test_problem_document_with_solver_section(self, tmp_path):
        doc = dict(LINEAR_MEMORY_DOC)
        doc["rhs"] = {"v": ["x + y"]}
        doc["solver"] = {"m": 6.0, "method": "picard", "tol": 1e-9}
        path = tmp_path / "doc.json"
        path.write_text(json.dumps(doc))
        out = tmp_path / "run"
        code = run_cli(["solve", "--problem", str(path), "--n", "12", "--out", str(out)])
        assert code == 0
        report = read_report_json(f"{out}.report.json")
        assert report["solver"]["method"] == "picard"
        assert report["result"]["m_used"] == 6.0
        # document says m = 6, so no automatic choice was made
        assert report["weight_choice"] is None

    def test_cli_flags_override_document(self, tmp_path):
        doc = dict(LINEAR_MEMORY_DOC)
        doc["rhs"] = {"v": ["1"]}
        doc["solver"] = {"m": 6.0}
        path = tmp_path / "doc.json"
        path.write_text(json.dumps(doc))
        out = tmp_path / "run"
        code = run_cli(["solve", "--problem", str(path), "--n", "8",
                        "--m", "7.5", "--out", str(out)])
        assert code == 0
        assert read_report_json(f"{out}.report.json")["result"]["m_used"] == 7.5

    def test_manufactured_reference_error_is_reported(self, tmp_path):
        out = tmp_path / "run"
        code = run_cli(["solve", "--builtin", "zero", "--n", "16",
                        "--rhs", "cos(x)*cos(y)", "--zstar", "cos(x)*cos(y)",
                        "--out", str(out)])
        assert code == 0
        report = read_report_json(f"{out}.report.json")
        assert report["error_vs_reference"]["classical"] <= 1e-12

    def test_residual_round_trips_from_emitted_grid(self, tmp_path):
        out = tmp_path / "run"
        code = run_cli(["solve", "--builtin", "example46", "--n", "12",
                        "--rhs", "x + y", "--out", str(out)])
        assert code == 0
        report = read_report_json(f"{out}.report.json")
        g, _ = read_grid_csv(f"{out}.grid.csv")
        spec = BUILTIN_PROBLEMS["example46"]()
        ctx = make_context(spec, build_grid(12), m=report["result"]["m_used"])
        v = spec.rhs  # builtin has no rhs; sample the same expression
        from goursat2d.problem import XYFunction
        v = XYFunction.from_sources("x + y").sample(ctx.grid)
        info = residual(ctx, g, v)
        scale = max(report["result"]["residual_classical"], 1e-300)
        assert abs(info.classical - report["result"]["residual_classical"]) / scale <= 1e-12
        wscale = max(report["result"]["residual_weighted"], 1e-300)
        assert abs(info.weighted - report["result"]["residual_weighted"]) / wscale <= 1e-12

    def test_malformed_expression_exits_1_with_position(self, capsys):
        code = run_cli(["solve", "--builtin", "zero", "--n", "8", "--rhs", "1 + (x*"])
        assert code == 1
        err = capsys.readouterr().err
        assert "offset" in err

    def test_missing_problem_file_exits_1(self, tmp_path):
        code = run_cli(["solve", "--problem", str(tmp_path / "nope.json"), "--n", "8"])
        assert code == 1

    def test_invalid_json_document_exits_1(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{broken")
        code = run_cli(["solve", "--problem", str(path), "--n", "8"])
        assert code == 1
        assert "not valid JSON" in capsys.readouterr().err

    def test_rhs_missing_everywhere_exits_1(self, capsys):
        code = run_cli(["solve", "--builtin", "zero", "--n", "8"])
        assert code == 1
        assert "right-hand side" in capsys.readouterr().err

    def test_iteration_cap_exits_2_with_partial_artifacts(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = run_cli(["solve", "--builtin", "example46", "--n", "8",
                        "--rhs", "x*y", "--method", "picard", "--max-iter", "1",
                        "--tol", "1e-14", "--out", str(out)])
        assert code == 2
        lines = stdout_lines(capsys)
        assert lines[-1]["converged"] is False
        report = read_report_json(f"{out}.report.json")
        assert report["failure"] is not None
        assert report["result"]["converged"] is False
        # the partial grid is still written for post-mortems
        read_grid_csv(f"{out}.grid.csv")

    def test_usage_errors_exit_1(self):
        assert run_cli([]) == 1                          # no subcommand
        assert run_cli(["solve"]) == 1                   # no problem source
        assert run_cli(["solve", "--builtin", "zero"]) == 1  # missing --n
        assert run_cli(["solve", "--builtin", "zero", "--problem", "x.json",
                        "--n", "8"]) == 1                # mutually exclusive
        assert run_cli(["frobnicate"]) == 1              # unknown subcommand

    def test_bad_m_flag_exits_1(self, capsys):
        code = run_cli(["solve", "--builtin", "zero", "--n", "8",
                        "--rhs", "1", "--m", "sometimes"])
        assert code == 1
        assert "auto" in capsys.readouterr().err


class TestLinsolve:
    def test_zero_problem(self, tmp_path, capsys):
        out = tmp_path / "lin"
        code = run_cli(["linsolve", "--builtin", "zero", "--n", "8",
                        "--rhs", "x + y", "--out", str(out)])
        assert code == 0
        report = read_report_json(f"{out}.report.json")
        assert report["linearized_at"] == "zero"
        assert report["result"]["converged"] is True

    def test_linearize_at_saved_state(self, tmp_path, linear_doc):
        base = tmp_path / "base"
        assert run_cli(["solve", "--problem", linear_doc, "--n", "8",
                        "--rhs", "1", "--out", str(base)]) == 0
        out = tmp_path / "lin"
        code = run_cli(["linsolve", "--problem", linear_doc, "--n", "8",
                        "--rhs", "x*y", "--linearize-at", f"{base}.grid.csv",
                        "--out", str(out)])
        assert code == 0
        report = read_report_json(f"{out}.report.json")
        assert report["linearized_at"] == f"{base}.grid.csv"

    def test_linearize_at_grid_mismatch_exits_1(self, tmp_path, linear_doc, capsys):
        base = tmp_path / "base"
        assert run_cli(["solve", "--problem", linear_doc, "--n", "8",
                        "--rhs", "1", "--out", str(base)]) == 0
        code = run_cli(["linsolve", "--problem", linear_doc, "--n", "16",
                        "--rhs", "x*y", "--linearize-at", f"{base}.grid.csv"])
        assert code == 1
        assert "sampled on" in capsys.readouterr().err

    def test_below_threshold_warns_but_converges(self, tmp_path, linear_doc, capsys):
        out = tmp_path / "lin"
        code = run_cli(["linsolve", "--problem", linear_doc, "--n", "8",
                        "--rhs", "1", "--m", "1.5", "--out", str(out)])
        assert code == 0
        err = capsys.readouterr().err
        assert "warning:" in err and "contraction threshold" in err

    def test_divergence_exits_2_with_ratio_and_hint(self, tmp_path, stiff_doc, capsys):
        out = tmp_path / "lin"
        code = run_cli(["linsolve", "--problem", stiff_doc, "--n", "12",
                        "--rhs", "1", "--m", "1.0", "--out", str(out)])
        assert code == 2
        captured = capsys.readouterr()
        assert "last ratio" in captured.err
        assert "m > 2*sqrt(d)" in captured.err
        lines = [json.loads(l) for l in captured.out.splitlines() if l.strip()]
        assert lines[-1]["converged"] is False


class TestVerify:
    def test_norms_suite_passes(self, capsys):
        code = run_cli(["verify", "--suite", "norms", "--n", "16", "--samples", "10"])
        assert code == 0
        lines = stdout_lines(capsys)
        closed = [l for l in lines if l.get("check") == "xy_closed_form"]
        assert len(closed) == 1
        assert closed[0]["value"] == pytest.approx(1.0 - np.exp(-1.0), abs=1e-3)
        assert all(l["pass"] for l in lines)

    def test_lemma31_suite_passes(self, capsys):
        code = run_cli(["verify", "--suite", "lemma31", "--n", "16",
                        "--samples", "10", "--m-list", "1,5,10,20"])
        assert code == 0
        lines = stdout_lines(capsys)
        assert {l["m"] for l in lines} == {1.0, 5.0, 10.0, 20.0}
        assert all(min(l["min_margins"].values()) > 0 for l in lines)

    def test_coercivity_suite_passes(self, capsys):
        code = run_cli(["verify", "--suite", "coercivity", "--builtin", "example46",
                        "--n", "12", "--samples", "5"])
        assert code == 0
        lines = stdout_lines(capsys)
        assert lines[0]["m"] == 9.0  # 8B + 1 with B = 1
        assert lines[0]["pass"] is True

    def test_coercivity_needs_a_problem(self, capsys):
        code = run_cli(["verify", "--suite", "coercivity"])
        assert code == 1
        assert "--problem" in capsys.readouterr().err

    def test_assumptions_suite_passes_on_builtin(self, capsys):
        code = run_cli(["verify", "--suite", "assumptions", "--builtin", "example46"])
        assert code == 0
        lines = stdout_lines(capsys)
        assert {l["check"] for l in lines} == {"growth", "coefficients", "derivatives"}

    def test_assumptions_suite_flags_exponential_growth(self, tmp_path, capsys):
        doc = {
            "meta": {"n": 1, "B": 1.0, "b": "1"},
            "functions": {"f1": ["exp(z1)"], "f2": ["0"]},
            "coefficients": {"A1": [["0"]], "A2": [["0"]],
                             "A1x": [["0"]], "A2y": [["0"]]},
        }
        path = tmp_path / "exp.json"
        path.write_text(json.dumps(doc))
        out = tmp_path / "probe"
        code = run_cli(["verify", "--suite", "assumptions",
                        "--problem", str(path), "--out", str(out)])
        assert code == 3
        lines = stdout_lines(capsys)
        growth = next(l for l in lines if l.get("check") == "growth")
        assert growth["pass"] is False
        assert growth["worst_f1"] > 1.0
        summary = lines[-1]
        assert summary["failed_checks"] == ["growth"]
        # the failing probe is serialized for replay
        replay = read_report_json(summary["fail_artifact"])
        assert replay["growth_ok"] is False

    def test_contraction_suite_with_chosen_weight(self, capsys):
        code = run_cli(["verify", "--suite", "contraction", "--builtin", "example46",
                        "--n", "12"])
        assert code == 0
        lines = stdout_lines(capsys)
        assert lines[0]["check"] == "weight_choice"
        assert lines[0]["m"] == 9.0
        assert lines[1]["rho_hat"] < 1.0

    def test_contraction_suite_below_threshold_exits_3(self, tmp_path, stiff_doc, capsys):
        out = tmp_path / "probe"
        code = run_cli(["verify", "--suite", "contraction", "--problem", stiff_doc,
                        "--n", "12", "--m-list", "1.0", "--out", str(out)])
        assert code == 3
        lines = stdout_lines(capsys)
        assert lines[0]["rho_hat"] >= 1.0
        assert "m > 2*sqrt(d)" in lines[-1]["hint"]
        read_report_json(lines[-1]["fail_artifact"])

    def test_bad_m_list_exits_1(self, capsys):
        code = run_cli(["verify", "--suite", "norms", "--m-list", "1,zap"])
        assert code == 1
        assert "--m-list" in capsys.readouterr().err


class TestSens:
    def test_zero_problem_quotients_at_rounding_level(self, tmp_path, capsys):
        out = tmp_path / "sens"
        code = run_cli(["sens", "--builtin", "zero", "--n", "12",
                        "--rhs", "x + y", "--direction", "sin(3*x)*y",
                        "--out", str(out)])
        assert code == 0
        lines = stdout_lines(capsys)
        errs = [l["fd_error"] for l in lines if "eps" in l]
        assert len(errs) == 3
        assert max(errs) <= 1e-10
        # the derivative field is emitted alongside the report
        g, _ = read_grid_csv(f"{out}.grid.csv")
        report = read_report_json(f"{out}.report.json")
        assert report["validation"]["passed"] is True

    def test_nonlinear_errors_shrink_with_eps(self, tmp_path, capsys):
        out = tmp_path / "sens"
        code = run_cli(["sens", "--builtin", "example46", "--n", "12",
                        "--rhs", "x*y", "--direction", "1", "--out", str(out)])
        assert code == 0
        errs = [l["fd_error"] for l in stdout_lines(capsys) if "eps" in l]
        assert errs[0] > errs[1] > errs[2]

    def test_eps_below_noise_floor_exits_1_and_prints_floor(self, capsys):
        code = run_cli(["sens", "--builtin", "zero", "--n", "8", "--rhs", "x",
                        "--direction", "1", "--eps", "1e-3,1e-4,1e-9"])
        assert code == 1
        err = capsys.readouterr().err
        assert "1e-08" in err  # the floor 100 * tol, printed for the user
        assert "noise floor" in err

    def test_inner_non_convergence_exits_2(self, capsys):
        code = run_cli(["sens", "--builtin", "example46", "--n", "8",
                        "--rhs", "x*y", "--direction", "1", "--max-iter", "1"])
        assert code == 2
        assert "failed to converge" in capsys.readouterr().err

    def test_oversized_steps_fail_validation_with_exit_3(self, tmp_path, capsys):
        out = tmp_path / "sens"
        code = run_cli(["sens", "--builtin", "example46", "--n", "12",
                        "--rhs", "x*y", "--direction", "40",
                        "--eps", "1,0.5,0.25", "--out", str(out)])
        assert code == 3
        lines = stdout_lines(capsys)
        assert lines[-1]["passed"] is False

    def test_non_decreasing_eps_exits_1(self, capsys):
        code = run_cli(["sens", "--builtin", "zero", "--n", "8", "--rhs", "x",
                        "--direction", "1", "--eps", "1e-2,1e-2,1e-3"])
        assert code == 1


class TestMms:
    def test_zero_problem_is_exact(self, tmp_path, capsys):
        out = tmp_path / "mms"
        code = run_cli(["mms", "--builtin", "zero", "--zstar", "x*y",
                        "--n-list", "8,16", "--out", str(out)])
        assert code == 0
        lines = stdout_lines(capsys)
        assert lines[-1]["exact"] is True
        report = read_report_json(f"{out}.report.json")
        assert report["exact"] is True

    def test_second_order_on_memory_problem(self, tmp_path, linear_doc, capsys):
        out = tmp_path / "mms"
        code = run_cli(["mms", "--problem", linear_doc,
                        "--zstar", "sin(2*x)*y + x*y",
                        "--n-list", "8,16,32", "--out", str(out)])
        assert code == 0
        lines = stdout_lines(capsys)
        orders = lines[-1]["orders"]
        assert len(orders) == 2
        assert all(1.8 <= p <= 2.2 for p in orders)

    def test_kinked_reference_breaks_the_order_window(self, tmp_path, linear_doc, capsys):
        out = tmp_path / "mms"
        code = run_cli(["mms", "--problem", linear_doc,
                        "--zstar", "abs(x - 0.317)*y",
                        "--n-list", "8,16,32", "--out", str(out)])
        assert code == 3
        assert stdout_lines(capsys)[-1]["pass"] is False

    def test_non_convergent_solve_exits_2(self, capsys):
        code = run_cli(["mms", "--builtin", "example46", "--zstar", "x*y",
                        "--n-list", "8,16", "--method", "picard",
                        "--max-iter", "1", "--tol", "1e-14"])
        assert code == 2
        assert "failed" in capsys.readouterr().err

    def test_single_resolution_exits_1(self, capsys):
        code = run_cli(["mms", "--builtin", "zero", "--zstar", "x*y", "--n-list", "16"])
        assert code == 1

    def test_unsorted_ladder_exits_1(self):
        assert run_cli(["mms", "--builtin", "zero", "--zstar", "x*y",
                        "--n-list", "16,8"]) == 1

    def test_zstar_referencing_state_exits_1(self, capsys):
        code = run_cli(["mms", "--builtin", "zero", "--zstar", "z1 + x",
                        "--n-list", "8,16"])
        assert code == 1
        assert "z-variables" in capsys.readouterr().err


class TestDeterminism:
    def test_repeated_solve_is_byte_identical(self, tmp_path, monkeypatch):
        argv = ["solve", "--builtin", "example46", "--n", "10",
                "--rhs", "x + y*y", "--out", "run"]
        dir_a, dir_b = tmp_path / "a", tmp_path / "b"
        dir_a.mkdir(), dir_b.mkdir()
        monkeypatch.chdir(dir_a)
        assert run_cli(argv) == 0
        monkeypatch.chdir(dir_b)
        assert run_cli(argv) == 0
        assert (dir_a / "run.grid.csv").read_bytes() == (dir_b / "run.grid.csv").read_bytes()
        assert (dir_a / "run.report.json").read_bytes() == (dir_b / "run.report.json").read_bytes()

    def test_seed_is_recorded_and_respected(self, tmp_path):
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        args = ["verify", "--suite", "contraction", "--builtin", "example46", "--n", "8"]
        assert run_cli(args + ["--seed", "5", "--out", str(out1)]) == 0
        assert run_cli(args + ["--seed", "5", "--out", str(out2)]) == 0
