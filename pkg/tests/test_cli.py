import csv
import io
import json

import pytest

from carnot.cli import main

SQUARE = {"intervals": [[-1, 1], [-1, 1]], "nodes": 21}
BUMP = {"group": "euclidean:2", "domain": SQUARE, "operator": {"op": "trace_minus_u"},
        "u": "-0.5*(1 - x1^2 - x2^2)", "v": "0", "delta": 0.1, "eps": 0.05}
# nonsmooth fields skip the classical hypothesis check and stall at the gradient step
UNDECIDED = dict(BUMP, u="0.5*(1 - x1^2 - x2^2) - 0.01*abs(x1)", v="max(0.25*x1, -0.2)", tol=1e-3)


@pytest.fixture
def run(tmp_path, capsys):
    def _run(*argv, config=None):
        args = list(argv)
        if config is not None:
            path = tmp_path / "scenario.json"
            path.write_text(json.dumps(config))
            args += ["--config", str(path)]
        code = main(args)
        cap = capsys.readouterr()
        return code, cap.out, cap.err
    return _run


def test_group_check_schema(run):
    code, out, _ = run("group-check", "heisenberg:1", "--samples", "200")
    assert code == 0
    doc = json.loads(out)
    assert set(doc) == {"group", "samples", "seed", "lambdas", "tolerance", "max_relative_error", "passed",
                        "all_passed"}
    assert doc["samples"] == 200 and doc["all_passed"] is True
    assert set(doc["passed"]) == set(doc["max_relative_error"])


def test_group_check_from_spec_file(run, tmp_path):
    spec = tmp_path / "h.json"
    spec.write_text(json.dumps({"name": "h", "layer_dims": [2, 1], "brackets": [{"i": 1, "j": 2, "out": [1.0]}]}))
    code, out, _ = run("group-check", str(spec), "--samples", "50")
    assert code == 0 and json.loads(out)["group"] == "h"


def test_group_check_bad_inputs(run, tmp_path):
    assert run("group-check", "heisenberg:x")[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("group-check", str(bad))[0] == 2
    assert run("group-check")[0] == 2
    assert run("frobnicate")[0] == 2


def test_coefficients_csv(run, tmp_path):
    code, out, _ = run("group-check", "heisenberg:1", "--samples", "10", "--coefficients", "--format", "csv",
                       "--out", str(tmp_path / "o"))
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["x1", "x2", "x3", "a_1_1", "a_1_2", "a_1_3", "a_2_1", "a_2_2", "a_2_3"]
    assert len(rows) == 1 + 27
    assert sorted(p.name for p in (tmp_path / "o").iterdir()) == ["coefficients.csv", "report.json"]
    assert (tmp_path / "o" / "coefficients.csv").read_text() == out


def test_convolve(run):
    cfg = {"group": "euclidean:1", "domain": {"intervals": [[-1, 1]], "nodes": 41}, "u": "abs(x1)",
           "epsilons": [0.2, 0.1, 0.05]}
    code, out, _ = run("convolve", config=cfg)
    assert code == 0
    doc = json.loads(out)
    # sup_y |y| - |x - y|^2 / (2 eps) - |x| is eps / 2 away from the walls
    assert [r["sup_gap"] for r in doc["rows"]] == pytest.approx([0.1, 0.05, 0.025], abs=1e-12)
    assert all(r["monotone_vs_previous"] and r["bound_holds"] for r in doc["rows"])
    code, csv_out, _ = run("convolve", "--witness", "--format", "csv", config=cfg)
    header = csv_out.splitlines()[0].split(",")
    assert header == ["x1", "value", "witness"]
    assert len(csv_out.splitlines()) == 42


def test_convolve_rejects_bad_eps(run):
    cfg = {"group": "euclidean:1", "domain": {"intervals": [[-1, 1]], "nodes": 11}, "u": "x1", "eps": -1}
    code, _, err = run("convolve", config=cfg)
    assert code == 2 and "eps" in err


def test_perturb(run):
    cfg = {"group": "heisenberg:1", "domain": {"intervals": [[0, 1]] * 3, "nodes": 11},
           "operator": {"op": "trace_minus_u"}, "v": "x1", "delta": 0.1}
    code, out, _ = run("perturb", config=cfg)
    assert code == 0
    doc = json.loads(out)
    assert doc["bounds_hold"] and doc["residual_below_margin"] and doc["c_delta"] > 0
    code, csv_out, _ = run("perturb", "--format", "csv", config=cfg)
    assert csv_out.splitlines()[0] == "x1,x2,x3,value,alpha"


def test_structure_check(run):
    code, out, _ = run("structure-check", config={"group": "heisenberg:1", "operator": {"op": "pucci"}})
    assert code == 0
    assert json.loads(out)["checks"]
    bad = {"group": "euclidean:2", "operator": {"op": "expr", "expr": "-(M11 + M22) - r"}}
    assert run("structure-check", config=bad)[0] == 1


def test_compare_exit_codes(run, tmp_path):
    code, out, _ = run("compare", "--out", str(tmp_path / "holds"), config=BUMP)
    assert code == 0 and json.loads(out)["verdict"] == "HOLDS"
    violation = dict(BUMP, u="0.5*(1 - x1^2 - x2^2)")
    code, out, _ = run("compare", config=violation)
    assert code == 1 and json.loads(out)["verdict"] == "HYPOTHESIS_VIOLATION"
    code, out, _ = run("compare", config=UNDECIDED)
    assert code == 3 and json.loads(out)["verdict"] == "INCONCLUSIVE"
    assert run("compare", config=dict(BUMP, eps=0))[0] == 2
    assert run("compare")[0] == 2


def test_compare_writes_fields(run, tmp_path):
    target = tmp_path / "cmp"
    run("compare", "--out", str(target), config=UNDECIDED)
    names = sorted(p.name for p in target.iterdir())
    assert names == ["difference.csv", "report.json", "u_eps.csv", "v_delta_eps.csv"]
    assert (target / "difference.csv").read_text().splitlines()[0] == "x1,x2,value"


@pytest.mark.parametrize("argv,config", [
    (("group-check", "engel", "--samples", "100"), None),
    (("compare",), BUMP),
    (("structure-check", "--seed", "3"), {"group": "heisenberg:2", "operator": {"op": "infinity_sublap"}}),
])
def test_repeated_runs_are_byte_identical(run, argv, config):
    first = run(*argv, config=config)
    second = run(*argv, config=config)
    assert first == second
