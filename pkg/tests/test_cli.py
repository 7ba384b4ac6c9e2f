"""Expression grammar, config files and the experiment runner."""
import json

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from parser_golden import CASES, case_id, run_case
from wfs.cli import main, run_experiment
from wfs.cli.config import ExperimentConfig, load_config, parse_config
from wfs.cli.expr import (Bin, Call, Num, Unary, Var, derivative, dimension_of, evaluate, evaluate_at,
                          parse_expression, to_string, to_sympy, tokenize)
from wfs.errors import ConfigError


@pytest.mark.parametrize("case", CASES, ids=case_id)
def test_golden(case):
    ok, detail = run_case(case)
    assert ok, detail


def test_parse_tree_shapes():
    assert parse_expression("1 + x0^2") == Bin("+", Num(1.0), Bin("^", Var(0), Num(2.0)))
    assert parse_expression("-x1") == Unary(Var(1))
    assert parse_expression("exp(x0)") == Call("exp", Var(0))
    assert [t[0] for t in tokenize("2*x0")] == ["num", "op", "name", "end"]


def test_examples_from_the_grammar_notes():
    w = parse_expression("1 + x0^2")
    assert to_string(derivative(w, 0)) == "2*x0"
    gauss = parse_expression("exp(-(x0^2 + x1^2))")
    assert dimension_of(gauss) == 2
    pts = np.array([[0.0, 0.0], [1.0, -1.0]])
    assert np.allclose(evaluate(gauss, pts), [1.0, np.exp(-2.0)])
    assert evaluate_at(parse_expression("(1+x0^2)^2"), 3.0) == 100.0


def test_guarded_evaluation():
    with pytest.raises(ValueError):
        evaluate_at(parse_expression("1/x0"), 0.0)
    with pytest.raises(ValueError):
        evaluate_at(parse_expression("sqrt(x0)"), -1.0)
    with pytest.raises(ValueError):
        derivative(parse_expression("2^x0"), 0)


_leaf = st.one_of(st.integers(0, 9).map(lambda v: Num(float(v))), st.integers(0, 2).map(Var))
_tree = st.recursive(
    _leaf,
    lambda kids: st.one_of(
        st.builds(Unary, kids),
        st.builds(Bin, st.sampled_from(["+", "-", "*", "/", "^"]), kids, kids),
        st.builds(Call, st.sampled_from(["exp", "sin", "cos", "sqrt", "abs"]), kids)),
    max_leaves=12)


@given(_tree)
@settings(max_examples=300, deadline=None)
def test_print_parse_round_trip(tree):
    text = to_string(tree)
    assert parse_expression(text) == tree
    assert to_string(parse_expression(text.replace(" ", ""))) == text


_poly = st.recursive(
    _leaf,
    lambda kids: st.one_of(st.builds(Unary, kids),
                           st.builds(Bin, st.sampled_from(["+", "-", "*"]), kids, kids),
                           st.builds(Call, st.sampled_from(["exp", "sin", "cos"]), kids)),
    max_leaves=8)


@given(_poly, st.integers(0, 2), st.integers(1, 2))
@settings(max_examples=100, deadline=None)
def test_derivative_matches_sympy(tree, axis, order):
    xs = sp.symbols("x0:3", real=True)
    d = derivative(tree, axis, order)
    expected = sp.diff(to_sympy(tree, xs), xs[axis], order)
    assert sp.simplify(to_sympy(d, xs) - expected) == 0


# -- config -------------------------------------------------------------------------

CFG = """# a density run
experiment = density-run
radii = 1 2
function = exp(-x0^2 - x1^2)
family = schwartz:1
"""


def test_config_parse_and_round_trip():
    cfg = parse_config(CFG)
    assert cfg.kind == "density-run"
    assert cfg.get_floats("radii", []) == [1.0, 2.0]
    assert cfg.family() == ("schwartz", 1)
    again = parse_config(cfg.to_text())
    assert again.entries == cfg.entries and again.expressions == cfg.expressions
    assert cfg.to_text().splitlines()[0] == "experiment = density-run"


def test_config_command_line_kind_wins(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text(CFG, encoding="utf-8")
    assert load_config(path, "explaw-verify").kind == "explaw-verify"


@pytest.mark.parametrize("text, fragment", [
    ("experiment = nope", "unknown experiment"),
    ("experiment = evolve\ngroup = sp4", "unknown group"),
    ("experiment = evolve\nsteps = 1\nsteps = 2", "line 3: duplicate"),
    ("experiment = o-certify\nf = 1 +", "line 2: f:"),
    ("experiment = explaw-verify\nfunction = x0 + x2", "more than 2"),
    ("experiment = evolve\njust words", "line 2"),
    ("radii = 1", "no experiment"),
    ("experiment = density-run\nfamily = fancy", "preset"),
])
def test_config_errors(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(text)


def test_typed_getters():
    cfg = ExperimentConfig("evolve", {"steps": "10.5", "tol": "abc"})
    with pytest.raises(ConfigError):
        cfg.get_int("steps", 1)
    with pytest.raises(ConfigError):
        cfg.get_float("tol", 1.0)
    assert cfg.get_int("missing", 7) == 7


# -- runner -------------------------------------------------------------------------

QUICK = {
    "explaw-verify": "nodes = 31\nfamily = schwartz:1",
    "schwartz-demo": "nodes = 41",
    "density-run": "radii = 1 2 3\nhalf_width = 4\nfamily = schwartz:1\norder = 1\nfinal_tol = 1",
    "mollifier-bound": "eps = 1 0.5\ndims = 1",
    "evolve": "group = so3",
    "o-certify": "eps = 0.1",
}


@pytest.mark.parametrize("kind", sorted(QUICK))
def test_run_experiment_passes(kind, tmp_path):
    cfg = parse_config(QUICK[kind], kind)
    code, report = run_experiment(cfg, tmp_path, seed=3)
    assert code == 0, report["failures"]
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["schema"] == 1 and data["status"] == "pass" and data["failures"] == []
    assert (tmp_path / f"{kind}.csv").read_text().count("\n") >= 2


def test_csv_is_deterministic(tmp_path):
    cfg = parse_config("nodes = 21\nnoise = 0.1\nfamily = schwartz:1", "explaw-verify")
    run_experiment(cfg, tmp_path / "a", seed=11)
    run_experiment(cfg, tmp_path / "b", seed=11)
    run_experiment(cfg, tmp_path / "c", seed=12)
    a, b, c = ((tmp_path / d / "explaw-verify.csv").read_bytes() for d in "abc")
    assert a == b and a != c


def test_failing_check_gives_exit_one(tmp_path):
    cfg = parse_config("f = 1\ng = 1\neps = 0.5", "o-certify")
    code, report = run_experiment(cfg, tmp_path)
    assert code == 1 and report["failures"] == ["certificate eps=0.5"]
    cfg = parse_config("f = 1\ng = 1\neps = 0.5\nexpect = fail", "o-certify")
    assert run_experiment(cfg, tmp_path)[0] == 0


def test_module_error_names_its_operation(tmp_path):
    cfg = parse_config("spacing = 0.5", "density-run")
    code, report = run_experiment(cfg, tmp_path)
    assert code == 2
    assert report["error"]["operation"] == "density_pipeline"
    assert report["error"]["type"] == "GridTooCoarse"
    assert json.loads((tmp_path / "report.json").read_text())["status"] == "error"


def test_main_entry_point(tmp_path, capsys):
    cfg = tmp_path / "e.cfg"
    cfg.write_text("field = 0 1 0; -1 0 0; 0 0 0\n", encoding="utf-8")
    code = main(["evolve", "--config", str(cfg), "--out", str(tmp_path / "o"), "--group", "gl3"])
    out = capsys.readouterr().out
    assert code == 0 and "PASS  endpoint vs matrix exponential" in out
    assert main(["evolve", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert "load_config" in capsys.readouterr().err
    bad = tmp_path / "bad.cfg"
    bad.write_text("g = 1 + (x0\n", encoding="utf-8")
    assert main(["o-certify", "--config", str(bad), "--out", str(tmp_path / "p")]) == 2
    assert "position" in capsys.readouterr().err
