"""``wfs`` command-line entry point and experiment dispatch."""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np
import sympy as sp
from scipy.linalg import expm

from wfs.cli.config import EXPERIMENTS, GROUPS, ExperimentConfig, load_config, parse_config
from wfs.cli.expr import Expr, dimension_of, evaluate, to_string, to_sympy
from wfs.core.domain import closed_ball, full_space, half_space, product_domain
from wfs.core.grid import Grid, GridFunction
from wfs.core.multiindex import multi_indices
from wfs.core.seminorm import coordinate_abs, p_norm, sup_norm
from wfs.errors import ConfigError, WFSError
from wfs.explaw import identity_suite
from wfs.liegroup import AlgebraCurve, evolve, group_spec, random_algebra_element
from wfs.mollify import density_pipeline, derivative_bound_check, indicator_convolve, make_mollifier
from wfs.weights import SymbolicWeight, constant_family, o_certify, poly_family, schwartz_family

SCHEMA = 1


class _Recorder:
    """Collects named checks and tracks the operation currently running."""

    def __init__(self):
        self.checks: list[dict] = []
        self.operation = "setup"

    def op(self, name: str) -> "_Recorder":
        self.operation = name
        return self

    def check(self, name: str, passed: bool, **details):
        self.checks.append({"name": name, "passed": bool(passed), **details})

    @property
    def failures(self) -> list[str]:
        return [c["name"] for c in self.checks if not c["passed"]]


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def expression_weight(expr: Expr, n: int, label: Optional[str] = None) -> SymbolicWeight:
    xs = sp.symbols(f"x0:{n}", real=True)
    text = to_string(expr)
    return SymbolicWeight(to_sympy(expr, xs), xs, label=label or text, params={"form": "expression", "text": text})


def _family(cfg: ExperimentConfig, n: int):
    name, arg = cfg.family()
    if name == "schwartz":
        return schwartz_family(n, arg or 2)
    if name == "poly":
        return poly_family(arg, n)
    return constant_family(n)


def _seminorms(cfg: ExperimentConfig):
    table = {"abs0": coordinate_abs(0), "sup": sup_norm(), "p2": p_norm(2.0), "p1": p_norm(1.0)}
    names = cfg.get("seminorms", "abs0 sup p2").replace(",", " ").split()
    try:
        return [table[s] for s in names]
    except KeyError as exc:
        raise ConfigError(f"unknown seminorm {exc.args[0]!r}; use one of {', '.join(table)}") from exc


def _sample(expr: Expr, grid: Grid, domain=None) -> GridFunction:
    return GridFunction.sample(lambda p: evaluate(expr, p), grid, domain)


# -- experiments -------------------------------------------------------------------------


def _explaw(cfg: ExperimentConfig, rng, rec: _Recorder, default_fn: str, noise_default: float):
    rec.op("parse_expression")
    expr = cfg.get_expr("function", default_fn)
    lo, hi = cfg.get_floats("box", [-3.0, 3.0])
    nodes = cfg.get_int("nodes", 101)
    g1 = Grid(((lo, hi),), (nodes,))
    grid = Grid.product(g1, g1)
    rec.op("GridFunction.sample")
    gamma = _sample(expr, grid)
    noise = cfg.get_float("noise", noise_default)
    if noise:
        gamma = GridFunction(grid, gamma.domain, gamma.values + noise * rng.standard_normal(gamma.values.shape),
                             gamma.mask)
    F = _family(cfg, 1)
    k, l = cfg.get_int("order_k", 2), cfg.get_int("order_l", 2)
    tol = cfg.get_float("tol", 1e-12)
    rec.op("identity_suite")
    pairs = [(a, b) for a in F.members for b in F.members]
    rows = identity_suite(gamma, pairs, multi_indices(1, k), multi_indices(1, l), _seminorms(cfg))
    worst_id = max(r.identity.rel_diff for r in rows)
    worst_flip = max(r.flip.rel_diff for r in rows)
    rec.check("exponential-law identity", worst_id <= tol, worst=worst_id, tol=tol, cases=len(rows))
    rec.check("flip invariance", worst_flip <= tol, worst=worst_flip, tol=tol, cases=len(rows))
    table = [(" ".join(r.weights), " ".join(map(str, r.alpha)), " ".join(map(str, r.beta)), r.q,
              r.identity.lhs, r.identity.rhs, r.identity.rel_diff, r.flip.rel_diff) for r in rows]
    return _csv(["weights", "alpha", "beta", "q", "product", "iterated", "rel_diff", "flip_rel_diff"], table)


def run_explaw_verify(cfg, rng, rec):
    return _explaw(cfg, rng, rec, "exp(-(x0^2 + x1^2))", 0.0)


def run_schwartz_demo(cfg, rng, rec):
    return _explaw(cfg, rng, rec, "exp(-x0^2)*exp(-x1^2)", 0.0)


def run_density(cfg, rng, rec):
    variant = cfg.get("variant", "full")
    rec.op("parse_expression")
    if variant == "full":
        expr = cfg.get_expr("function", "exp(-x0^2 - x1^2)")
        L = cfg.get_float("half_width", 8.0)
        h = cfg.get_float("spacing", 1 / 16)
        g1 = Grid.uniform([(-L, L)], h)
        grid = Grid.product(g1, g1)
        domain = None
    elif variant == "boundary":
        expr = cfg.get_expr("function", "x0^4*exp(-x0^2 - x1^2)")
        gx = Grid.uniform([(0.0, cfg.get_float("half_width_x", 6.0))], cfg.get_float("spacing_x", 1 / 160))
        L = cfg.get_float("half_width", 6.0)
        gy = Grid.uniform([(-L, L)], cfg.get_float("spacing", 1 / 16))
        grid = Grid.product(gx, gy)
        domain = product_domain(half_space(gx.box), full_space(gy.box))
    else:
        raise ConfigError(f"variant must be 'full' or 'boundary', got {variant!r}")
    rec.op("GridFunction.sample")
    gamma = _sample(expr, grid, domain)
    F = _family(cfg, 1)
    order = cfg.get_int("order", 2)
    q = _seminorms(cfg)[0] if "seminorms" in cfg.entries else coordinate_abs(0)
    radii = cfg.get_floats("radii", [1, 2, 3, 4, 5])
    rec.op("density_pipeline")
    table = density_pipeline(gamma, F, F, order, order, q, radii)
    slack = cfg.get_float("slack", 1e-12)
    rec.check("monotone error columns", table.monotone(slack), slack=slack)
    if variant == "full":
        final_tol = cfg.get_float("final_tol", 1e-6)
        rec.check("final column", table.final_max() <= final_tol, final=table.final_max(), tol=final_tol)
    rec.check("compact support", all(table.metadata["support_compact"].values()))
    return table.to_csv()


def run_mollifier_bound(cfg, rng, rec):
    eps_list = cfg.get_floats("eps", [1.0, 0.5, 0.25])
    dims = [int(v) for v in cfg.get_floats("dims", [1, 2])]
    order = cfg.get_int("order", 3)
    R = cfg.get_float("radius", 1.0)
    rows = []
    for n in dims:
        for eps in eps_list:
            rec.op("make_mollifier")
            m = make_mollifier(n, eps, max(order, 3))
            h = eps / 8
            L = h * np.ceil((R + 2.5 * eps) / h)
            grid = Grid.uniform([(-L, L)] * n, h)
            rec.op("indicator_convolve")
            gfun = indicator_convolve(closed_ball(np.zeros(n), R), m, grid)
            rec.op("derivative_bound_check")
            for alpha in multi_indices(n, order):
                rep = derivative_bound_check(gfun, m, alpha)
                rows.append((n, eps, " ".join(map(str, alpha)), rep.max_value, rep.bound, rep.tol, rep.passed))
                rec.check(f"bound n={n} eps={eps:g} alpha={tuple(alpha)}", rep.passed,
                          max=rep.max_value, bound=rep.bound)
    return _csv(["n", "eps", "alpha", "max_fd", "bound", "tol", "passed"], rows)


def _parse_matrix(text: str, n: int) -> np.ndarray:
    rows = [r.replace(",", " ").split() for r in text.split(";")]
    try:
        a = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise ConfigError(f"field must be a matrix 'a b c; d e f; ...', got {text!r}") from exc
    if a.shape != (n, n):
        raise ConfigError(f"field has shape {a.shape}, expected {(n, n)}")
    return a


def run_evolve(cfg, rng, rec):
    rec.op("group_spec")
    G = group_spec(cfg.get("group", "so3"))
    text = cfg.get("field", "random")
    if text == "random":
        A = random_algebra_element(G, rng, cfg.get_float("scale", 1.0))
    else:
        A = G.project_algebra(_parse_matrix(text, G.n))
    steps = cfg.get_int("steps", 1000)
    tol = cfg.get_float("tol", 1e-8)
    curve = AlgebraCurve.constant(A, G)
    oracle = expm(A)
    rec.op("evolve")
    result = evolve(curve, steps)
    err = float(np.linalg.norm(result.endpoint() - oracle) / np.linalg.norm(oracle))
    rec.check("endpoint vs matrix exponential", err <= tol, error=err, tol=tol)
    rows = [(steps, err)]
    halving = [int(v) for v in cfg.get_floats("halving_steps", [10, 20, 40])]
    errs = []
    for s in halving:
        e = float(np.linalg.norm(evolve(curve, s).endpoint() - oracle) / np.linalg.norm(oracle))
        errs.append(e)
        rows.append((s, e))
    if max(errs) < 1e-13:
        # RK4 is exact for fields whose series terminates (nilpotent ut(n)); no order to measure
        rec.check("step-halving ratio", True, note="exact at roundoff", errors=errs)
    else:
        ratios = [a / b for a, b in zip(errs, errs[1:])]
        rec.check("step-halving ratio", all(12 <= r <= 20 for r in ratios), ratios=ratios)
    if G.name == "SO":
        drift = max(float(np.abs(m.T @ m - np.eye(3)).max()) for m in result.values)
        rec.check("orthogonality drift", drift <= 1e-10, drift=drift)
    rec.check("membership", all(G.contains(m, 1e-8) for m in result.values))
    return _csv(["steps", "rel_error"], rows)


def run_o_certify(cfg, rng, rec):
    rec.op("parse_expression")
    f_expr, g_expr = cfg.get_expr("f", "1"), cfg.get_expr("g", "1 + x0^2")
    n = max(dimension_of(f_expr), dimension_of(g_expr), 1)
    f, g = expression_weight(f_expr, n), expression_weight(g_expr, n)
    r_max = cfg.get_float("r_max", 10.0)
    spacing = cfg.get_float("spacing", 0.01)
    expect = cfg.get("expect", "pass")
    if expect not in ("pass", "fail"):
        raise ConfigError("expect must be 'pass' or 'fail'")
    rows = []
    rec.op("o_certify")
    for eps in cfg.get_floats("eps", [1.0, 0.1, 0.01]):
        cert = o_certify(f, g, eps, r_max, spacing)
        radius = cert.radius if cert.ok else float("nan")
        rows.append((eps, cert.ok, radius))
        rec.check(f"certificate eps={eps:g}", cert.ok == (expect == "pass"), **cert.to_dict())
    return _csv(["eps", "ok", "radius"], rows)


RUNNERS = {
    "explaw-verify": run_explaw_verify,
    "schwartz-demo": run_schwartz_demo,
    "density-run": run_density,
    "mollifier-bound": run_mollifier_bound,
    "evolve": run_evolve,
    "o-certify": run_o_certify,
}


def run_experiment(cfg: ExperimentConfig, out_dir, seed: int = 0) -> tuple[int, dict]:
    """Run one experiment, write ``report.json`` and ``<kind>.csv``; return (exit code, report).

    Exit codes: 0 all checks pass, 1 some check fails, 2 an operation raised.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    rec = _Recorder()
    report = {"schema": SCHEMA, "experiment": cfg.kind, "seed": seed, "config": cfg.to_text()}
    start = time.perf_counter()
    try:
        table = RUNNERS[cfg.kind](cfg, rng, rec)
    except (WFSError, ValueError, ArithmeticError) as exc:
        report.update({"status": "error", "checks": rec.checks,
                       "error": {"operation": rec.operation, "type": type(exc).__name__, "message": str(exc)},
                       "failures": [rec.operation]})
        (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return 2, report
    (out / f"{cfg.kind}.csv").write_text(table, encoding="utf-8")
    failures = rec.failures
    report.update({"status": "pass" if not failures else "fail", "checks": rec.checks, "failures": failures,
                   "seconds": round(time.perf_counter() - start, 3)})
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True, default=float) + "\n",
                                     encoding="utf-8")
    return (0 if not failures else 1), report


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wfs", description="Weighted function space experiments.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="key = value configuration file (defaults are used without one)")
    p.add_argument("--out", default="wfs-out", help="output directory (default: wfs-out)")
    p.add_argument("--seed", type=int, default=0, help="seed for random inputs")
    p.add_argument("--group", choices=GROUPS, help="matrix group for the evolve experiment")
    return p


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    if not 0 <= args.seed < 2 ** 64:
        print("wfs: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, args.experiment) if args.config else parse_config("", args.experiment)
    except (OSError, WFSError) as exc:
        print(f"wfs: load_config: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if args.group:
        cfg.entries["group"] = args.group
    code, report = run_experiment(cfg, args.out, args.seed)
    if code == 2:
        err = report["error"]
        print(f"wfs: {err['operation']}: {err['type']}: {err['message']}", file=sys.stderr)
    for c in report["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}")
    print(f"{cfg.kind}: {report['status']} (report in {args.out})")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
