"""``carnot`` command line: group checks, convolutions, perturbations, structure checks and comparisons.

Every subcommand prints a JSON report (sorted keys, no timestamps) to stdout,
or CSV with ``--format csv``; ``--out DIR`` also writes ``report.json`` and
the CSV dumps there.  Exit codes: 0 success / HOLDS, 1 a property or
hypothesis failed (or COUNTEREXAMPLE_CANDIDATE), 2 invalid input,
3 INCONCLUSIVE.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import expr as fx
from .comparison import run_comparison
from .errors import CarnotError
from .grid import GridDomain, GridField, sample
from .group import CarnotGroup, check_group_laws, load_group
from .horizontal import coefficient_matrix
from .operators import (NonlinearOperator, check_structure, classical_residual, operator_from_config,
                        perturb_supersolution, alpha_expr)
from .transforms import convergence_report

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_INCONCLUSIVE = 0, 1, 2, 3


class ConfigError(CarnotError, ValueError):
    pass


@dataclass
class ScenarioConfig:
    group: CarnotGroup
    domain: GridDomain | None
    operator: NonlinearOperator | None
    fields: dict
    delta: float
    eps: float
    tol: float | None
    seed: int
    samples: int
    epsilons: list
    mode: str
    raw: dict


def _positive(raw, key, default):
    val = raw.get(key, default)
    if not isinstance(val, (int, float)) or isinstance(val, bool) or not val > 0:
        raise ConfigError(f"'{key}' must be a positive number, got {val!r}")
    return float(val)


def parse_config(raw: dict) -> ScenarioConfig:
    """Validate a scenario document (see the README for the keys)."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if "group" not in raw:
        raise ConfigError("config needs a 'group'")
    G = load_group(raw["group"])
    dom = None
    if "domain" in raw:
        d = raw["domain"]
        try:
            dom = GridDomain.box(d["intervals"], d["nodes"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"domain needs 'intervals' and 'nodes': {exc}") from None
        if dom.ndim != G.n:
            raise ConfigError(f"domain has {dom.ndim} axes, group {G.name} has dimension {G.n}")
    op = operator_from_config(raw["operator"], G.m) if "operator" in raw else None
    fields = {}
    for key in ("u", "v", "phi"):
        if key in raw:
            e = fx.parse(str(raw[key]))
            if fx.max_coordinate(e) > G.n:
                raise ConfigError(f"'{key}' uses x{fx.max_coordinate(e)} but the dimension is {G.n}")
            fields[key] = e
    eps_list = raw.get("epsilons", [raw["eps"]] if "eps" in raw else [])
    for e in eps_list:
        if not isinstance(e, (int, float)) or not e > 0:
            raise ConfigError(f"epsilons must be positive, got {e!r}")
    mode = raw.get("mode", "sup")
    if mode not in ("sup", "inf"):
        raise ConfigError("mode must be 'sup' or 'inf'")
    tol = _positive(raw, "tol", 1.0) if "tol" in raw else None
    return ScenarioConfig(
        G, dom, op, fields, _positive(raw, "delta", 0.1), _positive(raw, "eps", 0.05), tol,
        int(raw.get("seed", 0)), int(raw.get("samples", 200)), [float(e) for e in eps_list], mode, raw,
    )


def load_config(path) -> ScenarioConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(raw)


def dumps(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _need(cfg, *names):
    for name in names:
        if name in ("u", "v", "phi"):
            if name not in cfg.fields:
                raise ConfigError(f"config needs field '{name}'")
        elif getattr(cfg, name) is None:
            raise ConfigError(f"config needs '{name}'")


class _Output:
    """Collects the report and CSV artifacts, then emits them."""

    def __init__(self, args):
        self.fmt = args.format
        self.out = Path(args.out) if args.out else None
        self.csvs = {}

    def add_csv(self, name, text):
        self.csvs[name] = text

    def emit(self, report):
        text = dumps(report)
        if self.out is not None:
            self.out.mkdir(parents=True, exist_ok=True)
            (self.out / "report.json").write_text(text)
            for name, body in self.csvs.items():
                (self.out / name).write_text(body)
        if self.fmt == "csv" and self.csvs:
            sys.stdout.write(next(iter(self.csvs.values())))
        else:
            sys.stdout.write(text)


def coefficients_csv(G: CarnotGroup, dom: GridDomain) -> str:
    """One row per node: coordinates then ``a_l_k`` entries of the horizontal frame."""
    a = coefficient_matrix(G, dom.points)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{i + 1}" for i in range(G.n)] + [f"a_{l + 1}_{k + 1}" for l in range(G.m) for k in range(G.n)])
    for pt, row in zip(dom.points, a.reshape(len(dom.points), -1)):
        w.writerow([repr(float(v)) for v in pt] + [repr(float(v)) for v in row])
    return buf.getvalue()


# -- subcommands ---------------------------------------------------------------

def cmd_group_check(args, out: _Output) -> int:
    cfg = load_config(args.config) if args.config else None
    ref = args.group if args.group else (cfg.raw["group"] if cfg else None)
    if ref is None:
        raise ConfigError("give a group name/spec file or --config")
    G = load_group(ref)
    seed = args.seed if args.seed is not None else (cfg.seed if cfg else 0)
    samples = args.samples if args.samples is not None else 1000
    report = check_group_laws(G, samples, seed)
    if args.coefficients:
        dom = cfg.domain if cfg and cfg.domain else GridDomain.box([(-1.0, 1.0)] * G.n, 3)
        out.add_csv("coefficients.csv", coefficients_csv(G, dom))
    out.emit(report)
    return EXIT_OK if report["all_passed"] else EXIT_FAIL


def cmd_convolve(args, out: _Output) -> int:
    cfg = load_config(args.config)
    _need(cfg, "domain")
    key = "u" if "u" in cfg.fields else "phi"
    _need(cfg, key)
    eps = cfg.epsilons or [cfg.eps]
    u = sample(cfg.fields[key], cfg.group, cfg.domain)
    rep = convergence_report(cfg.group, u, eps, cfg.mode)
    last = rep["fields"][-1]
    extra = {"witness": last.witnesses} if args.witness else {}
    out.add_csv("field.csv", last.field.to_csv(extra))
    report = {k: v for k, v in rep.items() if k != "fields"}
    report.update(group=cfg.group.name, grid=cfg.domain.to_dict(), field=fx.to_string(cfg.fields[key]),
                  semiconvexity_constant=last.semiconvexity_constant)
    out.emit(report)
    return EXIT_OK


def cmd_perturb(args, out: _Output) -> int:
    cfg = load_config(args.config)
    _need(cfg, "domain", "operator", "v")
    G, dom = cfg.group, cfg.domain
    v = sample(cfg.fields["v"], G, dom)
    res = perturb_supersolution(G, v, cfg.delta, cfg.operator)
    report = {"group": G.name, "grid": dom.to_dict(), "operator": cfg.operator.describe(),
              "v": fx.to_string(cfg.fields["v"]), **res.to_dict()}
    report["bounds_hold"] = bool(np.all(v.flat <= res.v_delta.flat) and np.all(res.v_delta.flat <= v.flat + cfg.delta))
    if fx.is_smooth(cfg.fields["v"]):
        vd = fx.add(cfg.fields["v"], fx.mul(fx.Num(cfg.delta), alpha_expr(res.k, res.c1)))
        nodes = dom.interior_mask.ravel()
        r = classical_residual(G, cfg.operator, vd, dom.points[nodes])
        report["max_residual_v_delta"] = float(np.max(r))
        report["residual_below_margin"] = bool(np.max(r) <= -res.c_delta + 1e-9)
    out.add_csv("v_delta.csv", res.v_delta.to_csv({"alpha": res.alpha_field.flat}))
    out.emit(report)
    return EXIT_OK


def cmd_structure_check(args, out: _Output) -> int:
    cfg = load_config(args.config)
    _need(cfg, "operator")
    seed = args.seed if args.seed is not None else cfg.seed
    samples = args.samples if args.samples is not None else cfg.samples
    rep = check_structure(cfg.operator, cfg.group.m, samples, seed)
    out.emit(rep.to_dict())
    return EXIT_OK if (rep.case_i or rep.case_ii) else EXIT_FAIL


def cmd_compare(args, out: _Output) -> int:
    cfg = load_config(args.config)
    _need(cfg, "domain", "operator", "u", "v")
    G, dom = cfg.group, cfg.domain
    seed = args.seed if args.seed is not None else cfg.seed
    samples = args.samples if args.samples is not None else cfg.samples
    tol = cfg.tol if cfg.tol is not None else 1e-6 + 4.0 * float(np.max(dom.spacing))
    u = sample(cfg.fields["u"], G, dom)
    v = sample(cfg.fields["v"], G, dom)
    rep = run_comparison(G, cfg.operator, u, v, cfg.delta, cfg.eps, tol, u_expr=cfg.fields["u"],
                         v_expr=cfg.fields["v"], samples=samples, seed=seed)
    names = {"u_eps": "u_eps.csv", "v_delta_eps": "v_delta_eps.csv", "difference": "difference.csv"}
    for key, fname in names.items():
        if key in rep.fields:
            out.add_csv(fname, rep.fields[key].to_csv())
    out.emit(rep.to_dict())
    return {"HOLDS": EXIT_OK, "INCONCLUSIVE": EXIT_INCONCLUSIVE}.get(rep.verdict, EXIT_FAIL)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario JSON file")
    common.add_argument("--out", help="directory for report.json and CSV dumps")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--samples", type=int, help="number of random samples")
    common.add_argument("--format", choices=("json", "csv"), default="json", help="stdout format")

    parser = argparse.ArgumentParser(prog="carnot", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    g = sub.add_parser("group-check", parents=[common], help="group-law invariant suite")
    g.add_argument("group", nargs="?", help="built-in name (heisenberg:1) or group spec JSON path")
    g.add_argument("--coefficients", action="store_true", help="also dump the horizontal frame coefficients as CSV")
    c = sub.add_parser("convolve", parents=[common], help="sup/inf-convolution with a convergence report")
    c.add_argument("--witness", action="store_true", help="add the optimizing node index to the CSV")
    sub.add_parser("perturb", parents=[common], help="strict supersolution perturbation")
    sub.add_parser("structure-check", parents=[common], help="sample the operator structure properties")
    sub.add_parser("compare", parents=[common], help="run the comparison pipeline")
    return parser


COMMANDS = {
    "group-check": cmd_group_check,
    "convolve": cmd_convolve,
    "perturb": cmd_perturb,
    "structure-check": cmd_structure_check,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    if args.command != "group-check" and not args.config:
        print(f"carnot {args.command}: --config is required", file=sys.stderr)
        return EXIT_INPUT
    out = _Output(args)
    try:
        return COMMANDS[args.command](args, out)
    except (CarnotError, ValueError) as exc:
        print(f"carnot {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
