"""Command-line front end.

Usage examples::

    basefrac optimize-measure --levels 2,2,2,2,2,3 --effects "1;2;3;4;5;6;1x6;2x6"
    basefrac design --levels 2,2,2,2,2,2 --effects "..." --runs 16..23 --procedure B2
    basefrac evaluate design.txt --spec problem.yaml
    basefrac oracle --levels 2,2,2,2 --effects "1;2;3;4;1x2;3x4" --runs 7..10

A problem can also be given as a YAML spec file (``--spec``) with keys
``levels``, ``effects``, ``runs``, ``rho``, ``procedure``, ``t``,
``thresholds`` (``init``/``keep``), ``n1_hint``, ``budget`` and ``fast``;
flags override it.

Exit status: 0 success, 2 parse error, 3 numerical failure, 4 budget refusal.
"""

import argparse
import csv
import io
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .design import ExactDesign, read_design, score_design, write_design
from .errors import (
    BasefracError,
    BudgetExceededError,
    InvalidModelError,
    InvalidTreatmentError,
    SingularDesignError,
)
from .factorial import FactorialModel
from .measure import DEFAULT_MAX_ITER, DEFAULT_T, optimize
from .search import (
    DEFAULT_BUDGET,
    ProcedureConfig,
    brute_force_binary_oracle,
    procedure_a,
    procedure_b1,
    procedure_b2,
)

EXIT_OK, EXIT_PARSE, EXIT_NUMERIC, EXIT_BUDGET = 0, 2, 3, 4
PROCEDURES = ("A", "B1", "B2")
TIE_RULE = ("ties: smallest deleted label, then second deleted label, then added label; "
            "best per N by eff_lb, ties in procedure order A, B1, B2")


class SpecError(ValueError):
    pass


def parse_int_list(text):
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    return [int(x) for x in str(text).replace(";", ",").split(",") if x.strip()]


def parse_runs(value):
    """``16``, ``"13..20"``, ``"13,15,17"`` or a list."""
    if value is None:
        return []
    if isinstance(value, int):
        return [value]
    if isinstance(value, (list, tuple)):
        return [int(x) for x in value]
    text = str(value).strip()
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return parse_int_list(text)


def parse_float_list(value):
    if isinstance(value, (int, float)):
        return [float(value)]
    if isinstance(value, (list, tuple)):
        return [float(x) for x in value]
    return [float(x) for x in str(value).split(",") if x.strip()]


@dataclass
class ProblemSpec:
    levels: list
    effects: object = None
    runs: list = field(default_factory=list)
    rho: list = field(default_factory=lambda: [1.0, 5.0])
    procedure: str = "all"
    t: float = DEFAULT_T
    init_threshold: float = 0.98
    keep_threshold: float = 0.95
    n1_hint: int = None
    budget: int = DEFAULT_BUDGET
    fast: bool = False

    @property
    def procedures(self):
        return PROCEDURES if self.procedure.upper() == "ALL" else (self.procedure.upper(),)

    def effects_text(self):
        if self.effects is None:
            return "mains"
        if isinstance(self.effects, str):
            return self.effects
        return ";".join("x".join(str(i) for i in (e if isinstance(e, (list, tuple)) else [e]))
                        for e in self.effects)

    def echo(self):
        return (f"levels={','.join(map(str, self.levels))} effects={self.effects_text()} "
                f"rho={','.join(_fmt_full(r) for r in self.rho)}")

    def model(self):
        return FactorialModel.build(self.levels, self.effects)


def load_spec(args):
    data = {}
    if getattr(args, "spec", None):
        try:
            data = yaml.safe_load(Path(args.spec).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise SpecError(f"cannot read spec file: {exc}") from None
        if not isinstance(data, dict):
            raise SpecError("spec file must be a mapping")
        unknown = set(data) - {"levels", "effects", "runs", "rho", "procedure", "t",
                               "thresholds", "n1_hint", "budget", "fast"}
        if unknown:
            raise SpecError(f"unknown spec keys: {', '.join(sorted(unknown))}")
    for key in ("levels", "effects", "runs", "rho", "procedure", "t", "n1_hint", "budget",
                "fast"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    thresholds = data.pop("thresholds", None) or {}
    if isinstance(thresholds, (list, tuple)):
        thresholds = dict(zip(("init", "keep"), thresholds))
    if getattr(args, "init_threshold", None) is not None:
        thresholds["init"] = args.init_threshold
    if getattr(args, "keep_threshold", None) is not None:
        thresholds["keep"] = args.keep_threshold
    if "levels" not in data:
        raise SpecError("levels are required")
    try:
        spec = ProblemSpec(
            levels=parse_int_list(data["levels"]),
            effects=data.get("effects"),
            runs=parse_runs(data.get("runs")),
            rho=parse_float_list(data.get("rho", [1.0, 5.0])),
            procedure=str(data.get("procedure", "all")),
            t=float(data.get("t", DEFAULT_T)),
            init_threshold=float(thresholds.get("init", 0.98)),
            keep_threshold=float(thresholds.get("keep", 0.95)),
            n1_hint=int(data["n1_hint"]) if data.get("n1_hint") is not None else None,
            budget=int(data.get("budget", DEFAULT_BUDGET)),
            fast=bool(data.get("fast", False)),
        )
    except (TypeError, ValueError) as exc:
        raise SpecError(f"malformed spec: {exc}") from None
    if any(p not in PROCEDURES for p in spec.procedures):
        raise SpecError(f"procedure must be one of A, B1, B2, all; got {spec.procedure!r}")
    if any(r < 0 for r in spec.rho):
        raise SpecError("rho values must be nonnegative")
    return spec


def _fmt(x):
    return f"{x:.4f}"


def _fmt_full(x):
    return repr(float(x))


def _header(spec, model, opt, out):
    out.write(f"# spec: {spec.echo()}\n")
    out.write(f"# v={model.v} q={model.q} q+1={model.q + 1}\n")
    out.write(f"# t={spec.t!r} s={opt.s!r} thresholds: init={spec.init_threshold} "
              f"keep={spec.keep_threshold}\n")


def _prepare(spec):
    model = spec.model()
    opt = optimize(model.z, t=spec.t, max_iter=DEFAULT_MAX_ITER)
    return model, opt


def cmd_optimize_measure(spec, fmt="table", out=sys.stdout):
    model, opt = _prepare(spec)
    support = np.flatnonzero(opt.p_hat > 0)
    rows = [(int(k) + 1, model.space.format_treatment(model.space.unlabel(k + 1)),
             float(opt.p_hat[k])) for k in support]
    if fmt == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["label", "treatment", "mass"])
        for label, trt, mass in rows:
            w.writerow([label, trt, _fmt_full(mass)])
        return EXIT_OK
    _header(spec, model, opt, out)
    out.write(f"iterations: {opt.iterations}\n")
    out.write(f"terminal_gap: {opt.terminal_gap!r}\n")
    out.write(f"phi: {opt.phi!r}\n")
    if fmt == "text":
        out.write(f"spec: {spec.echo()}\ns: {opt.s!r}\nv: {model.v}\nq: {model.q}\n")
        for label, trt, mass in rows:
            out.write(f"mass: {label} {trt} {mass!r}\n")
        return EXIT_OK
    out.write(f"{'label':>6}  {'treatment':<{max(9, model.space.n)}}  mass\n")
    for label, trt, mass in rows:
        out.write(f"{label:>6}  {trt:<{max(9, model.space.n)}}  {mass:.4f}\n")
    return EXIT_OK


def _run_procedure(name, model, opt, cfg):
    if name == "A":
        return procedure_a(model, opt, cfg)
    if name == "B1":
        return procedure_b1(model, opt.s, cfg)
    return procedure_b2(model, opt.s, cfg)


def design_grid(spec, model, opt):
    """Run every selected procedure for every requested N.

    Returns ``{(N, procedure): SearchStep or error message}``.  Each
    procedure descends once to the smallest N; larger N are read off the
    same trace since the descent does not depend on the target.
    """
    cells = {}
    runs = sorted(set(spec.runs))
    for name in spec.procedures:
        pending = list(runs)
        while pending:
            cfg = ProcedureConfig(
                target_n=pending[0], init_threshold=spec.init_threshold,
                keep_threshold=spec.keep_threshold, rho_list=tuple(spec.rho),
                n1_hint=spec.n1_hint if name != "B2" else None, fast=spec.fast)
            try:
                trace = _run_procedure(name, model, opt, cfg)
            except (BasefracError, ValueError) as exc:
                cells[(pending[0], name)] = f"{type(exc).__name__}: {exc}"
                trace = getattr(exc, "trace", None)
                if trace is None:
                    pending.pop(0)
                    continue
            by_n = {step.n_runs: step for step in trace.steps}
            done = [n for n in pending if n in by_n]
            for n in done:
                cells[(n, name)] = by_n[n]
            pending = [n for n in pending if n not in by_n and (n, name) not in cells]
    return cells


def _best(cells, n, procedures):
    found = [(cells[(n, p)].eff_lb, -i, p) for i, p in enumerate(procedures)
             if not isinstance(cells.get((n, p)), (str, type(None)))]
    return max(found)[2] if found else None


def cmd_design(spec, fmt="table", out=sys.stdout, designs_dir=None):
    if not spec.runs:
        raise SpecError("design needs run sizes (--runs)")
    model, opt = _prepare(spec)
    too_small = [n for n in spec.runs if n < model.q + 1]
    if too_small:
        raise SpecError(f"run sizes {too_small} are below q + 1 = {model.q + 1}; "
                        "theta is not estimable")
    cells = design_grid(spec, model, opt)
    runs = sorted(set(spec.runs))
    rhos = [float(r) for r in spec.rho]
    status = EXIT_OK
    if fmt != "csv":
        _header(spec, model, opt, out)
        out.write(f"# {TIE_RULE}\n")
    if fmt == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["N", "procedure", "best", "eff_lb"] + [f"eff_lb({r:g})" for r in rhos]
                   + ["binary", "design_labels", "error"])
    for n in runs:
        best = _best(cells, n, spec.procedures)
        for name in spec.procedures:
            cell = cells.get((n, name))
            mark = "*" if name == best and len(spec.procedures) > 1 else ""
            if isinstance(cell, str) or cell is None:
                status = EXIT_NUMERIC
                msg = cell or "not reached"
                if fmt == "csv":
                    w.writerow([n, name, "", "", *([""] * len(rhos)), "", "", msg])
                elif fmt == "text":
                    out.write(f"\nN: {n}\nprocedure: {name}\nerror: {msg}\n")
                else:
                    out.write(f"{n:>4}  {name:<3}  error: {msg}\n")
                continue
            labels = cell.design.labels
            if designs_dir is not None:
                Path(designs_dir).mkdir(parents=True, exist_ok=True)
                write_design(Path(designs_dir) / f"design_N{n}_{name}.txt", cell.design,
                             comment=f"{spec.echo()}\nN={n} procedure={name}")
            if fmt == "csv":
                w.writerow([n, name, mark, _fmt_full(cell.eff_lb),
                            *[_fmt_full(cell.eff_lb_rho[r]) for r in rhos],
                            int(cell.is_binary), " ".join(map(str, labels)), ""])
            elif fmt == "text":
                out.write(f"\nspec: {spec.echo()}\nN: {n}\nprocedure: {name}\n"
                          f"best: {'yes' if mark else 'no'}\n"
                          f"design_labels: {' '.join(map(str, labels))}\n"
                          f"eff_lb: {cell.eff_lb!r}\n"
                          + "".join(f"eff_lb_rho[{r:g}]: {cell.eff_lb_rho[r]!r}\n" for r in rhos)
                          + f"binary: {cell.is_binary}\ns: {opt.s!r}\n")
            else:
                rho_txt = "  ".join(_fmt(cell.eff_lb_rho[r]) for r in rhos)
                out.write(f"{n:>4}  {name:<3}{mark:1} {_fmt(cell.eff_lb)}  {rho_txt}  "
                          f"{'binary' if cell.is_binary else 'nonbinary'}  "
                          f"{', '.join(map(str, labels))}\n")
    return status


def cmd_evaluate(design_file, spec, fmt="table", out=sys.stdout):
    model, opt = _prepare(spec)
    try:
        d = read_design(design_file, model.space)
    except OSError as exc:
        raise SpecError(f"cannot read design file: {exc}") from None
    if d.v != model.v:
        raise SpecError("design does not match the factorial")
    rhos = [float(r) for r in spec.rho]
    try:
        sc = score_design(d, model.z, opt.s, model.w, rhos)
    except SingularDesignError as exc:
        out.write(f"# spec: {spec.echo()}\nsingular design: {exc}\n"
                  f"N: {d.n_runs}\nq+1: {model.q + 1}\n")
        return EXIT_NUMERIC
    if fmt == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["N", "a_value", "eff_lb"] + [f"eff_lb({r:g})" for r in rhos] + ["binary"])
        w.writerow([d.n_runs, _fmt_full(sc.a_value), _fmt_full(sc.eff_lb),
                    *[_fmt_full(sc.eff_lb_rho[r]) for r in rhos], int(sc.is_binary)])
        return EXIT_OK
    _header(spec, model, opt, out)
    if fmt == "text":
        out.write(f"spec: {spec.echo()}\nN: {d.n_runs}\n"
                  f"design_labels: {' '.join(map(str, d.labels))}\n"
                  f"a_value: {sc.a_value!r}\neff_lb: {sc.eff_lb!r}\n"
                  + "".join(f"eff_lb_rho[{r:g}]: {sc.eff_lb_rho[r]!r}\n" for r in rhos)
                  + f"binary: {sc.is_binary}\ns: {opt.s!r}\n")
        return EXIT_OK
    out.write(f"N = {d.n_runs}  ({'binary' if sc.is_binary else 'non-binary'})\n")
    out.write(f"tr(H^-1) = {sc.a_value:.6f}\n")
    out.write(f"eff_lb   = {_fmt(sc.eff_lb)}\n")
    for r in rhos:
        out.write(f"eff_lb({r:g}) = {_fmt(sc.eff_lb_rho[r])}\n")
    return EXIT_OK


def cmd_oracle(spec, fmt="table", out=sys.stdout):
    if not spec.runs:
        raise SpecError("oracle needs run sizes (--runs)")
    model, opt = _prepare(spec)
    rhos = [float(r) for r in spec.rho]
    cells = design_grid(spec, model, opt)
    _header(spec, model, opt, out)
    status = EXIT_OK
    for n in sorted(set(spec.runs)):
        oracle = brute_force_binary_oracle(model, n, rhos, budget=spec.budget)
        out.write(f"\nN: {n}\nenumerated: {oracle.n_designs}\n"
                  f"min_a_value: {oracle.min_a_value!r}\n"
                  f"argmin: {' '.join(map(str, oracle.argmin.labels))}\n")
        for r in rhos:
            out.write(f"min_psi[{r:g}]: {oracle.min_psi[r]!r}\n")
        for name in spec.procedures:
            cell = cells.get((n, name))
            if isinstance(cell, str) or cell is None:
                out.write(f"{name}: error: {cell or 'not reached'}\n")
                status = EXIT_NUMERIC
                continue
            effs = [oracle.true_efficiency(cell.design, model, 0.0)]
            effs += [oracle.true_efficiency(cell.design, model, r) for r in rhos]
            tag = "optimal" if all(e >= 1 - 1e-9 for e in effs) else "suboptimal"
            rho_txt = " ".join(f"{e:.4f}" if fmt == "table" else repr(e) for e in effs)
            out.write(f"{name}: true_efficiency[0,{','.join(f'{r:g}' for r in rhos)}]: "
                      f"{rho_txt} {tag} design: {' '.join(map(str, cell.design.labels))}\n")
    return status


def build_parser():
    parser = argparse.ArgumentParser(prog="basefrac", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--spec", help="YAML problem spec file")
        p.add_argument("--levels", help="comma-separated level counts, e.g. 2,2,3")
        p.add_argument("--effects", help='effects, e.g. "1;2;3;1x3" (default: main effects)')
        p.add_argument("--rho", help="comma-separated rho values (default 1,5)")
        p.add_argument("--t", type=float, help="stopping tolerance (default 1e-10)")
        p.add_argument("--format", choices=("table", "csv", "text"), default="table")

    p = sub.add_parser("optimize-measure", help="A-optimal design measure")
    common(p)
    for name in ("design", "oracle"):
        p = sub.add_parser(name, help="exact designs by procedures A, B1, B2" if name == "design"
                           else "exhaustive comparison over binary designs")
        common(p)
        p.add_argument("--runs", help="run sizes, e.g. 13..20 or 13,15")
        p.add_argument("--procedure", help="A, B1, B2 or all")
        p.add_argument("--init-threshold", type=float)
        p.add_argument("--keep-threshold", type=float)
        p.add_argument("--n1-hint", dest="n1_hint", type=int)
        p.add_argument("--fast", action="store_true", default=None,
                       help="screen exchanges with rank-one updates (same results, faster)")
        if name == "design":
            p.add_argument("--designs-dir", help="write one design file per (N, procedure)")
        else:
            p.add_argument("--budget", type=int, help="max designs to enumerate")
    p = sub.add_parser("evaluate", help="score a design file")
    common(p)
    p.add_argument("design_file")
    return parser


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    buf = io.StringIO()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            spec = load_spec(args)
            if args.command == "optimize-measure":
                status = cmd_optimize_measure(spec, args.format, buf)
            elif args.command == "design":
                status = cmd_design(spec, args.format, buf, args.designs_dir)
            elif args.command == "evaluate":
                status = cmd_evaluate(args.design_file, spec, args.format, buf)
            else:
                status = cmd_oracle(spec, args.format, buf)
    except (SpecError, InvalidModelError, InvalidTreatmentError) as exc:
        out.write(buf.getvalue())
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except BudgetExceededError as exc:
        out.write(buf.getvalue())
        print(f"error: {exc} (required budget: {exc.required})", file=sys.stderr)
        return EXIT_BUDGET
    except BasefracError as exc:
        out.write(buf.getvalue())
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    out.write(buf.getvalue())
    return status


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
