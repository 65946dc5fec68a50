"""Run scripts: build the objects they declare and execute their directives.

Usage::

    qsym script.qs [--emit-summary out.json] [--seed 0] [--max-order k]
    qsym --casebook            # the bundled casebook
    qsym --casebook path.qs    # another casebook file

The exit status is 0 only if every directive met its expectation.
"""

from __future__ import annotations

import argparse
import json
import pickle
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import sympy as sp

from . import casebook
from .dsl import (
    AnsatzDecl,
    Case,
    Constraint,
    Dep,
    Directive,
    Eq,
    Op,
    Param,
    Script,
    ScriptError,
    System,
    Unknown,
    Vars,
    format_script,
    format_statement,
    parse,
)
from .expr import JetContext, QsymError, is_zero, normalize
from .invariance import (
    FunctionConstraint,
    PdeSystem,
    check_algebra_closure,
    lie_determining_system,
    lie_residual,
    qcond_determining_system,
    qcond_residual,
)
from .operators import VectorField, lie_bracket
from .printing import to_infix, to_prefix
from .reduction import Ansatz, ReductionError, joint_system_check, reduce

SUMMARY_FORMAT = "qsym-summary/1"


@dataclass
class Result:
    id: str
    source: str
    status: str  # pass, fail, mismatch, error
    expected: str = "pass"
    lines: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    forms: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == self.expected

    def text(self) -> str:
        mark = "ok" if self.ok else "NOT OK"
        head = f"[{self.status.upper()}] {self.id}: {self.source}"
        if self.expected != "pass" or not self.ok:
            head += f"  (expected {self.expected}, {mark})"
        return "\n".join([head] + [f"  {line}" for line in self.lines])

    def record(self) -> dict:
        return {
            "id": self.id,
            "directive": self.source,
            "status": self.status,
            "expected": self.expected,
            "ok": self.ok,
            "residuals": [to_prefix(r) for r in self.residuals],
            "forms": {k: to_prefix(v) for k, v in sorted(self.forms.items())},
        }


@dataclass
class Env:
    """Objects declared so far; rebuilt from the statements in order."""

    ctx: JetContext | None = None
    vars: tuple = ()
    params: list = field(default_factory=list)
    systems: dict = field(default_factory=dict)
    ops: dict = field(default_factory=dict)
    constraints: dict = field(default_factory=dict)
    ansatzes: dict = field(default_factory=dict)

    def declare(self, s):
        if isinstance(s, Vars):
            self.__init__(vars=s.names)
        elif isinstance(s, Dep):
            self.ctx = JetContext(self.vars, s.names, params=self.params)
        elif isinstance(s, Param):
            for n in s.names:
                if self.ctx is None:
                    self.params.append(n)
                else:
                    self.ctx.param(n)
        elif isinstance(s, Unknown):
            self.ctx.unknown(s.name, s.args)
        elif isinstance(s, Eq):
            self.ctx.jets_in(s.lhs - s.rhs)
            lead = s.lhs if self.ctx.is_jet(s.lhs) and self.ctx.jet_info(s.lhs)[1].order > 0 else None
            if lead is not None and lead not in self.ctx.jets_in(s.rhs):
                self.systems[s.name] = PdeSystem(self.ctx, [(s.lhs, s.rhs)], s.name)
            else:
                self.systems[s.name] = PdeSystem.from_expression(self.ctx, s.lhs - s.rhs, name=s.name)
        elif isinstance(s, System):
            eqs = []
            for m in s.members:
                eqs.extend(self.system(m).equations)
            self.systems[s.name] = PdeSystem(self.ctx, eqs, s.name)
        elif isinstance(s, Op):
            self.ops[s.name] = VectorField.from_dict(self.ctx, dict(s.coeffs))
        elif isinstance(s, Constraint):
            f = s.lhs.expr
            alpha = tuple(v for v, c in s.lhs.variable_count for _ in range(int(c)))
            self.constraints[s.name] = FunctionConstraint(f.func.__name__, alpha, s.rhs)
        elif isinstance(s, AnsatzDecl):
            self.ansatzes[s.name] = Ansatz(self.ctx, dict(s.invariants), s.form, s.solve, phi=s.phi)

    def system(self, name) -> PdeSystem:
        try:
            return self.systems[name]
        except KeyError:
            raise QsymError(f"no equation or system named {name!r}") from None

    def op(self, name) -> VectorField:
        try:
            return self.ops[name]
        except KeyError:
            raise QsymError(f"no operator named {name!r}") from None

    def with_constraints(self, d: Directive) -> list:
        out = []
        for key, vals in d.options:
            if key == "with":
                for v in vals:
                    if v not in self.constraints:
                        raise QsymError(f"no constraint named {v!r}")
                    out.append(self.constraints[v])
        return out


def _option(d: Directive, key: str):
    for k, v in d.options:
        if k == key:
            return v
    return None


def _residual_lines(res) -> list[str]:
    return [f"residual = {to_infix(normalize(r))}" for r in res]


def execute(d: Directive, env: Env, seed: int = 0, max_order: int | None = None) -> Result:
    """Run one directive against the declared objects."""
    res = Result("", format_statement(d), "pass")
    kw, args = d.keyword, d.args
    if kw in ("check-lie", "check-qcond"):
        S = env.system(args[0])
        ops = [env.op(n) for n in args[1:]]
        cons = env.with_constraints(d)
        if kw == "check-lie":
            for name, Q in zip(args[1:], ops):
                r = lie_residual(S, Q, cons, cap=max_order)
                res.residuals.extend(r)
                res.lines.extend(f"{name}: {line}" for line in _residual_lines(r))
        else:
            r = qcond_residual(S, ops, cons)
            res.residuals.extend(r)
            res.lines.extend(_residual_lines(r))
        res.status = "pass" if all(is_zero(r) for r in res.residuals) else "fail"
    elif kw == "derive":
        mode, S, T = args[0], env.system(args[1]), env.op(args[2])
        if mode not in ("qcond", "lie"):
            raise QsymError("derive takes 'qcond' or 'lie'")
        build = qcond_determining_system if mode == "qcond" else lie_determining_system
        det = build(S, T, env.with_constraints(d))
        res.lines.append(f"{len(det)} determining equations, split over {', '.join(map(str, det.split_vars))}")
        for k, e in enumerate(det.equations):
            res.lines.append(f"{to_infix(e)} = 0")
            res.forms[f"eq{k}"] = e
    elif kw == "bracket":
        B = lie_bracket(env.op(args[0]), env.op(args[1]))
        res.lines.append(f"[{args[0]}, {args[1]}] = {B}")
        for c, s in zip(B.coefficients, B.ctx.independent + B.ctx.dependent):
            res.forms[f"d{s}"] = c
    elif kw == "closure":
        S = env.system(args[0])
        ops = [env.op(n) for n in args[1:]]
        ideal = _option(d, "by")
        rep = check_algebra_closure(ops, S, env.op(ideal[0]) if ideal else None, env.with_constraints(d))
        names = args[1:]
        for (a, b), coeffs in sorted(rep.table.items()):
            if coeffs is None:
                res.lines.append(f"[{names[a]}, {names[b]}] leaves the span")
            else:
                combo = " + ".join(f"({to_infix(c)})*{names[k]}" for k, c in enumerate(coeffs) if c != 0) or "0"
                res.lines.append(f"[{names[a]}, {names[b]}] = {combo}")
        for a, ok in sorted(rep.ideal.items()):
            res.lines.append(f"[{names[a]}, {ideal[0]}] {'stays in' if ok else 'leaves'} the ideal")
        res.status = "pass" if rep.closed else "fail"
    elif kw == "reduce":
        S, A = env.system(args[0]), env.ansatzes.get(args[1])
        if A is None:
            raise QsymError(f"no ansatz named {args[1]!r}")
        waive = "waive" in args[2:]
        by = _option(d, "by")
        ops = [env.op(n) for n in by] if by else None
        try:
            red = reduce(S, A, ops, waive=waive)
        except ReductionError as exc:
            res.status = "fail"
            res.lines.append(str(exc))
            if exc.remainder is not None:
                res.residuals.append(exc.remainder)
                res.lines.append(f"remainder = {to_infix(exc.remainder)}")
            return res
        res.forms["reduced"] = red.equation
        res.forms["multiplier"] = red.multiplier
        res.lines.append(f"reduced: {to_infix(red.as_function())} = 0")
        res.lines.append(f"multiplier: {to_infix(red.multiplier)}")
        if red.inconsistent:
            res.lines.append("reduced equation is inconsistent")
    elif kw == "joint":
        S = env.system(args[0])
        ops = [env.op(n) for n in args[1:]]
        cand = _option(d, "candidate")
        ok = joint_system_check(S, ops, cand)
        res.lines.append(f"candidate {to_infix(cand)} {'solves' if ok else 'does not solve'} the joint system")
        res.status = "pass" if ok else "fail"
    elif kw == "verify-case":
        rep = casebook.run_case(args[0])
        res.expected = casebook.expected_outcome(args[0])
        _absorb(res, rep)
    elif kw == "run-casebook":
        bad = 0
        for cid in casebook.CASES:
            rep = casebook.run_case(cid)
            expected = casebook.expected_outcome(cid)
            res.lines.extend(rep.lines())
            if rep.status != expected:
                bad += 1
                res.lines.append(f"  expected {expected}")
            for label, value in rep.forms.items():
                res.forms[f"{cid}/{label}"] = value
        res.lines.append(f"{len(casebook.CASES) - bad} of {len(casebook.CASES)} cases as expected")
        res.status = "pass" if bad == 0 else "fail"
    elif kw == "property":
        fn = casebook.PROPERTIES.get(args[0])
        if fn is None:
            raise QsymError(f"no property named {args[0]!r}")
        rep = fn(seed, int(args[1])) if len(args) > 1 else fn(seed)
        _absorb(res, rep)
    else:
        raise QsymError(f"unknown directive {kw!r}")
    return res


def _absorb(res: Result, rep):
    res.status = rep.status
    res.lines.extend(rep.lines())
    res.residuals.extend(r for _, ok, r in rep.checks if r is not None and not isinstance(r, sp.MatrixBase))
    res.forms.update(rep.forms)


def _jobs(script: Script):
    """``(id, directive, expectation, environment snapshot)`` in script order."""
    env = Env()
    n = 0
    for s in script.statements:
        if isinstance(s, (Directive, Case)):
            n += 1
            if isinstance(s, Case):
                yield s.id, s.directive, s.expect, format_statement(s), env
            else:
                yield f"{n:03d}:{s.keyword}", s, None, format_statement(s), env
            continue
        env = _copy_env(env)
        env.declare(s)


def _copy_env(env: Env) -> Env:
    out = Env(env.ctx, env.vars, list(env.params), dict(env.systems), dict(env.ops), dict(env.constraints), dict(env.ansatzes))
    return out


def _run_job(job, seed, max_order) -> Result:
    jid, d, expect, source, env = job
    try:
        res = execute(d, env, seed, max_order)
    except (QsymError, ValueError) as exc:
        res = Result(jid, source, "error", lines=[f"error in {jid}: {exc}"])
    res.id = jid
    res.source = source
    if expect is not None:
        res.expected = expect
    return res


def run(script: Script, seed: int = 0, max_order: int | None = None, parallel: bool = False) -> tuple[int, list]:
    """Execute every directive; exit code 0 iff each met its expectation."""
    try:
        jobs = list(_jobs(script))
    except (QsymError, ValueError) as exc:
        return 2, [Result("declarations", "", "error", lines=[str(exc)])]
    results = None
    if parallel and len(jobs) > 1:
        try:
            pickle.dumps(jobs)
        except Exception:
            parallel = False
        if parallel:
            with ProcessPoolExecutor() as pool:
                futures = [pool.submit(_run_job, j, seed, max_order) for j in jobs]
                results = [f.result() for f in futures]
            results.sort(key=lambda r: r.id)
    if results is None:
        results = [_run_job(j, seed, max_order) for j in jobs]
    code = 0 if all(r.ok for r in results) else 1
    return code, results


def summary(results: list, seed: int, max_order, code: int) -> dict:
    return {
        "format": SUMMARY_FORMAT,
        "seed": seed,
        "max_order": max_order,
        "exit_code": code,
        "records": [r.record() for r in results],
    }


def report_text(results: list) -> str:
    ok = sum(r.ok for r in results)
    body = "\n".join(r.text() for r in results)
    return f"{body}\n{ok} of {len(results)} directives as expected\n"


def bundled_casebook() -> str:
    return resources.files("qsym").joinpath("data/casebook.qs").read_text(encoding="utf-8")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qsym", description="Check Lie and Q-conditional symmetries of PDEs.")
    p.add_argument("script", nargs="?", help="script file; '-' reads standard input")
    p.add_argument("--casebook", nargs="?", const="", default=None, metavar="PATH",
                   help="run a casebook file (the bundled one without PATH)")
    p.add_argument("--emit-summary", metavar="PATH", help="write a JSON summary of every directive")
    p.add_argument("--max-order", type=int, default=None, metavar="K",
                   help="order cap of consequence closure in Lie checks (default 2r)")
    p.add_argument("--seed", type=int, default=0, help="seed for property directives")
    p.add_argument("--parallel", action="store_true", help="run directives in worker processes")
    p.add_argument("--print", dest="print_only", action="store_true", help="print the parsed script and stop")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    sources = []
    if args.casebook is not None:
        if args.casebook:
            with open(args.casebook, encoding="utf-8") as fh:
                sources.append((args.casebook, fh.read()))
        else:
            sources.append(("<casebook>", bundled_casebook()))
    if args.script:
        if args.script == "-":
            sources.append(("<stdin>", sys.stdin.read()))
        else:
            with open(args.script, encoding="utf-8") as fh:
                sources.append((args.script, fh.read()))
    if not sources:
        build_parser().print_usage(sys.stderr)
        return 2
    all_results = []
    code = 0
    for name, text in sources:
        try:
            script = parse(text)
        except ScriptError as exc:
            print(f"{name}:{exc}", file=sys.stderr)
            return 2
        if args.print_only:
            sys.stdout.write(format_script(script))
            continue
        c, results = run(script, args.seed, args.max_order, args.parallel)
        code = max(code, c)
        sys.stdout.write(report_text(results))
        all_results.extend(results)
    if args.emit_summary and not args.print_only:
        with open(args.emit_summary, "w", encoding="utf-8") as fh:
            json.dump(summary(all_results, args.seed, args.max_order, code), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
