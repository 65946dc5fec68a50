"""Script language: tokenizer, recursive-descent parser and printer.

A script is a sequence of statements ending in ``;``.  Declarations build a
jet context and named objects; directives ask for checks.  ``#`` starts a
comment.  Example::

    vars t x; dep u;
    eq heat: u_t = u_xx;
    op G: t*dx - (1/2)*x*u*du;
    check-lie heat G;

Expressions use ``+ - * / ^`` (``**`` also accepted), integers (so ``1/2``
is an exact rational), ``exp``, ``log``, ``sqrt``, ``erf``, ``Int(f, t)``
for a formal antiderivative, and derivatives written ``d(u, x, 2)``,
``d(f, t, x)`` or as jets ``u_xx``.  Inside ``op`` statements the symbols
``dt``, ``dx``, ``du`` (``d`` + variable name) are basis vectors.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import sympy as sp
from sympy.core.function import AppliedUndef

from .expr import ContextError, Int, JetContext, QsymError
from .printing import to_infix

# -- tokens ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<number>\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"[^"\n]*")
  | (?P<op>\*\*|[-+*/^(),;:=.~])
    """,
    re.VERBOSE,
)


class ScriptError(QsymError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {message}" if line else message)
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int
    start: int
    end: int


def tokenize(source: str) -> list[Token]:
    out = []
    pos, line, line_start = 0, 1, 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            raise ScriptError(f"unexpected character {source[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        text = m.group()
        if kind not in ("ws", "comment"):
            out.append(Token(kind, text, line, pos - line_start + 1, pos, m.end()))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            line_start = pos + text.rindex("\n") + 1
        pos = m.end()
    out.append(Token("eof", "", line, pos - line_start + 1, pos, pos))
    return out


# -- statements -------------------------------------------------------------------------


@dataclass(frozen=True)
class Vars:
    names: tuple


@dataclass(frozen=True)
class Dep:
    names: tuple


@dataclass(frozen=True)
class Param:
    names: tuple


@dataclass(frozen=True)
class Unknown:
    name: str
    args: tuple


@dataclass(frozen=True)
class Eq:
    name: str
    lhs: sp.Expr
    rhs: sp.Expr


@dataclass(frozen=True)
class System:
    name: str
    members: tuple


@dataclass(frozen=True)
class Op:
    name: str
    coeffs: tuple  # ((basis variable name, coefficient), ...)


@dataclass(frozen=True)
class Constraint:
    name: str
    lhs: sp.Expr  # a derivative of the unknown function
    rhs: sp.Expr


@dataclass(frozen=True)
class AnsatzDecl:
    name: str
    form: sp.Expr
    invariants: tuple  # ((w, expr), ...)
    solve: tuple
    phi: str
    dep: str = "u"


@dataclass(frozen=True)
class Directive:
    keyword: str  # check-lie, check-qcond, derive, bracket, closure, reduce, joint, verify-case, run-casebook, property
    args: tuple  # names and mode words
    options: tuple = ()  # ((option, value), ...), e.g. ("with", ("fc",)), ("candidate", expr)


@dataclass(frozen=True)
class Case:
    id: str
    expect: str  # pass, mismatch, fail
    note: str
    directive: Directive


@dataclass
class Script:
    statements: list = field(default_factory=list)

    def __eq__(self, other):
        return isinstance(other, Script) and self.statements == other.statements


DIRECTIVES = (
    "check-lie",
    "check-qcond",
    "derive",
    "bracket",
    "closure",
    "reduce",
    "joint",
    "verify-case",
    "run-casebook",
    "property",
)

_FUNCS = {"exp": sp.exp, "log": sp.log, "sqrt": sp.sqrt, "erf": sp.erf}


# -- parser -------------------------------------------------------------------------------


class _Parser:
    def __init__(self, source: str):
        self.toks = tokenize(source)
        self.i = 0
        self.ctx: JetContext | None = None
        self.vars: tuple = ()
        self.pending_params: list = []
        self.locals: dict = {}
        self.basis: dict = {}
        self.free_functions: set | None = None

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return ScriptError(msg, tok.line, tok.col)

    def peek(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("op", "name")

    def take(self, text: str | None = None, kind: str | None = None) -> Token:
        t = self.tok
        if text is not None and t.text != text:
            raise self.error(f"expected {text!r}, found {t.text or 'end of input'!r}")
        if kind is not None and t.kind != kind:
            raise self.error(f"expected {kind}, found {t.text or 'end of input'!r}")
        self.i += 1
        return t

    def word(self) -> str:
        """Adjacent names, numbers, dots and dashes: ``check-lie``, ``thm1.case2``."""
        first = self.tok
        if first.kind not in ("name", "number"):
            raise self.error(f"expected a name, found {first.text or 'end of input'!r}")
        parts = [self.take().text]
        end = first.end
        while self.tok.start == end and (self.tok.kind in ("name", "number") or self.tok.text in (".", "-")):
            end = self.tok.end
            parts.append(self.take().text)
        return "".join(parts)

    def name(self) -> str:
        return self.take(kind="name").text

    # statements
    def script(self) -> Script:
        out = Script()
        while self.tok.kind != "eof":
            out.statements.append(self.statement())
        return out

    def statement(self):
        start = self.tok
        kw = self.word()
        if kw == "vars":
            names = self.names_until(";")
            self.ctx, self.vars, self.pending_params = None, tuple(names), []
            stmt = Vars(tuple(names))
        elif kw == "dep":
            if not self.vars:
                raise self.error("dep before vars", start)
            names = self.names_until(";")
            try:
                self.ctx = JetContext(self.vars, names, params=self.pending_params)
            except ContextError as exc:
                raise self.error(str(exc), start) from None
            stmt = Dep(tuple(names))
        elif kw == "param":
            names = self.names_until(";")
            for n in names:
                if self.ctx is None:
                    self.pending_params.append(n)
                else:
                    try:
                        self.ctx.param(n)
                    except ContextError as exc:
                        raise self.error(str(exc), start) from None
            stmt = Param(tuple(names))
        elif kw == "unknown":
            self.need_ctx(start)
            fname = self.name()
            self.take("(")
            args = self.names_until(")")
            self.take(")")
            try:
                self.ctx.unknown(fname, args)
            except ContextError as exc:
                raise self.error(str(exc), start) from None
            stmt = Unknown(fname, tuple(args))
        elif kw == "eq":
            self.need_ctx(start)
            name = self.name()
            self.take(":")
            lhs = self.expr()
            self.take("=")
            rhs = self.expr()
            stmt = Eq(name, lhs, rhs)
        elif kw == "system":
            name = self.name()
            self.take(":")
            members = [self.name()]
            while self.peek(","):
                self.take(",")
                members.append(self.name())
            stmt = System(name, tuple(members))
        elif kw == "op":
            self.need_ctx(start)
            stmt = self.op()
        elif kw == "constraint":
            self.need_ctx(start)
            name = self.name()
            self.take(":")
            at = self.tok
            lhs = self.expr()
            if not (isinstance(lhs, sp.Derivative) and isinstance(lhs.expr, AppliedUndef)):
                raise self.error("constraint left-hand side must be a derivative of an unknown function", at)
            self.take("=")
            stmt = Constraint(name, lhs, self.expr())
        elif kw == "ansatz":
            self.need_ctx(start)
            stmt = self.ansatz()
        elif kw == "case":
            cid = self.word()
            self.take("expect")
            expect = self.name()
            if expect not in ("pass", "mismatch", "fail"):
                raise self.error(f"unknown expectation {expect!r}")
            note = ""
            if self.tok.kind == "string":
                note = self.take().text[1:-1]
            self.take(":")
            inner = self.word()
            if inner not in DIRECTIVES:
                raise self.error(f"case needs a directive, found {inner!r}")
            return Case(cid, expect, note, self.directive(inner))
        elif kw in DIRECTIVES:
            return self.directive(kw)
        else:
            raise self.error(f"unknown statement {kw!r}", start)
        self.take(";")
        return stmt

    def need_ctx(self, tok):
        if self.ctx is None:
            raise self.error("declare vars and dep first", tok)

    def names_until(self, stop: str) -> list[str]:
        names = []
        while not self.peek(stop):
            names.append(self.name())
            if self.peek(","):
                self.take(",")
        return names

    def op(self) -> Op:
        name = self.name()
        self.take(":")
        basis = {sp.Symbol(f"d{s}"): str(s) for s in self.ctx.independent + self.ctx.dependent}
        self.basis = {str(k): k for k in basis}
        at = self.tok
        try:
            e = sp.expand(self.expr())
        finally:
            self.basis = {}
        coeffs = []
        rest = e
        for b in basis:
            c = e.coeff(b)
            if c != 0:
                if c.free_symbols & set(basis):
                    raise self.error("operator is not linear in the basis vectors", at)
                coeffs.append((basis[b], sp.factor_terms(c)))
                rest -= c * b
        if sp.expand(rest) != 0:
            raise self.error("operator terms must each carry one basis vector", at)
        return Op(name, tuple(coeffs))

    def ansatz(self) -> AnsatzDecl:
        name = self.name()
        self.take(":")
        self.take(str(self.ctx.dependent[0]))
        self.take("=")
        # the form refers to invariants declared after 'where': skip ahead first
        form_start = self.i
        depth = 0
        while not (depth == 0 and self.peek("where")):
            if self.tok.kind == "eof" or (depth == 0 and self.peek(";")):
                raise self.error("ansatz needs 'where w = ... solve x'")
            depth += {"(": 1, ")": -1}.get(self.tok.text, 0)
            self.i += 1
        self.take("where")
        invariants = []
        while True:
            w = self.name()
            self.take("=")
            invariants.append((w, self.expr()))
            if not self.peek(","):
                break
            self.take(",")
        self.take("solve")
        solve = self.names_until(";")
        after = self.i
        self.i = form_start
        self.locals = {w: sp.Symbol(w) for w, _ in invariants}
        self.free_functions = set()
        try:
            form = self.expr()
        finally:
            self.locals = {}
            found, self.free_functions = self.free_functions, None
        if len(found) != 1:
            raise self.error("ansatz form needs exactly one undeclared function of the invariants")
        self.i = after
        invariants = tuple((sp.Symbol(w), e) for w, e in invariants)
        return AnsatzDecl(name, form, invariants, tuple(solve), found.pop(), str(self.ctx.dependent[0]))

    def directive(self, kw: str) -> Directive:
        args, options = [], []
        if kw == "joint":
            while not self.peek("candidate"):
                args.append(self.word())
            self.take("candidate")
            options.append(("candidate", self.expr()))
        elif kw in ("verify-case", "property"):
            while not self.peek(";"):
                args.append(self.word())
        else:
            while not self.peek(";") and not self.peek("with") and not self.peek("by"):
                args.append(self.word())
            while self.peek("with") or self.peek("by"):
                key = self.take().text
                vals = []
                while not self.peek(";") and not self.peek("with") and not self.peek("by"):
                    vals.append(self.word())
                options.append((key, tuple(vals)))
        self.take(";")
        return Directive(kw, tuple(args), tuple(options))

    # expressions
    def expr(self):
        left = self.term()
        while self.peek("+") or self.peek("-"):
            op = self.take().text
            right = self.term()
            left = left + right if op == "+" else left - right
        return left

    def term(self):
        left = self.unary()
        while self.peek("*") or self.peek("/"):
            op = self.take().text
            right = self.unary()
            left = left * right if op == "*" else left / right
        return left

    def unary(self):
        if self.peek("-"):
            self.take()
            return -self.unary()
        if self.peek("+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek("^") or self.peek("**"):
            self.take()
            return base ** self.unary()
        return base

    def atom(self):
        t = self.tok
        if t.kind == "number":
            self.take()
            return sp.Integer(t.text)
        if self.peek("("):
            self.take("(")
            e = self.expr()
            self.take(")")
            return e
        if t.kind != "name":
            raise self.error(f"unexpected {t.text or 'end of input'!r}")
        name = self.take().text
        if self.peek("("):
            return self.call(name, t)
        return self.symbol(name, t)

    def symbol(self, name: str, tok: Token):
        if name in self.locals:
            return self.locals[name]
        if name in self.basis:
            return self.basis[name]
        ctx = self.ctx
        if ctx is None:
            raise self.error("declare vars and dep first", tok)
        s = sp.Symbol(name)
        if s in ctx.independent or s in ctx.dependent or name in ctx.params:
            return s
        if name in ctx.unknowns:
            return sp.Function(name)(*ctx.unknowns[name])
        if ctx._register_by_name(s) is not None:
            return s
        if name == "pi":
            return sp.pi
        raise self.error(f"undeclared symbol {name!r}", tok)

    def args(self) -> list:
        self.take("(")
        out = []
        while not self.peek(")"):
            out.append(self.expr())
            if not self.peek(","):
                break
            self.take(",")
        self.take(")")
        return out

    def call(self, name: str, tok: Token):
        if name == "d":
            return self.derivative(tok)
        args = self.args()
        if name in _FUNCS:
            if len(args) != 1:
                raise self.error(f"{name} takes one argument", tok)
            return _FUNCS[name](args[0])
        if name == "Int":
            if len(args) != 2 or not isinstance(args[1], sp.Symbol):
                raise self.error("Int takes an integrand and a variable", tok)
            return Int(args[0], args[1])
        ctx = self.ctx
        if ctx is not None and name in ctx.unknowns:
            sig = ctx.unknowns[name]
            if len(args) != len(sig):
                raise self.error(f"{name} takes {len(sig)} arguments, got {len(args)}", tok)
            return sp.Function(name)(*args)
        if self.free_functions is not None:
            self.free_functions.add(name)
            return sp.Function(name)(*args)
        raise self.error(f"undeclared function {name!r}", tok)

    def derivative(self, tok: Token):
        self.take("(")
        at = self.tok
        target = self.expr()
        steps = []
        while self.peek(","):
            self.take(",")
            v = self.expr()
            if isinstance(v, sp.Integer):
                if not steps:
                    raise self.error("derivative count before any variable", at)
                steps[-1] = (steps[-1][0], steps[-1][1] + int(v) - 1)
            elif isinstance(v, sp.Symbol):
                steps.append((v, 1))
            else:
                raise self.error("derivative variables must be symbols", at)
        self.take(")")
        if not steps:
            raise self.error("d needs at least one variable", tok)
        ctx = self.ctx
        if ctx is not None and target in ctx.dependent:
            counts = [0] * ctx.n
            for v, c in steps:
                try:
                    counts[ctx.var_index(v)] += c
                except ContextError:
                    raise self.error(f"{v} is not an independent variable", at) from None
            return ctx.jet(str(target), counts)
        if isinstance(target, AppliedUndef):
            return sp.Derivative(target, *steps)
        raise self.error("d applies to a dependent variable or an unknown function", at)


def parse(source: str) -> Script:
    """Parse a script; errors carry ``line:col``."""
    return _Parser(source).script()


# -- printer ------------------------------------------------------------------------------


def _fmt(e) -> str:
    return to_infix(e)


def _basis_term(c, b) -> str:
    if c == 1:
        return f"d{b}"
    if c.is_Atom or isinstance(c, (sp.Function, AppliedUndef)):
        return f"{_fmt(c)}*d{b}"
    return f"({_fmt(c)})*d{b}"


def format_statement(s) -> str:
    if isinstance(s, Vars):
        return "vars " + " ".join(s.names) + ";"
    if isinstance(s, Dep):
        return "dep " + " ".join(s.names) + ";"
    if isinstance(s, Param):
        return "param " + " ".join(s.names) + ";"
    if isinstance(s, Unknown):
        return f"unknown {s.name}({', '.join(s.args)});"
    if isinstance(s, Eq):
        return f"eq {s.name}: {_fmt(s.lhs)} = {_fmt(s.rhs)};"
    if isinstance(s, System):
        return f"system {s.name}: {', '.join(s.members)};"
    if isinstance(s, Op):
        terms = " + ".join(_basis_term(c, b) for b, c in s.coeffs) or "0"
        return f"op {s.name}: {terms};"
    if isinstance(s, Constraint):
        return f"constraint {s.name}: {_fmt(s.lhs)} = {_fmt(s.rhs)};"
    if isinstance(s, AnsatzDecl):
        inv = ", ".join(f"{w} = {_fmt(e)}" for w, e in s.invariants)
        return f"ansatz {s.name}: {s.dep} = {_fmt(s.form)} where {inv} solve {' '.join(s.solve)};"
    if isinstance(s, Directive):
        parts = [s.keyword, *s.args]
        for key, val in s.options:
            if key == "candidate":
                parts += ["candidate", _fmt(val)]
            else:
                parts += [key, *val]
        return " ".join(parts) + ";"
    if isinstance(s, Case):
        note = f' "{s.note}"' if s.note else ""
        return f"case {s.id} expect {s.expect}{note}: {format_statement(s.directive)}"
    raise TypeError(f"cannot print {s!r}")


def format_script(script: Script) -> str:
    lines = []
    for s in script.statements:
        if isinstance(s, Vars) and lines:
            lines.append("")
        lines.append(format_statement(s))
    return "\n".join(lines) + "\n"
