"""Runnable checks of the heat-equation results and the transfer-equation examples.

Each check returns a :class:`CaseReport`.  A report lists the individual
checks it ran, the canonical forms it computed (the golden data), and notes
on anything printed in the source literature that did not survive an exact
check.  ``status`` is ``"pass"``, ``"mismatch"`` (every engine check passed
but a printed form had to be corrected) or ``"fail"``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import sympy as sp

from .expr import Int, JetContext, QsymError, is_zero, normalize, replace_unknown
from .invariance import (
    FunctionConstraint,
    PdeSystem,
    _constant_combination,
    check_algebra_closure,
    determining_to_system,
    induced_operator,
    is_lie_symmetry,
    lie_residual,
    m_residual,
    qcond_determining_system,
    qcond_residual,
)
from .operators import (
    VectorField,
    apply_equivalence,
    apply_prolonged,
    evolutionary_identity_residual,
    prolong,
)
from .printing import to_infix
from .reduction import Ansatz, evaluate_on, is_solution, joint_system_check, reduce, verify_ansatz
from .samples import (
    nonzero_rational,
    random_heat_solution,
    random_jet_expression,
    random_polynomial,
    random_vector_field,
)

HALF = sp.Rational(1, 2)


class CaseError(QsymError):
    """Inputs violate a case's preconditions."""


@dataclass
class CaseReport:
    id: str
    title: str
    checks: list = field(default_factory=list)  # (label, ok, residual or None)
    forms: dict = field(default_factory=dict)  # label -> canonical expression
    notes: list = field(default_factory=list)
    mismatch: bool = False

    def check(self, label: str, ok: bool, residual=None) -> bool:
        self.checks.append((label, bool(ok), residual))
        return bool(ok)

    def flag(self, note: str):
        """A printed form did not survive an exact check; recorded, not fatal."""
        self.mismatch = True
        self.notes.append(note)

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    @property
    def status(self) -> str:
        if not self.passed:
            return "fail"
        return "mismatch" if self.mismatch else "pass"

    def lines(self) -> list[str]:
        out = [f"[{self.status.upper()}] {self.id}: {self.title}"]
        for label, ok, res in self.checks:
            tail = "" if res is None else f"  residual = {to_infix(res)}"
            out.append(f"  {'ok  ' if ok else 'FAIL'} {label}{tail}")
        for label in sorted(self.forms):
            out.append(f"  form {label}: {to_infix(self.forms[label])}")
        for note in self.notes:
            out.append(f"  note: {note}")
        return out


# -- shared objects -------------------------------------------------------------------


def heat_system() -> PdeSystem:
    ctx = JetContext(["t", "x"], ["u"])
    return PdeSystem(ctx, [(ctx.d("u", "t"), ctx.d("u", "x", "x"))], "heat")


def _field(ctx, **coeffs) -> VectorField:
    return VectorField.from_dict(ctx, coeffs)


def heat_generators(ctx: JetContext) -> dict:
    t, x = ctx.independent
    (u,) = ctx.dependent
    return {
        "dt": _field(ctx, t=1),
        "dx": _field(ctx, x=1),
        "G": _field(ctx, x=t, u=-HALF * x * u),
        "I": _field(ctx, u=u),
        "D": _field(ctx, t=2 * t, x=x),
        "Pi": _field(ctx, t=4 * t**2, x=4 * t * x, u=-(x**2 + 2 * t) * u),
    }


def heat_ideal(ctx: JetContext):
    """``f(t,x) d/du`` with the constraint ``f_t = f_xx``."""
    t, x = ctx.independent
    f = ctx.unknown("f", (t, x)) if "f" not in ctx.unknowns else sp.Function("f")(t, x)
    return _field(ctx, u=f), [FunctionConstraint("f", (t,), sp.diff(f, x, 2))]


def template_one(ctx: JetContext, with_g3: bool = True) -> VectorField:
    t, x = ctx.independent
    (u,) = ctx.dependent
    g1, g2 = ctx.unknown("g1", (t, x)), ctx.unknown("g2", (t, x))
    g3 = ctx.unknown("g3", (t, x)) if with_g3 else 0
    return _field(ctx, t=1, x=g1, u=g2 * u + g3)


def template_two(ctx: JetContext) -> VectorField:
    t, x = ctx.independent
    (u,) = ctx.dependent
    return _field(ctx, x=1, u=ctx.unknown("theta", (t, x, u)))


def printed_system_one():
    """The determining system for the first template as printed, ``expr = 0``."""
    t, x = sp.symbols("t x")
    g1, g2, g3 = (sp.Function(n)(t, x) for n in ("g1", "g2", "g3"))
    eqs = [g1.diff(t) - g1.diff(x, 2) + 2 * g1.diff(x) * g1 + 2 * g2.diff(x)]
    eqs += [g.diff(t) - g.diff(x, 2) + 2 * g1.diff(x) * g for g in (g2, g3)]
    return eqs


def printed_theta_equation():
    """The second-template equation as printed."""
    t, x, u = sp.symbols("t x u")
    th = sp.Function("theta")(t, x, u)
    return th.diff(t) + th.diff(x, 2) + 2 * th * th.diff(x, u) - th**2 * th.diff(u, 2)


def theta_compatibility_condition():
    """Cross-differentiation condition of ``u_x = theta``, ``u_t = u_xx``, from plain sympy."""
    t, x, u = sp.symbols("t x u")
    th = sp.Function("theta")(t, x, u)

    def Dx(F):
        return F.diff(x) + th * F.diff(u)

    ut = Dx(th)  # u_t = u_xx = D_x(u_x)

    def Dt(F):
        return F.diff(t) + ut * F.diff(u)

    return sp.expand(Dt(th) - Dx(ut))


@lru_cache(maxsize=None)
def derived_systems():
    """Engine-derived determining systems for both templates, as PDE systems."""
    E = heat_system()
    ctx = E.ctx
    det1 = qcond_determining_system(E, template_one(ctx))
    det2 = qcond_determining_system(E, template_two(ctx))
    S1 = determining_to_system(det1, ["t", "x"], ["g1", "g2", "g3"], name="branch1")
    S2 = determining_to_system(det2, ["t", "x", "u"], ["theta"], name="branch2")
    for S in (S1, S2):
        t, x = S.ctx.independent[:2]
        S.ctx.unknown("f", (t, x))
    return det1, det2, S1, S2


def _f_constraint(t, x):
    f = sp.Function("f")(t, x)
    return [FunctionConstraint("f", (t,), sp.diff(f, x, 2))]


def _proportional(a, b):
    """Nonzero constant ``c`` with ``a = c*b``, else ``None``."""
    if is_zero(b):
        return None
    r = normalize(sp.sympify(a) / b)
    return r if r.is_number and r != 0 else None


def _same_field(P: VectorField, Q: VectorField) -> bool:
    return all(is_zero(a - b) for a, b in zip(P.coefficients, Q.coefficients))


# -- heat algebra -------------------------------------------------------------------------


def heat_lie_algebra_check() -> CaseReport:
    rep = CaseReport("heat.algebra", "Lie symmetries of u_t = u_xx and their commutator closure")
    E = heat_system()
    ctx = E.ctx
    ops = heat_generators(ctx)
    for name, Q in ops.items():
        (res,) = lie_residual(E, Q)
        rep.check(f"{name} is a Lie symmetry", is_zero(res), res)
    F, constraint = heat_ideal(ctx)
    (res,) = lie_residual(E, F, constraint)
    rep.check("f d/du is a Lie symmetry when f_t = f_xx", is_zero(res), res)
    (L,) = E.expressions()
    for name in ("G", "D"):
        raw = apply_prolonged(prolong(ops[name], 2), L)
        rep.forms[f"pr {name} L (unrestricted)"] = raw
        ratio = normalize(raw / L)
        rep.forms[f"pr {name} L / L"] = ratio
        rep.check(f"pr {name} L is a multiple of L", not ctx.jets_in(ratio, min_order=1))
    closure = check_algebra_closure(list(ops.values()), E, ideal=F, constraints=constraint)
    rep.check("commutators close over the constants", closure.closed)
    return rep


# -- determining systems ----------------------------------------------------------------


def theorem1_determining_systems() -> CaseReport:
    rep = CaseReport("thm1.systems", "Q-conditional determining systems of the heat equation")
    det1, det2, _, _ = derived_systems()
    rep.check("first template gives 3 equations", len(det1) == 3)
    for k, e in enumerate(det1.equations):
        rep.forms[f"branch1[{k}]"] = e
    for k, p in enumerate(printed_system_one()):
        factors = [_proportional(d, p) for d in det1.equations]
        found = [c for c in factors if c is not None]
        ok = rep.check(f"printed equation {k + 1} matches a derived one up to a constant", bool(found))
        if ok and found[0] != 1:
            rep.notes.append(f"printed equation {k + 1} equals the derived one times {found[0]}")

    E = heat_system()
    sub = qcond_determining_system(E, template_one(E.ctx, with_g3=False))
    rep.check("g3 = 0 leaves a 2-equation subsystem", len(sub) == 2)
    rep.check(
        "g3 = 0 subsystem is contained in the full system",
        all(any(_proportional(s, d) is not None for d in det1.equations) for s in sub.equations),
    )

    rep.check("second template gives 1 equation", len(det2) == 1)
    (theta_eq,) = det2.equations
    rep.forms["branch2"] = theta_eq
    oracle = theta_compatibility_condition()
    rep.check("theta equation equals the compatibility condition", _proportional(theta_eq, oracle) is not None)
    printed = printed_theta_equation()
    c = _proportional(theta_eq, printed)
    if c is None:
        # align the theta_t coefficients before reporting the difference
        t = sp.Symbol("t")
        th = sp.Function("theta")(t, sp.Symbol("x"), sp.Symbol("u"))
        lead = sp.expand(theta_eq).coeff(th.diff(t))
        diff = normalize(theta_eq / lead - printed)
        rep.forms["branch2 minus printed"] = diff
        rep.flag(
            "printed theta equation differs from the derived one; the derived form is the "
            "compatibility condition and keeps the printed one as a reported difference"
        )
    return rep


def _resolve(rep, system, label, readings, constraints=()):
    """First reading (name, operator) with zero Lie residual on ``system``."""
    chosen = None
    for k, (name, Q) in enumerate(readings):
        res = lie_residual(system, Q, constraints)
        ok = all(is_zero(r) for r in res)
        if k == 0:
            rep.forms[f"{label} printed residual"] = res[0] if len(res) == 1 else sp.Matrix(res)
        if ok and chosen is None:
            chosen = (name, Q)
    if chosen is None:
        rep.check(f"{label}: some reading is a Lie symmetry", False)
        return None
    rep.check(f"{label} ({chosen[0]}) is a Lie symmetry", True)
    if chosen[0] != readings[0][0]:
        rep.flag(f"{label}: printed form is not a symmetry; the {chosen[0]} reading is")
    return chosen[1]


def _lift_note(rep, label, Q, lift, others):
    if _same_field(Q, lift):
        rep.notes.append(f"{label} is the lift of the heat generator")
        return
    diff = Q - lift
    coeffs = _constant_combination(diff, others, set())
    if coeffs is not None:
        rep.notes.append(f"{label} is the lift of the heat generator plus a combination of the others")
    else:
        rep.notes.append(f"{label} differs from the lift of the heat generator")


def theorem2_symmetry_check() -> CaseReport:
    rep = CaseReport("thm2.algebra", "Lie symmetries of the first determining system")
    _, _, S, _ = derived_systems()
    ctx = S.ctx
    t, x = ctx.independent
    g1, g2, g3 = ctx.dependent
    f = sp.Function("f")(t, x)
    con = _f_constraint(t, x)
    V = lambda **k: _field(ctx, **k)  # noqa: E731
    Eh = heat_system()
    T1 = template_one(Eh.ctx)
    base = heat_generators(Eh.ctx)
    lifts = {k: induced_operator(q, T1, ctx) for k, q in base.items()}
    printed = {
        "dt": [("printed", V(t=1))],
        "dx": [("printed", V(x=1))],
        "G1": [("printed", V(x=t, g1=1, g2=-HALF * g1, g3=-HALF * x * g3))],
        "I1": [("printed", V(g3=g3))],
        "D1": [("printed", V(t=2 * t, x=x, g1=-g1, g2=-2 * g2))],
        "Pi1": [
            ("printed", V(t=4 * t**2, x=4 * t * x, g1=-4 * (x - t * g1), g2=-(8 * t * g2 - 2 * x * g1 - 2), g3=-(10 * t + x**2) * g3)),
            ("lifted", lifts["Pi"]),
        ],
    }
    resolved = {}
    for label, readings in printed.items():
        Q = _resolve(rep, S, label, readings)
        if Q is not None:
            resolved[label] = Q
    F = V(g3=f.diff(t) + f.diff(x) * g1 - f * g2)
    (res,) = [normalize(sum(lie_residual(S, F, con), sp.S.Zero))]
    rep.check("(f_t + f_x g1 - f g2) d/dg3 is a Lie symmetry", is_zero(res), res)
    names = {"dt": "dt", "dx": "dx", "G1": "G", "I1": None, "D1": "D", "Pi1": "Pi"}
    for label, Q in resolved.items():
        if names[label]:
            others = [q for k, q in resolved.items() if k != label]
            _lift_note(rep, label, Q, lifts[names[label]], others)
    rep.forms["Pi1 lifted"] = sp.Matrix(list(lifts["Pi"].coefficients))
    return rep


def theorem3_symmetry_check() -> CaseReport:
    rep = CaseReport("thm3.algebra", "Lie symmetries of the theta equation")
    _, _, _, S = derived_systems()
    ctx = S.ctx
    t, x, u = ctx.independent
    (th,) = ctx.dependent
    f = sp.Function("f")(t, x)
    con = _f_constraint(t, x)
    V = lambda **k: _field(ctx, **k)  # noqa: E731
    Eh = heat_system()
    T2 = template_two(Eh.ctx)
    base = heat_generators(Eh.ctx)
    lifts = {k: induced_operator(q, T2, ctx) for k, q in base.items()}
    printed = {
        "dt": [("printed", V(t=1))],
        "dx": [("printed", V(x=1))],
        "G2": [
            ("minus-sign", V(x=t, u=-HALF * x * u, theta=-HALF * (x * th + u))),
            ("plus-sign", V(x=t, u=HALF * x * u, theta=-HALF * (x * th + u))),
        ],
        "I2": [("printed", V(u=u, theta=th))],
        "D2": [("printed", V(t=2 * t, x=x, u=u))],
        "Pi2": [
            ("printed", V(t=4 * t**2, x=4 * t * x, u=-(x**2 + 2 * t) * u, theta=-(x * th + 6 * t * th - 2 * x * u))),
            ("lifted", lifts["Pi"]),
        ],
    }
    resolved = {}
    for label, readings in printed.items():
        Q = _resolve(rep, S, label, readings)
        if Q is not None:
            resolved[label] = Q
    rep.notes.append("G2 prints a doubled sign '+-'; read as minus")
    F = V(u=f, theta=f.diff(x))
    res = normalize(sum(lie_residual(S, F, con), sp.S.Zero))
    rep.check("f d/du + f_x d/dtheta is a Lie symmetry", is_zero(res), res)
    names = {"dt": "dt", "dx": "dx", "G2": "G", "I2": "I", "D2": "D", "Pi2": "Pi"}
    for label, Q in resolved.items():
        others = [q for k, q in resolved.items() if k != label]
        _lift_note(rep, label, Q, lifts[names[label]], others)
    rep.forms["Pi2 lifted"] = sp.Matrix(list(lifts["Pi"].coefficients))
    return rep


def theorems2_3_symmetry_checks() -> list[CaseReport]:
    return [theorem2_symmetry_check(), theorem3_symmetry_check()]


# -- linearizing maps ---------------------------------------------------------------------


def _require_heat(z, t, x, what):
    if not is_zero(sp.diff(z, t) - sp.diff(z, x, 2)):
        raise CaseError(f"{what} = {z} does not solve z_t = z_xx")


def nonlocal_map(z1, z2, z3):
    """``(g1, g2, g3)`` built from three heat solutions."""
    t, x = sp.symbols("t x")
    z1, z2, z3 = (sp.sympify(z) for z in (z1, z2, z3))
    for k, z in enumerate((z1, z2, z3), 1):
        _require_heat(z, t, x, f"z{k}")
    den = normalize(z1.diff(x) * z2 - z1 * z2.diff(x))
    if is_zero(den):
        raise CaseError("z1_x z2 - z1 z2_x vanishes identically")
    g1 = -normalize((z1.diff(x, 2) * z2 - z1 * z2.diff(x, 2)) / den)
    g2 = -normalize((z1.diff(x, 2) * z2.diff(x) - z1.diff(x) * z2.diff(x, 2)) / den)
    g3 = normalize(z3.diff(x, 2) + g1 * z3.diff(x) - g2 * z3)
    return g1, g2, g3


def branch_one_residuals(g1, g2, g3, simplify: bool = True) -> list:
    det1 = derived_systems()[0]
    out = []
    for e in det1.equations:
        for name, val in (("g1", g1), ("g2", g2), ("g3", g3)):
            e = replace_unknown(e, name, val, simplify=False)
        out.append(normalize(e) if simplify else e)
    return out


def theorem4_nonlocal_map(z1, z2, z3) -> CaseReport:
    rep = CaseReport("thm4.map", f"nonlocal map of ({z1}, {z2}, {z3})")
    g = nonlocal_map(z1, z2, z3)
    for k, gk in enumerate(g, 1):
        rep.forms[f"g{k}"] = gk
    res = branch_one_residuals(*g)
    for k, r in enumerate(res):
        rep.check(f"first determining system, equation {k + 1}", is_zero(r), r)
    return rep


def theta_residual(theta) -> sp.Expr:
    det2 = derived_systems()[1]
    (e,) = det2.equations
    return normalize(replace_unknown(e, "theta", theta, simplify=False))


def theorem5_hodograph_check(w) -> CaseReport:
    t, x, u = sp.symbols("t x u")
    w = sp.sympify(w)
    rep = CaseReport("thm5.hodograph", f"hodograph witness for w = {w}")
    _require_heat(w, t, x, "w")
    y0, y1, y2 = sp.symbols("y0 y1 y2")
    Psi = y2 + w.xreplace({t: y0, x: y1})
    rep.check("Psi solves the heat equation in (y0, y1)", is_zero(Psi.diff(y0) - Psi.diff(y1, 2)))
    # u = Psi(t, x, Phi) solved for Phi
    Phi = u - w
    if is_zero(Phi.diff(u)):
        raise CaseError("Phi_u vanishes identically")
    theta = normalize(-Phi.diff(t) / Phi.diff(u))
    rep.forms["theta"] = theta
    res = theta_residual(theta)
    rep.check("theta = -Phi_t/Phi_u solves the theta equation", is_zero(res), res)
    # along Phi = const one has u_x = -Phi_x/Phi_u; record that reading too
    alt = normalize(-Phi.diff(x) / Phi.diff(u))
    rep.forms["theta (x-reading)"] = alt
    rep.check("theta = -Phi_x/Phi_u solves the theta equation", is_zero(theta_residual(alt)))
    return rep


def affine_hodograph_probe(w1, w2) -> dict:
    """Both readings for ``Psi = y2*w1 + w2``; only the x-reading is expected to hold."""
    t, x, u = sp.symbols("t x u")
    Phi = (u - sp.sympify(w2)) / sp.sympify(w1)
    return {
        "t": is_zero(theta_residual(normalize(-Phi.diff(t) / Phi.diff(u)))),
        "x": is_zero(theta_residual(normalize(-Phi.diff(x) / Phi.diff(u)))),
    }


# -- transfer equation -------------------------------------------------------------------

TRANSFER_READINGS = ("R1", "R2", "R3", "R4")


def transfer_expression(ctx: JetContext, h, reading: str) -> sp.Expr:
    """Candidate readings of the transfer equation, ``expr = 0``.

    R1: u_t + h/x u_x + u_xx, R2: u_t + h/x + u_xx (as printed),
    R3: u_t + h/x u_x - u_xx, R4: u_t + h/x - u_xx.
    """
    x = ctx.independent[1]
    ut, ux, uxx = ctx.d("u", "t"), ctx.d("u", "x"), ctx.d("u", "x", "x")
    transport = h / x * (ux if reading in ("R1", "R3") else 1)
    diffusion = uxx if reading in ("R1", "R2") else -uxx
    return ut + transport + diffusion


def transfer_system(reading: str = "R3", h=None, params=()):
    """``(system, h)``; ``h=None`` means an unknown function ``h(t)``."""
    ctx = JetContext(["t", "x"], ["u"], params=params)
    t, _ = ctx.independent
    if h is None:
        h = ctx.unknown("h", (t,))
    E = PdeSystem.from_expression(ctx, transfer_expression(ctx, h, reading), ctx.d("u", "t"), name=reading)
    return E, h


def _solution_constraint(E: PdeSystem, name="f"):
    ctx = E.ctx
    t, x = ctx.independent
    f = sp.Function(name)(t, x)
    (lead, rhs) = E.equations[0]
    repl = {ctx.d("u", "x", "x"): f.diff(x, 2), ctx.d("u", "x"): f.diff(x), ctx.dependent[0]: f}
    return f, [FunctionConstraint(name, (t,), rhs.xreplace(repl))]


def transfer_operator_table(reading: str) -> dict:
    """Lie checks of the listed operators in the three h-cases for one reading."""
    out = {}
    E, h = transfer_system(reading)
    ctx = E.ctx
    (u,) = ctx.dependent
    ctx.unknown("f", ctx.independent)
    f, con = _solution_constraint(E)
    out["1: u du"] = is_lie_symmetry(E, _field(ctx, u=u))
    out["1: f du"] = is_lie_symmetry(E, _field(ctx, u=f), con)
    for label, hv in (("2", None), ("3 (h=0)", 0), ("3 (h=-2)", -2)):
        E, _ = transfer_system(reading, sp.Symbol("h") if hv is None else hv, params=["h"] if hv is None else ())
        ctx = E.ctx
        t, x = ctx.independent
        (u,) = ctx.dependent
        hh = sp.Symbol("h") if hv is None else hv
        ops = {
            "dt": _field(ctx, t=1),
            "D": _field(ctx, t=2 * t, x=x),
            "Pi": _field(ctx, t=4 * t**2, x=4 * t * x, u=-(x**2 + 2 * (1 - hh) * t) * u),
            "u du": _field(ctx, u=u),
        }
        if hv is not None:
            ops["dx + h/(2x) u du"] = _field(ctx, x=1, u=HALF * hh / x * u)
            ops["G"] = _field(ctx, x=t, u=-HALF * (x - hh * t / x) * u)
        for name, Q in ops.items():
            out[f"{label}: {name}"] = is_lie_symmetry(E, Q)
    return out


def theorem6_transfer_algebra() -> CaseReport:
    rep = CaseReport("thm6.transfer", "reading of the transfer equation fixed by its Lie operators")
    valid = []
    for reading in TRANSFER_READINGS:
        table = transfer_operator_table(reading)
        bad = sorted(k for k, ok in table.items() if not ok)
        rep.notes.append(f"{reading}: {'all operators pass' if not bad else 'fails ' + ', '.join(bad)}")
        if not bad:
            valid.append(reading)
    rep.check("exactly one reading validates every listed operator", len(valid) == 1)
    if valid:
        E, _ = transfer_system(valid[0])
        rep.forms["resolved equation"] = E.expressions()[0]
        if valid[0] != "R2":
            rep.flag(f"printed form (R2) is not invariant under the listed operators; {valid[0]} is")
        # h = 0 gives back the heat equation and its generators
        E0, _ = transfer_system(valid[0], 0)
        heat = heat_generators(E0.ctx)
        rep.check("h = 0 reproduces the heat generators", all(is_lie_symmetry(E0, q) for q in heat.values()))
    return rep


def _formal_solve_chain(equations, unknowns, t, constants):
    """Solve first-order linear ODEs by back-substitution with formal antiderivatives.

    ``unknowns`` are applied functions of ``t``, solved from the last to the
    first; each equation must contain exactly one new derivative.
    """
    sol = {}
    pending = [sp.expand(e) for e in equations]
    for T, C in zip(reversed(unknowns), reversed(constants)):
        dT = T.diff(t)
        eq = next((e for e in pending if e.has(dT)), None)
        if eq is None:
            raise CaseError(f"no equation determines {T}")
        pending.remove(eq)
        for S, val in sol.items():
            eq = replace_unknown(eq, S.func.__name__, val, simplify=False)
        a_coeff = sp.expand(eq).coeff(dT)
        rhs = normalize(-(eq - a_coeff * dT) / a_coeff)
        a = normalize(sp.diff(rhs, T))
        b = normalize(rhs - a * T)
        if b.has(T):
            raise CaseError(f"equation for {T} is not linear")
        if is_zero(a):
            value = C + (Int(b, t) if not is_zero(b) else 0)
        else:
            mu = sp.exp(Int(a, t))
            value = mu * (C + (Int(normalize(b / mu), t) if not is_zero(b) else 0))
        sol[T] = value
    return sol, pending


def polynomial_family(E: PdeSystem, n: int, kind: str = "T", A=None):
    """Substitute the polynomial (``T``) or Gaussian (``S``) family and collect in x.

    Returns ``(u, equations, functions)`` with one ODE per collected power.
    """
    if not 0 <= n <= 4:
        raise CaseError("family order must be between 0 and 4")
    ctx = E.ctx
    t, x = ctx.independent
    h = sp.Function("h")(t)
    funcs = [sp.Function(f"{kind}{k}")(t) for k in range(n + 1)]
    if kind == "T":
        u, weight = sum((funcs[k] * x ** (2 * k) for k in range(n + 1)), sp.S.Zero), sp.S.One
    else:
        s = 2 * t + A
        weight = sp.exp(-(x**2) / (2 * s) + Int((h - 1) / s, t))
        u = sum((funcs[k] * (x / s) ** (2 * k) for k in range(n + 1)), sp.S.Zero) * weight
    (L,) = E.expressions()
    res = normalize(evaluate_on(ctx, L, u) / weight)
    num, _ = sp.fraction(sp.together(res))
    poly = sp.Poly(sp.expand(num), x)
    eqs = [normalize(c) for c in poly.coeffs()]
    return u, [e for e in eqs if not is_zero(e)], funcs


def transfer_qcond_and_solutions(A=None, n: int = 2) -> CaseReport:
    A = sp.Symbol("A") if A is None else sp.sympify(A)
    rep = CaseReport("transfer.solutions", f"conditional symmetries and solutions of the transfer equation (n = {n})")
    if not 0 <= n <= 4:
        raise CaseError("n must be between 0 and 4")
    E, h = transfer_system("R3", params=[str(s) for s in A.free_symbols])
    ctx = E.ctx
    t, x = ctx.independent
    (u,) = ctx.dependent
    X = _field(ctx, t=1, x=(h - 1) / x)
    Gt = _field(ctx, x=2 * t + A, u=-x * u)
    for name, Q in (("X", X), ("G~", Gt)):
        (res,) = qcond_residual(E, Q)
        rep.check(f"{name} is a Q-conditional symmetry", is_zero(res), res)
    rep.check("X is not a Lie symmetry for generic h", not is_lie_symmetry(E, X))
    C1, C2 = sp.symbols("C1 C2")
    u1 = C2 * (x**2 - 2 * Int(h - 1, t)) + C1
    u2 = C1 * sp.exp(-(x**2) / (2 * (2 * t + A)) + Int((h - 1) / (2 * t + A), t))
    rep.check("quadratic solution", is_solution(E, u1))
    rep.check("Gaussian solution", is_solution(E, u2))

    for kind, top in (("T", n), ("S", min(n, 1))):
        uf, eqs, funcs = polynomial_family(E, top, kind, A)
        for k, e in enumerate(eqs):
            rep.forms[f"{kind}-family ODE {k}"] = e
        consts = [sp.Symbol(f"C{kind}{k}") for k in range(top + 1)]
        try:
            sol, rest = _formal_solve_chain(eqs, funcs, t, consts)
        except CaseError as exc:
            rep.check(f"{kind}-family ODEs integrate by back-substitution", False)
            rep.notes.append(str(exc))
            continue
        for T, val in sol.items():
            rep.forms[f"{kind}-family {T.func.__name__}"] = val
        value = uf
        for T, val in sol.items():
            value = replace_unknown(value, T.func.__name__, val, simplify=False)
        rep.check(f"{kind}-family of order {top} solves the equation", is_solution(E, value))
    return rep


# -- reduction examples -------------------------------------------------------------------


def counterexample_zero_one() -> CaseReport:
    rep = CaseReport("counter.zero_one", "Lie symmetry whose reduced equation is inconsistent")
    ctx = JetContext(["t", "x"], ["u"])
    t, x = ctx.independent
    E = PdeSystem.from_expression(ctx, t * ctx.d("u", "t") + x * ctx.d("u", "x") - 1, ctx.d("u", "t"))
    Q = _field(ctx, t=t, x=x)
    rep.check("t dt + x dx is a Lie symmetry", is_lie_symmetry(E, Q))
    A = Ansatz(ctx, {"w": x / t}, sp.Function("phi")(sp.Symbol("w")), ("x",))
    red = reduce(E, A, [Q])
    rep.forms["reduced"] = red.equation
    rep.forms["multiplier"] = red.multiplier
    rep.check("reduced equation reads 0 = 1", red.inconsistent)
    return rep


def counterexample_joint() -> CaseReport:
    rep = CaseReport("counter.joint", "compatible joint system without Lie invariance")
    ctx = JetContext(["t", "x"], ["u"], params=["C"])
    t, x = ctx.independent
    (u,) = ctx.dependent
    L = ctx.d("u", "t") + ctx.d("u", "x", "x") - u + t * (ctx.d("u", "x") - u)
    E = PdeSystem.from_expression(ctx, L, ctx.d("u", "t"))
    Q = _field(ctx, t=1)
    rep.check("u = C exp(x) solves the joint system", joint_system_check(E, [Q], ctx.params["C"] * sp.exp(x)))
    (res,) = lie_residual(E, Q)
    rep.check("dt is not a Lie symmetry", not is_zero(res), res)
    return rep


def counterexample_reduction() -> CaseReport:
    rep = CaseReport("counter.reduction", "reduction without Q-conditional invariance")
    ctx = JetContext(["t", "x"], ["u"])
    t, x = ctx.independent
    ux, uxx = ctx.d("u", "x"), ctx.d("u", "x", "x")
    E = PdeSystem.from_expression(ctx, ctx.d("u", "t") + (ux + t * uxx) * (uxx + 1), ctx.d("u", "t"))
    A = Ansatz(ctx, {"w": x}, sp.Function("phi")(sp.Symbol("w")), ("x",))
    red = reduce(E, A, waive=True)
    rep.forms["reduced"] = red.equation
    rep.forms["multiplier"] = red.multiplier
    phi_ww = A.reduced_ctx.d("phi", "w", "w")
    rep.check("reduced equation is phi'' + 1 = 0", is_zero(red.equation - (phi_ww + 1)))
    (res,) = qcond_residual(E, _field(ctx, t=1))
    rep.check("dt is not a Q-conditional symmetry", not is_zero(res), res)
    return rep


def heat_similarity_reduction() -> CaseReport:
    rep = CaseReport("reduction.heat", "scaling reduction of the heat equation")
    E = heat_system()
    ctx = E.ctx
    t, x = ctx.independent
    w = sp.Symbol("w")
    D = heat_generators(ctx)["D"]
    A = Ansatz(ctx, {"w": x / sp.sqrt(t)}, sp.Function("phi")(w), ("x",))
    rep.check("ansatz is invariant under D", verify_ansatz([D], A))
    red = reduce(E, A, [D])
    rep.forms["reduced"] = red.equation
    rep.forms["multiplier"] = red.multiplier
    R = A.reduced_ctx
    target = R.d("phi", "w", "w") + w / 2 * R.d("phi", "w")
    rep.check("reduced equation is phi'' + w phi'/2 up to a factor", _proportional(red.equation, target) is not None)
    for phi in (sp.S.One, sp.erf(w / 2)):
        ode = evaluate_on(R, red.equation, phi)
        back = A.form.xreplace({A.phi_call(): phi}).xreplace({w: x / sp.sqrt(t)})
        rep.check(f"phi = {phi} solves the reduced equation and lifts to a solution",
                  is_zero(ode) and is_solution(E, back))
    return rep


def transfer_gaussian_reduction() -> CaseReport:
    rep = CaseReport("reduction.transfer", "reduction of the transfer equation by G~")
    E, h = transfer_system("R3", params=["A"])
    ctx = E.ctx
    t, x = ctx.independent
    (u,) = ctx.dependent
    Asym = ctx.params["A"]
    Gt = _field(ctx, x=2 * t + Asym, u=-x * u)
    w = sp.Symbol("w")
    A = Ansatz(ctx, {"w": t}, sp.Function("phi")(w) * sp.exp(-(x**2) / (2 * (2 * t + Asym))), ("t",))
    rep.check("ansatz solves G~ u = 0", verify_ansatz([Gt], A))
    red = reduce(E, A, waive=True)
    rep.forms["reduced"] = red.equation
    phi = sp.exp(Int((sp.Function("h")(w) - 1) / (2 * w + Asym), w))
    rep.check("the Gaussian amplitude solves the reduced equation", is_zero(evaluate_on(A.reduced_ctx, red.equation, phi)))
    return rep


# -- seeded property routines ----------------------------------------------------------


def property_master_identity(seed: int, count: int = 100) -> CaseReport:
    rep = CaseReport("property.master_identity", f"evolutionary identity on {count} random pairs (seed {seed})")
    rng = random.Random(seed)
    for k in range(count):
        n = rng.choice((1, 2))
        ctx = JetContext(["t", "x"][:n] if n == 2 else ["x"], ["u"])
        L = random_jet_expression(rng, ctx, rng.randint(1, 3))
        Q = random_vector_field(rng, ctx)
        res = evolutionary_identity_residual(ctx, L, Q)
        if not rep.check(f"pair {k}", is_zero(res), res):
            rep.forms[f"pair {k} L"] = L
    return rep


def _random_heat_triple(rng, t, x):
    while True:
        # single terms for z1, z2 keep the quotients in the map small
        z = [random_heat_solution(rng, t, x, terms=n) for n in (1, 1, rng.randint(1, 2))]
        if not is_zero(z[0].diff(x) * z[1] - z[0] * z[1].diff(x)):
            return z


def property_theorem4(seed: int, count: int = 20) -> CaseReport:
    rep = CaseReport("property.thm4", f"nonlocal map on {count} random heat triples (seed {seed})")
    rng = random.Random(seed)
    t, x = sp.symbols("t x")
    for k in range(count):
        z = _random_heat_triple(rng, t, x)
        res = branch_one_residuals(*nonlocal_map(*z), simplify=False)
        rep.check(f"triple {k}", all(is_zero(r) for r in res))
    return rep


def property_theorem5(seed: int, count: int = 20) -> CaseReport:
    rep = CaseReport("property.thm5", f"theta = w_t on {count} random heat solutions (seed {seed})")
    rng = random.Random(seed)
    t, x = sp.symbols("t x")
    for k in range(count):
        w = random_heat_solution(rng, t, x, terms=rng.randint(1, 3))
        res = theta_residual(w.diff(t))
        rep.check(f"solution {k}", is_zero(res), res)
    return rep


def property_m_degeneracy(seed: int, count: int = 20) -> CaseReport:
    """Evolution equations ``u_t = F(t, x, u, u_x, u_xx)`` against random operators."""
    rep = CaseReport("property.m_degeneracy", f"M-restricted residual on {count} random pairs (seed {seed})")
    rng = random.Random(seed)
    ctx = JetContext(["t", "x"], ["u"])
    t, x = ctx.independent
    (u,) = ctx.dependent
    base = [t, x, u, ctx.d("u", "x"), ctx.d("u", "x", "x")]
    for k in range(count):
        F = random_polynomial(rng, base, terms=3, degree=2) + nonzero_rational(rng) * ctx.d("u", "x", "x")
        E = PdeSystem(ctx, [(ctx.d("u", "t"), F)])
        xi_t = random_polynomial(rng, [t, x], 1, 1) if rng.random() < 0.5 else 0
        Q = _field(ctx, t=xi_t, x=1, u=random_polynomial(rng, [t, x, u], 2, 1))
        res = m_residual(E, Q)
        if not rep.check(f"pair {k}", is_zero(res), res):
            rep.forms[f"pair {k} F"] = F
    return rep


def _random_lambda(rng, ctx):
    t, x = ctx.independent
    (u,) = ctx.dependent
    while True:
        lam = nonzero_rational(rng) + random_polynomial(rng, [t, x, u], terms=1, degree=1) ** 2
        if not is_zero(lam):
            return lam


def property_equivalence_scaling(seed: int, count: int = 10) -> CaseReport:
    rep = CaseReport("property.lemma", f"scaling by random lambda on {count} draws (seed {seed})")
    rng = random.Random(seed)
    cases = []
    E, h = transfer_system("R3", params=["A"])
    ctx = E.ctx
    t, x = ctx.independent
    (u,) = ctx.dependent
    cases.append(("X", E, _field(ctx, t=1, x=(h - 1) / x)))
    cases.append(("G~", E, _field(ctx, x=2 * t + ctx.params["A"], u=-x * u)))
    H = heat_system()
    ctxh = H.ctx
    th, xh = ctxh.independent
    (uh,) = ctxh.dependent
    # Bluman-Cole type operator built from a solution of the first determining system
    g1, g2, g3 = nonlocal_map(1, xh, sp.exp(th + xh))
    cases.append(("heat qcond", H, _field(ctxh, t=1, x=g1, u=g2 * uh + g3)))
    for k in range(count):
        name, S, Q = cases[k % len(cases)]
        lam = _random_lambda(rng, Q.ctx)
        (scaled,) = apply_equivalence([Q], [[lam]]).operators
        res = normalize(sum(qcond_residual(S, scaled), sp.S.Zero))
        rep.check(f"{name} scaled by {to_infix(lam)}", is_zero(res), res)
    return rep


PROPERTIES: dict[str, Callable] = {
    "master_identity": property_master_identity,
    "thm4": property_theorem4,
    "thm5": property_theorem5,
    "m_degeneracy": property_m_degeneracy,
    "lemma": property_equivalence_scaling,
}


# -- registry -----------------------------------------------------------------------------


@dataclass(frozen=True)
class CaseRecord:
    id: str
    run: Callable[[], CaseReport]
    expect: str  # "pass" or "mismatch"
    note: str = ""


CASES: dict[str, CaseRecord] = {
    r.id: r
    for r in (
        CaseRecord("heat.algebra", heat_lie_algebra_check, "pass"),
        CaseRecord("thm1.systems", theorem1_determining_systems, "mismatch", "printed theta equation has other signs"),
        CaseRecord("thm2.algebra", theorem2_symmetry_check, "mismatch", "printed Pi1 is not a symmetry"),
        CaseRecord("thm3.algebra", theorem3_symmetry_check, "mismatch", "printed Pi2 is not a symmetry"),
        CaseRecord("thm4.fixed1", lambda: theorem4_nonlocal_map(1, "x", "t + x**2/2"), "pass"),
        CaseRecord("thm4.fixed2", lambda: theorem4_nonlocal_map(1, "x", "exp(t + x)"), "pass"),
        CaseRecord("thm5.quadratic", lambda: theorem5_hodograph_check("t + x**2/2"), "pass"),
        CaseRecord("thm5.exponential", lambda: theorem5_hodograph_check("exp(t + x)"), "pass"),
        CaseRecord("thm6.transfer", theorem6_transfer_algebra, "mismatch", "printed equation lacks u_x and has the wrong diffusion sign"),
        CaseRecord("transfer.solutions", transfer_qcond_and_solutions, "pass"),
        CaseRecord("reduction.heat", heat_similarity_reduction, "pass"),
        CaseRecord("reduction.transfer", transfer_gaussian_reduction, "pass"),
        CaseRecord("counter.zero_one", counterexample_zero_one, "pass"),
        CaseRecord("counter.joint", counterexample_joint, "pass"),
        CaseRecord("counter.reduction", counterexample_reduction, "pass"),
    )
}


def run_case(case_id: str) -> CaseReport:
    try:
        record = CASES[case_id]
    except KeyError:
        raise CaseError(f"no case named {case_id!r}") from None
    rep = record.run()
    rep.id = case_id
    return rep


def run_casebook(ids=None) -> list[CaseReport]:
    return [run_case(i) for i in (ids or CASES)]


def expected_outcome(case_id: str) -> str:
    return CASES[case_id].expect
