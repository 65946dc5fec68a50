"""First-order operators on (x, u)-space and their prolongations."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import sympy as sp

from .expr import (
    ContextError,
    JetContext,
    MultiIndex,
    QsymError,
    is_zero,
    normalize,
    total_derivative,
)

__all__ = [
    "VectorField",
    "ProlongedField",
    "InvolutiveSet",
    "characteristic",
    "prolong",
    "apply_prolonged",
    "evolutionary_identity_residual",
    "lie_bracket",
    "verify_involutive",
    "find_structure_functions",
    "apply_equivalence",
    "symbolic_rank",
    "RankError",
]


class RankError(QsymError):
    pass


@dataclass(frozen=True)
class VectorField:
    """``Q = sum xi^i d/dx_i + sum eta^j d/du^j`` with coefficients in (x, u)."""

    ctx: JetContext = field(compare=False, repr=False)
    xi: tuple
    eta: tuple

    def __post_init__(self):
        xi = tuple(normalize(c) for c in self.xi)
        eta = tuple(normalize(c) for c in self.eta)
        if len(xi) != self.ctx.n or len(eta) != self.ctx.m:
            raise ContextError(
                f"operator needs {self.ctx.n} xi and {self.ctx.m} eta coefficients"
            )
        for c in xi + eta:
            if self.ctx.jets_in(c, min_order=1):
                raise ContextError(f"operator coefficient {c} depends on derivatives")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "eta", eta)

    @classmethod
    def from_dict(cls, ctx: JetContext, coeffs: Mapping) -> "VectorField":
        """Build from ``{'t': ..., 'u': ...}``; missing entries are zero."""
        xi = [0] * ctx.n
        eta = [0] * ctx.m
        for name, c in coeffs.items():
            s = sp.Symbol(name) if isinstance(name, str) else name
            if s in ctx.independent:
                xi[ctx.independent.index(s)] = c
            elif s in ctx.dependent:
                eta[ctx.dependent.index(s)] = c
            else:
                raise ContextError(f"no basis vector d/d{name} in {ctx!r}")
        return cls(ctx, tuple(xi), tuple(eta))

    @property
    def coefficients(self) -> tuple:
        return self.xi + self.eta

    def apply(self, f) -> sp.Expr:
        """Act as a derivation on a function of (x, u)."""
        f = sp.sympify(f)
        out = sum(
            (c * sp.diff(f, s) for c, s in zip(self.coefficients, self.ctx.independent + self.ctx.dependent)),
            sp.S.Zero,
        )
        return normalize(out)

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coefficients)

    def scale(self, factor) -> "VectorField":
        return VectorField(self.ctx, tuple(factor * c for c in self.xi), tuple(factor * c for c in self.eta))

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField(
            self.ctx,
            tuple(a + b for a, b in zip(self.xi, other.xi)),
            tuple(a + b for a, b in zip(self.eta, other.eta)),
        )

    def __sub__(self, other: "VectorField") -> "VectorField":
        return self + other.scale(-1)

    def __neg__(self) -> "VectorField":
        return self.scale(-1)

    def __rmul__(self, factor) -> "VectorField":
        return self.scale(factor)

    def __str__(self):
        parts = []
        for c, s in zip(self.coefficients, self.ctx.independent + self.ctx.dependent):
            if c != 0:
                parts.append(f"({c})*d{s}")
        return " + ".join(parts) or "0"


@dataclass(frozen=True)
class ProlongedField:
    base: VectorField
    order: int
    coeffs: dict  # (j, alpha) -> eta_alpha

    def apply(self, e) -> sp.Expr:
        return apply_prolonged(self, e)


@dataclass(frozen=True)
class InvolutiveSet:
    operators: tuple
    structure: dict | None = None  # (k, l) -> [f^{kl1}, ..., f^{kls}]

    def __post_init__(self):
        object.__setattr__(self, "operators", tuple(self.operators))
        if not self.operators:
            raise ValueError("empty operator set")

    @property
    def ctx(self) -> JetContext:
        return self.operators[0].ctx

    def __len__(self):
        return len(self.operators)

    def __iter__(self):
        return iter(self.operators)


def characteristic(Q: VectorField, j: int = 0) -> sp.Expr:
    """``Q u^j = eta^j - sum_i xi^i u^j_i``."""
    ctx = Q.ctx
    out = Q.eta[j]
    for i, c in enumerate(Q.xi):
        out -= c * ctx.jet(j, MultiIndex.unit(ctx.n, i))
    return normalize(out)


def prolong(Q: VectorField, order: int) -> ProlongedField:
    """Coefficients ``eta_alpha = D_alpha(Qu) + sum_i xi^i u_{alpha+e_i}``, 1 <= |alpha| <= order."""
    if order < 1:
        raise ValueError("prolongation order must be at least 1")
    ctx = Q.ctx
    coeffs = {}
    for j in range(ctx.m):
        # D_alpha(Qu^j), built up one total derivative at a time
        derivs = {MultiIndex.zero(ctx.n): characteristic(Q, j)}
        frontier = [MultiIndex.zero(ctx.n)]
        for _ in range(order):
            nxt = []
            for alpha in frontier:
                for i in range(ctx.n):
                    beta = alpha + MultiIndex.unit(ctx.n, i)
                    if beta in derivs:
                        continue
                    derivs[beta] = total_derivative(ctx, derivs[alpha], i)
                    nxt.append(beta)
            frontier = nxt
        for alpha, d in derivs.items():
            if alpha.order == 0:
                continue
            total = d
            for i, c in enumerate(Q.xi):
                if c != 0:
                    total += c * ctx.jet(j, alpha + MultiIndex.unit(ctx.n, i))
            coeffs[(j, alpha)] = normalize(total)
    return ProlongedField(Q, order, coeffs)


def apply_prolonged(P: ProlongedField, e) -> sp.Expr:
    ctx = P.base.ctx
    e = sp.sympify(e)
    if ctx.order(e) > P.order:
        raise ValueError(f"expression of order {ctx.order(e)} needs prolongation of that order, got {P.order}")
    out = _apply_base(P.base, e)
    for s in ctx.jets_in(e, min_order=1):
        j, alpha = ctx.jet_info(s)
        out += P.coeffs[(j, alpha)] * sp.diff(e, s)
    return normalize(out)


def _apply_base(Q, e):
    out = sp.S.Zero
    for c, s in zip(Q.coefficients, Q.ctx.independent + Q.ctx.dependent):
        if c != 0:
            out += c * sp.diff(e, s)
    return out


def evolutionary_identity_residual(ctx: JetContext, L, Q: VectorField) -> sp.Expr:
    """``pr Q L - sum_alpha (dL/du_alpha) D_alpha(Qu) - sum_i xi^i D_i L``; always 0."""
    L = sp.sympify(L)
    r = max(ctx.order(L), 1)
    lhs = apply_prolonged(prolong(Q, r), L)
    rhs = sp.S.Zero
    cache: dict[tuple[int, MultiIndex], sp.Expr] = {}
    for s in sorted(ctx.jets_in(L), key=sp.default_sort_key):
        j, alpha = ctx.jet_info(s)
        key = (j, alpha)
        if key not in cache:
            d = characteristic(Q, j)
            for i in alpha.steps():
                d = total_derivative(ctx, d, i, simplify=False)
            cache[key] = d
        rhs += sp.diff(L, s) * cache[key]
    for i, c in enumerate(Q.xi):
        if c != 0:
            rhs += c * total_derivative(ctx, L, i, simplify=False)
    return normalize(lhs - rhs)


def lie_bracket(Q1: VectorField, Q2: VectorField) -> VectorField:
    """Commutator ``Q1 Q2 - Q2 Q1`` as a first-order operator."""
    coeffs = [Q1.apply(b) - Q2.apply(a) for a, b in zip(Q1.coefficients, Q2.coefficients)]
    n = Q1.ctx.n
    return VectorField(Q1.ctx, tuple(coeffs[:n]), tuple(coeffs[n:]))


def _combination(ops: Sequence[VectorField], weights: Sequence) -> VectorField:
    ctx = ops[0].ctx
    total = VectorField(ctx, (0,) * ctx.n, (0,) * ctx.m)
    for w, q in zip(weights, ops):
        total = total + q.scale(w)
    return total


def verify_involutive(ops, structure: Mapping | None = None) -> bool:
    """Check ``[Q^k, Q^l] = sum_p f^{klp} Q^p`` for the given structure functions.

    Missing pairs in ``structure`` are treated as all-zero functions.  With
    ``structure=None`` the functions are searched for instead.
    """
    ops = tuple(ops.operators if isinstance(ops, InvolutiveSet) else ops)
    if structure is None:
        return find_structure_functions(ops) is not None
    for k, l in itertools.combinations(range(len(ops)), 2):
        f = structure.get((k, l))
        if f is None and (l, k) in structure:
            f = [-c for c in structure[(l, k)]]
        if f is None:
            f = [0] * len(ops)
        residual = lie_bracket(ops[k], ops[l]) - _combination(ops, f)
        if not all(is_zero(c) for c in residual.coefficients):
            return False
    return True


def find_structure_functions(ops) -> dict | None:
    """Solve for ``f^{klp}(x, u)`` by linear elimination; ``None`` if there are none."""
    ops = tuple(ops.operators if isinstance(ops, InvolutiveSet) else ops)
    basis = sp.Matrix([list(q.coefficients) for q in ops]).T
    out = {}
    for k, l in itertools.combinations(range(len(ops)), 2):
        b = sp.Matrix(list(lie_bracket(ops[k], ops[l]).coefficients))
        sol = _solve_linear(basis, b)
        if sol is None:
            return None
        out[(k, l)] = sol
    return out


def _solve_linear(A: sp.Matrix, b: sp.Matrix):
    aug = A.row_join(b)
    rref, pivots = aug.rref(iszerofunc=is_zero, simplify=normalize)
    if A.cols in pivots:
        return None
    sol = [sp.S.Zero] * A.cols
    for row, p in enumerate(pivots):
        sol[p] = normalize(rref[row, A.cols])
    # verify exactly, rref's zero test is the only thing trusted above
    for i in range(A.rows):
        if not is_zero(sum((A[i, c] * sol[c] for c in range(A.cols)), sp.S.Zero) - b[i]):
            return None
    return sol


def symbolic_rank(M: sp.Matrix) -> int:
    """Largest k with a k x k minor that is not identically zero."""
    for k in range(min(M.shape), 0, -1):
        for rows in itertools.combinations(range(M.rows), k):
            for cols in itertools.combinations(range(M.cols), k):
                if not is_zero(M.extract(list(rows), list(cols)).det(method="berkowitz")):
                    return k
    return 0


def apply_equivalence(S, lam) -> InvolutiveSet:
    """``{sum_l lam[k][l] Q^l}`` for an invertible matrix ``lam`` over (x, u)."""
    ops = tuple(S.operators if isinstance(S, InvolutiveSet) else S)
    lam = sp.Matrix(lam)
    if lam.shape != (len(ops), len(ops)):
        raise ValueError(f"equivalence matrix must be {len(ops)}x{len(ops)}")
    ctx = ops[0].ctx
    for c in lam:
        if ctx.jets_in(c, min_order=1):
            raise ContextError("equivalence coefficients may depend on (x, u) only")
    if is_zero(lam.det(method="berkowitz")):
        raise ValueError("equivalence matrix is degenerate")
    new = tuple(_combination(ops, list(lam.row(k))) for k in range(len(ops)))
    return InvolutiveSet(new)
