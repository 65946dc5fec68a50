import pytest
import sympy as sp

from qsym import casebook
from qsym.expr import JetContext, is_zero
from qsym.invariance import PdeSystem, is_lie_symmetry, is_qcond_symmetry
from qsym.operators import RankError, VectorField
from qsym.reduction import (
    Ansatz,
    ReductionError,
    evaluate_on,
    is_solution,
    joint_system_check,
    reduce,
    verify_ansatz,
)

t, x, u, w = sp.symbols("t x u w")
phi = sp.Function("phi")


def field(ctx, **k):
    return VectorField.from_dict(ctx, k)


@pytest.fixture
def ctx():
    return JetContext(["t", "x"], ["u"], params=["A", "C"])


def test_verify_ansatz_examples(ctx):
    S = field(ctx, t=t, x=x)
    assert verify_ansatz([S], Ansatz(ctx, {"w": x / t}, phi(w), ("x",)))
    assert verify_ansatz([field(ctx, t=1)], Ansatz(ctx, {"w": x}, phi(w), ("x",)))
    A = ctx.params["A"]
    Gt = field(ctx, x=2 * t + A, u=-x * u)
    gauss = Ansatz(ctx, {"w": t}, phi(w) * sp.exp(-(x**2) / (2 * (2 * t + A))), ("t",))
    assert verify_ansatz([Gt], gauss)
    assert not verify_ansatz([field(ctx, x=1)], Ansatz(ctx, {"w": x}, phi(w), ("x",)))


def test_rank_deficiency_is_reported(ctx):
    with pytest.raises(RankError):
        verify_ansatz([field(ctx, t=1), field(ctx, t=t)], Ansatz(ctx, {"w": x}, phi(w), ("x",)))


def test_inconsistent_reduction(ctx):
    E = PdeSystem.from_expression(ctx, t * ctx.d("u", "t") + x * ctx.d("u", "x") - 1, ctx.d("u", "t"))
    S = field(ctx, t=t, x=x)
    assert is_lie_symmetry(E, S)
    red = reduce(E, Ansatz(ctx, {"w": x / t}, phi(w), ("x",)), [S])
    assert red.inconsistent
    assert red.equation == -1


def test_reduction_without_conditional_invariance(ctx):
    d = ctx.d
    E = PdeSystem.from_expression(ctx, d("u", "t") + (d("u", "x") + t * d("u", "x", "x")) * (d("u", "x", "x") + 1), d("u", "t"))
    A = Ansatz(ctx, {"w": x}, phi(w), ("x",))
    red = reduce(E, A, waive=True)
    assert is_zero(red.as_function() - (phi(w).diff(w, 2) + 1))
    assert not is_zero(red.multiplier.diff(t))
    assert not is_qcond_symmetry(E, field(ctx, t=1))


def test_reduce_requires_check_or_waiver(ctx):
    E = casebook.heat_system()
    A = Ansatz(E.ctx, {"w": x}, phi(w), ("x",))
    with pytest.raises(ValueError):
        reduce(E, A)
    with pytest.raises(ReductionError):
        reduce(E, A, [field(E.ctx, x=1)])


def test_heat_similarity_reduction_and_lift():
    E = casebook.heat_system()
    D = casebook.heat_generators(E.ctx)["D"]
    A = Ansatz(E.ctx, {"w": x / sp.sqrt(t)}, phi(w), ("x",))
    red = reduce(E, A, [D])
    target = phi(w).diff(w, 2) + w / 2 * phi(w).diff(w)
    ratio = sp.simplify(red.as_function() / target)
    assert ratio.free_symbols == set() and ratio != 0
    # every solution of the reduced equation lifts to a heat solution
    for sol in (sp.S.One, sp.erf(w / 2)):
        assert is_zero(evaluate_on(A.reduced_ctx, red.equation, sol))
        assert is_solution(E, sol.subs(w, x / sp.sqrt(t)))


def test_remainder_is_returned_when_rewriting_fails():
    ctx = JetContext(["t", "x"], ["u"])
    E = PdeSystem.from_expression(ctx, ctx.d("u", "t") - x * ctx.d("u", "x", "x"), ctx.d("u", "t"))
    with pytest.raises(ReductionError) as err:
        reduce(E, Ansatz(ctx, {"w": t}, phi(w) + x**3, ("t",)), waive=True)
    assert err.value.remainder is not None


@pytest.mark.parametrize(
    "ops, candidate, expected",
    [
        ({"t": 1}, sp.Symbol("C") * sp.exp(x), True),
    ],
)
def test_joint_system_of_the_drift_example(ctx, ops, candidate, expected):
    d = ctx.d
    E = PdeSystem.from_expression(ctx, d("u", "t") + d("u", "x", "x") - u + t * (d("u", "x") - u), d("u", "t"))
    Q = field(ctx, **ops)
    assert joint_system_check(E, [Q], candidate) is expected
    assert not is_lie_symmetry(E, Q)


@pytest.mark.parametrize(
    "ops, candidate, expected",
    [
        ({"t": 1}, x**2 + 2 * t, False),
        ({"x": 1}, sp.exp(t), False),
        ({"x": 1}, sp.Integer(1), True),
    ],
)
def test_joint_system_on_heat(ops, candidate, expected):
    E = casebook.heat_system()
    assert joint_system_check(E, [field(E.ctx, **ops)], candidate) is expected
