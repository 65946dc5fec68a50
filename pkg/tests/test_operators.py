import random

import pytest
import sympy as sp

from conftest import on_function, oracle_prolongation
from qsym.expr import ContextError, JetContext, MultiIndex, is_zero
from qsym.operators import (
    InvolutiveSet,
    RankError,
    VectorField,
    apply_equivalence,
    apply_prolonged,
    characteristic,
    evolutionary_identity_residual,
    find_structure_functions,
    lie_bracket,
    prolong,
    verify_involutive,
)
from qsym.samples import random_jet_expression, random_vector_field

t, x, u = sp.symbols("t x u")
HALF = sp.Rational(1, 2)


def field(ctx, **k):
    return VectorField.from_dict(ctx, k)


@pytest.fixture
def ops(heat_ctx):
    return {
        "dt": field(heat_ctx, t=1),
        "dx": field(heat_ctx, x=1),
        "G": field(heat_ctx, x=t, u=-HALF * x * u),
        "I": field(heat_ctx, u=u),
        "D": field(heat_ctx, t=2 * t, x=x),
        "Pi": field(heat_ctx, t=4 * t**2, x=4 * t * x, u=-(x**2 + 2 * t) * u),
    }


def test_coefficients_may_not_depend_on_derivatives(heat_ctx):
    with pytest.raises(ContextError):
        field(heat_ctx, x=heat_ctx.d("u", "x"))


def test_characteristic_examples(heat_ctx, ops):
    d = heat_ctx.d
    theta = heat_ctx.unknown("theta", ("t", "x", "u"))
    assert characteristic(ops["dt"]) == -d("u", "t")
    assert is_zero(characteristic(ops["G"]) - (-HALF * x * u - t * d("u", "x")))
    assert is_zero(characteristic(field(heat_ctx, x=1, u=theta)) - (theta - d("u", "x")))


def test_prolongation_examples(heat_ctx, ops):
    d = heat_ctx.d
    assert all(c == 0 for c in prolong(ops["dt"], 2).coeffs.values())
    P = prolong(ops["G"], 2)
    assert is_zero(P.coeffs[(0, MultiIndex((1, 0)))] - (-HALF * x * d("u", "t") - d("u", "x")))
    assert is_zero(P.coeffs[(0, MultiIndex((0, 2)))] - (-d("u", "x") - HALF * x * d("u", "x", "x")))
    S = prolong(field(heat_ctx, t=t, x=x), 1)
    assert S.coeffs[(0, MultiIndex((1, 0)))] == -d("u", "t")
    assert S.coeffs[(0, MultiIndex((0, 1)))] == -d("u", "x")


@pytest.mark.parametrize("seed", range(5))
def test_prolongation_matches_recursive_oracle(heat_ctx, seed):
    rng = random.Random(seed)
    Q = random_vector_field(rng, heat_ctx)
    order = rng.randint(1, 3)
    U = sp.Function("U")(t, x)
    oracle = oracle_prolongation(heat_ctx, Q.xi, Q.eta[0], order, U)
    P = prolong(Q, order)
    for (j, alpha), coeff in P.coeffs.items():
        assert sp.expand(on_function(heat_ctx, coeff, U) - oracle[tuple(alpha)]) == 0


def test_apply_prolonged_examples(heat_ctx, ops):
    d = heat_ctx.d
    L = d("u", "t") - d("u", "x", "x")
    assert is_zero(apply_prolonged(prolong(ops["G"], 2), L) + HALF * x * L)
    S = field(heat_ctx, t=t, x=x)
    assert is_zero(apply_prolonged(prolong(S, 1), t * d("u", "t") + x * d("u", "x") - 1))
    L2 = d("u", "t") + d("u", "x", "x") - u + t * (d("u", "x") - u)
    assert is_zero(apply_prolonged(prolong(ops["dt"], 2), L2) - (d("u", "x") - u))
    with pytest.raises(ValueError):
        apply_prolonged(prolong(ops["G"], 1), L)


def test_prolongation_is_linear(heat_ctx, ops):
    a, b = sp.Rational(3, 2), -2
    Q = ops["G"].scale(a) + ops["Pi"].scale(b)
    P, P1, P2 = prolong(Q, 2), prolong(ops["G"], 2), prolong(ops["Pi"], 2)
    for key, c in P.coeffs.items():
        assert is_zero(c - a * P1.coeffs[key] - b * P2.coeffs[key])


def test_evolutionary_identity_examples(heat_ctx, ops):
    d = heat_ctx.d
    theta = heat_ctx.unknown("theta", ("t", "x", "u"))
    assert evolutionary_identity_residual(heat_ctx, d("u", "t") - d("u", "x", "x"), ops["G"]) == 0
    Q = field(heat_ctx, x=1, u=theta)
    assert evolutionary_identity_residual(heat_ctx, d("u", "x") * d("u", "t"), Q) == 0


@pytest.mark.parametrize("seed", range(10))
def test_evolutionary_identity_random(seed):
    rng = random.Random(seed)
    ctx = JetContext(["t", "x"], ["u"])
    L = random_jet_expression(rng, ctx, rng.randint(1, 3))
    Q = random_vector_field(rng, ctx)
    assert evolutionary_identity_residual(ctx, L, Q) == 0


def test_bracket_examples(heat_ctx, ops):
    assert lie_bracket(ops["dx"], ops["G"]) == field(heat_ctx, u=-HALF * u)
    assert lie_bracket(ops["dt"], ops["Pi"]) == field(heat_ctx, t=8 * t, x=4 * x, u=-2 * u)
    assert lie_bracket(ops["dt"], ops["Pi"]) == ops["D"].scale(4) - ops["I"].scale(2)
    assert lie_bracket(ops["G"], ops["G"]).is_zero()


@pytest.mark.parametrize("seed", range(4))
def test_bracket_antisymmetry_and_jacobi(heat_ctx, seed):
    rng = random.Random(seed)
    a, b, c = (random_vector_field(rng, heat_ctx, degree=1) for _ in range(3))
    br = lie_bracket
    assert (br(a, b) + br(b, a)).is_zero()
    jacobi = br(a, br(b, c)) + br(b, br(c, a)) + br(c, br(a, b))
    assert jacobi.is_zero()


def test_verify_involutive_examples(heat_ctx, ops):
    assert verify_involutive([ops["dt"], ops["dx"]], {})
    assert verify_involutive([ops["dt"], ops["D"]], {(0, 1): [2, 0]})
    assert not verify_involutive([ops["dx"], ops["G"]], {})
    assert find_structure_functions([ops["dt"], ops["D"]]) == {(0, 1): [2, 0]}


def test_apply_equivalence_examples(heat_ctx, ops):
    theta = heat_ctx.unknown("theta", ("t", "x", "u"))
    Q = field(heat_ctx, x=1, u=theta)
    (same,) = apply_equivalence([Q], [[1]]).operators
    assert same == Q
    (scaled,) = apply_equivalence([Q], [[u**2 + 1]]).operators
    assert scaled == field(heat_ctx, x=u**2 + 1, u=(u**2 + 1) * theta)
    mixed = apply_equivalence(InvolutiveSet((ops["dt"], ops["dx"])), [[1, t], [0, 1]]).operators
    assert mixed == (field(heat_ctx, t=1, x=t), ops["dx"])
    with pytest.raises(ValueError):
        apply_equivalence([ops["dt"], ops["dx"]], [[1, u], [1, u]])
    with pytest.raises(ContextError):
        apply_equivalence([Q], [[heat_ctx.d("u", "x")]])


def test_involutive_set_rank(heat_ctx, ops):
    from qsym.reduction import _check_rank

    _check_rank([ops["dt"], ops["dx"]])
    with pytest.raises(RankError):
        _check_rank([ops["dt"], ops["dt"].scale(t)])
