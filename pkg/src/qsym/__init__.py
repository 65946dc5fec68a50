"""Lie and Q-conditional symmetry checks for partial differential equations.

Modules:

* ``expr``: jet-space contexts, normal forms, total derivatives
* ``operators``: vector fields, prolongation, brackets
* ``invariance``: Lie and Q-conditional residuals, determining systems
* ``reduction``: ansatzes, reduced equations, solution checks
* ``casebook``: the worked examples as runnable reports
* ``dsl`` and ``cli``: the script language and command-line driver
"""

from .expr import (
    ClosureError,
    ContextError,
    Int,
    JetContext,
    MultiIndex,
    QsymError,
    is_zero,
    normalize,
    total_derivative,
)
from .invariance import (
    FunctionConstraint,
    PdeSystem,
    is_lie_symmetry,
    is_qcond_symmetry,
    lie_determining_system,
    lie_residual,
    qcond_determining_system,
    qcond_residual,
)
from .operators import VectorField, characteristic, lie_bracket, prolong
from .reduction import Ansatz, joint_system_check, reduce

__version__ = "0.1.0"

__all__ = [
    "Ansatz",
    "ClosureError",
    "ContextError",
    "FunctionConstraint",
    "Int",
    "JetContext",
    "MultiIndex",
    "PdeSystem",
    "QsymError",
    "VectorField",
    "characteristic",
    "is_lie_symmetry",
    "is_qcond_symmetry",
    "is_zero",
    "joint_system_check",
    "lie_bracket",
    "lie_determining_system",
    "lie_residual",
    "normalize",
    "prolong",
    "qcond_determining_system",
    "qcond_residual",
    "reduce",
    "total_derivative",
]
