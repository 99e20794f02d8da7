"""The symbolic operator library used by CGP programs.

Values are floats or 1-d numpy arrays; logical results are 1.0/0.0.
Arithmetic on arrays is element-wise.  Domain faults (division by zero)
produce :data:`FAULT_VALUE` and set the fault flag instead of raising.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError

FAULT_VALUE = 1e12
# relative slack for the threshold comparisons so that e.g. 110 >= 100 * 1.1
# holds despite 1.1 not being representable
LIMIT_RTOL = 1e-12

ARITHMETIC = "arithmetic"
LOGICAL = "logical"
CONDITIONAL = "conditional"


@dataclass(frozen=True)
class OperatorDef:
    name: str
    arity: int
    category: str
    code: int
    vector: bool = False  # consumes whole vectors rather than element-wise


@dataclass(frozen=True)
class OperatorContext:
    upper_limit_ratio: float = 0.1
    lower_limit_ratio: float = 0.1

    def __post_init__(self):
        if self.upper_limit_ratio < 0 or self.lower_limit_ratio < 0:
            raise ContractError("limit ratios must be non-negative")


# Comb is variadic in principle; genomes fix it at the node arity (3).
COMB_ARITY = 3

_TABLE = [
    ("Add", 2, ARITHMETIC, False),
    ("Sub", 2, ARITHMETIC, False),
    ("Mul", 2, ARITHMETIC, False),
    ("Div", 2, ARITHMETIC, False),
    ("MAX", 1, ARITHMETIC, True),
    ("MIN", 1, ARITHMETIC, True),
    ("Max1", 1, ARITHMETIC, False),
    ("Min1", 1, ARITHMETIC, False),
    ("Sign", 1, ARITHMETIC, False),
    ("x01", 1, ARITHMETIC, False),
    ("Inv", 1, ARITHMETIC, False),
    ("Neg", 1, ARITHMETIC, False),
    ("Abs", 1, ARITHMETIC, False),
    ("Sum", 1, ARITHMETIC, True),
    ("Sum3", 3, ARITHMETIC, True),
    ("LimUp", 2, ARITHMETIC, False),
    ("LimDown", 2, ARITHMETIC, False),
    ("Const0", 0, ARITHMETIC, False),
    ("Const01", 0, ARITHMETIC, False),
    ("Const1", 0, ARITHMETIC, False),
    ("Comb", COMB_ARITY, ARITHMETIC, True),
    ("And", 2, LOGICAL, False),
    ("Or", 2, LOGICAL, False),
    ("Eq", 2, LOGICAL, False),
    ("Gt", 2, LOGICAL, False),
    ("Lt", 2, LOGICAL, False),
    ("Not", 1, LOGICAL, False),
    ("If-else", 1, CONDITIONAL, False),
    ("While_start", 1, CONDITIONAL, False),
    ("While_end", 1, CONDITIONAL, False),
]

LIBRARY = tuple(OperatorDef(n, a, c, i, v) for i, (n, a, c, v) in enumerate(_TABLE))
BY_NAME = {op.name: op for op in LIBRARY}
MAX_ARITY = max(op.arity for op in LIBRARY)
CONTROL = frozenset(("If-else", "While_start", "While_end"))


def op(name) -> OperatorDef:
    return BY_NAME[name]


def truthy(x) -> bool:
    return bool(np.any(np.asarray(x) != 0))


def _as_vec(x):
    return np.atleast_1d(np.asarray(x, dtype=float))


def _scalar(x):
    a = np.asarray(x, dtype=float)
    return float(a) if a.ndim == 0 else a


def _div(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    zero = y == 0
    if not np.any(zero):
        return _scalar(x / y), False
    safe = np.where(zero, 1.0, y)
    out = np.where(zero, FAULT_VALUE, x / safe)
    return _scalar(out), True


def _lim_up(x, y, r):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    bound = y * (1.0 + r)
    return _scalar(np.where(x >= bound - LIMIT_RTOL * np.abs(bound), 1.0, 0.0))


def _lim_down(x, y, r):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    bound = y * (1.0 - r)
    return _scalar(np.where(x <= bound + LIMIT_RTOL * np.abs(bound), 1.0, 0.0))


def _sum3(x, y, z):
    x = _as_vec(x)
    y = _as_vec(y)
    if x.shape != y.shape:
        raise ValueError("Sum3 needs equally long vectors")
    return float(y[x >= float(np.asarray(z, dtype=float).ravel()[0])].sum())


def _bool(v):
    return _scalar(np.asarray(v, dtype=float))


def apply(name, args, ctx: OperatorContext):
    """Evaluate operator ``name``; returns ``(value, faulted)``."""
    a = args
    if name == "Add":
        return _scalar(np.add(a[0], a[1])), False
    if name == "Sub":
        return _scalar(np.subtract(a[0], a[1])), False
    if name == "Mul":
        return _scalar(np.multiply(a[0], a[1])), False
    if name == "Div":
        return _div(a[0], a[1])
    if name == "MAX":
        return float(np.max(_as_vec(a[0]))), False
    if name == "MIN":
        return float(np.min(_as_vec(a[0]))), False
    if name == "Max1":
        return _scalar(np.maximum(a[0], 0.0)), False
    if name == "Min1":
        return _scalar(np.minimum(a[0], 0.0)), False
    if name == "Sign":
        return _scalar(np.sign(np.asarray(a[0], dtype=float))), False
    if name == "x01":
        return _scalar(np.multiply(a[0], 0.1)), False
    if name == "Inv":
        return _div(1.0, a[0])
    if name == "Neg":
        return _scalar(np.negative(a[0])), False
    if name == "Abs":
        return _scalar(np.abs(a[0])), False
    if name == "Sum":
        return float(np.sum(_as_vec(a[0]))), False
    if name == "Sum3":
        return _sum3(a[0], a[1], a[2]), False
    if name == "LimUp":
        return _lim_up(a[0], a[1], ctx.upper_limit_ratio), False
    if name == "LimDown":
        return _lim_down(a[0], a[1], ctx.lower_limit_ratio), False
    if name == "Const0":
        return 0.0, False
    if name == "Const01":
        return 0.1, False
    if name == "Const1":
        return 1.0, False
    if name == "Comb":
        return np.concatenate([_as_vec(v) for v in a]), False
    if name == "And":
        return _bool(np.logical_and(np.asarray(a[0]) != 0, np.asarray(a[1]) != 0)), False
    if name == "Or":
        return _bool(np.logical_or(np.asarray(a[0]) != 0, np.asarray(a[1]) != 0)), False
    if name == "Eq":
        return _bool(np.equal(a[0], a[1])), False
    if name == "Gt":
        return _bool(np.greater(a[0], a[1])), False
    if name == "Lt":
        return _bool(np.less(a[0], a[1])), False
    if name == "Not":
        return _bool(np.asarray(a[0]) == 0), False
    if name in CONTROL:
        return (1.0 if truthy(a[0]) else 0.0), False
    raise ContractError(f"unknown operator {name!r}")


def eval_operator(operator: OperatorDef | str, args, ctx: OperatorContext | None = None):
    """Value of one operator application.

    >>> eval_operator("x01", [5.0])
    0.5
    """
    if isinstance(operator, str):
        operator = BY_NAME[operator]
    if len(args) != operator.arity:
        raise ContractError(f"{operator.name} takes {operator.arity} arguments, got {len(args)}")
    return apply(operator.name, list(args), ctx or OperatorContext())[0]
