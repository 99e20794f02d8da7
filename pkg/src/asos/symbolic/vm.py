"""Batched scalar evaluation of decoded programs.

A program is flattened into integer arrays and run row by row by a small
virtual machine.  The compiled Cython VM (``asos.symbolic._vm``) is used when
it was built; otherwise the pure-Python VM below is used.  Set
``ASOS_PURE_PYTHON=1`` to force the fallback.  Straight-line programs may
instead be evaluated column-wise with numpy (:func:`run_columns`).

Scalar semantics differ from :func:`~asos.symbolic.cgp.run_program` only for
vector operators: MAX/MIN/Sum of a scalar is the scalar and
``Sum3(x, y, z) = y if x >= z else 0``.  Comb is not supported.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from .cgp import DEFAULT_LOOP_CAP, Program
from .operators import BY_NAME, FAULT_VALUE, LIMIT_RTOL, MAX_ARITY, OperatorContext

STATUS_OK, STATUS_CAPPED, STATUS_FAULTED = 0, 1, 2

C = {name: d.code for name, d in BY_NAME.items()}
UNSUPPORTED = frozenset((C["Comb"],))
_CONTROL_CODES = frozenset((C["If-else"], C["While_start"], C["While_end"]))


@dataclass(frozen=True)
class CompiledProgram:
    n_inputs: int
    ops: np.ndarray  # int32 (n,)
    args: np.ndarray  # int32 (n, MAX_ARITY) slot indices, -1 unused
    jumps: np.ndarray  # int32 (n,)
    outputs: np.ndarray  # int32 (n_out,) slot indices

    @property
    def straight_line(self):
        return not any(int(c) in _CONTROL_CODES for c in self.ops)


def compile_program(p: Program) -> CompiledProgram:
    slot = p.slot_of
    n = len(p.nodes)
    codes = np.empty(n, dtype=np.int32)
    args = np.full((n, MAX_ARITY), -1, dtype=np.int32)
    for j, node in enumerate(p.nodes):
        codes[j] = BY_NAME[node.name].code
        if codes[j] in UNSUPPORTED:
            raise ContractError(f"{node.name} has no scalar VM form")
        for i, a in enumerate(node.inputs):
            args[j, i] = slot[a]
    jumps = np.asarray(p.jumps if p.jumps else [-1] * n, dtype=np.int32)
    outs = np.asarray([slot[a] for a in p.outputs], dtype=np.int32)
    return CompiledProgram(p.n_inputs, codes, args, jumps, outs)


def supports(p: Program) -> bool:
    return not any(BY_NAME[n.name].code in UNSUPPORTED for n in p.nodes)


def _sign(x):
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    if x == 0:
        return 0.0
    return x


def run_batch_py(ops, args, jumps, outs, n_inputs, X, up, down, loop_cap):
    """Pure-Python VM; same contract as the compiled ``run_batch``."""
    ops = [int(c) for c in ops]
    args = [tuple(int(a) for a in row) for row in args]
    jumps = [int(j) for j in jumps]
    outs = [int(o) for o in outs]
    n = len(ops)
    X = np.asarray(X, dtype=float)
    rows = X.shape[0]
    Y = np.empty((rows, len(outs)))
    status = np.zeros(rows, dtype=np.int8)
    budget = loop_cap * max(n, 1)
    bound_up = 1.0 + up
    bound_down = 1.0 - down
    ADD, SUB, MUL, DIV = C["Add"], C["Sub"], C["Mul"], C["Div"]
    MAX, MIN, MAX1, MIN1 = C["MAX"], C["MIN"], C["Max1"], C["Min1"]
    SIGN, X01, INV, NEG, ABS = C["Sign"], C["x01"], C["Inv"], C["Neg"], C["Abs"]
    SUM, SUM3, LIMUP, LIMDOWN = C["Sum"], C["Sum3"], C["LimUp"], C["LimDown"]
    C0, C01, C1 = C["Const0"], C["Const01"], C["Const1"]
    AND, OR, EQ, GT, LT, NOT = C["And"], C["Or"], C["Eq"], C["Gt"], C["Lt"], C["Not"]
    IFELSE, WSTART, WEND = C["If-else"], C["While_start"], C["While_end"]
    for r in range(rows):
        v = [float(x) for x in X[r]] + [0.0] * n
        iters = [0] * n
        pc = steps = 0
        faulted = capped = False
        while pc < n:
            if steps >= budget:
                capped = True
                break
            steps += 1
            op = ops[pc]
            a = args[pc]
            out = n_inputs + pc
            if op == IFELSE:
                c = v[a[0]] != 0
                v[out] = 1.0 if c else 0.0
                if not c and jumps[pc] == pc + 2:
                    v[out + 1] = 0.0
                    pc += 2
                else:
                    pc += 1
                continue
            if op == WSTART:
                c = v[a[0]] != 0
                v[out] = 1.0 if c else 0.0
                if c:
                    iters[pc] = 1
                    pc += 1
                else:
                    pc = jumps[pc] + 1
                continue
            if op == WEND:
                c = v[a[0]] != 0
                v[out] = 1.0 if c else 0.0
                s = jumps[pc]
                if c and iters[s] < loop_cap:
                    iters[s] += 1
                    pc = s + 1
                else:
                    if c:
                        capped = True
                    pc += 1
                continue
            x = v[a[0]] if a[0] >= 0 else 0.0
            y = v[a[1]] if a[1] >= 0 else 0.0
            if op == ADD:
                res = x + y
            elif op == SUB:
                res = x - y
            elif op == MUL:
                res = x * y
            elif op == DIV:
                if y == 0:
                    res = FAULT_VALUE
                    faulted = True
                else:
                    res = x / y
            elif op == MAX or op == MIN or op == SUM:
                res = x
            elif op == MAX1:
                res = x if (x != x or x > 0) else 0.0
            elif op == MIN1:
                res = x if (x != x or x < 0) else 0.0
            elif op == SIGN:
                res = _sign(x)
            elif op == X01:
                res = x * 0.1
            elif op == INV:
                if x == 0:
                    res = FAULT_VALUE
                    faulted = True
                else:
                    res = 1.0 / x
            elif op == NEG:
                res = -x
            elif op == ABS:
                res = math.fabs(x)
            elif op == SUM3:
                res = y if x >= v[a[2]] else 0.0
            elif op == LIMUP:
                b = y * bound_up
                res = 1.0 if x >= b - LIMIT_RTOL * math.fabs(b) else 0.0
            elif op == LIMDOWN:
                b = y * bound_down
                res = 1.0 if x <= b + LIMIT_RTOL * math.fabs(b) else 0.0
            elif op == C0:
                res = 0.0
            elif op == C01:
                res = 0.1
            elif op == C1:
                res = 1.0
            elif op == AND:
                res = 1.0 if (x != 0 and y != 0) else 0.0
            elif op == OR:
                res = 1.0 if (x != 0 or y != 0) else 0.0
            elif op == EQ:
                res = 1.0 if x == y else 0.0
            elif op == GT:
                res = 1.0 if x > y else 0.0
            elif op == LT:
                res = 1.0 if x < y else 0.0
            elif op == NOT:
                res = 1.0 if x == 0 else 0.0
            else:
                raise ContractError(f"opcode {op} unsupported by the VM")
            v[out] = res
            pc += 1
        for j, o in enumerate(outs):
            Y[r, j] = v[o]
        status[r] = STATUS_FAULTED if faulted else (STATUS_CAPPED if capped else STATUS_OK)
    return Y, status


_native = None
if not os.environ.get("ASOS_PURE_PYTHON"):
    try:
        from ._vm import run_batch as _native  # type: ignore[no-redef]
    except ImportError:
        _native = None

HAVE_NATIVE = _native is not None


def run_batch(cp: CompiledProgram, X, ctx: OperatorContext | None = None,
              loop_cap: int = DEFAULT_LOOP_CAP, backend: str = "auto"):
    """Evaluate ``cp`` on every row of ``X``; returns ``(Y, status)``."""
    ctx = ctx or OperatorContext()
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != cp.n_inputs:
        raise ContractError(f"expected an (n, {cp.n_inputs}) input matrix")
    if backend == "native" and not HAVE_NATIVE:
        raise ContractError("compiled VM is not available")
    fn = _native if backend in ("auto", "native") and HAVE_NATIVE else run_batch_py
    return fn(cp.ops, cp.args, cp.jumps, cp.outputs, cp.n_inputs, X,
              float(ctx.upper_limit_ratio), float(ctx.lower_limit_ratio), int(loop_cap))


def run_columns(cp: CompiledProgram, X, ctx: OperatorContext | None = None):
    """Column-wise numpy evaluation of a straight-line program."""
    if not cp.straight_line:
        raise ContractError("column evaluation needs a program without control flow")
    ctx = ctx or OperatorContext()
    X = np.asarray(X, dtype=np.float64)
    rows = X.shape[0]
    cols = [X[:, i] for i in range(cp.n_inputs)]
    faulted = np.zeros(rows, dtype=bool)
    zero = np.zeros(rows)
    one = np.ones(rows)
    up = 1.0 + ctx.upper_limit_ratio
    down = 1.0 - ctx.lower_limit_ratio
    with np.errstate(all="ignore"):
        for j in range(len(cp.ops)):
            op = int(cp.ops[j])
            a = cp.args[j]
            x = cols[a[0]] if a[0] >= 0 else zero
            y = cols[a[1]] if a[1] >= 0 else zero
            if op == C["Add"]:
                res = x + y
            elif op == C["Sub"]:
                res = x - y
            elif op == C["Mul"]:
                res = x * y
            elif op == C["Div"]:
                bad = y == 0
                faulted |= bad
                res = np.where(bad, FAULT_VALUE, x / np.where(bad, 1.0, y))
            elif op in (C["MAX"], C["MIN"], C["Sum"]):
                res = x
            elif op == C["Max1"]:
                res = np.maximum(x, 0.0)
            elif op == C["Min1"]:
                res = np.minimum(x, 0.0)
            elif op == C["Sign"]:
                res = np.sign(x)
            elif op == C["x01"]:
                res = x * 0.1
            elif op == C["Inv"]:
                bad = x == 0
                faulted |= bad
                res = np.where(bad, FAULT_VALUE, 1.0 / np.where(bad, 1.0, x))
            elif op == C["Neg"]:
                res = -x
            elif op == C["Abs"]:
                res = np.abs(x)
            elif op == C["Sum3"]:
                res = np.where(x >= cols[a[2]], y, 0.0)
            elif op == C["LimUp"]:
                b = y * up
                res = np.where(x >= b - LIMIT_RTOL * np.abs(b), 1.0, 0.0)
            elif op == C["LimDown"]:
                b = y * down
                res = np.where(x <= b + LIMIT_RTOL * np.abs(b), 1.0, 0.0)
            elif op == C["Const0"]:
                res = zero
            elif op == C["Const01"]:
                res = one * 0.1
            elif op == C["Const1"]:
                res = one
            elif op == C["And"]:
                res = ((x != 0) & (y != 0)).astype(float)
            elif op == C["Or"]:
                res = ((x != 0) | (y != 0)).astype(float)
            elif op == C["Eq"]:
                res = (x == y).astype(float)
            elif op == C["Gt"]:
                res = (x > y).astype(float)
            elif op == C["Lt"]:
                res = (x < y).astype(float)
            elif op == C["Not"]:
                res = (x == 0).astype(float)
            else:
                raise ContractError(f"opcode {op} unsupported column-wise")
            cols.append(np.asarray(res, dtype=float))
    Y = np.stack([cols[o] for o in cp.outputs], axis=1) if len(cp.outputs) else np.empty((rows, 0))
    status = np.where(faulted, STATUS_FAULTED, STATUS_OK).astype(np.int8)
    return Y, status


def evaluate(p: Program, X, ctx=None, loop_cap=DEFAULT_LOOP_CAP):
    """Fastest available batched evaluation of ``p`` over the rows of ``X``."""
    cp = compile_program(p)
    if cp.straight_line and not HAVE_NATIVE:
        return run_columns(cp, X, ctx)
    return run_batch(cp, X, ctx, loop_cap)
