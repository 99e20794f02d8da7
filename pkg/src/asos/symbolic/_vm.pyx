# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled scalar VM for decoded CGP programs (see vm.py for the contract)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()

# opcodes mirror asos.symbolic.operators.LIBRARY
DEF ADD = 0
DEF SUB = 1
DEF MUL = 2
DEF DIV = 3
DEF MAX = 4
DEF MIN = 5
DEF MAX1 = 6
DEF MIN1 = 7
DEF SIGN = 8
DEF X01 = 9
DEF INV = 10
DEF NEG = 11
DEF ABS = 12
DEF SUM = 13
DEF SUM3 = 14
DEF LIMUP = 15
DEF LIMDOWN = 16
DEF CONST0 = 17
DEF CONST01 = 18
DEF CONST1 = 19
DEF COMB = 20
DEF AND = 21
DEF OR = 22
DEF EQ = 23
DEF GT = 24
DEF LT = 25
DEF NOT = 26
DEF IFELSE = 27
DEF WSTART = 28
DEF WEND = 29

cdef double FAULT_VALUE = 1e12
cdef double LIMIT_RTOL = 1e-12


def run_batch(int[::1] ops, int[:, ::1] args, int[::1] jumps, int[::1] outs,
              int n_inputs, double[:, ::1] X, double up, double down, int loop_cap):
    cdef Py_ssize_t n = ops.shape[0]
    cdef Py_ssize_t rows = X.shape[0]
    cdef Py_ssize_t n_out = outs.shape[0]
    Y_arr = np.empty((rows, n_out), dtype=np.float64)
    status_arr = np.zeros(rows, dtype=np.int8)
    v_arr = np.zeros(n_inputs + n, dtype=np.float64)
    it_arr = np.zeros(max(n, 1), dtype=np.int64)
    cdef double[:, ::1] Y = Y_arr
    cdef signed char[::1] status = status_arr
    cdef double[::1] v = v_arr
    cdef long long[::1] iters = it_arr
    cdef long long budget = <long long>loop_cap * (n if n > 0 else 1)
    cdef double bound_up = 1.0 + up
    cdef double bound_down = 1.0 - down
    cdef Py_ssize_t r, i, pc, s
    cdef long long steps
    cdef int op, a0, a1, a2, out
    cdef bint faulted, capped, c
    cdef double x, y, res, b
    for r in range(rows):
        for i in range(n_inputs):
            v[i] = X[r, i]
        for i in range(n):
            v[n_inputs + i] = 0.0
            iters[i] = 0
        pc = 0
        steps = 0
        faulted = False
        capped = False
        while pc < n:
            if steps >= budget:
                capped = True
                break
            steps += 1
            op = ops[pc]
            a0 = args[pc, 0]
            a1 = args[pc, 1]
            a2 = args[pc, 2]
            out = n_inputs + pc
            if op == IFELSE:
                c = v[a0] != 0
                v[out] = 1.0 if c else 0.0
                if not c and jumps[pc] == pc + 2:
                    v[out + 1] = 0.0
                    pc += 2
                else:
                    pc += 1
                continue
            if op == WSTART:
                c = v[a0] != 0
                v[out] = 1.0 if c else 0.0
                if c:
                    iters[pc] = 1
                    pc += 1
                else:
                    pc = jumps[pc] + 1
                continue
            if op == WEND:
                c = v[a0] != 0
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
            x = v[a0] if a0 >= 0 else 0.0
            y = v[a1] if a1 >= 0 else 0.0
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
                if x > 0:
                    res = 1.0
                elif x < 0:
                    res = -1.0
                elif x == 0:
                    res = 0.0
                else:
                    res = x
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
                res = fabs(x)
            elif op == SUM3:
                res = y if x >= v[a2] else 0.0
            elif op == LIMUP:
                b = y * bound_up
                res = 1.0 if x >= b - LIMIT_RTOL * fabs(b) else 0.0
            elif op == LIMDOWN:
                b = y * bound_down
                res = 1.0 if x <= b + LIMIT_RTOL * fabs(b) else 0.0
            elif op == CONST0:
                res = 0.0
            elif op == CONST01:
                res = 0.1
            elif op == CONST1:
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
                raise ValueError(f"opcode {op} unsupported by the VM")
            v[out] = res
            pc += 1
        for i in range(n_out):
            Y[r, i] = v[outs[i]]
        if faulted:
            status[r] = 2
        elif capped:
            status[r] = 1
        else:
            status[r] = 0
    return Y_arr, status_arr
