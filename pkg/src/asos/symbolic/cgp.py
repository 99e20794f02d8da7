"""Cartesian genetic programming genomes and the programs they decode to."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, DecodeError
from ..registry import Rule
from . import operators as ops
from .operators import FAULT_VALUE, LIBRARY, MAX_ARITY, OperatorContext

OK = "ok"
CAPPED = "capped"
FAULTED = "faulted"
DEFAULT_LOOP_CAP = 1000

GENES_PER_NODE = 1 + MAX_ARITY


@dataclass(frozen=True)
class CgpGenome:
    """Integer genome over a ``rows x cols`` grid.

    Addresses ``0..n_inputs-1`` are program inputs; grid node ``k``
    (column-major) has address ``n_inputs + k``.  Each node carries one
    function gene (a library code) and ``MAX_ARITY`` connection genes, of which
    only the first ``arity`` are read.
    """

    n_inputs: int
    n_outputs: int
    rows: int
    cols: int
    levels_back: int
    functions: tuple
    nodes: tuple  # ((code, c0, c1, c2), ...)
    outputs: tuple

    @property
    def n_nodes(self):
        return self.rows * self.cols

    def column(self, k):
        return k // self.rows

    def connection_range(self, k):
        """Valid addresses for node ``k``'s inputs, as (inputs, lo, hi) bounds."""
        col = self.column(k)
        lo = self.n_inputs + max(0, col - self.levels_back) * self.rows
        hi = self.n_inputs + col * self.rows
        return lo, hi

    def valid_connection(self, k, addr):
        lo, hi = self.connection_range(k)
        return 0 <= addr < self.n_inputs or lo <= addr < hi

    def check(self):
        if self.n_inputs < 0 or self.n_outputs < 1 or self.rows < 1 or self.cols < 0:
            raise ContractError("bad genome dimensions")
        if self.levels_back < 1:
            raise ContractError("levels_back must be >= 1")
        if len(self.nodes) != self.n_nodes:
            raise ContractError("node gene count does not match the grid")
        if len(self.outputs) != self.n_outputs:
            raise ContractError("output gene count mismatch")
        allowed = set(self.functions)
        for k, gene in enumerate(self.nodes):
            if len(gene) != GENES_PER_NODE or gene[0] not in allowed:
                raise ContractError(f"node {k} has an invalid function gene")
            for addr in gene[1:]:
                if not self.valid_connection(k, addr):
                    raise ContractError(f"node {k} connection {addr} out of range")
        total = self.n_inputs + self.n_nodes
        for addr in self.outputs:
            if not 0 <= addr < total:
                raise ContractError(f"output gene {addr} out of range")
        return self

    def to_ints(self) -> list:
        out = [self.n_inputs, self.n_outputs, self.rows, self.cols, self.levels_back,
               len(self.functions), *self.functions]
        for gene in self.nodes:
            out.extend(gene)
        out.extend(self.outputs)
        return out

    @classmethod
    def from_ints(cls, seq) -> "CgpGenome":
        seq = [int(x) for x in seq]
        try:
            n_in, n_out, rows, cols, lb, nf = seq[:6]
            pos = 6
            functions = tuple(seq[pos:pos + nf])
            pos += nf
            n = rows * cols
            nodes = tuple(tuple(seq[pos + i * GENES_PER_NODE: pos + (i + 1) * GENES_PER_NODE])
                          for i in range(n))
            pos += n * GENES_PER_NODE
            outputs = tuple(seq[pos:pos + n_out])
            pos += n_out
        except ValueError:
            raise DecodeError("truncated genome", len(seq)) from None
        if pos != len(seq) or len(outputs) != n_out or len(functions) != nf:
            raise DecodeError("genome length does not match its header", min(pos, len(seq)))
        if any(len(g) != GENES_PER_NODE for g in nodes):
            raise DecodeError("truncated genome", len(seq))
        try:
            return cls(n_in, n_out, rows, cols, lb, functions, nodes, outputs).check()
        except ContractError as exc:
            raise DecodeError(str(exc)) from None


@dataclass(frozen=True)
class ProgramNode:
    address: int
    name: str
    inputs: tuple  # addresses


@dataclass(frozen=True)
class Program:
    n_inputs: int
    n_outputs: int
    nodes: tuple  # active ProgramNodes in execution order
    outputs: tuple  # addresses
    jumps: tuple = field(default=())  # per node: skip target / matching loop end

    @property
    def slot_of(self):
        slots = {a: a for a in range(self.n_inputs)}
        for j, n in enumerate(self.nodes):
            slots[n.address] = self.n_inputs + j
        return slots


def active_nodes(genome: CgpGenome) -> list:
    """Grid indices reachable from the output genes, ascending."""
    seen = set()
    stack = [a - genome.n_inputs for a in genome.outputs if a >= genome.n_inputs]
    while stack:
        k = stack.pop()
        if k in seen:
            continue
        seen.add(k)
        code, *conns = genome.nodes[k]
        for addr in conns[:LIBRARY[code].arity]:
            if addr >= genome.n_inputs:
                stack.append(addr - genome.n_inputs)
    return sorted(seen)


def decode_genome(genome: CgpGenome) -> Program:
    genome.check()
    nodes = []
    for k in active_nodes(genome):
        code, *conns = genome.nodes[k]
        d = LIBRARY[code]
        nodes.append(ProgramNode(genome.n_inputs + k, d.name, tuple(conns[:d.arity])))
    jumps = [-1] * len(nodes)
    stack = []
    for j, n in enumerate(nodes):
        if n.name == "While_start":
            stack.append(j)
        elif n.name == "While_end":
            if not stack:
                raise DecodeError(f"While_end at node {n.address} has no While_start")
            s = stack.pop()
            jumps[s] = j
            jumps[j] = s
        elif n.name == "If-else":
            nxt = j + 1
            skippable = nxt < len(nodes) and nodes[nxt].name not in ops.CONTROL
            jumps[j] = j + 2 if skippable else j + 1
    if stack:
        raise DecodeError(f"While_start at node {nodes[stack[-1]].address} is never closed")
    return Program(genome.n_inputs, genome.n_outputs, tuple(nodes), tuple(genome.outputs),
                   tuple(jumps))


@dataclass
class RunResult:
    outputs: tuple
    flag: str
    steps: int = 0


def run_program(p: Program, inputs, ctx: OperatorContext | None = None,
                loop_cap: int = DEFAULT_LOOP_CAP) -> RunResult:
    """Execute a decoded program on one input tuple (scalars or vectors)."""
    if len(inputs) != p.n_inputs:
        raise ContractError(f"program takes {p.n_inputs} inputs, got {len(inputs)}")
    ctx = ctx or OperatorContext()
    n_in = p.n_inputs
    n = len(p.nodes)
    slot = p.slot_of
    vals = [float(x) if np.ndim(x) == 0 else np.asarray(x, dtype=float) for x in inputs]
    vals += [0.0] * n
    args_of = [tuple(slot[a] for a in node.inputs) for node in p.nodes]
    iters = [0] * n
    budget = loop_cap * max(n, 1)
    faulted = capped = False
    pc = steps = 0
    while pc < n:
        if steps >= budget:
            capped = True
            break
        steps += 1
        node = p.nodes[pc]
        name = node.name
        if name in ops.CONTROL:
            c = ops.truthy(vals[args_of[pc][0]])
            vals[n_in + pc] = 1.0 if c else 0.0
            jump = p.jumps[pc]
            if name == "If-else":
                if not c and jump == pc + 2:
                    vals[n_in + pc + 1] = 0.0
                    pc = jump
                else:
                    pc += 1
            elif name == "While_start":
                if c:
                    iters[pc] = 1
                    pc += 1
                else:
                    pc = jump + 1
            else:
                if c and iters[jump] < loop_cap:
                    iters[jump] += 1
                    pc = jump + 1
                else:
                    capped = capped or c
                    pc += 1
            continue
        try:
            value, fault = ops.apply(name, [vals[s] for s in args_of[pc]], ctx)
        except (ValueError, TypeError, IndexError):
            value, fault = FAULT_VALUE, True
        faulted = faulted or fault
        vals[n_in + pc] = value
        pc += 1
    outputs = tuple(vals[slot[a]] for a in p.outputs)
    flag = FAULTED if faulted else (CAPPED if capped else OK)
    return RunResult(outputs, flag, steps)


def random_genome(n_inputs, n_outputs, rows, cols, levels_back, functions, rng,
                  max_tries=1000) -> CgpGenome:
    functions = tuple(functions)
    for _ in range(max_tries):
        g = _sample_genome(n_inputs, n_outputs, rows, cols, levels_back, functions, rng)
        try:
            decode_genome(g)
            return g
        except DecodeError:
            continue
    raise ContractError("could not sample a decodable genome")


def _sample_connection(g, k, rng):
    lo, hi = g.connection_range(k)
    n_choices = g.n_inputs + (hi - lo)
    r = int(rng.integers(n_choices))
    return r if r < g.n_inputs else lo + (r - g.n_inputs)


def _sample_genome(n_in, n_out, rows, cols, lb, functions, rng):
    shell = CgpGenome(n_in, n_out, rows, cols, lb, functions, (), ())
    nodes = []
    for k in range(rows * cols):
        code = functions[int(rng.integers(len(functions)))]
        nodes.append((code, *(_sample_connection(shell, k, rng) for _ in range(MAX_ARITY))))
    total = n_in + rows * cols
    outputs = tuple(int(rng.integers(total)) for _ in range(n_out))
    return CgpGenome(n_in, n_out, rows, cols, lb, functions, tuple(nodes), outputs)


def mutate(genome: CgpGenome, rate: float, rng, max_tries=100) -> CgpGenome:
    """Point mutation: every gene is resampled with probability ``rate``.

    Mutants that fail to decode (unbalanced loops) are redrawn; after
    ``max_tries`` failures the parent is returned unchanged.
    """
    if not 0.0 <= rate <= 1.0:
        raise ContractError("mutation rate must lie in [0, 1]")
    if rate == 0.0:
        return genome
    total = genome.n_inputs + genome.n_nodes
    for _ in range(max_tries):
        nodes = []
        for k, gene in enumerate(genome.nodes):
            new = list(gene)
            if rng.random() < rate:
                new[0] = genome.functions[int(rng.integers(len(genome.functions)))]
            for i in range(1, GENES_PER_NODE):
                if rng.random() < rate:
                    new[i] = _sample_connection(genome, k, rng)
            nodes.append(tuple(new))
        outputs = tuple(int(rng.integers(total)) if rng.random() < rate else a
                        for a in genome.outputs)
        child = CgpGenome(genome.n_inputs, genome.n_outputs, genome.rows, genome.cols,
                          genome.levels_back, genome.functions, tuple(nodes), outputs)
        try:
            decode_genome(child)
            return child
        except DecodeError:
            continue
    return genome


def structural_complexity(p: Program) -> float:
    """Node count times average out-degree (edges into active nodes and outputs)."""
    if not p.nodes:
        return 0.0
    active = {n.address for n in p.nodes}
    out_degree = dict.fromkeys(active, 0)
    for node in p.nodes:
        for a in node.inputs:
            if a in active:
                out_degree[a] += 1
    for a in p.outputs:
        if a in active:
            out_degree[a] += 1
    n_node = len(active)
    od_avg = sum(out_degree.values()) / n_node
    return n_node * od_avg


def expression(p: Program, names=None) -> list:
    """Human-readable expression per output."""
    names = names or [f"x{i}" for i in range(p.n_inputs)]
    by_addr = {n.address: n for n in p.nodes}

    def render(a, depth=0):
        if a < p.n_inputs:
            return names[a]
        node = by_addr[a]
        if depth > 50:
            return f"{node.name}(...)"
        if not node.inputs:
            return node.name
        return f"{node.name}({', '.join(render(x, depth + 1) for x in node.inputs)})"

    return [render(a) for a in p.outputs]


def program_rule(name, program: Program, ctx=None, genome_ints=None, loop_cap=DEFAULT_LOOP_CAP) -> Rule:
    ctx = ctx or OperatorContext()

    def fn(*values):
        res = run_program(program, values, ctx, loop_cap)
        out = tuple(float(v) if np.ndim(v) == 0 else tuple(np.ravel(v)) for v in res.outputs)
        return out[0] if len(out) == 1 else out

    return Rule(name, fn, program.n_inputs, program.n_outputs,
                genome=tuple(genome_ints) if genome_ints is not None else None)
