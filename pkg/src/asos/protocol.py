"""Standardized hypergraph operations and their flat integer encoding.

Wire layout of one operation::

    [operation tag, component tag, payload length, payload...]

Operation tags: 0 alteration, 1 addition, 2 elimination, 3 rescheduling.
Component tags: 0 node, 1 hyperedge.  Payloads:

    alter node       [property_id, new_kind_id | -1, new_value_kind | -1]
    alter hyperedge  [mechanism_id, fn...]
    add node         [kind_id, value_kind]
    add hyperedge    [n_src, src..., n_tgt, tgt..., n_keys, keys..., fn...]
    eliminate        [bit per component, ascending id]
    reschedule       [mechanism ids in execution order]

``fn...`` is ``[0, registry_id]`` or ``[1, n, genome ints...]`` for a CGP
program carried inline, so solution files replay without external state.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum

from .errors import ContractError, DecodeError, UnknownReference
from .hypergraph import EDGE, NODE, Hypergraph, Ref, ValueKind
from .scheduler import Scheduler


class OpType(IntEnum):
    ALTERATION = 0
    ADDITION = 1
    ELIMINATION = 2
    RESCHEDULING = 3


class Component(IntEnum):
    NODE = 0
    HYPEREDGE = 1


@dataclass(frozen=True)
class RegistryFn:
    fn_id: int


@dataclass(frozen=True)
class InlineProgram:
    genome: tuple


@dataclass(frozen=True)
class AlterNode:
    property_id: int
    new_kind_id: int | None = None
    new_value_kind: int | None = None


@dataclass(frozen=True)
class AlterEdge:
    mechanism_id: int
    fn: RegistryFn | InlineProgram


@dataclass(frozen=True)
class AddNode:
    kind_id: int
    value_kind: int = int(ValueKind.REAL)


@dataclass(frozen=True)
class AddEdge:
    source_ids: tuple
    target_ids: tuple
    fn: RegistryFn | InlineProgram
    group_keys: tuple = ()


@dataclass(frozen=True)
class Eliminate:
    mask: tuple


@dataclass(frozen=True)
class Reschedule:
    indices: tuple


_CONTENT = {
    (OpType.ALTERATION, Component.NODE): AlterNode,
    (OpType.ALTERATION, Component.HYPEREDGE): AlterEdge,
    (OpType.ADDITION, Component.NODE): AddNode,
    (OpType.ADDITION, Component.HYPEREDGE): AddEdge,
    (OpType.ELIMINATION, Component.NODE): Eliminate,
    (OpType.ELIMINATION, Component.HYPEREDGE): Eliminate,
    (OpType.RESCHEDULING, Component.HYPEREDGE): Reschedule,
}


@dataclass(frozen=True)
class OperationVector:
    operation_type: OpType
    component_type: Component
    content: object

    def __post_init__(self):
        object.__setattr__(self, "operation_type", OpType(self.operation_type))
        object.__setattr__(self, "component_type", Component(self.component_type))
        expected = _CONTENT.get((self.operation_type, self.component_type))
        if expected is None or not isinstance(self.content, expected):
            raise ContractError(
                f"{type(self.content).__name__} does not fit "
                f"{self.operation_type.name.lower()} of a {self.component_type.name.lower()}"
            )
        if isinstance(self.content, Eliminate) and any(b not in (0, 1) for b in self.content.mask):
            raise ContractError("activation masks are binary")


# -- convenience constructors ------------------------------------------

def alter_node(pid, kind_id=None, value_kind=None):
    return OperationVector(OpType.ALTERATION, Component.NODE, AlterNode(
        pid, kind_id, None if value_kind is None else int(value_kind)))


def alter_edge(mid, fn):
    return OperationVector(OpType.ALTERATION, Component.HYPEREDGE, AlterEdge(mid, fn))


def add_node(kind_id, value_kind=ValueKind.REAL):
    return OperationVector(OpType.ADDITION, Component.NODE, AddNode(kind_id, int(value_kind)))


def add_edge(sources, targets, fn, group_keys=()):
    return OperationVector(OpType.ADDITION, Component.HYPEREDGE,
                           AddEdge(tuple(sources), tuple(targets), fn, tuple(group_keys)))


def eliminate(component, mask):
    comp = Component.NODE if component in (NODE, Component.NODE) else Component.HYPEREDGE
    return OperationVector(OpType.ELIMINATION, comp, Eliminate(tuple(int(b) for b in mask)))


def reschedule(indices):
    return OperationVector(OpType.RESCHEDULING, Component.HYPEREDGE, Reschedule(tuple(indices)))


# -- wire format ---------------------------------------------------------

def _encode_fn(fn):
    if isinstance(fn, RegistryFn):
        return [0, fn.fn_id]
    return [1, len(fn.genome), *fn.genome]


def encode(op: OperationVector) -> list:
    c = op.content
    if isinstance(c, AlterNode):
        payload = [c.property_id,
                   -1 if c.new_kind_id is None else c.new_kind_id,
                   -1 if c.new_value_kind is None else c.new_value_kind]
    elif isinstance(c, AlterEdge):
        payload = [c.mechanism_id, *_encode_fn(c.fn)]
    elif isinstance(c, AddNode):
        payload = [c.kind_id, c.value_kind]
    elif isinstance(c, AddEdge):
        payload = [len(c.source_ids), *c.source_ids, len(c.target_ids), *c.target_ids,
                   len(c.group_keys), *c.group_keys, *_encode_fn(c.fn)]
    elif isinstance(c, Eliminate):
        payload = list(c.mask)
    else:
        payload = list(c.indices)
    return [int(op.operation_type), int(op.component_type), len(payload), *map(int, payload)]


class _Reader:
    def __init__(self, seq, start, end):
        self.seq = seq
        self.pos = start
        self.end = end

    def take(self, what):
        if self.pos >= self.end:
            raise DecodeError(f"payload ends before {what}", self.pos)
        v = self.seq[self.pos]
        self.pos += 1
        return v

    def take_n(self, what):
        n = self.take(f"{what} count")
        if n < 0 or self.pos + n > self.end:
            raise DecodeError(f"bad {what} count {n}", self.pos - 1)
        vals = tuple(self.seq[self.pos:self.pos + n])
        self.pos += n
        return vals

    def fn(self):
        at = self.pos
        tag = self.take("function tag")
        if tag == 0:
            return RegistryFn(self.take("function id"))
        if tag == 1:
            return InlineProgram(self.take_n("genome"))
        raise DecodeError(f"unknown function tag {tag}", at)


def decode(seq) -> OperationVector:
    seq = [int(x) for x in seq]
    if len(seq) < 3:
        raise DecodeError("header needs three integers", len(seq))
    t, comp, length = seq[:3]
    if t not in OpType._value2member_map_:
        raise DecodeError(f"unknown operation tag {t}", 0)
    if comp not in Component._value2member_map_:
        raise DecodeError(f"unknown component tag {comp}", 1)
    if (OpType(t), Component(comp)) not in _CONTENT:
        raise DecodeError(f"{OpType(t).name.lower()} is not defined for this component", 1)
    if length < 0:
        raise DecodeError(f"negative payload length {length}", 2)
    if len(seq) != 3 + length:
        raise DecodeError(f"payload length {length} but {len(seq) - 3} integers follow",
                          min(len(seq), 3 + length))
    r = _Reader(seq, 3, 3 + length)
    kind = _CONTENT[(OpType(t), Component(comp))]
    if kind is AlterNode:
        pid, k, vk = (r.take("property id"), r.take("kind"), r.take("value kind"))
        if vk != -1 and vk not in ValueKind._value2member_map_:
            raise DecodeError(f"unknown value kind {vk}", 5)
        content = AlterNode(pid, None if k == -1 else k, None if vk == -1 else vk)
    elif kind is AlterEdge:
        content = AlterEdge(r.take("mechanism id"), r.fn())
    elif kind is AddNode:
        k, vk = r.take("kind"), r.take("value kind")
        if vk not in ValueKind._value2member_map_:
            raise DecodeError(f"unknown value kind {vk}", 4)
        content = AddNode(k, vk)
    elif kind is AddEdge:
        src = r.take_n("source")
        tgt = r.take_n("target")
        keys = r.take_n("grouping key")
        content = AddEdge(src, tgt, r.fn(), keys)
    elif kind is Eliminate:
        mask = tuple(seq[3:])
        for i, b in enumerate(mask):
            if b not in (0, 1):
                raise DecodeError(f"mask bit {b} is not binary", 3 + i)
        r.pos = r.end
        content = Eliminate(mask)
    else:
        r.pos = r.end
        content = Reschedule(tuple(seq[3:]))
    if r.pos != r.end:
        raise DecodeError("trailing integers after payload", r.pos)
    return OperationVector(OpType(t), Component(comp), content)


# -- application -----------------------------------------------------------

@dataclass
class ChangeReport:
    changed: set = field(default_factory=set)
    added_properties: list = field(default_factory=list)
    added_mechanisms: list = field(default_factory=list)
    plan: list | None = None

    def __bool__(self):
        return bool(self.changed or self.added_properties or self.added_mechanisms
                    or self.plan is not None)


def _resolve_fn(graph, fn, ctx):
    if isinstance(fn, RegistryFn):
        return graph.registry.name_of(fn.fn_id)
    from .symbolic.cgp import CgpGenome

    try:
        genome = CgpGenome.from_ints(fn.genome)
    except DecodeError as exc:
        raise ContractError(f"inline program does not decode: {exc}") from None
    return graph.registry.register_program(genome, ctx)


def apply_operation(graph: Hypergraph, scheduler: Scheduler | None, op: OperationVector,
                    ctx=None) -> ChangeReport:
    """Apply one operation; ``ctx`` is the operator context for inline programs."""
    report = ChangeReport()
    c = op.content
    if isinstance(c, AlterNode):
        before = graph.prop(c.property_id)
        old = (before.kind_id, before.value_kind)
        graph.alter_property(c.property_id, c.new_kind_id, c.new_value_kind)
        if (before.kind_id, before.value_kind) != old:
            report.changed.add(Ref(NODE, c.property_id))
    elif isinstance(c, AlterEdge):
        m = graph.mech(c.mechanism_id)
        name = _resolve_fn(graph, c.fn, ctx)
        if name != m.fn_ref:
            graph.alter_mechanism(c.mechanism_id, name)
            report.changed.add(Ref(EDGE, c.mechanism_id))
    elif isinstance(c, AddNode):
        pid = graph.add_property(c.kind_id, c.value_kind)
        report.added_properties.append(pid)
    elif isinstance(c, AddEdge):
        name = _resolve_fn(graph, c.fn, ctx)
        mid = graph.add_mechanism(c.source_ids, c.target_ids, name, c.group_keys)
        report.added_mechanisms.append(mid)
    elif isinstance(c, Eliminate):
        node = op.component_type == Component.NODE
        items = graph.properties if node else graph.mechanisms
        ids = sorted(items)
        if len(c.mask) != len(ids):
            raise ContractError(f"mask has {len(c.mask)} bits for {len(ids)} components")
        comp = NODE if node else EDGE
        if not node:
            # check the whole mask first so a rejected op changes nothing
            for cid, bit in zip(ids, c.mask):
                if bit and not items[cid].active and any(
                        not graph.properties[p].active for p in items[cid].source_ids):
                    raise ContractError(f"mechanism {cid} reads an inactive property")
        for cid, bit in zip(ids, c.mask):
            if items[cid].active != bool(bit):
                report.changed |= graph.set_activation(Ref(comp, cid), bool(bit))
    else:
        if scheduler is None:
            raise ContractError("rescheduling needs a scheduler")
        for mid in c.indices:
            if mid not in graph.mechanisms:
                raise UnknownReference(f"unknown mechanism {mid}")
        scheduler.reschedule(c.indices)
        report.plan = list(c.indices)
    return report


def apply_all(graph, scheduler, ops, ctx=None) -> list:
    return [apply_operation(graph, scheduler, op, ctx) for op in ops]


# -- solution files ----------------------------------------------------------

def write_solution(path, ops, meta=None):
    """One encoded op per line; ``# key: json`` header lines carry metadata."""
    with open(path, "w") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}: {json.dumps(value, sort_keys=True)}\n")
        for op in ops:
            fh.write(" ".join(str(x) for x in encode(op)) + "\n")


def read_solution(path):
    ops, meta = [], {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = json.loads(value)
                continue
            try:
                ops.append(decode(int(x) for x in line.split()))
            except ValueError as exc:
                raise DecodeError(f"line {lineno}: {exc}") from None
    return ops, meta
