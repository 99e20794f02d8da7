"""Directed-hypergraph model of a society.

Properties are nodes carrying per-instance state; mechanisms are directed
hyperedges from source properties to target properties, computed by a
function looked up in a :class:`~asos.registry.FunctionRegistry`.
"""
from __future__ import annotations

import copy
from collections import defaultdict
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple

from .errors import ContractError, UnknownReference
from .registry import WORLD, FunctionRegistry


class ValueKind(IntEnum):
    REAL = 0
    INTEGER = 1
    BOOLEAN = 2
    SEQUENCE = 3
    CATEGORICAL = 4


NODE = "node"
EDGE = "hyperedge"


class Ref(NamedTuple):
    component: str
    id: int

    def __repr__(self):
        return f"{'p' if self.component == NODE else 'm'}{self.id}"


def zero_value(kind: ValueKind):
    return {
        ValueKind.REAL: 0.0,
        ValueKind.INTEGER: 0,
        ValueKind.BOOLEAN: False,
        ValueKind.SEQUENCE: (),
        ValueKind.CATEGORICAL: 0,
    }[ValueKind(kind)]


def coerce_value(kind: ValueKind, value):
    """Convert ``value`` to the storage type of ``kind`` or raise ContractError."""
    kind = ValueKind(kind)
    try:
        if kind == ValueKind.REAL:
            if isinstance(value, (str, tuple, list)):
                raise TypeError
            return float(value)
        if kind == ValueKind.INTEGER:
            if isinstance(value, (str, tuple, list)):
                raise TypeError
            f = float(value)
            if f != round(f):
                raise TypeError
            return int(round(f))
        if kind == ValueKind.BOOLEAN:
            if isinstance(value, (str, tuple, list)):
                raise TypeError
            return bool(value)
        if kind == ValueKind.SEQUENCE:
            if isinstance(value, str):
                raise TypeError
            return tuple(float(v) for v in value)
        if isinstance(value, (int, str)) and not isinstance(value, bool):
            return value
        if isinstance(value, float) and value == round(value):
            return int(value)
        raise TypeError
    except (TypeError, ValueError):
        raise ContractError(f"{value!r} is not a valid {kind.name.lower()} value") from None


@dataclass
class Property:
    id: int
    kind_id: int
    value_kind: ValueKind
    active: bool = True
    name: str = ""
    initial: object = None

    @property
    def default(self):
        return zero_value(self.value_kind) if self.initial is None else self.initial


@dataclass
class Mechanism:
    id: int
    source_ids: tuple
    target_ids: tuple
    fn_ref: str
    active: bool = True
    group_keys: tuple = ()
    name: str = ""


@dataclass
class ObjectKind:
    kind_id: int
    name: str
    property_ids: list = field(default_factory=list)


@dataclass
class ObjectInstance:
    instance_id: int
    kind_id: int
    state: dict = field(default_factory=dict)


@dataclass
class Violation:
    principle: str  # "overlap", "dependency" or "cross-call"
    mechanisms: tuple
    detail: str = ""


class Hypergraph:
    """The whole social model: kinds, properties, mechanisms and instances."""

    def __init__(self, registry: FunctionRegistry | None = None):
        self.registry = registry if registry is not None else FunctionRegistry()
        self.kinds: dict[int, ObjectKind] = {}
        self.properties: dict[int, Property] = {}
        self.mechanisms: dict[int, Mechanism] = {}
        self.instances: dict[int, ObjectInstance] = {}
        self._kind_instances: dict[int, list] = defaultdict(list)
        self._sourced_by: dict[int, set] = defaultdict(set)
        self._next_pid = 0
        self._next_mid = 0
        self._next_iid = 0

    # -- construction -------------------------------------------------

    def add_kind(self, name, kind_id=None) -> int:
        if kind_id is None:
            kind_id = max(self.kinds, default=-1) + 1
        if kind_id in self.kinds:
            raise ContractError(f"kind {kind_id} already exists")
        self.kinds[kind_id] = ObjectKind(kind_id, name)
        return kind_id

    def add_property(self, kind_id, value_kind=ValueKind.REAL, name="", initial=None) -> int:
        if kind_id not in self.kinds:
            raise UnknownReference(f"unknown kind {kind_id}")
        value_kind = ValueKind(value_kind)
        if initial is not None:
            initial = coerce_value(value_kind, initial)
        pid = self._next_pid
        self._next_pid += 1
        prop = Property(pid, kind_id, value_kind, True, name, initial)
        self.properties[pid] = prop
        self.kinds[kind_id].property_ids.append(pid)
        for iid in self._kind_instances[kind_id]:
            self.instances[iid].state[pid] = prop.default
        return pid

    def add_mechanism(self, source_ids, target_ids, fn_ref, group_keys=(), name="") -> int:
        source_ids = tuple(source_ids)
        target_ids = tuple(target_ids)
        group_keys = tuple(group_keys)
        for pid in source_ids + target_ids + group_keys:
            if pid not in self.properties:
                raise UnknownReference(f"unknown property {pid}")
        if not set(group_keys) <= set(source_ids):
            raise ContractError("grouping keys must be source properties")
        rule = self.registry.get(fn_ref)
        if not rule.accepts(len(source_ids), len(target_ids)):
            raise ContractError(
                f"{fn_ref!r} takes {rule.n_in}->{rule.n_out} values, "
                f"mechanism wires {len(source_ids)}->{len(target_ids)}"
            )
        if rule.scope != WORLD:
            kinds = {self.properties[p].kind_id for p in target_ids}
            if len(kinds) > 1:
                raise ContractError("instance-scope mechanism targets span several kinds")
            if group_keys and kinds and {self.properties[p].kind_id for p in group_keys} != kinds:
                raise ContractError("grouping keys must belong to the subject kind")
        mid = self._next_mid
        self._next_mid += 1
        self.mechanisms[mid] = Mechanism(mid, source_ids, target_ids, fn_ref, True, group_keys, name)
        for pid in source_ids:
            self._sourced_by[pid].add(mid)
        return mid

    def add_instance(self, kind_id, state=None, instance_id=None) -> int:
        if kind_id not in self.kinds:
            raise UnknownReference(f"unknown kind {kind_id}")
        if instance_id is None:
            instance_id = self._next_iid
        if instance_id in self.instances:
            raise ContractError(f"instance {instance_id} already exists")
        self._next_iid = max(self._next_iid, instance_id + 1)
        values = {pid: self.properties[pid].default for pid in self.kinds[kind_id].property_ids}
        for pid, v in (state or {}).items():
            if pid not in values:
                raise ContractError(f"property {pid} does not belong to kind {kind_id}")
            values[pid] = coerce_value(self.properties[pid].value_kind, v)
        self.instances[instance_id] = ObjectInstance(instance_id, kind_id, values)
        self._kind_instances[kind_id].append(instance_id)
        self._kind_instances[kind_id].sort()
        return instance_id

    # -- lookup -------------------------------------------------------

    def prop(self, pid) -> Property:
        try:
            return self.properties[pid]
        except KeyError:
            raise UnknownReference(f"unknown property {pid}") from None

    def mech(self, mid) -> Mechanism:
        try:
            return self.mechanisms[mid]
        except KeyError:
            raise UnknownReference(f"unknown mechanism {mid}") from None

    def instances_of(self, kind_id) -> list:
        return self._kind_instances.get(kind_id, [])

    def property_id(self, name) -> int:
        for p in self.properties.values():
            if p.name == name:
                return p.id
        raise UnknownReference(f"no property named {name!r}")

    def mechanism_id(self, name) -> int:
        for m in self.mechanisms.values():
            if m.name == name:
                return m.id
        raise UnknownReference(f"no mechanism named {name!r}")

    def subject_kind(self, mid):
        m = self.mech(mid)
        if m.target_ids:
            return self.properties[m.target_ids[0]].kind_id
        if m.source_ids:
            return self.properties[m.source_ids[0]].kind_id
        return None

    def get(self, pid, instance_id=None):
        """Value of ``pid``; ``instance_id`` may be omitted for singleton kinds."""
        prop = self.prop(pid)
        if instance_id is None:
            ids = self._kind_instances.get(prop.kind_id, [])
            if len(ids) != 1:
                raise ContractError(f"property {pid} needs an instance id")
            instance_id = ids[0]
        return self.instances[instance_id].state[pid]

    def set(self, pid, value, instance_id=None):
        prop = self.prop(pid)
        if instance_id is None:
            ids = self._kind_instances.get(prop.kind_id, [])
            if len(ids) != 1:
                raise ContractError(f"property {pid} needs an instance id")
            instance_id = ids[0]
        self.instances[instance_id].state[pid] = coerce_value(prop.value_kind, value)

    def values(self, pid) -> list:
        """Values of ``pid`` across all instances of its kind, by instance id."""
        prop = self.prop(pid)
        return [self.instances[i].state[pid] for i in self._kind_instances.get(prop.kind_id, [])]

    def activation_mask(self, component) -> list:
        items = self.properties if component == NODE else self.mechanisms
        return [int(items[i].active) for i in sorted(items)]

    def copy(self) -> "Hypergraph":
        """Deep copy of structure and state; the registry is shared."""
        registry = self.registry
        self.registry = None
        try:
            dup = copy.deepcopy(self)
        finally:
            self.registry = registry
        dup.registry = registry
        return dup

    # -- plasticity ---------------------------------------------------

    def set_activation(self, ref: Ref, active: bool) -> set:
        """Switch a node or hyperedge on/off; returns every component changed.

        Deactivating a node cascades to the mechanisms that read it.
        Reactivation never cascades, and a mechanism cannot be switched on
        while one of its source nodes is off.
        """
        active = bool(active)
        changed = set()
        if ref.component == NODE:
            prop = self.prop(ref.id)
            if prop.active != active:
                prop.active = active
                changed.add(Ref(NODE, ref.id))
            if not active:
                for mid in sorted(self._sourced_by.get(ref.id, ())):
                    m = self.mechanisms[mid]
                    if m.active:
                        m.active = False
                        changed.add(Ref(EDGE, mid))
        elif ref.component == EDGE:
            m = self.mech(ref.id)
            if active and not m.active:
                off = [p for p in m.source_ids if not self.properties[p].active]
                if off:
                    raise ContractError(f"mechanism {ref.id} reads inactive properties {off}")
            if m.active != active:
                m.active = active
                changed.add(Ref(EDGE, ref.id))
        else:
            raise UnknownReference(f"unknown component type {ref.component!r}")
        return changed

    def alter_property(self, pid, kind_id=None, value_kind=None):
        prop = self.prop(pid)
        if kind_id is not None and kind_id not in self.kinds:
            raise UnknownReference(f"unknown kind {kind_id}")
        new_vk = prop.value_kind if value_kind is None else ValueKind(value_kind)
        converted = {}
        if new_vk != prop.value_kind:
            for iid in self.instances_of(prop.kind_id):
                converted[iid] = coerce_value(new_vk, self.instances[iid].state[pid])
            initial = None if prop.initial is None else coerce_value(new_vk, prop.initial)
            prop.value_kind = new_vk
            prop.initial = initial
            for iid, v in converted.items():
                self.instances[iid].state[pid] = v
        if kind_id is not None and kind_id != prop.kind_id:
            for iid in self.instances_of(prop.kind_id):
                del self.instances[iid].state[pid]
            self.kinds[prop.kind_id].property_ids.remove(pid)
            prop.kind_id = kind_id
            self.kinds[kind_id].property_ids.append(pid)
            for iid in self.instances_of(kind_id):
                self.instances[iid].state[pid] = prop.default

    def alter_mechanism(self, mid, fn_ref):
        m = self.mech(mid)
        rule = self.registry.get(fn_ref)
        if not rule.accepts(len(m.source_ids), len(m.target_ids)):
            raise ContractError(f"{fn_ref!r} is not arity-compatible with mechanism {mid}")
        m.fn_ref = fn_ref

    # -- diagnostics --------------------------------------------------

    def check_integrity(self) -> list:
        """Structural invariant violations as human-readable strings."""
        problems = []
        for pid, p in self.properties.items():
            if p.kind_id not in self.kinds or pid not in self.kinds[p.kind_id].property_ids:
                problems.append(f"property {pid} has dangling kind {p.kind_id}")
        for mid, m in self.mechanisms.items():
            for pid in m.source_ids + m.target_ids:
                if pid not in self.properties:
                    problems.append(f"mechanism {mid} references missing property {pid}")
            if m.fn_ref not in self.registry:
                problems.append(f"mechanism {mid} has unresolved fn_ref {m.fn_ref!r}")
            elif not self.registry.get(m.fn_ref).accepts(len(m.source_ids), len(m.target_ids)):
                problems.append(f"mechanism {mid} arity mismatch with {m.fn_ref!r}")
            if m.active and any(not self.properties[p].active for p in m.source_ids
                                if p in self.properties):
                problems.append(f"mechanism {mid} active with an inactive source")
        for iid, inst in self.instances.items():
            expected = set(self.kinds[inst.kind_id].property_ids)
            if set(inst.state) != expected:
                problems.append(f"instance {iid} state does not match kind {inst.kind_id}")
        return problems


def validate_principles(graph: Hypergraph) -> list:
    """Report abstraction-principle violations among the graph's mechanisms.

    overlap: same sources, targets and function.  dependency: same source and
    target sets but different functions.  cross-call: a function whose
    registry metadata says it calls the function of another mechanism.
    """
    violations = []
    by_shape = defaultdict(list)
    for mid in sorted(graph.mechanisms):
        m = graph.mechanisms[mid]
        by_shape[(frozenset(m.source_ids), frozenset(m.target_ids))].append(m)
    for group in by_shape.values():
        for i, a in enumerate(group):
            for b in group[i + 1:]:
                if a.fn_ref == b.fn_ref:
                    violations.append(Violation("overlap", (a.id, b.id), a.fn_ref))
                else:
                    violations.append(Violation("dependency", (a.id, b.id)))
    users = defaultdict(list)
    for mid in sorted(graph.mechanisms):
        users[graph.mechanisms[mid].fn_ref].append(mid)
    for mid in sorted(graph.mechanisms):
        m = graph.mechanisms[mid]
        if m.fn_ref not in graph.registry:
            continue
        for callee in sorted(graph.registry.get(m.fn_ref).calls):
            for other in users.get(callee, ()):
                if other != mid:
                    violations.append(Violation("cross-call", (mid, other), f"{m.fn_ref} -> {callee}"))
    return violations
