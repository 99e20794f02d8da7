"""Execution order of mechanisms and batched execution over instances."""
from __future__ import annotations

import csv
import heapq
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ContractError, CycleError, StepError, UnknownReference
from .hypergraph import Hypergraph, coerce_value
from .registry import WORLD


@dataclass
class ScheduleDag:
    """Precedence constraints between plan slots.

    A slot is normally a mechanism id.  ``mechanism_of`` maps slots to
    mechanism ids when the same mechanism must run more than once (the chain
    induced by :func:`reschedule`).
    """

    nodes: set = field(default_factory=set)
    edges: set = field(default_factory=set)
    mechanism_of: dict = field(default_factory=dict)

    def mechanism(self, slot):
        return self.mechanism_of.get(slot, slot)

    @classmethod
    def chain(cls, mechanism_ids):
        ids = list(mechanism_ids)
        return cls(
            nodes=set(range(len(ids))),
            edges={(i, i + 1) for i in range(len(ids) - 1)},
            mechanism_of=dict(enumerate(ids)),
        )


@dataclass
class ExecutionPlan:
    steps: list = field(default_factory=list)


@dataclass
class AllocationGroup:
    mechanism_id: int
    groups: list  # [(key tuple, [instance ids])]


class StepEvent(NamedTuple):
    step: int
    mechanism_id: int
    instance_count: int


def build_plan(dag: ScheduleDag) -> ExecutionPlan:
    """Topological order; ready slots are taken by ascending mechanism id."""
    nodes = set(dag.nodes)
    for a, b in dag.edges:
        nodes.add(a)
        nodes.add(b)
    succ = {n: [] for n in nodes}
    indeg = {n: 0 for n in nodes}
    for a, b in sorted(dag.edges):
        succ[a].append(b)
        indeg[b] += 1
    ready = [(dag.mechanism(n), n) for n in nodes if indeg[n] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        _, n = heapq.heappop(ready)
        order.append(n)
        for s in succ[n]:
            indeg[s] -= 1
            if indeg[s] == 0:
                heapq.heappush(ready, (dag.mechanism(s), s))
    if len(order) != len(nodes):
        left = {n for n in nodes if indeg[n] > 0}
        raise CycleError({dag.mechanism(n) for n in _find_cycle(left, succ)})
    return ExecutionPlan([dag.mechanism(n) for n in order])


def _find_cycle(left, succ):
    # every remaining node has a predecessor inside `left`, so walking
    # predecessors eventually repeats a node
    pred = {n: [] for n in left}
    for a in left:
        for b in succ[a]:
            if b in left:
                pred[b].append(a)
    n = min(left)
    seen = []
    while n not in seen:
        seen.append(n)
        n = min(pred[n])
    return seen[seen.index(n):]


class Scheduler:
    """The DAG and the plan derived from it, bundled for the protocol."""

    def __init__(self, graph: Hypergraph, dag: ScheduleDag | None = None):
        self.graph = graph
        self.dag = dag if dag is not None else ScheduleDag(set(graph.mechanisms))
        self.plan = build_plan(self.dag)

    def reschedule(self, indices):
        self.plan = reschedule(self.graph, self.plan, indices)
        self.dag = ScheduleDag.chain(self.plan.steps)
        return self.plan


def reschedule(graph: Hypergraph, plan: ExecutionPlan, indices) -> ExecutionPlan:
    indices = list(indices)
    for mid in indices:
        if mid not in graph.mechanisms:
            raise UnknownReference(f"unknown mechanism {mid}")
    return ExecutionPlan(indices)


def allocate_groups(graph: Hypergraph, mechanism_id) -> AllocationGroup:
    m = graph.mech(mechanism_id)
    kind = graph.subject_kind(mechanism_id)
    ids = list(graph.instances_of(kind)) if kind is not None else []
    if not m.group_keys:
        return AllocationGroup(mechanism_id, [((), ids)] if ids else [])
    groups = {}
    for iid in ids:
        state = graph.instances[iid].state
        key = tuple(state[p] for p in m.group_keys)
        groups.setdefault(key, []).append(iid)
    return AllocationGroup(mechanism_id, list(groups.items()))


class World:
    """Handle passed to world-scope rules."""

    def __init__(self, graph: Hypergraph, env=None):
        self.graph = graph
        self.env = env


def _source_reader(graph, m, kind):
    readers = []
    for pid in m.source_ids:
        pk = graph.properties[pid].kind_id
        if pk == kind:
            readers.append(("own", pid))
        else:
            ids = graph.instances_of(pk)
            if len(ids) == 1:
                readers.append(("const", graph.instances[ids[0]].state[pid]))
            else:
                readers.append(("const", tuple(graph.instances[i].state[pid] for i in ids)))
    return readers


def _outputs(result, n):
    if n == 1:
        return (result,)
    out = tuple(result)
    if len(out) != n:
        raise ContractError(f"function returned {len(out)} values, expected {n}")
    return out


def execute_mechanism(graph: Hypergraph, mechanism_id, env=None, grouped=None) -> int:
    """Apply one mechanism to the graph; returns the number of instances touched.

    ``grouped`` forces the batched (allocation-group) path on or off; by
    default it is used for vectorized rules and mechanisms with grouping keys.
    """
    m = graph.mech(mechanism_id)
    rule = graph.registry.get(m.fn_ref)
    if rule.scope == WORLD:
        touched = rule.fn(World(graph, env), m)
        return 1 if touched is None else int(touched)
    kind = graph.subject_kind(mechanism_id)
    if kind is None:
        rule.fn()
        return 0
    readers = _source_reader(graph, m, kind)
    targets = [(pid, graph.properties[pid].value_kind) for pid in m.target_ids]
    n_out = len(targets)
    if grouped is None:
        grouped = rule.vectorized or bool(m.group_keys)
    touched = 0
    if grouped:
        for _, ids in allocate_groups(graph, mechanism_id).groups:
            states = [graph.instances[i].state for i in ids]
            args = []
            for how, x in readers:
                if how == "own":
                    col = [s[x] for s in states]
                    args.append(np.asarray(col) if rule.vectorized else col)
                else:
                    args.append(x)
            if rule.vectorized:
                outs = _outputs(rule.fn(*args), n_out)
                for j, (pid, vk) in enumerate(targets):
                    col = np.broadcast_to(np.asarray(outs[j]), (len(ids),))
                    for s, v in zip(states, col):
                        s[pid] = coerce_value(vk, v.item() if hasattr(v, "item") else v)
            else:
                for k, s in enumerate(states):
                    vals = [a[k] if how == "own" else a for (how, _), a in zip(readers, args)]
                    outs = _outputs(rule.fn(*vals), n_out)
                    for (pid, vk), v in zip(targets, outs):
                        s[pid] = coerce_value(vk, v)
            touched += len(ids)
        return touched
    for iid in graph.instances_of(kind):
        s = graph.instances[iid].state
        vals = [s[x] if how == "own" else x for how, x in readers]
        outs = _outputs(rule.fn(*vals), n_out)
        for (pid, vk), v in zip(targets, outs):
            s[pid] = coerce_value(vk, v)
        touched += 1
    return touched


def execute_step(graph: Hypergraph, plan: ExecutionPlan, env=None, step=0) -> list:
    """Run every active mechanism of ``plan`` in order; returns the event log.

    The plan's step list is snapshotted first, so a reschedule performed by a
    mechanism takes effect on the next pass.
    """
    log = []
    for mid in list(plan.steps):
        m = graph.mechanisms.get(mid)
        if m is None:
            raise UnknownReference(f"plan references unknown mechanism {mid}")
        if not m.active:
            continue
        try:
            touched = execute_mechanism(graph, mid, env)
        except StepError:
            raise
        except Exception as exc:
            raise StepError(mid, exc) from exc
        log.append(StepEvent(step, mid, touched))
    return log


def write_event_log(path, events):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "mechanism_id", "instance_count"])
        for e in events:
            w.writerow([e.step, e.mechanism_id, e.instance_count])


def read_event_log(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [StepEvent(int(r["step"]), int(r["mechanism_id"]), int(r["instance_count"])) for r in rows]
