"""Scenario files: a hypergraph, its schedule, registered programs and a
domain config, stored as JSON.

The function registry is not serialized; it is rebuilt from ``domain`` and
``config`` through :data:`DOMAINS`, then CGP programs are re-registered from
their integer genomes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import LoadError
from .hypergraph import Hypergraph, ValueKind
from .registry import FunctionRegistry
from .scheduler import ScheduleDag, Scheduler
from .symbolic.cgp import CgpGenome
from .symbolic.operators import OperatorContext

FORMAT = "asos-scenario/1"


def _icofm_registry(config):
    from .icofm.scenario import IcofmConfig, build_registry

    return build_registry(IcofmConfig.from_dict(config))


def _icofm_ctx(config):
    from .icofm.scenario import IcofmConfig

    return IcofmConfig.from_dict(config).operator_context()


# domain -> (registry factory, operator-context factory)
DOMAINS = {
    "generic": (lambda config: FunctionRegistry(), lambda config: OperatorContext()),
    "icofm": (_icofm_registry, _icofm_ctx),
}


@dataclass
class Scenario:
    graph: Hypergraph
    dag: ScheduleDag
    config: dict = field(default_factory=dict)
    domain: str = "generic"

    def scheduler(self, graph=None) -> Scheduler:
        return Scheduler(graph if graph is not None else self.graph, self.dag)


def _jsonable(v):
    if isinstance(v, tuple):
        return list(v)
    return v


def scenario_to_dict(sc: Scenario) -> dict:
    g = sc.graph
    return {
        "format": FORMAT,
        "domain": sc.domain,
        "config": sc.config,
        "kinds": [{"id": k.kind_id, "name": k.name} for k in sorted(g.kinds.values(), key=lambda k: k.kind_id)],
        "properties": [
            {"id": p.id, "kind": p.kind_id, "value_kind": int(p.value_kind), "name": p.name,
             "active": p.active, "initial": _jsonable(p.initial)}
            for p in sorted(g.properties.values(), key=lambda p: p.id)
        ],
        "mechanisms": [
            {"id": m.id, "sources": list(m.source_ids), "targets": list(m.target_ids),
             "fn": m.fn_ref, "active": m.active, "group_keys": list(m.group_keys), "name": m.name}
            for m in sorted(g.mechanisms.values(), key=lambda m: m.id)
        ],
        "instances": [
            {"id": i.instance_id, "kind": i.kind_id,
             "state": {str(pid): _jsonable(v) for pid, v in sorted(i.state.items())}}
            for i in sorted(g.instances.values(), key=lambda i: i.instance_id)
        ],
        "dag": {
            "nodes": sorted(sc.dag.nodes),
            "edges": sorted([list(e) for e in sc.dag.edges]),
            "mechanism_of": {str(k): v for k, v in sorted(sc.dag.mechanism_of.items())},
        },
        "programs": g.registry.programs(),
    }


def save_scenario(path, sc: Scenario):
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(sc), fh, indent=1, sort_keys=True)
        fh.write("\n")


def scenario_from_dict(d: dict) -> Scenario:
    if d.get("format") != FORMAT:
        raise LoadError(f"unsupported scenario format {d.get('format')!r}")
    domain = d.get("domain", "generic")
    if domain not in DOMAINS:
        raise LoadError(f"unknown scenario domain {domain!r}")
    config = d.get("config", {})
    make_registry, make_ctx = DOMAINS[domain]
    registry = make_registry(config)
    ctx = make_ctx(config)
    for name, ints in sorted(d.get("programs", {}).items()):
        registry.register_program(CgpGenome.from_ints(ints), ctx, name=name)
    g = Hypergraph(registry)
    try:
        for k in d["kinds"]:
            g.add_kind(k["name"], k["id"])
        for p in d["properties"]:
            pid = g.add_property(p["kind"], ValueKind(p["value_kind"]), p.get("name", ""),
                                 p.get("initial"))
            if pid != p["id"]:
                raise LoadError(f"property ids must be dense and ordered (got {p['id']})")
        for inst in d["instances"]:
            g.add_instance(inst["kind"], {int(k): v for k, v in inst["state"].items()}, inst["id"])
        for m in d["mechanisms"]:
            mid = g.add_mechanism(m["sources"], m["targets"], m["fn"], m.get("group_keys", ()),
                                  m.get("name", ""))
            if mid != m["id"]:
                raise LoadError(f"mechanism ids must be dense and ordered (got {m['id']})")
        # activation last: deactivation must not cascade while loading
        for p in d["properties"]:
            g.properties[p["id"]].active = bool(p.get("active", True))
        for m in d["mechanisms"]:
            g.mechanisms[m["id"]].active = bool(m.get("active", True))
        dd = d["dag"]
        dag = ScheduleDag(set(dd["nodes"]), {tuple(e) for e in dd["edges"]},
                          {int(k): v for k, v in dd.get("mechanism_of", {}).items()})
    except (KeyError, TypeError) as exc:
        raise LoadError(f"malformed scenario: {exc!r}") from None
    return Scenario(g, dag, config, domain)


def load_scenario(path) -> Scenario:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except OSError as exc:
        raise LoadError(f"cannot read scenario {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise LoadError(f"scenario is not valid JSON: {exc}") from None
    return scenario_from_dict(d)
