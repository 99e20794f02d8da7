import pytest
from hypothesis import given
from hypothesis import strategies as st

from asos.errors import ContractError, UnknownReference
from asos.hypergraph import (EDGE, NODE, Hypergraph, Ref, ValueKind, coerce_value,
                             validate_principles)
from asos.registry import FunctionRegistry, Rule


def small_graph():
    reg = FunctionRegistry()
    reg.add("add", lambda a, b: a + b, 2, 1)
    reg.add("neg", lambda a: -a, 1, 1)
    reg.add("copy", lambda a: a, 1, 1)
    g = Hypergraph(reg)
    k = g.add_kind("thing")
    a = g.add_property(k, ValueKind.REAL, "a", 1.0)
    b = g.add_property(k, ValueKind.REAL, "b", 2.0)
    c = g.add_property(k, ValueKind.REAL, "c")
    m0 = g.add_mechanism([a, b], [c], "add", name="sum")
    m1 = g.add_mechanism([c], [a], "neg", name="flip")
    m2 = g.add_mechanism([b], [b], "copy")
    for _ in range(3):
        g.add_instance(k)
    return g, (a, b, c), (m0, m1, m2)


def test_ids_are_sequential_and_deterministic():
    g1, p1, m1 = small_graph()
    g2, p2, m2 = small_graph()
    assert p1 == p2 == (0, 1, 2)
    assert m1 == m2 == (0, 1, 2)
    assert sorted(g1.instances) == [0, 1, 2]


def test_instances_start_from_property_defaults():
    g, (a, b, c), _ = small_graph()
    assert g.values(a) == [1.0] * 3
    assert g.values(c) == [0.0] * 3


def test_new_property_reaches_existing_instances():
    g, _, _ = small_graph()
    p = g.add_property(0, ValueKind.INTEGER, "n", 7)
    assert g.values(p) == [7, 7, 7]
    assert g.check_integrity() == []


def test_mechanism_arity_and_references_are_checked():
    g, (a, b, c), _ = small_graph()
    with pytest.raises(ContractError):
        g.add_mechanism([a], [c], "add")
    with pytest.raises(UnknownReference):
        g.add_mechanism([a, 99], [c], "add")
    with pytest.raises(UnknownReference):
        g.add_mechanism([a, b], [c], "nope")
    with pytest.raises(ContractError):
        g.add_mechanism([a, b], [c], "add", group_keys=[c])


def test_singleton_get_needs_no_instance_id():
    reg = FunctionRegistry()
    g = Hypergraph(reg)
    k = g.add_kind("world")
    p = g.add_property(k, ValueKind.INTEGER, "n", 3)
    g.add_instance(k)
    assert g.get(p) == 3
    g.set(p, 4.0)
    assert g.get(p) == 4
    g.add_instance(k)
    with pytest.raises(ContractError):
        g.get(p)


@pytest.mark.parametrize("kind,value,expected", [
    (ValueKind.REAL, 3, 3.0),
    (ValueKind.INTEGER, 4.0, 4),
    (ValueKind.BOOLEAN, 1, True),
    (ValueKind.SEQUENCE, [1, 2], (1.0, 2.0)),
    (ValueKind.CATEGORICAL, "red", "red"),
    (ValueKind.CATEGORICAL, 2.0, 2),
])
def test_coerce_value(kind, value, expected):
    assert coerce_value(kind, value) == expected


@pytest.mark.parametrize("kind,value", [
    (ValueKind.REAL, "x"), (ValueKind.INTEGER, 2.5), (ValueKind.SEQUENCE, "ab"),
    (ValueKind.CATEGORICAL, 1.5), (ValueKind.BOOLEAN, [1]),
])
def test_coerce_value_rejects(kind, value):
    with pytest.raises(ContractError):
        coerce_value(kind, value)


def test_node_deactivation_cascades_to_readers():
    g, (a, b, c), (m0, m1, m2) = small_graph()
    changed = g.set_activation(Ref(NODE, b), False)
    assert changed == {Ref(NODE, b), Ref(EDGE, m0), Ref(EDGE, m2)}
    assert g.mechanisms[m1].active
    assert g.check_integrity() == []


def test_reactivation_does_not_cascade():
    g, (a, b, c), (m0, m1, m2) = small_graph()
    g.set_activation(Ref(NODE, b), False)
    changed = g.set_activation(Ref(NODE, b), True)
    assert changed == {Ref(NODE, b)}
    assert not g.mechanisms[m0].active and not g.mechanisms[m2].active


def test_edge_with_inactive_source_cannot_be_switched_on():
    g, (a, b, c), (m0, _, _) = small_graph()
    g.set_activation(Ref(NODE, b), False)
    with pytest.raises(ContractError):
        g.set_activation(Ref(EDGE, m0), True)
    g.set_activation(Ref(NODE, b), True)
    assert g.set_activation(Ref(EDGE, m0), True) == {Ref(EDGE, m0)}


def test_edge_toggle_touches_only_the_edge():
    g, _, (m0, _, _) = small_graph()
    assert g.set_activation(Ref(EDGE, m0), False) == {Ref(EDGE, m0)}
    assert g.set_activation(Ref(EDGE, m0), False) == set()


def test_alter_property_converts_values():
    g, (a, b, c), _ = small_graph()
    g.set(a, 2.0, 0)
    g.alter_property(a, value_kind=ValueKind.INTEGER)
    assert g.values(a) == [2, 1, 1]
    assert g.prop(a).value_kind == ValueKind.INTEGER
    k2 = g.add_kind("other")
    g.add_instance(k2)
    g.alter_property(c, kind_id=k2)
    assert g.values(c) == [0.0]
    assert all(c not in g.instances[i].state for i in g.instances_of(0))
    assert g.check_integrity() == []


def test_alter_mechanism_checks_arity():
    g, _, (m0, m1, _) = small_graph()
    g.alter_mechanism(m1, "copy")
    assert g.mechanisms[m1].fn_ref == "copy"
    with pytest.raises(ContractError):
        g.alter_mechanism(m0, "neg")


def test_copy_is_deep_and_shares_registry():
    g, (a, _, _), (m0, _, _) = small_graph()
    dup = g.copy()
    dup.set(a, 9.0, 0)
    dup.set_activation(Ref(EDGE, m0), False)
    assert g.get(a, 0) == 1.0 and g.mechanisms[m0].active
    assert dup.registry is g.registry


def test_principle_validator():
    g, (a, b, c), (m0, _, _) = small_graph()
    assert validate_principles(g) == []
    dup = g.add_mechanism([a, b], [c], "add")
    v = validate_principles(g)
    assert [(x.principle, x.mechanisms) for x in v] == [("overlap", (m0, dup))]
    g.registry.add("mul", lambda x, y: x * y, 2, 1)
    g.add_mechanism([b, a], [c], "mul")
    kinds = sorted(x.principle for x in validate_principles(g))
    assert kinds == ["dependency", "dependency", "overlap"]


def test_cross_call_violation():
    reg = FunctionRegistry()
    reg.add("inner", lambda x: x, 1, 1)
    reg.register(Rule("outer", lambda x: x, 1, 1, calls=frozenset({"inner"})))
    g = Hypergraph(reg)
    k = g.add_kind("k")
    p, q, r = (g.add_property(k) for _ in range(3))
    m_in = g.add_mechanism([p], [q], "inner")
    m_out = g.add_mechanism([q], [r], "outer")
    v = validate_principles(g)
    assert [(x.principle, x.mechanisms) for x in v] == [("cross-call", (m_out, m_in))]


def test_market_scenario_size():
    from asos.icofm.scenario import build_scenario

    sc = build_scenario()
    assert len(sc.graph.properties) == 98
    assert len(sc.graph.mechanisms) == 76
    assert sc.graph.check_integrity() == []
    assert validate_principles(sc.graph) == []


toggles = st.lists(st.tuples(st.sampled_from([NODE, EDGE]), st.integers(0, 7), st.booleans()),
                   max_size=40)


def random_graph(seed):
    import numpy as np

    rng = np.random.default_rng(seed)
    reg = FunctionRegistry()
    reg.add("any", lambda *a: 0.0, None, None)
    g = Hypergraph(reg)
    k = g.add_kind("k")
    for _ in range(8):
        g.add_property(k)
    for _ in range(8):
        src = rng.choice(8, size=int(rng.integers(1, 4)), replace=False)
        tgt = rng.choice(8, size=int(rng.integers(1, 3)), replace=False)
        g.add_mechanism([int(s) for s in src], [int(t) for t in tgt], "any")
    return g


@given(st.integers(0, 1000), toggles)
def test_cascade_closure_property(seed, ops):
    """After any toggle sequence, no active mechanism reads an inactive node,
    and the reported change set is exactly the set of flipped flags."""
    g = random_graph(seed)
    for comp, i, on in ops:
        before = ({p: x.active for p, x in g.properties.items()},
                  {m: x.active for m, x in g.mechanisms.items()})
        if comp == EDGE and on and not g.mechanisms[i].active and any(
                not g.properties[p].active for p in g.mechanisms[i].source_ids):
            with pytest.raises(ContractError):
                g.set_activation(Ref(comp, i), on)
            changed = set()
        else:
            changed = g.set_activation(Ref(comp, i), on)
        flipped = {Ref(NODE, p) for p, v in before[0].items() if g.properties[p].active != v}
        flipped |= {Ref(EDGE, m) for m, v in before[1].items() if g.mechanisms[m].active != v}
        assert changed == flipped
        for m in g.mechanisms.values():
            if m.active:
                assert all(g.properties[p].active for p in m.source_ids)
