import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from asos import protocol as P
from asos.errors import ContractError, DecodeError, UnknownReference
from asos.hypergraph import EDGE, NODE, Hypergraph, Ref, ValueKind
from asos.registry import FunctionRegistry
from asos.scheduler import Scheduler
from asos.symbolic.cgp import random_genome
from asos.symbolic.operators import BY_NAME

from helpers import random_op


def test_wire_layout():
    assert P.encode(P.alter_node(5, None, ValueKind.INTEGER)) == [0, 0, 3, 5, -1, 1]
    assert P.encode(P.alter_edge(2, P.RegistryFn(7))) == [0, 1, 3, 2, 0, 7]
    assert P.encode(P.add_node(1, ValueKind.BOOLEAN)) == [1, 0, 2, 1, 2]
    assert P.encode(P.add_edge([1, 2], [3], P.RegistryFn(4))) == [1, 1, 8, 2, 1, 2, 1, 3, 0, 0, 4]
    assert P.encode(P.eliminate(NODE, [1, 0, 1])) == [2, 0, 3, 1, 0, 1]
    assert P.encode(P.reschedule([3, 1, 3])) == [3, 1, 3, 3, 1, 3]
    assert P.encode(P.alter_edge(0, P.InlineProgram((9, 8)))) == [0, 1, 5, 0, 1, 2, 9, 8]


@pytest.mark.parametrize("seed", range(20))
def test_round_trip_random(seed):
    rng = np.random.default_rng(seed)
    for _ in range(200):
        op = random_op(rng)
        assert P.decode(P.encode(op)) == op


@given(st.integers(0, 2**32 - 1))
def test_round_trip_property(seed):
    op = random_op(np.random.default_rng(seed))
    wire = P.encode(op)
    assert wire[2] == len(wire) - 3
    assert P.decode(wire) == op


@pytest.mark.parametrize("seq", [
    [], [0, 0], [9, 0, 0], [0, 7, 0], [3, 0, 0],
    [0, 0, 3, 1, 2], [0, 0, 2, 1, 2, 3], [0, 0, -1],
    [2, 0, 2, 1, 3],                   # non-binary mask
    [1, 0, 2, 0, 9],                   # unknown value kind
    [0, 1, 3, 0, 2, 1],                # unknown function tag
    [1, 1, 4, 5, 1, 2, 0],             # source count overruns the payload
    [0, 1, 4, 0, 0, 1, 2],             # trailing integers
])
def test_decode_errors(seq):
    with pytest.raises(DecodeError):
        P.decode(seq)


def test_decode_error_reports_position():
    with pytest.raises(DecodeError) as exc:
        P.decode([2, 0, 3, 1, 5, 0])
    assert exc.value.offset == 4


def test_content_must_fit_the_tags():
    with pytest.raises(ContractError):
        P.OperationVector(P.OpType.RESCHEDULING, P.Component.NODE, P.Reschedule((1,)))
    with pytest.raises(ContractError):
        P.OperationVector(P.OpType.ADDITION, P.Component.NODE, P.Eliminate((1,)))


def toy():
    reg = FunctionRegistry()
    reg.add("inc", lambda x: x + 1, 1, 1)
    reg.add("dec", lambda x: x - 1, 1, 1)
    g = Hypergraph(reg)
    k = g.add_kind("k")
    a = g.add_property(k, ValueKind.REAL, "a")
    b = g.add_property(k, ValueKind.REAL, "b")
    m0 = g.add_mechanism([a], [b], "inc")
    m1 = g.add_mechanism([b], [a], "dec")
    g.add_instance(k)
    return g, Scheduler(g)


def test_apply_each_operation_kind():
    g, s = toy()
    r = P.apply_operation(g, s, P.add_node(0, ValueKind.INTEGER))
    assert r.added_properties == [2] and g.values(2) == [0]
    r = P.apply_operation(g, s, P.add_edge([0], [2], P.RegistryFn(g.registry.id_of("inc"))))
    assert r.added_mechanisms == [2]
    r = P.apply_operation(g, s, P.alter_edge(0, P.RegistryFn(g.registry.id_of("dec"))))
    assert r.changed == {Ref(EDGE, 0)} and g.mechanisms[0].fn_ref == "dec"
    assert not P.apply_operation(g, s, P.alter_edge(0, P.RegistryFn(g.registry.id_of("dec"))))
    r = P.apply_operation(g, s, P.alter_node(2, None, ValueKind.REAL))
    assert r.changed == {Ref(NODE, 2)}
    r = P.apply_operation(g, s, P.eliminate(NODE, [0, 1, 1]))
    assert r.changed == {Ref(NODE, 0), Ref(EDGE, 0), Ref(EDGE, 2)}
    r = P.apply_operation(g, s, P.reschedule([1, 1]))
    assert r.plan == [1, 1] and s.plan.steps == [1, 1]


def test_elimination_is_all_or_nothing():
    g, s = toy()
    P.apply_operation(g, s, P.eliminate(NODE, [0, 1]))
    before = g.activation_mask(EDGE)
    with pytest.raises(ContractError):
        P.apply_operation(g, s, P.eliminate(EDGE, [1, 1]))
    assert g.activation_mask(EDGE) == before


def test_apply_errors():
    g, s = toy()
    with pytest.raises(ContractError):
        P.apply_operation(g, s, P.eliminate(NODE, [1]))
    with pytest.raises(UnknownReference):
        P.apply_operation(g, s, P.reschedule([0, 5]))
    with pytest.raises(ContractError):
        P.apply_operation(g, None, P.reschedule([0]))
    with pytest.raises(UnknownReference):
        P.apply_operation(g, s, P.alter_edge(0, P.RegistryFn(99)))
    with pytest.raises(ContractError):
        P.apply_operation(g, s, P.alter_edge(0, P.InlineProgram((1, 2, 3))))


def test_inline_program_registers_once():
    g, s = toy()
    rng = np.random.default_rng(0)
    codes = tuple(BY_NAME[n].code for n in ("Add", "Neg", "Abs", "Const1"))
    genome = random_genome(1, 1, 1, 5, 5, codes, rng)
    op = P.alter_edge(0, P.InlineProgram(tuple(genome.to_ints())))
    P.apply_operation(g, s, op)
    name = g.mechanisms[0].fn_ref
    assert name.startswith("cgp:")
    n = len(g.registry)
    P.apply_operation(g, s, P.alter_edge(1, P.InlineProgram(tuple(genome.to_ints()))))
    assert len(g.registry) == n and g.mechanisms[1].fn_ref == name


def test_interventionist_ops_on_market_scenario():
    from asos.icofm.scenario import build_scenario
    from asos.icofm.simulation import interventionist_ops

    sc = build_scenario()
    g = sc.graph.copy()
    s = Scheduler(g, sc.dag)
    ops = interventionist_ops(sc)
    P.apply_all(g, s, ops)
    assert len(g.properties) == 101 and len(g.mechanisms) == 77
    assert g.mechanisms[76].fn_ref == "icofm.interventionist"
    steps = s.plan.steps
    assert steps.index(76) == steps.index(g.mechanism_id("submit_orders")) - 1
    # the source scenario is untouched
    assert len(sc.graph.properties) == 98


def test_solution_file_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    ops = [random_op(rng) for _ in range(50)]
    path = tmp_path / "sol.txt"
    P.write_solution(path, ops, {"fitness": 1.5, "kind": "test"})
    back, meta = P.read_solution(path)
    assert back == ops and meta == {"fitness": 1.5, "kind": "test"}
    for line in path.read_text().splitlines():
        if not line.startswith("#"):
            assert all(tok.lstrip("-").isdigit() for tok in line.split())


def test_solution_file_bad_line(tmp_path):
    path = tmp_path / "sol.txt"
    path.write_text("0 0 3 1 -1 x\n")
    with pytest.raises(DecodeError):
        P.read_solution(path)
