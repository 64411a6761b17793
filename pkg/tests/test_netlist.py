import itertools
import json

import numpy as np
import pytest

from vos_timing.charlib import GateKind
from vos_timing.errors import (
    CombinationalLoop,
    MissingInput,
    MultipleDrivers,
    ParseError,
    UndeclaredNet,
    UnknownWord,
)
from vos_timing.fixtures import BUILDERS, DATA_DIR, fixture_path, load_fixture
from vos_timing.netlist import (
    Word,
    dumps_netlist,
    evaluate,
    evaluate_array,
    parse_netlist,
    to_dict,
    topo_order,
    word_value,
)


def _bits(prefix, value, width):
    return {f"{prefix}{i}": (value >> i) & 1 for i in range(width)}


def test_fig1_shape_and_order(fixtures):
    n = fixtures["fig1_xor2"]
    assert len(n.gates) == 2 and len(n.inputs) == 3 and len(n.outputs) == 1
    assert [g.id for g in topo_order(n)] == ["F1", "F2"]


def test_multiple_drivers():
    doc = {"inputs": ["a", "b"], "outputs": ["n3"],
           "gates": [{"id": "g1", "type": "AND2", "in": ["a", "b"], "out": "n3"},
                     {"id": "g2", "type": "OR2", "in": ["a", "b"], "out": "n3"}]}
    with pytest.raises(MultipleDrivers) as ei:
        parse_netlist(json.dumps(doc))
    assert ei.value.net == "n3"


def test_loop_and_undeclared():
    loop = {"inputs": ["a"], "outputs": ["x"],
            "gates": [{"id": "g1", "type": "AND2", "in": ["a", "y"], "out": "x"},
                      {"id": "g2", "type": "NOT", "in": ["x"], "out": "y"}]}
    with pytest.raises(CombinationalLoop):
        parse_netlist(loop)
    dangling = {"inputs": ["a"], "outputs": ["x"],
                "gates": [{"id": "g1", "type": "AND2", "in": ["a", "q"], "out": "x"}]}
    with pytest.raises(UndeclaredNet):
        parse_netlist(dangling)


@pytest.mark.parametrize("text", ["{not json", '{"inputs": []}',
                                  ('{"inputs": ["a"], "outputs": ["x"], "gates": '
                                  '[{"id": "g", "type": "MUX", "in": ["a"], "out": "x"}]}'),
                                  ('{"inputs": ["a"], "outputs": ["x"], "gates": '
                                  '[{"id": "g", "type": "AND2", "in": ["a"], "out": "x"}]}')])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse_netlist(text)


def test_word_must_reference_outputs():
    doc = {"inputs": ["a"], "outputs": ["x"], "gates": [{"id": "g", "type": "NOT", "in": ["a"], "out": "x"}],
           "words": [{"name": "w", "bits": ["a"]}]}
    with pytest.raises(UndeclaredNet):
        parse_netlist(doc)


def test_single_gate_order():
    n = parse_netlist({"inputs": ["a"], "outputs": ["x"],
                       "gates": [{"id": "g", "type": "NOT", "in": ["a"], "out": "x"}]})
    assert [g.id for g in topo_order(n)] == ["g"]


def test_adder8_structure_and_addition(fixtures):
    n = fixtures["adder8"]
    assert len(n.gates) == 40
    order = [g.id for g in topo_order(n)]
    # carry-chain gates appear in increasing bit order
    chain = [gid for gid in order if gid.endswith("_c")]
    assert chain == sorted(chain)
    pos = {g.output: i for i, g in enumerate(topo_order(n))}
    for g in n.gates:
        for x in g.inputs:
            if x in pos:
                assert pos[x] < pos[g.output]
    st = evaluate(n, {**_bits("a", 200, 8), **_bits("b", 100, 8), "cin": 0})
    assert word_value(n, "sum", st) == 300


def test_adder4_exhaustive_against_integer_addition(fixtures):
    n = fixtures["adder4"]
    vals = np.arange(1 << 9)
    ins = {}
    for i in range(4):
        ins[f"a{i}"] = (vals >> i) & 1
        ins[f"b{i}"] = (vals >> (4 + i)) & 1
    ins["cin"] = vals >> 8
    st = evaluate_array(n, ins)
    w = n.word("sum")
    got = sum(st[b].astype(int) << i for i, b in enumerate(w.bits))
    assert np.array_equal(got, (vals & 15) + ((vals >> 4) & 15) + (vals >> 8))


def test_dft2_functional(fixtures):
    n = fixtures["dft2"]
    st = evaluate(n, {**_bits("a", 5, 8), **_bits("b", 3, 8)})
    assert (word_value(n, "sum", st), word_value(n, "diff", st)) == (8, 2)
    st = evaluate(n, {**_bits("a", 3, 8), **_bits("b", 200, 8)})
    assert (word_value(n, "sum", st), word_value(n, "diff", st)) == (203, -197)


def test_word_values():
    w = Word("sum", tuple(f"s{i}" for i in range(5)))
    assert w.to_int((0, 0, 0, 0, 1)) == 16
    assert w.to_int((0,) * 5) == 0
    # 111110 written MSB first
    s = Word("d", tuple(f"d{i}" for i in range(6)), signed=True)
    assert s.to_int((0, 1, 1, 1, 1, 1)) == -2
    assert s.to_bits(-2) == (0, 1, 1, 1, 1, 1)


def test_unknown_word_and_missing_input(fixtures):
    n = fixtures["fig1_xor2"]
    with pytest.raises(UnknownWord):
        n.word("nope")
    with pytest.raises(MissingInput):
        evaluate(n, {"A": 1})


def test_xor_truth():
    assert GateKind.XOR2.eval((1, 1)) == 0


@pytest.mark.parametrize("name", ["fig1_xor2", "adder2", "adder4"])
def test_evaluate_matches_truth_table_composition(name, fixtures):
    n = fixtures[name]
    k = len(n.inputs)
    for vec in itertools.product((0, 1), repeat=k):
        st = dict(zip(n.inputs, vec))
        ref = dict(st)
        # recompute by repeated sweeps until every net is known (independent of topo_order)
        pending = list(n.gates)
        while pending:
            left = []
            for g in pending:
                if all(x in ref for x in g.inputs):
                    ref[g.output] = g.kind.truth_table()[int("".join(str(ref[x]) for x in g.inputs), 2)]
                else:
                    left.append(g)
            pending = left
        assert evaluate(n, st) == ref


@pytest.mark.parametrize("name", sorted(BUILDERS))
def test_shipped_fixture_matches_builder(name):
    built = BUILDERS[name]()
    assert (DATA_DIR / f"{name}.json").read_text() == dumps_netlist(built)
    again = parse_netlist(dumps_netlist(built))
    assert to_dict(again) == to_dict(built)


def test_fixture_env_dir(tmp_path, monkeypatch):
    (tmp_path / "mine.json").write_text(dumps_netlist(BUILDERS["fig1_xor2"]()))
    monkeypatch.setenv("VOS_FIXTURES", str(tmp_path))
    assert fixture_path("mine") == tmp_path / "mine.json"
    assert load_fixture("mine").gates == BUILDERS["fig1_xor2"]().gates
