"""Combinational gate-level netlists: JSON I/O, validation, evaluation.

File format::

    {"inputs": ["a", "b"], "outputs": ["y"],
     "gates": [{"id": "g1", "type": "XOR2", "in": ["a", "b"], "out": "y"}],
     "words": [{"name": "y", "bits": ["y"], "signed": false}]}

Word bits are listed LSB first.
"""
from __future__ import annotations

import heapq
import json
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .charlib import GateKind, parse_kind
from .errors import (
    CombinationalLoop,
    MissingInput,
    MultipleDrivers,
    ParseError,
    UndeclaredNet,
    UnknownWord,
)


@dataclass(frozen=True)
class Gate:
    id: str
    kind: GateKind
    inputs: tuple[str, ...]
    output: str


@dataclass(frozen=True)
class Word:
    name: str
    bits: tuple[str, ...]
    signed: bool = False

    @property
    def width(self) -> int:
        return len(self.bits)

    def to_int(self, bits) -> int:
        v = sum(int(b) << i for i, b in enumerate(bits))
        if self.signed and bits[-1]:
            v -= 1 << self.width
        return v

    def to_bits(self, value: int) -> tuple[int, ...]:
        lo, hi = self.range
        if not lo <= value <= hi:
            raise ValueError(f"{value} does not fit word {self.name!r} [{lo}, {hi}]")
        u = value & ((1 << self.width) - 1)
        return tuple((u >> i) & 1 for i in range(self.width))

    @property
    def range(self) -> tuple[int, int]:
        if self.signed:
            return -(1 << (self.width - 1)), (1 << (self.width - 1)) - 1
        return 0, (1 << self.width) - 1


@dataclass(frozen=True)
class Netlist:
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    gates: tuple[Gate, ...]
    words: tuple[Word, ...] = ()
    name: str = ""
    _order: tuple[Gate, ...] = field(default=(), repr=False, compare=False)

    @property
    def nets(self) -> list[str]:
        return list(self.inputs) + [g.output for g in self.gates]

    def driver(self, net: str) -> Gate | None:
        for g in self.gates:
            if g.output == net:
                return g
        return None

    def word(self, name: str) -> Word:
        for w in self.words:
            if w.name == name:
                return w
        raise UnknownWord(f"no word named {name!r}")

    def gate(self, gid: str) -> Gate:
        for g in self.gates:
            if g.id == gid:
                return g
        raise KeyError(gid)


def _find_cycle(gates: list[Gate], drivers: dict[str, Gate]) -> list[str]:
    state: dict[str, int] = {}
    stack: list[str] = []

    def visit(g: Gate):
        state[g.id] = 1
        stack.append(g.id)
        for net in g.inputs:
            d = drivers.get(net)
            if d is None:
                continue
            if state.get(d.id) == 1:
                return stack[stack.index(d.id):] + [d.id]
            if d.id not in state:
                found = visit(d)
                if found:
                    return found
        stack.pop()
        state[g.id] = 2
        return None

    for g in sorted(gates, key=lambda g: g.id):
        if g.id not in state:
            found = visit(g)
            if found:
                return found
    return []


def _build(inputs, outputs, gates, words, name="") -> Netlist:
    drivers: dict[str, Gate] = {}
    seen_inputs = set()
    for net in inputs:
        if net in seen_inputs:
            raise MultipleDrivers(net)
        seen_inputs.add(net)
    ids = set()
    for g in gates:
        if g.id in ids:
            raise ParseError(f"duplicate gate id {g.id!r}")
        ids.add(g.id)
        if len(g.inputs) != g.kind.arity:
            raise ParseError(f"gate {g.id}: {g.kind.value} takes {g.kind.arity} inputs, got {len(g.inputs)}")
        if g.output in drivers or g.output in seen_inputs:
            raise MultipleDrivers(g.output)
        drivers[g.output] = g
    driven = seen_inputs | set(drivers)
    for g in gates:
        for net in g.inputs:
            if net not in driven:
                raise UndeclaredNet(f"gate {g.id} reads undriven net {net!r}")
    for net in outputs:
        if net not in driven:
            raise UndeclaredNet(f"primary output {net!r} is not driven")
    cycle = _find_cycle(list(gates), drivers)
    if cycle:
        raise CombinationalLoop(cycle)
    outs = set(outputs)
    names = set()
    for w in words:
        if w.name in names:
            raise ParseError(f"duplicate word {w.name!r}")
        names.add(w.name)
        if len(set(w.bits)) != len(w.bits):
            raise ParseError(f"word {w.name!r} repeats a bit")
        for b in w.bits:
            if b not in outs:
                raise UndeclaredNet(f"word {w.name!r} bit {b!r} is not a primary output")
    nl = Netlist(tuple(inputs), tuple(outputs), tuple(gates), tuple(words), name)
    object.__setattr__(nl, "_order", tuple(_topo(nl)))
    return nl


def _topo(n: Netlist) -> list[Gate]:
    drivers = {g.output: g for g in n.gates}
    readers: dict[str, list[Gate]] = {}
    indeg = {}
    for g in n.gates:
        deps = {drivers[x].id for x in g.inputs if x in drivers}
        indeg[g.id] = len(deps)
        for d in deps:
            readers.setdefault(d, []).append(g)
    heap = [g.id for g in n.gates if indeg[g.id] == 0]
    heapq.heapify(heap)
    by_id = {g.id: g for g in n.gates}
    order = []
    while heap:
        gid = heapq.heappop(heap)
        order.append(by_id[gid])
        for r in readers.get(gid, ()):
            indeg[r.id] -= 1
            if indeg[r.id] == 0:
                heapq.heappush(heap, r.id)
    return order


def topo_order(n: Netlist) -> list[Gate]:
    """Gates ordered so drivers precede readers; ties go to the smaller id."""
    return list(n._order)


def from_dict(data: Mapping, name: str = "") -> Netlist:
    try:
        inputs = [str(x) for x in data["inputs"]]
        outputs = [str(x) for x in data["outputs"]]
        gates = []
        for i, g in enumerate(data["gates"]):
            gates.append(Gate(str(g["id"]), parse_kind(g["type"]),
                              tuple(str(x) for x in g["in"]), str(g["out"])))
        words = [Word(str(w["name"]), tuple(str(b) for b in w["bits"]), bool(w.get("signed", False)))
                 for w in data.get("words", [])]
    except (KeyError, TypeError) as e:
        raise ParseError(f"malformed netlist: {e!r}") from None
    return _build(inputs, outputs, gates, words, name)


def parse_netlist(source) -> Netlist:
    """Load a netlist from a JSON path, JSON text, or an already-decoded dict."""
    if isinstance(source, Mapping):
        return from_dict(source)
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        path = Path(source)
        text = path.read_text()
        name = path.stem
    else:
        text, name = source, ""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", e.lineno, name or None) from None
    return from_dict(data, name)


def to_dict(n: Netlist) -> dict:
    return {
        "inputs": list(n.inputs),
        "outputs": list(n.outputs),
        "gates": [{"id": g.id, "type": g.kind.value, "in": list(g.inputs), "out": g.output}
                  for g in n.gates],
        "words": [{"name": w.name, "bits": list(w.bits), "signed": w.signed} for w in n.words],
    }


def dumps_netlist(n: Netlist) -> str:
    return json.dumps(to_dict(n), indent=1) + "\n"


def evaluate(n: Netlist, inputs: Mapping[str, int]) -> dict[str, int]:
    """Zero-delay logic values of every net."""
    state = {}
    for net in n.inputs:
        if net not in inputs:
            raise MissingInput(f"no value for primary input {net!r}")
        state[net] = int(inputs[net]) & 1
    for g in n._order:
        state[g.output] = g.kind.eval([state[x] for x in g.inputs])
    return state


_NP_OPS = {
    GateKind.AND2: lambda a, b: a & b,
    GateKind.OR2: lambda a, b: a | b,
    GateKind.NAND2: lambda a, b: ~(a & b),
    GateKind.NOR2: lambda a, b: ~(a | b),
    GateKind.XOR2: lambda a, b: a ^ b,
    GateKind.XNOR2: lambda a, b: ~(a ^ b),
}


def evaluate_array(n: Netlist, inputs: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Bit-parallel evaluation over boolean arrays of equal shape."""
    state = {}
    for net in n.inputs:
        if net not in inputs:
            raise MissingInput(f"no value for primary input {net!r}")
        state[net] = np.asarray(inputs[net], dtype=bool)
    for g in n._order:
        if g.kind is GateKind.NOT:
            state[g.output] = ~state[g.inputs[0]]
        else:
            state[g.output] = _NP_OPS[g.kind](state[g.inputs[0]], state[g.inputs[1]])
    return state


def word_value(n: Netlist, word: str, state: Mapping[str, int]) -> int:
    w = n.word(word)
    return w.to_int([state[b] for b in w.bits])


def input_cone(n: Netlist) -> dict[str, frozenset[str]]:
    """Primary inputs each net depends on."""
    cone = {net: frozenset([net]) for net in n.inputs}
    for g in n._order:
        s = frozenset()
        for x in g.inputs:
            s |= cone[x]
        cone[g.output] = s
    return cone
