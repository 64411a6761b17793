"""Programmatic builders for the shipped example circuits.

The JSON files under ``vos_timing/data`` are written by :func:`write_all`;
tests rebuild them here and compare.
"""
from __future__ import annotations

import os
from pathlib import Path

from .charlib import GateKind, default_charlib, dumps_charlib
from .netlist import Gate, Netlist, Word, _build, dumps_netlist, parse_netlist

DATA_DIR = Path(__file__).parent / "data"
DEFAULT_CHARLIB = DATA_DIR / "default_charlib.csv"
FIXTURE_ENV = "VOS_FIXTURES"


def fixture_dir() -> Path:
    return Path(os.environ.get(FIXTURE_ENV, DATA_DIR))


def fixture_path(name: str) -> Path:
    """Resolve ``name`` as given, else inside the fixture directory."""
    p = Path(name)
    if p.exists():
        return p
    for cand in (fixture_dir() / name, fixture_dir() / f"{name}.json", DATA_DIR / name,
                 DATA_DIR / f"{name}.json"):
        if cand.exists():
            return cand
    return p


def load_fixture(name: str) -> Netlist:
    return parse_netlist(fixture_path(name))


def fig1_xor2() -> Netlist:
    """Two cascaded XOR gates: Y1 = A ^ B, Y2 = Y1 ^ C."""
    gates = [Gate("F1", GateKind.XOR2, ("A", "B"), "Y1"),
             Gate("F2", GateKind.XOR2, ("Y1", "C"), "Y2")]
    return _build(["A", "B", "C"], ["Y2"], gates, [Word("y", ("Y2",))], "fig1_xor2")


def _full_adder(i: int, a: str, b: str, cin: str, s: str, cout: str) -> list[Gate]:
    p = f"b{i:02d}"
    return [
        Gate(f"{p}_x", GateKind.XOR2, (a, b), f"{p}_x"),
        Gate(f"{p}_s", GateKind.XOR2, (f"{p}_x", cin), s),
        Gate(f"{p}_g", GateKind.AND2, (a, b), f"{p}_g"),
        Gate(f"{p}_p", GateKind.AND2, (f"{p}_x", cin), f"{p}_p"),
        Gate(f"{p}_c", GateKind.OR2, (f"{p}_g", f"{p}_p"), cout),
    ]


def ripple_adder(nbits: int) -> Netlist:
    """Textbook ripple-carry adder with a carry-in: 5 gates per bit.

    Output word ``sum`` is ``s0 .. s{n-1}, cout`` (n + 1 bits, unsigned).
    """
    a = [f"a{i}" for i in range(nbits)]
    b = [f"b{i}" for i in range(nbits)]
    gates = []
    carry = "cin"
    sums = []
    for i in range(nbits):
        cout = "cout" if i == nbits - 1 else f"c{i + 1}"
        gates += _full_adder(i, a[i], b[i], carry, f"s{i}", cout)
        sums.append(f"s{i}")
        carry = cout
    inputs = a + b + ["cin"]
    outputs = sums + ["cout"]
    return _build(inputs, outputs, gates, [Word("sum", tuple(outputs))], f"adder{nbits}")


def dft2(width: int = 8) -> Netlist:
    """2-point DFT butterfly: an adder and a subtractor on two unsigned words.

    Words: ``sum`` = a + b (width + 1 bits, unsigned) and ``diff`` = a - b
    (width + 1 bits, two's complement).
    """
    a = [f"a{i}" for i in range(width)]
    b = [f"b{i}" for i in range(width)]
    gates = []
    # adder: half adder at bit 0, then full adders
    gates += [Gate("add00_s", GateKind.XOR2, (a[0], b[0]), "s0"),
              Gate("add00_c", GateKind.AND2, (a[0], b[0]), "add_c1")]
    for i in range(1, width):
        p = f"add{i:02d}"
        cin = f"add_c{i}"
        cout = f"s{width}" if i == width - 1 else f"add_c{i + 1}"
        gates += [
            Gate(f"{p}_x", GateKind.XOR2, (a[i], b[i]), f"{p}_x"),
            Gate(f"{p}_s", GateKind.XOR2, (f"{p}_x", cin), f"s{i}"),
            Gate(f"{p}_g", GateKind.AND2, (a[i], b[i]), f"{p}_g"),
            Gate(f"{p}_p", GateKind.AND2, (f"{p}_x", cin), f"{p}_p"),
            Gate(f"{p}_c", GateKind.OR2, (f"{p}_g", f"{p}_p"), cout),
        ]
    # subtractor: half subtractor at bit 0, then full subtractors (borrow chain)
    gates += [Gate("sub00_d", GateKind.XOR2, (a[0], b[0]), "d0"),
              Gate("sub00_na", GateKind.NOT, (a[0],), "sub00_na"),
              Gate("sub00_b", GateKind.AND2, ("sub00_na", b[0]), "sub_b1")]
    for i in range(1, width):
        p = f"sub{i:02d}"
        bin_ = f"sub_b{i}"
        bout = f"d{width}" if i == width - 1 else f"sub_b{i + 1}"
        gates += [
            Gate(f"{p}_x", GateKind.XOR2, (a[i], b[i]), f"{p}_x"),
            Gate(f"{p}_d", GateKind.XOR2, (f"{p}_x", bin_), f"d{i}"),
            Gate(f"{p}_na", GateKind.NOT, (a[i],), f"{p}_na"),
            Gate(f"{p}_g", GateKind.AND2, (f"{p}_na", b[i]), f"{p}_g"),
            Gate(f"{p}_xn", GateKind.NOT, (f"{p}_x",), f"{p}_xn"),
            Gate(f"{p}_p", GateKind.AND2, (f"{p}_xn", bin_), f"{p}_p"),
            Gate(f"{p}_b", GateKind.OR2, (f"{p}_g", f"{p}_p"), bout),
        ]
    sums = [f"s{i}" for i in range(width + 1)]
    diffs = [f"d{i}" for i in range(width + 1)]
    words = [Word("sum", tuple(sums)), Word("diff", tuple(diffs), signed=True)]
    return _build(a + b, sums + diffs, gates, words, "dft2")


BUILDERS = {
    "fig1_xor2": fig1_xor2,
    "adder2": lambda: ripple_adder(2),
    "adder4": lambda: ripple_adder(4),
    "adder8": lambda: ripple_adder(8),
    "dft2": dft2,
}


def write_all(directory: Path = DATA_DIR) -> None:
    """Regenerate the shipped netlists and the default characterization table."""
    directory.mkdir(parents=True, exist_ok=True)
    for name, build in BUILDERS.items():
        (directory / f"{name}.json").write_text(dumps_netlist(build()))
    (directory / DEFAULT_CHARLIB.name).write_text(dumps_charlib(default_charlib()))
