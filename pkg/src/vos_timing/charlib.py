"""State-dependent gate delay characterization tables.

Each entry maps (gate kind, input transition, supply voltage) to the mean
and standard deviation of a Gaussian propagation delay in picoseconds.
Tables are read from / written to CSV with the header
``gate,prev,next,vdd,mu_ps,sigma_ps``; ``prev``/``next`` are bit strings
whose i-th character is the i-th declared gate input.
"""
from __future__ import annotations

import csv
import enum
import io
import itertools
import math
import warnings
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    IncompleteLibrary,
    InvalidVoltage,
    MissingCharEntry,
    ParseError,
    UnknownTransition,
    VoltageOutOfRange,
)

CSV_HEADER = ["gate", "prev", "next", "vdd", "mu_ps", "sigma_ps"]


class GateKind(enum.Enum):
    NOT = "NOT"
    AND2 = "AND2"
    OR2 = "OR2"
    NAND2 = "NAND2"
    NOR2 = "NOR2"
    XOR2 = "XOR2"
    XNOR2 = "XNOR2"

    @property
    def arity(self) -> int:
        return 1 if self is GateKind.NOT else 2

    def eval(self, bits) -> int:
        if self is GateKind.NOT:
            return 1 - bits[0]
        a, b = bits
        return _TRUTH[self](a, b)

    def truth_table(self) -> tuple[int, ...]:
        """Output for each input vector, indexed with input 0 as the MSB."""
        return tuple(self.eval(v) for v in itertools.product((0, 1), repeat=self.arity))


_TRUTH = {
    GateKind.AND2: lambda a, b: a & b,
    GateKind.OR2: lambda a, b: a | b,
    GateKind.NAND2: lambda a, b: 1 - (a & b),
    GateKind.NOR2: lambda a, b: 1 - (a | b),
    GateKind.XOR2: lambda a, b: a ^ b,
    GateKind.XNOR2: lambda a, b: 1 - (a ^ b),
}


def parse_kind(name: str) -> GateKind:
    try:
        return GateKind(name.strip().upper())
    except ValueError:
        raise ParseError(f"unknown gate type {name!r}") from None


@dataclass(frozen=True)
class TransitionPair:
    prev: tuple[int, ...]
    next: tuple[int, ...]

    def __post_init__(self):
        if len(self.prev) != len(self.next):
            raise ValueError("prev and next must have the same length")
        for b in self.prev + self.next:
            if b not in (0, 1):
                raise ValueError(f"not a bit: {b!r}")

    @classmethod
    def from_strings(cls, prev: str, nxt: str) -> TransitionPair:
        return cls(tuple(int(c) for c in prev), tuple(int(c) for c in nxt))

    def __str__(self):
        return "".join(map(str, self.prev)) + "->" + "".join(map(str, self.next))

    @property
    def code(self) -> int:
        """Packed index ``prev << arity | next`` with input 0 as the MSB."""
        n = len(self.prev)
        p = int("".join(map(str, self.prev)), 2)
        q = int("".join(map(str, self.next)), 2)
        return (p << n) | q


def all_transitions(arity: int) -> list[TransitionPair]:
    vecs = list(itertools.product((0, 1), repeat=arity))
    return [TransitionPair(p, n) for p in vecs for n in vecs]


def output_changes(kind: GateKind, tr: TransitionPair) -> bool:
    return kind.eval(tr.prev) != kind.eval(tr.next)


@dataclass(frozen=True)
class CharEntry:
    mu: float
    sigma: float


def _vkey(v: float) -> float:
    return round(float(v), 9)


class CharLib:
    """Immutable (kind, transition, vdd) -> CharEntry table."""

    def __init__(self, entries: dict[tuple[GateKind, TransitionPair, float], CharEntry]):
        self._entries = {(k, tr, _vkey(v)): e for (k, tr, v), e in entries.items()}
        self.voltages = sorted({v for (_, _, v) in self._entries})
        self.kinds = sorted({k for (k, _, _) in self._entries}, key=lambda k: k.value)

    def __len__(self):
        return len(self._entries)

    def __eq__(self, other):
        return isinstance(other, CharLib) and self._entries == other._entries

    def items(self):
        return self._entries.items()

    def missing_keys(self) -> list[tuple[str, str, str, float]]:
        missing = []
        for kind in self.kinds:
            for v in self.voltages:
                for tr in all_transitions(kind.arity):
                    if output_changes(kind, tr) and (kind, tr, v) not in self._entries:
                        missing.append((kind.value, "".join(map(str, tr.prev)),
                                        "".join(map(str, tr.next)), v))
        return missing

    def lookup(self, kind: GateKind, tr: TransitionPair, vdd: float) -> CharEntry:
        if len(tr.prev) != kind.arity:
            raise UnknownTransition(f"{tr} does not fit {kind.value} (arity {kind.arity})")
        if kind not in self.kinds:
            raise MissingCharEntry(f"no characterization for gate {kind.value}")
        v = _vkey(vdd)
        lo, hi = self.voltages[0], self.voltages[-1]
        if v < lo or v > hi:
            raise VoltageOutOfRange(f"vdd {vdd:g} V outside characterized range [{lo:g}, {hi:g}] V")
        hit = self._entries.get((kind, tr, v))
        if hit is not None:
            return hit
        if v in self.voltages:
            raise MissingCharEntry(f"{kind.value} {tr} @ {v:g} V")
        i = next(i for i, g in enumerate(self.voltages) if g > v)
        v0, v1 = self.voltages[i - 1], self.voltages[i]
        e0 = self._entries.get((kind, tr, v0))
        e1 = self._entries.get((kind, tr, v1))
        if e0 is None or e1 is None:
            raise MissingCharEntry(f"{kind.value} {tr} near {v:g} V")
        f = (v - v0) / (v1 - v0)
        return CharEntry(e0.mu + f * (e1.mu - e0.mu), e0.sigma + f * (e1.sigma - e0.sigma))

    def restrict(self, vdd: float) -> CharLib:
        return CharLib({(k, tr, v): e for (k, tr, v), e in self._entries.items() if v == _vkey(vdd)})


def _parse_bits(s: str, lineno: int, source) -> tuple[int, ...]:
    s = s.strip()
    if not s or any(c not in "01" for c in s):
        raise ParseError(f"bad bit string {s!r}", lineno, source)
    return tuple(int(c) for c in s)


def load_charlib(source, check_complete: bool = True) -> CharLib:
    """Read a characterization CSV (path, text stream, or raw text)."""
    name = None
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        name = str(source)
        text = Path(source).read_text()
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows or [c.strip() for c in rows[0]] != CSV_HEADER:
        raise ParseError(f"header must be {','.join(CSV_HEADER)}", 1, name)
    entries = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or (len(row) == 1 and not row[0].strip()) or row[0].lstrip().startswith("#"):
            continue
        if len(row) != 6:
            raise ParseError(f"expected 6 fields, got {len(row)}", lineno, name)
        try:
            kind = parse_kind(row[0])
        except ParseError as e:
            raise ParseError(e.reason, lineno, name) from None
        prev = _parse_bits(row[1], lineno, name)
        nxt = _parse_bits(row[2], lineno, name)
        if len(prev) != kind.arity or len(nxt) != kind.arity:
            raise ParseError(f"{kind.value} needs {kind.arity}-bit transitions", lineno, name)
        try:
            vdd, mu, sigma = float(row[3]), float(row[4]), float(row[5])
        except ValueError:
            raise ParseError("vdd, mu_ps and sigma_ps must be numbers", lineno, name) from None
        if not (math.isfinite(vdd) and vdd > 0):
            raise ParseError(f"vdd must be positive, got {row[3]}", lineno, name)
        if not (math.isfinite(mu) and mu >= 0):
            raise ParseError(f"mu_ps must be >= 0, got {row[4]}", lineno, name)
        if not (math.isfinite(sigma) and sigma > 0):
            raise ParseError(f"sigma_ps must be > 0, got {row[5]}", lineno, name)
        if sigma > mu:
            warnings.warn(f"line {lineno}: sigma {sigma:g} ps exceeds mu {mu:g} ps", stacklevel=2)
        key = (kind, TransitionPair(prev, nxt), _vkey(vdd))
        if key in entries:
            raise ParseError(f"duplicate entry {kind.value} {key[1]} @ {vdd:g} V", lineno, name)
        entries[key] = CharEntry(mu, sigma)
    lib = CharLib(entries)
    if check_complete:
        missing = lib.missing_keys()
        if missing:
            raise IncompleteLibrary(missing)
    return lib


def dumps_charlib(lib: CharLib) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    def order(item):
        (k, tr, v), _ = item
        return (k.value, -v, tr.code)
    for (k, tr, v), e in sorted(lib.items(), key=order):
        w.writerow([k.value, "".join(map(str, tr.prev)), "".join(map(str, tr.next)),
                    repr(v), repr(e.mu), repr(e.sigma)])
    return buf.getvalue()


def save_charlib(lib: CharLib, path) -> None:
    Path(path).write_text(dumps_charlib(lib))


def scale_factor(v: float, vth: float = 0.3, alpha_exp: float = 1.3) -> float:
    """Delay multiplier relative to 1.0 V under an alpha-power law."""
    if v <= vth:
        raise InvalidVoltage(f"vdd {v:g} V must exceed vth {vth:g} V")
    return (v * (1.0 - vth) ** alpha_exp) / (1.0 * (v - vth) ** alpha_exp)


def synth_charlib(nominal: CharLib, vth: float = 0.3, alpha_exp: float = 1.3,
                  voltages: Iterable[float] = (1.0, 0.9, 0.8, 0.7, 0.6)) -> CharLib:
    """Derive a multi-voltage library from a 1.0 V table.

    Both mu and sigma are multiplied by :func:`scale_factor`.
    """
    voltages = list(voltages)
    for v in voltages:
        if v <= vth:
            raise InvalidVoltage(f"vdd {v:g} V must exceed vth {vth:g} V")
    base = {(k, tr): e for (k, tr, v), e in nominal.items() if v == 1.0}
    if not base:
        raise IncompleteLibrary([("*", "*", "*", 1.0)])
    out = {}
    for v in voltages:
        f = scale_factor(v, vth, alpha_exp)
        for (k, tr), e in base.items():
            out[(k, tr, v)] = CharEntry(e.mu * f, e.sigma * f)
    return CharLib(out)


# Nominal 1.0 V rise/fall delays (ps). Synthetic, in the class of a 32nm cell.
_NOMINAL_BASE = {
    GateKind.NOT: (6.0, 5.0),
    GateKind.NAND2: (8.0, 9.0),
    GateKind.NOR2: (11.0, 7.0),
    GateKind.AND2: (11.0, 12.0),
    GateKind.OR2: (13.0, 11.0),
    GateKind.XOR2: (14.0, 15.0),
    GateKind.XNOR2: (15.0, 14.0),
}


def default_nominal() -> CharLib:
    """Hand-written 1.0 V table with state-dependent entries.

    Simultaneous switching of both inputs is 8% slower; a lone switch on
    input 1 is 5% slower than on input 0.  Sigma is 10% of mu.
    """
    entries = {}
    for kind, (rise, fall) in _NOMINAL_BASE.items():
        for tr in all_transitions(kind.arity):
            out0, out1 = kind.eval(tr.prev), kind.eval(tr.next)
            if out0 == out1:
                continue
            mu = rise if out1 == 1 else fall
            changed = [i for i in range(kind.arity) if tr.prev[i] != tr.next[i]]
            if len(changed) == 2:
                mu *= 1.08
            elif changed == [1]:
                mu *= 1.05
            mu = round(mu, 3)
            entries[(kind, tr, 1.0)] = CharEntry(mu, round(0.1 * mu, 4))
    return CharLib(entries)


def default_charlib() -> CharLib:
    """Synthetic library over 1.0 .. 0.6 V used when no table is supplied."""
    return synth_charlib(default_nominal())
