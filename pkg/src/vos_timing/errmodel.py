"""Error-free circuit plus error injector.

A timing violation on an output bit leaves that bit at its previous value.
For an output word moving from ``initial`` to ``final``, each changing bit
is late with its own probability; enumerating the late/on-time subsets
gives the distribution of the arithmetic error
``latched value - final value``.  An :class:`InjectorTable` stores these
distributions per (initial, final) context and :func:`inject` adds sampled
errors to a clean output stream.
"""
from __future__ import annotations

import json
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .charlib import CharLib
from .errors import MissingContext, OutOfRange, TooManyBits
from .inputmodel import InputModel, Stimuli
from .netlist import Netlist, Word, evaluate_array
from .ssta import STATIC, AnalysisResult, analyze, violation_prob
from .timedist import DEFAULT_GRID, GridConfig

MAX_CHANGING_BITS = 24
# Above this many primary inputs word-conditioned stimuli are not enumerated.
MAX_ENUM_INPUTS = 20
CONDITIONING = ("word", "stationary")


@dataclass(frozen=True)
class ErrorPMF:
    """Distribution of the signed error magnitude for one word transition."""
    pmf: Mapping[int, float]
    word: str = ""
    initial: int = 0
    final: int = 0
    t_clk: float | None = None
    vdd: float | None = None

    def __post_init__(self):
        pmf = {int(k): float(v) for k, v in self.pmf.items()}
        pmf.setdefault(0, 0.0)
        if any(v < 0 for v in pmf.values()):
            raise ValueError("negative probability in error PMF")
        s = sum(pmf.values())
        if abs(s - 1.0) > 1e-6:
            raise ValueError(f"error PMF sums to {s}")
        object.__setattr__(self, "pmf", dict(sorted(pmf.items())))

    def __getitem__(self, magnitude: int) -> float:
        return self.pmf.get(int(magnitude), 0.0)

    @property
    def support(self) -> set[int]:
        """Magnitudes with non-zero probability."""
        return {k for k, v in self.pmf.items() if v > 0}

    def mean(self) -> float:
        return sum(k * v for k, v in self.pmf.items())

    def tv(self, other: Mapping[int, float]) -> float:
        keys = set(self.pmf) | set(other)
        return 0.5 * sum(abs(self.pmf.get(k, 0.0) - other.get(k, 0.0)) for k in keys)

    @cached_property
    def sampler(self) -> tuple[np.ndarray, np.ndarray] | None:
        """(magnitudes, cumulative probabilities), or None when error-free."""
        if self.support <= {0}:
            return None
        mags = np.fromiter(self.pmf.keys(), dtype=np.int64)
        return mags, np.cumsum(np.fromiter(self.pmf.values(), dtype=float))

    def to_csv(self) -> str:
        return "magnitude,probability\n" + "".join(f"{k},{v!r}\n" for k, v in self.pmf.items())


def _changing(word: Word, initial: int, final: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    try:
        return word.to_bits(initial), word.to_bits(final)
    except ValueError as e:
        raise OutOfRange(str(e)) from None


def bit_violation_probs(result: AnalysisResult, word: str, initial: int, final: int,
                        t_clk: float) -> list[float]:
    """Per bit (LSB first): probability that the bit settles after ``t_clk``.

    Bits that do not change between ``initial`` and ``final`` never violate.
    The answer reflects whatever conditioning ``result`` was computed under.
    """
    w = result.netlist.word(word)
    if not 0 <= t_clk <= result.cfg.t_max:
        raise OutOfRange(f"T_clk = {t_clk} outside [0, {result.cfg.t_max}]")
    b0, b1 = _changing(w, initial, final)
    out = []
    for net, i, f in zip(w.bits, b0, b1):
        out.append(0.0 if i == f else violation_prob(result, net, t_clk)[(i, f)])
    return out


def error_pmf(bit_probs: Sequence[float], initial: int, final: int, word: Word | None = None,
              *, t_clk: float | None = None, vdd: float | None = None) -> ErrorPMF:
    """Error magnitude distribution assuming bits are late independently.

    A late bit latches its initial value.  ``word`` defaults to an unsigned
    word as wide as ``bit_probs``.
    """
    if word is None:
        word = Word("", tuple(f"b{i}" for i in range(len(bit_probs))))
    if len(bit_probs) != word.width:
        raise ValueError(f"{len(bit_probs)} bit probabilities for a {word.width}-bit word")
    if any(not 0.0 <= p <= 1.0 for p in bit_probs):
        raise ValueError("bit probabilities must lie in [0, 1]")
    b0, b1 = _changing(word, initial, final)
    changing = [i for i in range(word.width) if b0[i] != b1[i]]
    if len(changing) > MAX_CHANGING_BITS:
        raise TooManyBits(f"{len(changing)} changing bits exceed the enumeration bound of "
                          f"{MAX_CHANGING_BITS}")
    mags = np.zeros(1, dtype=np.int64)
    probs = np.ones(1)
    for i in changing:
        p = float(bit_probs[i])
        if p == 0.0:
            continue
        weight = -(1 << i) if (word.signed and i == word.width - 1) else (1 << i)
        # latching the initial bit instead of the final one
        delta = (b0[i] - b1[i]) * weight
        if p == 1.0:
            mags = mags + delta
            continue
        mags = np.concatenate((mags, mags + delta))
        probs = np.concatenate((probs * (1.0 - p), probs * p))
    uniq, inv = np.unique(mags, return_inverse=True)
    agg = np.bincount(inv.ravel(), weights=probs)
    pmf = {int(m): float(v) for m, v in zip(uniq, agg) if v > 0}
    return ErrorPMF(pmf, word.name, initial, final, t_clk, vdd)


def word_stimuli(netlist: Netlist, word: str, initial: int, final: int,
                 im: InputModel | None = None) -> Stimuli:
    """All input vector pairs that move ``word`` from ``initial`` to ``final``.

    Pairs are weighted by their probability under ``im``, so analysis on
    the result is the input model conditioned on the word transition.
    """
    w = netlist.word(word)
    _changing(w, initial, final)
    n_in = len(netlist.inputs)
    if n_in > MAX_ENUM_INPUTS:
        raise TooManyBits(f"{n_in} primary inputs are too many to enumerate word contexts")
    im = im or InputModel.uniform()
    x = np.arange(1 << n_in, dtype=np.int64)
    cols = {n: ((x >> i) & 1).astype(bool) for i, n in enumerate(netlist.inputs)}
    vals = evaluate_array(netlist, cols)
    v = np.zeros(x.size, np.int64)
    for i, b in enumerate(w.bits):
        v |= vals[b].astype(np.int64) << i
    if w.signed:
        v = np.where(v >> (w.width - 1) & 1, v - (1 << w.width), v)
    src = np.flatnonzero(v == initial)
    dst = np.flatnonzero(v == final)
    if src.size == 0 or dst.size == 0:
        raise OutOfRange(f"word {word!r} cannot move {initial} -> {final}")
    pi, pj = np.meshgrid(src, dst, indexing="ij")
    pi, pj = pi.ravel(), pj.ravel()
    bits = np.arange(n_in)
    prev = ((pi[:, None] >> bits) & 1).astype(np.uint8)
    nxt = ((pj[:, None] >> bits) & 1).astype(np.uint8)
    weights = np.ones(pi.size)
    for k, net in enumerate(netlist.inputs):
        m = im.matrix(net)
        weights *= m[prev[:, k], nxt[:, k]]
    if weights.sum() <= 0:
        raise OutOfRange(f"word transition {initial} -> {final} has zero probability")
    return Stimuli(weights=weights, inputs=netlist.inputs, prev=prev, nxt=nxt)


@dataclass
class InjectorTable:
    """Error PMFs per (initial, final) word value for one word, T_clk and vdd.

    Missing contexts are computed through ``filler`` when one is set,
    otherwise looking them up raises :class:`MissingContext`.  Contexts with
    ``initial == final`` never err and need no entry.
    """
    word: str
    t_clk: float
    vdd: float
    pmfs: dict[tuple[int, int], ErrorPMF] = field(default_factory=dict)
    filler: Callable[[int, int], ErrorPMF] | None = field(default=None, repr=False)

    def get(self, initial: int, final: int) -> ErrorPMF:
        key = (int(initial), int(final))
        hit = self.pmfs.get(key)
        if hit is not None:
            return hit
        if key[0] == key[1]:
            return ErrorPMF({0: 1.0}, self.word, key[0], key[1], self.t_clk, self.vdd)
        if self.filler is None:
            raise MissingContext(f"no error PMF for {self.word} {key[0]} -> {key[1]}")
        pmf = self.pmfs[key] = self.filler(*key)
        return pmf

    def fill(self, contexts: Iterable[tuple[int, int]]) -> InjectorTable:
        for i, f in contexts:
            self.get(i, f)
        return self

    def to_json(self) -> str:
        body = {"word": self.word, "t_clk_ps": self.t_clk, "vdd": self.vdd,
                "contexts": {f"{i}:{f}": {str(k): v for k, v in p.pmf.items()}
                             for (i, f), p in sorted(self.pmfs.items())}}
        return json.dumps(body, indent=1, sort_keys=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> InjectorTable:
        d = json.loads(text)
        t = cls(d["word"], float(d["t_clk_ps"]), float(d["vdd"]))
        for key, pmf in d["contexts"].items():
            i, f = (int(x) for x in key.split(":"))
            t.pmfs[(i, f)] = ErrorPMF({int(k): v for k, v in pmf.items()}, t.word, i, f,
                                      t.t_clk, t.vdd)
        return t


class _StationaryBits:
    """Per-bit violation probabilities from one unconditioned analysis."""

    def __init__(self, result: AnalysisResult, word: Word, t_clk: float):
        self.word = word
        self.p = []
        for net in word.bits:
            v = violation_prob(result, net, t_clk)
            self.p.append({tr: v[tr] for tr in v if tr not in STATIC})

    def __call__(self, initial: int, final: int) -> list[float]:
        b0, b1 = _changing(self.word, initial, final)
        return [0.0 if i == f else self.p[k][(i, f)] for k, (i, f) in enumerate(zip(b0, b1))]


def table_from_analysis(result: AnalysisResult, word: str, t_clk: float) -> InjectorTable:
    """Table whose every context uses the per-bit probabilities of ``result``."""
    w = result.netlist.word(word)
    if not 0 <= t_clk <= result.cfg.t_max:
        raise OutOfRange(f"T_clk = {t_clk} outside [0, {result.cfg.t_max}]")
    bits = _StationaryBits(result, w, t_clk)

    def fill(i: int, f: int) -> ErrorPMF:
        return error_pmf(bits(i, f), i, f, w, t_clk=t_clk, vdd=result.vdd)

    return InjectorTable(word, float(t_clk), float(result.vdd), filler=fill)


def injector_table(netlist: Netlist, lib: CharLib, word: str, t_clk: float, vdd: float = 0.7,
                   cfg: GridConfig = DEFAULT_GRID, im: InputModel | None = None,
                   conditioning: str = "word", contexts: Iterable[tuple[int, int]] = (),
                   corr_mode: str = "mean-step") -> InjectorTable:
    """Table with on-demand fill.

    ``conditioning="word"`` analyzes the circuit once per context under the
    input model restricted to pairs producing that word transition;
    ``"stationary"`` uses one analysis under the plain input model for every
    context.
    """
    if conditioning not in CONDITIONING:
        raise ValueError(f"conditioning must be one of {CONDITIONING}")
    w = netlist.word(word)
    if not 0 <= t_clk <= cfg.t_max:
        raise OutOfRange(f"T_clk = {t_clk} outside [0, {cfg.t_max}]")
    if conditioning == "stationary":
        res = analyze(netlist, lib, im, vdd, cfg, corr_mode)
        return table_from_analysis(res, word, t_clk).fill(contexts)

    def fill(i: int, f: int) -> ErrorPMF:
        res = analyze(netlist, lib, word_stimuli(netlist, word, i, f, im), vdd, cfg, corr_mode)
        return error_pmf(bit_violation_probs(res, word, i, f, t_clk), i, f, w, t_clk=t_clk, vdd=vdd)

    return InjectorTable(word, float(t_clk), float(vdd), filler=fill).fill(contexts)


def inject(clean_stream: Sequence[int], table: InjectorTable, seed: int,
           initial: int = 0) -> np.ndarray:
    """Add sampled errors to a clean stream of word values.

    The context of element ``k`` is (clean[k-1], clean[k]) with
    ``clean[-1] = initial``.  One uniform draw per element, inverse-CDF
    sampled, so the output depends only on the stream, table and seed.
    """
    clean = np.asarray(clean_stream, dtype=np.int64)
    out = clean.copy()
    if clean.size == 0:
        return out
    prev = np.concatenate(([initial], clean[:-1]))
    u = np.random.default_rng(seed).random(clean.size)
    moving = prev != clean
    if not moving.any():
        return out
    idx = np.flatnonzero(moving)
    # encode (prev, clean) as one integer so the grouping is a 1-D unique
    lo = min(int(prev.min()), int(clean.min()))
    span = max(int(prev.max()), int(clean.max())) - lo + 1
    keys = (prev[idx] - lo) * span + (clean[idx] - lo)
    uniq, inv = np.unique(keys, return_inverse=True)
    for c, key in enumerate(uniq.tolist()):
        smp = table.get(key // span + lo, key % span + lo).sampler
        if smp is None:
            continue
        mags, cdf = smp
        sel = idx[inv == c]
        k = np.searchsorted(cdf, u[sel] * cdf[-1], side="right")
        out[sel] += mags[np.minimum(k, mags.size - 1)]
    return out

