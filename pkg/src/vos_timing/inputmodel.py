"""Primary-input switching statistics."""
from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingInput
from .netlist import Netlist

# Transition order used everywhere: index = prev * 2 + next.
TRANSITIONS = ((0, 0), (0, 1), (1, 0), (1, 1))
UNIFORM = (0.25, 0.25, 0.25, 0.25)


@dataclass(frozen=True)
class InputModel:
    """Independent per-input transition probabilities.

    ``probs[net]`` holds P(0->0), P(0->1), P(1->0), P(1->1).  Inputs not
    listed follow ``default``.
    """
    probs: Mapping[str, tuple[float, float, float, float]] = field(default_factory=dict)
    default: tuple[float, float, float, float] = UNIFORM

    def __post_init__(self):
        for net, p in list(self.probs.items()) + [("<default>", self.default)]:
            if len(p) != 4 or min(p) < 0 or abs(sum(p) - 1.0) > 1e-9:
                raise ValueError(f"transition probabilities for {net} must be 4 values summing to 1")

    def of(self, net: str) -> tuple[float, float, float, float]:
        return tuple(self.probs.get(net, self.default))

    def matrix(self, net: str) -> np.ndarray:
        """2x2 array M[prev, next]."""
        return np.asarray(self.of(net), dtype=float).reshape(2, 2)

    @classmethod
    def uniform(cls) -> InputModel:
        return cls()

    @classmethod
    def pinned(cls, prev: Mapping[str, int], nxt: Mapping[str, int]) -> InputModel:
        """Deterministic stimulus: every input makes exactly one given transition."""
        probs = {}
        for net in prev:
            p = [0.0] * 4
            p[int(prev[net]) * 2 + int(nxt[net])] = 1.0
            probs[net] = tuple(p)
        return cls(probs)

    def is_pinned(self, netlist: Netlist) -> bool:
        return all(max(self.of(n)) == 1.0 for n in netlist.inputs)

    def sample(self, netlist: Netlist, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Draw ``n`` (prev, next) input vector pairs as uint8 arrays [n, n_inputs]."""
        k = len(netlist.inputs)
        prev = np.empty((n, k), dtype=np.uint8)
        nxt = np.empty((n, k), dtype=np.uint8)
        for i, net in enumerate(netlist.inputs):
            p = np.asarray(self.of(net))
            code = rng.choice(4, size=n, p=p / p.sum())
            prev[:, i] = code >> 1
            nxt[:, i] = code & 1
        return prev, nxt


class Stimuli:
    """Explicit set of (prev, next) input vector pairs with optional weights.

    Sampling draws pairs with probability proportional to ``weights``
    (uniform when omitted).  Analysis conditioned on a stimulus set treats
    it as the exact joint input distribution.
    """

    def __init__(self, pairs: Sequence[tuple[Mapping[str, int], Mapping[str, int]]] = (),
                 weights: Sequence[float] | None = None, *, inputs: Sequence[str] | None = None,
                 prev: np.ndarray | None = None, nxt: np.ndarray | None = None):
        if prev is None:
            pairs = list(pairs)
            if not pairs:
                raise ValueError("empty stimulus set")
            inputs = list(pairs[0][0])
            prev = np.array([[p[x] for x in inputs] for p, _ in pairs], dtype=np.uint8)
            nxt = np.array([[q[x] for x in inputs] for _, q in pairs], dtype=np.uint8)
        if prev.shape[0] == 0:
            raise ValueError("empty stimulus set")
        if prev.shape != nxt.shape or prev.shape[1] != len(inputs):
            raise ValueError("stimulus arrays do not match the input list")
        self.inputs = tuple(inputs)
        self.prev = np.asarray(prev, dtype=np.uint8)
        self.next = np.asarray(nxt, dtype=np.uint8)
        if weights is None:
            self.weights = None
        else:
            w = np.asarray(weights, dtype=float)
            if w.shape != (self.prev.shape[0],) or (w < 0).any() or w.sum() <= 0:
                raise ValueError("weights must be non-negative, one per pair, not all zero")
            self.weights = w / w.sum()

    def __len__(self) -> int:
        return self.prev.shape[0]

    @property
    def pairs(self) -> list[tuple[dict[str, int], dict[str, int]]]:
        return [(dict(zip(self.inputs, map(int, p))), dict(zip(self.inputs, map(int, q))))
                for p, q in zip(self.prev, self.next)]

    def arrays(self, netlist: Netlist) -> tuple[np.ndarray, np.ndarray]:
        """(prev, next) columns reordered to the netlist's input order."""
        pos = {n: i for i, n in enumerate(self.inputs)}
        missing = [n for n in netlist.inputs if n not in pos]
        if missing:
            raise MissingInput(f"stimuli lack primary inputs {missing}")
        cols = [pos[n] for n in netlist.inputs]
        return self.prev[:, cols], self.next[:, cols]

    def sample(self, netlist: Netlist, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        prev, nxt = self.arrays(netlist)
        if self.weights is None:
            idx = rng.integers(0, prev.shape[0], size=n)
        else:
            idx = rng.choice(prev.shape[0], size=n, p=self.weights)
        return prev[idx], nxt[idx]
