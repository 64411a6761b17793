"""Monte Carlo dynamic timing analysis: the sampling oracle.

Every sample draws a (prev, next) primary-input vector pair, switches the
inputs at t = 0 and event-simulates the netlist with per-event Gaussian
delays taken from the characterization library:

* a gate reacts to each input event (simultaneous events are one local
  transition) by computing its new truth-table value;
* if that equals the value already scheduled, nothing happens;
* otherwise a pending (not yet fired) output event is cancelled, or, with
  nothing pending, a new event is scheduled after a fresh delay sample for
  the observed local input transition; negative samples clamp to 0.

Samples are processed in fixed-size blocks, each with its own derived seed,
so results do not depend on the number of workers.
"""
from __future__ import annotations

import time
from collections.abc import Iterator, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .charlib import CharLib, TransitionPair, all_transitions, output_changes
from .errors import UnknownNet, VosError
from .inputmodel import TRANSITIONS, InputModel, Stimuli  # noqa: F401  (re-export)
from .netlist import Netlist, evaluate, topo_order
from .timedist import DEFAULT_GRID, DelayDist, GridConfig, from_masses

BLOCK_SIZE = 1 << 16
MAX_EVENTS = 48


@dataclass(frozen=True)
class McConfig:
    n_samples: int = 1_000_000
    seed: int = 1
    vdd: float = 0.7
    t_clk: float = 100.0
    cfg: GridConfig = DEFAULT_GRID
    workers: int = 1
    block_size: int = BLOCK_SIZE

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")


@dataclass
class EventTrace:
    initial: dict[str, int]
    events: dict[str, list[tuple[float, int]]]

    def waveform(self, net: str) -> list[tuple[float, int]]:
        return [(-0.0, self.initial[net])] + list(self.events[net])

    def value_at(self, net: str, t: float) -> int:
        v = self.initial[net]
        for te, ve in self.events[net]:
            if te <= t:
                v = ve
        return v

    def settle_time(self, net: str) -> float:
        ev = self.events[net]
        return ev[-1][0] if ev else 0.0


# ---------------------------------------------------------------- reference

def _local_code(prev_bits, next_bits) -> int:
    return TransitionPair(tuple(prev_bits), tuple(next_bits)).code


def simulate_pair(netlist: Netlist, lib: CharLib, prev_inputs, next_inputs, vdd: float,
                  rng: np.random.Generator) -> EventTrace:
    """Event-simulate one vector pair in plain Python (readable reference)."""
    init = evaluate(netlist, prev_inputs)
    events: dict[str, list[tuple[float, int]]] = {}
    for net in netlist.inputs:
        p, q = int(prev_inputs[net]), int(next_inputs[net])
        events[net] = [(0.0, q)] if p != q else []
    for g in topo_order(netlist):
        streams = [events[x] for x in g.inputs]
        cur = [init[x] for x in g.inputs]
        times = sorted({t for s in streams for t, _ in s})
        out: list[tuple[float, int]] = []
        sched = init[g.output]
        for t in times:
            old = list(cur)
            for i, s in enumerate(streams):
                for te, ve in s:
                    if te == t:
                        cur[i] = ve
            v = g.kind.eval(cur)
            if v == sched:
                continue
            if out and out[-1][0] >= t:
                out.pop()
            else:
                e = lib.lookup(g.kind, TransitionPair(tuple(old), tuple(cur)), vdd)
                d = max(0.0, e.mu + e.sigma * rng.standard_normal())
                out.append((t + d, v))
            sched = v
        events[g.output] = out
    return EventTrace(init, events)


# ---------------------------------------------------------------- compiled

@dataclass
class _Compiled:
    n_nets: int
    in_idx: np.ndarray
    g_in0: np.ndarray
    g_in1: np.ndarray
    g_out: np.ndarray
    g_arity: np.ndarray
    g_tt: np.ndarray
    g_mu: np.ndarray
    g_sig: np.ndarray
    net_index: dict = field(default_factory=dict)


def compile_netlist(netlist: Netlist, lib: CharLib, vdd: float) -> _Compiled:
    nets = netlist.nets
    index = {n: i for i, n in enumerate(nets)}
    order = topo_order(netlist)
    G = len(order)
    g_in0 = np.zeros(G, np.int64)
    g_in1 = np.full(G, -1, np.int64)
    g_out = np.zeros(G, np.int64)
    g_arity = np.zeros(G, np.int64)
    g_tt = np.zeros((G, 4), np.int64)
    g_mu = np.zeros((G, 16))
    g_sig = np.zeros((G, 16))
    cache = {}
    for gi, g in enumerate(order):
        g_in0[gi] = index[g.inputs[0]]
        if g.kind.arity == 2:
            g_in1[gi] = index[g.inputs[1]]
        g_out[gi] = index[g.output]
        g_arity[gi] = g.kind.arity
        tt = g.kind.truth_table()
        g_tt[gi, :len(tt)] = tt
        if g.kind not in cache:
            mu = np.zeros(16)
            sig = np.zeros(16)
            for tr in all_transitions(g.kind.arity):
                if output_changes(g.kind, tr):
                    e = lib.lookup(g.kind, tr, vdd)
                    mu[tr.code], sig[tr.code] = e.mu, e.sigma
            cache[g.kind] = (mu, sig)
        g_mu[gi], g_sig[gi] = cache[g.kind]
    in_idx = np.array([index[n] for n in netlist.inputs], np.int64)
    return _Compiled(len(nets), in_idx, g_in0, g_in1, g_out, g_arity, g_tt, g_mu, g_sig, index)


@numba.njit(cache=True, nogil=True)
def _sim_block(seed, prev, nxt, in_idx, g_in0, g_in1, g_out, g_arity, g_tt, g_mu, g_sig,
               n_nets, watch, t_clk, max_events):
    np.random.seed(seed)
    S = prev.shape[0]
    W = watch.shape[0]
    settle = np.empty((S, W))
    init_v = np.empty((S, W), np.uint8)
    final_v = np.empty((S, W), np.uint8)
    latched = np.empty((S, W), np.uint8)
    ev_t = np.empty((n_nets, max_events))
    ev_v = np.empty((n_nets, max_events), np.uint8)
    ev_n = np.zeros(n_nets, np.int64)
    init = np.zeros(n_nets, np.uint8)
    overflow = 0
    inf = np.inf
    for s in range(S):
        for i in range(in_idx.shape[0]):
            net = in_idx[i]
            init[net] = prev[s, i]
            if prev[s, i] != nxt[s, i]:
                ev_t[net, 0] = 0.0
                ev_v[net, 0] = nxt[s, i]
                ev_n[net] = 1
            else:
                ev_n[net] = 0
        for g in range(g_out.shape[0]):
            a = g_in0[g]
            out = g_out[g]
            if g_arity[g] == 1:
                c0 = init[a]
                sched = g_tt[g, c0]
                init[out] = sched
                cnt = 0
                for k in range(ev_n[a]):
                    t = ev_t[a, k]
                    n0 = ev_v[a, k]
                    v = g_tt[g, n0]
                    if v != sched:
                        if cnt > 0 and ev_t[out, cnt - 1] >= t:
                            cnt -= 1
                        else:
                            code = (c0 << 1) | n0
                            d = g_mu[g, code] + g_sig[g, code] * np.random.standard_normal()
                            d = max(d, 0.0)
                            if cnt >= max_events:
                                overflow += 1
                                cnt -= 1
                            ev_t[out, cnt] = t + d
                            ev_v[out, cnt] = v
                            cnt += 1
                        sched = v
                    c0 = n0
                ev_n[out] = cnt
            else:
                b = g_in1[g]
                c0 = init[a]
                c1 = init[b]
                sched = g_tt[g, c0 * 2 + c1]
                init[out] = sched
                cnt = 0
                i0 = 0
                i1 = 0
                na = ev_n[a]
                nb = ev_n[b]
                while i0 < na or i1 < nb:
                    t0 = ev_t[a, i0] if i0 < na else inf
                    t1 = ev_t[b, i1] if i1 < nb else inf
                    t = min(t1, t0)
                    n0 = c0
                    n1 = c1
                    if t0 == t:
                        n0 = ev_v[a, i0]
                        i0 += 1
                    if t1 == t:
                        n1 = ev_v[b, i1]
                        i1 += 1
                    v = g_tt[g, n0 * 2 + n1]
                    if v != sched:
                        if cnt > 0 and ev_t[out, cnt - 1] >= t:
                            cnt -= 1
                        else:
                            code = (((c0 << 1) | c1) << 2) | ((n0 << 1) | n1)
                            d = g_mu[g, code] + g_sig[g, code] * np.random.standard_normal()
                            d = max(d, 0.0)
                            if cnt >= max_events:
                                overflow += 1
                                cnt -= 1
                            ev_t[out, cnt] = t + d
                            ev_v[out, cnt] = v
                            cnt += 1
                        sched = v
                    c0 = n0
                    c1 = n1
                ev_n[out] = cnt
        for w in range(W):
            net = watch[w]
            n = ev_n[net]
            init_v[s, w] = init[net]
            if n == 0:
                settle[s, w] = -1.0
                final_v[s, w] = init[net]
            else:
                settle[s, w] = ev_t[net, n - 1]
                final_v[s, w] = ev_v[net, n - 1]
            lv = init[net]
            for k in range(n):
                if ev_t[net, k] <= t_clk:
                    lv = ev_v[net, k]
                else:
                    break
            latched[s, w] = lv
    return settle, init_v, final_v, latched, overflow


@dataclass
class McRun:
    """Raw per-sample results for the watched nets (column order = ``nets``)."""
    nets: list[str]
    settle: np.ndarray      # -1 where no event happened
    initial: np.ndarray
    final: np.ndarray
    latched: np.ndarray
    prev_inputs: np.ndarray
    next_inputs: np.ndarray
    runtime_ms: float = 0.0


@dataclass
class VectorSequence:
    """Fixed, ordered vector pairs (columns in netlist input order), simulated as given."""
    prev: np.ndarray
    next: np.ndarray

    def __post_init__(self):
        self.prev = np.ascontiguousarray(self.prev, dtype=np.uint8)
        self.next = np.ascontiguousarray(self.next, dtype=np.uint8)
        if self.prev.shape != self.next.shape or self.prev.ndim != 2:
            raise ValueError("prev and next must be equal-shape 2-D arrays")

    def __len__(self) -> int:
        return self.prev.shape[0]


def simulate_vectors(netlist: Netlist, lib: CharLib, prev: np.ndarray, nxt: np.ndarray,
                     mc: McConfig, nets: Sequence[str]) -> McRun:
    """Simulate the given vector pairs in order; ``mc.n_samples`` is ignored."""
    seq = VectorSequence(prev, nxt)
    if seq.prev.shape[1] != len(netlist.inputs):
        raise ValueError(f"vectors have {seq.prev.shape[1]} columns, netlist has "
                         f"{len(netlist.inputs)} inputs")
    return run_mc(netlist, lib, seq, replace(mc, n_samples=max(len(seq), 1)), nets)


def _block_seeds(seed: int, n_blocks: int) -> list[np.random.SeedSequence]:
    return [np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, b]) for b in range(n_blocks)]


def run_mc(netlist: Netlist, lib: CharLib, stimuli, mc: McConfig, nets: Sequence[str]) -> McRun:
    """Simulate ``mc.n_samples`` vector pairs and collect the watched nets."""
    comp = compile_netlist(netlist, lib, mc.vdd)
    for n in nets:
        if n not in comp.net_index:
            raise UnknownNet(f"no net named {n!r}")
    watch = np.array([comp.net_index[n] for n in nets], np.int64)
    stimuli = stimuli if stimuli is not None else InputModel.uniform()
    if isinstance(stimuli, VectorSequence) and len(stimuli) != mc.n_samples:
        raise ValueError(f"{len(stimuli)} vector pairs but n_samples = {mc.n_samples}")
    t_clk = min(float(mc.t_clk), mc.cfg.t_max)
    n_blocks = -(-mc.n_samples // mc.block_size)
    seqs = _block_seeds(mc.seed, n_blocks)

    def one(b):
        size = min(mc.block_size, mc.n_samples - b * mc.block_size)
        stim_seq, sim_seq = seqs[b].spawn(2)
        if isinstance(stimuli, VectorSequence):
            lo = b * mc.block_size
            prev, nxt = stimuli.prev[lo:lo + size], stimuli.next[lo:lo + size]
        else:
            prev, nxt = stimuli.sample(netlist, size, np.random.default_rng(stim_seq))
        sim_seed = int(sim_seq.generate_state(1)[0])
        res = _sim_block(sim_seed, prev, nxt, comp.in_idx, comp.g_in0, comp.g_in1, comp.g_out,
                         comp.g_arity, comp.g_tt, comp.g_mu, comp.g_sig, comp.n_nets, watch,
                         t_clk, MAX_EVENTS)
        if res[4]:
            raise VosError(f"event buffer overflow in block {b}; raise MAX_EVENTS")
        return prev, nxt, res

    t0 = time.perf_counter()
    if mc.workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(mc.workers) as ex:
            parts = list(ex.map(one, range(n_blocks)))
    else:
        parts = [one(b) for b in range(n_blocks)]
    elapsed = (time.perf_counter() - t0) * 1e3
    cat = lambda i: np.concatenate([p[2][i] for p in parts])
    settle = cat(0)
    # saturate late events at t_max, like the analytical grid does
    settle = np.where(settle > mc.cfg.t_max, mc.cfg.t_max, settle)
    return McRun(list(nets), settle, cat(1), cat(2), cat(3),
                 np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]),
                 elapsed)


def warmup() -> None:
    """Trigger JIT compilation so timings exclude it."""
    z = np.zeros((1, 1), np.uint8)
    _sim_block(1, z, z, np.zeros(1, np.int64), np.zeros(0, np.int64), np.zeros(0, np.int64),
               np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, 4), np.int64),
               np.zeros((0, 16)), np.zeros((0, 16)), 1, np.zeros(1, np.int64), 0.0, 4)


@dataclass
class McHistogram:
    dist: DelayDist
    counts: dict[tuple[int, int], int]
    n_samples: int
    per_transition: dict[tuple[int, int], DelayDist]
    runtime_ms: float = 0.0

    @property
    def alpha(self) -> dict[tuple[int, int], float]:
        return {tr: c / self.n_samples for tr, c in self.counts.items()}

    def to_text(self) -> str:
        return self.dist.to_text()


def histogram_from_settle(settle: np.ndarray, cfg: GridConfig) -> DelayDist:
    n = settle.shape[0]
    events = settle[settle >= 0]
    atom = (n - events.size) / n
    idx = np.clip(np.rint(events / cfg.dt).astype(np.int64), 0, cfg.n - 1)
    masses = np.bincount(idx, minlength=cfg.n).astype(float) / n
    return from_masses(cfg, atom, masses)


def mc_histogram(netlist: Netlist, lib: CharLib, im, mc: McConfig, output: str) -> McHistogram:
    """Empirical settling-time distribution of ``output`` plus transition counts."""
    run = run_mc(netlist, lib, im, mc, [output])
    settle = run.settle[:, 0]
    ini = run.initial[:, 0]
    fin = run.final[:, 0]
    counts = {}
    per = {}
    for tr in TRANSITIONS:
        mask = (ini == tr[0]) & (fin == tr[1])
        c = int(mask.sum())
        counts[tr] = c
        if c:
            per[tr] = histogram_from_settle(settle[mask], mc.cfg)
    return McHistogram(histogram_from_settle(settle, mc.cfg), counts, mc.n_samples, per,
                       run.runtime_ms)


def _word_values(bits: np.ndarray, signed: bool) -> np.ndarray:
    w = bits.shape[1]
    v = (bits.astype(np.int64) << np.arange(w, dtype=np.int64)).sum(axis=1)
    if signed:
        v = np.where(bits[:, -1] == 1, v - (1 << w), v)
    return v


@dataclass
class LatchedStream:
    ideal: np.ndarray
    latched: np.ndarray
    previous: np.ndarray
    runtime_ms: float = 0.0

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return zip(self.ideal.tolist(), self.latched.tolist())

    def to_csv(self) -> str:
        lines = ["sample,ideal,latched"]
        lines += [f"{i},{a},{b}" for i, (a, b) in enumerate(zip(self.ideal, self.latched))]
        return "\n".join(lines) + "\n"

    def error_pmf(self) -> dict[int, float]:
        err = self.latched - self.ideal
        vals, cnt = np.unique(err, return_counts=True)
        return {int(v): c / err.size for v, c in zip(vals, cnt)}


def mc_latched_outputs(netlist: Netlist, lib: CharLib, im, mc: McConfig, word: str) -> LatchedStream:
    """Per sample: (ideal word value, word value latched at T_clk)."""
    w = netlist.word(word)
    run = run_mc(netlist, lib, im, mc, list(w.bits))
    return LatchedStream(_word_values(run.final, w.signed), _word_values(run.latched, w.signed),
                         _word_values(run.initial, w.signed), run.runtime_ms)
