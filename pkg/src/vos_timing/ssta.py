"""State-dependent statistical timing propagation.

Every net carries a :class:`NetProfile`: for each of its four transitions
(0->0, 0->1, 1->0, 1->1) the probability ``alpha`` of that transition and
the conditional distribution of the time at which the net settles.  A gate
combines its input profiles joint transition by joint transition:

* no input changes: the output keeps its value, zero delay;
* one input changes: the arrival is convolved with the gate's Gaussian
  delay for the local transition, or the output stays put;
* both inputs change: the earlier input moves the gate to an intermediate
  input vector.  Depending on the truth table at (prev, mid, next) the
  output is decided by the first arrival, by the second, not at all, or it
  glitches.  A glitch survives only if the later input arrives after the
  first output edge; that edge time is replaced by the mean delay of the
  first step (a unit step on the later arrival), and the trailing edge is
  the later arrival convolved with the second-step delay.

Transition probabilities at each gate come from exact enumeration of the
joint input transition distribution when the circuit is small enough,
otherwise from independent marginals.
"""
from __future__ import annotations

import itertools
import time
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .charlib import CharLib, GateKind, TransitionPair, all_transitions
from .errors import MissingCharEntry, UnknownNet
from .inputmodel import TRANSITIONS, InputModel, Stimuli
from .netlist import Netlist, evaluate_array, topo_order
from .timedist import (
    DEFAULT_GRID,
    RENDER_SIGMAS,
    DelayDist,
    GridConfig,
    cdf_at,
    convolve,
    delta,
    exceed_prob,
    fraction_above,
    gaussian,
    mix,
)

# Exact joint enumeration is used up to this many primary inputs (2**N truth tables).
EXACT_INPUT_LIMIT = 20
CORR_MODES = ("mean-step", "convolved")
STATIC = ((0, 0), (1, 1))


@dataclass
class NetProfile:
    alpha: dict[tuple[int, int], float]
    dist: dict[tuple[int, int], DelayDist]

    def total(self) -> DelayDist:
        """Weighted sum of the four transition distributions."""
        return mix((self.alpha[tr], self.dist[tr]) for tr in TRANSITIONS)

    def check(self, tol_alpha=1e-6, tol_mass=1e-3) -> None:
        s = sum(self.alpha.values())
        assert abs(s - 1.0) <= tol_alpha, f"alpha sums to {s}"
        for tr in TRANSITIONS:
            if self.alpha[tr] > 0:
                m = self.dist[tr].mass
                assert abs(m - 1.0) <= tol_mass, f"{tr} has mass {m}"

    @classmethod
    def primary(cls, probs: Sequence[float], cfg: GridConfig) -> NetProfile:
        d = delta(cfg)
        return cls({tr: float(p) for tr, p in zip(TRANSITIONS, probs)}, {tr: d for tr in TRANSITIONS})


@dataclass
class AnalysisResult:
    netlist: Netlist
    vdd: float
    cfg: GridConfig
    profiles: dict[str, NetProfile]
    runtime_ms: float = 0.0
    joint_mode: str = "exact"

    @property
    def outputs(self) -> tuple[str, ...]:
        return self.netlist.outputs

    def profile(self, net: str) -> NetProfile:
        try:
            return self.profiles[net]
        except KeyError:
            raise UnknownNet(f"no net named {net!r}") from None

    def total_dist(self, net: str) -> DelayDist:
        return self.profile(net).total()

    def to_json(self, t_clk: float | None = None) -> dict:
        out = {"vdd": self.vdd, "grid_dt": self.cfg.dt, "grid_tmax": self.cfg.t_max,
               "joint_mode": self.joint_mode, "runtime_ms": self.runtime_ms, "outputs": {}}
        for net in self.outputs:
            p = self.profiles[net]
            entry = {}
            for tr in TRANSITIONS:
                key = f"{tr[0]}->{tr[1]}"
                d = p.dist[tr]
                entry[key] = {"alpha": p.alpha[tr], "atom_weight": d.atom_weight,
                              "mean_ps": d.mean(), "density": d.density.tolist()}
                if t_clk is not None:
                    entry[key]["violation_prob"] = violation_prob(self, net, t_clk)[tr]
            out["outputs"][net] = entry
        return out


def violation_prob(result: AnalysisResult, output: str, t_clk: float) -> dict[tuple[int, int], float]:
    """P(settling after t_clk) per transition; static transitions never violate."""
    p = result.profile(output)
    return {tr: 0.0 if tr in STATIC else exceed_prob(p.dist[tr], t_clk) for tr in TRANSITIONS}


# ------------------------------------------------------------------ joint tables

class _JointSource:
    """Joint (prev, next) statistics of arbitrary net tuples."""

    def joint(self, nets: Sequence[str]) -> np.ndarray:
        raise NotImplementedError


class _PairEnumeration(_JointSource):
    """Weighted explicit list of stimulus pairs."""

    def __init__(self, netlist: Netlist, prev: np.ndarray, nxt: np.ndarray, weights: np.ndarray):
        cols_p = {n: prev[:, i] for i, n in enumerate(netlist.inputs)}
        cols_n = {n: nxt[:, i] for i, n in enumerate(netlist.inputs)}
        self.vp = evaluate_array(netlist, cols_p)
        self.vn = evaluate_array(netlist, cols_n)
        self.w = np.asarray(weights, float) / np.sum(weights)

    def joint(self, nets):
        k = len(nets)
        idx = np.zeros(self.w.shape[0], np.int64)
        for n in nets:
            idx = idx * 2 + self.vp[n]
        for n in nets:
            idx = idx * 2 + self.vn[n]
        out = np.bincount(idx, weights=self.w, minlength=1 << (2 * k))
        return out.reshape((2,) * (2 * k))


class _TruthTableEnumeration(_JointSource):
    """Exact joint under an independent per-input model via truth tables."""

    def __init__(self, netlist: Netlist, im: InputModel):
        self.inputs = list(netlist.inputs)
        N = len(self.inputs)
        x = np.arange(1 << N, dtype=np.int64)
        # input i lives on bit i, i.e. tensor axis N-1-i after reshape
        cols = {n: ((x >> i) & 1).astype(bool) for i, n in enumerate(self.inputs)}
        self.values = {n: v.astype(np.int32) for n, v in evaluate_array(netlist, cols).items()}
        self.N = N
        mats = [im.matrix(n) for n in self.inputs]
        self.rank1 = all(np.linalg.matrix_rank(m) <= 1 for m in mats)
        if self.rank1:
            rows = [m.sum(axis=1) for m in mats]
            cols_ = [m[int(np.argmax(r))] / r.max() for m, r in zip(mats, rows)]
            self.px = self._product([r for r in rows])
            self.qy = self._product(cols_)
        else:
            self.mats = mats

    def _product(self, vecs):
        p = np.ones(1)
        for v in reversed(vecs):      # last input is the most significant axis
            p = np.multiply.outer(p, v).ravel()
        return p

    def _apply_model(self, J: np.ndarray) -> np.ndarray:
        T = J.reshape((2,) * self.N)
        for i, m in enumerate(self.mats):
            ax = self.N - 1 - i
            T = np.moveaxis(np.tensordot(m, T, axes=([1], [ax])), 0, ax)
        return T.reshape(-1)

    def joint(self, nets):
        k = len(nets)
        code = self.values[nets[0]].copy()
        for n in nets[1:]:
            code <<= 1
            code |= self.values[n]
        size = 1 << k
        out = np.zeros((size, size))
        if self.rank1:
            a = np.bincount(code, weights=self.px, minlength=size)
            b = np.bincount(code, weights=self.qy, minlength=size)
            out = np.outer(a, b)
        else:
            for nxt in range(size):
                J = (code == nxt).astype(float)
                PJ = self._apply_model(J)
                out[:, nxt] = np.bincount(code, weights=PJ, minlength=size)
        return out.reshape((2,) * (2 * k))


class _Independent(_JointSource):
    """Product of per-net marginals (no correlation tracking)."""

    def __init__(self):
        self.marg: dict[str, np.ndarray] = {}

    def joint(self, nets):
        t = np.ones(())
        for n in nets:
            t = np.multiply.outer(t, self.marg[n])
        # axes currently (p0, n0, p1, n1, ...); reorder to (p0, p1, .., n0, n1, ..)
        k = len(nets)
        order = [2 * i for i in range(k)] + [2 * i + 1 for i in range(k)]
        return np.transpose(t, order)


def _make_source(netlist: Netlist, stimuli, joint: str) -> tuple[_JointSource, str]:
    if isinstance(stimuli, Stimuli):
        prev, nxt = stimuli.arrays(netlist)
        w = stimuli.weights if stimuli.weights is not None else np.ones(len(stimuli))
        return _PairEnumeration(netlist, prev.astype(bool), nxt.astype(bool), w), "exact"
    im = stimuli if stimuli is not None else InputModel.uniform()
    if joint == "independent" or (joint == "auto" and len(netlist.inputs) > EXACT_INPUT_LIMIT):
        return _Independent(), "independent"
    return _TruthTableEnumeration(netlist, im), "exact"


# ------------------------------------------------------------------ gate kernel

class _GateDelays:
    """Gaussian delay distributions of one gate kind, cached per transition."""

    def __init__(self, lib: CharLib, kind: GateKind, vdd: float, cfg: GridConfig):
        self.lib, self.kind, self.vdd, self.cfg = lib, kind, vdd, cfg
        self._cache: dict[TransitionPair, tuple[float, DelayDist]] = {}

    def get(self, prev, nxt) -> tuple[float, DelayDist]:
        tr = TransitionPair(tuple(prev), tuple(nxt))
        hit = self._cache.get(tr)
        if hit is None:
            e = self.lib.lookup(self.kind, tr, self.vdd)
            hit = (e.mu, gaussian(e.mu, e.sigma, self.cfg))
            self._cache[tr] = hit
        return hit


@dataclass
class _Components:
    """Arrival distributions of one net, split by the context that produced them.

    Row ``i`` is the complete distribution given context ``keys[i]``; the
    net makes transition ``trans[i]`` in that context.  For a static
    transition the density is the trailing edge of a glitch pulse and
    ``leads`` holds the matching leading edge (same mass).
    """
    keys: list
    trans: list
    atoms: np.ndarray
    masses: np.ndarray
    probs: np.ndarray
    leads: np.ndarray | None = None

    def __post_init__(self):
        if self.leads is None:
            self.leads = np.zeros_like(self.masses)

    def rows(self, tr) -> np.ndarray:
        return np.array([i for i, t in enumerate(self.trans) if t == tr], dtype=np.int64)


def _as_dist(cfg, atom, masses) -> DelayDist:
    return DelayDist(cfg, float(atom), np.asarray(masses) / cfg.dt)


def _later_than(masses: np.ndarray) -> np.ndarray:
    """Per row: P(t > t_k) counting half of cell k itself (continuous part only)."""
    rev = np.cumsum(masses[..., ::-1], axis=-1)[..., ::-1]
    return rev - 0.5 * masses


def _earlier_than(atoms: np.ndarray, masses: np.ndarray) -> np.ndarray:
    """Per row: P(t < t_k) with half of cell k, atom included."""
    return atoms[..., None] + np.cumsum(masses, axis=-1) - 0.5 * masses


def _glitch_weights(atoms, masses, mu_step: float, step: DelayDist, corr_mode: str,
                    cfg: GridConfig) -> np.ndarray:
    """Per row: P(first output edge happened before t_k).

    ``mean-step`` replaces the first-step gate delay by its mean, i.e. a unit
    step at ``mu_step`` after the first arrival; ``convolved`` uses the full
    delay distribution.
    """
    t = cfg.times
    out = np.empty_like(masses)
    if corr_mode == "convolved":
        for i in range(masses.shape[0]):
            edge = convolve(_as_dist(cfg, atoms[i], masses[i]), step)
            out[i] = cdf_at(edge, t)
        return out
    frac = fraction_above(cfg, mu_step)
    rows = np.zeros(masses.shape[0])
    return atoms[:, None] * frac + _cdf_rows(rows, masses, t - mu_step, cfg)


def _switch_both(kind, p, n, pi, X, Y, delays, corr_mode, cfg):
    """Scenario mixture for a joint transition where both inputs switch.

    ``X``/``Y`` are (atoms, masses) row stacks for inputs 0 and 1 and ``pi``
    their joint context weights.  Returns the unnormalized output settling
    time as (atom, cell masses) plus the leading-edge cell masses of any
    glitch pulse.
    """
    fp, fn = kind.eval(p), kind.eval(n)
    atom_out = 0.0
    cells_out = np.zeros(cfg.n)
    lead_out = np.zeros(cfg.n)
    by_delay: dict = {}

    def add_conv(key, atom, cells):
        a, c = by_delay.get(key, (0.0, 0.0))
        by_delay[key] = (a + atom, c + cells)

    sim = float(X[0] @ pi @ Y[0])
    if sim > 0:
        if fp != fn:
            add_conv((p, n), sim, np.zeros(cfg.n))
        else:
            atom_out += sim
    for first in (0, 1):
        if first == 0:
            (xa, xm), (_, ym), w = X, Y, pi
        else:
            (xa, xm), (_, ym), w = Y, X, pi.T
        mid = list(p)
        mid[first] = n[first]
        mid = tuple(mid)
        fm = kind.eval(mid)
        cont_y = ym.sum(axis=1)
        s_y = _later_than(ym)
        f_x = _earlier_than(xa, xm)
        ws_y = w @ s_y
        p_order = float(xa @ (w @ cont_y)) + float((ws_y * xm).sum())
        if p_order <= 0:
            continue
        if fm != fp and fn == fm:
            # the earlier input decides the output
            add_conv((p, mid), float(xa @ (w @ cont_y)), (ws_y * xm).sum(axis=0))
        elif fm == fp and fn != fm:
            add_conv((mid, n), 0.0, ((w.T @ f_x) * ym).sum(axis=0))
        elif fm != fp and fn != fm:
            mu_a, step = delays.get(p, mid)
            g = np.minimum(np.clip(_glitch_weights(xa, xm, mu_a, step, corr_mode, cfg), 0.0, 1.0), f_x)
            late = ((w.T @ g) * ym).sum(axis=0)
            add_conv((mid, n), 0.0, late)
            atom_out += max(p_order - float(late.sum()), 0.0)
            # leading edge: first arrival, where the second one comes after mu_a
            surv = 1.0 - _cdf_rows(np.zeros(ym.shape[0]), ym, cfg.times + mu_a, cfg)
            lead = _as_dist(cfg, float(xa @ (w @ (1.0 - _cdf_rows(np.zeros(ym.shape[0]), ym,
                                                                   np.array([mu_a]), cfg)[:, 0]))),
                            ((w @ surv) * xm).sum(axis=0))
            lead = convolve(lead, step)
            if lead.mass > 0:
                lead_out += lead.masses * (float(late.sum()) / lead.mass)
        else:
            atom_out += p_order
    for (a, b), (atom, cells) in by_delay.items():
        gd = delays.get(a, b)[1]
        c = convolve(_as_dist(cfg, atom, np.broadcast_to(cells, (cfg.n,))), gd)
        atom_out += c.atom_weight
        cells_out += c.masses
    return atom_out, cells_out, lead_out


def _switch_one(kind, p, n, i, w, ci, ri, cj, rj, delays, cfg):
    """Input ``i`` switches while input ``j`` holds, possibly with a glitch pulse.

    ``w`` is indexed [rows of i, rows of j].  Without a pulse the output
    edge is the arrival convolved with the gate delay.  A pulse on ``j``
    matters in two ways: if it drives the output away from its final value
    after ``i`` has switched, the final edge follows the pulse's trailing
    edge (when the pulse outlasts the mean gate delay); if it alone drives
    the output to its final value, the edge may come early, at the pulse's
    leading edge.
    """
    j = 1 - i
    fn = kind.eval(n)
    A_at, A_m = ci.atoms[ri], ci.masses[ri]
    T, L = cj.masses[rj], cj.leads[rj]
    q = T.sum(axis=1)
    d_main = delays.get(p, n)[1]
    if not (q > 0).any():
        arr = _as_dist(cfg, float(w.sum(axis=1) @ A_at), w.sum(axis=1) @ A_m)
        out = convolve(arr, d_main)
        return out.atom_weight, out.masses
    s_flip = 1 - p[j]
    n_fl = list(n)
    n_fl[j] = s_flip
    n_fl = tuple(n_fl)
    p_fl = list(p)
    p_fl[j] = s_flip
    p_fl = tuple(p_fl)
    qs = np.where(q > 0, q, 1.0)
    zeros_j = np.zeros(T.shape[0])
    t = cfg.times
    atom_out, cells_out = 0.0, np.zeros(cfg.n)
    if kind.eval(n_fl) != fn:
        mu, _ = delays.get(n, n_fl)
        d_back = delays.get(n_fl, n)[1]
        # H: trailing edges of pulses that outlast the gate given their lead
        H = T * _cdf_rows(zeros_j, L, t - mu, cfg) / qs[:, None]
        FA = _cdf_rows(A_at, A_m, t - mu, cfg)                   # (rows_i, n)
        late = ((w.T @ FA) * H).sum(axis=0)
        SH = H.sum(axis=1)[:, None] - _cdf_rows(zeros_j, H, t + mu, cfg)
        keep = 1.0 - w @ SH / np.maximum(w.sum(axis=1), 1e-300)[:, None]
        SH0 = H.sum(axis=1) - _cdf_rows(zeros_j, H, np.array([mu]), cfg)[:, 0]
        keep0 = 1.0 - w @ SH0 / np.maximum(w.sum(axis=1), 1e-300)
        wi = w.sum(axis=1)
        early = _as_dist(cfg, float((wi * A_at) @ keep0), (wi[:, None] * A_m * np.clip(keep, 0, 1)).sum(axis=0))
        for dist, d in ((_as_dist(cfg, 0.0, late), d_back), (early, d_main)):
            c = convolve(dist, d)
            atom_out += c.atom_weight
            cells_out += c.masses
        return atom_out, cells_out
    wi = w.sum(axis=1)
    arr = _as_dist(cfg, float(wi @ A_at), wi @ A_m)
    if kind.eval(p_fl) == fn:
        # pulse leading edge before the switch, trailing edge after it
        S_T = 1.0 - _cdf_rows(zeros_j, T, t, cfg) / qs[:, None]           # P(T > t | pulse)
        K = (w.T @ (A_m + 0.0)) * S_T                                        # (rows_j, n)
        R = np.cumsum(K[:, ::-1], axis=1)[:, ::-1] - 0.5 * K
        early_l = (L * R).sum(axis=0)
        F_L = _cdf_rows(zeros_j, L, t, cfg)
        moved = ((w.T @ A_m) * F_L * S_T).sum(axis=0)
        arr = _as_dist(cfg, arr.atom_weight, np.clip(arr.masses - moved, 0, None))
        c = convolve(_as_dist(cfg, 0.0, early_l), delays.get(p, p_fl)[1])
        atom_out += c.atom_weight
        cells_out += c.masses
    c = convolve(arr, d_main)
    return atom_out + c.atom_weight, cells_out + c.masses


def _cdf_rows(atoms: np.ndarray, masses: np.ndarray, ts: np.ndarray, cfg: GridConfig) -> np.ndarray:
    """Per row: P(t <= ts) with in-cell interpolation; shape (rows, len(ts))."""
    edges = np.concatenate(([0.0], np.minimum(cfg.times + cfg.dt / 2, cfg.t_max)))
    cum = np.concatenate((atoms[:, None], atoms[:, None] + np.cumsum(masses, axis=1)), axis=1)
    tc = np.clip(ts, 0.0, cfg.t_max)
    hi = np.clip(np.searchsorted(edges, tc, side="right"), 1, len(edges) - 1)
    lo = hi - 1
    span = edges[hi] - edges[lo]
    frac = np.where(span > 0, (tc - edges[lo]) / np.where(span > 0, span, 1.0), 1.0)
    out = cum[:, lo] + frac * (cum[:, hi] - cum[:, lo])
    out[:, ts < 0] = 0.0
    return out


def _pulse_through(kind, p, i, w_i, comp, rows, delays, cfg):
    """Propagate glitch pulses on static input ``i`` while the other input holds.

    A pulse survives when it is wider than the mean delay of the gate's
    first edge.  Returns (surviving trailing-edge masses, leading-edge masses).
    """
    flipped = list(p)
    flipped[i] = 1 - p[i]
    flipped = tuple(flipped)
    if kind.eval(flipped) == kind.eval(p):
        return None
    trail = comp.masses[rows]
    lead = comp.leads[rows]
    pulse = trail.sum(axis=1)
    keep = (pulse > 0) & (w_i > 0)
    if not keep.any():
        return None
    trail, lead, pulse, wk = trail[keep], lead[keep], pulse[keep], w_i[keep]
    mu1, up = delays.get(p, flipped)
    _, down = delays.get(flipped, p)
    zeros = np.zeros(trail.shape[0])
    # P(L < T - mu1) with L, T independent given a pulse
    f_lead = _cdf_rows(zeros, lead, cfg.times - mu1, cfg) / pulse[:, None]
    s_trail = 1.0 - _cdf_rows(zeros, trail, cfg.times + mu1, cfg) / pulse[:, None]
    t_out = convolve(_as_dist(cfg, 0.0, wk @ (trail * np.clip(f_lead, 0, 1))), down)
    l_out = convolve(_as_dist(cfg, 0.0, wk @ (lead * np.clip(s_trail, 0, 1))), up)
    if l_out.mass > 0:
        l_masses = l_out.masses * (t_out.mass / l_out.mass)
    else:
        l_masses = np.zeros(cfg.n)
    return t_out.masses, l_masses


def _combine(kind: GateKind, comps: Sequence[_Components], pi: np.ndarray, delays: _GateDelays,
             corr_mode: str, cfg: GridConfig) -> _Components:
    """Output components of a gate, one per joint input transition."""
    k = kind.arity
    keys, trans, atoms, masses, leads, probs = [], [], [], [], [], []
    for trs in itertools.product(TRANSITIONS, repeat=k):
        rows = [c.rows(t) for c, t in zip(comps, trs)]
        if any(r.size == 0 for r in rows):
            continue
        w = pi[np.ix_(*rows)]
        total = float(w.sum())
        if total <= 0:
            continue
        p = tuple(t[0] for t in trs)
        n = tuple(t[1] for t in trs)
        fp, fn = kind.eval(p), kind.eval(n)
        changed = [i for i in range(k) if p[i] != n[i]]
        lead = np.zeros(cfg.n)
        if not changed:
            cells = np.zeros(cfg.n)
            for i in range(k):
                other = tuple(j for j in range(k) if j != i)
                w_i = w.sum(axis=other) if other else w
                res = _pulse_through(kind, p, i, w_i, comps[i], rows[i], delays, cfg)
                if res is not None:
                    cells += res[0]
                    lead += res[1]
            atom = max(total - float(cells.sum()), 0.0)
        elif len(changed) == 1 and fp == fn:
            atom, cells = total, np.zeros(cfg.n)
        elif len(changed) == 1:
            i = changed[0]
            if k == 1:
                c = comps[0]
                arr = _as_dist(cfg, float(w @ c.atoms[rows[0]]), w @ c.masses[rows[0]])
                out = convolve(arr, delays.get(p, n)[1])
                atom, cells = out.atom_weight, out.masses
            else:
                atom, cells = _switch_one(kind, p, n, i, w if i == 0 else w.T, comps[i], rows[i],
                                          comps[1 - i], rows[1 - i], delays, cfg)
        else:
            X = (comps[0].atoms[rows[0]], comps[0].masses[rows[0]])
            Y = (comps[1].atoms[rows[1]], comps[1].masses[rows[1]])
            atom, cells, lead = _switch_both(kind, p, n, w, X, Y, delays, corr_mode, cfg)
        m = atom + float(cells.sum())
        keys.append(trs)
        trans.append((fp, fn))
        atoms.append(atom / m)
        masses.append(cells / m)
        leads.append(lead / m)
        probs.append(total)
    probs = np.asarray(probs)
    return _Components(keys, trans, np.asarray(atoms), np.vstack(masses), probs / probs.sum(),
                       np.vstack(leads))


def _profile_from(comps: _Components, cfg: GridConfig) -> NetProfile:
    alpha, dist = {}, {}
    for tr in TRANSITIONS:
        r = comps.rows(tr)
        a = float(comps.probs[r].sum()) if r.size else 0.0
        alpha[tr] = a
        if a > 0:
            w = comps.probs[r] / a
            dist[tr] = _as_dist(cfg, float(w @ comps.atoms[r]), w @ comps.masses[r])
        else:
            dist[tr] = delta(cfg)
    return NetProfile(alpha, dist)


def _components_of_profile(prof: NetProfile, cfg: GridConfig) -> _Components:
    keys = [(tr,) for tr in TRANSITIONS]
    atoms = np.array([prof.dist[tr].atom_weight for tr in TRANSITIONS])
    masses = np.vstack([prof.dist[tr].masses for tr in TRANSITIONS])
    probs = np.array([prof.alpha[tr] for tr in TRANSITIONS])
    return _Components(keys, list(TRANSITIONS), atoms, masses, probs)


def gate_profile(lib: CharLib, kind: GateKind, input_profiles: Sequence[NetProfile], vdd: float,
                 cfg: GridConfig = DEFAULT_GRID, corr_mode: str = "mean-step",
                 joint: np.ndarray | None = None) -> NetProfile:
    """Output profile of one gate from its input profiles.

    ``joint`` optionally gives the joint input transition probabilities,
    indexed ``[prev_0, .., prev_k-1, next_0, .., next_k-1]``; by default the
    inputs are independent.
    """
    if corr_mode not in CORR_MODES:
        raise ValueError(f"corr_mode must be one of {CORR_MODES}")
    if len(input_profiles) != kind.arity:
        raise ValueError(f"{kind.value} takes {kind.arity} input profiles, got {len(input_profiles)}")
    comps = [_components_of_profile(p, cfg) for p in input_profiles]
    if joint is None:
        pi = comps[0].probs
        for c in comps[1:]:
            pi = np.multiply.outer(pi, c.probs)
    else:
        k = kind.arity
        pi = np.zeros((4,) * k)
        for trs in itertools.product(range(4), repeat=k):
            idx = tuple(TRANSITIONS[t][0] for t in trs) + tuple(TRANSITIONS[t][1] for t in trs)
            pi[trs] = joint[idx]
    delays = _GateDelays(lib, kind, vdd, cfg)
    return _profile_from(_combine(kind, comps, pi, delays, corr_mode, cfg), cfg)


# ------------------------------------------------------------------ whole circuit

def _context_matrix(source, comps, ctx_nets) -> np.ndarray:
    """Joint probability of the input nets' contexts, shape (C_0, .., C_k-1)."""
    if isinstance(source, _Independent):
        pi = comps[0].probs
        for c in comps[1:]:
            pi = np.multiply.outer(pi, c.probs)
        return pi
    nets = [x for cn in ctx_nets for x in cn]
    J = source.joint(nets)
    grids = []
    for c in comps:
        grids.append(c.keys)
    shape = tuple(len(g) for g in grids)
    pi = np.zeros(shape)
    for idx in itertools.product(*(range(s) for s in shape)):
        trs = [t for i, j in enumerate(idx) for t in grids[i][j]]
        pi[idx] = J[tuple(t[0] for t in trs) + tuple(t[1] for t in trs)]
    return pi


# Tail mass per context row that may be dropped when sizing a working grid.
TAIL_EPS = 1e-12


def _last_cell(c: _Components) -> int:
    """Last cell holding more than ``TAIL_EPS`` of tail mass in any row."""
    col = np.maximum(c.masses.max(axis=0, initial=0.0), c.leads.max(axis=0, initial=0.0))
    tail = np.cumsum(col[::-1])[::-1]
    nz = np.flatnonzero(tail > TAIL_EPS)
    return int(nz[-1]) if nz.size else 0


def _delay_reach(lib: CharLib, kind: GateKind, vdd: float, cfg: GridConfig) -> int:
    """Cells a single gate delay can extend a distribution by."""
    worst = 0.0
    for tr in all_transitions(kind.arity):
        try:
            e = lib.lookup(kind, tr, vdd)
        except MissingCharEntry:
            continue
        worst = max(worst, e.mu + RENDER_SIGMAS * e.sigma)
    return int(np.ceil(worst / cfg.dt)) + 4


def _working_grid(cfg: GridConfig, cells: int) -> GridConfig:
    """Shortest grid (rounded up to 64-cell steps) holding ``cells`` cells.

    Gates only see the part of the grid their inputs and delays can reach,
    which keeps the per-gate work proportional to the actual support.
    """
    n = -(-(cells + 1) // 64) * 64
    if n >= cfg.n:
        return cfg
    return GridConfig(cfg.dt, (n - 1) * cfg.dt)


def _resize(c: _Components, n: int) -> _Components:
    m = c.masses.shape[1]
    if m == n:
        return c
    if m > n:
        return _Components(c.keys, c.trans, c.atoms, c.masses[:, :n], c.probs, c.leads[:, :n])
    pad = ((0, 0), (0, n - m))
    return _Components(c.keys, c.trans, c.atoms, np.pad(c.masses, pad), c.probs, np.pad(c.leads, pad))


def analyze(netlist: Netlist, lib: CharLib, im=None, vdd: float = 0.7,
            cfg: GridConfig = DEFAULT_GRID, corr_mode: str = "mean-step",
            joint: str = "auto") -> AnalysisResult:
    """Propagate net profiles through the circuit in topological order.

    ``im`` is an :class:`InputModel` or a stimulus set exposing ``pairs``
    (an explicit list of vector pairs to condition on).  ``joint`` selects
    how input correlations are handled: ``auto``, ``exact`` or
    ``independent``.
    """
    if corr_mode not in CORR_MODES:
        raise ValueError(f"corr_mode must be one of {CORR_MODES}")
    t0 = time.perf_counter()
    source, mode = _make_source(netlist, im, joint)
    model = im if isinstance(im, InputModel) else (InputModel.uniform() if im is None else None)
    comps: dict[str, _Components] = {}
    ctx_nets: dict[str, tuple[str, ...]] = {}
    for net in netlist.inputs:
        probs = np.asarray(model.of(net) if model is not None else source.joint([net]).reshape(-1), float)
        comps[net] = _Components([(tr,) for tr in TRANSITIONS], list(TRANSITIONS), np.ones(4),
                                 np.zeros((4, cfg.n)), probs)
        ctx_nets[net] = (net,)
    delay_cache: dict = {}
    reach_cache: dict = {}
    for g in topo_order(netlist):
        ins = [comps[x] for x in g.inputs]
        pi = _context_matrix(source, ins, [ctx_nets[x] for x in g.inputs])
        reach = reach_cache.get(g.kind)
        if reach is None:
            reach = reach_cache[g.kind] = _delay_reach(lib, g.kind, vdd, cfg)
        sub = _working_grid(cfg, max(_last_cell(c) for c in ins) + reach)
        delays = delay_cache.get((g.kind, sub))
        if delays is None:
            delays = delay_cache[(g.kind, sub)] = _GateDelays(lib, g.kind, vdd, sub)
        out = _combine(g.kind, [_resize(c, sub.n) for c in ins], pi, delays, corr_mode, sub)
        comps[g.output] = _resize(out, cfg.n)
        ctx_nets[g.output] = tuple(g.inputs)
    profiles = {net: _profile_from(c, cfg) for net, c in comps.items()}
    elapsed = (time.perf_counter() - t0) * 1e3
    return AnalysisResult(netlist, vdd, cfg, profiles, elapsed, mode)
