import itertools

import numpy as np
import pytest

from vos_timing.charlib import CharEntry, CharLib, GateKind, TransitionPair
from vos_timing.errmodel import word_stimuli
from vos_timing.mcdta import (
    McConfig,
    histogram_from_settle,
    mc_histogram,
    mc_latched_outputs,
    run_mc,
    simulate_pair,
    simulate_vectors,
)
from vos_timing.ssta import analyze, violation_prob
from vos_timing.timedist import DEFAULT_GRID, tv_distance


def _mu(lib, kind, p, n, vdd=0.7):
    return lib.lookup(kind, TransitionPair(p, n), vdd).mu


def test_sharp_chain_event_time_is_sum_of_means(sharp, fixtures, rng):
    n = fixtures["fig1_xor2"]
    tr = simulate_pair(n, sharp, {"A": 0, "B": 0, "C": 0}, {"A": 1, "B": 0, "C": 0}, 0.7, rng)
    want = 2 * _mu(sharp, GateKind.XOR2, (0, 0), (1, 0))
    assert tr.events["Y2"] == [(pytest.approx(want, abs=1e-3), 1)]


def test_fig3_intermediate_pulse(sharp, fixtures, rng):
    n = fixtures["fig1_xor2"]
    # Y1 falls after its gate delay while C falls at t = 0
    tr = simulate_pair(n, sharp, {"A": 1, "B": 0, "C": 1}, {"A": 0, "B": 0, "C": 0}, 0.7, rng)
    wave = tr.waveform("Y2")
    assert [v for _, v in wave] == [0, 1, 0]
    rise = _mu(sharp, GateKind.XOR2, (1, 1), (1, 0))
    y1 = _mu(sharp, GateKind.XOR2, (1, 0), (0, 0))
    fall = _mu(sharp, GateKind.XOR2, (1, 0), (0, 0))
    assert wave[1][0] == pytest.approx(rise, abs=1e-3)
    assert wave[2][0] == pytest.approx(y1 + fall, abs=1e-3)
    assert tr.settle_time("Y2") == wave[2][0]
    assert tr.value_at("Y2", rise + 0.1) == 1


def test_no_input_change_no_events(lib, fixtures, rng):
    n = fixtures["adder4"]
    v = {x: 1 for x in n.inputs}
    tr = simulate_pair(n, lib, v, v, 0.7, rng)
    assert all(not ev for ev in tr.events.values())


def _untied(lib, seed=0):
    """Nearly deterministic delays with distinct means per library entry."""
    r = np.random.default_rng(seed)
    return CharLib({key: CharEntry(e.mu * (1 + 0.1 * r.random()), 1e-6) for key, e in lib.items()})


def _near_tie(netlist, lib, trace, eps=1e-3):
    """True if event order at some gate is decided by noise.

    Either two input events nearly coincide, or an output event the gate
    may have scheduled (input time + any of its mean delays) nearly
    coincides with a later input event.
    """
    for g in netlist.gates:
        times = sorted({t for x in g.inputs for t, _ in trace.events[x]})
        if any(b - a < eps for a, b in itertools.pairwise(times)):
            return True
        mus = [e.mu for (k, _, v), e in lib.items() if k is g.kind and v == 0.7]
        for t in times:
            for m in mus:
                if any(abs(t + m - u) < eps for u in times if u > t):
                    return True
    return False


def test_compiled_matches_reference_simulator(lib, fixtures):
    """Two independent simulators on the same pairs (delays nearly fixed)."""
    n = fixtures["adder4"]
    sharp = _untied(lib)
    rng = np.random.default_rng(3)
    k = len(n.inputs)
    prev = rng.integers(0, 2, (400, k), dtype=np.uint8)
    nxt = rng.integers(0, 2, (400, k), dtype=np.uint8)
    nets = [g.output for g in n.gates]
    run = simulate_vectors(n, sharp, prev, nxt, McConfig(1, t_clk=30.0), nets)
    compared = 0
    for s in range(prev.shape[0]):
        tr = simulate_pair(n, sharp, dict(zip(n.inputs, prev[s])), dict(zip(n.inputs, nxt[s])),
                           0.7, rng)
        if _near_tie(n, sharp, tr):
            continue
        compared += 1
        for j, net in enumerate(nets):
            ref = tr.settle_time(net) if tr.events[net] else -1.0
            assert run.settle[s, j] == pytest.approx(ref, abs=0.01)
            assert run.latched[s, j] == tr.value_at(net, 30.0)
            assert run.final[s, j] == tr.value_at(net, 1e9)
    assert compared > 300


def test_empirical_alpha_within_binomial_bounds(lib, fixtures):
    h = mc_histogram(fixtures["fig1_xor2"], lib, None, McConfig(1_000_000, seed=5), "Y2")
    for a in h.alpha.values():
        assert a == pytest.approx(0.25, abs=0.002)


def test_sharp_single_path_histogram_is_a_spike(sharp, fixtures):
    n = fixtures["fig1_xor2"]
    from vos_timing.inputmodel import InputModel
    im = InputModel({"A": (0, 1, 0, 0), "B": (1, 0, 0, 0), "C": (1, 0, 0, 0)})
    h = mc_histogram(n, sharp, im, McConfig(2000, seed=1), "Y2")
    want = 2 * _mu(sharp, GateKind.XOR2, (0, 0), (1, 0))
    k = round(want / DEFAULT_GRID.dt)
    assert h.dist.masses[k] == pytest.approx(1.0)


def test_seed_determinism_and_worker_invariance(lib, fixtures):
    n = fixtures["adder4"]
    base = run_mc(n, lib, None, McConfig(150_000, seed=11, block_size=1 << 14), list(n.outputs))
    again = run_mc(n, lib, None, McConfig(150_000, seed=11, block_size=1 << 14), list(n.outputs))
    par = run_mc(n, lib, None, McConfig(150_000, seed=11, block_size=1 << 14, workers=3),
                 list(n.outputs))
    for a, b in ((base, again), (base, par)):
        for f in ("settle", "initial", "final", "latched", "prev_inputs", "next_inputs"):
            assert np.array_equal(getattr(a, f), getattr(b, f))
    other = run_mc(n, lib, None, McConfig(150_000, seed=12, block_size=1 << 14), list(n.outputs))
    assert not np.array_equal(base.settle, other.settle)


def test_latched_limits(lib, fixtures):
    n = fixtures["adder4"]
    full = mc_latched_outputs(n, lib, None, McConfig(20_000, seed=2, t_clk=DEFAULT_GRID.t_max), "sum")
    assert np.array_equal(full.ideal, full.latched)
    zero = mc_latched_outputs(n, lib, None, McConfig(20_000, seed=2, t_clk=0.0), "sum")
    assert np.array_equal(zero.latched, zero.previous)
    assert full.to_csv().startswith("sample,ideal,latched\n")


def test_latched_16_to_0_tracks_msb_tail(lib, fixtures):
    n = fixtures["adder4"]
    stim = word_stimuli(n, "sum", 16, 0)
    res = analyze(n, lib, stim)
    # pick T_clk in the body of the carry-out distribution
    t_clk = res.profile("cout").dist[(1, 0)].mean()
    q = violation_prob(res, "cout", t_clk)[(1, 0)]
    assert 0.2 < q < 0.8
    run = run_mc(n, lib, stim, McConfig(200_000, seed=4, t_clk=t_clk), ["cout"])
    assert not run.final.any()
    # the carry-out still holds its old value exactly when it settles late
    assert run.latched.mean() == pytest.approx(q, abs=0.02)
    s = mc_latched_outputs(n, lib, stim, McConfig(200_000, seed=4, t_clk=t_clk), "sum")
    assert set(np.unique(s.ideal)) == {0}
    assert ((s.latched & 16) > 0).mean() == pytest.approx(q, abs=0.02)


def test_histogram_converges(lib, fixtures):
    n = fixtures["fig1_xor2"]

    def hist(N, seed):
        return mc_histogram(n, lib, None, McConfig(N, seed=seed), "Y2").dist

    coarse = tv_distance(hist(4_000, 1), hist(16_000, 2))
    fine = tv_distance(hist(100_000, 3), hist(400_000, 4))
    assert fine < coarse


def test_histogram_from_settle_counts_atoms():
    d = histogram_from_settle(np.array([-1.0, -1.0, 10.0, 10.2]), DEFAULT_GRID)
    assert d.atom_weight == 0.5 and d.mass == pytest.approx(1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        McConfig(0)
