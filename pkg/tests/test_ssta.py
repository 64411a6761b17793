import itertools
import json

import numpy as np
import pytest

from vos_timing.charlib import GateKind, TransitionPair
from vos_timing.errors import UnknownNet
from vos_timing.inputmodel import TRANSITIONS, InputModel, Stimuli
from vos_timing.netlist import parse_netlist
from vos_timing.ssta import NetProfile, analyze, gate_profile, violation_prob
from vos_timing.timedist import (
    DEFAULT_GRID,
    convolve,
    delta,
    exceed_prob,
    gaussian,
    mix,
    truncate_below,
    tv_distance,
)


def test_xor2_primary_inputs_uniform(lib, cfg):
    prim = NetProfile.primary((0.25,) * 4, cfg)
    out = gate_profile(lib, GateKind.XOR2, [prim, prim], 0.7, cfg)
    # oracle: enumerate the 16 joint input transitions directly
    alpha = {tr: 0.0 for tr in TRANSITIONS}
    parts = {tr: [] for tr in TRANSITIONS}
    for p in itertools.product((0, 1), repeat=2):
        for n in itertools.product((0, 1), repeat=2):
            tr = (GateKind.XOR2.eval(p), GateKind.XOR2.eval(n))
            alpha[tr] += 1 / 16
            if tr[0] != tr[1]:
                e = lib.lookup(GateKind.XOR2, TransitionPair(p, n), 0.7)
                parts[tr].append(gaussian(e.mu, e.sigma, cfg))
    for tr in TRANSITIONS:
        assert out.alpha[tr] == pytest.approx(alpha[tr], abs=1e-12)
    for tr in ((0, 1), (1, 0)):
        assert len(parts[tr]) == 4
        oracle = mix([(0.25, g) for g in parts[tr]])
        assert tv_distance(out.dist[tr], oracle) < 1e-9
    for tr in ((0, 0), (1, 1)):
        assert out.dist[tr].atom_weight == 1.0


def test_and2_pinned_static_is_delta(lib, cfg):
    prim = NetProfile.primary((0, 0, 0, 1), cfg)
    out = gate_profile(lib, GateKind.AND2, [prim, prim], 0.7, cfg)
    assert out.alpha[(1, 1)] == 1.0
    assert tv_distance(out.dist[(1, 1)], delta(cfg)) == 0


def test_glitch_term_steps_at_first_gate_mean(lib, cfg, fixtures):
    """F2 sees Y1 falling late and C falling at t=0 (joint 11 -> 00)."""
    res = analyze(fixtures["fig1_xor2"], lib)
    y1 = res.profiles["Y1"]
    c = NetProfile.primary((0.25,) * 4, cfg)
    joint = np.zeros((2, 2, 2, 2))
    joint[1, 1, 0, 0] = 1.0
    out = gate_profile(lib, GateKind.XOR2, [y1, c], 0.7, cfg, joint=joint)
    first = lib.lookup(GateKind.XOR2, TransitionPair((1, 1), (1, 0)), 0.7)
    second = lib.lookup(GateKind.XOR2, TransitionPair((1, 0), (0, 0)), 0.7)
    pulse = convolve(truncate_below(y1.dist[(1, 0)], first.mu), gaussian(second.mu, second.sigma))
    assert 0.5 < pulse.mass < 0.8
    oracle = mix([(1 - pulse.mass, delta()), (1.0, pulse)])
    assert out.alpha[(0, 0)] == 1.0
    assert tv_distance(out.dist[(0, 0)], oracle) < 1e-3
    # the static result still never violates
    assert violation_prob(type(res)(res.netlist, 0.7, cfg, {"Y2": out}), "Y2", 10.0)[(0, 0)] == 0


def test_glitch_branches_partition_the_arrival(lib, cfg, fixtures):
    res = analyze(fixtures["fig1_xor2"], lib)
    late = res.profiles["Y1"].dist[(1, 0)]
    for tr in all_pairs():
        e = lib.lookup(GateKind.XOR2, tr, 0.7)
        kept = truncate_below(late, e.mu)
        assert kept.mass + (late.mass - kept.mass) == pytest.approx(1.0, abs=1e-3)
        assert kept.mass == pytest.approx(exceed_prob(late, e.mu), abs=1e-9)


def all_pairs():
    from vos_timing.charlib import all_transitions, output_changes
    return [tr for tr in all_transitions(2) if output_changes(GateKind.XOR2, tr)]


def test_no_change_inputs_give_static_delta(lib, fixtures):
    n = fixtures["adder4"]
    prev = {x: i % 2 for i, x in enumerate(n.inputs)}
    res = analyze(n, lib, InputModel.pinned(prev, prev))
    for net in n.outputs:
        p = res.profile(net)
        assert p.alpha[(0, 0)] + p.alpha[(1, 1)] == pytest.approx(1.0)
        for tr in ((0, 0), (1, 1)):
            if p.alpha[tr]:
                assert p.dist[tr].atom_weight == 1.0


def test_violation_prob_limits(lib, fixtures):
    res = analyze(fixtures["adder2"], lib)
    for net in res.outputs:
        assert set(violation_prob(res, net, DEFAULT_GRID.t_max).values()) == {0.0}
    with pytest.raises(UnknownNet):
        violation_prob(res, "nope", 100)
    n = fixtures["fig1_xor2"]
    quiet = analyze(n, lib, InputModel.pinned({"A": 0, "B": 1, "C": 1}, {"A": 0, "B": 1, "C": 1}))
    assert set(violation_prob(quiet, "Y2", 0.0).values()) == {0.0}


@pytest.mark.parametrize("name", ["fig1_xor2", "adder2", "adder4", "adder8", "dft2"])
def test_profiles_are_normalized(name, lib, fixtures):
    res = analyze(fixtures[name], lib)
    for net, prof in res.profiles.items():
        prof.check(tol_alpha=1e-6, tol_mass=1e-3)
    for net in res.outputs:
        assert res.total_dist(net).mass == pytest.approx(1.0, abs=1e-3)


def test_single_path_mean_is_sum_of_means(lib, sharp, fixtures):
    # only A toggles: both XORs see exactly one changing input
    n = fixtures["fig1_xor2"]
    im = InputModel({"A": (0, 1, 0, 0), "B": (1, 0, 0, 0), "C": (1, 0, 0, 0)})
    for library in (lib, sharp):
        res = analyze(n, library, im)
        d = res.profile("Y2").dist[(0, 1)]
        m1 = library.lookup(GateKind.XOR2, TransitionPair((0, 0), (1, 0)), 0.7).mu
        m2 = library.lookup(GateKind.XOR2, TransitionPair((0, 0), (1, 0)), 0.7).mu
        assert d.mean() == pytest.approx(m1 + m2, abs=0.5)


def test_violation_non_increasing_in_vdd(lib, fixtures):
    for name in ("fig1_xor2", "adder4"):
        n = fixtures[name]
        runs = [analyze(n, lib, vdd=v) for v in (0.7, 0.8, 0.9)]
        for net in n.outputs:
            for t in (20.0, 60.0, 100.0):
                vs = [violation_prob(r, net, t) for r in runs]
                for tr in TRANSITIONS:
                    assert vs[0][tr] >= vs[1][tr] - 1e-12 >= vs[2][tr] - 2e-12


def test_to_json_is_serializable(lib, fixtures):
    res = analyze(fixtures["fig1_xor2"], lib)
    body = json.loads(json.dumps(res.to_json(100.0)))
    entry = body["outputs"]["Y2"]["0->1"]
    assert len(entry["density"]) == DEFAULT_GRID.n
    assert entry["alpha"] == pytest.approx(0.25)


def test_joint_modes_agree_on_trees(lib, fixtures):
    # fig1 has no reconvergent fanout, so independence is exact
    n = fixtures["fig1_xor2"]
    a = analyze(n, lib, joint="exact")
    b = analyze(n, lib, joint="independent")
    for tr in TRANSITIONS:
        assert a.profile("Y2").alpha[tr] == pytest.approx(b.profile("Y2").alpha[tr], abs=1e-12)
        assert tv_distance(a.profile("Y2").dist[tr], b.profile("Y2").dist[tr]) < 1e-9


def test_stimuli_conditioning_restricts_alpha(lib, fixtures):
    n = fixtures["fig1_xor2"]
    pair = ({"A": 0, "B": 0, "C": 0}, {"A": 1, "B": 0, "C": 0})
    res = analyze(n, lib, Stimuli([pair]))
    assert res.profile("Y2").alpha[(0, 1)] == pytest.approx(1.0)


def test_bad_corr_mode(lib, fixtures):
    with pytest.raises(ValueError):
        analyze(fixtures["fig1_xor2"], lib, corr_mode="nope")


def test_netlist_with_not_gates(lib):
    n = parse_netlist({"inputs": ["a", "b"], "outputs": ["y"],
                       "gates": [{"id": "n1", "type": "NOT", "in": ["a"], "out": "na"},
                                 {"id": "g", "type": "NAND2", "in": ["na", "b"], "out": "y"}]})
    res = analyze(n, lib)
    res.profile("y").check()
