import io
import itertools

import pytest

from vos_timing.charlib import (
    CharEntry,
    CharLib,
    GateKind,
    TransitionPair,
    all_transitions,
    default_charlib,
    default_nominal,
    dumps_charlib,
    load_charlib,
    output_changes,
    save_charlib,
    scale_factor,
    synth_charlib,
)
from vos_timing.errors import (
    IncompleteLibrary,
    InvalidVoltage,
    ParseError,
    UnknownTransition,
    VoltageOutOfRange,
)
from vos_timing.fixtures import DEFAULT_CHARLIB

HEADER = "gate,prev,next,vdd,mu_ps,sigma_ps\n"


def _rows(kind, vdd, mu=20.0, sigma=2.0, skip=()):
    out = []
    for tr in all_transitions(kind.arity):
        if output_changes(kind, tr) and (tr.prev, tr.next) not in skip:
            p = "".join(map(str, tr.prev))
            n = "".join(map(str, tr.next))
            out.append(f"{kind.value},{p},{n},{vdd},{mu},{sigma}\n")
    return out


def test_arity_and_transition_count():
    for k in GateKind:
        assert k.arity == (1 if k is GateKind.NOT else 2)
        assert len(all_transitions(k.arity)) == 2 ** (2 * k.arity)


def test_round_trip_seven_gates_two_voltages(tmp_path):
    lib = synth_charlib(default_nominal(), voltages=(1.0, 0.7))
    assert lib.voltages == [0.7, 1.0]
    assert len(lib.kinds) == 7
    path = tmp_path / "lib.csv"
    save_charlib(lib, path)
    again = load_charlib(path)
    assert again == lib
    for key, e in lib.items():
        assert again._entries[key] == e


def test_missing_key_is_named():
    text = HEADER + "".join(_rows(GateKind.XOR2, 0.7, skip={((0, 1), (1, 1))}))
    with pytest.raises(IncompleteLibrary) as ei:
        load_charlib(text)
    assert ei.value.missing == [("XOR2", "01", "11", 0.7)]
    assert "XOR2:01->11@0.7V" in str(ei.value)


def test_output_preserving_rows_are_optional():
    # XOR2 01->10 keeps the output at 1, so a library without it is complete
    tr = TransitionPair((0, 1), (1, 0))
    assert not output_changes(GateKind.XOR2, tr)
    lib = load_charlib(HEADER + "".join(_rows(GateKind.XOR2, 0.7)))
    assert (GateKind.XOR2, tr, 0.7) not in dict(lib.items())


def test_zero_sigma_rejected():
    text = HEADER + "NOT,0,1,0.7,10,0\n"
    with pytest.raises(ParseError) as ei:
        load_charlib(text, check_complete=False)
    assert ei.value.line == 2


@pytest.mark.parametrize("bad", ["FOO,0,1,0.7,1,1", "NOT,2,1,0.7,1,1", "NOT,0,1,0.7,x,1",
                                 "NOT,00,01,0.7,1,1", "NOT,0,1,0.7,1"])
def test_malformed_rows(bad):
    with pytest.raises(ParseError):
        load_charlib(HEADER + bad + "\n", check_complete=False)


def test_header_required():
    with pytest.raises(ParseError):
        load_charlib("NOT,0,1,0.7,10,1\n")


def test_sigma_above_mu_warns():
    with pytest.warns(UserWarning):
        load_charlib(HEADER + "NOT,0,1,0.7,1,2\n", check_complete=False)


def test_stream_source():
    lib = load_charlib(io.StringIO(HEADER + "".join(_rows(GateKind.NOT, 1.0))))
    assert len(lib) == 2


def test_lookup_on_grid_and_interpolated():
    tr = TransitionPair((0,), (1,))
    lib = CharLib({(GateKind.NOT, tr, 0.6): CharEntry(80.0, 8.0),
                   (GateKind.NOT, tr, 1.0): CharEntry(40.0, 4.0)})
    assert lib.lookup(GateKind.NOT, tr, 1.0) == CharEntry(40.0, 4.0)
    mid = lib.lookup(GateKind.NOT, tr, 0.8)
    assert mid.mu == pytest.approx(60.0) and mid.sigma == pytest.approx(6.0)
    with pytest.raises(VoltageOutOfRange):
        lib.lookup(GateKind.NOT, tr, 0.5)
    with pytest.raises(UnknownTransition):
        lib.lookup(GateKind.NOT, TransitionPair((0, 0), (1, 0)), 0.8)


def test_scale_factor_matches_formula():
    # oracle: the law evaluated directly
    v, vth, a = 0.7, 0.3, 1.3
    expected = v * (1 - vth) ** a / (v - vth) ** a
    assert scale_factor(0.7) == pytest.approx(expected, rel=1e-12)
    assert scale_factor(1.0) == 1.0
    with pytest.raises(InvalidVoltage):
        scale_factor(0.3)
    with pytest.raises(InvalidVoltage):
        synth_charlib(default_nominal(), voltages=(1.0, 0.3))


def test_synth_at_nominal_is_identity_and_scaled_below():
    nom = default_nominal()
    lib = synth_charlib(nom, voltages=(1.0, 0.7))
    f = scale_factor(0.7)
    for (k, tr, v), e in nom.items():
        assert lib.lookup(k, tr, 1.0) == e
        s = lib.lookup(k, tr, 0.7)
        assert s.mu == pytest.approx(e.mu * f) and s.sigma == pytest.approx(e.sigma * f)


def test_mu_strictly_decreasing_in_vdd():
    lib = default_charlib()
    for k in lib.kinds:
        for tr in all_transitions(k.arity):
            if output_changes(k, tr):
                mus = [lib.lookup(k, tr, x).mu for x in (0.6, 0.65, 0.7, 0.8, 0.9, 1.0)]
                assert all(a > b for a, b in itertools.pairwise(mus))


def test_interpolation_continuous_at_grid_points():
    lib = default_charlib()
    tr = TransitionPair((0, 1), (1, 1))
    for v in (0.7, 0.8, 0.9):
        here = lib.lookup(GateKind.XOR2, tr, v).mu
        for eps in (1e-7, -1e-7):
            assert lib.lookup(GateKind.XOR2, tr, v + eps).mu == pytest.approx(here, abs=1e-3)


def test_shipped_csv_matches_generator():
    assert load_charlib(DEFAULT_CHARLIB) == default_charlib()
    assert DEFAULT_CHARLIB.read_text() == dumps_charlib(default_charlib())
