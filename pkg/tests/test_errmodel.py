import json

import numpy as np
import pytest

from vos_timing.errmodel import (
    ErrorPMF,
    InjectorTable,
    bit_violation_probs,
    error_pmf,
    inject,
    injector_table,
    table_from_analysis,
    word_stimuli,
)
from vos_timing.errors import MissingContext, OutOfRange, TooManyBits, UnknownWord
from vos_timing.netlist import Word
from vos_timing.ssta import analyze
from vos_timing.timedist import DEFAULT_GRID


@pytest.fixture(scope="module")
def adder4_result(lib, fixtures):
    return analyze(fixtures["adder4"], lib)


def test_bit_probs_static_and_limits(adder4_result):
    assert bit_violation_probs(adder4_result, "sum", 7, 7, 10.0) == [0.0] * 5
    assert bit_violation_probs(adder4_result, "sum", 3, 28, DEFAULT_GRID.t_max) == [0.0] * 5
    with pytest.raises(UnknownWord):
        bit_violation_probs(adder4_result, "nope", 0, 1, 10.0)
    with pytest.raises(OutOfRange):
        bit_violation_probs(adder4_result, "sum", 0, 99, 10.0)


def test_bit_probs_16_to_0_only_msb(lib, fixtures):
    n = fixtures["adder4"]
    res = analyze(n, lib, word_stimuli(n, "sum", 16, 0))
    p = bit_violation_probs(res, "sum", 16, 0, 60.0)
    assert p[:4] == [0.0] * 4 and p[4] > 0


def test_error_pmf_single_msb():
    w = Word("sum", tuple(f"s{i}" for i in range(5)))
    q = 0.3
    pmf = error_pmf([0, 0, 0, 0, q], 16, 0, w)
    assert pmf.pmf == {0: pytest.approx(1 - q), 16: pytest.approx(q)}


def test_error_pmf_all_on_time():
    assert error_pmf([0.0] * 4, 3, 12).pmf == {0: 1.0}


def test_error_pmf_two_bits_by_hand():
    # initial 0b01 -> final 0b10 ; bit0 late keeps 1, bit1 late keeps 0
    pmf = error_pmf([0.5, 0.5], 1, 2)
    # oracle: enumerate the four outcomes by hand
    outcomes = {}
    for late0 in (0, 1):
        for late1 in (0, 1):
            latched = (1 if late0 else 0) | ((0 if late1 else 1) << 1)
            outcomes[latched - 2] = outcomes.get(latched - 2, 0) + 0.25
    assert pmf.pmf == pytest.approx(outcomes)
    assert set(pmf.pmf) == {-2, -1, 0, 1}


def test_error_pmf_signed_msb_weight():
    w = Word("d", ("d0", "d1", "d2"), signed=True)
    # -4 (100) -> 0 (000): a late MSB keeps -4
    assert error_pmf([0, 0, 1.0], -4, 0, w).pmf == {-4: 1.0, 0: 0.0}


def test_error_pmf_bounds():
    with pytest.raises(TooManyBits):
        error_pmf([0.1] * 25, 0, (1 << 25) - 1)
    with pytest.raises(ValueError):
        error_pmf([1.5], 0, 1)
    with pytest.raises(ValueError):
        ErrorPMF({0: 0.5})


def test_pmf_csv_and_zero_entry():
    pmf = ErrorPMF({16: 0.0, 0: 1.0})
    assert pmf.to_csv() == "magnitude,probability\n0,1.0\n16,0.0\n"
    assert ErrorPMF({4: 1.0}).pmf[0] == 0.0


def test_injection_identity_cases():
    t = InjectorTable("w", 100.0, 0.7)
    t.pmfs[(0, 5)] = ErrorPMF({0: 1.0})
    t.pmfs[(5, 0)] = ErrorPMF({0: 1.0})
    stream = [5, 0, 5, 0]
    assert inject(stream, t, seed=1).tolist() == stream
    assert inject([0] * 10, t, seed=1).tolist() == [0] * 10
    with pytest.raises(MissingContext):
        inject([7], t, seed=1)


def test_injection_frequency_binomial():
    q = 0.3
    t = InjectorTable("sum", 100.0, 0.7)
    t.pmfs[(16, 0)] = ErrorPMF({0: 1 - q, 16: q})
    t.pmfs[(0, 16)] = ErrorPMF({0: 1.0})
    n = 100_000
    stream = np.tile([16, 0], n)
    out = inject(stream, t, seed=9)
    held = out[1::2] == 16
    sd = np.sqrt(q * (1 - q) / n)
    assert abs(held.mean() - q) < 3 * sd
    assert np.array_equal(out, inject(stream, t, seed=9))


def test_table_json_round_trip(adder4_result):
    t = table_from_analysis(adder4_result, "sum", 40.0).fill([(16, 0), (3, 12), (0, 31)])
    back = InjectorTable.from_json(t.to_json())
    for key in t.pmfs:
        assert back.get(*key).pmf == pytest.approx(t.pmfs[key].pmf)
    assert "16:0" in json.loads(t.to_json())["contexts"]


def test_pmfs_normalized_and_zero_limit(lib, fixtures, adder4_result):
    t = table_from_analysis(adder4_result, "sum", 45.0)
    for i in range(0, 32, 3):
        for f in range(0, 32, 5):
            assert sum(t.get(i, f).pmf.values()) == pytest.approx(1.0, abs=1e-6)
    # beyond every path's mean + 6 sigma no bit can be late
    quiet = table_from_analysis(adder4_result, "sum", 250.0)
    for i in range(0, 32, 7):
        for f in range(32):
            assert quiet.get(i, f).support == {0}


def test_word_conditioned_table_16_to_0(lib, fixtures):
    t = injector_table(fixtures["adder4"], lib, "sum", 60.0, contexts=[(16, 0)])
    pmf = t.get(16, 0)
    assert pmf.support <= {0, 16} and pmf[16] > 0


def test_word_stimuli_weights(fixtures):
    n = fixtures["adder4"]
    s = word_stimuli(n, "sum", 16, 0)
    # 16 = a + b + cin with 4-bit operands: count the decompositions, 0 has one
    ways = sum(1 for a in range(16) for b in range(16) for c in (0, 1) if a + b + c == 16)
    assert len(s) == ways
    with pytest.raises(OutOfRange):
        word_stimuli(n, "sum", 40, 0)
