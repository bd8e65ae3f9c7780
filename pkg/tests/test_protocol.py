"""Tests for timing rules, round evaluation, and the honest simulator."""

import math
from fractions import Fraction

import numpy as np
import pytest

from qkdcert.entropy import TradeoffFunction, lift_tradeoff
from qkdcert.optics import honest_statistics
from qkdcert.protocol import (
    SPEED_OF_LIGHT,
    TimingConfig,
    compare_protocols,
    evaluate_round,
    schedule_rounds,
    simulate_honest,
    throughput_cap,
    timing_accept,
    timing_min_delay,
)

NS = 10**9


def fibre_cfg(d, index=1.5, slack=1.001):
    cfg = TimingConfig(d=d, refractive_index=index, delta_t=1.0)
    dt = max(slack * timing_min_delay(cfg), 1e-12)
    return TimingConfig(d=d, refractive_index=index, delta_t=dt)


# ------------------------------------------------------------------ timing


def test_timing_config_validation():
    with pytest.raises(ValueError):
        TimingConfig(d=1.0, refractive_index=1.5, delta_t=0.0)
    with pytest.raises(ValueError):
        TimingConfig(d=-1.0, refractive_index=1.5, delta_t=1e-5)


def test_min_delay_values():
    assert timing_min_delay(TimingConfig(d=5.0, refractive_index=1.0,
                                         delta_t=1e-6)) == 0.0
    cfg = TimingConfig(d=30e3, refractive_index=1.5, delta_t=1e-4)
    assert timing_min_delay(cfg) == pytest.approx(5.0035e-5, rel=1e-4)
    double = TimingConfig(d=60e3, refractive_index=1.5, delta_t=1e-4)
    assert timing_min_delay(double) == pytest.approx(2 * timing_min_delay(cfg))
    with pytest.raises(ValueError):
        timing_min_delay(TimingConfig(d=1.0, refractive_index=0.9,
                                      delta_t=1e-6))


def test_accept_window_is_strict():
    cfg = TimingConfig(d=30e3, refractive_index=1.5, delta_t=6e-5)
    window_ns = (2 * Fraction(6e-5) + Fraction(30e3) / Fraction(cfg.c)) * NS
    assert not timing_accept(0, window_ns, cfg)
    assert timing_accept(0, window_ns - Fraction(1, 10**6), cfg)


def test_accept_rejects_late_reply_even_at_zero_distance():
    cfg = TimingConfig(d=0.0, refractive_index=1.0, delta_t=1e-12)
    assert not timing_accept(0, Fraction(1), cfg)  # 1 ns >> the window


@pytest.mark.parametrize("d", [1.0, 100.0, 1e4, 1e5])
def test_fibre_arrival_accepted_when_delay_above_minimum(d):
    cfg = fibre_cfg(d)
    t_b = (Fraction(cfg.refractive_index) * Fraction(d) / Fraction(cfg.c)
           + Fraction(cfg.delta_t)) * NS
    assert timing_accept(0, t_b, cfg)


def test_schedule_is_arithmetic_and_distance_free():
    cfg = TimingConfig(d=0.0, refractive_index=1.0, delta_t=1.0)
    ts = schedule_rounds(0, cfg, 3)
    assert ts == (0, 2 * NS, 4 * NS)
    far = TimingConfig(d=75e3, refractive_index=1.5, delta_t=1.0)
    assert schedule_rounds(0, far, 3) == ts
    assert schedule_rounds(7, cfg, 1) == (7,)


def test_throughput_cap_value():
    cfg = TimingConfig(d=0.0, refractive_index=1.0, delta_t=5e-5)
    assert throughput_cap(0.05, cfg) == pytest.approx(500.0)


# -------------------------------------------------------------- evaluation


@pytest.mark.parametrize("a,j,c", [
    (0, 0, "corr"), (1, 1, "corr"),
    (1, 0, "err"), (0, 1, "err"), ("bot", 1, "err"),
    (0, "bot", "bot"), ("bot", "bot", "bot"),
    (1, "empty", "empty"),
])
def test_evaluate_round_table(a, j, c):
    assert evaluate_round(a, j) == c


def test_evaluate_round_rejects_garbage():
    with pytest.raises(ValueError):
        evaluate_round(0, 2)


# -------------------------------------------------------------- simulation


def test_simulator_validates_inputs():
    with pytest.raises(ValueError):
        simulate_honest("relativistic", 0, 0.45, 1.0, 0.0, 0.1, seed=1)
    with pytest.raises(ValueError):
        simulate_honest("relativistic", 10**7 + 1, 0.45, 1.0, 0.0, 0.1, seed=1)
    with pytest.raises(ValueError):
        simulate_honest("bb84", 100, 0.45, 1.0, 0.0, 0.1, seed=1)
    with pytest.raises(ValueError):
        simulate_honest("relativistic", 100, 0.45, 1.0, 0.0, 0.0, seed=1)


def test_transcript_audit_and_normalisation():
    tr = simulate_honest("relativistic", 20000, 0.45, 0.6, 0.03, 0.1, seed=7)
    assert tr.audit()
    assert sum(tr.counts.values()) == tr.n
    assert sum(tr.freq.values()) == pytest.approx(1.0, abs=1e-12)
    assert tr.timing_ok
    for i, c in enumerate(tr.c_out[:200]):
        a = tr.key_bits[i] if tr.click[i] else "bot"
        j = "empty" if not tr.test[i] else (
            "bot" if tr.b_out[i] < 0 else int(tr.b_out[i]))
        assert ("corr", "err", "bot", "empty")[c] == evaluate_round(a, j)


def test_simulator_is_deterministic_per_seed(tmp_path):
    kw = dict(n=4000, alpha=0.45, eta=0.6, qber=0.01, gamma=0.1)
    a = simulate_honest("dps", seed=11, **kw)
    b = simulate_honest("dps", seed=11, **kw)
    other = simulate_honest("dps", seed=12, **kw)
    assert np.array_equal(a.c_out, b.c_out)
    assert a.ec_tag_alice == b.ec_tag_alice
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    a.to_csv(pa)
    b.to_csv(pb)
    assert pa.read_bytes() == pb.read_bytes()
    assert not np.array_equal(a.c_out, other.c_out)


def test_verification_hash_behaviour():
    clean = simulate_honest("relativistic", 20000, 0.45, 0.6, 0.0, 0.1, seed=7)
    assert clean.ec_pass
    noisy = simulate_honest("relativistic", 20000, 0.45, 0.6, 0.03, 0.1, seed=7)
    assert not noisy.ec_pass
    a_bits, b_bits = clean.sifted_key()
    assert np.array_equal(a_bits, b_bits)
    assert len(a_bits) == int(np.count_nonzero((clean.test == 0)
                                               & (clean.click == 1)))


def test_frequencies_match_honest_statistics():
    n, gamma = 10**5, 0.1
    hs = honest_statistics(0.45, 0.6, 0.03)
    tr = simulate_honest("relativistic", n, 0.45, 0.6, 0.03, gamma, seed=5)
    expected = {"corr": gamma * hs.p_corr, "err": gamma * hs.p_err,
                "bot": gamma * hs.p_bot, "empty": 1.0 - gamma}
    for c, p in expected.items():
        band = 4.0 * math.sqrt(p * (1.0 - p) / n)
        assert abs(tr.freq[c] - p) <= band, (c, tr.freq[c], p)


def test_dps_round_structure():
    tr = simulate_honest("dps", 3000, 0.45, 0.6, 0.0, 0.1, seed=3)
    assert tr.pulses == tr.n + 1
    prev = np.concatenate(([tr.init_bit], tr.bits[:-1])).astype(np.uint8)
    assert np.array_equal(tr.key_bits, tr.bits ^ prev)
    rel = simulate_honest("relativistic", 3000, 0.45, 0.6, 0.0, 0.1, seed=3)
    assert rel.pulses == rel.n
    assert np.array_equal(rel.key_bits, rel.bits)


def test_timestamps_follow_schedule():
    tr = simulate_honest("relativistic", 100, 0.45, 0.6, 0.0, 0.1, seed=1)
    t0a, t0b = tr.round_times(0)
    t1a, _ = tr.round_times(1)
    assert t1a - t0a == tr.step_ns == 2 * Fraction(5e-5) * NS
    assert t0b - t0a == tr.response_ns
    assert timing_accept(t0a, t0b, TimingConfig(d=0.0, refractive_index=1.0,
                                                delta_t=5e-5))


def test_pe_verdict_against_tradeoff():
    g = TradeoffFunction(c=0.0, lam=np.array([0.3, -5.0, 0.0]), gamma=0.05)
    tr = simulate_honest("relativistic", 50000, 0.45, 0.6, 0.0, 0.05, seed=2,
                         tradeoff=g, h_exp=None)
    assert tr.pe_value is not None and tr.pe_abort is None
    f = lift_tradeoff(g, 0.05)
    hs = honest_statistics(0.45, 0.6, 0.0)
    honest_val = f.evaluate([0.05 * hs.p_corr, 0.05 * hs.p_err,
                             0.05 * hs.p_bot, 0.95])
    assert tr.pe_value == pytest.approx(honest_val, abs=0.02)
    easy = simulate_honest("relativistic", 50000, 0.45, 0.6, 0.0, 0.05, seed=2,
                           tradeoff=f, h_exp=honest_val - 1.0)
    assert easy.pe_abort is False
    hard = simulate_honest("relativistic", 50000, 0.45, 0.6, 0.0, 0.05, seed=2,
                           tradeoff=f, h_exp=f.max_f + 1.0)
    assert hard.pe_abort is True
    with pytest.raises(ValueError):
        simulate_honest("relativistic", 1000, 0.45, 0.6, 0.0, 0.1, seed=2,
                        tradeoff=f, h_exp=0.0)  # lifted at gamma=0.05


def test_csv_layout(tmp_path):
    tr = simulate_honest("dps", 64, 0.45, 0.6, 0.02, 0.5, seed=9)
    path = tmp_path / "rounds.csv"
    tr.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "index,A,B,I,T,J,C,t_A,t_B"
    assert len(lines) == tr.n + 1
    first = lines[1].split(",")
    assert first[0] == "0"
    assert first[1] in ("0", "1", "bot")
    assert first[6] in ("corr", "err", "bot", "empty")
    assert first[7] == "0"


# -------------------------------------------------------------- comparison


def test_compare_protocols_arithmetic():
    rel = {"protocol": "relativistic", "alpha": 0.45, "eta": 0.1,
           "qber": 0.0, "rate": 0.012}
    dps = {"protocol": "dps", "alpha": 0.45, "eta": 0.1,
           "qber": 0.0, "rate": 0.007}
    out = compare_protocols(rel, dps)
    assert out["r_rel_half"] == pytest.approx(0.006)
    assert out["ratio"] == pytest.approx(0.007 / 0.006)


def test_compare_protocols_validates():
    rel = {"protocol": "relativistic", "alpha": 0.45, "eta": 0.1,
           "qber": 0.0, "rate": 0.01}
    dps = {"protocol": "dps", "alpha": 0.45, "eta": 0.2,
           "qber": 0.0, "rate": 0.01}
    with pytest.raises(ValueError):
        compare_protocols(rel, dps)
    with pytest.raises(ValueError):
        compare_protocols(dps, dps)
    both_zero = compare_protocols({**rel, "rate": 0.0},
                                  {**dps, "eta": 0.1, "rate": 0.0})
    assert both_zero["ratio"] == 1.0
