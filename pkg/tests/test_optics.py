"""Tests for the truncated-Fock optics layer.

The oracle values here are closed forms: Poisson photon statistics for
coherent states, the Hong-Ou-Mandel dip for the double-click element, and
the amplitude arithmetic of the balanced beam splitter.
"""

import math

import numpy as np
import pytest

from qkdcert.linop import DensityOperator
from qkdcert.optics import (
    FockSpace,
    HonestStatistics,
    OUTCOMES,
    apply_loss,
    beam_splitter,
    coherent_state,
    detector_povm,
    honest_statistics,
    loss_kraus,
)


def two_mode_coherent(a, b, cutoff):
    sa, _ = coherent_state(a, cutoff)
    sb, _ = coherent_state(b, cutoff)
    return np.kron(sa.amplitudes, sb.amplitudes)


# ----------------------------------------------------------------- fockspace


def test_fock_space_indexing():
    sp = FockSpace(cutoff=3, modes=2)
    assert sp.dim == 16
    assert sp.index(2, 1) == 2 * 4 + 1
    with pytest.raises(ValueError):
        sp.index(4, 0)
    with pytest.raises(ValueError):
        FockSpace(cutoff=0)


# ------------------------------------------------------------ coherent state


def test_coherent_state_matches_poisson():
    alpha, cutoff = 0.45, 6
    st, tail = coherent_state(alpha, cutoff)
    lam = alpha * alpha
    probs = np.abs(st.amplitudes) ** 2
    kept = sum(math.exp(-lam) * lam**n / math.factorial(n) for n in range(cutoff + 1))
    for n in range(cutoff + 1):
        expected = math.exp(-lam) * lam**n / math.factorial(n) / kept
        assert probs[n] == pytest.approx(expected, abs=1e-12)
    assert tail == pytest.approx(1.0 - kept, abs=1e-15)
    assert tail == pytest.approx(2.321e-9, rel=1e-3)
    assert np.linalg.norm(st.amplitudes) == pytest.approx(1.0, abs=1e-12)


def test_coherent_state_vacuum():
    st, tail = coherent_state(0.0, 4)
    assert st.amplitudes[0] == pytest.approx(1.0)
    assert tail == 0.0


# ------------------------------------------------------------- beam splitter


def test_beam_splitter_single_photon():
    u = beam_splitter(2)
    sp = FockSpace(2, 2)
    out = u[:, sp.index(1, 0)]
    expected = np.zeros(9)
    expected[sp.index(1, 0)] = 1 / math.sqrt(2)
    expected[sp.index(0, 1)] = 1 / math.sqrt(2)
    assert np.max(np.abs(out - expected)) < 1e-12


def test_beam_splitter_coherent_amplitude_arithmetic():
    cutoff = 8
    a, b = 0.45, 0.2
    u = beam_splitter(cutoff)
    out = u @ two_mode_coherent(a, b, cutoff)
    expected = two_mode_coherent((a + b) / math.sqrt(2), (a - b) / math.sqrt(2), cutoff)
    # overlap limited only by truncation tails
    assert abs(np.vdot(expected, out)) > 1 - 1e-6


def test_beam_splitter_block_unitary_and_involutive():
    cutoff = 5
    u = beam_splitter(cutoff)
    sp = FockSpace(cutoff, 2)
    gram = u.T @ u
    twice = u @ u
    for n in range(cutoff + 1):
        for m in range(cutoff + 1):
            if n + m <= cutoff:
                i = sp.index(n, m)
                e = np.zeros(sp.dim)
                e[i] = 1.0
                assert np.max(np.abs(gram[:, i] - e)) < 1e-10
                assert np.max(np.abs(twice[:, i] - e)) < 1e-10


def test_beam_splitter_conserves_photon_number():
    cutoff = 4
    u = beam_splitter(cutoff)
    sp = FockSpace(cutoff, 2)
    num = np.zeros((sp.dim, sp.dim))
    for n in range(cutoff + 1):
        for m in range(cutoff + 1):
            num[sp.index(n, m), sp.index(n, m)] = n + m
    assert np.max(np.abs(u @ num - num @ u)) < 1e-12


# ------------------------------------------------------------- detector POVM


def test_povm_completeness_and_positivity():
    for cutoff in (2, 4, 6):
        p = detector_povm(cutoff)
        dim = (cutoff + 1) ** 2
        total = p[0] + p[1] + p["bot"]
        assert np.max(np.abs(total - np.eye(dim))) < 1e-12
        for key in (0, 1, "bot"):
            assert np.min(np.linalg.eigvalsh(p[key])) > -1e-9
        for key in ("w0", "w1", "dc", "vac"):
            assert np.min(np.linalg.eigvalsh(p["raw"][key])) > -1e-9


def test_povm_single_photon_random_port():
    p = detector_povm(3)
    sp = FockSpace(3, 2)
    rho = np.zeros((sp.dim, sp.dim))
    rho[sp.index(1, 0), sp.index(1, 0)] = 1.0
    assert np.trace(p[0] @ rho).real == pytest.approx(0.5, abs=1e-12)
    assert np.trace(p[1] @ rho).real == pytest.approx(0.5, abs=1e-12)
    assert np.trace(p["raw"]["dc"] @ rho).real == pytest.approx(0.0, abs=1e-12)


def test_povm_hong_ou_mandel_no_double_click():
    # |1,1> never double-clicks on a balanced beam splitter
    p = detector_povm(3)
    sp = FockSpace(3, 2)
    rho = np.zeros((sp.dim, sp.dim))
    rho[sp.index(1, 1), sp.index(1, 1)] = 1.0
    assert np.trace(p["raw"]["dc"] @ rho).real == pytest.approx(0.0, abs=1e-12)
    # while |2,0> double-clicks half the time
    rho2 = np.zeros((sp.dim, sp.dim))
    rho2[sp.index(2, 0), sp.index(2, 0)] = 1.0
    assert np.trace(p["raw"]["dc"] @ rho2).real == pytest.approx(0.5, abs=1e-12)


def test_povm_coherent_beam_statistics():
    # equal coherent inputs steer every photon into port 0
    cutoff, alpha = 8, 0.45
    p = detector_povm(cutoff)
    psi = two_mode_coherent(alpha, alpha, cutoff)
    rho = np.outer(psi, psi.conj())
    p0 = np.trace(p[0] @ rho).real
    p1 = np.trace(p[1] @ rho).real
    pb = np.trace(p["bot"] @ rho).real
    assert pb == pytest.approx(math.exp(-2 * alpha**2), abs=1e-9)
    assert p1 == pytest.approx(0.0, abs=1e-9)
    assert p0 == pytest.approx(1 - math.exp(-2 * alpha**2), abs=1e-9)


# -------------------------------------------------------------------- loss


def test_loss_kraus_trace_preserving():
    for eta in (0.0, 0.3, 0.7, 1.0):
        ks = loss_kraus(eta, 5)
        total = sum(k.conj().T @ k for k in ks)
        assert np.max(np.abs(total - np.eye(6))) < 1e-12


def test_apply_loss_on_coherent_state():
    cutoff, alpha, eta = 8, 0.45, 0.1
    st, _ = coherent_state(alpha, cutoff)
    rho = apply_loss(st.to_density(), eta)
    assert rho.trace() == pytest.approx(1.0, abs=1e-12)
    target, _ = coherent_state(math.sqrt(eta) * alpha, cutoff)
    fid = (target.amplitudes.conj() @ rho.data @ target.amplitudes).real
    assert fid > 1 - 1e-9
    # spec of the amplitude map itself
    assert math.sqrt(eta) * alpha == pytest.approx(0.142302, abs=1e-6)


def test_apply_loss_limits():
    st, _ = coherent_state(0.7, 6)
    rho = st.to_density()
    out1 = apply_loss(rho, 1.0)
    assert np.max(np.abs(out1.data - rho.data)) < 1e-12
    out0 = apply_loss(rho, 0.0)
    vac = np.zeros_like(rho.data)
    vac[0, 0] = 1.0
    assert np.max(np.abs(out0.data - vac)) < 1e-12


def test_apply_loss_second_mode():
    cutoff = 6
    a, _ = coherent_state(0.45, cutoff)
    b, _ = coherent_state(0.6, cutoff)
    joint = DensityOperator(
        np.kron(a.projector(), b.projector()), (cutoff + 1, cutoff + 1)
    )
    out = apply_loss(joint, 0.25, mode=1)
    # mode 0 untouched
    from qkdcert.linop import partial_trace

    red = partial_trace(out, [0])
    assert np.max(np.abs(red.data - a.projector())) < 1e-12
    # mode 1 attenuated
    red1 = partial_trace(out, [1])
    target, _ = coherent_state(0.5 * 0.6, cutoff)
    fid = (target.amplitudes.conj() @ red1.data @ target.amplitudes).real
    assert fid > 1 - 1e-6


# -------------------------------------------------------- honest statistics


def test_honest_statistics_relativistic_anchors():
    s = honest_statistics(0.45, 1.0, 0.0)
    assert s.p_bot == pytest.approx(0.666976, abs=1e-5)
    assert s.p_corr == pytest.approx(0.333024, abs=1e-5)
    assert s.p_err == 0.0
    s2 = honest_statistics(0.45, 0.1, 0.05)
    assert s2.p_bot == pytest.approx(0.960310, abs=1e-5)
    assert s2.p_err == pytest.approx(0.0019845, abs=1e-5)
    assert s2.p_corr == pytest.approx(0.0377055, abs=1e-5)
    assert s2.qber == pytest.approx(0.05, abs=1e-12)


def test_honest_statistics_normalized_and_ordered():
    s = honest_statistics(0.6, 0.42, 0.03, protocol="dps")
    arr = s.as_array()
    assert arr.sum() == pytest.approx(1.0, abs=1e-12)
    assert OUTCOMES == ("corr", "err", "bot")


def test_honest_statistics_dps_closed_form():
    s = honest_statistics(0.45, 1.0, 0.0, protocol="dps")
    assert s.p_bot == pytest.approx(math.exp(-0.2025), abs=1e-12)


def test_honest_statistics_dps_matches_fock_interferometer():
    # two consecutive pulses of amplitude sqrt(eta)a/sqrt2 on the beam
    # splitter: one port carries sqrt(eta)a, the other the vacuum
    alpha, eta, cutoff = 0.45, 0.7, 8
    u = beam_splitter(cutoff)
    amp = math.sqrt(eta) * alpha / math.sqrt(2)
    out = u @ two_mode_coherent(amp, amp, cutoff)
    p_vac = abs(out[0]) ** 2
    s = honest_statistics(alpha, eta, 0.0, protocol="dps")
    assert p_vac == pytest.approx(s.p_bot, abs=1e-6)
    # and the dark port really is dark: no error clicks
    sp = FockSpace(cutoff, 2)
    dark = sum(
        abs(out[sp.index(0, m)]) ** 2 for m in range(1, cutoff + 1)
    )
    assert dark < 1e-9


def test_honest_statistics_validation():
    with pytest.raises(ValueError):
        honest_statistics(0.45, 1.0, 0.0, protocol="bb84")
    with pytest.raises(ValueError):
        honest_statistics(0.45, 1.2, 0.0)
    with pytest.raises(ValueError):
        honest_statistics(0.45, 1.0, 1.2)
    with pytest.raises(ValueError):
        honest_statistics(-0.1, 1.0, 0.0)
    with pytest.raises(ValueError):
        HonestStatistics(0.5, 0.5, 0.5)
