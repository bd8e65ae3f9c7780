"""Tests for Choi representations and the no-signalling machinery."""

import math

import numpy as np
import pytest

from qkdcert.causal import (
    ChoiState,
    NSProjector,
    QuantumChannel,
    apply_choi,
    channel_of_choi,
    check_ns_choi,
    check_ns_operational,
    choi_of_channel,
    plant_signalling,
    random_channel,
    random_ns_channel,
)
from qkdcert.linop import partial_trace_array


def random_density(rng, d):
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    m = g @ g.conj().T
    return m / np.trace(m).real


# ----------------------------------------------------------------- containers


def test_choi_state_validation():
    with pytest.raises(ValueError):
        ChoiState(np.eye(3) / 3, 2, 2)  # wrong shape
    with pytest.raises(ValueError):
        ChoiState(np.array([[0.0, 1.0], [0.0, 0.0]]), 1, 2)  # not Hermitian


def test_quantum_channel_validates_kraus_shapes():
    with pytest.raises(ValueError):
        QuantumChannel([np.eye(2)], dim_in=2, dim_out=3)


def test_identity_channel_choi_is_maximally_entangled():
    ch = QuantumChannel([np.eye(2)], 2, 2)
    choi = choi_of_channel(ch)
    phi = np.array([1, 0, 0, 1]) / math.sqrt(2)
    # index order is (input copy, output) interleaved per subsystem pair
    assert np.trace(choi.data).real == pytest.approx(1.0, abs=1e-12)
    assert choi.tp_residual() < 1e-12
    # rank one and overlap 1 with the canonical |Phi+>
    w = np.linalg.eigvalsh(choi.data)
    assert w[-1] == pytest.approx(1.0, abs=1e-12)
    vec = np.zeros(4, dtype=complex)
    vec[[0, 3]] = 1 / math.sqrt(2)
    assert abs(vec.conj() @ choi.data @ vec) == pytest.approx(1.0, abs=1e-12)
    assert phi @ choi.data @ phi == pytest.approx(1.0, abs=1e-12)


# ----------------------------------------------------------------- round trip


def test_choi_channel_roundtrip_on_random_channels():
    rng = np.random.default_rng(4)
    for seed, (din, dout, rank) in enumerate([(2, 2, 1), (2, 4, 2), (3, 2, 3), (2, 8, 2)]):
        ch = random_channel(din, dout, rank, seed=100 + seed)
        choi = choi_of_channel(ch)
        back = channel_of_choi(choi)
        for _ in range(5):
            rho = random_density(rng, din)
            out1 = ch.apply(rho)
            out2 = back.apply(rho)
            assert np.max(np.abs(out1 - out2)) < 1e-10


def test_apply_choi_matches_kraus_action():
    rng = np.random.default_rng(17)
    ch = random_channel(2, 6, 2, seed=42)
    choi = choi_of_channel(ch)
    for _ in range(6):
        rho = random_density(rng, 2)
        assert np.max(np.abs(apply_choi(choi, rho) - ch.apply(rho))) < 1e-11


def test_channel_of_choi_rejects_non_cp():
    bad = np.diag([0.7, 0.5, -0.1, -0.1])
    with pytest.raises(ValueError):
        channel_of_choi(ChoiState(bad, 2, 2))


def test_tp_residual_flags_trace_decreasing_maps():
    # keep only half the amplitude: clearly not trace preserving
    ch = QuantumChannel([np.eye(2) / math.sqrt(2)], 2, 2)
    assert ch.tp_residual() == pytest.approx(0.5, abs=1e-12)
    assert choi_of_channel(ch).tp_residual() == pytest.approx(0.25, abs=1e-12)


# ------------------------------------------------------------- no-signalling


def test_ns_holds_for_product_preparations():
    # rho -> Phi(rho) (x) tau can never signal into the second factor
    ch = random_ns_channel(2, (2, 3), kraus_rank=2, seed=11)
    assert ch.tp_residual() < 1e-9
    assert check_ns_choi(choi_of_channel(ch), (2, 3)) < 1e-9
    assert check_ns_operational(ch, (2, 3)) < 1e-9


def test_planted_signalling_is_detected_on_both_routes():
    base = random_ns_channel(2, (2, 2), kraus_rank=2, seed=23)
    bad = plant_signalling(base, (2, 2), weight=0.3, seed=5)
    assert bad.tp_residual() < 1e-9
    r_choi = check_ns_choi(choi_of_channel(bad), (2, 2))
    r_op = check_ns_operational(bad, (2, 2))
    assert r_choi > 1e-3
    assert r_op > 1e-3


def test_signalling_residual_grows_with_planted_weight():
    base = random_ns_channel(2, (2, 2), kraus_rank=1, seed=31)
    res = [
        check_ns_choi(choi_of_channel(plant_signalling(base, (2, 2), w, seed=9)), (2, 2))
        for w in (0.1, 0.3, 0.6)
    ]
    assert res[0] < res[1] < res[2]


def test_choi_and_operational_views_agree_on_a_sample():
    # small-scale version of the certification sweep: the two detectors must
    # classify every channel identically
    hits = 0
    for seed in range(30):
        if seed % 3 == 0:
            ch = random_ns_channel(2, (2, 2), kraus_rank=2, seed=seed)
            expect_ns = True
        elif seed % 3 == 1:
            ch = plant_signalling(
                random_ns_channel(2, (2, 2), kraus_rank=1, seed=seed), (2, 2),
                weight=0.25, seed=seed)
            expect_ns = False
        else:
            ch = random_channel(2, 4, 2, seed=seed)
            expect_ns = None  # unknown ground truth, just compare the views
        r_choi = check_ns_choi(choi_of_channel(ch), (2, 2))
        r_op = check_ns_operational(ch, (2, 2))
        assert (r_choi < 1e-7) == (r_op < 1e-7)
        if expect_ns is True:
            assert r_choi < 1e-9
        if expect_ns is False:
            assert r_choi > 1e-6
        hits += 1
    assert hits == 30


def test_check_ns_choi_validates_split():
    ch = random_channel(2, 4, 1, seed=3)
    with pytest.raises(ValueError):
        check_ns_choi(choi_of_channel(ch), (3, 2))


# ------------------------------------------------------------- NS projector


def test_ns_projector_residual_matches_check():
    ch = random_channel(2, 4, 2, seed=77)
    choi = choi_of_channel(ch)
    proj = NSProjector(2, 2, 2)
    assert proj.residual(choi.data) == pytest.approx(
        check_ns_choi(choi, (2, 2)), abs=1e-12)


def test_ns_projector_adjoint_identity():
    # <L(C), Y> == <C, Ldag(Y)> for random Hermitian C, Y
    rng = np.random.default_rng(8)
    proj = NSProjector(2, 2, 2)
    for _ in range(10):
        c = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
        c = c + c.conj().T
        y = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        y = y + y.conj().T
        lhs = np.vdot(y, proj.residual_matrix(c))
        rhs = np.vdot(proj.adjoint(y), c)
        assert abs(lhs - rhs) < 1e-10


def test_ns_projection_is_idempotent_orthogonal_and_feasible():
    rng = np.random.default_rng(12)
    proj = NSProjector(2, 2, 2)
    for _ in range(5):
        c = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
        c = c + c.conj().T
        p = proj.project(c)
        assert proj.residual(p) < 1e-9
        assert np.max(np.abs(proj.project(p) - p)) < 1e-9
        # the correction lives in range(Ldag), i.e. orthogonal to every
        # feasible direction; in particular re-projecting any shift of p by
        # a feasible matrix must return exactly that shift
        ns = choi_of_channel(random_ns_channel(2, (2, 2), 2, seed=50)).data
        assert np.max(np.abs(proj.project(p + ns) - (p + ns))) < 1e-8


def test_ns_projection_fixes_ns_chois():
    proj = NSProjector(2, 2, 2)
    choi = choi_of_channel(random_ns_channel(2, (2, 2), 2, seed=61)).data
    assert np.max(np.abs(proj.project(choi) - choi)) < 1e-9


# ------------------------------------------------------------ random channels


def test_random_channel_is_deterministic_per_seed():
    a = random_channel(2, 4, 2, seed=123)
    b = random_channel(2, 4, 2, seed=123)
    c = random_channel(2, 4, 2, seed=124)
    for ka, kb in zip(a.kraus, b.kraus):
        assert np.array_equal(ka, kb)
    assert any(not np.array_equal(ka, kc) for ka, kc in zip(a.kraus, c.kraus))


def test_random_channel_is_trace_preserving():
    for seed in range(5):
        ch = random_channel(3, 5, 2, seed=seed)
        assert ch.tp_residual() < 1e-12


def test_random_channel_rejects_impossible_shapes():
    with pytest.raises(ValueError):
        random_channel(4, 2, 1, seed=0)  # isometry cannot fit


def test_planted_route_requires_room_in_r():
    base = random_ns_channel(2, (2, 1), kraus_rank=1, seed=1)
    with pytest.raises(ValueError):
        plant_signalling(base, (2, 1), weight=0.5, seed=2)


def test_ns_channel_marginal_is_input_independent():
    ch = random_ns_channel(2, (3, 2), kraus_rank=2, seed=19)
    rng = np.random.default_rng(2)
    margs = []
    for _ in range(4):
        out = ch.apply(random_density(rng, 2))
        margs.append(partial_trace_array(out, (3, 2), [1]))
    for m in margs[1:]:
        assert np.max(np.abs(m - margs[0])) < 1e-10
