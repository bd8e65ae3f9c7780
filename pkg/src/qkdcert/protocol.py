"""Round-level protocol semantics: timing, evaluation, and honest simulation.

Timestamps are exact rationals in nanoseconds (`fractions.Fraction`), so the
strict timing inequality never depends on float rounding.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .entropy import TradeoffFunction, lift_tradeoff
from .optics import honest_statistics

SPEED_OF_LIGHT = 2.99792458e8  # m/s, by definition

CORR, ERR, BOT, EMPTY = "corr", "err", "bot", "empty"
_C_SYMBOLS = (CORR, ERR, BOT, EMPTY)

_NS = 10**9


def _exact(x) -> Fraction:
    """Exact rational value of a number (floats convert losslessly)."""
    return x if isinstance(x, Fraction) else Fraction(x)


@dataclass(frozen=True)
class TimingConfig:
    """Geometry and pacing of one Alice-Bob link.

    d: line-of-sight distance in meters; refractive_index: of the fibre
    actually carrying the pulses; delta_t: Bob's allowed response delay in
    seconds; c: vacuum speed of light (fixed).
    """

    d: float
    refractive_index: float
    delta_t: float
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if self.delta_t <= 0:
            raise ValueError(f"delta_t must be positive, got {self.delta_t!r}")
        if self.d < 0:
            raise ValueError(f"distance must be nonnegative, got {self.d!r}")


def timing_min_delay(cfg: TimingConfig) -> float:
    """Smallest response delay an in-fibre signal can meet: (n - 1) d / c."""
    if cfg.refractive_index < 1.0:
        raise ValueError(
            f"refractive index must be >= 1, got {cfg.refractive_index!r}")
    return (cfg.refractive_index - 1.0) * cfg.d / cfg.c


def _accept_window_ns(cfg: TimingConfig) -> Fraction:
    return (2 * _exact(cfg.delta_t) + _exact(cfg.d) / _exact(cfg.c)) * _NS


def timing_accept(t_a_ns, t_b_ns, cfg: TimingConfig) -> bool:
    """Accept a round iff t_B - t_A < 2*delta_t + d/c, exactly and strictly.

    Times are in nanoseconds; any real number type is accepted and compared
    as an exact rational.  Equality with the window is a reject.
    """
    return _exact(t_b_ns) - _exact(t_a_ns) < _accept_window_ns(cfg)


def schedule_rounds(t_start_ns, cfg: TimingConfig, n_rounds: int) -> tuple:
    """Emission timestamps (ns): an arithmetic sequence with step 2*delta_t."""
    if n_rounds < 0:
        raise ValueError("n_rounds must be nonnegative")
    t0 = _exact(t_start_ns)
    step = 2 * _exact(cfg.delta_t) * _NS
    return tuple(t0 + i * step for i in range(n_rounds))


def throughput_cap(rate: float, cfg: TimingConfig) -> float:
    """Key throughput ceiling in bits per second: rate / (2*delta_t)."""
    return rate / (2.0 * cfg.delta_t)


def evaluate_round(a, j):
    """Public per-round verdict from Alice's symbol and Bob's announcement.

    a is 0, 1, or "bot"; j is 0, 1, "bot", or "empty" (no announcement).
    """
    if j == EMPTY:
        return EMPTY
    if j == BOT:
        return BOT
    if j not in (0, 1):
        raise ValueError(f"announcement must be 0, 1, 'bot' or 'empty', got {j!r}")
    return CORR if a == j else ERR


@dataclass
class RoundTranscript:
    """Everything the public channel and the two labs record about one run.

    Per-round arrays are integer-coded for compactness: b_out and j_out use
    -1 for "bot" and j_out uses -2 for "empty"; c_out indexes into
    ("corr", "err", "bot", "empty").  Timestamps are reconstructed on demand
    from (t_start_ns, step_ns, response_ns) since emission is periodic.
    """

    protocol: str
    n: int
    alpha: float
    eta: float
    qber: float
    gamma: float
    seed: int
    bits: np.ndarray          # Alice's fresh randomness, one bit per round
    init_bit: int             # extra seed pulse bit (dps only; 0 otherwise)
    key_bits: np.ndarray      # Alice's encoded bit per round (= bits for rel)
    b_out: np.ndarray
    click: np.ndarray
    test: np.ndarray
    j_out: np.ndarray
    c_out: np.ndarray
    t_start_ns: Fraction
    step_ns: Fraction
    response_ns: Fraction
    timing_ok: bool
    pulses: int
    counts: dict
    freq: dict
    ec_tag_alice: int
    ec_tag_bob: int
    ec_pass: bool
    pe_value: float | None = None
    h_exp: float | None = None
    pe_abort: bool | None = None
    extra: dict = field(default_factory=dict, repr=False)

    # -- derived views -------------------------------------------------------
    def round_times(self, i: int) -> tuple:
        """(t_A, t_B) of round i in exact nanoseconds."""
        t_a = self.t_start_ns + i * self.step_ns
        return t_a, t_a + self.response_ns

    def alice_symbols(self) -> np.ndarray:
        """Sifted key symbols: the encoded bit where Bob clicked, else 2."""
        return np.where(self.click == 1, self.key_bits, 2).astype(np.int8)

    def sifted_key(self) -> tuple:
        """(alice_bits, bob_bits) on generation rounds with a click."""
        keep = (self.test == 0) & (self.click == 1)
        return (self.key_bits[keep].astype(np.uint8),
                self.b_out[keep].astype(np.uint8))

    def audit(self) -> bool:
        """Recheck the public verdicts and the frequency normalisation."""
        a = self.alice_symbols()
        expect = np.where(
            self.test == 0, 3,
            np.where(self.b_out < 0, 2, np.where(self.b_out == a, 0, 1)))
        if not np.array_equal(expect.astype(np.int8), self.c_out):
            return False
        return abs(sum(self.freq.values()) - 1.0) < 1e-12

    def to_csv(self, path) -> None:
        """One row per round: index,A,B,I,T,J,C,t_A,t_B (exact ns)."""
        sym = {0: "0", 1: "1", -1: "bot", -2: "empty", 2: "bot"}
        a = self.alice_symbols()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "A", "B", "I", "T", "J", "C", "t_A", "t_B"])
            for i in range(self.n):
                t_a, t_b = self.round_times(i)
                w.writerow([i, sym[int(a[i])], sym[int(self.b_out[i])],
                            int(self.click[i]), int(self.test[i]),
                            sym[int(self.j_out[i])], _C_SYMBOLS[self.c_out[i]],
                            str(t_a), str(t_b)])


_FIELD = (1 << 64) - 59  # largest 64-bit prime


def _hash_tag(symbols: np.ndarray, point: int, k: int = 40) -> int:
    """Toy verification tag: polynomial hashing over a 64-bit field.

    The symbol string is packed one byte per symbol, split into 64-bit words,
    and the polynomial with those coefficients is evaluated at a random field
    point; the top k bits form the tag.  Distinct strings of m words collide
    with probability about m / 2**64 over the choice of point.
    """
    data = symbols.astype(np.uint8).tobytes()
    r = point % _FIELD or 1
    h = 0
    for i in range(0, len(data), 8):
        h = (h * r + int.from_bytes(data[i:i + 8], "little")) % _FIELD
    return h >> (64 - k)


def simulate_honest(protocol: str, n: int, alpha: float, eta: float,
                    qber: float, gamma: float, seed: int, *,
                    timing: TimingConfig | None = None,
                    tradeoff: TradeoffFunction | None = None,
                    h_exp: float | None = None) -> RoundTranscript:
    """Monte-Carlo run of an honest (attack-free, IID) session.

    Bob's outcome per round is drawn from the honest statistics of the chosen
    protocol; he announces the click indicator for every round and his outcome
    on an independent gamma-fraction of test rounds.  Error correction is
    modelled as the verification step only (a multiply-shift hash over the
    full symbol strings) - at qber=0 it always passes.  If `tradeoff` and
    `h_exp` are given, the run also records the parameter-estimation verdict:
    abort iff the tradeoff value of the observed frequencies is <= h_exp.

    Deterministic per seed: equal seeds give byte-identical transcripts.
    """
    n = int(n)
    if not 1 <= n <= 10**7:
        raise ValueError(f"n must be in [1, 1e7], got {n}")
    if protocol not in ("relativistic", "dps"):
        raise ValueError(f"unknown protocol {protocol!r}")
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma!r}")
    hs = honest_statistics(alpha, eta, qber, protocol)
    rng = np.random.default_rng(seed)

    if protocol == "dps":
        raw = rng.integers(0, 2, size=n + 1, dtype=np.uint8)
        init_bit, bits = int(raw[0]), raw[1:]
        key_bits = np.bitwise_xor(raw[1:], raw[:-1])
        pulses = n + 1
    else:
        bits = rng.integers(0, 2, size=n, dtype=np.uint8)
        init_bit, key_bits, pulses = 0, bits, n

    u = rng.random(n)
    outcome = (u >= hs.p_corr).astype(np.int8) + (u >= hs.p_corr + hs.p_err)
    b_out = np.where(outcome == 2, -1,
                     np.where(outcome == 0, key_bits, 1 - key_bits)).astype(np.int8)
    click = (outcome != 2).astype(np.uint8)
    test = (rng.random(n) < gamma).astype(np.uint8)
    j_out = np.where(test == 1, b_out, -2).astype(np.int8)
    c_out = np.where(test == 0, 3,
                     np.where(outcome == 2, 2, outcome)).astype(np.int8)

    counts = {c: int(np.count_nonzero(c_out == k))
              for k, c in enumerate(_C_SYMBOLS)}
    freq = {c: counts[c] / n for c in _C_SYMBOLS}

    # Bob's reconciliation guess is his own record (no decoder here): the
    # no-click positions he announced himself, his outcome elsewhere.
    a_sym = np.where(click == 1, key_bits, 2).astype(np.uint8)
    b_sym = np.where(click == 1, b_out, 2).astype(np.uint8)
    point = int(rng.integers(1, 2**63, dtype=np.int64))
    tag_a = _hash_tag(a_sym, point)
    tag_b = _hash_tag(b_sym, point)

    cfg = timing if timing is not None else TimingConfig(
        d=0.0, refractive_index=1.0, delta_t=5e-5)
    step_ns = 2 * _exact(cfg.delta_t) * _NS
    response_ns = (_exact(cfg.refractive_index) * _exact(cfg.d) / _exact(cfg.c)
                   + _exact(cfg.delta_t)) * _NS
    timing_ok = timing_accept(0, response_ns, cfg)

    pe_value = pe_abort = None
    if tradeoff is not None:
        f = tradeoff
        if f.level == "g":
            f = lift_tradeoff(f, gamma)
        elif abs(f.gamma - gamma) > 1e-12:
            raise ValueError("tradeoff was lifted at a different test rate")
        pe_value = f.evaluate([freq[c] for c in _C_SYMBOLS])
        if h_exp is not None:
            pe_abort = pe_value <= h_exp

    return RoundTranscript(
        protocol=protocol, n=n, alpha=alpha, eta=eta, qber=qber, gamma=gamma,
        seed=seed, bits=bits, init_bit=init_bit, key_bits=key_bits,
        b_out=b_out, click=click, test=test, j_out=j_out, c_out=c_out,
        t_start_ns=Fraction(0), step_ns=step_ns, response_ns=response_ns,
        timing_ok=bool(timing_ok), pulses=pulses, counts=counts, freq=freq,
        ec_tag_alice=tag_a, ec_tag_bob=tag_b, ec_pass=tag_a == tag_b,
        pe_value=pe_value, h_exp=h_exp, pe_abort=pe_abort)


def compare_protocols(report_rel: dict, report_dps: dict) -> dict:
    """Side-by-side key rates at matched parameters.

    Each report carries protocol, alpha, eta, qber and rate.  The one-pulse
    protocol spends two pulses per encoded bit, so its rate is halved before
    forming the ratio; ratio >= 1 means the differential readout wins.
    """
    if report_rel.get("protocol") != "relativistic":
        raise ValueError("first report must come from the relativistic protocol")
    if report_dps.get("protocol") != "dps":
        raise ValueError("second report must come from the dps protocol")
    for key in ("alpha", "eta", "qber"):
        if report_rel[key] != report_dps[key]:
            raise ValueError(
                f"mismatched {key}: {report_rel[key]!r} vs {report_dps[key]!r}")
    r_rel = float(report_rel["rate"])
    r_dps = float(report_dps["rate"])
    half = r_rel / 2.0
    if half > 0.0:
        ratio = r_dps / half
    else:
        ratio = 1.0 if r_dps == 0.0 else math.inf
    return {"r_rel": r_rel, "r_dps": r_dps, "r_rel_half": half, "ratio": ratio,
            "alpha": report_rel["alpha"], "eta": report_rel["eta"],
            "qber": report_rel["qber"]}
