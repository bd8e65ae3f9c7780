"""Truncated Fock-space optics for a two-detector threshold measurement.

The receiver interferes a signal mode S with a reference mode R on a balanced
beam splitter and watches two threshold detectors.  Everything here lives on
per-mode photon-number-truncated spaces; operators that mix photon-number
blocks are exact on every block whose total photon number fits below the
cutoff, and compressions above it.

Outcome alphabet used throughout the package: test-round outcomes
``("corr", "err", "bot")`` plus the key-round placeholder ``"empty"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linop import DensityOperator, PureState

# canonical outcome ordering (statistics vectors follow this order)
OUTCOMES = ("corr", "err", "bot")
OUTCOMES_FULL = ("corr", "err", "bot", "empty")

PROTOCOLS = ("relativistic", "dps")


@dataclass(frozen=True)
class FockSpace:
    """A per-mode-truncated bosonic space: ``modes`` modes, occupation 0..cutoff."""

    cutoff: int
    modes: int = 1

    def __post_init__(self):
        if self.cutoff < 1:
            raise ValueError(f"cutoff must be >= 1, got {self.cutoff}")
        if self.modes < 1:
            raise ValueError(f"modes must be >= 1, got {self.modes}")

    @property
    def mode_dim(self) -> int:
        return self.cutoff + 1

    @property
    def dim(self) -> int:
        return self.mode_dim**self.modes

    @property
    def dims(self) -> tuple:
        return (self.mode_dim,) * self.modes

    def index(self, *occupations) -> int:
        """Row index of the basis state |n1, n2, ...>."""
        if len(occupations) != self.modes:
            raise ValueError(f"expected {self.modes} occupation numbers")
        i = 0
        for n in occupations:
            if not 0 <= n <= self.cutoff:
                raise ValueError(f"occupation {n} outside 0..{self.cutoff}")
            i = i * self.mode_dim + n
        return i


def coherent_state(alpha: float, cutoff: int):
    """Truncated coherent state.

    Returns ``(state, tail_mass)`` where the state is renormalized on the
    truncated space and ``tail_mass`` is the Poissonian weight beyond the
    cutoff that was cut away, 1 - e^{-|a|^2} sum_{n<=cutoff} |a|^{2n}/n!.
    """
    alpha = complex(alpha)
    n = np.arange(cutoff + 1)
    # amplitudes e^{-|a|^2/2} a^n / sqrt(n!), built in log space for stability
    log_fact = np.cumsum(np.log(np.maximum(n, 1)))
    mag = np.exp(-abs(alpha) ** 2 / 2.0 + n * np.log(abs(alpha)) - 0.5 * log_fact) \
        if abs(alpha) > 0 else np.concatenate(([1.0], np.zeros(cutoff)))
    phase = np.exp(1j * np.angle(alpha) * n) if abs(alpha) > 0 else np.ones(cutoff + 1)
    amps = mag * phase
    kept = float(np.sum(np.abs(amps) ** 2))
    tail = max(0.0, 1.0 - kept)
    amps = amps / math.sqrt(kept)
    return PureState(amps, (cutoff + 1,)), tail


def _bs_block(n_total: int) -> np.ndarray:
    """Balanced beam splitter on the total-photon-number-N block.

    Basis ordering inside the block: m = 0..N labels |N-m, m>.  Entry [k, m]
    is the amplitude of |N-k, k> in the image of |N-m, m> under the mode
    substitution S -> (S+R)/sqrt(2), R -> (S-R)/sqrt(2) (an involution).
    """
    N = n_total
    b = np.zeros((N + 1, N + 1))
    for m in range(N + 1):
        # (S+R)^(N-m) (S-R)^m expanded; j counts R-factors taken from (S-R)^m
        for k in range(N + 1):
            acc = 0.0
            for j in range(max(0, k - (N - m)), min(m, k) + 1):
                acc += (-1) ** j * math.comb(N - m, k - j) * math.comb(m, j)
            norm = math.sqrt(
                math.factorial(N - k) * math.factorial(k)
                / (math.factorial(N - m) * math.factorial(m))
            )
            b[k, m] = acc * norm / math.sqrt(2.0) ** N
    return b


def beam_splitter(cutoff: int) -> np.ndarray:
    """Matrix of the balanced beam splitter on the two-mode truncated space.

    Exactly unitary (and involutive) on every block with total photon number
    <= cutoff; blocks above that are compressions of the infinite-space
    blocks and lose norm.  Coherent states transform as
    (a, b) -> ((a+b)/sqrt2, (a-b)/sqrt2).
    """
    d = cutoff + 1
    u = np.zeros((d * d, d * d))
    for N in range(0, 2 * cutoff + 1):
        blk = _bs_block(N)
        ms = [m for m in range(N + 1) if N - m <= cutoff and m <= cutoff]
        for m in ms:
            col = (N - m) * d + m
            for k in ms:
                row = (N - k) * d + k
                u[row, col] = blk[k, m]
    return u


def _w_vector(n_total: int, sign: int, cutoff: int) -> np.ndarray:
    """Compressed |w_N^+-> = 2^{-N/2} sum_m sqrt(C(N,m)) (+-1)^m |N-m, m>."""
    d = cutoff + 1
    v = np.zeros(d * d)
    for m in range(n_total + 1):
        if n_total - m <= cutoff and m <= cutoff:
            v[(n_total - m) * d + m] = (
                math.sqrt(math.comb(n_total, m)) * sign**m / math.sqrt(2.0) ** n_total
            )
    return v


def detector_povm(cutoff: int) -> dict:
    """Threshold-detector POVM on the two-mode truncated space.

    Raw elements (key ``"raw"``): ``w0`` collects all photons into the first
    output port, ``w1`` into the second, ``dc`` is the double-click remainder
    on blocks with >= 2 photons, ``vac`` the no-photon projector.  Double
    clicks are assigned a uniformly random bit, giving the coarse-grained
    elements ``M[0] = w0 + dc/2``, ``M[1] = w1 + dc/2``, ``M["bot"] = vac``,
    which sum to the identity exactly.
    """
    d = cutoff + 1
    dim = d * d
    m0 = np.zeros((dim, dim))
    m1 = np.zeros((dim, dim))
    dc = np.zeros((dim, dim))
    for N in range(1, 2 * cutoff + 1):
        wp = _w_vector(N, +1, cutoff)
        wm = _w_vector(N, -1, cutoff)
        m0 += np.outer(wp, wp)
        m1 += np.outer(wm, wm)
        if N >= 2:
            pn = np.zeros((dim, dim))
            for m in range(N + 1):
                if N - m <= cutoff and m <= cutoff:
                    i = (N - m) * d + m
                    pn[i, i] = 1.0
            dc += pn - np.outer(wp, wp) - np.outer(wm, wm)
    vac = np.zeros((dim, dim))
    vac[0, 0] = 1.0
    return {
        0: m0 + dc / 2.0,
        1: m1 + dc / 2.0,
        "bot": vac,
        "raw": {"w0": m0, "w1": m1, "dc": dc, "vac": vac},
    }


def loss_kraus(eta: float, cutoff: int) -> list:
    """Kraus operators of the single-mode pure-loss channel with transmittance eta.

    A_k |n> = sqrt(C(n,k) eta^(n-k) (1-eta)^k) |n-k>; trace preserving exactly
    on the truncated space because photons only flow downward.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"transmittance must be in [0,1], got {eta!r}")
    d = cutoff + 1
    ops = []
    for k in range(d):
        a = np.zeros((d, d))
        for n in range(k, d):
            a[n - k, n] = math.sqrt(
                math.comb(n, k) * eta ** (n - k) * (1.0 - eta) ** k
            )
        if np.any(a):
            ops.append(a)
    return ops


def apply_loss(rho: DensityOperator, eta: float, mode: int = 0) -> DensityOperator:
    """Pure-loss channel on one mode of a (possibly multi-mode) Fock operator.

    A truncated coherent state |a> maps to |sqrt(eta) a| up to the truncation
    tail (e.g. eta=0.1, a=0.45 gives amplitude 0.142302).
    """
    dims = rho.dims
    if not 0 <= mode < len(dims):
        raise ValueError(f"mode {mode} out of range for dims {dims}")
    cutoff = dims[mode] - 1
    out = np.zeros_like(rho.data)
    left = int(np.prod(dims[:mode], dtype=int))
    right = int(np.prod(dims[mode + 1:], dtype=int))
    for a in loss_kraus(eta, cutoff):
        k = np.kron(np.kron(np.eye(left), a), np.eye(right))
        out += k @ rho.data @ k.conj().T
    return DensityOperator(out, dims)


@dataclass(frozen=True)
class HonestStatistics:
    """Honest-device test-round outcome distribution over (corr, err, bot)."""

    p_corr: float
    p_err: float
    p_bot: float

    def __post_init__(self):
        for name, v in (("p_corr", self.p_corr), ("p_err", self.p_err), ("p_bot", self.p_bot)):
            if v < -1e-12:
                raise ValueError(f"{name} = {v!r} is negative")
        if abs(self.p_corr + self.p_err + self.p_bot - 1.0) > 1e-9:
            raise ValueError("honest statistics must sum to 1")

    def as_array(self) -> np.ndarray:
        """Probabilities in the canonical OUTCOMES order."""
        return np.array([self.p_corr, self.p_err, self.p_bot])

    @property
    def qber(self) -> float:
        det = self.p_corr + self.p_err
        return self.p_err / det if det > 0 else 0.0


def honest_statistics(alpha: float, eta: float, qber: float,
                      protocol: str = "relativistic") -> HonestStatistics:
    """Expected test-round statistics of an honest lossy implementation.

    For the relativistic protocol both the signal and the reference pulse
    carry mean photon number |alpha|^2/... the no-detection probability is
    e^{-2 eta alpha^2} (both attenuated modes vacuum).  For the dps protocol
    two consecutive pulses of amplitude alpha/sqrt2 interfere to a single
    slot of amplitude sqrt(eta) alpha, so no-detection is e^{-eta alpha^2}.

    ``qber`` splits the detected mass: p_err = (1 - p_bot) * qber.  For dps
    this is a modelling knob (the ideal interferometer is error-free); it is
    applied the same way for both protocols so rates stay comparable.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}, expected one of {PROTOCOLS}")
    if not 0.0 <= qber <= 1.0:
        raise ValueError(f"qber must be in [0,1], got {qber!r}")
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"transmittance must be in [0,1], got {eta!r}")
    if alpha <= 0:
        raise ValueError(f"pulse amplitude must be positive, got {alpha!r}")
    x = eta * alpha * alpha
    p_bot = math.exp(-2.0 * x) if protocol == "relativistic" else math.exp(-x)
    det = 1.0 - p_bot
    return HonestStatistics(p_corr=det * (1.0 - qber), p_err=det * qber, p_bot=p_bot)
