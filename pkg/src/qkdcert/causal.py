"""Choi representations and no-signalling diagnostics.

A channel from a d_in system T to a bipartite output S' x R' is
*non-signalling to R'* when the R'-marginal of the output does not depend on
the input.  On the Choi state C = (id (x) E)(|Phi+><Phi+|) this is the affine
condition

    tr_S' C  =  I_T / d_in  (x)  tr_{T S'} C,

and `check_ns_choi` reports the trace-norm residual of exactly that
difference.  `check_ns_operational` probes the same property behaviourally,
by comparing output marginals across input states; both views must agree on
every channel (tested at scale in the acceptance suite).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linop import partial_trace_array


def _trace_norm(m: np.ndarray) -> float:
    return float(np.sum(np.abs(np.linalg.eigvalsh(m))))


@dataclass
class QuantumChannel:
    """A completely positive map given by Kraus operators (d_out x d_in each)."""

    kraus: list
    dim_in: int
    dim_out: int

    def __post_init__(self):
        self.kraus = [np.asarray(k, dtype=complex) for k in self.kraus]
        for k in self.kraus:
            if k.shape != (self.dim_out, self.dim_in):
                raise ValueError(
                    f"Kraus shape {k.shape} != ({self.dim_out}, {self.dim_in})"
                )

    def apply(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        out = np.zeros((self.dim_out, self.dim_out), dtype=complex)
        for k in self.kraus:
            out += k @ rho @ k.conj().T
        return out

    def tp_residual(self) -> float:
        total = sum(k.conj().T @ k for k in self.kraus)
        return float(np.max(np.abs(total - np.eye(self.dim_in))))


@dataclass
class ChoiState:
    """Choi state of a channel, on (input copy, output), normalized to trace 1."""

    data: np.ndarray
    dim_in: int
    dim_out: int

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        d = self.dim_in * self.dim_out
        if self.data.shape != (d, d):
            raise ValueError(f"Choi matrix shape {self.data.shape} != ({d},{d})")
        herm = np.max(np.abs(self.data - self.data.conj().T))
        if herm > 1e-9:
            raise ValueError(f"Choi matrix not Hermitian: residual {herm:.3e}")
        self.data = 0.5 * (self.data + self.data.conj().T)

    def tp_residual(self) -> float:
        """How far the underlying map is from trace preserving."""
        marg = partial_trace_array(self.data, (self.dim_in, self.dim_out), [0])
        return float(np.max(np.abs(marg - np.eye(self.dim_in) / self.dim_in)))

    def min_eig(self) -> float:
        return float(np.linalg.eigvalsh(self.data)[0])


def choi_of_channel(channel: QuantumChannel) -> ChoiState:
    """Choi state (id (x) E) applied to the normalized maximally entangled state."""
    d = channel.dim_in
    out = channel.dim_out
    c = np.zeros((d * out, d * out), dtype=complex)
    for k in channel.kraus:
        # (I (x) K) |Phi+> has components K[x, t]/sqrt(d) at index (t, x)
        v = (k.T / math.sqrt(d)).reshape(-1)
        c += np.outer(v, v.conj())
    return ChoiState(c, d, out)


def apply_choi(choi: ChoiState, sigma: np.ndarray) -> np.ndarray:
    """Direct channel action d_in * tr_in[(sigma^T (x) I) choi].

    The transpose is in the computational product basis used by
    choi_of_channel; round-trip tests pin the convention.
    """
    d, out = choi.dim_in, choi.dim_out
    sigma = np.asarray(sigma, dtype=complex)
    c4 = choi.data.reshape(d, out, d, out)
    # sum_{a,b} sigma[a,b] C[(a,x),(b,x')]
    return d * np.einsum("ab,axby->xy", sigma, c4)


def channel_of_choi(choi: ChoiState, cp_tol: float = 1e-9) -> QuantumChannel:
    """Extract a Kraus form from a Choi state (must be CP within cp_tol)."""
    d, out = choi.dim_in, choi.dim_out
    w, v = np.linalg.eigh(choi.data)
    if w[0] < -cp_tol:
        raise ValueError(f"Choi state is not PSD: min eigenvalue {w[0]:.3e}")
    kraus = []
    for i in range(w.shape[0]):
        if w[i] > 1e-14:
            k = math.sqrt(d * w[i]) * v[:, i].reshape(d, out).T
            kraus.append(k)
    return QuantumChannel(kraus, d, out)


# ------------------------------------------------------------- no-signalling


class NSProjector:
    """The no-signalling affine constraint L(C) = 0 for a T -> S' x R' Choi.

    L(C) = tr_S' C - I/d_in (x) tr_{T S'} C, an operator on T (x) R'.
    Provides the residual, the adjoint L^dag (needed by dual certificates),
    and the orthogonal projection onto the nullspace of L.
    """

    def __init__(self, d_in: int, d_s: int, d_r: int):
        self.d_in, self.d_s, self.d_r = d_in, d_s, d_r
        self.dim = d_in * d_s * d_r
        self.out_dim = d_in * d_r
        self._lmat = None
        self._pinv = None

    def _build_matrix(self):
        """Dense matrix of L on vec(C); only needed for projections."""
        n2 = self.dim * self.dim
        cols = np.zeros((self.out_dim * self.out_dim, n2), dtype=complex)
        for j in range(n2):
            e = np.zeros(n2)
            e[j] = 1.0
            cols[:, j] = self.residual_matrix(e.reshape(self.dim, self.dim)).reshape(-1)
        self._lmat = cols
        self._pinv = np.linalg.pinv(cols, rcond=1e-12)

    def residual_matrix(self, c: np.ndarray) -> np.ndarray:
        t = c.reshape(self.d_in, self.d_s, self.d_r, self.d_in, self.d_s, self.d_r)
        m1 = np.einsum("tsrTsR->trTR", t).reshape(self.out_dim, self.out_dim)
        rmarg = np.einsum("tsrtsR->rR", t)
        m2 = np.kron(np.eye(self.d_in) / self.d_in, rmarg)
        return m1 - m2

    def residual(self, c: np.ndarray) -> float:
        """Trace norm of L(C)."""
        return _trace_norm(self.residual_matrix(np.asarray(c, dtype=complex)))

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        """L^dag(y) for Hermitian y on T (x) R'; output on T (x) S' (x) R'."""
        y4 = np.asarray(y, dtype=complex).reshape(self.d_in, self.d_r, self.d_in, self.d_r)
        lifted = np.einsum("trTR,sS->tsrTSR", y4, np.eye(self.d_s)).reshape(
            self.dim, self.dim
        )
        ytr = np.einsum("trtR->rR", y4)  # (1/d) tr_T y below
        lowered = np.kron(np.eye(self.d_in * self.d_s), ytr) / self.d_in
        return lifted - lowered

    def project(self, c: np.ndarray) -> np.ndarray:
        """Orthogonal projection of C onto {L = 0} (Hermiticity preserved)."""
        if self._pinv is None:
            self._build_matrix()
        v = np.asarray(c, dtype=complex).reshape(-1)
        corr = self._pinv @ (self._lmat @ v)
        out = (v - corr).reshape(self.dim, self.dim)
        return 0.5 * (out + out.conj().T)


def check_ns_choi(choi: ChoiState, out_split: tuple) -> float:
    """Trace-norm residual of the no-signalling condition on a Choi state."""
    d_s, d_r = out_split
    if d_s * d_r != choi.dim_out:
        raise ValueError(f"output split {out_split} inconsistent with dim {choi.dim_out}")
    proj = NSProjector(choi.dim_in, d_s, d_r)
    return proj.residual(choi.data)


def _probe_states(d: int, n_random: int, rng) -> list:
    """Basis states, pairwise superpositions, plus random pure states."""
    probes = []
    for i in range(d):
        e = np.zeros(d, dtype=complex)
        e[i] = 1.0
        probes.append(e)
    for i in range(d):
        for j in range(i + 1, d):
            for ph in (1.0, 1j):
                e = np.zeros(d, dtype=complex)
                e[i] = 1 / math.sqrt(2)
                e[j] = ph / math.sqrt(2)
                probes.append(e)
    for _ in range(n_random):
        v = rng.normal(size=d) + 1j * rng.normal(size=d)
        probes.append(v / np.linalg.norm(v))
    return [np.outer(p, p.conj()) for p in probes]


def check_ns_operational(channel: QuantumChannel, out_split: tuple,
                         n_probes: int = 8, seed: int = 7) -> float:
    """Largest trace distance between R'-marginals over probe input pairs.

    Zero (within numerics) iff no input choice can steer the R' output, i.e.
    the channel cannot signal to R'.  The probe family contains a full
    operator basis of the input space, so by linearity a zero residual here
    certifies the property for all inputs, not just the sample.
    """
    d_s, d_r = out_split
    if d_s * d_r != channel.dim_out:
        raise ValueError(f"output split {out_split} inconsistent with dim {channel.dim_out}")
    rng = np.random.default_rng(seed)
    margs = []
    for rho in _probe_states(channel.dim_in, n_probes, rng):
        out = channel.apply(rho)
        margs.append(partial_trace_array(out, (d_s, d_r), [1]))
    worst = 0.0
    for i in range(len(margs)):
        for j in range(i + 1, len(margs)):
            worst = max(worst, _trace_norm(margs[i] - margs[j]))
    return worst


# ------------------------------------------------------------ random channels


def random_channel(dim_in: int, dim_out: int, kraus_rank: int, seed: int) -> QuantumChannel:
    """Haar-ish random channel from a QR-orthonormalized Gaussian isometry."""
    if kraus_rank < 1 or dim_out * kraus_rank < dim_in:
        raise ValueError("need kraus_rank >= 1 and dim_out*kraus_rank >= dim_in")
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(dim_out * kraus_rank, dim_in)) + 1j * rng.normal(
        size=(dim_out * kraus_rank, dim_in)
    )
    q, r = np.linalg.qr(g)
    q = q * (np.diag(r) / np.abs(np.diag(r)))  # fix phases for determinism
    kraus = [q[k * dim_out:(k + 1) * dim_out, :] for k in range(kraus_rank)]
    return QuantumChannel(kraus, dim_in, dim_out)


def random_ns_channel(dim_in: int, out_split: tuple, kraus_rank: int,
                      seed: int, n_mix: int = 3) -> QuantumChannel:
    """Random channel that provably cannot signal to the R' factor.

    A mixture of building blocks Phi_k(rho) (x) tau, each a random channel
    into S' tensored with one fixed random R' state: every block has constant
    R'-marginal tau, hence so does the mixture.
    """
    d_s, d_r = out_split
    rng = np.random.default_rng(seed)
    # one shared R' state
    g = rng.normal(size=(d_r, d_r)) + 1j * rng.normal(size=(d_r, d_r))
    tau = g @ g.conj().T
    tau /= np.trace(tau).real
    wt, vt = np.linalg.eigh(tau)
    sq_tau = vt @ np.diag(np.sqrt(np.maximum(wt, 0))) @ vt.conj().T
    weights = rng.dirichlet(np.ones(n_mix))
    kraus = []
    for k in range(n_mix):
        block = random_channel(dim_in, d_s, kraus_rank, seed=int(rng.integers(2**31)))
        for a in block.kraus:
            for i in range(d_r):
                # Kraus of rho -> Phi(rho) (x) tau: A (x) sqrt(tau)|i>-column
                col = sq_tau[:, i].reshape(d_r, 1)
                kraus.append(math.sqrt(weights[k]) * np.kron(a, col))
    return QuantumChannel(kraus, dim_in, d_s * d_r)


def plant_signalling(channel: QuantumChannel, out_split: tuple, weight: float,
                     seed: int) -> QuantumChannel:
    """Mix in a channel that routes the input straight into R'.

    The planted component sends rho -> |0><0|_S' (x) U rho_emb U^dag, which
    signals maximally; useful as ground truth for detector tests.
    """
    d_s, d_r = out_split
    if channel.dim_in > d_r:
        raise ValueError("input does not fit into R' for the planted route")
    rng = np.random.default_rng(seed)
    emb = np.zeros((d_r, channel.dim_in), dtype=complex)
    emb[: channel.dim_in, :] = np.eye(channel.dim_in)
    g = rng.normal(size=(d_r, d_r)) + 1j * rng.normal(size=(d_r, d_r))
    u, _ = np.linalg.qr(g)
    s_ket = np.zeros((d_s, 1), dtype=complex)
    s_ket[0, 0] = 1.0
    route = np.kron(s_ket, u @ emb)
    kraus = [math.sqrt(1 - weight) * k for k in channel.kraus]
    kraus.append(math.sqrt(weight) * route)
    return QuantumChannel(kraus, channel.dim_in, channel.dim_out)
