"""Squashing the two-mode threshold measurement down to two qubits.

The receiver's optics live on a two-mode Fock space; security analysis wants
a fixed four-dimensional output.  The squashing channel maps any state on the
photon-number-truncated two-mode space (total photons <= cutoff) to a
two-qubit state such that the threshold-detector statistics are reproduced
exactly by a simple qubit POVM:

    N0 = |phi+><phi+| + |11><11|/2
    N1 = |phi-><phi-| + |11><11|/2
    Nbot = |00><00|            with |phi+-> = (|01> +- |10>)/sqrt2.

The channel is built from one Kraus operator per (total N, odd index k,
even index l) triple; the structure makes two properties exact on the
domain: trace preservation, and the no-signalling identity that the R'-qubit
marginal of the output equals the parity dephasing of the R-mode marginal of
the input (so nothing about the S side leaks into R').
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linop import DensityOperator
from .optics import detector_povm

# two-qubit computational basis indices
_I00, _I01, _I10, _I11 = 0, 1, 2, 3


def qubit_target_povm() -> dict:
    """The squashed three-outcome POVM on two qubits."""
    phi_p = np.zeros(4)
    phi_m = np.zeros(4)
    phi_p[[_I01, _I10]] = 1 / math.sqrt(2)
    phi_m[_I01] = 1 / math.sqrt(2)
    phi_m[_I10] = -1 / math.sqrt(2)
    e11 = np.zeros((4, 4))
    e11[_I11, _I11] = 1.0
    n0 = np.outer(phi_p, phi_p) + e11 / 2
    n1 = np.outer(phi_m, phi_m) + e11 / 2
    nbot = np.zeros((4, 4))
    nbot[_I00, _I00] = 1.0
    return {0: n0, 1: n1, "bot": nbot}


@dataclass
class SquashingMap:
    """Kraus family of the squashing channel at a given photon cutoff.

    ``domain_mask`` flags the two-mode basis states with total photon number
    <= cutoff; the Kraus family resolves the identity exactly on that
    subspace and annihilates nothing inside it.
    """

    cutoff: int
    kraus: list = field(repr=False)
    domain_mask: np.ndarray = field(repr=False)
    target_povm: dict = field(repr=False)
    source_povm: dict = field(repr=False)

    @property
    def in_dim(self) -> int:
        return (self.cutoff + 1) ** 2

    def completeness_residual(self) -> float:
        """Max |sum K^dag K - P_domain| entry."""
        total = sum(k.conj().T @ k for k in self.kraus)
        return float(np.max(np.abs(total - np.diag(self.domain_mask.astype(float)))))


def build_squashing_map(cutoff: int) -> SquashingMap:
    """Construct the squashing channel for total photon number <= cutoff.

    Kraus operators: the vacuum one |00><0,0| plus, for every total photon
    number 1 <= N <= cutoff, every odd k <= N and even l <= N,

        K(N,k,l) = sqrt(2/2^N) ( sqrt(C(N,l)) |01><N-k,k|
                               + sqrt(C(N,k)) |10><N-l,l| ).

    Example: the single-photon Kraus is K(1,1,0) = |01><0,1| + |10><1,0|.
    Kraus count at cutoff 2: 1 + 1 + 2 = 4.
    """
    if cutoff < 1:
        raise ValueError(f"cutoff must be >= 1, got {cutoff}")
    d = cutoff + 1
    dim_in = d * d

    def idx(n, m):
        return n * d + m

    ops = []
    k0 = np.zeros((4, dim_in))
    k0[_I00, idx(0, 0)] = 1.0
    ops.append(k0)
    for n_tot in range(1, cutoff + 1):
        for k in range(1, n_tot + 1, 2):
            for l in range(0, n_tot + 1, 2):
                op = np.zeros((4, dim_in))
                pref = math.sqrt(2.0 / 2.0**n_tot)
                op[_I01, idx(n_tot - k, k)] = pref * math.sqrt(math.comb(n_tot, l))
                op[_I10, idx(n_tot - l, l)] = pref * math.sqrt(math.comb(n_tot, k))
                ops.append(op)
    mask = np.zeros(dim_in, dtype=bool)
    for n in range(d):
        for m in range(d):
            if n + m <= cutoff:
                mask[idx(n, m)] = True
    return SquashingMap(
        cutoff=cutoff,
        kraus=ops,
        domain_mask=mask,
        target_povm=qubit_target_povm(),
        source_povm=detector_povm(cutoff),
    )


def apply_squash(sq: SquashingMap, rho, strict: bool = True) -> DensityOperator:
    """Apply the squashing channel to a two-mode operator.

    The input may be a DensityOperator with dims (cutoff+1, cutoff+1) or a
    bare matrix of that size.  With ``strict=True`` (default) any input mass
    outside the total-photon domain raises; with ``strict=False`` that mass
    is silently dropped (the output trace records the deficit), which is what
    lossy pipelines with negligible tails want.
    """
    mat = rho.data if isinstance(rho, DensityOperator) else np.asarray(rho, dtype=complex)
    if mat.shape != (sq.in_dim, sq.in_dim):
        raise ValueError(f"expected a {sq.in_dim}x{sq.in_dim} operator, got {mat.shape}")
    if strict:
        out_mask = ~sq.domain_mask
        leak = float(np.abs(mat[out_mask][:, out_mask]).sum())
        if leak > 1e-9:
            raise ValueError(
                f"input has {leak:.3e} mass outside the total-photon-<= {sq.cutoff} domain"
            )
    out = np.zeros((4, 4), dtype=complex)
    for k in sq.kraus:
        out += k @ mat @ k.conj().T
    return DensityOperator(out, (2, 2))


def _parity_dephase_r(mat: np.ndarray, cutoff: int) -> np.ndarray:
    """The fixed qubit image of the R-mode marginal: diag(even mass, odd mass)."""
    d = cutoff + 1
    t = mat.reshape(d, d, d, d)
    r_marg = np.einsum("ikil->kl", t)
    even = sum(r_marg[m, m].real for m in range(0, d, 2))
    odd = sum(r_marg[m, m].real for m in range(1, d, 2))
    return np.diag([even, odd]).astype(complex)


def verify_squashing(sq: SquashingMap, n_states: int = 500, seed: int = 20240901) -> dict:
    """Measure the squashing contract on random states and on a full basis.

    Returns max residuals over all probes:

    - ``tp_residual``: |tr squash(rho) - tr rho|
    - ``stats_residual``: |tr[M_x rho] - tr[N_x squash(rho)]| over outcomes
    - ``ns_residual``: trace distance between the R'-marginal of the output
      and the parity dephasing of the R-marginal of the input

    Probes: ``n_states`` random density operators supported on the domain,
    plus the exhaustive Hermitian dyad basis of the domain subspace (the
    residuals are linear in the input, so passing on a full operator basis
    pins the identities everywhere, not just on the sample).
    """
    rng = np.random.default_rng(seed)
    d = sq.cutoff + 1
    dom = np.flatnonzero(sq.domain_mask)
    k_dom = dom.size
    dim = sq.in_dim

    def embed(small: np.ndarray) -> np.ndarray:
        big = np.zeros((dim, dim), dtype=complex)
        big[np.ix_(dom, dom)] = small
        return big

    probes = []
    for _ in range(n_states):
        g = rng.normal(size=(k_dom, k_dom)) + 1j * rng.normal(size=(k_dom, k_dom))
        m = g @ g.conj().T
        probes.append(embed(m / np.trace(m).real))
    # exhaustive Hermitianized dyad basis |i><j| + |j><i|, i(|i><j| - |j><i|)
    for a in range(k_dom):
        for b in range(a, k_dom):
            e = np.zeros((k_dom, k_dom), dtype=complex)
            e[a, b] = 1.0
            e[b, a] = 1.0
            probes.append(embed(e))
            if a != b:
                e2 = np.zeros((k_dom, k_dom), dtype=complex)
                e2[a, b] = 1j
                e2[b, a] = -1j
                probes.append(embed(e2))

    msrc = sq.source_povm
    mtgt = sq.target_povm
    tp_res = 0.0
    stats_res = 0.0
    ns_res = 0.0
    for rho in probes:
        out = np.zeros((4, 4), dtype=complex)
        for k in sq.kraus:
            out += k @ rho @ k.conj().T
        tp_res = max(tp_res, abs((np.trace(out) - np.trace(rho)).real))
        for x in (0, 1, "bot"):
            lhs = np.trace(msrc[x] @ rho)
            rhs = np.trace(mtgt[x] @ out)
            stats_res = max(stats_res, abs(lhs - rhs))
        rp = out.reshape(2, 2, 2, 2)
        r_marg = np.einsum("ikil->kl", rp)
        diff = r_marg - _parity_dephase_r(rho, sq.cutoff)
        ns_res = max(ns_res, float(np.sum(np.abs(np.linalg.eigvalsh(diff)))))
    return {"tp_residual": tp_res, "stats_residual": stats_res, "ns_residual": ns_res}
