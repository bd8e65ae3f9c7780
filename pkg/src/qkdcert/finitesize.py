"""Finite-size accounting: entropy-accumulation bound, key length, budgets.

The chain certified here: a tradeoff function ``g`` on test statistics is
lifted to full-round frequencies, the accumulation theorem turns its value at
the accepted threshold into smooth min-entropy with explicit second-order
terms, and hashing arguments convert that into a key length together with an
error-correction leak and a completeness (abort) bound for the honest
implementation.  All functions are closed-form and deterministic; the only
expensive ingredient, the certified tradeoff itself, is passed in (or built
once and reused).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .entropy import TradeoffFunction, lift_tradeoff, optimize_lambda
from .linop import binary_entropy
from .optics import honest_statistics

LN2 = math.log(2.0)


# ------------------------------------------------------------------- budgets


@dataclass(frozen=True)
class EpsilonBudget:
    """Security / completeness failure budget.

    ``eps_snd`` is the total soundness failure and must equal
    eps_ec + eps_pa + 2 eps_s exactly; ``eps_comp`` is the completeness
    target, split between the error-correction failure ``eps_ec_com`` and the
    parameter-estimation tail, with ``eps_s_bar`` the smoothing used inside
    the leak bound.
    """

    eps_snd: float
    eps_ec: float
    eps_pa: float
    eps_s: float
    eps_comp: float
    eps_ec_com: float
    eps_s_bar: float

    def __post_init__(self):
        for name in ("eps_snd", "eps_ec", "eps_pa", "eps_s", "eps_comp",
                     "eps_ec_com", "eps_s_bar"):
            val = getattr(self, name)
            if not 0.0 < val < 1.0:
                raise ValueError(f"{name} must be in (0,1), got {val!r}")
        gap = abs(self.eps_ec + self.eps_pa + 2.0 * self.eps_s - self.eps_snd)
        if gap > 1e-15:
            raise ValueError(
                f"budget must satisfy eps_ec + eps_pa + 2 eps_s = eps_snd "
                f"(off by {gap:.3e})")
        if self.eps_s_bar >= self.eps_ec_com:
            raise ValueError("eps_s_bar must be smaller than eps_ec_com")

    @classmethod
    def split(cls, eps_snd: float = 4e-12, eps_comp: float = 1e-2) -> "EpsilonBudget":
        """Symmetric default split: eps_ec = eps_pa = eps_s = eps_snd / 4."""
        quarter = eps_snd / 4.0
        return cls(eps_snd=eps_snd, eps_ec=quarter, eps_pa=quarter,
                   eps_s=quarter, eps_comp=eps_comp, eps_ec_com=eps_comp / 2.0,
                   eps_s_bar=eps_comp / 4.0)


@dataclass
class FiniteSizeParams:
    """Per-run finite-size parameters."""

    n: int
    gamma: float
    alpha_prime: float
    h_exp: float
    leak_ec: float
    d_a: int = 3

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"need at least one round, got n={self.n!r}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"test rate gamma must be in (0,1], got {self.gamma!r}")
        if not 1.0 < self.alpha_prime < 1.5:
            raise ValueError(
                f"Renyi parameter must lie strictly in (1, 3/2), got {self.alpha_prime!r}")
        if self.d_a != 3:
            raise ValueError("the key alphabet is {0,1,bot}: d_a must be 3")
        if self.leak_ec < 0:
            raise ValueError("leak_ec must be non-negative")


# -------------------------------------------------------------- second order


def g_eps(eps: float) -> float:
    """log2(1/(1 - sqrt(1-eps^2))), evaluated stably for tiny eps.

    The direct form underflows for eps below ~1e-8, so use the algebraic
    rewrite 1 - sqrt(1-x) = x/(1+sqrt(1-x)).
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must be in (0,1), got {eps!r}")
    x = eps * eps
    return math.log2((1.0 + math.sqrt(1.0 - x)) / x)


def _f_props(f: TradeoffFunction) -> tuple:
    """(max, min over vertices, variance proxy) of the tradeoff function."""
    vals = list(f.vertex_values().values())
    return max(vals), min(vals), f.var_f


def eat_second_order(f: TradeoffFunction, alpha_prime: float, eps_s: float,
                     p_omega: float, n: int, d_a: int = 3, *,
                     h_exp: float) -> dict:
    """Accumulation lower bound on smooth min-entropy, with its pieces.

    bound = n h_exp - n x (ln2/2) V^2 - (g(eps) + a log2(1/p_omega))/(a-1)
            - n x^2 K(a),      x = (a-1)/(2-a),

    V = log2(2 d_a^2 + 1) + sqrt(2 + Var f);  K uses Max(f) and the
    conservative vertex minimum for Min_sigma(f).
    """
    if not 1.0 < alpha_prime < 1.5:
        raise ValueError(
            f"Renyi parameter must lie strictly in (1, 3/2), got {alpha_prime!r}")
    if not 0.0 < p_omega <= 1.0:
        raise ValueError(f"accept probability must be in (0,1], got {p_omega!r}")
    a = alpha_prime
    x = (a - 1.0) / (2.0 - a)
    max_f, min_f, var_f = _f_props(f)
    v = math.log2(2.0 * d_a * d_a + 1.0) + math.sqrt(2.0 + var_f)
    m = 2.0 * math.log2(d_a) + max_f - min_f
    k = ((2.0 - a) ** 3 / (6.0 * (3.0 - 2.0 * a) ** 3 * LN2)
         * 2.0 ** (x * m) * math.log(2.0 ** m + math.e ** 2) ** 3)
    ge = g_eps(eps_s)
    bound = (n * h_exp
             - n * x * (LN2 / 2.0) * v * v
             - (ge + a * math.log2(1.0 / p_omega)) / (a - 1.0)
             - n * x * x * k)
    return {"V": v, "K": k, "g_eps": ge, "bound": bound}


# ---------------------------------------------------------------- key length


def key_length(fs: FiniteSizeParams, eb: EpsilonBudget, f: TradeoffFunction) -> dict:
    """Extractable key length for the given budget; clamped at zero.

    l = accumulation bound at p_omega = 2 eps_s + eps_pa, minus the
    error-correction leak, minus the hashing costs
    ceil(log2(1/eps_ec)) + 2 log2(1/eps_pa) - 2.
    """
    so = eat_second_order(f, fs.alpha_prime, eb.eps_s,
                          2.0 * eb.eps_s + eb.eps_pa, fs.n, fs.d_a,
                          h_exp=fs.h_exp)
    raw = (so["bound"] - fs.leak_ec - math.ceil(math.log2(1.0 / eb.eps_ec))
           - 2.0 * math.log2(1.0 / eb.eps_pa) + 2.0)
    l = max(0, math.floor(raw))
    return {
        "l": l,
        "rate": l / fs.n,
        "raw": raw,
        "clamped": raw < 0,
        "second_order": so,
    }


def leak_ec_bound(n: int, h_ajb_hon: float, eps_s_bar: float,
                  eps_ec_com: float) -> float:
    """Bits that must be disclosed for error correction to succeed honestly.

    n H(A|JB)_hon + 2 sqrt(n) log2(7) sqrt(log2(2/eps_s_bar^2))
    + 2 log2(1/(eps_ec_com - eps_s_bar)) + 4; the log2(7) comes from the
    three-letter key alphabet (1 + 2|A|).
    """
    if eps_s_bar >= eps_ec_com:
        raise ValueError("eps_s_bar must be smaller than eps_ec_com")
    if h_ajb_hon < 0:
        raise ValueError("conditional entropy cannot be negative")
    return (n * h_ajb_hon
            + 2.0 * math.sqrt(n) * math.log2(7.0)
            * math.sqrt(math.log2(2.0 / (eps_s_bar * eps_s_bar)))
            + 2.0 * math.log2(1.0 / (eps_ec_com - eps_s_bar)) + 4.0)


def completeness_abort_bound(n: int, delta: float, f: TradeoffFunction,
                             eps_ec_com: float) -> float:
    """Honest-implementation abort probability at threshold f(p_hon) - delta.

    eps_ec_com + exp(-n (delta^2/2) / (Var f + (Max f - Min f) delta / 3)).
    Values >= 1 mean the bound is vacuous at these parameters.
    """
    if delta <= 0.0:
        raise ValueError(f"threshold margin delta must be positive, got {delta!r}")
    max_f, min_f, var_f = _f_props(f)
    denom = var_f + (max_f - min_f) * delta / 3.0
    return eps_ec_com + math.exp(-n * (delta * delta / 2.0) / denom)


def solve_delta(n: int, f: TradeoffFunction, eps_ec_com: float,
                target: float) -> float:
    """Bisect the threshold margin so the abort bound meets ``target``.

    Needs target > eps_ec_com (the error-correction part is already spent).
    """
    tail = target - eps_ec_com
    if not 0.0 < tail < 1.0:
        raise ValueError("target must exceed eps_ec_com by a probability")
    lo, hi = 0.0, 1e-12
    while (completeness_abort_bound(n, hi, f, eps_ec_com) - eps_ec_com) > tail:
        hi *= 2.0
        if hi > 1e12:
            raise RuntimeError("abort bound does not reach the target")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if (completeness_abort_bound(n, mid, f, eps_ec_com) - eps_ec_com) > tail:
            lo = mid
        else:
            hi = mid
    return hi


def optimize_alpha_prime(fs: FiniteSizeParams, eb: EpsilonBudget,
                         f: TradeoffFunction) -> dict:
    """Golden-section maximization of the key length over the Renyi parameter.

    The theorem holds for every alpha_prime in (1, 3/2), so the max is sound;
    the unrounded right side is unimodal (one divergence at each end).
    """
    lo, hi = 1.0 + 1e-6, 1.5 - 1e-6
    invphi = (math.sqrt(5.0) - 1.0) / 2.0

    def raw_at(a):
        trial = FiniteSizeParams(n=fs.n, gamma=fs.gamma, alpha_prime=a,
                                 h_exp=fs.h_exp, leak_ec=fs.leak_ec, d_a=fs.d_a)
        return key_length(trial, eb, f)["raw"]

    x1 = hi - invphi * (hi - lo)
    x2 = lo + invphi * (hi - lo)
    f1, f2 = raw_at(x1), raw_at(x2)
    for _ in range(80):
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + invphi * (hi - lo)
            f2 = raw_at(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - invphi * (hi - lo)
            f1 = raw_at(x1)
    best = 0.5 * (lo + hi)
    fs_best = FiniteSizeParams(n=fs.n, gamma=fs.gamma, alpha_prime=best,
                               h_exp=fs.h_exp, leak_ec=fs.leak_ec, d_a=fs.d_a)
    out = key_length(fs_best, eb, f)
    out["alpha_prime"] = best
    return out


# ------------------------------------------------------------------- rates


def _effective_amplitude(alpha: float, protocol: str) -> float:
    """Amplitude seen by the entropy model.

    The differential scheme encodes the bit in the relative phase of two
    pulses of amplitude alpha/sqrt2, so the two effective signals overlap as
    coherent states of amplitude alpha/sqrt2 do; everything downstream is the
    same two-qubit machinery.
    """
    if protocol == "relativistic":
        return alpha
    if protocol == "dps":
        return alpha / math.sqrt(2.0)
    raise ValueError(f"unknown protocol {protocol!r}")


def certified_tradeoff(alpha: float, eta: float, qber: float, gamma: float,
                       protocol: str = "relativistic",
                       opts: dict | None = None, *, tol: float = 0.02,
                       max_iters: int = 40) -> TradeoffFunction:
    """Certified tradeoff function targeted at the protocol's honest statistics."""
    hs = honest_statistics(alpha, eta, qber, protocol)
    return optimize_lambda(_effective_amplitude(alpha, protocol), gamma,
                           hs.as_array(), opts=opts, tol=tol,
                           max_iters=max_iters)


def asymptotic_rate(alpha: float, eta: float, qber: float,
                    protocol: str = "relativistic", *,
                    tradeoff: TradeoffFunction | None = None,
                    details: bool = False):
    """Asymptotic key rate: certified entropy minus honest reconciliation cost.

    rate = max(0, g*(p_hon) - (1 - p_bot) h2(qber)); the tradeoff is
    lambda-optimized at the honest statistics with a vanishing test fraction.
    Pass ``tradeoff`` to reuse a cached certificate; ``details`` returns the
    breakdown instead of the bare number.
    """
    hs = honest_statistics(alpha, eta, qber, protocol)
    if qber >= 0.5:
        if not details:
            return 0.0
        return {"rate": 0.0, "g_star": 0.0, "ec_cost": (1 - hs.p_bot),
                "tradeoff": None, "p_hon": hs.as_array(),
                "gap": None, "ns_residual": None}
    tf = tradeoff if tradeoff is not None else certified_tradeoff(
        alpha, eta, qber, 0.0, protocol)
    g_star = tf.evaluate(hs.as_array())
    ec = (1.0 - hs.p_bot) * binary_entropy(qber)
    rate = max(0.0, g_star - ec)
    if not details:
        return rate
    return {"rate": rate, "g_star": g_star, "ec_cost": ec, "tradeoff": tf,
            "p_hon": hs.as_array(),
            "gap": tf.diagnostics.get("gap"),
            "ns_residual": tf.diagnostics.get("ns_residual")}


def finite_key_rate(n: int, alpha: float, eta: float, qber: float,
                    gamma: float = 0.05, eps_snd: float = 4e-12,
                    eps_comp: float = 1e-2, protocol: str = "relativistic", *,
                    tradeoff: TradeoffFunction | None = None) -> dict:
    """Full finite-size pipeline at one parameter point.

    Builds (or reuses) the certified tradeoff at the protocol's honest
    statistics, lifts it to full-round frequencies, sets the acceptance
    threshold by bisecting the completeness margin against eps_comp, bounds
    the error-correction leak for the honest error rate, and maximizes the
    key length over the Renyi parameter.
    """
    eb = EpsilonBudget.split(eps_snd, eps_comp)
    g = tradeoff if tradeoff is not None else certified_tradeoff(
        alpha, eta, qber, gamma, protocol)
    if g.gamma != gamma:
        raise ValueError(
            f"tradeoff was certified at gamma={g.gamma!r}, pipeline wants {gamma!r}")
    f = lift_tradeoff(g, gamma)
    hs = honest_statistics(alpha, eta, qber, protocol)
    p_full = [gamma * x for x in hs.as_array()] + [1.0 - gamma]
    f_hon = f.evaluate(p_full)
    delta = solve_delta(n, f, eb.eps_ec_com, eb.eps_comp)
    h_exp = f_hon - delta
    h_ajb = (1.0 - hs.p_bot) * binary_entropy(qber)
    leak = leak_ec_bound(n, h_ajb, eb.eps_s_bar, eb.eps_ec_com)
    fs = FiniteSizeParams(n=n, gamma=gamma, alpha_prime=1.25, h_exp=h_exp,
                          leak_ec=leak)
    res = optimize_alpha_prime(fs, eb, f)
    res.update({
        "n": n,
        "h_exp": h_exp,
        "delta": delta,
        "leak_ec": leak,
        "abort_bound": completeness_abort_bound(n, delta, f, eb.eps_ec_com),
        "tradeoff": g,
        "budget": eb,
        "gap": g.diagnostics.get("gap"),
        "ns_residual": g.diagnostics.get("ns_residual"),
    })
    return res
