"""Command line front end: rate sweeps, verification suites, simulation.

Every reported rate is the certified lower-bound value (constant plus
multipliers against the honest statistics), never the optimizer's primal;
each point carries the duality gap and the non-signalling residual of its
certificate so output files are auditable on their own.

Outputs are deterministic: re-running a command with the same configuration
and seed reproduces the files byte for byte.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from .causal import (
    check_ns_choi,
    check_ns_operational,
    choi_of_channel,
    plant_signalling,
    random_channel,
    random_ns_channel,
)
from .entropy import honest_attack_choi, minimize_tradeoff, objective, objective_gradient
from .finitesize import (
    _effective_amplitude,
    asymptotic_rate,
    certified_tradeoff,
    finite_key_rate,
)
from .protocol import TimingConfig, compare_protocols, simulate_honest, timing_min_delay
from .squash import build_squashing_map, verify_squashing


class ConfigError(Exception):
    """Invalid flags, config file, or parameter domain (exit code 2)."""


_PROTOCOLS = {"rel": "relativistic", "relativistic": "relativistic", "dps": "dps"}
_ALPHA_GRID = (0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60)
_SUITE_NAMES = ("squash", "choi", "objective", "gradient", "duality")
# lighter solver settings for the consistency suites: they probe soundness
# (certificate below primal), which holds at any effort level
_SUITE_SOLVER = {"stage_iters": 60, "cert_rounds": 2, "y_iters": 200,
                 "polish_iters": 100}


def _parse_floats(text: str) -> tuple:
    vals = tuple(float(t) for t in text.replace(",", " ").split())
    if not vals:
        raise ValueError("empty list")
    return vals


def _parse_ints(text: str) -> tuple:
    return tuple(int(float(t)) for t in text.replace(",", " ").split())


def _parse_alpha(text: str):
    text = text.strip().lower()
    return "auto" if text == "auto" else float(text)


def _parse_protocol(text: str) -> str:
    key = text.strip().lower()
    if key not in _PROTOCOLS:
        raise ValueError(f"choose from rel, relativistic, dps (got {text!r})")
    return _PROTOCOLS[key]


_FIELD_PARSERS = {
    "protocol": _parse_protocol,
    "alpha": _parse_alpha,
    "eta": _parse_floats,
    "qber": _parse_floats,
    "n": _parse_ints,
    "gamma": float,
    "eps_snd": float,
    "eps_comp": float,
    "cutoff": int,
    "solver_tol": float,
    "max_iters": int,
    "out": str,
    "seed": int,
    "workers": int,
}


@dataclass
class RunConfig:
    """One resolved run: file values overridden by flags, then validated."""

    protocol: str = "relativistic"
    alpha: object = 0.45          # a float, or the string "auto"
    eta: tuple = (1.0,)
    qber: tuple = (0.0,)
    n: tuple = ()
    gamma: float = 0.05
    eps_snd: float = 4e-12
    eps_comp: float = 1e-2
    cutoff: int = 6
    solver_tol: float = 0.02
    max_iters: int = 40
    out: str | None = None
    seed: int = 20240901
    workers: int = 0              # 0: take QKDCERT_WORKERS, else 1

    def validate(self) -> None:
        if self.protocol not in ("relativistic", "dps"):
            raise ConfigError(f"protocol: unknown value {self.protocol!r}")
        if self.alpha != "auto":
            if not isinstance(self.alpha, (int, float)) or not self.alpha > 0:
                raise ConfigError(f"alpha: must be positive or 'auto', got {self.alpha!r}")
        if not self.eta:
            raise ConfigError("eta: need at least one value")
        for e in self.eta:
            if not 0.0 < e <= 1.0:
                raise ConfigError(f"eta: {e!r} outside (0, 1]")
        if not self.qber:
            raise ConfigError("qber: need at least one value")
        for q in self.qber:
            if not 0.0 <= q <= 0.5:
                raise ConfigError(f"qber: {q!r} outside [0, 0.5]")
        for m in self.n:
            if m < 1:
                raise ConfigError(f"n: {m!r} is not a positive round count")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma: {self.gamma!r} outside (0, 1]")
        for key in ("eps_snd", "eps_comp"):
            v = getattr(self, key)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{key}: {v!r} outside (0, 1)")
        if self.cutoff < 2:
            raise ConfigError(f"cutoff: need at least 2, got {self.cutoff!r}")
        if not self.solver_tol > 0:
            raise ConfigError(f"solver_tol: must be positive, got {self.solver_tol!r}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters: need at least 1, got {self.max_iters!r}")
        if self.workers < 0:
            raise ConfigError(f"workers: must be positive, got {self.workers!r}")

    def fixed_alpha(self, what: str) -> float:
        if self.alpha == "auto":
            raise ConfigError(f"alpha: 'auto' is not supported for {what}")
        return float(self.alpha)


def _read_config_file(path: str) -> dict:
    """Flat `key = value` lines; # starts a comment; unknown keys rejected."""
    vals = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key = key.strip().lower().replace("-", "_")
            if key not in _FIELD_PARSERS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                vals[key] = _FIELD_PARSERS[key](val.strip())
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return vals


def _merge_config(*layers: dict) -> RunConfig:
    merged = {}
    for layer in layers:
        merged.update({k: v for k, v in layer.items() if v is not None})
    cfg = RunConfig(**merged)
    cfg.validate()
    return cfg


def load_config(path: str) -> RunConfig:
    """Defaults overridden by the file at `path`, validated."""
    return _merge_config(_read_config_file(path))


@dataclass
class KeyRateReport:
    """JSON mirror of a run: config echo, per-point records, suite results."""

    command: str
    config: dict
    points: list
    suites: dict = field(default_factory=dict)

    def payload(self) -> dict:
        return {"command": self.command, "config": self.config,
                "points": self.points, "suites": self.suites}


# ------------------------------------------------------------------ output


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def _write_csv(path: str, header: list, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _jsonable(obj):
    """Plain-Python view of a payload (numpy scalars and arrays included)."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_paths(cfg: RunConfig, stem: str) -> tuple:
    base = cfg.out if cfg.out else stem
    if base.endswith(".csv"):
        return base, base[:-4] + ".json"
    return base + ".csv", base + ".json"


# ------------------------------------------------------------- point workers


def _n_workers(cfg: RunConfig) -> int:
    if cfg.workers > 0:
        return cfg.workers
    env = os.environ.get("QKDCERT_WORKERS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"QKDCERT_WORKERS: {env!r} is not an integer") from exc
    return 1


def _pmap(fn, jobs: list, workers: int) -> list:
    """Map preserving input order; a process pool only when it can help."""
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


def _asym_point(protocol, alpha, eta, qber, cutoff, tol, max_iters) -> dict:
    tf = certified_tradeoff(alpha, eta, qber, 0.0, protocol,
                            tol=tol, max_iters=max_iters)
    det = asymptotic_rate(alpha, eta, qber, protocol, tradeoff=tf, details=True)
    tail = honest_attack_choi(_effective_amplitude(alpha, protocol), eta,
                              qber, cutoff)[1]
    return {"protocol": protocol, "alpha": alpha, "eta": eta, "qber": qber,
            "rate": det["rate"], "g_star": det["g_star"],
            "ec_cost": det["ec_cost"], "certificate": tf.c,
            "lam": [float(v) for v in tf.lam], "gap": det["gap"],
            "ns_residual": det["ns_residual"], "tail_mass": tail}


def _asym_job(job: tuple) -> dict:
    protocol, alpha, eta, qber, cutoff, tol, max_iters = job
    if alpha == "auto":
        best = None
        for a in _ALPHA_GRID:
            p = _asym_point(protocol, a, eta, qber, cutoff, tol, max_iters)
            if best is None or p["rate"] > best["rate"]:
                best = p
        return best
    return _asym_point(protocol, alpha, eta, qber, cutoff, tol, max_iters)


def _finite_job(job: tuple) -> dict:
    (n, protocol, alpha, eta, qber, gamma, eps_snd, eps_comp, cutoff,
     tol, max_iters) = job
    tf = certified_tradeoff(alpha, eta, qber, gamma, protocol,
                            tol=tol, max_iters=max_iters)
    fk = finite_key_rate(n, alpha, eta, qber, gamma=gamma, eps_snd=eps_snd,
                         eps_comp=eps_comp, protocol=protocol, tradeoff=tf)
    tail = honest_attack_choi(_effective_amplitude(alpha, protocol), eta,
                              qber, cutoff)[1]
    return {"protocol": protocol, "alpha": alpha, "eta": eta, "qber": qber,
            "n": n, "min_ent": fk["rate"], "rate": fk["rate"],
            "alpha_prime": fk["alpha_prime"], "certificate": tf.c,
            "lam": [float(v) for v in tf.lam], "gap": fk["gap"],
            "ns_residual": fk["ns_residual"], "leak_ec": fk["leak_ec"],
            "delta": fk["delta"], "abort_bound": fk["abort_bound"],
            "tail_mass": tail}


def _print_points(points: list, ycol: str) -> None:
    for p in points:
        print(f"eta {p['eta']:g} qber {p['qber']:g}: {ycol} {p[ycol]:.8g} "
              f"(alpha {p['alpha']:g}, gap {p['gap']:.3g}, "
              f"ns {p['ns_residual']:.3g})")


# ------------------------------------------------------------------ commands


def _cmd_eta_sweep(args, cfg: RunConfig) -> int:
    if len(cfg.qber) != 1:
        raise ConfigError("qber: one value per eta sweep (use sweep-qber to scan qber)")
    q = cfg.qber[0]
    jobs = [(cfg.protocol, cfg.alpha, e, q, cfg.cutoff, cfg.solver_tol,
             cfg.max_iters) for e in cfg.eta]
    points = _pmap(_asym_job, jobs, _n_workers(cfg))
    csv_path, json_path = _out_paths(cfg, args.cmd.replace("-", "_"))
    _write_csv(csv_path, ["eta", "rate"], [(p["eta"], p["rate"]) for p in points])
    _write_json(json_path, KeyRateReport(args.cmd, asdict(cfg), points).payload())
    _print_points(points, "rate")
    return 0


def _cmd_finite(args, cfg: RunConfig) -> int:
    if len(cfg.qber) != 1:
        raise ConfigError("qber: one value per finite run")
    if len(cfg.n) != 1:
        raise ConfigError("n: finite needs exactly one round count")
    alpha = cfg.fixed_alpha("finite-size runs")
    q, n = cfg.qber[0], cfg.n[0]
    jobs = [(n, cfg.protocol, alpha, e, q, cfg.gamma, cfg.eps_snd,
             cfg.eps_comp, cfg.cutoff, cfg.solver_tol, cfg.max_iters)
            for e in cfg.eta]
    points = _pmap(_finite_job, jobs, _n_workers(cfg))
    csv_path, json_path = _out_paths(cfg, "finite")
    _write_csv(csv_path, ["eta", "min_ent"],
               [(p["eta"], p["min_ent"]) for p in points])
    _write_json(json_path, KeyRateReport(args.cmd, asdict(cfg), points).payload())
    _print_points(points, "min_ent")
    return 0


def _cmd_sweep_qber(args, cfg: RunConfig) -> int:
    if len(cfg.eta) != 1:
        raise ConfigError("eta: one value per qber sweep (use sweep-eta to scan eta)")
    e = cfg.eta[0]
    jobs = [(cfg.protocol, cfg.alpha, e, q, cfg.cutoff, cfg.solver_tol,
             cfg.max_iters) for q in cfg.qber]
    points = _pmap(_asym_job, jobs, _n_workers(cfg))
    csv_path, json_path = _out_paths(cfg, "sweep_qber")
    _write_csv(csv_path, ["q", "key_rate"],
               [(p["qber"], p["rate"]) for p in points])
    _write_json(json_path, KeyRateReport(args.cmd, asdict(cfg), points).payload())
    _print_points(points, "rate")
    return 0


def _cmd_compare(args, cfg: RunConfig) -> int:
    if len(cfg.eta) != 1 or len(cfg.qber) != 1:
        raise ConfigError("compare wants a single eta and a single qber")
    alpha = cfg.fixed_alpha("compare (both protocols must share alpha)")
    e, q = cfg.eta[0], cfg.qber[0]
    points = [_asym_point(proto, alpha, e, q, cfg.cutoff, cfg.solver_tol,
                          cfg.max_iters) for proto in ("relativistic", "dps")]
    rec = compare_protocols(points[0], points[1])
    _, json_path = _out_paths(cfg, "compare")
    payload = KeyRateReport(args.cmd, asdict(cfg), points,
                            suites={"comparison": rec}).payload()
    _write_json(json_path, payload)
    print(f"r_rel {rec['r_rel']:.8g}  r_dps {rec['r_dps']:.8g}  "
          f"ratio vs half {rec['ratio']:.4f}")
    return 0


def _cmd_simulate(args, cfg: RunConfig) -> int:
    if len(cfg.eta) != 1 or len(cfg.qber) != 1:
        raise ConfigError("simulate wants a single eta and a single qber")
    alpha = cfg.fixed_alpha("simulation")
    n = cfg.n[0] if cfg.n else 100000
    if n > 10**7:
        raise ConfigError(f"n: simulation caps at 1e7 rounds, got {n}")
    tr = simulate_honest(cfg.protocol, n, alpha, cfg.eta[0], cfg.qber[0],
                         cfg.gamma, cfg.seed)
    csv_path, json_path = _out_paths(cfg, "simulate")
    tr.to_csv(csv_path)
    summary = {"protocol": tr.protocol, "n": tr.n, "alpha": tr.alpha,
               "eta": tr.eta, "qber": tr.qber, "gamma": tr.gamma,
               "seed": tr.seed, "freq": tr.freq, "counts": tr.counts,
               "ec_pass": tr.ec_pass, "timing_ok": tr.timing_ok,
               "pulses": tr.pulses}
    _write_json(json_path, {"command": args.cmd, "config": asdict(cfg),
                            "transcript": summary})
    print(f"simulated {tr.n} rounds: ec_pass {tr.ec_pass}, "
          f"freq corr {tr.freq['corr']:.5f} err {tr.freq['err']:.5f} "
          f"bot {tr.freq['bot']:.5f}")
    return 0


def _cmd_timing(args, cfg: RunConfig) -> int:
    try:
        geo = TimingConfig(d=args.distance,
                           refractive_index=args.refractive_index,
                           delta_t=args.delta_t if args.delta_t else 1.0)
        floor = timing_min_delay(geo)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"minimum delta_t: {floor:.6g} s")
    if args.delta_t:
        window = 2.0 * args.delta_t + args.distance / geo.c
        print(f"accept window: {window:.6g} s")
        print(f"meets the minimum: {'yes' if args.delta_t > floor else 'no'}")
    return 0


# ------------------------------------------------------------- verify suites


def _suite_squash(cfg: RunConfig) -> dict:
    rep = verify_squashing(build_squashing_map(cfg.cutoff), n_states=500,
                           seed=cfg.seed)
    tol = 1e-9
    return {"passed": max(rep.values()) <= tol, "tolerance": tol,
            "cutoff": cfg.cutoff, "n_states": 500, **rep}


def _suite_choi(cfg: RunConfig) -> dict:
    """Operational vs Choi-marginal signalling verdicts on random channels."""
    tol, split = 1e-8, (2, 2)
    disagreements = ns_flagged = planted_flagged = 0

    def verdicts(ch):
        op = check_ns_operational(ch, split)
        cm = check_ns_choi(choi_of_channel(ch), split)
        return op <= tol, cm <= tol

    for i in range(100):
        op_ok, cm_ok = verdicts(random_channel(2, 4, 1 + i % 3, seed=cfg.seed + i))
        disagreements += op_ok != cm_ok
    for i in range(50):
        op_ok, cm_ok = verdicts(random_ns_channel(2, split, 2,
                                                  seed=cfg.seed + 10000 + i))
        disagreements += op_ok != cm_ok
        ns_flagged += op_ok and cm_ok
    for i in range(50):
        base = random_ns_channel(2, split, 2, seed=cfg.seed + 20000 + i)
        ch = plant_signalling(base, split, weight=0.25, seed=cfg.seed + 30000 + i)
        op_ok, cm_ok = verdicts(ch)
        disagreements += op_ok != cm_ok
        planted_flagged += (not op_ok) and (not cm_ok)
    return {"passed": disagreements == 0 and ns_flagged == 50
                      and planted_flagged == 50,
            "channels": 200, "disagreements": disagreements,
            "ns_detected": ns_flagged, "signalling_detected": planted_flagged,
            "tolerance": tol}


def _suite_objective(cfg: RunConfig) -> dict:
    """The two independent objective routes agree on random feasible attacks."""
    from .entropy import _objective_fast, _objective_purification, _workspace

    alpha = 0.45 if cfg.alpha == "auto" else float(cfg.alpha)
    ws = _workspace(alpha)
    rng = np.random.default_rng(cfg.seed)
    worst = 0.0
    for i in range(50):
        c = choi_of_channel(random_ns_channel(2, (2, 2), 2,
                                              seed=cfg.seed + i)).data
        lam = np.array([rng.uniform(-2, 2), rng.uniform(-2, 2), 0.0])
        gamma = float(rng.uniform(0.0, 0.3))
        worst = max(worst, abs(_objective_fast(c, ws, gamma, lam)
                               - _objective_purification(c, ws, gamma, lam)))
    return {"passed": worst <= 1e-8, "points": 50, "worst_disagreement": worst,
            "tolerance": 1e-8}


def _suite_gradient(cfg: RunConfig) -> dict:
    """Analytic gradient against central differences on interior points."""
    from .entropy import _objective_fast, _workspace

    alpha = 0.45 if cfg.alpha == "auto" else float(cfg.alpha)
    ws = _workspace(alpha)
    hon = honest_attack_choi(alpha, 1.0)[0].data
    rng = np.random.default_rng(cfg.seed)
    h, worst = 1e-5, 0.0
    for i in range(20):
        other = choi_of_channel(random_ns_channel(2, (2, 2), 2,
                                                  seed=cfg.seed + 500 + i)).data
        c0 = 0.55 * hon + 0.15 * other + 0.3 * ws.mix
        d = other - hon
        lam = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1), 0.0])
        grad, _ = objective_gradient(c0, alpha, 0.0, lam)
        fd = (_objective_fast(c0 + h * d, ws, 0.0, lam)
              - _objective_fast(c0 - h * d, ws, 0.0, lam)) / (2 * h)
        an = float(np.vdot(grad, d).real)
        worst = max(worst, abs(fd - an) / max(1.0, abs(fd)))
    return {"passed": worst <= 1e-4, "points": 20, "worst_relative_error": worst,
            "tolerance": 1e-4}


def _suite_duality(cfg: RunConfig) -> dict:
    """Certified value never above the primal, nor above any feasible point."""
    rng = np.random.default_rng(cfg.seed)
    violations, worst_gap = 0, 0.0
    for _ in range(20):
        alpha = float(rng.uniform(0.3, 0.6))
        gamma = float(rng.uniform(0.01, 0.2))
        lam = np.array([rng.uniform(-2, 2), rng.uniform(-2, 2), 0.0])
        res = minimize_tradeoff(alpha, gamma, lam, opts=_SUITE_SOLVER)
        hon_val = objective(honest_attack_choi(alpha, 1.0, 0.0)[0],
                            alpha, gamma, lam)
        if res["c_certified"] > res["primal"] + 1e-9:
            violations += 1
        if res["c_certified"] > hon_val + 1e-9:
            violations += 1
        worst_gap = max(worst_gap, res["gap"])
    return {"passed": violations == 0, "instances": 20,
            "violations": violations, "worst_gap": worst_gap}


_SUITES = {"squash": _suite_squash, "choi": _suite_choi,
           "objective": _suite_objective, "gradient": _suite_gradient,
           "duality": _suite_duality}


def _cmd_verify(args, cfg: RunConfig) -> int:
    names = [s.strip() for s in (args.suite or ",".join(_SUITE_NAMES)).split(",")
             if s.strip()]
    for name in names:
        if name not in _SUITES:
            raise ConfigError(
                f"suite: unknown {name!r} (choose from {', '.join(_SUITE_NAMES)})")
    results = {}
    for name in names:
        results[name] = _SUITES[name](cfg)
        print(f"suite {name}: {'PASS' if results[name]['passed'] else 'FAIL'}")
    _, json_path = _out_paths(cfg, "verify")
    _write_json(json_path, KeyRateReport(args.cmd, asdict(cfg), [],
                                         suites=results).payload())
    return 0 if all(r["passed"] for r in results.values()) else 3


# -------------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_flags(p: _Parser, *, model=True, budget=True, solver=True,
               rounds=False) -> None:
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--out", help="output path or stem (CSV plus JSON mirror)")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int,
                   help="worker processes for sweep points "
                        "(default: QKDCERT_WORKERS or 1)")
    if model:
        p.add_argument("--protocol", type=_parse_protocol)
        p.add_argument("--alpha", type=_parse_alpha,
                       help="pulse amplitude, or 'auto' for a grid search")
        p.add_argument("--eta", type=_parse_floats,
                       help="transmittance value or comma list")
        p.add_argument("--qber", type=_parse_floats,
                       help="error rate value or comma list")
        p.add_argument("--gamma", type=float)
    if budget:
        p.add_argument("--eps-snd", dest="eps_snd", type=float)
        p.add_argument("--eps-comp", dest="eps_comp", type=float)
    if solver:
        p.add_argument("--cutoff", type=int)
        p.add_argument("--solver-tol", dest="solver_tol", type=float)
        p.add_argument("--max-iters", dest="max_iters", type=int)
    if rounds:
        p.add_argument("--n", type=_parse_ints,
                       help="round count (comma list accepted where sensible)")


def _build_parser() -> _Parser:
    parser = _Parser(prog="qkdcert",
                     description="certified key rates for "
                                 "causality-constrained QKD")
    sub = parser.add_subparsers(dest="cmd", metavar="command")
    sub.required = True

    def command(name, handler, help_, **kw):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(handler=handler, cmd=name)
        return p

    p = command("asymptotic", _cmd_eta_sweep, "asymptotic rates at given points")
    _add_flags(p)
    p = command("finite", _cmd_finite, "finite-size rates at a given n")
    _add_flags(p, rounds=True)
    p = command("sweep-eta", _cmd_eta_sweep, "asymptotic rate over an eta grid")
    _add_flags(p)
    p = command("sweep-qber", _cmd_sweep_qber, "asymptotic rate over a qber grid")
    _add_flags(p)
    p = command("verify", _cmd_verify, "run verification suites")
    _add_flags(p, model=False, budget=False)
    p.add_argument("--suite", help=f"comma list from {', '.join(_SUITE_NAMES)}")
    p = command("simulate", _cmd_simulate, "honest Monte-Carlo transcript")
    _add_flags(p, budget=False, solver=False, rounds=True)
    p = command("compare", _cmd_compare, "relativistic vs dps at matched inputs")
    _add_flags(p)
    p = command("timing", _cmd_timing, "spacing and delay bounds for a link")
    p.add_argument("--distance", type=float, required=True,
                   help="Alice-Bob distance in meters")
    p.add_argument("--refractive-index", dest="refractive_index", type=float,
                   default=1.0)
    p.add_argument("--delta-t", dest="delta_t", type=float)
    return parser


def _flag_values(args) -> dict:
    return {key: getattr(args, key) for key in _FIELD_PARSERS
            if getattr(args, key, None) is not None}


def run(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(list(argv))
        layers = []
        if getattr(args, "config", None):
            layers.append(_read_config_file(args.config))
        layers.append(_flag_values(args))
        cfg = _merge_config(*layers)
        return args.handler(args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(parser.format_usage().rstrip(), file=sys.stderr)
        return 2


def main(argv=None) -> None:
    raise SystemExit(run(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
