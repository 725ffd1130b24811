"""Experiment runner: single-instance solves, Monte Carlo noise sweeps and
oracle validation, with CSV persistence.

All dBm values are converted to linear milliwatts here, at the boundary;
the solver modules never see dBm.  Sweeps reuse the same per-trial channel
draw across all sweep points (seed = base_seed + trial index), so sweep
curves are paired-sample comparisons rather than independent draws.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace

import numpy as np

from .channel import (SystemParams, dbm_to_mw, decompose,
                      generate_channel_pair, load_channel_file)
from .errors import DualBracketError
from .fixed_q import (FixedQOptions, FixedQProblem, energy_residual,
                      solve_fixed_q, x_stationarity_residuals)
from .joint import (JointOptions, JointProblem, harvest_residual,
                    power_residual, solve_joint)
from .oracle import GridSpec, oracle_fixed_q, oracle_joint

CSV_HEADER = ("sweep_value_dbm,mean_capacity_case1,mean_capacity_case2,"
              "mean_eps_case1,mean_eps_case2,"
              "trials_converged_case1,trials_converged_case2")


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    p_source_dbm: float = 30.0
    sigma1_sq_dbm: float = 10.0
    sigma2_sq_dbm: float = 0.0
    eta: float = 1.0
    m_src: int = 4
    l_relay: int = 4
    n_dst: int = 4
    d_streams: int = 4
    channel_variance_dbm: float = 20.0
    rician_k: float | None = None
    trials: int = 500
    base_seed: int = 12345
    sweep_variable: str = "sigma1_sq"
    sweep_start_dbm: float = -20.0
    sweep_stop_dbm: float = 30.0
    sweep_step_dbm: float = 5.0
    solver_mode: str = "fixed_point"
    eps_tol: float = 1e-3
    dual_tol: float = 1e-9
    cap_tol: float = 1e-3
    output_path: str = "sweep.csv"
    validate_case: str = "1"
    validate_instances: int = 50

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.sweep_variable not in ("sigma1_sq", "sigma2_sq"):
            raise ConfigError(f"sweep_variable must be sigma1_sq or sigma2_sq, "
                              f"got {self.sweep_variable!r}")
        if self.sweep_step_dbm <= 0:
            raise ConfigError("sweep_step_dbm must be positive")
        if self.sweep_stop_dbm < self.sweep_start_dbm:
            raise ConfigError("sweep range is empty")
        if self.solver_mode not in ("sweep", "fixed_point"):
            raise ConfigError(f"solver_mode must be sweep or fixed_point, "
                              f"got {self.solver_mode!r}")
        if self.validate_case not in ("1", "2", "both"):
            raise ConfigError("validate_case must be 1, 2 or both")
        if self.validate_instances < 1:
            raise ConfigError("validate_instances must be >= 1")


_INT_KEYS = {"m_src", "l_relay", "n_dst", "d_streams", "trials", "base_seed",
             "validate_instances"}
_STR_KEYS = {"sweep_variable", "solver_mode", "output_path", "validate_case"}


def parse_config(path: str) -> ExperimentConfig:
    """Read a flat ``key = value`` file; '#' starts a comment; unknown keys
    are rejected with the offending line number."""
    known = {f.name for f in fields(ExperimentConfig)}
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}, line {lineno}: expected 'key = value', got {raw!r}")
        key, val = key.strip(), val.strip()
        if key not in known:
            raise ConfigError(f"{path}, line {lineno}: unknown key {key!r}")
        try:
            if key in _STR_KEYS:
                values[key] = val
            elif key in _INT_KEYS:
                values[key] = int(val)
            elif key == "rician_k":
                values[key] = None if val.lower() in ("none", "") else float(val)
            else:
                values[key] = float(val)
        except ValueError:
            raise ConfigError(f"{path}, line {lineno}: cannot parse value {val!r} "
                              f"for key {key!r}") from None
    try:
        return ExperimentConfig(**values)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _system_params(cfg: ExperimentConfig, sigma1_sq_dbm: float | None = None,
                   sigma2_sq_dbm: float | None = None) -> SystemParams:
    s1 = cfg.sigma1_sq_dbm if sigma1_sq_dbm is None else sigma1_sq_dbm
    s2 = cfg.sigma2_sq_dbm if sigma2_sq_dbm is None else sigma2_sq_dbm
    try:
        return SystemParams(
            p_source=dbm_to_mw(cfg.p_source_dbm),
            sigma1_sq=dbm_to_mw(s1),
            sigma2_sq=dbm_to_mw(s2),
            eta=cfg.eta,
            m_src=cfg.m_src, l_relay=cfg.l_relay, n_dst=cfg.n_dst,
            d_streams=cfg.d_streams)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _solver_options(cfg: ExperimentConfig):
    fopts = FixedQOptions(mode=cfg.solver_mode, eps_tol=cfg.eps_tol)
    jopts = JointOptions(eps_mode=cfg.solver_mode, eps_tol=cfg.eps_tol,
                         cap_tol=cfg.cap_tol, dual_rel_tol=cfg.dual_tol)
    return fopts, jopts


def _fmt(v: float) -> str:
    return repr(float(v))


def _fmt_vec(vec) -> str:
    return "[" + ", ".join(_fmt(v) for v in vec) + "]"


def run_solve(cfg: ExperimentConfig, channel_path: str | None = None) -> str:
    """Solve one channel instance with both schemes and report the details."""
    params = _system_params(cfg)
    if channel_path is not None:
        ch = load_channel_file(channel_path)
        ch.check_dims(params)
        source = f"file={channel_path}"
    else:
        ch = generate_channel_pair(cfg.base_seed, params,
                                   dbm_to_mw(cfg.channel_variance_dbm),
                                   rician_k=cfg.rician_k)
        source = f"seed={cfg.base_seed}"
    eig = decompose(ch, cfg.d_streams)
    fopts, jopts = _solver_options(cfg)
    fq = FixedQProblem.from_eigensystem(eig, params)
    s1 = solve_fixed_q(fq, fopts)
    jp = JointProblem.from_eigensystem(eig, params)
    s2 = solve_joint(jp, jopts)

    stat1 = float(np.max(np.abs(x_stationarity_residuals(s1.x, s1.eps, s1.mu, fq)))) \
        if np.any(s1.x > 0) else 0.0
    lines = [
        f"channel: {source}",
        f"alpha: {_fmt_vec(eig.alpha)}",
        f"beta: {_fmt_vec(eig.beta)}",
        "case I (uniform precoding):",
        f"  capacity_bits: {_fmt(s1.capacity)}",
        f"  eps: {_fmt(s1.eps)}",
        f"  x: {_fmt_vec(s1.x)}",
        f"  mu: {_fmt(s1.mu)}",
        f"  energy_residual: {_fmt(energy_residual(s1.x, s1.eps, fq))}",
        f"  stationarity_max: {_fmt(stat1)}",
        f"  iterations: {s1.n_iter}",
        f"  converged: {s1.converged}",
        "case II (joint design):",
        f"  capacity_bits: {_fmt(s2.capacity)}",
        f"  eps: {_fmt(s2.eps)}",
        f"  q: {_fmt_vec(s2.q)}",
        f"  d: {_fmt_vec(s2.d)}",
        f"  nu1: {_fmt(s2.nu1)}",
        f"  nu2: {_fmt(s2.nu2)}",
        f"  power_residual: {_fmt(power_residual(s2.q, jp))}",
        f"  harvest_residual: {_fmt(harvest_residual(s2.q, s2.d, s2.eps, jp))}",
        f"  outer_iterations: {s2.n_outer}",
        f"  converged: {s2.converged}",
        f"capacity_gain_case2_minus_case1: {_fmt(s2.capacity - s1.capacity)}",
    ]
    return "\n".join(lines) + "\n"


def sweep_values_dbm(cfg: ExperimentConfig) -> list:
    vals = []
    v = cfg.sweep_start_dbm
    while v <= cfg.sweep_stop_dbm + 1e-9:
        vals.append(round(v, 12))
        v += cfg.sweep_step_dbm
    return vals


def _sweep_trial(args):
    """One Monte Carlo trial: a single channel draw solved at every sweep point."""
    cfg, values_dbm, trial_idx = args
    params0 = _system_params(cfg)
    ch = generate_channel_pair(cfg.base_seed + trial_idx, params0,
                               dbm_to_mw(cfg.channel_variance_dbm),
                               rician_k=cfg.rician_k)
    eig = decompose(ch, cfg.d_streams)
    fopts, jopts = _solver_options(cfg)
    out = []
    for v in values_dbm:
        if cfg.sweep_variable == "sigma1_sq":
            params = _system_params(cfg, sigma1_sq_dbm=v)
        else:
            params = _system_params(cfg, sigma2_sq_dbm=v)
        s1 = solve_fixed_q(FixedQProblem.from_eigensystem(eig, params), fopts)
        s2 = solve_joint(JointProblem.from_eigensystem(eig, params), jopts)
        out.append((s1.capacity, s1.eps, s1.converged,
                    s2.capacity, s2.eps, s2.converged))
    return out


@dataclass(frozen=True)
class SweepRow:
    """Aggregates over the converged trials of one sweep point."""

    sweep_value_dbm: float
    mean_capacity_case1: float
    mean_capacity_case2: float
    mean_eps_case1: float
    mean_eps_case2: float
    trials_converged_case1: int
    trials_converged_case2: int

    def to_csv(self) -> str:
        return ",".join([
            _fmt(self.sweep_value_dbm),
            _fmt(self.mean_capacity_case1), _fmt(self.mean_capacity_case2),
            _fmt(self.mean_eps_case1), _fmt(self.mean_eps_case2),
            str(self.trials_converged_case1), str(self.trials_converged_case2),
        ])


def compute_sweep(cfg: ExperimentConfig, jobs: int | None = None) -> list:
    """Run the Monte Carlo sweep and aggregate per sweep point.

    Trials execute in parallel when jobs > 1; per-trial seeds make the
    aggregation independent of scheduling order.
    """
    values = sweep_values_dbm(cfg)
    args = [(cfg, values, t) for t in range(cfg.trials)]
    if jobs is None:
        jobs = min(os.cpu_count() or 1, cfg.trials)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_trial = list(pool.map(_sweep_trial, args,
                                      chunksize=max(1, cfg.trials // (4 * jobs))))
    else:
        per_trial = [_sweep_trial(a) for a in args]
    rows = []
    for j, v in enumerate(values):
        cap1 = [t[j][0] for t in per_trial if t[j][2]]
        eps1 = [t[j][1] for t in per_trial if t[j][2]]
        cap2 = [t[j][3] for t in per_trial if t[j][5]]
        eps2 = [t[j][4] for t in per_trial if t[j][5]]
        rows.append(SweepRow(
            sweep_value_dbm=v,
            mean_capacity_case1=sum(cap1) / len(cap1) if cap1 else float("nan"),
            mean_capacity_case2=sum(cap2) / len(cap2) if cap2 else float("nan"),
            mean_eps_case1=sum(eps1) / len(eps1) if eps1 else float("nan"),
            mean_eps_case2=sum(eps2) / len(eps2) if eps2 else float("nan"),
            trials_converged_case1=len(cap1),
            trials_converged_case2=len(cap2),
        ))
    return rows


def write_sweep_csv(rows, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(row.to_csv() + "\n")


def run_sweep(cfg: ExperimentConfig, output_path: str | None = None,
              jobs: int | None = None) -> list:
    rows = compute_sweep(cfg, jobs=jobs)
    write_sweep_csv(rows, output_path or cfg.output_path)
    return rows


def run_validate(cfg: ExperimentConfig, grid: GridSpec | None = None) -> str:
    """Cross-check the iterative solvers against the brute-force oracles on
    random instances; D must be at most 2."""
    if cfg.d_streams > 2:
        raise ConfigError("validate requires d_streams <= 2 (oracle dimension guard)")
    params = _system_params(cfg)
    fopts, jopts = _solver_options(cfg)
    grid = grid or GridSpec()
    bound = 5e-2
    lines = [f"validate: {cfg.validate_instances} instances, case={cfg.validate_case}, "
             f"D={cfg.d_streams}, base_seed={cfg.base_seed}"]
    overall_ok = True
    for case in ("1", "2"):
        if cfg.validate_case not in (case, "both"):
            continue
        worst = 0.0
        for i in range(cfg.validate_instances):
            ch = generate_channel_pair(cfg.base_seed + i, params,
                                       dbm_to_mw(cfg.channel_variance_dbm),
                                       rician_k=cfg.rician_k)
            eig = decompose(ch, cfg.d_streams)
            if case == "1":
                prob = FixedQProblem.from_eigensystem(eig, params)
                gap = abs(solve_fixed_q(prob, fopts).capacity
                          - oracle_fixed_q(prob, grid).capacity)
            else:
                prob = JointProblem.from_eigensystem(eig, params)
                gap = abs(solve_joint(prob, jopts).capacity
                          - oracle_joint(prob, grid).capacity)
            worst = max(worst, gap)
        ok = worst <= bound
        overall_ok = overall_ok and ok
        lines.append(f"case {case}: max_capacity_gap_bits={_fmt(worst)} "
                     f"bound={_fmt(bound)} -> {'PASS' if ok else 'FAIL'}")
    lines.append("result: " + ("PASS" if overall_ok else "FAIL"))
    return "\n".join(lines) + "\n"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="psrelay",
        description="Two-hop MIMO relay capacity with power-splitting energy harvesting")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, help="override base_seed")
        p.add_argument("--mode", choices=["sweep", "fixed_point"],
                       help="override solver_mode")

    p_solve = sub.add_parser("solve", help="solve one channel instance")
    common(p_solve)
    p_solve.add_argument("--channel-file", help="explicit channel matrices (re:im text)")

    p_sweep = sub.add_parser("sweep", help="Monte Carlo noise sweep to CSV")
    common(p_sweep)
    p_sweep.add_argument("--output", help="override output_path")
    p_sweep.add_argument("--jobs", type=int, default=None,
                         help="parallel trial workers (default: cpu count)")

    p_val = sub.add_parser("validate", help="cross-check solvers against the oracle")
    common(p_val)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = parse_config(ns.config) if ns.config else ExperimentConfig()
        if ns.seed is not None:
            cfg = replace(cfg, base_seed=ns.seed)
        if ns.mode is not None:
            cfg = replace(cfg, solver_mode=ns.mode)
        if ns.command == "solve":
            sys.stdout.write(run_solve(cfg, channel_path=ns.channel_file))
        elif ns.command == "sweep":
            run_sweep(cfg, output_path=ns.output, jobs=ns.jobs)
        elif ns.command == "validate":
            sys.stdout.write(run_validate(cfg))
        return 0
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DualBracketError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


def entry() -> None:
    raise SystemExit(main())
