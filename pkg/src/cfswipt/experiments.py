"""Experiment families: E-R regions, AP density, IU/EH separation and convergence traces.

Every point is rebuilt from ``(seed, config)``: the deployment and the
shadowing come from ``numpy.random.default_rng(seed)``, so cell-free and
colocated runs, and runs at different phi or E-bar, share the same
realisation for a given seed.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import RunConfig
from .geometry import (axis_deployment, colocated_equivalent, large_scale_gains,
                       sample_deployment)
from .metrics import evaluate
from .sdp.algorithm import SolverFailure, run_algorithm1
from .sdp.data import all_stats, build_data

log = logging.getLogger(__name__)

WORKERS_ENV = "CFSWIPT_WORKERS"
KINDS = ("er_region", "density", "separation", "convergence")
MODELS = ("cellfree", "colocated")

DESK = {
    "lambda_a": 2.5e-5,  # E[N] = 25 on the 1 km^2 AP square
    "seeds": [0, 1, 2],
    "phi_values": [0.3, 0.4],
    "er_grid": [0.0, 2.5e-5, 5e-5],
    "density_grid": [2e-5, 4e-5, 6e-5],
    "separation_grid": [0.0, 100.0, 200.0, 300.0, 400.0, 500.0],
}
FULL = {
    "lambda_a": None,  # the configured lambda_a
    "seeds": list(range(50)),
    "phi_values": [0.3, 0.4, 0.5],
    "er_grid": [0.0, 1e-3, 2e-3, 3e-3, 4e-3, 5e-3],
    "density_grid": [1e-4 * x for x in (0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0,
                                        2.2, 2.4, 2.6)],
    "separation_grid": [0.0, 100.0, 200.0, 300.0, 400.0, 500.0],
}


@dataclass
class SweepSpec:
    kind: str
    grid: list
    seeds: list
    phi_values: list = field(default_factory=lambda: [0.3])

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind in {KINDS} violated")
        if not self.grid:
            raise ValueError("nonempty grid violated")
        if not self.seeds:
            raise ValueError("nonempty seeds violated")


@dataclass
class ResultRow:
    kind: str
    model: str
    sweep_value: float
    phi: float
    seed: int
    n_aps: int
    esr_worst: float  # bits/s/Hz, from the optimal objective
    esr_recovered: float  # bits/s/Hz, closed forms at the extracted vectors
    ahe_k: float  # J, smallest over attacked indices
    pi: float  # nats
    iterations: int
    converged: bool
    rank_ok: bool
    status: str

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ConvergenceRow:
    seed: int
    init: float
    iteration: int
    pi: float

    def to_dict(self) -> dict:
        return asdict(self)


def profile_defaults(cfg: RunConfig) -> dict:
    """Grids and intensity for ``cfg.profile`` with explicit sweep settings taking precedence."""
    base = dict(DESK if cfg.profile == "desk" else FULL)
    if base["lambda_a"] is None:
        base["lambda_a"] = cfg.lambda_a
    sw = cfg.sweep
    if sw.lambda_a is not None:
        base["lambda_a"] = float(sw.lambda_a)
    for key in ("seeds", "phi_values", "er_grid", "density_grid", "separation_grid"):
        val = getattr(sw, key)
        if val is not None:
            base[key] = list(val)
    return base


def _cap(dep, cap):
    if dep.n_aps <= cap:
        return dep
    # APs are i.i.d. uniform, so the first ``cap`` of them are a uniform subset
    return type(dep)(dep.ap_positions[:cap], dep.user_positions, dep.eh_position)


def realization(cfg: RunConfig, seed: int, lambda_a: float, model: str = "cellfree"):
    """Large-scale gains of one seeded deployment (the same draws for either model)."""
    rng = np.random.default_rng(seed)
    dep = _cap(sample_deployment(rng, cfg.area(), lambda_a, cfg.m_users), cfg.n_aps_cap)
    g = large_scale_gains(dep, cfg.fading(), rng, cfg.shared_shadowing)
    return colocated_equivalent(g) if model == "colocated" else g


def separation_realization(cfg: RunConfig, seed: int, lambda_a: float, delta: float):
    """One IU and the EH on the x-axis, APs and shadowing fixed by ``seed`` for every delta."""
    rng = np.random.default_rng(seed)
    aps = sample_deployment(rng, cfg.area(), lambda_a, 1).ap_positions
    dep = _cap(axis_deployment(aps, delta), cfg.n_aps_cap)
    shadow_rng = np.random.default_rng([seed, 1])
    return large_scale_gains(dep, cfg.fading(cfg.sweep.separation_alpha), shadow_rng,
                             cfg.shared_shadowing)


def solve_point(cfg: RunConfig, g, phi: float, e_min: float, init: float | None = None):
    """Run the successive linearisation on one realisation; returns ``(report, metrics)`` or raises SolverFailure.

    Without an explicit ``init`` the run starts from ``cfg.init``.  If it ends
    at pi <= 0 (a zero secrecy rate, where the linearisation point can stop
    moving) or does not converge, it is repeated from each of
    ``cfg.restart_inits`` and the best objective is kept.
    """
    tcfg = cfg.training(phi)
    stats = all_stats(g, tcfg)
    d = build_data(stats, g, tcfg, cfg.zeta)
    k = 0 if cfg.mode == "known" else None

    def run(x0):
        return run_algorithm1(d, e_min, cfg.p_t, x0, tol=cfg.tol, max_iter=cfg.max_iter,
                              mode=cfg.mode, k=k)

    rep = run(cfg.init if init is None else init)
    if init is None:
        for x0 in cfg.restart_inits:
            if rep.pi > 0 and rep.converged:
                break
            try:
                alt = run(x0)
            except SolverFailure as exc:
                log.debug("restart from %g failed: %s", x0, exc)
                continue
            if (alt.pi, alt.converged) > (rep.pi, rep.converged):
                alt.diagnostics["init"] = x0
                rep = alt
    ks = None if k is None else [k]
    met = evaluate(rep.allocation, stats, g, tcfg, cfg.zeta, ks=ks)
    return rep, met


def _row(cfg, kind, model, value, phi, seed, g, e_min) -> ResultRow:
    try:
        rep, met = solve_point(cfg, g, phi, e_min)
    except SolverFailure as exc:
        log.info("%s %s value=%g phi=%g seed=%d: %s", kind, model, value, phi, seed, exc)
        nan = float("nan")
        return ResultRow(kind, model, float(value), phi, seed, g.n_aps, 0.0, 0.0, nan, nan,
                         exc.iteration, False, False, exc.status)
    return ResultRow(kind, model, float(value), phi, seed, g.n_aps, rep.esr_worst,
                     met.worst_esr, float(np.min(met.ahe)), rep.pi, rep.iterations,
                     rep.converged, rep.rank_one, "optimal")


def _task(args):
    cfg, kind, model, value, phi, seed, lam = args
    if kind == "separation":
        g = separation_realization(cfg, seed, lam, value)
        return _row(cfg, kind, model, value, phi, seed, g, cfg.sweep.separation_e_min)
    if kind == "density":
        g = realization(cfg, seed, value, model)
        return _row(cfg, kind, model, value, phi, seed, g, cfg.sweep.density_e_min)
    g = realization(cfg, seed, lam, model)
    return _row(cfg, kind, model, value, phi, seed, g, value)


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _run(tasks):
    n = worker_count()
    if n == 1 or len(tasks) == 1:
        rows = [_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(n) as ex:
            rows = list(ex.map(_task, tasks))
    return sorted(rows, key=lambda r: (r.model, r.sweep_value, r.phi, r.seed))


def run_er_sweep(spec: SweepSpec, cfg: RunConfig, model: str = "cellfree",
                 lambda_a: float | None = None) -> list:
    if model not in MODELS:
        raise ValueError(f"model in {MODELS} violated")
    lam = profile_defaults(cfg)["lambda_a"] if lambda_a is None else lambda_a
    tasks = [(cfg, "er_region", model, e, phi, s, lam)
             for e in spec.grid for phi in spec.phi_values for s in spec.seeds]
    return _run(tasks)


def run_density_sweep(spec: SweepSpec, cfg: RunConfig) -> list:
    phis = spec.phi_values or [cfg.sweep.density_phi]
    tasks = [(cfg, "density", "cellfree", lam, phi, s, lam)
             for lam in spec.grid for phi in phis for s in spec.seeds]
    return _run(tasks)


def run_separation_sweep(spec: SweepSpec, cfg: RunConfig, lambda_a: float | None = None) -> list:
    lam = profile_defaults(cfg)["lambda_a"] if lambda_a is None else lambda_a
    phis = spec.phi_values or [cfg.sweep.separation_phi]
    one = cfg.replace(m_users=1)
    tasks = [(one, "separation", "cellfree", d, phi, s, lam)
             for d in spec.grid for phi in phis for s in spec.seeds]
    return _run(tasks)


def run_convergence(cfg: RunConfig, seeds, inits=(-8.0, -6.0), e_min: float | None = None,
                    phi: float | None = None, lambda_a: float | None = None) -> list:
    """Per-iteration objective of the successive linearisation for each seed and initial point."""
    lam = profile_defaults(cfg)["lambda_a"] if lambda_a is None else lambda_a
    e_min = cfg.sweep.convergence_e_min if e_min is None else e_min
    rows = []
    for s in seeds:
        g = realization(cfg, s, lam)
        for init in inits:
            try:
                rep, _ = solve_point(cfg, g, cfg.sweep.convergence_phi if phi is None else phi,
                                     e_min, init)
            except SolverFailure as exc:
                log.warning("convergence seed=%d init=%g: %s", s, init, exc)
                continue
            rows += [ConvergenceRow(s, float(init), i + 1, float(p))
                     for i, p in enumerate(rep.objective_trace)]
    return rows


def seed_average(rows, key=("model", "sweep_value", "phi")) -> dict:
    """Mean and standard error of esr_worst per key, over the rows that solved or were infeasible."""
    groups = {}
    for r in rows:
        if r.status not in ("optimal", "infeasible"):
            continue
        groups.setdefault(tuple(getattr(r, k) for k in key), []).append(r.esr_worst)
    out = {}
    for k, v in groups.items():
        v = np.asarray(v)
        se = float(v.std(ddof=1) / np.sqrt(len(v))) if len(v) > 1 else 0.0
        out[k] = (float(v.mean()), se, len(v))
    return out
