"""Successive linearisation around the relaxed SDP and rank-one recovery."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..metrics import LN2, PowerAllocation
from .data import SdpData
from .problem import IterationState, build_problem
from .solver import (SdpSolution, SolverOptions, check_solution, reduce_rank,
                     solution_from_blocks, solve_conic)

log = logging.getLogger(__name__)

RANK_TOL = 1e-6
FIXED_POINT_TOL = 1e-6  # relative gap between e^{x*} and its tangent at the last point
ZERO_TOL = 1e-6  # largest eigenvalue (in per-AP budget units) below which a block is "off"


class SolverFailure(RuntimeError):
    def __init__(self, status, iteration, msg=""):
        super().__init__(f"SDP {status} at iteration {iteration}{': ' + msg if msg else ''}")
        self.status = status
        self.iteration = iteration


@dataclass
class SolveReport:
    allocation: PowerAllocation
    objective_trace: list
    esr_worst: float  # bits/s/Hz, clamped at 0
    rank_ratios: np.ndarray  # (M+2,)
    iterations: int
    converged: bool
    pi: float = float("nan")  # nats, unclamped
    states: list = field(default_factory=list)
    solution: SdpSolution | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def rank_one(self) -> bool:
        return bool(np.all(self.rank_ratios <= RANK_TOL))


def extract_rank_one(mat, rank_tol: float = RANK_TOL, zero_tol: float = 0.0):
    """Principal vector sqrt(l1) v1 with its largest-magnitude entry made >= 0.

    Returns ``(vector, l2 / l1)``.  A matrix whose top eigenvalue is <= zero_tol
    (or <= 0) gives the zero vector and ratio 0.  ``rank_tol`` is only used to
    log a warning; callers decide what to do with the ratio.
    """
    mat = np.asarray(mat, dtype=float)
    n = mat.shape[0]
    if n == 0:
        return np.zeros(0), 0.0
    w, v = np.linalg.eigh(0.5 * (mat + mat.T))
    l1 = w[-1]
    if l1 <= max(zero_tol, 0.0):
        return np.zeros(n), 0.0
    vec = np.sqrt(l1) * v[:, -1]
    if vec[np.argmax(np.abs(vec))] < 0:
        vec = -vec
    ratio = float(max(w[-2], 0.0) / l1) if n > 1 else 0.0
    if ratio > rank_tol:
        log.debug("rank-one ratio %.3e above %.1e", ratio, rank_tol)
    return vec, ratio


def linearization_underestimates(x, x_bar) -> np.ndarray:
    """Elementwise check that the tangent of e^x at x_bar lies below e^x.

    Evaluated as ``expm1(x - x_bar) >= x - x_bar``, i.e. the inequality divided
    by e^{x_bar} > 0, so it is exact in floating point for any scale.
    """
    d = np.asarray(x, dtype=float) - np.asarray(x_bar, dtype=float)
    return np.expm1(d) >= d


def next_point(x_star, x_bar):
    """ln(e^{x_bar}(x* - x_bar + 1)): the point whose exponential equals the linearised value."""
    x_star, x_bar = np.asarray(x_star, dtype=float), np.asarray(x_bar, dtype=float)
    d = x_star - x_bar
    if np.any(d <= -1.0):
        raise ValueError("x* - x_bar + 1 > 0 violated")
    # ln(1 + d) <= d, so the new point never passes x*; the clamp removes rounding
    return np.minimum(x_bar + np.log1p(d), x_star)


def linearization_gap(x_star, x_bar) -> np.ndarray:
    """|e^{x_bar}(x* - x_bar + 1) - e^{x*}| / e^{x*}, i.e. |(1 + d) e^{-d} - 1| with d = x* - x_bar."""
    d = np.asarray(x_star, dtype=float) - np.asarray(x_bar, dtype=float)
    return np.abs(d * np.exp(-d) + np.expm1(-d))


def successive_improvement(x_star, x_bar) -> np.ndarray:
    """Elementwise check that the tangent at the updated point is at least the old one at x*.

    With x' = next_point(x*, x_bar), e^{x'}(x* - x' + 1) / (e^{x_bar}(x* - x_bar + 1))
    equals x* - x' + 1, so the improvement holds exactly when x' <= x*.
    """
    x_star = np.asarray(x_star, dtype=float)
    return next_point(x_star, x_bar) <= x_star


def _allocation(d: SdpData, sol: SdpSolution, scales, rank_tol):
    vecs, ratios = [], []
    for b, P in enumerate(sol.blocks):
        # the "off" test is done in budget units so it does not depend on gains
        Xb = P / np.outer(scales[b], scales[b])
        if np.linalg.eigvalsh(0.5 * (Xb + Xb.T))[-1] <= ZERO_TOL:
            vecs.append(np.zeros(d.n_aps))
            ratios.append(0.0)
            continue
        vec, ratio = extract_rank_one(P, rank_tol)
        vecs.append(vec)
        ratios.append(ratio)
    m = d.n_users
    alloc = PowerAllocation(np.array(vecs[:m]), vecs[m], vecs[m + 1])
    return alloc, np.array(ratios)


def run_algorithm1(d: SdpData, e_min: float, p_t: float, init: IterationState | float = -6.0,
                   tol: float = 1e-5, max_iter: int = 50, mode: str = "robust",
                   k: int | None = None, rank_tol: float = RANK_TOL,
                   opts: SolverOptions | None = None, solver=None,
                   fp_tol: float = FIXED_POINT_TOL) -> SolveReport:
    """Iterate solve / update-linearisation-point until the objective settles.

    Stops once |pi_n - pi_{n-1}| < tol and every linearised constraint is
    within ``fp_tol`` (relative) of its exponential at the last optimum.

    ``solver`` defaults to the embedded interior-point method; pass
    ``cvx_backend.solve_cvx`` to cross-check.  Each iteration also scores the
    previous optimum under the new linearisation (it stays feasible) and
    keeps the better point, which makes the trace monotone by construction.
    """
    if tol <= 0:
        raise ValueError("tol > 0 violated")
    if max_iter < 1:
        raise ValueError("max_iter >= 1 violated")
    if not isinstance(init, IterationState):
        init = IterationState.constant(d.n_users, float(init))
    solve = solver or (lambda prob: solve_conic(prob, opts))
    state = init
    trace, states = [], [init]
    prev_blocks = None
    sol = None
    prob = None
    converged = False
    diag = {"kept_previous": 0, "raw_decreases": []}
    for it in range(1, max_iter + 1):
        prob = build_problem(d, state, e_min, p_t, mode=mode, k=k)
        new = solve(prob)
        if new.status != "optimal":
            raise SolverFailure(new.status, it, str(new.info.get("error", "")))
        if prev_blocks is not None:
            old = solution_from_blocks(prob, prev_blocks)
            if check_solution(prob, old, tol=1e-7)["ok"] and old.pi > new.pi:
                diag["raw_decreases"].append(old.pi - new.pi)
                diag["kept_previous"] += 1
                new = old
        sol = new
        trace.append(sol.pi)
        prev_blocks = [b.copy() for b in sol.blocks]
        ks = prob.meta["ks"]
        s_star = np.array([sol.slacks[f"s{kk}"] for kk in ks])
        t_star = np.array([sol.slacks[f"t{kk}"] for kk in ks])
        gap = float(max(np.max(linearization_gap(s_star, state.s_bar[ks])),
                        np.max(linearization_gap(t_star, state.t_bar[ks]))))
        diag["fixed_point_gap"] = gap
        s_bar, t_bar = state.s_bar.copy(), state.t_bar.copy()
        s_bar[ks] = next_point(s_star, state.s_bar[ks])
        t_bar[ks] = next_point(t_star, state.t_bar[ks])
        state = IterationState(s_bar, t_bar)
        states.append(state)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) < tol and gap <= fp_tol:
            converged = True
            break
        log.debug("iteration %d: pi=%.9f", it, sol.pi)

    alloc, ratios = _allocation(d, sol, prob.scales, rank_tol)
    if np.any(ratios > rank_tol):
        high = [b for b in range(len(ratios)) if ratios[b] > rank_tol]
        diag["rank_reduction"] = {"blocks": high, "before": float(ratios.max())}
        _, sol = reduce_rank(prob, sol.blocks, high, opts, rank_tol=rank_tol)
        trace[-1] = sol.pi
        alloc, ratios = _allocation(d, sol, prob.scales, rank_tol)
        diag["rank_reduction"]["after"] = float(ratios.max())
    return SolveReport(allocation=alloc, objective_trace=trace,
                       esr_worst=float(max(trace[-1] / LN2, 0.0)), rank_ratios=ratios,
                       iterations=len(trace), converged=converged, pi=trace[-1],
                       states=states, solution=sol, diagnostics=diag)
