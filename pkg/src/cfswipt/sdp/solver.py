"""Embedded primal-dual interior-point solver for :class:`SdpProblem`.

Generic conic solvers treat every constraint matrix as dense, which makes
the per-AP rows (N of them per IU, each an N x N matrix) the bottleneck.
Here each row only sees block diagonals and a few rank-one quadratic forms,
so the Schur complement over the row multipliers costs O(L^2 N + N^3) per
block, where L is the number of rows.

Formulation (all rows written as concave h_i(x) >= 0):

    minimise -cobj @ z
    s.t.     h_i(X, z) = <G_i, X> + C_i z + c0_i - [i exp] exp(z_e(i)) >= 0
             X_b PSD

Infeasible-start Mehrotra predictor-corrector with Nesterov-Todd scaling on
the PSD blocks and the nonnegative slacks, the exponential rows entering as
smooth concave constraints (their curvature appears as ``Hz``).  With
W_b the NT scaling matrix and M(dl) = sum_i dl_i G_i, the reduced system is

    [[S/L + Q_W, C_hat], [C_hat^T, -Hz]] [dl; dz] = [...]
    dX = R_X + W (r_X + M(dl)) W,   dZ = -r_X - M(dl)

with (Q_W)_ij = sum_b tr(G_i W_b G_j W_b).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, cholesky, eigh, svd

from .problem import EXP, LIN, SdpProblem

log = logging.getLogger(__name__)


@dataclass
class SolverOptions:
    tol: float = 1e-9  # complementarity and residual target
    max_iter: int = 120
    step_fraction: float = 0.98
    diverge: float = 1e12  # multiplier norm treated as an infeasibility signature
    max_exp_step: float = 1.0  # cap on |change| of an exponential-row scalar per step
    accept: float = 1e-7  # residual level at which a stalled run still counts as solved
    stall: int = 6  # iterations without improvement before stopping at the best iterate
    center_floor: float = 1e-3  # mu kept above this fraction of mu_0 * residual / residual_0


@dataclass
class SdpSolution:
    p_mats: list  # M natural-unit N x N blocks
    pbar_mat: np.ndarray
    p_mat: np.ndarray
    slacks: dict  # name -> value in natural log units
    pi: float
    status: str  # optimal | infeasible | numerical-failure
    info: dict = field(default_factory=dict)

    @property
    def blocks(self):
        return list(self.p_mats) + [self.pbar_mat, self.p_mat]


class _Rows:
    """Matrix parts of all rows, plus helpers to apply them and their adjoints."""

    def __init__(self, p: SdpProblem):
        self.p = p
        self.D, self.A, self.V = p.D, p.A, p.V
        self.ex = np.nonzero(p.kind == EXP)[0]
        self.ev = p.exp_var[self.ex]
        self.Cz, self.c0 = p.Cz, p.c0

    def apply(self, Xs):
        out = np.zeros(self.p.n_rows)
        for b, X in enumerate(Xs):
            out += self.D[b] @ np.diag(X)
            if self.V[b].shape[1]:
                out += self.A[b] @ np.einsum("lq,lq->q", self.V[b], X @ self.V[b])
        return out

    def adjoint(self, b, y):
        """sum_i y_i G_i^b as a dense matrix."""
        M = np.diag(self.D[b].T @ y)
        if self.V[b].shape[1]:
            M += (self.V[b] * (self.A[b].T @ y)) @ self.V[b].T
        return M

    def h(self, Xs, z):
        out = self.apply(Xs) + self.Cz @ z + self.c0
        out[self.ex] -= np.exp(z[self.ev])
        return out

    def c_hat(self, z):
        C = self.Cz.copy()
        C[self.ex, self.ev] -= np.exp(z[self.ev])
        return C

    def schur(self, Ws):
        L = self.p.n_rows
        Q = np.zeros((L, L))
        for b, W in enumerate(Ws):
            D, A, V = self.D[b], self.A[b], self.V[b]
            Q += (D @ (W * W)) @ D.T
            if V.shape[1]:
                WV = W @ V
                cross = D @ (WV * WV) @ A.T
                Q += cross + cross.T + A @ ((V.T @ WV) ** 2) @ A.T
        return 0.5 * (Q + Q.T)

    def normalise_exp(self, Xs):
        """Rescale each exponential row to O(1) at ``Xs`` by shifting its scalar.

        Row U >= e^u becomes e^-a U >= e^(u - a); the shift a is absorbed in the
        constant of every other row that uses u.  Returns the shift vector for z.
        """
        p = self.p
        shift = np.zeros(p.nz)
        U = self.apply(Xs) + p.c0
        D = [d.copy() for d in self.D]
        A = [a.copy() for a in self.A]
        c0 = p.c0.copy()
        for r, v in zip(self.ex, self.ev):
            a = np.log(U[r])
            shift[v] = a
            sc = np.exp(-a)
            for b in range(len(D)):
                D[b][r] *= sc
                A[b][r] *= sc
            c0[r] *= sc
        c0 = c0 + p.Cz @ shift
        c0[self.ex] -= (p.Cz @ shift)[self.ex]
        self.D, self.A, self.c0 = D, A, c0
        return shift


def _chol_pd(X):
    """Lower Cholesky factor, nudging the diagonal if rounding made X borderline."""
    try:
        return cholesky(X, lower=True, check_finite=False)
    except LinAlgError:
        pass
    scale = max(float(np.max(np.abs(np.diag(X)))), 1e-300)
    for eps in (1e-15, 1e-13, 1e-11):
        try:
            return cholesky(X + eps * scale * np.eye(X.shape[0]), lower=True, check_finite=False)
        except LinAlgError:
            continue
    raise LinAlgError("iterate left the PSD cone")


def _nt_scaling(X, Z):
    """R with R R^T = W, W Z W = X, and R^-1 X R^-T = R^T Z R = diag(lam)."""
    Lx = _chol_pd(X)
    Lz = _chol_pd(Z)
    U, sv, Vt = svd(Lz.T @ Lx, check_finite=False)
    R = Lx @ Vt.T / np.sqrt(sv)[None, :]
    return R, sv


def _max_step_psd(lam, dhat):
    """Largest a with diag(lam) + a dhat PSD (inf if unbounded)."""
    isq = 1.0 / np.sqrt(lam)
    m = isq[:, None] * dhat * isq[None, :]
    e = eigh(0.5 * (m + m.T), eigvals_only=True, check_finite=False)[0]
    return np.inf if e >= 0 else -1.0 / e


def _max_step_lin(v, dv):
    neg = dv < 0
    return np.min(-v[neg] / dv[neg]) if np.any(neg) else np.inf


def _robust_cho(A):
    """Cholesky of a unit-diagonal SPD matrix, adding a tiny ridge if rounding broke it."""
    for ridge in (0.0, 1e-14, 1e-12, 1e-10):
        try:
            return cho_factor(A + ridge * np.eye(A.shape[0]) if ridge else A, lower=True,
                              check_finite=False)
        except LinAlgError:
            continue
    raise LinAlgError("Schur complement is not positive definite")


class _KKT:
    def __init__(self, rows: _Rows, Ws, s, lam, z):
        self.rows, self.Ws = rows, Ws
        p = rows.p
        H = rows.schur(Ws)
        H[np.diag_indices_from(H)] += s / lam
        hd = np.diag(H)
        if not np.all(np.isfinite(hd)) or np.any(hd <= 0):
            raise LinAlgError("Schur complement lost its positive diagonal")
        d = 1.0 / np.sqrt(hd)
        self.d = d
        self.H = H
        self.cf = _robust_cho(H * d[:, None] * d[None, :])
        self.C = rows.c_hat(z)
        hz = np.zeros(p.nz)
        np.add.at(hz, rows.ev, lam[rows.ex] * np.exp(z[rows.ev]))
        self.Hz = np.diag(hz)
        self.HC = self._hinv(self.C)
        S = self.C.T @ self.HC + self.Hz
        S = 0.5 * (S + S.T)
        ds = 1.0 / np.sqrt(np.maximum(np.diag(S), 1e-300))
        self.ds = ds
        self.sf = _robust_cho(S * ds[:, None] * ds[None, :])

    def _hinv(self, v):
        d = self.d
        if v.ndim == 2:
            return d[:, None] * cho_solve(self.cf, d[:, None] * v, check_finite=False)
        return d * cho_solve(self.cf, d * v, check_finite=False)

    def _sinv(self, v):
        return self.ds * cho_solve(self.sf, self.ds * v, check_finite=False)

    def solve(self, ra, rz):
        """[[H, C], [C^T, -Hz]] [dl; dz] = [ra; rz]."""
        hra = self._hinv(ra)
        dz = self._sinv(self.C.T @ hra - rz)
        dl = hra - self.HC @ dz
        # one refinement sweep
        e1 = ra - (self.H @ dl + self.C @ dz)
        e2 = rz - (self.C.T @ dl - self.Hz @ dz)
        h1 = self._hinv(e1)
        cz = self._sinv(self.C.T @ h1 - e2)
        return dl + h1 - self.HC @ cz, dz + cz


def _direction(rows, kkt, scal, Xs, Zs, z, s, lam, res, rs_comp, rhs_blocks):
    """Newton direction for given complementarity right-hand sides.

    ``rs_comp``: right side of lam*ds + s*dlam; ``rhs_blocks``: per block the
    scaled symmetric right side T_b, so that dXhat + dZhat = Lyap^-1(T_b).
    """
    r_s, r_X, r_z = res
    R_X, Rcheck = [], []
    for (R, lamb), T, W, rX in zip(scal, rhs_blocks, kkt.Ws, r_X):
        Vm = 2.0 * T / (lamb[:, None] + lamb[None, :])
        RX = R @ Vm @ R.T
        R_X.append(RX)
        Rcheck.append(RX + W @ rX @ W)
    ra = r_s + rs_comp / lam - rows.apply(Rcheck)
    dl, dz = kkt.solve(ra, r_z)
    dXs, dZs = [], []
    for b, (W, Rc, rX) in enumerate(zip(kkt.Ws, Rcheck, r_X)):
        M = rows.adjoint(b, dl)
        dX = Rc + W @ M @ W
        dXs.append(0.5 * (dX + dX.T))
        dZs.append(-rX - M)
    ds = (rs_comp - s * dl) / lam
    return dXs, dZs, dz, ds, dl


def _step_length(scal, Xs, Zs, dXs, dZs, s, ds, lam, dl):
    a = min(_max_step_lin(s, ds), _max_step_lin(lam, dl))
    for (R, lamb), dX, dZ in zip(scal, dXs, dZs):
        Rinv = np.linalg.inv(R)
        dxh = Rinv @ dX @ Rinv.T
        dzh = R.T @ dZ @ R
        a = min(a, _max_step_psd(lamb, dxh), _max_step_psd(lamb, dzh))
    return a


def _newton_step(rows, opts, Xs, Zs, z, s, lam, res, gap, mu, mu_floor=0.0):
    """One Mehrotra predictor-corrector direction and its damped step length."""
    n = Xs[0].shape[0]
    scal = [_nt_scaling(X, Z) for X, Z in zip(Xs, Zs)]
    Ws = [R @ R.T for R, _ in scal]
    kkt = _KKT(rows, Ws, s, lam, z)
    # predictor
    T_aff = [-np.diag(lb**2) for _, lb in scal]
    aff = _direction(rows, kkt, scal, Xs, Zs, z, s, lam, res, -s * lam, T_aff)
    dXa, dZa, dza, dsa, dla = aff
    a_aff = min(1.0, _step_length(scal, Xs, Zs, dXa, dZa, s, dsa, lam, dla))
    gap_aff = float((s + a_aff * dsa) @ (lam + a_aff * dla)
                    + sum(np.sum((X + a_aff * dX) * (Z + a_aff * dZ))
                          for X, Z, dX, dZ in zip(Xs, Zs, dXa, dZa)))
    sigma = min(1.0, max(0.0, gap_aff / gap)) ** 3
    # do not let complementarity run ahead of feasibility
    sigma = min(1.0, max(sigma, mu_floor / mu))
    # corrector
    T_cor = []
    for (R, lb), dX, dZ in zip(scal, dXa, dZa):
        Rinv = np.linalg.inv(R)
        dxh = Rinv @ dX @ Rinv.T
        dzh = R.T @ dZ @ R
        prod = 0.5 * (dxh @ dzh + dzh @ dxh)
        T_cor.append(sigma * mu * np.eye(n) - np.diag(lb**2) - prod)
    rs_comp = sigma * mu - s * lam - dsa * dla
    dXs, dZs, dz, ds, dl = _direction(rows, kkt, scal, Xs, Zs, z, s, lam, res, rs_comp,
                                      T_cor)
    a = min(1.0, opts.step_fraction * _step_length(scal, Xs, Zs, dXs, dZs, s, ds, lam, dl))
    # keep the exponential rows close to their linearisation
    big = np.max(np.abs(dz[rows.ev])) if len(rows.ev) else 0.0
    if big * a > opts.max_exp_step:
        a = opts.max_exp_step / big
    return dXs, dZs, dz, ds, dl, a


def interior_point(p: SdpProblem, opts: SolverOptions | None = None, Xs=None, z=None):
    """Run the primal-dual method; returns (Xs, z, status, info)."""
    opts = opts or SolverOptions()
    rows = _Rows(p)
    nb, n = p.n_blocks, p.n
    if Xs is None or z is None:
        Xs, z = initial_point(p)
    Xs = [X.copy() for X in Xs]
    shift = rows.normalise_exp(Xs)
    z = np.asarray(z, dtype=float) - shift
    h = rows.h(Xs, z)
    s = np.maximum(h, 1.0)
    lam = np.ones(p.n_rows)
    Zs = [np.eye(n) for _ in range(nb)]
    m_deg = p.n_rows + nb * n
    info = {"iterations": 0}
    best = (np.inf, None)
    since_best = 0
    res0 = None

    def finish(status, error=None):
        merit, snap = best
        if status != "optimal" and snap is not None and merit < opts.accept:
            bX, bz, binfo = snap
            out = dict(binfo, inexact=True)
            if error:
                out["stopped"] = error
            return bX, bz + shift, "optimal", out
        if error:
            info["error"] = error
        return Xs, z + shift, status, info

    for it in range(1, opts.max_iter + 1):
        h = rows.h(Xs, z)
        r_s = s - h
        r_X = [Z + rows.adjoint(b, lam) for b, Z in enumerate(Zs)]
        r_z = -p.cobj - rows.c_hat(z).T @ lam
        gap = float(s @ lam + sum(np.sum(X * Z) for X, Z in zip(Xs, Zs)))
        mu = gap / m_deg
        pres = float(np.max(np.abs(r_s)))
        dres = float(max(np.max(np.abs(r_z)), max(np.max(np.abs(r)) for r in r_X)))
        info.update(iterations=it - 1, gap=gap, pres=pres, dres=dres)
        dscale = max(1.0, float(np.max(lam)))
        if gap < opts.tol and pres < opts.tol and dres < opts.tol * dscale:
            return Xs, z + shift, "optimal", info
        merit = max(abs(gap), pres, dres / dscale)
        if merit < best[0]:
            best = (merit, ([X.copy() for X in Xs], z.copy(), dict(info)))
            since_best = 0
        else:
            since_best += 1
            if since_best >= opts.stall and best[0] < opts.accept:
                return finish("numerical-failure", f"stalled at iteration {it}")
        if np.max(lam) > opts.diverge:
            return finish("diverged")
        if res0 is None:
            res0 = (max(pres, dres / dscale, 1e-300), mu)
        mu_floor = opts.center_floor * res0[1] * max(pres, dres / dscale) / res0[0]
        try:
            dXs, dZs, dz, ds, dl, a = _newton_step(rows, opts, Xs, Zs, z, s, lam,
                                                   (r_s, r_X, r_z), gap, mu, mu_floor)
        except (LinAlgError, ValueError, FloatingPointError) as exc:
            return finish("numerical-failure", f"linear algebra failed at iteration {it}: {exc}")
        if not np.isfinite(a) or a < 1e-12:
            return finish("numerical-failure", f"step length collapsed at iteration {it}")
        Xs = [X + a * dX for X, dX in zip(Xs, dXs)]
        Zs = [Z + a * dZ for Z, dZ in zip(Zs, dZs)]
        Xs = [0.5 * (X + X.T) for X in Xs]
        Zs = [0.5 * (Z + Z.T) for Z in Zs]
        z = z + a * dz
        s = s + a * ds
        lam = lam + a * dl
    return finish("numerical-failure", "iteration limit")


def initial_point(p: SdpProblem):
    """Scaled blocks at a fraction of the budget and scalars that make most rows hold."""
    nb = p.n_blocks
    Xs = [np.eye(p.n) * (0.5 / nb) for _ in range(nb)]
    z = np.zeros(p.nz)
    idx = {nm: i for i, nm in enumerate(p.z_names)}
    vals = p.row_values(Xs, z)
    for r in range(p.n_rows):
        if p.kind[r] == EXP:
            z[p.exp_var[r]] = np.log(vals[r]) - 1.0
    vals = p.row_values(Xs, z)
    for r, lab in enumerate(p.row_labels):
        if lab[0] in "st" and lab[1:].isdigit():
            i = idx[lab]
            z[i] += (1.0 - vals[r]) / p.Cz[r, i]
    obj = [r for r, lab in enumerate(p.row_labels) if lab.startswith("obj")]
    vals = p.row_values(Xs, z)
    z[idx["pi"]] += min(vals[r] for r in obj) - 1.0
    return Xs, z


def max_min_energy(p: SdpProblem, opts: SolverOptions | None = None) -> float:
    """Largest common value of the energy rows' matrix parts under the power rows.

    Used to tell an infeasible energy target apart from numerical trouble.
    Returns the optimum in the energy row's scaled units plus the target,
    i.e. a value >= 0 means the energy rows can be met.
    """
    from .problem import SdpProblem as _P

    keep = [r for r, lab in enumerate(p.row_labels)
            if lab.startswith("power") or lab.startswith("energy")]
    en = [i for i, r in enumerate(keep) if p.row_labels[r].startswith("energy")]
    L = len(keep)
    Cz = np.zeros((L, 1))
    Cz[en, 0] = -1.0
    sub = _P(n=p.n, scales=p.scales, V=p.V, D=p.D[:, keep, :],
             A=[a[keep] for a in p.A], Cz=Cz, c0=p.c0[keep].copy(),
             kind=np.full(L, LIN), exp_var=np.full(L, -1), cobj=np.array([1.0]),
             z_names=["rho"], row_labels=[p.row_labels[r] for r in keep], kappa=p.kappa,
             meta={"n_users": p.meta["n_users"]})
    # remove the target so rho measures slack relative to it
    Xs = [np.eye(p.n) * (0.5 / p.n_blocks) for _ in range(p.n_blocks)]
    rho0 = float(np.min(sub.row_values(Xs, np.zeros(1))[en])) - 1.0
    Xs, z, status, _ = interior_point(sub, opts, Xs, np.array([rho0]))
    return float(z[0]) if status == "optimal" else float("nan")


def max_harvest(d, p_t: float, mode: str = "robust", k: int | None = None,
                opts: SolverOptions | None = None) -> float:
    """Largest energy target (J) that every attacked index can meet under the power rows.

    Any ``e_min`` above this value makes the SDP infeasible; NaN if the
    auxiliary problem could not be solved.
    """
    from .problem import IterationState, build_problem

    p = build_problem(d, IterationState.constant(d.n_users), 0.0, p_t, mode=mode, k=k)
    return max_min_energy(p, opts) / p.meta["energy_scale"]


def _top_ratio(X):
    w = np.linalg.eigvalsh(0.5 * (X + X.T))
    return float(max(w[-2], 0.0) / w[-1]) if w[-1] > 0 else 0.0


def reduce_rank(p: SdpProblem, Ps, blocks, opts: SolverOptions | None = None,
                slack: float = 1e-8, rounds: int = 3, rank_tol: float = 1e-6):
    """Move inside the (near-)optimal face towards rank-one blocks.

    Interior-point iterates approach the relative interior of the optimal
    face, so when that face holds several optima the returned blocks can
    have rank above one even though a rank-one optimum exists.  Each round
    keeps every row of ``p`` and the objective within ``slack`` of its
    value, and minimises the energy of ``blocks`` outside their current
    principal directions.  Returns ``(Ps, solution)``; the input is
    returned unchanged when no round improves the worst ratio.
    """
    from .problem import SdpProblem as _P

    opts = opts or SolverOptions()
    best = solution_from_blocks(p, Ps)
    pi_floor = best.pi - slack
    worst = max(_top_ratio(P) for b, P in enumerate(Ps) if b in blocks)
    cur = [P.copy() for P in Ps]
    for _ in range(rounds):
        if worst <= rank_tol:
            break
        Xs = p.scale_blocks(cur)
        V = [v.copy() for v in p.V]
        A = [a.copy() for a in p.A]
        D_new = np.zeros((p.n_blocks, 2, p.n))
        for b in blocks:
            top = np.linalg.eigh(0.5 * (Xs[b] + Xs[b].T))[1][:, -1]
            V[b] = np.column_stack([V[b], top])
            A[b] = np.hstack([A[b], np.zeros((p.n_rows, 1))])
            D_new[b, 1] = -1.0
        A_new = [np.zeros((2, a.shape[1])) for a in A]
        for b in blocks:
            A_new[b][1, -1] = 1.0
        # rows: pi >= floor, and w >= energy outside the principal directions
        Cz = np.hstack([p.Cz, np.zeros((p.n_rows, 1))])
        ipi = p.z_names.index("pi")
        Cz_new = np.zeros((2, p.nz + 1))
        Cz_new[0, ipi] = 1.0
        Cz_new[1, -1] = 1.0
        cobj = np.zeros(p.nz + 1)
        cobj[-1] = -1.0
        sub = _P(n=p.n, scales=p.scales, V=V,
                 D=np.concatenate([p.D, D_new], axis=1),
                 A=[np.vstack([a, an]) for a, an in zip(A, A_new)],
                 Cz=np.vstack([Cz, Cz_new]), c0=np.concatenate([p.c0, [-pi_floor, 0.0]]),
                 kind=np.concatenate([p.kind, [LIN, LIN]]),
                 exp_var=np.concatenate([p.exp_var, [-1, -1]]), cobj=cobj,
                 z_names=list(p.z_names) + ["w"],
                 row_labels=list(p.row_labels) + ["pi_floor", "rank"],
                 kappa=p.kappa, meta=dict(p.meta))
        Xn, _, status, _ = interior_point(sub, opts)
        if status != "optimal":
            break
        Xn = [_project_psd(X) for X in Xn]
        cand = solution_from_blocks(p, p.unscale_blocks(Xn))
        ratio = max(_top_ratio(P) for b, P in enumerate(cand.blocks) if b in blocks)
        if not check_solution(p, cand, tol=1e-7)["ok"] or cand.pi < pi_floor - slack:
            break
        cur = cand.blocks
        if ratio < worst:
            best, worst = cand, ratio
    return best.blocks, best


def solve_conic(p: SdpProblem, opts: SolverOptions | None = None) -> SdpSolution:
    """Solve the relaxed SDP; never raises on infeasibility or numerical trouble."""
    opts = opts or SolverOptions()
    m = p.meta["n_users"]
    try:
        Xs, z, status, info = interior_point(p, opts)
    except (LinAlgError, FloatingPointError, ValueError) as exc:
        nb = p.n_blocks
        Xs, z = [np.zeros((p.n, p.n))] * nb, np.full(p.nz, np.nan)
        status, info = "numerical-failure", {"error": str(exc)}
    if status == "numerical-failure" and _dual_converged(info, opts):
        # near-degenerate problems can stall with a primal residual that full
        # Newton steps no longer reduce; the polished blocks are often feasible
        Xp = [_project_psd(X) for X in Xs]
        sol = _pack(p, Xp, scalars_for_blocks(p, Xp), "optimal", m,
                    dict(info, inexact=True, polished=info.pop("error", "")))
        if check_solution(p, sol, tol=POLISH_TOL)["ok"]:
            return sol
        info["error"] = sol.info["polished"]
    if status != "optimal":
        rho = max_min_energy(p, opts)
        info["energy_margin"] = rho
        if np.isfinite(rho) and rho < 0:
            return _pack(p, Xs, z, "infeasible", m, info)
        if status == "diverged":
            status = "numerical-failure"
            info.setdefault("error", "multipliers diverged")
        return _pack(p, Xs, z, status, m, info)
    # tighten scalars for the final blocks: slacks consistent with the blocks
    Xs = [_project_psd(X) for X in Xs]
    return _pack(p, Xs, scalars_for_blocks(p, Xs), "optimal", m, info)


POLISH_TOL = 1e-8


def _dual_converged(info, opts) -> bool:
    return (abs(info.get("gap", np.inf)) < opts.accept
            and info.get("dres", np.inf) < opts.accept)


def _project_psd(X):
    w, v = np.linalg.eigh(0.5 * (X + X.T))
    return (v * np.maximum(w, 0.0)) @ v.T


def _pack(p: SdpProblem, Xs, z, status, m, info):
    Ps = p.unscale_blocks(Xs)
    zn = p.unscale_z(z)
    return SdpSolution(p_mats=Ps[:m], pbar_mat=Ps[m], p_mat=Ps[m + 1], slacks=zn,
                       pi=zn["pi"], status=status, info=info)


def check_solution(p: SdpProblem, sol: SdpSolution, tol: float = 1e-6) -> dict:
    """Constraint residuals of a solution in the solver's row scaling."""
    Xs = p.scale_blocks(sol.blocks)
    lk = np.log(p.kappa)
    z = np.array([sol.slacks[nm] - (lk if nm[0] in "ustv" else 0.0) for nm in p.z_names])
    vals = p.row_values(Xs, z)
    lin_viol = float(max(0.0, -np.min(vals[p.kind == LIN])))
    ex = p.kind == EXP
    exp_viol = 0.0
    if np.any(ex):
        exp_viol = float(max(0.0, np.max(np.exp(z[p.exp_var[ex]]) - vals[ex])))
    min_eig = float(min(np.linalg.eigvalsh(X).min() for X in Xs))
    return {"lin_violation": lin_viol, "exp_violation": exp_viol, "min_eig": min_eig,
            "ok": lin_viol <= tol and exp_viol <= tol and min_eig >= -tol}


def scalars_for_blocks(p: SdpProblem, Xs) -> np.ndarray:
    """Best scalars (solver units) for fixed scaled blocks.

    Each s/t row is made tight, each exponential row is made tight, and pi
    is the smallest objective-row value.  The result is feasible whenever
    the blocks satisfy the remaining (power, energy) rows.
    """
    z = np.zeros(p.nz)
    base = p.row_values(Xs, z)
    ipi = p.z_names.index("pi")
    for r, lab in enumerate(p.row_labels):
        if p.kind[r] == EXP:
            z[p.exp_var[r]] = np.log(base[r]) if base[r] > 0 else -np.inf
        elif lab[0] in "st" and lab[1:].isdigit():
            i = p.z_names.index(lab)
            z[i] = -base[r] / p.Cz[r, i]
    obj = [r for r, lab in enumerate(p.row_labels) if lab.startswith("obj")]
    cz = p.Cz.copy()
    cz[:, ipi] = 0.0
    z[ipi] = min(float(cz[r] @ z + p.c0[r]) for r in obj)
    return z


def solution_from_blocks(p: SdpProblem, Ps, status="optimal", info=None) -> SdpSolution:
    """Package natural-unit blocks with their best scalars as a solution of ``p``."""
    Xs = p.scale_blocks(Ps)
    return _pack(p, Xs, scalars_for_blocks(p, Xs), status, p.meta["n_users"], dict(info or {}))
