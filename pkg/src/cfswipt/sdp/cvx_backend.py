"""Optional cvxpy/Clarabel backend, used to cross-check the embedded solver.

It consumes the same scaled :class:`SdpProblem` rows, so agreement checks
the interior-point machinery rather than the problem assembly.  Practical
up to N of a few dozen.
"""

from __future__ import annotations

import numpy as np

from .problem import EXP, SdpProblem
from .solver import SdpSolution, _pack


def available() -> bool:
    try:
        import cvxpy  # noqa: F401
    except ImportError:
        return False
    return True


def solve_cvx(p: SdpProblem, solver: str = "CLARABEL") -> SdpSolution:
    import cvxpy as cp

    m = p.meta["n_users"]
    Xs = [cp.Variable((p.n, p.n), symmetric=True) for _ in range(p.n_blocks)]
    z = cp.Variable(p.nz)
    rows = p.Cz @ z + p.c0
    for b, X in enumerate(Xs):
        rows = rows + p.D[b] @ cp.diag(X)
        V = p.V[b]
        if V.shape[1]:
            quad = cp.hstack([V[:, q] @ X @ V[:, q] for q in range(V.shape[1])])
            rows = rows + p.A[b] @ quad
    cons = [X >> 0 for X in Xs]
    lin = np.nonzero(p.kind != EXP)[0]
    ex = np.nonzero(p.kind == EXP)[0]
    cons.append(rows[lin] >= 0)
    for r in ex:
        cons.append(cp.exp(z[p.exp_var[r]]) <= rows[r])
    prob = cp.Problem(cp.Maximize(p.cobj @ z), cons)
    try:
        prob.solve(solver=solver)
    except cp.error.SolverError as exc:
        return SdpSolution([np.zeros((p.n, p.n))] * m, np.zeros((p.n, p.n)),
                           np.zeros((p.n, p.n)), {}, float("nan"), "numerical-failure",
                           {"error": str(exc)})
    if prob.status in ("infeasible", "infeasible_inaccurate"):
        status = "infeasible"
    elif prob.status in ("optimal", "optimal_inaccurate"):
        status = "optimal"
    else:
        status = "numerical-failure"
    if Xs[0].value is None:
        zero = np.zeros((p.n, p.n))
        return SdpSolution([zero] * m, zero, zero, {}, float("nan"), status,
                           {"cvx_status": prob.status})
    return _pack(p, [X.value for X in Xs], np.asarray(z.value), status, m,
                 {"cvx_status": prob.status})
