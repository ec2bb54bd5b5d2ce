"""Assembly of the relaxed power-control SDP into a structured conic form.

The problem has M+2 PSD blocks (P_1..P_M, P-bar, P) and a handful of free
scalars.  Every row is an affine function of the blocks that touches them
only through their diagonals and a few rank-one quadratic forms, which is
what the embedded solver exploits.

Internal scaling (all exact reparametrisations):

* block b is stored as X_b with P_b = diag(s_b) X_b diag(s_b), where
  s_b,l^2 = P_t / (power coefficient of AP l), so per-AP rows have O(1) entries;
* every received-power quantity is divided by ``kappa`` (the noise power),
  which shifts the log-domain slacks u, s, t, v by ``ln(kappa)``;
* each linear row is divided by a positive constant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import SdpData

LIN, EXP = 0, 1


@dataclass
class IterationState:
    """Linearisation points of e^s and e^t, natural-log domain, one per IU."""

    s_bar: np.ndarray
    t_bar: np.ndarray

    def __post_init__(self):
        self.s_bar = np.asarray(self.s_bar, dtype=float).reshape(-1)
        self.t_bar = np.asarray(self.t_bar, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(self.s_bar)) and np.all(np.isfinite(self.t_bar))):
            raise ValueError("linearisation points must be finite")

    @classmethod
    def constant(cls, m, value=-6.0):
        return cls(np.full(m, float(value)), np.full(m, float(value)))


@dataclass
class SdpProblem:
    """Structured conic problem: maximise ``cobj @ z`` over PSD blocks and free z.

    Row r is ``sum_b D[b][r] . diag(X_b) + A[b][r] . quad_b(X_b) + Cz[r] . z + c0[r]``
    with ``quad_b(X) = diag(V[b].T X V[b])``.  ``kind[r] == LIN`` means row >= 0;
    ``kind[r] == EXP`` means exp(z[exp_var[r]]) <= row.
    """

    n: int
    scales: np.ndarray  # (B, N)
    V: list  # per block (N, q_b)
    D: np.ndarray  # (B, L, N)
    A: list  # per block (L, q_b)
    Cz: np.ndarray  # (L, nz)
    c0: np.ndarray  # (L,)
    kind: np.ndarray  # (L,)
    exp_var: np.ndarray  # (L,)
    cobj: np.ndarray  # (nz,)
    z_names: list
    row_labels: list
    kappa: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def n_blocks(self):
        return self.D.shape[0]

    @property
    def n_rows(self):
        return self.D.shape[1]

    @property
    def nz(self):
        return self.Cz.shape[1]

    def quad(self, b, X):
        V = self.V[b]
        if V.shape[1] == 0:
            return np.zeros(0)
        return np.einsum("lq,lq->q", V, X @ V)

    def row_values(self, Xs, z):
        out = self.Cz @ z + self.c0
        for b, X in enumerate(Xs):
            out = out + self.D[b] @ np.diag(X)
            if self.V[b].shape[1]:
                out = out + self.A[b] @ self.quad(b, X)
        return out

    def census(self) -> dict:
        touches = np.zeros(self.n_rows, dtype=bool)
        for b in range(self.n_blocks):
            touches |= np.any(self.D[b] != 0, axis=1)
            if self.A[b].shape[1]:
                touches |= np.any(self.A[b] != 0, axis=1)
        return {
            "psd_variables": self.n_blocks,
            "scalar_variables": self.nz,
            # PSD memberships count as matrix-level constraints
            "matrix_constraints": int(touches.sum()) + self.n_blocks,
            "scalar_constraints": int((~touches).sum()),
            "exp_constraints": int(np.sum(self.kind == EXP)),
            "per_ap_constraints": int(sum(1 for lab in self.row_labels
                                          if lab.startswith("power"))),
        }

    def unscale_blocks(self, Xs):
        return [np.outer(s, s) * X for s, X in zip(self.scales, Xs)]

    def scale_blocks(self, Ps):
        return [P / np.outer(s, s) for s, P in zip(self.scales, Ps)]

    def unscale_z(self, z):
        """Map solver scalars back to natural units (log slacks shifted by ln kappa)."""
        out = {}
        lk = np.log(self.kappa)
        for name, val in zip(self.z_names, z):
            out[name] = float(val + lk) if name[0] in "ustv" else float(val)
        return out

    def to_dict(self) -> dict:
        """Self-describing dump in natural (unscaled) coordinates.

        Constraints are listed as coefficient triplets ``(block, i, j, value)``
        on the upper triangle of each block plus scalar coefficients, with the
        same LIN/EXP semantics as the solver uses.
        """
        rows = []
        for r in range(self.n_rows):
            trip = []
            for b in range(self.n_blocks):
                s = self.scales[b]
                G = np.diag(self.D[b][r])
                if self.V[b].shape[1]:
                    G = G + (self.V[b] * self.A[b][r]) @ self.V[b].T
                # tr(G X) with X = P / (s s^T)  ->  coefficient on P is G / (s s^T)
                G = G / np.outer(s, s)
                iu, ju = np.nonzero(np.triu(G))
                for i, j in zip(iu, ju):
                    v = G[i, j] if i == j else 2.0 * G[i, j]
                    trip.append([b, int(i), int(j), float(v)])
            rows.append({
                "label": self.row_labels[r],
                "type": "exp" if self.kind[r] == EXP else "lin_ge0",
                "exp_var": self.z_names[self.exp_var[r]] if self.kind[r] == EXP else None,
                "matrix_terms": trip,
                "scalar_terms": {self.z_names[i]: float(c) for i, c in enumerate(self.Cz[r]) if c},
                "constant": float(self.c0[r]),
            })
        return {
            "format": "cfswipt-sdp/1",
            "note": ("row semantics: lin_ge0 means sum(terms)+constant >= 0; exp means "
                     "exp(exp_var) <= sum(terms)+constant; scalars are in log units shifted "
                     "by -ln(kappa); matrix terms act on natural P blocks"),
            "kappa": self.kappa,
            "variables": {
                "psd_blocks": [{"name": nm, "size": self.n}
                               for nm in self.meta.get("block_names", [])],
                "scalars": list(self.z_names),
            },
            "cones": {"psd": [self.n] * self.n_blocks, "exp": int(np.sum(self.kind == EXP)),
                      "nonneg": int(np.sum(self.kind == LIN))},
            "objective": {"maximize": {self.z_names[i]: float(c)
                                       for i, c in enumerate(self.cobj) if c}},
            "constraints": rows,
            "meta": {k: v for k, v in self.meta.items() if k != "block_names"},
        }

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)


class _RowBuilder:
    def __init__(self, n_blocks, n, vec_index, nz):
        self.n_blocks, self.n, self.vec_index, self.nz = n_blocks, n, vec_index, nz
        self.D, self.A, self.Cz, self.c0 = [], [], [], []
        self.kind, self.exp_var, self.labels = [], [], []

    def add(self, label, diag=(), rank1=(), z=(), const=0.0, kind=LIN, exp_var=-1, scale=1.0):
        D = np.zeros((self.n_blocks, self.n))
        A = [np.zeros(len(self.vec_index[b])) for b in range(self.n_blocks)]
        Cz = np.zeros(self.nz)
        for b, vec, coef in diag:
            D[b] += coef * vec
        for b, name, coef in rank1:
            A[b][self.vec_index[b][name]] += coef
        for i, coef in z:
            Cz[i] += coef
        self.D.append(D * scale)
        self.A.append([a * scale for a in A])
        self.Cz.append(Cz * scale)
        self.c0.append(const * scale)
        self.kind.append(kind)
        self.exp_var.append(exp_var)
        self.labels.append(label)


def build_problem(d: SdpData, state: IterationState, e_min: float, p_t: float,
                  mode: str = "robust", k: int | None = None) -> SdpProblem:
    """Relaxed SDP for one linearisation point.

    ``mode="robust"`` instantiates the constraint set of every attacked index
    (worst case over k); ``mode="known"`` only that of the detected index ``k``.
    """
    if e_min < 0:
        raise ValueError("e_min >= 0 violated")
    if p_t <= 0:
        raise ValueError("p_t > 0 violated")
    m, n = d.n_users, d.n_aps
    if mode == "robust":
        ks = list(range(m))
    elif mode == "known":
        if k is None or not 0 <= k < m:
            raise ValueError("known-attacker mode needs 0 <= k < M")
        ks = [int(k)]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if state.s_bar.shape[0] != m or state.t_bar.shape[0] != m:
        raise ValueError("IterationState must hold one entry per IU")

    nb = m + 2
    AN, EN = m, m + 1
    kappa = d.noise_var

    # variable scaling from per-AP power coefficients
    scales = np.empty((nb, n))
    for j in range(m):
        coef = d.r_clean[j] if any(kk != j for kk in ks) else d.r_bar[j]
        if j in ks:
            coef = np.maximum(coef, d.r_bar[j])
        scales[j] = np.sqrt(p_t / coef)
    scales[AN] = np.sqrt(p_t / np.max(d.r_bar[ks], axis=0))
    scales[EN] = np.sqrt(p_t / d.r_eh)

    # rank-one directions per block (scaled)
    vecs = [dict() for _ in range(nb)]
    for kk in ks:
        vecs[kk]["a"] = d.a_k[kk]
        vecs[kk]["b"] = d.b_k[kk]
        vecs[AN][f"a{kk}"] = d.a_k[kk]
        vecs[AN][f"b{kk}"] = d.b_k[kk]
    vecs[EN]["bddot"] = d.bddot
    vec_index = [{nm: i for i, nm in enumerate(v)} for v in vecs]
    V = [np.column_stack([scales[b] * v for v in vecs[b].values()]) if vecs[b]
         else np.zeros((n, 0)) for b in range(nb)]

    z_names = []
    for kk in ks:
        z_names += [f"u{kk}", f"s{kk}", f"t{kk}", f"v{kk}"]
    z_names.append("pi")
    zi = {nm: i for i, nm in enumerate(z_names)}
    nz = len(z_names)

    def sd(b, vec):
        # diagonal coefficient in scaled coordinates
        return (b, scales[b] ** 2 * vec, 1.0)

    tp = d.tau**2 * d.p_iu
    te = d.tau**2 * d.eav_power
    tl = d.tau**2 * d.leg_power
    lk = np.log(kappa)
    rb = _RowBuilder(nb, n, vec_index, nz)
    e_scale = None

    for kk in ks:
        others = [j for j in range(m) if j != kk]
        # IU SINR denominator terms shared by the u- and s-rows
        iu_int_diag = [sd(j, d.a_kj[kk, j]) for j in others]
        iu_int_diag += [sd(AN, d.abar_k[kk]), sd(EN, d.atil_k[kk])]
        iu_int_r1 = [(AN, f"a{kk}", tp)]

        rb.add(f"u{kk}", diag=iu_int_diag, rank1=[(kk, "a", tp)] + iu_int_r1,
               const=d.iu_noise, kind=EXP, exp_var=zi[f"u{kk}"], scale=1.0 / kappa)

        sb = state.s_bar[kk] - lk
        es = np.exp(sb)
        rb.add(f"s{kk}", diag=[(b, -v / kappa, c) for b, v, c in iu_int_diag],
               rank1=[(b, nm, -c / kappa) for b, nm, c in iu_int_r1],
               z=[(zi[f"s{kk}"], es)],
               const=es * (1.0 - sb) - d.iu_noise / kappa, scale=1.0 / es)

        eh_an_diag = [sd(AN, d.bbar_k[kk]), sd(EN, d.b)]
        eh_an_r1 = [(AN, f"b{kk}", te)]
        tb = state.t_bar[kk] - lk
        et = np.exp(tb)
        rb.add(f"t{kk}", diag=[(b, -v / kappa, c) for b, v, c in
                               [sd(kk, d.bbar_k[kk])] + eh_an_diag],
               rank1=[(b, nm, -c / kappa) for b, nm, c in [(kk, "b", te)] + eh_an_r1],
               z=[(zi[f"t{kk}"], et)], const=et * (1.0 - tb) - d.noise_var / kappa,
               scale=1.0 / et)

        rb.add(f"v{kk}", diag=eh_an_diag, rank1=eh_an_r1, const=d.noise_var,
               kind=EXP, exp_var=zi[f"v{kk}"], scale=1.0 / kappa)

        # harvested energy: both antennas
        e_diag = [sd(kk, d.bbar_k[kk])]
        e_diag += [sd(j, d.btil_j[j]) for j in others]
        e_diag += [sd(j, d.btil_j[j] if j != kk else d.btil_k2[kk]) for j in range(m)]
        e_diag += [sd(AN, d.bbar_k[kk]), sd(EN, d.b), sd(AN, d.btil_k2[kk]),
                   sd(EN, d.tau * d.noise_var * d.bhat)]
        e_r1 = [(kk, "b", te), (AN, f"b{kk}", te), (EN, "bddot", tl)]
        if e_scale is None:
            # O(1) row scaling: energy delivered by X = I / nb
            probe = sum(np.sum(v) for _, v, _ in e_diag)
            probe += sum(c * np.sum(V[b][:, vec_index[b][nm]] ** 2) for b, nm, c in e_r1)
            e_scale = 1.0 / max(e_min, d.zeta * probe / nb, 1e-300)
        rb.add(f"energy{kk}", diag=[(b, d.zeta * v, c) for b, v, c in e_diag],
               rank1=[(b, nm, d.zeta * c) for b, nm, c in e_r1], const=-e_min,
               scale=e_scale)

        for l in range(n):
            sel = np.zeros(n)
            sel[l] = 1.0
            terms = [sd(kk, sel * d.r_bar[kk]), sd(AN, sel * d.r_bar[kk]), sd(EN, sel * d.r_eh)]
            terms += [sd(j, sel * d.r_clean[j]) for j in others]
            rb.add(f"power{kk}_{l}", diag=[(b, -v, c) for b, v, c in terms], const=p_t,
                   scale=1.0 / p_t)

        rb.add(f"obj{kk}", z=[(zi[f"u{kk}"], 1.0), (zi[f"s{kk}"], -1.0), (zi[f"v{kk}"], 1.0),
                              (zi[f"t{kk}"], -1.0), (zi["pi"], -1.0)])

    A_rows = [np.array([rb.A[r][b] for r in range(len(rb.A))]) for b in range(nb)]
    cobj = np.zeros(nz)
    cobj[zi["pi"]] = 1.0
    block_names = [f"P_{j}" for j in range(m)] + ["P_an", "P_eh"]
    return SdpProblem(
        n=n, scales=scales, V=V, D=np.array(rb.D).transpose(1, 0, 2), A=A_rows,
        Cz=np.array(rb.Cz), c0=np.array(rb.c0), kind=np.array(rb.kind),
        exp_var=np.array(rb.exp_var), cobj=cobj, z_names=z_names, row_labels=rb.labels,
        kappa=kappa,
        meta={"mode": mode, "ks": ks, "e_min": e_min, "p_t": p_t, "n_users": m,
              "block_names": block_names, "s_bar": state.s_bar.tolist(),
              "t_bar": state.t_bar.tolist(), "energy_scale": e_scale},
    )
