"""Constant data of the relaxed power-control SDP.

Every data matrix is either diagonal or the outer product of a real
nonnegative vector, so only the defining vectors are stored.  ``matrix``
materialises a named N x N matrix when one is needed (tests, dumps).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..estimation import EstimationStats, TrainingConfig, estimation_stats
from ..geometry import LargeScaleGains


@dataclass
class SdpData:
    n_users: int
    n_aps: int
    tau: int
    tau_d: int
    p_iu: float
    eav_power: float  # phi * P_E
    leg_power: float  # (1 - phi) * P_E
    noise_var: float
    zeta: float
    # rank-one defining vectors (M, N) / (N,)
    a_k: np.ndarray  # Gamma_k C_k (attacked C_k)
    b_k: np.ndarray  # Gamma C_k
    bddot: np.ndarray  # Gamma C
    # diagonals
    a_kj: np.ndarray  # (M, M, N): Gamma_k R_j, clean R_j for j != k
    abar_k: np.ndarray  # Gamma_k R_k^(1)
    atil_k: np.ndarray  # Gamma_k R
    bbar_k: np.ndarray  # Gamma R_k^(2)
    b: np.ndarray  # Gamma R
    btil_j: np.ndarray  # Gamma R_j (clean)
    btil_k2: np.ndarray  # Gamma R-bar_k
    bhat: np.ndarray  # Gamma C^2
    # per-AP power coefficients
    r_clean: np.ndarray  # (M, N)
    r_bar: np.ndarray  # (M, N)
    r_eh: np.ndarray  # (N,)

    def matrix(self, name: str, *idx) -> np.ndarray:
        """Dense form of a data matrix, e.g. ``matrix("a_k", 0)``, ``matrix("a_kj", 0, 2)``."""
        v = getattr(self, name)
        for i in idx:
            v = v[i]
        if name in ("a_k", "b_k", "bddot"):
            return np.outer(v, v)
        return np.diag(v)

    @property
    def iu_noise(self) -> float:
        return self.noise_var * (self.tau_d + 1) / self.tau_d


def build_data(stats: list[EstimationStats], g: LargeScaleGains, cfg: TrainingConfig,
               zeta: float = 0.5) -> SdpData:
    """Assemble the SDP constants from per-attacked-index statistics.

    ``stats[k]`` must be the statistics with IU k attacked; pass
    ``all_stats(g, cfg)`` to get them.
    """
    m, n = g.iu_gains.shape
    if len(stats) != m:
        raise ValueError("need one EstimationStats per attacked index")
    gam_i, gam = g.iu_gains, g.eh_gains
    st0 = stats[0]
    r_clean = st0.r_clean.copy()
    r_bar = np.array([stats[k].rbar_k for k in range(m)])
    ck = np.array([stats[k].c_k for k in range(m)])

    a_kj = gam_i[:, None, :] * r_clean[None, :, :]
    return SdpData(
        n_users=m, n_aps=n, tau=cfg.tau, tau_d=cfg.tau_d, p_iu=cfg.p_iu,
        eav_power=cfg.eav_power, leg_power=cfg.leg_power, noise_var=cfg.noise_var, zeta=zeta,
        a_k=gam_i * ck,
        b_k=gam[None, :] * ck,
        bddot=gam * st0.c_eh,
        a_kj=a_kj,
        abar_k=np.array([gam_i[k] * stats[k].r1_k for k in range(m)]),
        atil_k=gam_i * st0.r_eh[None, :],
        bbar_k=np.array([gam * stats[k].r2_k for k in range(m)]),
        b=gam * st0.r_eh,
        btil_j=gam[None, :] * r_clean,
        btil_k2=gam[None, :] * r_bar,
        bhat=gam * st0.c_eh**2,
        r_clean=r_clean, r_bar=r_bar, r_eh=st0.r_eh.copy(),
    )


def all_stats(g: LargeScaleGains, cfg: TrainingConfig) -> list[EstimationStats]:
    return [estimation_stats(g, cfg.with_attacked(k)) for k in range(g.n_users)]
