"""Deterministic secrecy / energy closed forms for a given power allocation.

All functions take the attacked index ``k`` and the :class:`EstimationStats`
built for that same index.  Amplitude vectors may carry signs (a sign is a
180 degree phase on that AP's weight); every closed form is a polynomial in
the amplitudes, so signed vectors are evaluated consistently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimation import EstimationStats, TrainingConfig
from .geometry import LargeScaleGains

LN2 = np.log(2.0)


@dataclass
class PowerAllocation:
    iu_amps: np.ndarray  # (M, N)
    an_amps: np.ndarray  # (N,)
    eh_amps: np.ndarray  # (N,)

    def __post_init__(self):
        self.iu_amps = np.atleast_2d(np.asarray(self.iu_amps, dtype=float))
        self.an_amps = np.asarray(self.an_amps, dtype=float).reshape(-1)
        self.eh_amps = np.asarray(self.eh_amps, dtype=float).reshape(-1)
        n = self.iu_amps.shape[1]
        if self.an_amps.shape[0] != n or self.eh_amps.shape[0] != n:
            raise ValueError("amplitude vectors must all have length N")
        for a in (self.iu_amps, self.an_amps, self.eh_amps):
            if not np.all(np.isfinite(a)):
                raise ValueError("amplitudes must be finite")

    @classmethod
    def zeros(cls, m, n):
        return cls(np.zeros((m, n)), np.zeros(n), np.zeros(n))

    @property
    def n_aps(self):
        return self.iu_amps.shape[1]

    @property
    def n_users(self):
        return self.iu_amps.shape[0]

    def scaled(self, t):
        return PowerAllocation(t * self.iu_amps, t * self.an_amps, t * self.eh_amps)

    @property
    def nonnegative(self) -> bool:
        return bool(np.all(self.iu_amps >= 0) and np.all(self.an_amps >= 0)
                    and np.all(self.eh_amps >= 0))


@dataclass
class MetricsReport:
    iu_sinr_lb: np.ndarray
    eh_sinr_ub: np.ndarray
    esr_lb: np.ndarray  # bits/s/Hz
    ahe: np.ndarray  # J over the unit slot
    per_ap_power: np.ndarray  # (K, N) W

    @property
    def worst_esr(self) -> float:
        return float(np.min(self.esr_lb))


def _check(k, alloc: PowerAllocation, st: EstimationStats, g: LargeScaleGains):
    if st.attacked != k:
        raise ValueError(f"statistics were built for attacked={st.attacked}, not k={k}")
    if alloc.iu_amps.shape != g.iu_gains.shape:
        raise ValueError(
            f"allocation shape {alloc.iu_amps.shape} does not match gains {g.iu_gains.shape}"
        )


def closed_form_terms(k, alloc: PowerAllocation, st: EstimationStats, g: LargeScaleGains,
                      cfg: TrainingConfig) -> dict:
    """Every scalar building block of the IU/EH SINR bounds and the AHE."""
    _check(k, alloc, st, g)
    gk, gam = g.iu_gains[k], g.eh_gains
    pk, pbar, pe = alloc.iu_amps[k], alloc.an_amps, alloc.eh_amps
    P2 = alloc.iu_amps**2
    ck_diag = st.c_mats[k]

    t = {}
    t["c_k"] = pk @ (gk * ck_diag)
    t["c_kj"] = (P2 * gk * st.r_mats).sum(axis=1)  # (M,), entry k unused
    t["cbar_k"] = pbar @ (gk * ck_diag)
    t["cbar1_k"] = (pbar**2) @ (gk * st.r1_k)
    t["ctil_k"] = (pe**2) @ (gk * st.r_eh)

    t["d_k"] = pk @ (gam * ck_diag)
    t["d1_k"] = (pk**2) @ (gam * st.r2_k)
    t["d"] = (pe**2) @ (gam * st.r_eh)
    t["dbar_k"] = pbar @ (gam * ck_diag)
    t["dbar1_k"] = (pbar**2) @ (gam * st.r2_k)
    t["d_kj"] = (P2 * gam * st.r_mats).sum(axis=1)  # (M,), R_k is the attacked R-bar_k
    t["dtil_k"] = (pbar**2) @ (gam * st.rbar_k)
    t["dtil"] = pe @ (gam * st.c_eh)
    t["dtil1"] = (pe**2) @ (gam * st.c_eh**2)
    return t


def _others(v, k):
    return float(np.sum(v) - v[k])


def iu_sinr_parts(k, alloc, st, g, cfg):
    """(numerator, denominator) of the deterministic IU SINR lower bound."""
    t = closed_form_terms(k, alloc, st, g, cfg)
    a = cfg.tau**2 * cfg.p_iu
    num = a * t["c_k"] ** 2
    den = (_others(t["c_kj"], k) + a * t["cbar_k"] ** 2 + t["cbar1_k"] + t["ctil_k"]
           + cfg.noise_var * (cfg.tau_d + 1) / cfg.tau_d)
    return float(num), float(den)


def eh_sinr_parts(k, alloc, st, g, cfg):
    t = closed_form_terms(k, alloc, st, g, cfg)
    b = cfg.tau**2 * cfg.eav_power
    num = b * t["d_k"] ** 2 + t["d1_k"]
    den = b * t["dbar_k"] ** 2 + t["dbar1_k"] + t["d"] + cfg.noise_var
    return float(num), float(den)


def iu_sinr_lower(k, alloc, st, g, cfg) -> float:
    num, den = iu_sinr_parts(k, alloc, st, g, cfg)
    return num / den


def eh_sinr_upper(k, alloc, st, g, cfg) -> float:
    num, den = eh_sinr_parts(k, alloc, st, g, cfg)
    return num / den


def esr_lower(k, alloc, st, g, cfg) -> float:
    """[log2(1 + SINR_lb) - log2(1 + SINR_E_ub)]^+ in bits/s/Hz."""
    r_iu = np.log2(1.0 + iu_sinr_lower(k, alloc, st, g, cfg))
    r_eh = np.log2(1.0 + eh_sinr_upper(k, alloc, st, g, cfg))
    return float(max(r_iu - r_eh, 0.0))


def ahe_terms(k, alloc, st, g, cfg) -> dict:
    """Expected received power of each signal component at the two EH antennas."""
    t = closed_form_terms(k, alloc, st, g, cfg)
    b = cfg.tau**2 * cfg.eav_power
    return {
        # eavesdropping antenna
        "b_k": b * t["d_k"] ** 2 + t["d1_k"],
        "b_j": _others(t["d_kj"], k),
        "bhat_k": b * t["dbar_k"] ** 2 + t["dbar1_k"],
        "b": t["d"],
        # legitimate antenna
        "btil_j": float(np.sum(t["d_kj"])),
        "btilhat_k": t["dtil_k"],
        "btil": cfg.tau**2 * cfg.leg_power * t["dtil"] ** 2 + cfg.tau * cfg.noise_var * t["dtil1"],
    }


def ahe(k, alloc, st, g, cfg, zeta: float = 0.5) -> float:
    if not 0.0 < zeta <= 1.0:
        raise ValueError("0 < zeta <= 1 violated")
    return float(zeta * sum(ahe_terms(k, alloc, st, g, cfg).values()))


def per_ap_power(alloc: PowerAllocation, st: EstimationStats, k: int | None = None) -> np.ndarray:
    """Average transmit power per AP when IU k is the attacked one (W)."""
    k = st.attacked if k is None else k
    if st.attacked != k:
        raise ValueError(f"statistics were built for attacked={st.attacked}, not k={k}")
    p_info = (alloc.iu_amps**2 * st.r_mats).sum(axis=0)
    return p_info + alloc.an_amps**2 * st.rbar_k + alloc.eh_amps**2 * st.r_eh


def evaluate(alloc: PowerAllocation, stats: list[EstimationStats], g: LargeScaleGains,
             cfg: TrainingConfig, zeta: float = 0.5, ks=None) -> MetricsReport:
    """All closed-form metrics for each attacked index in ``ks`` (default: all)."""
    ks = range(g.n_users) if ks is None else ks
    out = {"iu": [], "eh": [], "esr": [], "ahe": [], "pw": []}
    for k in ks:
        st = stats[k]
        ck = cfg.with_attacked(k)
        out["iu"].append(iu_sinr_lower(k, alloc, st, g, ck))
        out["eh"].append(eh_sinr_upper(k, alloc, st, g, ck))
        out["esr"].append(esr_lower(k, alloc, st, g, ck))
        out["ahe"].append(ahe(k, alloc, st, g, ck, zeta))
        out["pw"].append(per_ap_power(alloc, st, k))
    return MetricsReport(np.array(out["iu"]), np.array(out["eh"]), np.array(out["esr"]),
                         np.array(out["ahe"]), np.array(out["pw"]))
