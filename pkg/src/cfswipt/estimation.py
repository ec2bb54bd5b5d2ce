"""Uplink MMSE estimation under a pilot-replay attack, plus the training-power detector.

Training sequences are never materialised: only psi^H psi = tau and mutual
orthogonality are used, so every statistic below is sequence-invariant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import LargeScaleGains

DEFAULT_NOISE_VAR = 1e-8  # W (-50 dBm); not given with the other system parameters


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainingConfig:
    tau: int = 10
    tau_d: int = 10
    p_iu: float = 1.0
    p_eh: float = 1.0
    phi: float = 0.3
    noise_var: float = DEFAULT_NOISE_VAR
    attacked: int = 0

    def __post_init__(self):
        if self.tau < 1:
            raise ConfigError("tau >= 1 violated")
        if self.tau_d < 1:
            raise ConfigError("tau_d >= 1 violated")
        if not 0.0 < self.phi < 1.0:
            raise ConfigError(f"0 < phi < 1 violated (phi={self.phi})")
        if self.p_iu <= 0 or self.p_eh <= 0:
            raise ConfigError("training powers must be > 0")
        if self.noise_var <= 0:
            raise ConfigError("noise_var > 0 violated")
        if self.attacked < 0:
            raise ConfigError("attacked index must be >= 0")

    def with_attacked(self, k: int) -> "TrainingConfig":
        return TrainingConfig(self.tau, self.tau_d, self.p_iu, self.p_eh, self.phi,
                              self.noise_var, k)

    @property
    def eav_power(self) -> float:
        """Replay (eavesdropping-antenna) training power phi * P_E."""
        return self.phi * self.p_eh

    @property
    def leg_power(self) -> float:
        return (1.0 - self.phi) * self.p_eh


@dataclass
class EstimationStats:
    """Diagonals of the estimator and covariance matrices for one attacked index.

    ``c_mats[i]``/``r_mats[i]`` use delta_ik, so row ``attacked`` holds the
    contaminated C_k and R-bar_k.  ``c_clean``/``r_clean`` hold the unattacked
    versions for every IU.
    """

    attacked: int
    c_mats: np.ndarray  # (M, N)
    r_mats: np.ndarray  # (M, N)
    c_clean: np.ndarray  # (M, N)
    r_clean: np.ndarray  # (M, N)
    c_eh: np.ndarray  # (N,)
    r_eh: np.ndarray  # (N,)
    r1_k: np.ndarray  # (N,)
    r2_k: np.ndarray  # (N,)

    @property
    def c_k(self):
        return self.c_mats[self.attacked]

    @property
    def rbar_k(self):
        return self.r_mats[self.attacked]


@dataclass
class ChannelDraw:
    h: np.ndarray  # (M, N) true IU channels
    g: np.ndarray  # (N,) EH legitimate antenna
    g_e: np.ndarray  # (N,) EH eavesdropping antenna
    h_hat: np.ndarray  # (M, N)
    g_hat: np.ndarray  # (N,)
    y_corr: np.ndarray  # (M, N) correlated observations y_i
    y_eh: np.ndarray  # (N,)


def _check(g: LargeScaleGains, cfg: TrainingConfig):
    if cfg.attacked >= g.n_users:
        raise ConfigError(f"0 <= attacked < M violated (attacked={cfg.attacked}, M={g.n_users})")


def estimation_stats(g: LargeScaleGains, cfg: TrainingConfig) -> EstimationStats:
    _check(g, cfg)
    tau, pi, s2 = cfg.tau, cfg.p_iu, cfg.noise_var
    gam_i, gam = g.iu_gains, g.eh_gains
    k = cfg.attacked

    c_clean = np.sqrt(pi) * gam_i / (tau * pi * gam_i + s2)
    r_clean = tau * np.sqrt(pi) * gam_i * c_clean

    c_mats = c_clean.copy()
    c_mats[k] = np.sqrt(pi) * gam_i[k] / (tau * pi * gam_i[k] + tau * cfg.eav_power * gam + s2)
    r_mats = r_clean.copy()
    r_mats[k] = tau * np.sqrt(pi) * gam_i[k] * c_mats[k]

    c_eh = np.sqrt(cfg.leg_power) * gam / (tau * cfg.leg_power * gam + s2)
    r_eh = tau * np.sqrt(cfg.leg_power) * gam * c_eh

    ck = c_mats[k]
    r1 = r_mats[k] - tau**2 * pi * ck**2 * gam_i[k]
    r2 = r_mats[k] - tau**2 * cfg.eav_power * ck**2 * gam
    # both are C_k^2 * (noise + the other training term) analytically; clip rounding
    r1 = np.maximum(r1, 0.0)
    r2 = np.maximum(r2, 0.0)
    return EstimationStats(k, c_mats, r_mats, c_clean, r_clean, c_eh, r_eh, r1, r2)


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def draw_channels(rng: np.random.Generator, g: LargeScaleGains, cfg: TrainingConfig,
                  st: EstimationStats | None = None, batch: int | None = None) -> ChannelDraw:
    """One (or ``batch``) uplink training round(s) and the resulting MMSE estimates.

    With ``batch`` every array gains a leading axis of that length.
    """
    _check(g, cfg)
    if st is None:
        st = estimation_stats(g, cfg)
    m, n = g.iu_gains.shape
    lead = () if batch is None else (batch,)
    tau, k = cfg.tau, cfg.attacked

    h = np.sqrt(g.iu_gains) * _cn(rng, lead + (m, n))
    gl = np.sqrt(g.eh_gains) * _cn(rng, lead + (n,))
    ge = np.sqrt(g.eh_gains) * _cn(rng, lead + (n,))
    noise_sd = np.sqrt(tau * cfg.noise_var)
    y = tau * np.sqrt(cfg.p_iu) * h + noise_sd * _cn(rng, lead + (m, n))
    y[..., k, :] += tau * np.sqrt(cfg.eav_power) * ge
    y_eh = tau * np.sqrt(cfg.leg_power) * gl + noise_sd * _cn(rng, lead + (n,))

    h_hat = st.c_mats * y
    g_hat = st.c_eh * y_eh
    return ChannelDraw(h, gl, ge, h_hat, g_hat, y, y_eh)


def attack_statistic(y_i: np.ndarray, g: LargeScaleGains, cfg: TrainingConfig, i: int):
    """Estimated replay power on IU i's pilot; tends to delta_ik * phi * P_E as N grows.

    Works on a single observation (N,) or a batch (..., N).  Not clamped.
    """
    tau = cfg.tau
    n = g.n_aps
    energy = np.sum(np.abs(y_i) ** 2, axis=-1)
    num = energy - tau**2 * cfg.p_iu * g.iu_gains[i].sum() - n * tau * cfg.noise_var
    return num / (tau**2 * g.eh_gains.sum())
