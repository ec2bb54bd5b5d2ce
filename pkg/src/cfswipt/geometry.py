"""AP deployments, user placement and large-scale fading gains."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_POISSON_RETRIES = 16


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class SimArea:
    """Two concentric squares centred at the origin (side lengths in m)."""

    ap_area_side: float = 1000.0
    user_area_side: float = 300.0

    def __post_init__(self):
        if self.ap_area_side <= 0 or self.user_area_side <= 0:
            raise GeometryError("area sides must be > 0")
        if self.user_area_side > self.ap_area_side:
            raise GeometryError("user_area_side <= ap_area_side violated")

    @property
    def ap_area(self) -> float:
        return self.ap_area_side**2


@dataclass(frozen=True)
class FadingParams:
    alpha: float = 2.5
    shadow_sigma_db: float = 8.0
    min_distance: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise GeometryError("alpha > 0 violated")
        if self.shadow_sigma_db < 0:
            raise GeometryError("shadow_sigma_db >= 0 violated")
        if self.min_distance <= 0:
            raise GeometryError("min_distance > 0 violated")


@dataclass
class Deployment:
    ap_positions: np.ndarray  # (N, 2)
    user_positions: np.ndarray  # (M, 2)
    eh_position: np.ndarray  # (2,)

    def __post_init__(self):
        self.ap_positions = np.atleast_2d(np.asarray(self.ap_positions, dtype=float))
        self.user_positions = np.atleast_2d(np.asarray(self.user_positions, dtype=float))
        self.eh_position = np.asarray(self.eh_position, dtype=float).reshape(2)
        if self.ap_positions.shape[0] < 1:
            raise GeometryError("deployment needs at least one AP")

    @property
    def n_aps(self) -> int:
        return self.ap_positions.shape[0]

    @property
    def n_users(self) -> int:
        return self.user_positions.shape[0]


@dataclass
class LargeScaleGains:
    """Linear power gains: ``iu_gains[i, j]`` is IU i to AP j, ``eh_gains[j]`` EH to AP j."""

    iu_gains: np.ndarray  # (M, N)
    eh_gains: np.ndarray  # (N,)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.iu_gains = np.atleast_2d(np.asarray(self.iu_gains, dtype=float))
        self.eh_gains = np.asarray(self.eh_gains, dtype=float).reshape(-1)
        if self.iu_gains.shape[1] != self.eh_gains.shape[0]:
            raise GeometryError(
                f"gain shapes disagree: iu {self.iu_gains.shape}, eh {self.eh_gains.shape}"
            )
        for arr in (self.iu_gains, self.eh_gains):
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                raise GeometryError("large-scale gains must be finite and > 0")

    @property
    def n_aps(self) -> int:
        return self.eh_gains.shape[0]

    @property
    def n_users(self) -> int:
        return self.iu_gains.shape[0]


def _uniform_square(rng, side, n):
    return rng.uniform(-side / 2.0, side / 2.0, size=(n, 2))


def sample_deployment(rng: np.random.Generator, area: SimArea, lambda_a: float,
                      m_users: int) -> Deployment:
    """Draw a PPP realisation of APs on the AP square plus uniform users and EH.

    A zero-AP draw is resampled up to ``MAX_POISSON_RETRIES`` times.
    """
    if lambda_a <= 0:
        raise GeometryError("lambda_a > 0 violated")
    if m_users < 1:
        raise GeometryError("m_users >= 1 violated")
    mean_n = lambda_a * area.ap_area
    for _ in range(MAX_POISSON_RETRIES):
        n = int(rng.poisson(mean_n))
        if n >= 1:
            break
    else:
        raise GeometryError(
            f"PPP produced zero APs {MAX_POISSON_RETRIES} times (E[N]={mean_n:g})"
        )
    aps = _uniform_square(rng, area.ap_area_side, n)
    users = _uniform_square(rng, area.user_area_side, m_users)
    eh = _uniform_square(rng, area.user_area_side, 1)[0]
    return Deployment(aps, users, eh)


def sample_fixed_deployment(rng: np.random.Generator, area: SimArea, n_aps: int,
                            m_users: int) -> Deployment:
    """Binomial counterpart of :func:`sample_deployment` with exactly ``n_aps`` APs."""
    if n_aps < 1:
        raise GeometryError("n_aps >= 1 violated")
    aps = _uniform_square(rng, area.ap_area_side, n_aps)
    users = _uniform_square(rng, area.user_area_side, m_users)
    eh = _uniform_square(rng, area.user_area_side, 1)[0]
    return Deployment(aps, users, eh)


def pathloss(dist, fp: FadingParams):
    return np.maximum(dist, fp.min_distance) ** (-fp.alpha)


def large_scale_gains(dep: Deployment, fp: FadingParams, rng: np.random.Generator,
                      shared_shadowing: bool = False) -> LargeScaleGains:
    """gamma = max(d, d_min)^-alpha * 10^(nu/10), nu ~ N(0, sigma_dB^2) i.i.d. per link.

    With ``shared_shadowing`` an IU sitting exactly on the EH position reuses
    the EH's shadowing draws, so its gains equal the EH gains.
    """
    d_iu = np.linalg.norm(dep.user_positions[:, None, :] - dep.ap_positions[None, :, :], axis=2)
    d_eh = np.linalg.norm(dep.ap_positions - dep.eh_position[None, :], axis=1)
    nu_iu = rng.normal(0.0, fp.shadow_sigma_db, size=d_iu.shape)
    nu_eh = rng.normal(0.0, fp.shadow_sigma_db, size=d_eh.shape)
    if shared_shadowing:
        same = np.all(dep.user_positions == dep.eh_position[None, :], axis=1)
        nu_iu[same] = nu_eh
    iu = pathloss(d_iu, fp) * 10.0 ** (nu_iu / 10.0)
    eh = pathloss(d_eh, fp) * 10.0 ** (nu_eh / 10.0)
    return LargeScaleGains(iu, eh, meta={"n_aps": dep.n_aps})


def colocated_equivalent(g: LargeScaleGains) -> LargeScaleGains:
    """Replace every per-AP gain by the user's mean gain over the N APs."""
    n = g.n_aps
    iu = np.repeat(g.iu_gains.mean(axis=1, keepdims=True), n, axis=1)
    eh = np.full(n, g.eh_gains.mean())
    meta = dict(g.meta)
    meta["colocated"] = True
    return LargeScaleGains(iu, eh, meta=meta)


def place_users_on_axis(delta: float):
    """One IU at (-delta/2, 0) and the EH at (+delta/2, 0).

    Returns ``(user_positions, eh_position)`` to combine with an AP layout.
    """
    if delta < 0:
        raise GeometryError("delta >= 0 violated")
    users = np.array([[-delta / 2.0, 0.0]])
    eh = np.array([delta / 2.0, 0.0])
    return users, eh


def axis_deployment(ap_positions, delta: float) -> Deployment:
    users, eh = place_users_on_axis(delta)
    return Deployment(np.asarray(ap_positions, dtype=float), users, eh)
