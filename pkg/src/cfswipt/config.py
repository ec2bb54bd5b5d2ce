"""Run configuration: system defaults, sweep grids, YAML loading and validation."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import yaml

from .estimation import DEFAULT_NOISE_VAR, ConfigError, TrainingConfig
from .geometry import FadingParams, GeometryError, SimArea

log = logging.getLogger(__name__)

PROFILES = ("desk", "full")
FORMATS = ("csv", "jsonl")
MODES = ("robust", "known")


@dataclass
class SweepConfig:
    """Grids of every experiment family; ``None`` picks the profile default."""

    seeds: list | None = None
    lambda_a: float | None = None  # AP intensity of er/separation/convergence runs
    phi_values: list | None = None
    er_grid: list | None = None  # E-bar values (J)
    density_grid: list | None = None  # lambda_a values (1/m^2)
    separation_grid: list | None = None  # Delta values (m)
    density_e_min: float = 0.0
    density_phi: float = 0.3
    separation_e_min: float = 0.0
    separation_phi: float = 0.5
    separation_alpha: float = 2.0
    convergence_inits: list = field(default_factory=lambda: [-8.0, -6.0])
    convergence_e_min: float = 5e-5
    convergence_phi: float = 0.4


@dataclass
class RunConfig:
    # geometry
    ap_area_side: float = 1000.0
    user_area_side: float = 300.0
    lambda_a: float = 1.5e-4
    m_users: int = 3
    alpha: float = 2.5
    shadow_sigma_db: float = 8.0
    min_distance: float = 1.0
    shared_shadowing: bool = False
    # training and receivers
    tau: int = 10
    tau_d: int = 10
    p_iu: float = 1.0
    p_eh: float = 1.0
    phi: float = 0.3
    noise_var: float = DEFAULT_NOISE_VAR
    zeta: float = 0.5
    # power control
    p_t: float = 0.5
    e_min: float = 0.0
    init: float = -6.0
    restart_inits: list = field(default_factory=lambda: [-8.0, -10.0])  # see solve_point
    tol: float = 1e-5
    max_iter: int = 50
    mode: str = "robust"
    n_aps_cap: int = 128
    # Monte Carlo
    n_draws: int = 10_000
    # run
    seed: int = 0
    profile: str = "desk"
    out: str | None = None
    format: str = "csv"
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def __post_init__(self):
        if isinstance(self.sweep, dict):
            self.sweep = _build(SweepConfig, self.sweep, "sweep")
        self.validate()

    def validate(self):
        """Raise ConfigError naming the violated precondition."""
        try:
            self.area()
            self.fading()
            TrainingConfig(self.tau, self.tau_d, self.p_iu, self.p_eh, self.phi, self.noise_var)
        except GeometryError as exc:
            raise ConfigError(str(exc)) from exc
        checks = [
            (self.lambda_a > 0, "lambda_a > 0"),
            (self.m_users >= 1, "m_users >= 1"),
            (0.0 < self.zeta <= 1.0, "0 < zeta <= 1"),
            (self.p_t > 0, "p_t > 0"),
            (self.e_min >= 0, "e_min >= 0"),
            (self.tol > 0, "tol > 0"),
            (self.max_iter >= 1, "max_iter >= 1"),
            (self.mode in MODES, f"mode in {MODES}"),
            (self.n_aps_cap >= 1, "n_aps_cap >= 1"),
            (self.n_draws >= 1, "n_draws >= 1"),
            (self.profile in PROFILES, f"profile in {PROFILES}"),
            (self.format in FORMATS, f"format in {FORMATS}"),
        ]
        sw = self.sweep
        if sw.lambda_a is not None:
            checks.append((sw.lambda_a > 0, "lambda_a > 0"))
        for phi in sw.phi_values or []:
            checks.append((0.0 < phi < 1.0, "0 < phi < 1"))
        for e in sw.er_grid or []:
            checks.append((e >= 0, "e_min >= 0"))
        for lam in sw.density_grid or []:
            checks.append((lam > 0, "lambda_a > 0"))
        for d in sw.separation_grid or []:
            checks.append((d >= 0, "delta >= 0"))
        checks.append((0.0 < sw.density_phi < 1.0, "0 < phi < 1"))
        checks.append((0.0 < sw.separation_phi < 1.0, "0 < phi < 1"))
        checks.append((0.0 < sw.convergence_phi < 1.0, "0 < phi < 1"))
        checks.append((sw.convergence_e_min >= 0, "e_min >= 0"))
        checks.append((sw.separation_alpha > 0, "alpha > 0"))
        for ok, msg in checks:
            if not ok:
                raise ConfigError(f"{msg} violated")
        return self

    def area(self) -> SimArea:
        return SimArea(self.ap_area_side, self.user_area_side)

    def fading(self, alpha: float | None = None) -> FadingParams:
        return FadingParams(self.alpha if alpha is None else alpha, self.shadow_sigma_db,
                            self.min_distance)

    def training(self, phi: float | None = None) -> TrainingConfig:
        return TrainingConfig(self.tau, self.tau_d, self.p_iu, self.p_eh,
                              self.phi if phi is None else phi, self.noise_var)

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _build(cls, data: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    return cls(**data)


def parse_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the YAML file (if any), then ``overrides``; validated and logged."""
    data = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a mapping")
        data.update(loaded)
    for key, val in (overrides or {}).items():
        if key == "sweep" and isinstance(val, dict):
            data.setdefault("sweep", {}).update(val)
        else:
            data[key] = val
    cfg = _build(RunConfig, data, "config")
    log.info("noise_var (sigma_n^2) = %.3e W%s", cfg.noise_var,
             " (default)" if cfg.noise_var == DEFAULT_NOISE_VAR else "")
    for key, val in cfg.to_dict().items():
        log.debug("config %s = %r", key, val)
    return cfg
