"""Experiment configuration: defaults, profiles and JSON parsing.

All powers are written in dBm in config files and converted to linear watts
internally. The default values reproduce the standard simulation setup; the
"desk" profile shrinks the network so a full fairness run finishes in
minutes on a laptop.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .beamforming import OptimConfig
from .channel import TrainingConfig
from .geometry import GeometryConfig, path_loss_linear


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    import math
    return 10.0 * math.log10(watts) + 30.0


@dataclass(frozen=True)
class RadioConfig:
    num_antennas: int = 8                       # M, antennas per RRH
    rrh_power_dbm: float = 30.0                 # p, downlink budget per RRH
    pilot_power_dbm: float = 20.0               # uplink training power
    noise_spectral_density_dbm_hz: float = -174.0
    noise_figure_db: float = 8.0
    bandwidth_hz: float = 180_000.0
    shadowing_std_db: float = 4.0
    cluster_threshold_km: float = 0.4           # rho = path loss at this distance

    def __post_init__(self):
        if self.num_antennas < 1:
            raise ValueError("num_antennas must be at least 1")
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be positive")
        if self.shadowing_std_db < 0:
            raise ValueError("shadowing_std_db must be non-negative")
        if self.cluster_threshold_km <= 0:
            raise ValueError("cluster_threshold_km must be positive")

    @property
    def rrh_power_w(self) -> float:
        return dbm_to_watts(self.rrh_power_dbm)

    @property
    def pilot_power_w(self) -> float:
        return dbm_to_watts(self.pilot_power_dbm)

    @property
    def noise_power_dbm(self) -> float:
        import math
        return (self.noise_spectral_density_dbm_hz + self.noise_figure_db
                + 10.0 * math.log10(self.bandwidth_hz))

    @property
    def noise_power_w(self) -> float:
        return dbm_to_watts(self.noise_power_dbm)

    @property
    def cluster_gain_threshold(self) -> float:
        return float(path_loss_linear(self.cluster_threshold_km))


@dataclass(frozen=True)
class TrainingSettings:
    pilot_len: int = 32     # tau_p
    block_len: int = 200    # tau_d


@dataclass(frozen=True)
class OptimizerSettings:
    max_iters: int = 200
    rel_tol: float = 1e-4
    epsilon_fraction: float = 0.9            # reweighting epsilon = fraction * p / M
    lambda_small: float = 1.0
    bisection_iters: int = 50
    schedule_threshold_fraction: float = 1e-3  # cutoff = fraction * p / M
    mu_floor_scale: float = 1e-8


MODES = ("PI", "PEAR", "PEA", "PEARNF")
TRANSMISSIONS = ("coherent", "noncoherent")


@dataclass(frozen=True)
class RunSettings:
    num_time_slots: int = 100
    num_realizations: int = 10
    forgetting_factor: float = 0.2   # weight of the newest rate in the PF average
    rate_floor: float = 1e-3         # initial long-term rate, nats/s/Hz
    weight_cap: float = 1e3          # fairness weight ceiling for starved users
    mode: str = "PEAR"
    transmission: str = "coherent"
    workers: int = 1
    seed: int = 0
    collect_traces: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.transmission not in TRANSMISSIONS:
            raise ValueError(f"transmission must be one of {TRANSMISSIONS}")
        if not 0.0 <= self.forgetting_factor <= 1.0:
            raise ValueError("forgetting_factor must lie in [0, 1]")
        if self.num_time_slots < 1 or self.num_realizations < 1:
            raise ValueError("num_time_slots and num_realizations must be >= 1")
        if self.rate_floor <= 0 or self.weight_cap <= 0:
            raise ValueError("rate_floor and weight_cap must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class SimConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    radio: RadioConfig = field(default_factory=RadioConfig)
    training: TrainingSettings = field(default_factory=TrainingSettings)
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    run: RunSettings = field(default_factory=RunSettings)

    def training_config(self) -> TrainingConfig:
        return TrainingConfig(self.training.pilot_len, self.training.block_len,
                              self.radio.pilot_power_w, self.radio.noise_power_w)

    def optim_config(self) -> OptimConfig:
        p = self.radio.rrh_power_w
        m = self.radio.num_antennas
        opt = self.optimizer
        return OptimConfig(
            power_budget=p,
            num_antennas=m,
            max_iters=opt.max_iters,
            rel_tol=opt.rel_tol,
            epsilon=opt.epsilon_fraction * p / m,
            lambda_small=opt.lambda_small,
            bisection_iters=opt.bisection_iters,
            schedule_threshold=opt.schedule_threshold_fraction * p / m,
            mu_floor_scale=opt.mu_floor_scale,
        )

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {
    "geometry": GeometryConfig,
    "radio": RadioConfig,
    "training": TrainingSettings,
    "optimizer": OptimizerSettings,
    "run": RunSettings,
}

# Overrides applied on top of the defaults before any user config.
PROFILES: dict[str, dict] = {
    "paper": {},
    "desk": {
        "geometry": {"rrhs_per_cell": 3, "user_density_per_km2": 60.0},
        "radio": {"num_antennas": 4},
        "training": {"pilot_len": 8},
        "run": {"num_time_slots": 20, "num_realizations": 10},
    },
}


def config_from_dict(data: dict, profile: str = "paper") -> SimConfig:
    """Build a validated config from a (possibly partial) dict of sections.

    Unknown sections or keys raise ValueError naming the offender; value
    checks come from the section dataclasses.
    """
    if profile not in PROFILES:
        raise ValueError(f"unknown profile '{profile}'")
    if not isinstance(data, dict):
        raise ValueError("config must be a JSON object")
    merged: dict[str, dict] = {name: dict(sec) for name, sec in
                               PROFILES[profile].items()}
    for section, payload in data.items():
        if section not in _SECTIONS:
            raise ValueError(f"unknown config section '{section}'")
        if not isinstance(payload, dict):
            raise ValueError(f"config section '{section}' must be an object")
        known = {f.name for f in fields(_SECTIONS[section])}
        for key in payload:
            if key not in known:
                raise ValueError(f"unknown config key '{section}.{key}'")
        merged.setdefault(section, {}).update(payload)

    parts = {}
    for section, cls in _SECTIONS.items():
        try:
            parts[section] = cls(**merged.get(section, {}))
        except (TypeError, ValueError) as exc:
            raise ValueError(f"invalid config section '{section}': {exc}") from exc
    cfg = SimConfig(**parts)
    cfg.training_config()   # cross-field validation (pilot_len < block_len, powers)
    cfg.optim_config()
    return cfg


def parse_config(path: str | Path, profile: str = "paper") -> SimConfig:
    """Load and validate a JSON config file over the given profile."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return config_from_dict(data, profile=profile)
