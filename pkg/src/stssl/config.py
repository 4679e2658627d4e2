"""Run configuration: one dataclass per pipeline stage, JSON in and out.

Keys use dotted paths (``dbscan.eps``, ``track.alpha``, ...) both in config
files and on the command line. ``STSSL_SEED`` in the environment overrides
every seed.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .clustering import ClusterConfig
from .encoder import AugmentConfig, EncoderConfig
from .errors import ConfigError
from .losses import LambdaSchedule
from .tracking import LOCATION_ONLY, LOCATION_PLUS_FEATURE


@dataclass
class RansacSection:
    dist_threshold: float = 0.25
    max_iters: int = 200
    min_inlier_ratio: float = 0.15
    max_tilt_deg: float = 30.0


@dataclass
class DbscanSection:
    eps: float = 0.25
    min_pts: int = 10


@dataclass
class FilterSection:
    min_size: int = 200
    max_size: int = 20000
    max_clusters: int = 50


@dataclass
class TrackSection:
    alpha: float = 0.5
    gate_m: float = 3.0
    feature_mode: str = LOCATION_ONLY
    max_interval: int = 5


@dataclass
class ByolSection:
    momentum: float = 0.99


@dataclass
class LambdaSection:
    early: float = 0.0
    late: float = 4.0
    ramp_start: float = 0.4
    ramp_end: float = 0.6
    mode: str = "linear"


@dataclass
class TrainSection:
    epochs: int = 25
    lr_init: float = 0.036
    lr_min: float = 0.009
    sgd_momentum: float = 0.9
    weight_decay: float = 0.0004
    checkpoint_every: int = 0  # steps; 0 = final checkpoint only


@dataclass
class Config:
    seed: int = 0
    ransac: RansacSection = field(default_factory=RansacSection)
    dbscan: DbscanSection = field(default_factory=DbscanSection)
    filter: FilterSection = field(default_factory=FilterSection)
    track: TrackSection = field(default_factory=TrackSection)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    byol: ByolSection = field(default_factory=ByolSection)
    aug: AugmentConfig = field(default_factory=AugmentConfig)
    lam: LambdaSection = field(default_factory=LambdaSection)
    train: TrainSection = field(default_factory=TrainSection)

    # ---- derived views used by the pipeline stages -------------------------

    def cluster_config(self) -> ClusterConfig:
        return ClusterConfig(
            eps=self.dbscan.eps,
            min_pts=self.dbscan.min_pts,
            min_size=self.filter.min_size,
            max_size=self.filter.max_size,
            max_clusters=self.filter.max_clusters,
        )

    def lambda_schedule(self) -> LambdaSchedule:
        return LambdaSchedule(
            early=self.lam.early,
            late=self.lam.late,
            ramp_start=self.lam.ramp_start,
            ramp_end=self.lam.ramp_end,
            mode=self.lam.mode,
        )

    # ---- (de)serialization --------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Config":
        cfg = cls()
        for section, values in data.items():
            if not hasattr(cfg, section):
                raise ConfigError(f"unknown config section {section!r}")
            current = getattr(cfg, section)
            if dataclasses.is_dataclass(current):
                for key, value in values.items():
                    if not hasattr(current, key):
                        raise ConfigError(f"unknown config key {section}.{key}")
                    if isinstance(getattr(current, key), tuple):
                        value = tuple(value)
                    setattr(current, key, value)
            else:
                setattr(cfg, section, values)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "Config":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    def set_key(self, dotted: str, raw: str) -> None:
        """Set ``section.key`` from a string, coercing to the current type."""
        if dotted == "seed":
            self.seed = int(raw)
            return
        try:
            section_name, key = dotted.split(".", 1)
        except ValueError:
            raise ConfigError(f"config key must look like section.key, got {dotted!r}")
        if not hasattr(self, section_name):
            raise ConfigError(f"unknown config section {section_name!r}")
        section = getattr(self, section_name)
        if not hasattr(section, key):
            raise ConfigError(f"unknown config key {dotted!r}")
        current = getattr(section, key)
        if isinstance(current, bool):
            value: object = raw.lower() in ("1", "true", "yes", "on")
        elif isinstance(current, int):
            value = int(raw)
        elif isinstance(current, float):
            value = float(raw)
        elif isinstance(current, tuple):
            value = tuple(int(v) for v in raw.split(","))
        else:
            value = raw
        setattr(section, key, value)

    def apply_env(self) -> None:
        env_seed = os.environ.get("STSSL_SEED")
        if env_seed is not None:
            self.seed = int(env_seed)

    def apply_profile(self, profile: str) -> None:
        if profile == "kitti":
            self.dbscan.eps = 0.25
        elif profile == "nuscene":
            self.dbscan.eps = 0.5
        else:
            raise ConfigError(f"unknown profile {profile!r} (expected kitti or nuscene)")

    def validate(self) -> None:
        if self.ransac.dist_threshold <= 0:
            raise ConfigError("ransac.dist_threshold must be positive")
        if self.ransac.max_iters < 1:
            raise ConfigError("ransac.max_iters must be >= 1")
        if not 0.0 <= self.ransac.min_inlier_ratio <= 1.0:
            raise ConfigError("ransac.min_inlier_ratio must be in [0, 1]")
        if self.dbscan.eps <= 0:
            raise ConfigError("dbscan.eps must be positive")
        if self.dbscan.min_pts < 1:
            raise ConfigError("dbscan.min_pts must be >= 1")
        if self.filter.min_size > self.filter.max_size:
            raise ConfigError("filter.min_size exceeds filter.max_size")
        if self.filter.max_clusters < 0:
            raise ConfigError("filter.max_clusters must be >= 0")
        if not 0.0 < self.track.alpha < 1.0:
            raise ConfigError("track.alpha must be in (0, 1)")
        if self.track.gate_m <= 0:
            raise ConfigError("track.gate_m must be positive")
        if self.track.feature_mode not in (LOCATION_ONLY, LOCATION_PLUS_FEATURE):
            raise ConfigError(f"unknown track.feature_mode {self.track.feature_mode!r}")
        if self.track.max_interval < 0:
            raise ConfigError("track.max_interval must be >= 0")
        if not 0.0 <= self.byol.momentum <= 1.0:
            raise ConfigError("byol.momentum must be in [0, 1]")
        if not 0.0 <= self.lam.ramp_start <= self.lam.ramp_end <= 1.0:
            raise ConfigError("lambda ramp must satisfy 0 <= start <= end <= 1")
        if self.lam.mode not in ("linear", "step"):
            raise ConfigError("lam.mode must be linear or step")
        if self.train.epochs < 0:
            raise ConfigError("train.epochs must be >= 0")
        if self.train.lr_init <= 0 or self.train.lr_min <= 0:
            raise ConfigError("learning rates must be positive")
        if not 0.0 <= self.train.sgd_momentum < 1.0:
            raise ConfigError("train.sgd_momentum must be in [0, 1)")
        if self.train.weight_decay < 0:
            raise ConfigError("train.weight_decay must be >= 0")
        if not 0.0 < self.aug.clip_keep_min <= 1.0:
            raise ConfigError("aug.clip_keep_min must be in (0, 1]")
