"""Flat YAML run configuration.

Every key is optional except ``algorithm``; unknown keys are rejected.  See
README.md for the full key reference.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace

import yaml

from .envs import CosineModulated, EnvSpec, PiecewiseConstant, PiecewiseElevated, Stationary
from .errors import ConfigError
from .master import TestConfig
from .runner import ALGORITHMS
from .scheduler import RhoFunction

VARIANTS = ("stationary", "elevated", "cosine", "piecewise")
SEED_ENV_VAR = "NSBANDIT_SEED"


@dataclass
class RunConfig:
    algorithm: str = "linucb"
    d: int = 8
    A: int = 10
    T: int = 1000
    noise_std: float = 0.1
    variant: str = "stationary"
    elevated_intervals: list = field(default_factory=lambda: [[50, 100], [350, 400]])
    elevated_range: list = field(default_factory=lambda: [3.0, 4.0])
    base_range: list = field(default_factory=lambda: [0.0, 1.0])
    b: float = 0.018
    change_times: list = field(default_factory=list)
    weight_seeds: list | None = None
    normalize: bool = True
    seeds: object = 1  # count, or explicit list of seed ids
    seed: int | None = None  # master seed
    rho_scale: float = 1.0
    rho_power: float = 0.5
    test1_mult: float = 9.0
    test2_mult: float = 3.0
    threshold_scale: float = 1.0
    alpha: float = 1.0
    ridge: float = 1.0
    ts_noise_var: float = 0.3
    ts_prior_var: float = 1.0
    window: int = 64
    sharpness_k: float = 1e6
    sharpness_k2: float = 1e6
    grid_eps: float = 1e-6
    out: str = "results"
    workers: int = 1
    verbosity: int = 0
    debug_test1_sign_flip: bool = False

    def __post_init__(self):
        self.validate()

    # ---------------------------------------------------------------- checks
    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm: unknown value {self.algorithm!r} (choose from {', '.join(ALGORITHMS)})")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant: unknown value {self.variant!r} (choose from {', '.join(VARIANTS)})")
        for key in ("d", "A", "T", "window", "workers"):
            v = getattr(self, key)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigError(f"{key}: must be a positive integer, got {v!r}")
        for key in FLOAT_KEYS:
            v = getattr(self, key)
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{key}: must be a number, got {v!r}")
        for key in ("rho_scale", "threshold_scale", "ridge", "ts_noise_var", "ts_prior_var",
                    "sharpness_k", "sharpness_k2", "grid_eps"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key}: must be > 0")
        if self.noise_std < 0 or self.alpha < 0 or self.test1_mult < 0 or self.test2_mult < 0:
            raise ConfigError("noise_std, alpha and test multipliers must be >= 0")
        if not 0 <= self.rho_power <= 1:
            raise ConfigError("rho_power: must lie in [0, 1] so that t * rho(t) is non-decreasing")
        self.seed_ids()
        if self.seed is not None and (isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0):
            raise ConfigError(f"seed: must be a non-negative integer, got {self.seed!r}")
        if self.algorithm == "sliding-window+linucb" and self.T % self.window:
            raise ConfigError(f"window: {self.window} must divide T={self.T}")
        self.env_spec()

    def seed_ids(self) -> list[int]:
        s = self.seeds
        if isinstance(s, bool):
            raise ConfigError("seeds: must be a count or a list of seed ids")
        if isinstance(s, int):
            if s < 1:
                raise ConfigError("seeds: count must be >= 1")
            return list(range(s))
        if isinstance(s, (list, tuple)) and s and all(isinstance(x, int) and not isinstance(x, bool) and x >= 0 for x in s):
            if len(set(s)) != len(s):
                raise ConfigError("seeds: duplicate seed ids")
            return sorted(s)
        raise ConfigError(f"seeds: must be a positive count or a non-empty list of non-negative ints, got {s!r}")

    def master_seed(self) -> int:
        if self.seed is not None:
            return self.seed
        env = os.environ.get(SEED_ENV_VAR)
        if env is not None:
            try:
                return int(env)
            except ValueError:
                raise ConfigError(f"{SEED_ENV_VAR}: not an integer: {env!r}") from None
        return 0

    # ---------------------------------------------------------------- builders
    def env_spec(self) -> EnvSpec:
        try:
            if self.variant == "stationary":
                v = Stationary()
            elif self.variant == "elevated":
                v = PiecewiseElevated(tuple(tuple(int(x) for x in iv) for iv in self.elevated_intervals),
                                      tuple(float(x) for x in self.elevated_range),
                                      tuple(float(x) for x in self.base_range))
            elif self.variant == "cosine":
                v = CosineModulated(float(self.b))
            else:
                v = PiecewiseConstant(tuple(int(c) for c in self.change_times),
                                      None if self.weight_seeds is None else tuple(int(s) for s in self.weight_seeds))
            return EnvSpec(self.d, self.A, self.T, float(self.noise_std), v, bool(self.normalize))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"environment settings: {exc}") from None

    def rho(self) -> RhoFunction:
        return RhoFunction(scale=float(self.rho_scale), power=float(self.rho_power))

    def test_config(self) -> TestConfig:
        return TestConfig(horizon=self.T, rho=self.rho(), test1_mult=float(self.test1_mult),
                          test2_mult=float(self.test2_mult), threshold_scale=float(self.threshold_scale),
                          test1_sign_flip=bool(self.debug_test1_sign_flip))

    def learner_kw(self) -> dict:
        return dict(alpha=float(self.alpha), lam=float(self.ridge), noise_var=float(self.ts_noise_var),
                    prior_var=float(self.ts_prior_var))

    def nctf_kw(self) -> dict:
        return dict(k=float(self.sharpness_k), k2=float(self.sharpness_k2), grid_eps=float(self.grid_eps))

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


KEYS = tuple(f.name for f in fields(RunConfig))
FLOAT_KEYS = ("noise_std", "b", "rho_scale", "rho_power", "test1_mult", "test2_mult", "threshold_scale",
              "alpha", "ridge", "ts_noise_var", "ts_prior_var", "sharpness_k", "sharpness_k2", "grid_eps")


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of key: value pairs")
    for key in data:
        if key not in KEYS:
            raise ConfigError(f"unknown config key {key!r}")
    data = dict(data)
    for key in FLOAT_KEYS:
        # YAML 1.1 reads "1e6" as a string
        if isinstance(data.get(key), str):
            try:
                data[key] = float(data[key])
            except ValueError:
                raise ConfigError(f"{key}: must be a number, got {data[key]!r}") from None
    if "algorithm" not in data:
        raise ConfigError("missing required key 'algorithm'")
    try:
        return RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    return config_from_dict(data or {})
