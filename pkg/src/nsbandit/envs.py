"""Non-stationary linear bandit environments.

Every environment draws a hidden weight vector ``w`` uniformly from the unit
cube and, at each round, an action set of ``A`` i.i.d. uniform vectors in
``[0, 1]^d``.  The variants differ only in how the expected reward of an
action evolves with the round index.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import ConfigError, ContractError


@dataclass(frozen=True)
class Stationary:
    """Mean reward <a, w> at every round."""


@dataclass(frozen=True)
class PiecewiseElevated:
    """Rewards are affinely rescaled into ``elevated_range`` on the listed
    (inclusive) round intervals and into ``base_range`` elsewhere."""

    elevated_intervals: tuple = ((50, 100), (350, 400))
    elevated_range: tuple = (3.0, 4.0)
    base_range: tuple = (0.0, 1.0)


@dataclass(frozen=True)
class CosineModulated:
    """Noisy linear reward multiplied by cos(2*pi*b*t)."""

    b: float = 0.018


@dataclass(frozen=True)
class PiecewiseConstant:
    """A fresh weight vector takes over at each change time (the new segment
    starts at that round).  ``weight_seeds`` optionally pins each segment's
    weights to its own seed, one seed per segment."""

    change_times: tuple = ()
    weight_seeds: tuple | None = None


Variant = Union[Stationary, PiecewiseElevated, CosineModulated, PiecewiseConstant]


@dataclass(frozen=True)
class EnvSpec:
    d: int
    A: int
    T: int
    noise_std: float = 0.0
    variant: Variant = field(default_factory=Stationary)
    normalize: bool = True

    def __post_init__(self):
        for key in ("d", "A", "T"):
            value = getattr(self, key)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{key} must be a positive integer, got {value!r}")
        if not np.isfinite(self.noise_std) or self.noise_std < 0:
            raise ConfigError(f"noise_std must be finite and >= 0, got {self.noise_std!r}")
        v = self.variant
        if isinstance(v, PiecewiseElevated):
            for lo, hi in (v.elevated_range, v.base_range):
                if not hi > lo:
                    raise ConfigError("elevated_range/base_range must satisfy lo < hi")
            for iv in v.elevated_intervals:
                if len(iv) != 2 or not 1 <= iv[0] <= iv[1]:
                    raise ConfigError(f"elevated_intervals entry {iv!r} is not a valid [start, end]")
        elif isinstance(v, CosineModulated):
            if not np.isfinite(v.b):
                raise ConfigError("b must be finite")
        elif isinstance(v, PiecewiseConstant):
            times = list(v.change_times)
            if times != sorted(set(times)) or any(c < 2 or c > self.T for c in times):
                raise ConfigError("change_times must be strictly increasing values in [2, T]")
            if v.weight_seeds is not None and len(v.weight_seeds) != len(times) + 1:
                raise ConfigError("weight_seeds needs one seed per segment (len(change_times) + 1)")
        elif not isinstance(v, Stationary):
            raise ConfigError(f"unknown environment variant {v!r}")


@dataclass
class EnvInstance:
    spec: EnvSpec
    w_star: np.ndarray
    segment_weights: np.ndarray  # (segments, d); a single row unless piecewise constant
    seed: object = None

    @property
    def d(self):
        return self.spec.d

    @property
    def T(self):
        return self.spec.T


@dataclass
class ActionSet:
    t: int
    vectors: np.ndarray  # (A, d)

    def __len__(self):
        return len(self.vectors)


def sample_env(spec: EnvSpec, seed) -> EnvInstance:
    """Draw the hidden weights of an environment.  Same (spec, seed) gives the same instance."""
    rng = np.random.default_rng(seed)
    v = spec.variant
    if isinstance(v, PiecewiseConstant):
        n_seg = len(v.change_times) + 1
        if v.weight_seeds is not None:
            segs = np.stack([np.random.default_rng(s).random(spec.d) for s in v.weight_seeds])
        else:
            segs = rng.random((n_seg, spec.d))
    else:
        segs = rng.random((1, spec.d))
    return EnvInstance(spec=spec, w_star=segs[0].copy(), segment_weights=segs, seed=seed)


def _check_round(env: EnvInstance, t: int):
    if not 1 <= t <= env.T:
        raise ContractError(f"round {t} outside [1, {env.T}]")


def draw_action_set(env: EnvInstance, t: int, rng: np.random.Generator) -> ActionSet:
    _check_round(env, t)
    return ActionSet(t, rng.random((env.spec.A, env.spec.d)))


def _segment(env: EnvInstance, t: int) -> np.ndarray:
    v = env.spec.variant
    if isinstance(v, PiecewiseConstant):
        return env.segment_weights[int(np.searchsorted(v.change_times, t, side="right"))]
    return env.w_star


def _elevated_range(v: PiecewiseElevated, t: int):
    for s, e in v.elevated_intervals:
        if s <= t <= e:
            return v.elevated_range
    return v.base_range


def _as_vectors(a):
    if isinstance(a, ActionSet):
        return a.vectors
    return np.asarray(a, dtype=float)


def linear_score(env: EnvInstance, t: int, a) -> np.ndarray | float:
    """<a, w_t> for a single action or a stack of actions."""
    return _as_vectors(a) @ _segment(env, t)


def mean_reward(env: EnvInstance, t: int, a):
    """Expected reward of action(s) ``a`` at round ``t`` on the raw scale."""
    _check_round(env, t)
    x = linear_score(env, t, a)
    v = env.spec.variant
    if isinstance(v, CosineModulated):
        return x * np.cos(2 * np.pi * v.b * t)
    if isinstance(v, PiecewiseElevated):
        lo, hi = _elevated_range(v, t)
        return lo + (hi - lo) * x / env.d
    return x


def sample_reward(env: EnvInstance, t: int, a, rng: np.random.Generator) -> float:
    """One noisy reward for a single action vector.  Always consumes exactly
    one normal draw so that streams stay aligned across algorithms."""
    _check_round(env, t)
    eps = env.spec.noise_std * rng.standard_normal()
    v = env.spec.variant
    if isinstance(v, CosineModulated):
        return float((linear_score(env, t, a) + eps) * np.cos(2 * np.pi * v.b * t))
    return float(mean_reward(env, t, a) + eps)


def optimal_reward(env: EnvInstance, t: int, action_set) -> float:
    vecs = _as_vectors(action_set)
    if vecs.size == 0:
        raise ContractError("empty action set")
    return float(np.max(mean_reward(env, t, vecs)))


def reward_bounds(spec: EnvSpec) -> tuple[float, float]:
    """Range of expected rewards used to map raw rewards onto [0, 1]."""
    v = spec.variant
    if isinstance(v, PiecewiseElevated):
        return (min(v.base_range[0], v.elevated_range[0]), max(v.base_range[1], v.elevated_range[1]))
    if isinstance(v, CosineModulated):
        return (-float(spec.d), float(spec.d))
    return (0.0, float(spec.d))


def normalize_reward(env: EnvInstance, r):
    """Map a raw reward to the learner scale.  Identity when normalization is off."""
    if not env.spec.normalize:
        return r
    lo, hi = reward_bounds(env.spec)
    return np.clip((np.asarray(r, dtype=float) - lo) / (hi - lo), 0.0, 1.0)[()]


def reward_scale(env: EnvInstance) -> float:
    if not env.spec.normalize:
        return 1.0
    lo, hi = reward_bounds(env.spec)
    return hi - lo


def delta(env: EnvInstance, t: int) -> float:
    """Largest change of the expected reward between rounds t and t+1, taken
    over all actions in [0, 1]^d (raw scale)."""
    if not 1 <= t < env.T:
        raise ContractError(f"delta is defined for rounds 1..T-1, got {t}")
    v = env.spec.variant
    if isinstance(v, Stationary):
        return 0.0
    if isinstance(v, CosineModulated):
        c0 = np.cos(2 * np.pi * v.b * t)
        c1 = np.cos(2 * np.pi * v.b * (t + 1))
        return float(abs(c1 - c0) * env.w_star.sum())
    if isinstance(v, PiecewiseElevated):
        lo0, hi0 = _elevated_range(v, t)
        lo1, hi1 = _elevated_range(v, t + 1)
        if (lo0, hi0) == (lo1, hi1):
            return 0.0
        # the change is affine in x = <a, w>/d, which ranges over [0, sum(w)/d]
        x_max = env.w_star.sum() / env.d
        slope = (hi1 - lo1) - (hi0 - lo0)
        return float(max(abs(lo1 - lo0), abs(lo1 - lo0 + slope * x_max)))
    diff = _segment(env, t + 1) - _segment(env, t)
    return float(max(np.clip(diff, 0, None).sum(), np.clip(-diff, 0, None).sum()))


def delta_profile(env: EnvInstance, normalized: bool = False) -> np.ndarray:
    """Array whose entry tau-1 holds delta(tau) for tau = 1..T-1."""
    out = np.array([delta(env, t) for t in range(1, env.T)])
    return out / reward_scale(env) if normalized else out


def nonstationarity_measures(env: EnvInstance, interval, normalized: bool = False):
    """Total variation Delta_I and number of stationary pieces J_I on [s, e]."""
    s, e = interval
    if not 1 <= s <= e <= env.T:
        raise ContractError(f"interval {interval!r} not inside [1, {env.T}]")
    deltas = np.array([delta(env, t) for t in range(s, e)])
    if normalized:
        deltas = deltas / reward_scale(env)
    return float(deltas.sum()), 1 + int(np.count_nonzero(deltas))
