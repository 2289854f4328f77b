"""Base learners: LinUCB and Gaussian Thompson sampling.

Both follow the same interface.  ``act`` returns a probability vector over the
offered actions together with an optimistic reward estimate r_tilde in [0, 1];
``update`` folds one observed (action vector, reward) pair into the state.
"""
from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from .errors import ConfigError, InternalError


class BasePolicy(ABC):
    @abstractmethod
    def reset(self) -> None: ...

    @abstractmethod
    def act(self, actions: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, float]: ...

    @abstractmethod
    def update(self, action: np.ndarray, reward: float) -> None: ...


def one_hot(k: int, size: int) -> np.ndarray:
    p = np.zeros(size)
    p[k] = 1.0
    return p


def select_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Index of the chosen action.  Deterministic (and rng-free) for one-hot vectors."""
    k = int(np.argmax(probs))
    if probs[k] == 1.0:
        return k
    return int(rng.choice(len(probs), p=probs))


def _cholesky(m: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise InternalError(f"{what} is not positive definite") from exc


class LinUCB(BasePolicy):
    """Ridge-regression UCB with confidence scale ``alpha`` and ridge ``lam``."""

    def __init__(self, d: int, alpha: float = 1.0, lam: float = 1.0, score_max: float = 1.0):
        if lam <= 0:
            raise ConfigError("ridge parameter lam must be > 0")
        if alpha < 0:
            raise ConfigError("alpha must be >= 0")
        if score_max <= 0:
            raise ConfigError("score_max must be > 0")
        self.d, self.alpha, self.lam, self.score_max = d, alpha, lam, score_max
        self.reset()

    def reset(self):
        self.gram = self.lam * np.eye(self.d)
        self.moment = np.zeros(self.d)
        self.steps = 0

    @property
    def theta(self) -> np.ndarray:
        L = _cholesky(self.gram, "gram matrix")
        return np.linalg.solve(L.T, np.linalg.solve(L, self.moment))

    def scores(self, actions: np.ndarray) -> np.ndarray:
        L = _cholesky(self.gram, "gram matrix")
        theta = np.linalg.solve(L.T, np.linalg.solve(L, self.moment))
        # ||a||_{V^-1} = ||L^-1 a||
        z = np.linalg.solve(L, actions.T)
        return actions @ theta + self.alpha * np.sqrt(np.sum(z * z, axis=0))

    def act(self, actions, rng=None):
        s = self.scores(np.asarray(actions, dtype=float))
        k = int(np.argmax(s))  # argmax keeps the lowest index on ties
        r_tilde = float(np.clip(s[k] / self.score_max, 0.0, 1.0))
        return one_hot(k, len(s)), r_tilde

    def update(self, action, reward):
        a = np.asarray(action, dtype=float)
        self.gram += np.outer(a, a)
        self.moment += a * reward
        self.steps += 1


class ThompsonSampling(BasePolicy):
    """Gaussian prior N(0, prior_var I) with Gaussian likelihood of variance ``noise_var``."""

    def __init__(self, d: int, noise_var: float = 0.3, prior_var: float = 1.0, score_max: float = 1.0):
        if noise_var <= 0 or prior_var <= 0:
            raise ConfigError("noise_var and prior_var must be > 0")
        if score_max <= 0:
            raise ConfigError("score_max must be > 0")
        self.d, self.noise_var, self.prior_var, self.score_max = d, noise_var, prior_var, score_max
        self.reset()

    def reset(self):
        self.mean = np.zeros(self.d)
        self.cov = self.prior_var * np.eye(self.d)
        self.steps = 0

    def sample_weights(self, rng: np.random.Generator) -> np.ndarray:
        L = _cholesky(self.cov, "posterior covariance")
        return self.mean + L @ rng.standard_normal(self.d)

    def act(self, actions, rng):
        actions = np.asarray(actions, dtype=float)
        w = self.sample_weights(rng)
        k = int(np.argmax(actions @ w))
        a = actions[k]
        r_tilde = a @ self.mean + np.sqrt(max(a @ self.cov @ a, 0.0))
        return one_hot(k, len(actions)), float(np.clip(r_tilde / self.score_max, 0.0, 1.0))

    def update(self, action, reward):
        a = np.asarray(action, dtype=float)
        s = self.cov @ a
        denom = self.noise_var + a @ s
        self.mean = self.mean + s * ((reward - a @ self.mean) / denom)
        cov = self.cov - np.outer(s, s) / denom
        self.cov = 0.5 * (cov + cov.T)
        self.steps += 1


def make_learner(name: str, d: int, **kw) -> BasePolicy:
    if name == "linucb":
        return LinUCB(d, alpha=kw.get("alpha", 1.0), lam=kw.get("lam", 1.0))
    if name == "ts":
        return ThompsonSampling(d, noise_var=kw.get("noise_var", 0.3), prior_var=kw.get("prior_var", 1.0))
    raise ConfigError(f"unknown base learner {name!r}")
