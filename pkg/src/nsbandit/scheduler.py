"""Multi-scale scheduling of base-learner instances.

A block of length 2^n hosts instances of orders 0..n.  An order-i instance
covers an aligned window of 2^i rounds and is scheduled independently with
probability rho(2^n) / rho(2^i) (``sigma1``).  At each round the scheduled
instance of lowest order is the active one (``sigma2``).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, ContractError


@dataclass(frozen=True)
class RhoFunction:
    """rho(t) = scale * t^(-power), or an arbitrary callable ``fn``."""

    scale: float = 1.0
    power: float = 0.5
    fn: Optional[Callable[[float], float]] = None

    def __call__(self, t):
        if self.fn is not None:
            return self.fn(t)
        return self.scale * np.asarray(t, dtype=float) ** (-self.power)

    def validate(self, horizon: int):
        """rho must be positive and non-increasing, and t*rho(t) non-decreasing."""
        ts = np.unique(np.concatenate([np.arange(1, min(horizon, 4096) + 1),
                                       2.0 ** np.arange(0, int(np.ceil(np.log2(max(horizon, 1)))) + 1)]))
        vals = np.array([float(self(t)) for t in ts])
        tol = 1e-12 * np.abs(vals).max(initial=1.0)
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise ConfigError("rho must be positive and finite")
        if np.any(np.diff(vals) > tol):
            raise ConfigError("rho must be non-increasing")
        if np.any(np.diff(ts * vals) < -tol * ts[1:]):
            raise ConfigError("t * rho(t) must be non-decreasing")


@dataclass
class ScheduleMask:
    order: int
    window: int
    prob: float
    mask: np.ndarray  # bool, one entry per round of the block

    def block_starts(self):
        return np.arange(1, len(self.mask) + 1, self.window)


@dataclass
class InstanceRecord:
    """A scheduled base-learner instance covering rounds [start, end] (block-local)."""

    order: int
    start: int
    end: int
    learner: object = None
    reward_sum: float = 0.0
    rounds_seen: int = 0

    @property
    def length(self):
        return self.end - self.start + 1


def schedule_probs(n: int, rho: RhoFunction) -> np.ndarray:
    return np.array([float(rho(2 ** n)) / float(rho(2 ** i)) for i in range(n + 1)])


def uniform_source(n: int, rng: np.random.Generator) -> list[np.ndarray]:
    """One U[0,1) draw per aligned block of every order."""
    return [rng.random(2 ** (n - i)) for i in range(n + 1)]


def rank_grid_source(n: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Per order, the block values (pi + 1/2) / B for a random permutation pi of
    range(B).  Tie-free uniforms on a grid; shared with the transformer rollout."""
    out = []
    for i in range(n + 1):
        b = 2 ** (n - i)
        out.append((rng.permutation(b) + 0.5) / b)
    return out


def sigma1(T: int, n: int, rho: RhoFunction, rng: np.random.Generator | None = None,
           uniforms: list | None = None) -> list[ScheduleMask]:
    """Bernoulli block masks for orders 0..n over the first T rounds of a block of length 2^n."""
    if n < 0 or 2 ** n < T:
        raise ContractError(f"need 2^n >= T, got n={n}, T={T}")
    if uniforms is None:
        if rng is None:
            raise ContractError("sigma1 needs either rng or uniforms")
        uniforms = uniform_source(n, rng)
    probs = schedule_probs(n, rho)
    masks = []
    for i in range(n + 1):
        u = np.asarray(uniforms[i])
        if len(u) != 2 ** (n - i):
            raise ContractError(f"order {i} needs {2 ** (n - i)} uniforms, got {len(u)}")
        keep = u <= probs[i] if i < n else np.ones(1, dtype=bool)
        masks.append(ScheduleMask(i, 2 ** i, float(probs[i]), np.repeat(keep, 2 ** i)[:T]))
    return masks


def scheduled_matrix(masks: list[ScheduleMask]) -> np.ndarray:
    return np.stack([m.mask for m in masks])


def active_orders(masks: list[ScheduleMask]) -> np.ndarray:
    """Lowest scheduled order at every round (0-based positions of ``masks``)."""
    mat = scheduled_matrix(masks)
    if not np.all(mat.any(axis=0)):
        raise ContractError("a round has no scheduled order")
    return np.argmax(mat, axis=0)


def sigma2(masks, t: int) -> int:
    """Order index of the lowest scheduled instance at block-local round t."""
    col = np.asarray([m.mask[t - 1] for m in masks]) if isinstance(masks, list) else np.asarray(masks)[:, t - 1]
    hits = np.flatnonzero(col)
    if len(hits) == 0:
        raise ContractError(f"no order scheduled at round {t}")
    return int(hits[0])


def ws(trajectory: np.ndarray, masks: list[ScheduleMask]) -> np.ndarray:
    """Split a (rounds, width) trajectory into per-order copies, zero outside
    the scheduled windows, and keep only the lowest scheduled copy per round."""
    traj = np.asarray(trajectory, dtype=float)
    mat = scheduled_matrix(masks)[:, : len(traj)]
    copies = mat[:, :, None] * traj[None, :, :]
    keep = np.zeros_like(mat)
    keep[active_orders(masks)[: len(traj)], np.arange(len(traj))] = True
    return copies * keep[:, :, None]


def scheduled_instances(masks: list[ScheduleMask]) -> list[InstanceRecord]:
    # windows keep their nominal end even when the block is cut short by the horizon
    out = []
    for m in masks:
        for s in m.block_starts():
            if m.mask[s - 1]:
                out.append(InstanceRecord(m.order, int(s), int(s + m.window - 1)))
    return out


def sliding_window_equivalence(W: int, T: int) -> list[ScheduleMask]:
    """A single always-on order whose windows are the back-to-back length-W blocks."""
    if W < 1 or T % W != 0:
        raise ConfigError(f"window W={W} must divide T={T}")
    return [ScheduleMask(0, W, 1.0, np.ones(T, dtype=bool))]


class MALG:
    """Runs the instances of one block.  ``t`` is the block-local round (1-based)."""

    def __init__(self, masks: list[ScheduleMask], learner_factory: Callable):
        self.masks = masks
        self.learner_factory = learner_factory
        self.length = len(masks[0].mask)
        self.instances = {}
        for rec in scheduled_instances(masks):
            rec.learner = learner_factory()
            self.instances[(rec.order, rec.start)] = rec
        self._active = active_orders(masks)

    def _instance_at(self, pos: int, t: int) -> InstanceRecord:
        m = self.masks[pos]
        start = ((t - 1) // m.window) * m.window + 1
        return self.instances[(m.order, start)]

    def active(self, t: int) -> InstanceRecord:
        if not 1 <= t <= self.length:
            raise ContractError(f"round {t} outside block of length {self.length}")
        return self._instance_at(int(self._active[t - 1]), t)

    def live(self, t: int) -> list[InstanceRecord]:
        return [self._instance_at(p, t) for p, m in enumerate(self.masks) if m.mask[t - 1]]

    def act(self, t: int, actions: np.ndarray, rng: np.random.Generator):
        inst = self.active(t)
        probs, r_tilde = inst.learner.act(actions, rng)
        return inst, probs, r_tilde

    def update(self, t: int, action: np.ndarray, reward: float) -> list[InstanceRecord]:
        """Feed the active instance and credit the reward to every live instance.
        Returns the scheduled instances whose window ends at t."""
        self.active(t).learner.update(action, reward)
        ending = []
        for inst in self.live(t):
            inst.reward_sum += reward
            inst.rounds_seen += 1
            if inst.end == t:
                ending.append(inst)
        return ending


def malg_step(malg: MALG, t: int, actions: np.ndarray, rng: np.random.Generator, reward_fn: Callable):
    """One round of a block: the active instance acts, ``reward_fn(action_index)``
    supplies the reward, and state is updated.  Returns (instance, action index,
    r_tilde, reward, instances ending at t)."""
    from .base_algs import select_action

    inst, probs, r_tilde = malg.act(t, actions, rng)
    k = select_action(probs, rng)
    r = reward_fn(k)
    ending = malg.update(t, actions[k], r)
    return inst, k, r_tilde, r, ending
