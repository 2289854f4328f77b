"""MASTER: runs multi-scale blocks of base-learner instances and restarts
from scratch when one of two statistical tests detects drift.

Test 1 fires when a scheduled instance ending at t saw an average reward
clearly above the smallest optimistic estimate U_t of the block.  Test 2
fires when the block-average of (r_tilde - r) is clearly positive, i.e. the
learners' optimism is no longer matched by realized rewards.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .base_algs import select_action
from .envs import EnvInstance, draw_action_set, mean_reward, normalize_reward, sample_reward
from .errors import ConfigError, ContractError
from .records import RunRecord
from .scheduler import MALG, RhoFunction, sigma1, uniform_source


@dataclass(frozen=True)
class TestConfig:
    """Thresholds of the drift tests.  ``horizon`` is the run length T that sets
    the logarithmic inflation of rho."""

    __test__ = False  # keep pytest from collecting this class

    horizon: int
    rho: RhoFunction = field(default_factory=RhoFunction)
    test1_mult: float = 9.0
    test2_mult: float = 3.0
    threshold_scale: float = 1.0
    test1_sign_flip: bool = False  # fault injection for the verification harness

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.threshold_scale <= 0 or self.test1_mult < 0 or self.test2_mult < 0:
            raise ConfigError("test multipliers must be >= 0 and threshold_scale > 0")


def rho_hat(t, cfg: TestConfig) -> float:
    T = cfg.horizon
    return float(cfg.threshold_scale * 6 * (np.log2(T) + 1) * np.log(T) * cfg.rho(t))


def update_u(u_prev: float, r_tilde: float) -> float:
    return min(u_prev, r_tilde)


def test1(window_sum: float, length: int, u_t: float, cfg: TestConfig) -> bool:
    """True if the instance with this window passes (no upward drift detected)."""
    margin = cfg.test1_mult * rho_hat(length, cfg)
    if cfg.test1_sign_flip:
        margin = -margin
    return not (window_sum / length >= u_t + margin)


def test2(diff_sum: float, length: int, cfg: TestConfig) -> bool:
    """True if the block-average optimism gap stays below its threshold."""
    return not (diff_sum / length >= cfg.test2_mult * rho_hat(length, cfg))


test1.__test__ = test2.__test__ = False


@dataclass
class Streams:
    """Independent generators for the environment, the scheduler and the learners."""

    env: np.random.Generator
    sched: np.random.Generator
    learner: np.random.Generator

    @classmethod
    def from_seed_sequence(cls, ss: np.random.SeedSequence) -> "Streams":
        e, s, l = ss.spawn(3)
        return cls(np.random.default_rng(e), np.random.default_rng(s), np.random.default_rng(l))


@dataclass
class RestartEvent:
    t: int
    reason: str  # "test1", "test2", "test1+test2" or "forced"


class Master:
    """Stateful MASTER run.  ``step`` plays one round and returns its record."""

    def __init__(self, env: EnvInstance, learner_factory: Callable, cfg: TestConfig,
                 streams: Streams, start: int = 1, seed: int = 0,
                 schedule_source: Callable = uniform_source, fault_rounds=(),
                 regret_offset: float = 0.0):
        if not 1 <= start <= env.T:
            raise ContractError(f"start round {start} outside [1, {env.T}]")
        cfg.rho.validate(env.T)
        self.env, self.learner_factory, self.cfg = env, learner_factory, cfg
        self.streams, self.seed = streams, seed
        self.schedule_source = schedule_source
        self.fault_rounds = set(fault_rounds)
        self.t = start
        self.regret_cum = regret_offset
        self.restarts: list[RestartEvent] = []
        self._reset_block(0, start)

    def _reset_block(self, n: int, t_n: int):
        self.n, self.t_n = n, t_n
        self.malg = None
        self.u = np.inf
        self.sum_r = 0.0
        self.sum_rt = 0.0

    def _open_block(self):
        length = 2 ** self.n
        uniforms = self.schedule_source(self.n, self.streams.sched)
        self.masks = sigma1(length, self.n, self.cfg.rho, uniforms=uniforms)
        self.malg = MALG(self.masks, self.learner_factory)

    @property
    def done(self):
        return self.t > self.env.T

    def step(self) -> RunRecord:
        if self.done:
            raise ContractError("run already finished")
        if self.malg is None:
            self._open_block()
        t, local = self.t, self.t - self.t_n + 1
        env, st = self.env, self.streams
        actions = draw_action_set(env, t, st.env).vectors
        inst, probs, r_tilde = self.malg.act(local, actions, st.learner)
        k = select_action(probs, st.learner)
        r_raw = sample_reward(env, t, actions[k], st.env)
        r = float(normalize_reward(env, r_raw))
        ending = self.malg.update(local, actions[k], r)

        self.u = update_u(self.u, r_tilde)
        self.sum_r += r
        self.sum_rt += r_tilde
        t1 = all(test1(e.reward_sum, e.length, self.u, self.cfg) for e in ending)
        t2 = test2(self.sum_rt - self.sum_r, local, self.cfg)
        forced = t in self.fault_rounds
        restart = forced or not (t1 and t2)

        means = mean_reward(env, t, actions)
        r_star = float(means.max())
        regret = r_star - float(means[k])
        self.regret_cum += regret
        rec = RunRecord(seed=self.seed, t=t, active_order=inst.order, action=k, reward_raw=r_raw,
                        reward_norm=r, r_tilde=r_tilde, u_t=self.u, r_star=r_star,
                        regret_inst=regret, regret_cum=self.regret_cum, restart=restart,
                        test1=t1, test2=t2, reward_mean=float(means[k]),
                        block_order=self.n, block_start=self.t_n)
        self.t += 1
        if restart:
            reason = "forced" if forced else "+".join(n for n, ok in (("test1", t1), ("test2", t2)) if not ok)
            self.restarts.append(RestartEvent(t, reason))
            self._reset_block(0, t + 1)
        elif local == 2 ** self.n:
            self._reset_block(self.n + 1, t + 1)
        return rec

    def run(self) -> list[RunRecord]:
        out = []
        while not self.done:
            out.append(self.step())
        return out


def master_run(env: EnvInstance, learner_factory: Callable, cfg: TestConfig, streams: Streams,
               seed: int = 0, **kw) -> tuple[list[RunRecord], list[RestartEvent]]:
    m = Master(env, learner_factory, cfg, streams, seed=seed, **kw)
    records = m.run()
    return records, m.restarts
