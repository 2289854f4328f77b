"""Single-run drivers for every supported algorithm."""
from __future__ import annotations

from functools import partial

import numpy as np

from .base_algs import BasePolicy, make_learner, select_action
from .envs import EnvInstance, draw_action_set, mean_reward, normalize_reward, reward_scale, sample_reward
from .errors import ConfigError
from .master import Master, Streams, TestConfig
from .records import RunRecord
from .scheduler import MALG, sliding_window_equivalence

ALGORITHMS = ("linucb", "ts", "master+linucb", "master+ts", "nctf+linucb", "sliding-window+linucb")


def run_seed_sequence(master_seed: int, run_index: int) -> np.random.SeedSequence:
    """Stable per-run entropy derived from the master seed and the run index."""
    return np.random.SeedSequence([int(master_seed), int(run_index)])


def make_streams(ss: np.random.SeedSequence):
    """(environment-instance seed, Streams) for one run."""
    env_ss, rest = ss.spawn(2)
    return env_ss, Streams.from_seed_sequence(rest)


def _record(seed, t, order, k, r_raw, r, r_tilde, u, means, regret_cum, **kw):
    r_star = float(means.max())
    return RunRecord(seed=seed, t=t, active_order=order, action=k, reward_raw=r_raw, reward_norm=r,
                     r_tilde=r_tilde, u_t=u, r_star=r_star, regret_inst=r_star - float(means[k]),
                     regret_cum=regret_cum + r_star - float(means[k]), reward_mean=float(means[k]), **kw)


def run_policy(env: EnvInstance, learner: BasePolicy, streams: Streams, seed: int = 0) -> list[RunRecord]:
    """Plain base learner over the whole horizon."""
    out, cum, u = [], 0.0, np.inf
    for t in range(1, env.T + 1):
        actions = draw_action_set(env, t, streams.env).vectors
        probs, r_tilde = learner.act(actions, streams.learner)
        k = select_action(probs, streams.learner)
        r_raw = sample_reward(env, t, actions[k], streams.env)
        r = float(normalize_reward(env, r_raw))
        learner.update(actions[k], r)
        u = min(u, r_tilde)
        rec = _record(seed, t, 0, k, r_raw, r, r_tilde, u, mean_reward(env, t, actions), cum)
        cum = rec.regret_cum
        out.append(rec)
    return out


def run_sliding_window(env: EnvInstance, learner_factory, streams: Streams, window: int,
                       seed: int = 0) -> list[RunRecord]:
    """Back-to-back fresh learners on windows of length ``window`` (a one-order schedule)."""
    malg = MALG(sliding_window_equivalence(window, env.T), learner_factory)
    out, cum, u = [], 0.0, np.inf
    for t in range(1, env.T + 1):
        actions = draw_action_set(env, t, streams.env).vectors
        inst, probs, r_tilde = malg.act(t, actions, streams.learner)
        k = select_action(probs, streams.learner)
        r_raw = sample_reward(env, t, actions[k], streams.env)
        r = float(normalize_reward(env, r_raw))
        malg.update(t, actions[k], r)
        u = r_tilde if inst.start == t else min(u, r_tilde)
        rec = _record(seed, t, inst.order, k, r_raw, r, r_tilde, u, mean_reward(env, t, actions), cum,
                      block_start=inst.start)
        cum = rec.regret_cum
        out.append(rec)
    return out


def learner_factory(name: str, d: int, alpha=1.0, lam=1.0, noise_var=0.3, prior_var=1.0, scale=1.0):
    """Factory of fresh learners.  ``alpha``, ``noise_var`` and ``prior_var`` are
    given on the raw reward scale; learners see rewards divided by ``scale``, so
    the same decisions are obtained with alpha/scale and variances/scale^2."""
    return partial(make_learner, name, d, alpha=alpha / scale, lam=lam,
                   noise_var=noise_var / scale ** 2, prior_var=prior_var / scale ** 2)


def run_algorithm(algorithm: str, env: EnvInstance, streams: Streams, test_cfg: TestConfig | None = None,
                  seed: int = 0, window: int = 64, learner_kw: dict | None = None,
                  nctf_kw: dict | None = None) -> list[RunRecord]:
    learner_kw = learner_kw or {}
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {algorithm!r}")
    base = algorithm.split("+")[-1]
    factory = learner_factory(base, env.d, scale=reward_scale(env), **learner_kw)
    if algorithm in ("linucb", "ts"):
        return run_policy(env, factory(), streams, seed)
    if algorithm == "sliding-window+linucb":
        return run_sliding_window(env, factory, streams, window, seed)
    if test_cfg is None:
        test_cfg = TestConfig(horizon=env.T)
    if algorithm.startswith("master+"):
        return Master(env, factory, test_cfg, streams, seed=seed).run()
    from .nctf.rollout import nctf_rollout

    return nctf_rollout(env, factory, test_cfg, streams, seed=seed, **(nctf_kw or {})).records
