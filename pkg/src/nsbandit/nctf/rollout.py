"""Block-by-block rollout of MASTER in which scheduling, the test statistics
and restarts are read off the transformer tokens.

Each block builds its N = 2^n tokens, runs the scheduler stack once (the
masks only depend on the block noise), then interacts with the environment
round by round, writing rewards and auxiliary values into the tokens.  When
TEST becomes 0 the remaining tokens are cleared by the test matrix and a new
block with n = 0 starts at the next round.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..base_algs import select_action
from ..envs import EnvInstance, draw_action_set, mean_reward, normalize_reward, sample_reward
from ..errors import InternalError
from ..master import RestartEvent, Streams, TestConfig, rho_hat
from ..records import RunRecord
from ..scheduler import rank_grid_source
from .constructions import Layout, apply_test_matrix, scheduler_stack
from .layers import forward


@dataclass
class BlockTrace:
    t_n: int
    n: int
    tokens: np.ndarray  # tokens after the round loop (cleared past a restart)
    gates: np.ndarray  # (N, n+1) 0/1 selection read from the order markers


@dataclass
class RolloutResult:
    records: list = field(default_factory=list)
    restarts: list = field(default_factory=list)
    blocks: list = field(default_factory=list)


def initial_tokens(lay: Layout, uniforms: list) -> np.ndarray:
    N = 2 ** lay.n
    H = np.zeros((N, lay.D))
    for i in range(lay.n + 1):
        H[:, lay.x(i)] = np.repeat(uniforms[i], 2 ** i)
        H[:, lay.slot(i, "order")] = 2 ** i
    H[:, lay.top] = N
    H[:, lay.time] = np.arange(1, N + 1)
    H[:, lay.u] = 1.0
    return H


class _StackCache:
    def __init__(self, d, rho, **kw):
        self.d, self.rho, self.kw, self.cache = d, rho, kw, {}

    def __call__(self, n):
        if n not in self.cache:
            self.cache[n] = scheduler_stack(Layout(self.d, n), self.rho, **self.kw)
        return self.cache[n]


def nctf_rollout(env: EnvInstance, learner_factory: Callable, cfg: TestConfig, streams: Streams,
                 seed: int = 0, k: float = 1e6, k2: float = 1e6, grid_eps: float = 1e-6,
                 c0: float = 1.0, eps0: float = 0.5, fault_rounds=(), keep_blocks: bool = False) -> RolloutResult:
    cfg.rho.validate(env.T)
    d, T = env.d, env.T
    stacks = _StackCache(d, cfg.rho, k=k, k2=k2, eps=grid_eps, c0=c0, eps0=eps0)
    fault_rounds = set(fault_rounds)
    res = RolloutResult()
    t, n, regret_cum = 1, 0, 0.0
    while t <= T:
        lay, N, t_n = Layout(d, n), 2 ** n, t
        H = initial_tokens(lay, rank_grid_source(n, streams.sched))
        stack = stacks(n)
        masked = forward(stack[:3], H)
        H = stack[3](masked)
        scheduled = np.stack([masked[:, lay.slot(i, "order")] / 2 ** i for i in range(n + 1)], axis=1) > 0.5
        gates = np.stack([H[:, lay.slot(i, "order")] / 2 ** i for i in range(n + 1)], axis=1) > 0.5
        if not np.all(gates.sum(axis=1) == 1):
            raise InternalError("scheduler stack did not select exactly one order per round")
        learners = {}
        win = np.zeros(n + 1)
        u_prev, sum_r, sum_rt = 1.0, 0.0, 0.0
        restarted = False
        for pos in range(1, N + 1):
            if t > T:
                break
            h = H[pos - 1]
            order = int(np.argmax(gates[pos - 1]))
            key = (order, ((pos - 1) // 2 ** order) * 2 ** order + 1)
            if key not in learners:
                learners[key] = learner_factory()
            learner = learners[key]
            actions = draw_action_set(env, t, streams.env).vectors
            probs, r_tilde = learner.act(actions, streams.learner)
            a = select_action(probs, streams.learner)
            r_raw = sample_reward(env, t, actions[a], streams.env)
            r = float(normalize_reward(env, r_raw))
            learner.update(actions[a], r)

            # write the interaction into the token
            for i in range(n + 1):
                if (pos - 1) % 2 ** i == 0:
                    win[i] = 0.0
                win[i] += r
                h[lay.slot(i, "window")] = win[i]
                h[lay.slot(i, "aux")] = r_tilde if i == order else 0.0
                h[lay.x(i, 1):lay.x(i, d)] = actions[a][: d - 1]
            aux = np.array([h[lay.slot(i, "aux")] for i in range(n + 1)])
            for i in range(n + 1):
                h[lay.slot(i, "prefix")] = aux[:i].sum()
            h[lay.u] = u_prev
            u_t = min(u_prev, r_tilde)
            sum_r += r
            sum_rt += r_tilde
            h[lay.sum_r], h[lay.sum_rt] = sum_r, sum_rt

            t1 = True
            for i in range(n + 1):
                if pos % 2 ** i == 0 and scheduled[pos - 1, i]:
                    margin = cfg.test1_mult * rho_hat(2 ** i, cfg)
                    if cfg.test1_sign_flip:
                        margin = -margin
                    if h[lay.slot(i, "window")] / 2 ** i >= u_t + margin:
                        t1 = False
            t2 = not ((sum_rt - sum_r) / pos >= cfg.test2_mult * rho_hat(pos, cfg))
            forced = t in fault_rounds
            test = 0 if (forced or not (t1 and t2)) else 1

            means = mean_reward(env, t, actions)
            r_star = float(means.max())
            regret_cum += r_star - float(means[a])
            res.records.append(RunRecord(
                seed=seed, t=t, active_order=order, action=a, reward_raw=r_raw, reward_norm=r,
                r_tilde=r_tilde, u_t=u_t, r_star=r_star, regret_inst=r_star - float(means[a]),
                regret_cum=regret_cum, restart=test == 0, test1=t1, test2=t2,
                reward_mean=float(means[a]), block_order=n, block_start=t_n))
            u_prev = u_t
            t += 1
            if test == 0:
                H[pos:] = apply_test_matrix(H[pos:], 0, lay)
                reason = "forced" if forced else "+".join(s for s, ok in (("test1", t1), ("test2", t2)) if not ok)
                res.restarts.append(RestartEvent(t - 1, reason))
                restarted = True
                break
        if keep_blocks:
            res.blocks.append(BlockTrace(t_n, n, H, gates.astype(int)))
        n = 0 if restarted else n + 1
    return res

