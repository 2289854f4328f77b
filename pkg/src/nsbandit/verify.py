"""Oracle-equivalence and invariant checks run by ``nsbandit verify``."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .base_algs import LinUCB
from .config import RunConfig
from .envs import EnvSpec, PiecewiseElevated, sample_env
from .master import Master, test1, test2
from .nctf.constructions import (Layout, bernoulli_mask_mlp, cdf_attention, cdf_rank_oracle,
                                 scheduler_stack)
from .nctf.layers import forward, operator_norm, policy_softmax
from .nctf.rollout import initial_tokens, nctf_rollout
from .runner import learner_factory, make_streams, run_seed_sequence
from .scheduler import active_orders, rank_grid_source, sigma1, ws


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def tie_free_uniforms(n: int, min_gap: float, rng: np.random.Generator) -> np.ndarray:
    """n points in [0, 1) in random order with every pairwise gap >= min_gap."""
    if (n - 1) * min_gap >= 1:
        raise ValueError("gap too large for the number of points")
    base = np.sort(rng.random(n)) * (1 - (n - 1) * min_gap)
    return rng.permutation(base + min_gap * np.arange(n))


def check_scheduler_invariants(cfg: RunConfig) -> CheckResult:
    rng = np.random.default_rng(1)
    bad = 0
    for _ in range(20):
        masks = sigma1(256, 8, cfg.rho(), rng)
        mat = np.stack([m.mask for m in masks])
        act = active_orders(masks)
        brute = np.array([min(i for i in range(9) if mat[i, t]) for t in range(256)])
        bad += int(np.sum(act != brute)) + int(np.sum(ws(np.ones((256, 1)), masks)[:, :, 0].sum(axis=0) != 1))
    return CheckResult("scheduler invariants", bad == 0, f"{bad} violations over 20 draws")


def check_schedule_rate(cfg: RunConfig) -> CheckResult:
    rng = np.random.default_rng(2)
    rho, n, draws = cfg.rho(), 4, 4000
    hits = np.zeros(n + 1)
    for _ in range(draws):
        for i, m in enumerate(sigma1(2 ** n, n, rho, rng)):
            hits[i] += m.mask[:: m.window].sum()
    worst = 0.0
    for i in range(n):
        p = float(rho(2 ** n)) / float(rho(2 ** i))
        count = draws * 2 ** (n - i)
        worst = max(worst, abs(hits[i] / count - p) / math.sqrt(p * (1 - p) / count))
    return CheckResult("scheduling rate", worst <= 4.0, f"max deviation {worst:.2f} standard errors")


def check_cdf(cfg: RunConfig) -> CheckResult:
    """Deviation from the rank CDF must stay within 1/k and below half a rank
    step, so that ranks are recovered exactly by rounding."""
    k, N = cfg.sharpness_k, 256
    x = tie_free_uniforms(N, 1e-3, np.random.default_rng(3))
    dev = float(np.abs(cdf_attention(x, k) - cdf_rank_oracle(x)).max())
    ok = dev <= 1.0 / k and dev < 0.5 / N
    return CheckResult("cdf accuracy", ok, f"max deviation {dev:.3g} (limits 1/k = {1 / k:.3g}, "
                                           f"half rank step {0.5 / N:.3g})")


def check_bernoulli(cfg: RunConfig) -> CheckResult:
    rng = np.random.default_rng(4)
    worst, n = 0.0, 0
    while n < 200:
        u, ri, rn = rng.random(3)
        if abs(rn - u * ri) < 1e-3:
            continue
        exact = 1.0 if u * ri <= rn else 0.0
        worst = max(worst, abs(bernoulli_mask_mlp(u, ri, rn, cfg.sharpness_k2, cfg.grid_eps) - exact))
        n += 1
    return CheckResult("bernoulli mask mlp", worst <= 1e-6, f"max error {worst:.3g} on 200 inputs")


def check_pipeline(cfg: RunConfig) -> CheckResult:
    rho, bad, worst = cfg.rho(), 0, 0.0
    for seed in range(5):
        for n in range(6):
            rng = np.random.default_rng(100 + seed)
            lay, N = Layout(2, n), 2 ** n
            u = rank_grid_source(n, rng)
            H = initial_tokens(lay, u)
            out = forward(scheduler_stack(lay, rho, k=cfg.sharpness_k, k2=cfg.sharpness_k2, eps=cfg.grid_eps), H)
            keep = ws(np.ones((N, 1)), sigma1(N, n, rho, uniforms=u))[:, :, 0]
            expect = H.copy()
            for i in range(n + 1):
                expect[:, lay.copy_slice(i)] *= keep[i][:, None]
                expect[:, lay.slot(i, "rand")] = keep[i]
            gates = np.stack([out[:, lay.slot(i, "order")] / 2 ** i for i in range(n + 1)])
            err = float(np.abs(out - expect).max())
            worst = max(worst, err)
            bad += int(not (np.array_equal(gates > 0.5, keep > 0.5) and err <= 1e-6))
    return CheckResult("transformer scheduler vs direct WS", bad == 0, f"{bad}/30 mismatching blocks, max error {worst:.3g}")


def _rho_hat_oracle(t, cfg: RunConfig):
    T = cfg.T
    return cfg.threshold_scale * 6 * (math.log2(T) + 1) * math.log(T) * cfg.rho_scale * t ** (-cfg.rho_power)


def check_test1(cfg: RunConfig) -> CheckResult:
    tc = cfg.test_config()
    rng = np.random.default_rng(5)
    bad = 0
    for _ in range(500):
        m = int(rng.integers(0, 8))
        L = 2 ** m
        thr = cfg.test1_mult * _rho_hat_oracle(L, cfg)
        u = rng.random()
        mean = u + thr * rng.uniform(-2, 2)
        expect = mean < u + thr
        bad += int(test1(mean * L, L, u, tc) != expect)
    return CheckResult("test1 oracle", bad == 0, f"{bad}/500 disagreements")


def check_test2(cfg: RunConfig) -> CheckResult:
    tc = cfg.test_config()
    rng = np.random.default_rng(6)
    bad = 0
    for _ in range(500):
        L = int(rng.integers(1, 1000))
        thr = cfg.test2_mult * _rho_hat_oracle(L, cfg)
        mean = thr * rng.uniform(-2, 2)
        bad += int(test2(mean * L, L, tc) != (mean < thr))
    return CheckResult("test2 oracle", bad == 0, f"{bad}/500 disagreements")


def _small_env(seed, T=96):
    spec = EnvSpec(3, 5, T, 0.1, PiecewiseElevated(((30, 60),)))
    env_ss, streams = make_streams(run_seed_sequence(7, seed))
    return sample_env(spec, env_ss), streams


def check_restart_replay(cfg: RunConfig) -> CheckResult:
    import copy

    bad = 0
    tc = replace(cfg.test_config(), horizon=96)
    fac = learner_factory("linucb", 3, scale=4.0)
    for seed in range(5):
        env, st = _small_env(seed)
        t0 = 20 + 11 * seed
        m = Master(env, fac, tc, st, fault_rounds={t0})
        while m.t <= t0:
            m.step()
        snap = copy.deepcopy(m.streams)
        rest = m.run()
        fresh = Master(env, fac, tc, snap, start=t0 + 1).run()
        strip = lambda recs: [{k: v for k, v in asdict(r).items() if k != "regret_cum"} for r in recs]
        bad += int(strip(rest) != strip(fresh))
    return CheckResult("restart replay", bad == 0, f"{bad}/5 replays differ")


def check_rollout(cfg: RunConfig) -> CheckResult:
    bad = 0
    tc = replace(cfg.test_config(), horizon=96)
    fac = learner_factory("linucb", 3, scale=4.0)
    for seed in range(3):
        env, st = _small_env(seed)
        a = nctf_rollout(env, fac, tc, st, k=cfg.sharpness_k, k2=cfg.sharpness_k2, grid_eps=cfg.grid_eps).records
        env, st = _small_env(seed)
        b = Master(env, fac, tc, st, schedule_source=rank_grid_source).run()
        bad += int([asdict(r) for r in a] != [asdict(r) for r in b])
    return CheckResult("transformer rollout vs MASTER", bad == 0, f"{bad}/3 traces differ")


def check_numerics(cfg: RunConfig) -> CheckResult:
    rng = np.random.default_rng(8)
    M = rng.standard_normal((12, 9))
    norm_err = abs(operator_norm(M) - np.linalg.svd(M, compute_uv=False)[0])
    z = rng.standard_normal(7) * 5
    e = np.exp(z - z.max())
    sm_err = float(np.abs(policy_softmax(z) - e / e.sum()).max())
    X = rng.random((40, 4))
    y = rng.random(40)
    lin = LinUCB(4)
    for a, r in zip(X, y):
        lin.update(a, r)
    theta_err = float(np.abs(lin.theta - np.linalg.solve(np.eye(4) + X.T @ X, X.T @ y)).max())
    ok = norm_err <= 1e-6 and sm_err <= 1e-12 and theta_err <= 1e-9
    return CheckResult("numerics (norm, softmax, ridge)", ok,
                       f"norm {norm_err:.2g}, softmax {sm_err:.2g}, ridge {theta_err:.2g}")


def check_rho(cfg: RunConfig) -> CheckResult:
    try:
        cfg.rho().validate(cfg.T)
    except ValueError as exc:
        return CheckResult("rho validity", False, str(exc))
    return CheckResult("rho validity", True, "non-increasing, t*rho(t) non-decreasing")


CHECKS = (check_scheduler_invariants, check_schedule_rate, check_cdf, check_bernoulli, check_pipeline,
          check_test1, check_test2, check_restart_replay, check_rollout, check_numerics, check_rho)


def run_checks(cfg: RunConfig) -> list[CheckResult]:
    out = []
    for check in CHECKS:
        try:
            out.append(check(cfg))
        except Exception as exc:  # a crashing check is a failed check
            out.append(CheckResult(check.__name__.replace("check_", ""), False, f"error: {exc}"))
    return out


def format_table(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  result  detail", "-" * (width + 40)]
    lines += [f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}    {r.detail}" for r in results]
    return "\n".join(lines)
