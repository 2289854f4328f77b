from dataclasses import asdict

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import linucb_factory, small_env
from nsbandit.bench import slope_fit
from nsbandit.envs import Stationary
from nsbandit.errors import ConfigError, ContractError
from nsbandit.master import Master, TestConfig
from nsbandit.nctf.constructions import (Layout, apply_test_matrix, bernoulli_mask_mlp, block_mask_layer,
                                         cdf_attention, cdf_rank_oracle, product_mlp, relu_indicator,
                                         scheduler_stack, sigma2_layer, test_matrix_diag)
from nsbandit.nctf.layers import (AttentionLayer, Head, MLPLayer, TransformerLayer, forward, operator_norm,
                                  policy_softmax, theta_norm)
from nsbandit.nctf.rollout import initial_tokens, nctf_rollout
from nsbandit.scheduler import RhoFunction, rank_grid_source, sigma1, ws
from nsbandit.verify import tie_free_uniforms

RHO = RhoFunction()


def loop_attention(H, heads, causal=True):
    N = H.shape[0]
    out = H.copy()
    for i in range(N):
        js = range(i + 1) if causal else range(N)
        norm = (i + 1) if causal else N
        for h in heads:
            acc = np.zeros(H.shape[1])
            for j in js:
                acc += max(0.0, (h.Q @ H[i]) @ (h.K @ H[j])) * (h.V @ H[j])
            out[i] += acc / norm
    return out


@pytest.mark.parametrize("causal", [True, False])
def test_attention_matches_loop(rng, causal):
    D, N = 5, 7
    heads = [Head(rng.standard_normal((D, D)), rng.standard_normal((D, D)), rng.standard_normal((D, D)))
             for _ in range(3)]
    H = rng.standard_normal((N, D))
    np.testing.assert_allclose(AttentionLayer(heads, causal)(H), loop_attention(H, heads, causal), atol=1e-10)


def test_mlp_residual(rng):
    W1, W2, H = rng.standard_normal((6, 4)), rng.standard_normal((4, 6)), rng.standard_normal((3, 4))
    expect = np.array([h + W2 @ np.maximum(W1 @ h, 0) for h in H])
    np.testing.assert_allclose(MLPLayer(W1, W2)(H), expect)


def test_theta_norm_examples(rng):
    D, M = 4, 3
    eye = np.eye(D)
    layer = TransformerLayer(AttentionLayer([Head(eye, eye, eye) for _ in range(M)]), MLPLayer(eye, eye))
    assert theta_norm([layer]) == pytest.approx(1 + M + 2)
    zero = np.zeros((D, D))
    assert theta_norm([TransformerLayer(AttentionLayer([Head(zero, zero, zero)]), MLPLayer(zero, zero))]) == 0
    mats = [rng.standard_normal((D, D)) for _ in range(5)]
    layer = TransformerLayer(AttentionLayer([Head(*mats[:3])]), MLPLayer(mats[3], mats[4]))
    sv = [np.linalg.svd(m, compute_uv=False)[0] for m in mats]
    assert theta_norm([layer]) == pytest.approx(max(sv[0], sv[1]) + sv[2] + sv[3] + sv[4], abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31), r=st.integers(1, 12), c=st.integers(1, 12))
def test_operator_norm_vs_svd(seed, r, c):
    M = np.random.default_rng(seed).standard_normal((r, c))
    assert operator_norm(M) == pytest.approx(np.linalg.svd(M, compute_uv=False)[0], abs=1e-6)


def test_policy_softmax(rng):
    np.testing.assert_allclose(policy_softmax(np.zeros(4)), np.full(4, 0.25))
    p = policy_softmax(np.array([0.0, 1e4, 0.0]))
    assert p[1] == pytest.approx(1.0)
    z = rng.standard_normal(9) * 3
    e = np.exp(z - z.max())
    np.testing.assert_allclose(policy_softmax(z), e / e.sum(), atol=1e-12)


def test_relu_indicator():
    k = 100.0
    assert relu_indicator(-0.5, k) == 0
    assert relu_indicator(1 / (2 * k), k) == pytest.approx(0.5)
    assert relu_indicator(2 / k, k) == 1
    xs = np.linspace(-1, 1, 4001)
    err = np.abs(relu_indicator(xs, k) - (xs > 0))
    outside = (xs <= 0) | (xs > 1 / k)
    assert not err[outside].any() and err.max() <= 1


def test_cdf_examples():
    x = np.array([0.3, 0.9, 0.1, 0.5])
    out = cdf_attention(x, 1e6)
    np.testing.assert_allclose(out, [0.25, 0.75, 0.0, 0.5])
    assert out[np.argmax(x)] == pytest.approx(1 - 1 / len(x))  # fraction strictly below the maximum
    assert not cdf_attention(np.full(5, 0.4), 1e6).any()
    with pytest.raises(ContractError):
        cdf_attention(np.zeros((2, 2)), 10)


@pytest.mark.parametrize("k", [1e3, 1e6])
def test_cdf_within_ramp_bound(k):
    x = tie_free_uniforms(256, 1e-3, np.random.default_rng(1))
    assert np.abs(cdf_attention(x, k) - cdf_rank_oracle(x)).max() <= 1 / k + 1e-9


def test_tie_free_uniforms(rng):
    x = tie_free_uniforms(100, 1e-3, rng)
    assert np.diff(np.sort(x)).min() >= 1e-3 - 1e-15
    assert x.min() >= 0 and x.max() < 1


@settings(max_examples=50, deadline=None)
@given(x=st.floats(0, 1), y=st.floats(0, 1))
def test_product_mlp_accuracy(x, y):
    eps = 1e-4
    e = np.eye(5)
    layer = product_mlp(5, [(e[0], e[1], e[2], 4)], e[3], eps)
    h = layer(np.array([[x, y, 0.7, 1.0, 3.0]]))[0]
    assert h[4] == pytest.approx(0.7 - x * y, abs=eps)
    np.testing.assert_array_equal(h[:4], [x, y, 0.7, 1.0])


def test_bernoulli_mask_examples():
    assert bernoulli_mask_mlp(0.0, 0.8, 0.3) == pytest.approx(1.0)
    assert bernoulli_mask_mlp(1.0, 1.0, 0.25) == pytest.approx(0.0)
    with pytest.raises(ContractError):
        bernoulli_mask_mlp(1.2, 0.5, 0.5)


def test_bernoulli_mask_sweep():
    g = np.random.default_rng(7)
    eps, k2, n = 1e-6, 1e6, 0
    while n < 1000:
        u, ri, rn = g.random(3)
        if abs(rn - u * ri) < 2 * eps + 1 / k2:
            continue
        assert bernoulli_mask_mlp(u, ri, rn, k2, eps) == pytest.approx(float(u * ri <= rn), abs=1e-9)
        n += 1


def _stack_tokens(n, seed, d=2):
    lay = Layout(d, n)
    u = rank_grid_source(n, np.random.default_rng(seed))
    return lay, u, initial_tokens(lay, u)


def test_block_mask_edge_cases():
    lay = Layout(2, 3)
    H = initial_tokens(lay, rank_grid_source(3, np.random.default_rng(0)))
    for i in range(lay.n + 1):
        H[:, lay.slot(i, "rand")] = 1.0
    out = block_mask_layer(lay)(H)
    np.testing.assert_allclose(out, H, atol=1e-9)
    for i in range(lay.n):
        H[:, lay.slot(i, "rand")] = 0.0
    out = block_mask_layer(lay)(H)
    for i in range(lay.n):
        assert np.abs(out[:, lay.copy_slice(i)]).max() < 1e-9
    np.testing.assert_allclose(out[:, lay.copy_slice(lay.n)], H[:, lay.copy_slice(lay.n)])


def test_sigma2_keeps_lowest_copy():
    lay = Layout(1, 3)
    H = initial_tokens(lay, rank_grid_source(3, np.random.default_rng(0)))
    H[:, lay.copy_slice(0)] = 0
    H[:, lay.copy_slice(2)] = 0  # copies {1, 3} present
    out = sigma2_layer(lay)(H)
    np.testing.assert_allclose(out[:, lay.copy_slice(1)], H[:, lay.copy_slice(1)], atol=1e-9)
    assert np.abs(out[:, lay.copy_slice(3)]).max() < 1e-9
    with pytest.raises(ConfigError):
        sigma2_layer(lay, c0=0.5, eps0=0.5)


@pytest.mark.parametrize("n", range(0, 5))
def test_pipeline_matches_ws(n):
    for seed in range(10):
        lay, u, H = _stack_tokens(n, seed)
        out = forward(scheduler_stack(lay, RHO), H)
        keep = ws(np.ones((2 ** n, 1)), sigma1(2 ** n, n, RHO, uniforms=u))[:, :, 0]
        gates = np.stack([out[:, lay.slot(i, "order")] / 2 ** i for i in range(n + 1)])
        assert np.array_equal(gates > 0.5, keep > 0.5)
        for i in range(n + 1):
            np.testing.assert_allclose(out[:, lay.x(i)], H[:, lay.x(i)] * keep[i], atol=1e-6)


def test_test_matrix():
    lay = Layout(2, 1)
    g = np.random.default_rng(0)
    H = g.random((3, lay.D))
    np.testing.assert_array_equal(apply_test_matrix(H, 1, lay), H)
    cleared = apply_test_matrix(H, 0, lay)
    np.testing.assert_array_equal(cleared, H @ np.diag(test_matrix_diag(lay, 0)))
    for i in range(2):
        for name in ("window", "rand", "prefix", "aux"):
            assert not cleared[:, lay.slot(i, name)].any()
        np.testing.assert_array_equal(cleared[:, lay.slot(i, "order")], H[:, lay.slot(i, "order")])
    np.testing.assert_array_equal(cleared[:, [lay.top, lay.time]], H[:, [lay.top, lay.time]])
    assert not cleared[:, [lay.sum_r, lay.sum_rt, lay.u]].any()
    assert set(np.unique(test_matrix_diag(lay, 0))) == {0.0, 1.0}
    with pytest.raises(ContractError):
        apply_test_matrix(H, 0.5, lay)


def test_norm_scaling_in_T():
    """The positional gating layers carry the T dependence; the sharpness layers
    are constant in T.  Log-log slope over T must stay within 0.6."""
    Ts, pos, full = [], [], []
    for n in range(2, 8):
        stack = scheduler_stack(Layout(2, n), RHO)
        Ts.append(2 ** n)
        pos.append(theta_norm(stack[2:]))
        full.append(theta_norm(stack))
    assert np.all(np.diff(pos) > 0)
    assert np.all(np.diff(full) >= -1e-9 * full[0])
    assert slope_fit(Ts, pos).slope <= 0.6
    assert slope_fit(Ts, full).slope <= 0.6


def test_hidden_width_scales_with_grid():
    widths = {eps: scheduler_stack(Layout(2, 4), RHO, eps=eps)[0].mlp.hidden for eps in (1e-4, 1e-6)}
    assert widths[1e-6] / widths[1e-4] == pytest.approx(10, rel=0.05)


def test_rollout_matches_master_forced_pass():
    for seed in range(3):
        env, st1 = small_env(seed, T=64, variant=Stationary())
        cfg = TestConfig(horizon=64)
        a = nctf_rollout(env, linucb_factory(env), cfg, st1, keep_blocks=True)
        env, st2 = small_env(seed, T=64, variant=Stationary())
        b = Master(env, linucb_factory(env), cfg, st2, schedule_source=rank_grid_source).run()
        assert [asdict(r) for r in a.records] == [asdict(r) for r in b]
        assert len(a.records) == 64


def test_rollout_matches_master_with_restarts():
    cfg = TestConfig(horizon=96, threshold_scale=1 / 850, test1_mult=2.0)
    total = 0
    for seed in range(3):
        env, st1 = small_env(seed)
        a = nctf_rollout(env, linucb_factory(env), cfg, st1, fault_rounds={17})
        env, st2 = small_env(seed)
        m = Master(env, linucb_factory(env), cfg, st2, schedule_source=rank_grid_source, fault_rounds={17})
        b = m.run()
        assert [asdict(r) for r in a.records] == [asdict(r) for r in b]
        assert [(e.t, e.reason) for e in a.restarts] == [(e.t, e.reason) for e in m.restarts]
        total += len(a.restarts)
    assert total > 3


def test_rollout_clears_tokens_after_forced_test():
    env, st_ = small_env(0, T=64, variant=Stationary())
    res = nctf_rollout(env, linucb_factory(env), TestConfig(horizon=64), st_, fault_rounds={21},
                       keep_blocks=True)
    blk = next(b for b in res.blocks if b.t_n <= 21 < b.t_n + 2 ** b.n)
    lay = Layout(env.d, blk.n)
    after = blk.tokens[21 - blk.t_n + 1:]
    assert len(after) > 0
    for i in range(blk.n + 1):
        for name in ("window", "rand", "prefix", "aux"):
            assert not after[:, lay.slot(i, name)].any()
    assert not after[:, [lay.sum_r, lay.sum_rt, lay.u]].any()
