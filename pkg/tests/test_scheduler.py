import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsbandit.base_algs import LinUCB
from nsbandit.errors import ConfigError, ContractError
from nsbandit.scheduler import (MALG, RhoFunction, active_orders, malg_step, rank_grid_source, schedule_probs,
                                scheduled_instances, scheduled_matrix, sigma1, sigma2,
                                sliding_window_equivalence, uniform_source, ws)

RHO = RhoFunction()


def test_schedule_probs_values():
    p = schedule_probs(4, RHO)
    np.testing.assert_allclose(p, [0.25, 0.25 * np.sqrt(2), 0.5, 0.5 * np.sqrt(2), 1.0])


def test_top_order_always_scheduled(rng):
    for _ in range(20):
        masks = sigma1(16, 4, RHO, rng)
        assert masks[-1].mask.all()


def test_masks_constant_on_windows(rng):
    masks = sigma1(64, 6, RHO, rng)
    for m in masks:
        blocks = m.mask.reshape(-1, m.window)
        assert np.all(blocks == blocks[:, :1])


def test_sigma1_uses_uniforms_threshold():
    u = [np.array([0.1, 0.9]), np.array([0.5])]
    masks = sigma1(2, 1, RHO, uniforms=u)
    p0 = 1 / np.sqrt(2)
    assert masks[0].prob == pytest.approx(p0)
    assert list(masks[0].mask) == [True, False]
    assert list(masks[1].mask) == [True, True]


def test_sigma1_truncates_to_T(rng):
    masks = sigma1(5, 3, RHO, rng)
    assert all(len(m.mask) == 5 for m in masks)
    with pytest.raises(ContractError):
        sigma1(9, 3, RHO, rng)
    with pytest.raises(ContractError):
        sigma1(4, 2, RHO)


def test_sigma2_matches_active_orders(rng):
    masks = sigma1(32, 5, RHO, rng)
    act = active_orders(masks)
    assert [sigma2(masks, t) for t in range(1, 33)] == list(act)
    assert sigma2(scheduled_matrix(masks), 3) == act[2]


def test_ws_shapes_and_selection(rng):
    masks = sigma1(16, 4, RHO, rng)
    traj = rng.random((16, 3))
    out = ws(traj, masks)
    assert out.shape == (5, 16, 3)
    act = active_orders(masks)
    for t in range(16):
        np.testing.assert_array_equal(out[act[t], t], traj[t])
        assert np.count_nonzero(np.abs(out[:, t]).sum(axis=1)) == 1


def test_rank_grid_source_is_tie_free(rng):
    u = rank_grid_source(5, rng)
    for i, v in enumerate(u):
        B = 2 ** (5 - i)
        assert len(v) == B
        np.testing.assert_allclose(np.sort(v), (np.arange(B) + 0.5) / B)


def test_scheduled_rate_with_grid_source(rng):
    """With the grid source, exactly floor(p B + 1/2) windows of order i are on."""
    n = 6
    p = schedule_probs(n, RHO)
    masks = sigma1(2 ** n, n, RHO, uniforms=rank_grid_source(n, rng))
    for i in range(n):
        B = 2 ** (n - i)
        assert masks[i].mask[:: 2 ** i].sum() == int(np.floor(p[i] * B + 0.5))


def test_rho_validation():
    RhoFunction().validate(1000)
    RhoFunction(power=0.0).validate(1000)
    with pytest.raises(ConfigError):
        RhoFunction(power=1.5).validate(100)  # t * rho(t) decreasing
    with pytest.raises(ConfigError):
        RhoFunction(fn=lambda t: float(t)).validate(100)  # increasing
    with pytest.raises(ConfigError):
        RhoFunction(fn=lambda t: -1.0).validate(10)


def test_sliding_window_equivalence():
    masks = sliding_window_equivalence(4, 12)
    inst = scheduled_instances(masks)
    assert [(r.start, r.end) for r in inst] == [(1, 4), (5, 8), (9, 12)]
    with pytest.raises(ConfigError):
        sliding_window_equivalence(5, 12)


def test_malg_credits_live_instances(rng):
    masks = sigma1(8, 3, RHO, uniforms=[np.zeros(8), np.zeros(4), np.zeros(2), np.zeros(1)])
    malg = MALG(masks, lambda: LinUCB(2))
    total = 0.0
    for t in range(1, 9):
        inst, k, rt, r, ending = malg_step(malg, t, rng.random((3, 2)), rng, lambda k: 1.0)
        assert inst.order == 0
        total += r
        assert all(e.end == t for e in ending)
        assert {e.order for e in ending} == {i for i in range(4) if t % 2 ** i == 0}
    top = malg.instances[(3, 1)]
    assert top.reward_sum == total and top.rounds_seen == 8
    assert top.learner.steps == 0  # only the active order-0 instances learned


def test_malg_learners_are_separate(rng):
    masks = sigma1(4, 2, RHO, uniforms=[np.zeros(4), np.ones(2), np.ones(1)])
    malg = MALG(masks, lambda: LinUCB(2))
    for t in range(1, 5):
        malg_step(malg, t, rng.random((3, 2)), rng, lambda k: 0.5)
    steps = [malg.instances[(0, s)].learner.steps for s in range(1, 5)]
    assert steps == [1, 1, 1, 1]


@settings(max_examples=60, deadline=None)
@given(n=st.integers(0, 8), seed=st.integers(0, 2 ** 31), power=st.floats(0.0, 1.0))
def test_exactly_one_active_and_lowest(n, seed, power):
    rho = RhoFunction(power=power)
    g = np.random.default_rng(seed)
    T = int(g.integers(2 ** (n - 1) if n else 1, 2 ** n + 1))
    masks = sigma1(T, n, rho, g)
    mat = scheduled_matrix(masks)
    act = active_orders(masks)
    for t in range(T):
        assert act[t] == min(i for i in range(n + 1) if mat[i, t])
    sel = ws(np.ones((T, 1)), masks)[:, :, 0]
    assert np.all(sel.sum(axis=0) == 1)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(0, 7), seed=st.integers(0, 2 ** 31))
def test_active_instance_is_scheduled(n, seed):
    g = np.random.default_rng(seed)
    masks = sigma1(2 ** n, n, RHO, uniforms=uniform_source(n, g))
    malg = MALG(masks, lambda: None)
    for t in range(1, 2 ** n + 1):
        inst = malg.active(t)
        assert inst.start <= t <= inst.end
        assert inst in malg.live(t)
        assert all(inst.order <= other.order for other in malg.live(t))
