import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import linucb_factory, small_env
from nsbandit.bench import (AggregateCurve, DeterministicToy, aggregate, distribution_ratio_estimate,
                            dynamic_regret, enumerate_distribution_ratio, optimism_report, read_csv,
                            slope_fit, softmax_policy, write_csv)
from nsbandit.errors import ContractError
from nsbandit.master import TestConfig, master_run
from nsbandit.records import AGGREGATE_COLUMNS, RUN_COLUMNS, RunRecord
from nsbandit.scheduler import RhoFunction


def rec(t, r_star=1.0, mean=0.5, seed=0, **kw):
    base = dict(seed=seed, t=t, active_order=0, action=0, reward_raw=mean, reward_norm=mean, r_tilde=1.0,
                u_t=1.0, r_star=r_star, regret_inst=r_star - mean, regret_cum=t * (r_star - mean),
                restart=False, test1=True, test2=True, reward_mean=mean)
    base.update(kw)
    return RunRecord(**base)


def test_dynamic_regret_hand_computed():
    records = [rec(1, 1.0, 0.5), rec(2, 2.0, 2.0), rec(3, 0.7, 0.2)]
    assert dynamic_regret(records, 3) == pytest.approx(1.0)
    assert dynamic_regret([rec(t, 1.0, 1.0) for t in range(1, 6)]) == 0.0


def test_dynamic_regret_incomplete_trace():
    with pytest.raises(ContractError):
        dynamic_regret([rec(1), rec(3)])
    with pytest.raises(ContractError):
        dynamic_regret([rec(1), rec(2)], T=3)
    with pytest.raises(ContractError):
        dynamic_regret([])


def test_dynamic_regret_matches_cumulative():
    env, st_ = small_env(0)
    records, _ = master_run(env, linucb_factory(env), TestConfig(horizon=env.T), st_)
    assert dynamic_regret(records, env.T) == pytest.approx(records[-1].regret_cum)


def test_self_ratio_is_one():
    pol = softmax_policy(0.7)
    toy = DeterministicToy([1.0, 0.0], 3)
    est = distribution_ratio_estimate(pol, pol, toy, 50, np.random.default_rng(0))
    assert est.value == 1.0 and est.stderr == 0.0


def test_ratio_matches_enumeration():
    a, b = softmax_policy(1.0), softmax_policy(-0.5)
    toy = DeterministicToy([1.0, 0.2], 3)
    exact = enumerate_distribution_ratio(a, b, toy.rewards, 3)
    est = distribution_ratio_estimate(a, b, toy, 10_000, np.random.default_rng(1))
    assert abs(est.value - exact) <= 3 * est.stderr


def test_ratio_reports_unsupported_actions():
    greedy = lambda h, s: np.array([1.0, 0.0])
    other = lambda h, s: np.array([0.0, 1.0])
    est = distribution_ratio_estimate(greedy, other, DeterministicToy([1, 0], 2), 5, np.random.default_rng(0))
    assert est.value == np.inf and est.n_infinite == 5 and est.diagnostic
    with pytest.raises(ContractError):
        distribution_ratio_estimate(greedy, other, DeterministicToy([1, 0], 2), 0, np.random.default_rng(0))


def test_optimism_report_trivial_optimism():
    records = [rec(t, r_star=0.9, mean=0.5, reward_norm=0.5, r_tilde=1.0) for t in range(1, 21)]
    rep = optimism_report(records, RhoFunction(), bounds=(0.0, 1.0))
    assert rep.frac_optimism == 0.0 and not rep.optimism_violations
    assert rep.rho_floor_ok and rep.proviso_ok


def test_optimism_report_flags_violations():
    records = [rec(t, r_star=0.9, mean=0.1, reward_norm=0.0, r_tilde=0.2) for t in range(1, 11)]
    rep = optimism_report(records, RhoFunction(scale=0.1), bounds=(0.0, 1.0))
    assert rep.optimism_violations == list(range(1, 11))
    assert rep.gap_violations  # average gap 0.2 exceeds 0.1 / sqrt(t) for large t
    assert not rep.rho_floor_ok and not rep.proviso_ok
    profile = np.full(9, 0.5)
    rep = optimism_report(records, RhoFunction(), delta_profile=profile)
    assert rep.delta_proviso_violations[0] == 3  # Delta_[1,3] = 1.0 > 1/sqrt(3)


def test_slope_fit_oracle():
    g = np.random.default_rng(0)
    T = np.geomspace(100, 10_000, 10)
    y = 3.0 * T ** 0.6 * np.exp(g.normal(0, 0.05, 10))
    fit = slope_fit(T, y)
    X = np.column_stack([np.log(T), np.ones(10)])
    beta = np.linalg.solve(X.T @ X, X.T @ np.log(y))
    assert fit.slope == pytest.approx(beta[0], abs=1e-9)
    assert fit.intercept == pytest.approx(beta[1], abs=1e-9)
    with pytest.raises(ContractError):
        slope_fit([1, 2], [1, 2])


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0.1, 10), b=st.floats(-1, 1.5))
def test_slope_fit_exact_power_law(a, b):
    T = np.array([64.0, 256.0, 1024.0, 4096.0])
    assert slope_fit(T, a * T ** b).slope == pytest.approx(b, abs=1e-9)


def test_aggregate_and_csv_roundtrip(tmp_path):
    runs = [[rec(t, seed=s, regret_cum=float(s + t)) for t in range(1, 4)] for s in range(3)]
    curve = aggregate(runs)
    np.testing.assert_allclose(curve.regret_mean, [2.0, 3.0, 4.0])
    np.testing.assert_allclose(curve.regret_std, np.std([0, 1, 2]))
    path = tmp_path / "agg.csv"
    write_csv(curve, path)
    rows = read_csv(path)
    assert list(rows[0]) == list(AGGREGATE_COLUMNS) and len(rows) == 3
    run_path = tmp_path / "runs.csv"
    write_csv([r for run in reversed(runs) for r in run], run_path)
    text = run_path.read_text()
    assert text.splitlines()[0] == ",".join(RUN_COLUMNS)
    assert "\r" not in text
    parsed = read_csv(run_path)
    assert [(r["seed"], r["t"]) for r in parsed] == [(s, t) for s in range(3) for t in range(1, 4)]
    assert parsed[0]["restart"] == 0


def test_csv_float_roundtrip_exact(tmp_path):
    x = 0.1 + 0.2
    write_csv([rec(1, regret_cum=x)], tmp_path / "r.csv")
    assert read_csv(tmp_path / "r.csv")[0]["regret_cum"] == x


def test_aggregate_rejects_ragged():
    with pytest.raises(ContractError):
        aggregate([[rec(1)], [rec(1), rec(2)]])
    with pytest.raises(ContractError):
        aggregate([])
    assert isinstance(aggregate([[rec(1)]]), AggregateCurve)


def test_write_csv_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        write_csv([rec(1)], blocker / "sub" / "runs.csv")
