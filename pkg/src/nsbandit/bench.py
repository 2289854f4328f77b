"""Regret, diagnostics, aggregation and CSV output."""
from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError
from .records import AGGREGATE_COLUMNS, RUN_COLUMNS, RunRecord

__all__ = ["RunRecord", "AggregateCurve", "dynamic_regret", "distribution_ratio_estimate",
           "optimism_report", "slope_fit", "aggregate", "write_csv", "read_csv"]


def _check_complete(records: Sequence[RunRecord], T: int | None = None):
    ts = [r.t for r in records]
    if not ts or ts != list(range(1, len(ts) + 1)):
        raise ContractError("trace must cover rounds 1..T contiguously")
    if T is not None and len(ts) != T:
        raise ContractError(f"trace has {len(ts)} rounds, expected {T}")


def dynamic_regret(records: Sequence[RunRecord], T: int | None = None) -> float:
    """sum_t r*_t - E[r_t | a_t] over a complete trace (expected, noise-free rewards)."""
    _check_complete(records, T)
    means = np.array([r.reward_mean for r in records])
    if not np.all(np.isfinite(means)):
        raise ContractError("trace lacks expected rewards of the chosen actions")
    return float(np.sum([r.r_star for r in records]) - means.sum())


# ------------------------------------------------------------ distribution ratio

@dataclass
class RatioEstimate:
    value: float
    stderr: float
    log_value: float
    n_trajectories: int
    n_infinite: int = 0
    diagnostic: str = ""


def distribution_ratio_estimate(alg1: Callable, alg2: Callable, env, n_trajectories: int,
                                rng: np.random.Generator) -> RatioEstimate:
    """Monte Carlo estimate of E_{alg1}[prod_t alg1(a_t|.) / alg2(a_t|.)].

    ``alg(history, state) -> probs`` must be a pure function of the history
    (a list of (state, action, reward)) and the current state.  ``env`` exposes
    ``horizon``, ``draw_state(t, rng)`` and ``draw_reward(t, state, action, rng)``.
    """
    if n_trajectories < 1:
        raise ContractError("need at least one trajectory")
    logs = np.empty(n_trajectories)
    for m in range(n_trajectories):
        history, lr = [], 0.0
        for t in range(1, env.horizon + 1):
            state = env.draw_state(t, rng)
            p1 = np.asarray(alg1(history, state), dtype=float)
            p2 = np.asarray(alg2(history, state), dtype=float)
            a = int(rng.choice(len(p1), p=p1))
            if p2[a] == 0.0:
                lr = np.inf
            elif np.isfinite(lr):
                lr += np.log(p1[a]) - np.log(p2[a])
            history.append((state, a, env.draw_reward(t, state, a, rng)))
        logs[m] = lr
    n_inf = int(np.isinf(logs).sum())
    if n_inf:
        return RatioEstimate(np.inf, np.inf, np.inf, n_trajectories, n_inf,
                             f"{n_inf} trajectories took an action that alg2 never plays")
    top = logs.max()
    w = np.exp(logs - top)
    log_value = top + np.log(w.mean())
    value = float(np.exp(log_value))
    stderr = float(np.exp(top) * w.std(ddof=1) / np.sqrt(n_trajectories)) if n_trajectories > 1 else np.inf
    return RatioEstimate(value, stderr, float(log_value), n_trajectories)


def enumerate_distribution_ratio(alg1: Callable, alg2: Callable, rewards: Sequence[float],
                                 horizon: int, state=None) -> float:
    """Exact ratio for a toy with a fixed state and deterministic per-action rewards."""
    A = len(rewards)
    total = 0.0

    def rec(history, p1_prod, p2_prod):
        nonlocal total
        if len(history) == horizon:
            total += p1_prod * p1_prod / p2_prod
            return
        p1, p2 = alg1(history, state), alg2(history, state)
        for a in range(A):
            if p1[a] > 0:
                rec(history + [(state, a, rewards[a])], p1_prod * p1[a], p2_prod * p2[a])

    rec([], 1.0, 1.0)
    return total


@dataclass
class DeterministicToy:
    """Fixed state, deterministic reward per action; used to sanity-check the estimator."""

    rewards: Sequence[float]
    horizon: int

    def draw_state(self, t, rng):
        return None

    def draw_reward(self, t, state, action, rng):
        return self.rewards[action]


def softmax_policy(beta: float, n_actions: int = 2):
    """Softmax over per-action cumulative reward, scaled by ``beta``."""
    from .nctf.layers import policy_softmax

    def policy(history, state):
        totals = np.zeros(n_actions)
        for _, a, r in history:
            totals[a] += r
        return policy_softmax(beta * totals)

    return policy


# ------------------------------------------------------------- optimism check

@dataclass
class OptimismReport:
    n_rounds: int
    frac_optimism: float  # r_tilde_t >= min r*_tau - Delta_[1,t]
    frac_gap: float  # (1/t) sum (r_tilde - r) <= rho(t) + Delta_[1,t]
    optimism_violations: list = field(default_factory=list)
    gap_violations: list = field(default_factory=list)
    rho_floor_ok: bool = True  # rho(t) >= 1/sqrt(t) for all t
    rho_floor_violations: list = field(default_factory=list)
    delta_proviso_violations: list = field(default_factory=list)  # Delta_[1,t] > rho(t)

    @property
    def proviso_ok(self):
        return self.rho_floor_ok and not self.delta_proviso_violations


def optimism_report(records: Sequence[RunRecord], rho: Callable, delta_profile=None,
                       bounds=(0.0, 1.0)) -> OptimismReport:
    """Evaluate both inequalities of the optimism assumption round by round on
    the learner scale.  ``bounds`` maps raw r* to [0, 1]; ``delta_profile[t-1]``
    is delta(t) on the same scale (zeros when omitted)."""
    T = len(records)
    lo, hi = bounds
    r_star = (np.array([r.r_star for r in records]) - lo) / (hi - lo)
    r_tilde = np.array([r.r_tilde for r in records])
    r = np.array([r.reward_norm for r in records])
    dp = np.zeros(max(T - 1, 0)) if delta_profile is None else np.asarray(delta_profile, dtype=float)[: max(T - 1, 0)]
    cum_delta = np.concatenate([[0.0], np.cumsum(dp)])[:T]  # Delta_[1,t]
    ts = np.arange(1, T + 1)
    rho_t = np.array([float(rho(t)) for t in ts])
    opt_ok = r_tilde >= np.minimum.accumulate(r_star) - cum_delta
    gap_ok = np.cumsum(r_tilde - r) / ts <= rho_t + cum_delta
    floor_ok = rho_t >= (1.0 - 1e-12) / np.sqrt(ts)
    flag = lambda ok: [int(t) for t in ts[~ok]]
    return OptimismReport(
        n_rounds=T, frac_optimism=float(np.mean(~opt_ok)) if T else 0.0,
        frac_gap=float(np.mean(~gap_ok)) if T else 0.0,
        optimism_violations=flag(opt_ok), gap_violations=flag(gap_ok),
        rho_floor_ok=bool(floor_ok.all()), rho_floor_violations=flag(floor_ok),
        delta_proviso_violations=flag(cum_delta <= rho_t))


# ------------------------------------------------------------ slope fit

@dataclass
class SlopeFit:
    slope: float
    intercept: float
    r2: float


def slope_fit(horizons, regrets) -> SlopeFit:
    """Least-squares line through (log T, log regret)."""
    x = np.asarray(horizons, dtype=float)
    y = np.asarray(regrets, dtype=float)
    if len(x) != len(y) or len(x) < 3:
        raise ContractError("slope_fit needs at least 3 (T, regret) pairs")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("slope_fit needs positive horizons and regrets")
    lx, ly = np.log(x), np.log(y)
    X = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(X, ly, rcond=None)
    resid = ly - X @ np.array([slope, intercept])
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    return SlopeFit(float(slope), float(intercept), float(r2))


# ------------------------------------------------------------ aggregation / CSV

@dataclass
class AggregateCurve:
    t: np.ndarray
    regret_mean: np.ndarray
    regret_std: np.ndarray
    n_seeds: int

    def rows(self):
        return [(int(t), m, s, self.n_seeds) for t, m, s in zip(self.t, self.regret_mean, self.regret_std)]


def aggregate(runs: Sequence[Sequence[RunRecord]]) -> AggregateCurve:
    """Per-round mean and (population) standard deviation of cumulative regret."""
    if not runs:
        raise ContractError("aggregate needs at least one run")
    lengths = {len(r) for r in runs}
    if len(lengths) != 1:
        raise ContractError("runs have different lengths")
    cum = np.array([[rec.regret_cum for rec in run] for run in runs])
    return AggregateCurve(np.array([rec.t for rec in runs[0]]), cum.mean(axis=0), cum.std(axis=0), len(runs))


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _atomic_write(path, text: str):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(directory, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".csv")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise OSError(f"cannot write {path}: {exc}") from exc


def write_csv(data, path, header=None):
    """Write run records (sorted by seed, t), an AggregateCurve, or plain rows with ``header``."""
    if isinstance(data, AggregateCurve):
        header, rows = AGGREGATE_COLUMNS, data.rows()
    elif header is None:
        header = RUN_COLUMNS
        rows = [r.row() for r in sorted(data, key=lambda r: (r.seed, r.t))]
    else:
        rows = list(data)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])
    _atomic_write(path, buf.getvalue())


def read_csv(path) -> list[dict]:
    """Parse a CSV written by ``write_csv`` back into numbers."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for k, v in row.items():
                try:
                    parsed[k] = int(v)
                except ValueError:
                    try:
                        parsed[k] = float(v)
                    except ValueError:
                        parsed[k] = v
            out.append(parsed)
    return out
