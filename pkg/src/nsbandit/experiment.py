"""Multi-seed execution of a RunConfig and the run/sweep/compare drivers."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .bench import aggregate, slope_fit, write_csv
from .config import RunConfig
from .envs import sample_env
from .errors import ConfigError
from .records import RunRecord
from .runner import make_streams, run_algorithm, run_seed_sequence

SUMMARY_COLUMNS = ("axis", "value", "regret_mean", "regret_std", "n_seeds")
SWEEP_AXES = ("T", "b", "delta")


def run_one(cfg: RunConfig, seed_id: int, master_seed: int) -> list[RunRecord]:
    """One seed of a configuration; fully determined by (cfg, master_seed, seed_id)."""
    env_ss, streams = make_streams(run_seed_sequence(master_seed, seed_id))
    env = sample_env(cfg.env_spec(), env_ss)
    return run_algorithm(cfg.algorithm, env, streams, cfg.test_config(), seed=seed_id,
                         window=cfg.window, learner_kw=cfg.learner_kw(), nctf_kw=cfg.nctf_kw())


def _run_one_packed(args):
    return run_one(*args)


def run_seeds(cfg: RunConfig, master_seed: int, workers: int = 1) -> list[list[RunRecord]]:
    jobs = [(cfg, s, master_seed) for s in cfg.seed_ids()]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_one_packed, jobs))
    else:
        runs = [run_one(*j) for j in jobs]
    return sorted(runs, key=lambda r: r[0].seed)


def cmd_run(cfg: RunConfig, out_dir: str | None = None, master_seed: int | None = None,
            workers: int | None = None, log=print) -> dict:
    out_dir = out_dir or cfg.out
    seed = cfg.master_seed() if master_seed is None else master_seed
    runs = run_seeds(cfg, seed, workers or cfg.workers)
    runs_path = os.path.join(out_dir, "runs.csv")
    agg_path = os.path.join(out_dir, "aggregate.csv")
    write_csv([rec for run in runs for rec in run], runs_path)
    curve = aggregate(runs)
    write_csv(curve, agg_path)
    if cfg.verbosity >= 0:
        log(f"{cfg.algorithm}: {len(runs)} seed(s), T={cfg.T}, final regret "
            f"{curve.regret_mean[-1]:.4g} +/- {curve.regret_std[-1]:.4g}; "
            f"{sum(r.restart for run in runs for r in run)} restart(s)")
        log(f"wrote {runs_path} and {agg_path}")
    return {"runs": runs, "curve": curve, "paths": (runs_path, agg_path)}


def sweep_cell(cfg: RunConfig, axis: str, value) -> RunConfig:
    if axis == "T":
        T = int(value)
        if T != value or T < 1:
            raise ConfigError(f"values: T must be positive integers, got {value!r}")
        return replace(cfg, T=T)
    if axis == "b":
        if cfg.variant != "cosine":
            raise ConfigError("axis: b requires variant: cosine")
        return replace(cfg, b=float(value))
    if axis == "delta":
        if cfg.variant != "elevated":
            raise ConfigError("axis: delta requires variant: elevated")
        lo, hi = cfg.base_range
        return replace(cfg, elevated_range=[lo + float(value), hi + float(value)])
    raise ConfigError(f"axis: unknown sweep axis {axis!r} (choose from {', '.join(SWEEP_AXES)})")


def cmd_sweep(cfg: RunConfig, axis: str, values: list, out_dir: str | None = None,
              master_seed: int | None = None, workers: int | None = None, log=print) -> dict:
    if not values:
        raise ConfigError("values: sweep list is empty")
    out_dir = out_dir or cfg.out
    seed = cfg.master_seed() if master_seed is None else master_seed
    cells = [(v, sweep_cell(cfg, axis, v)) for v in values]
    rows, n_runs = [], 0
    for v, c in cells:
        runs = run_seeds(c, seed, workers or cfg.workers)
        n_runs += len(runs)
        final = np.array([run[-1].regret_cum for run in runs])
        rows.append((axis, float(v), float(final.mean()), float(final.std()), len(runs)))
        log(f"{axis}={v}: regret {final.mean():.4g} +/- {final.std():.4g} over {len(runs)} seed(s)")
    summary_path = os.path.join(out_dir, "summary.csv")
    write_csv(rows, summary_path, header=SUMMARY_COLUMNS)
    fit = None
    xs = [r[1] for r in rows]
    ys = [r[2] for r in rows]
    if len(rows) >= 3 and all(x > 0 for x in xs) and all(y > 0 for y in ys):
        fit = slope_fit(xs, ys)
        write_csv([(axis, fit.slope, fit.intercept, fit.r2)], os.path.join(out_dir, "slope.csv"),
                  header=("axis", "slope", "intercept", "r2"))
        log(f"log-log slope of regret vs {axis}: {fit.slope:.4f} (r^2 = {fit.r2:.4f})")
    else:
        log("slope fit skipped (needs >= 3 cells with positive values and regrets)")
    log(f"wrote {summary_path}")
    return {"rows": rows, "fit": fit, "n_runs": n_runs}


def cmd_compare(cfg: RunConfig, algorithms: list[str], out_dir: str | None = None,
                master_seed: int | None = None, workers: int | None = None, log=print) -> dict:
    """Run several algorithms on identical environments and streams."""
    if not algorithms:
        raise ConfigError("algorithms: list is empty")
    out_dir = out_dir or cfg.out
    seed = cfg.master_seed() if master_seed is None else master_seed
    rows = []
    for name in algorithms:
        c = replace(cfg, algorithm=name)
        c.validate()
        runs = run_seeds(c, seed, workers or cfg.workers)
        final = np.array([run[-1].regret_cum for run in runs])
        se = final.std(ddof=1) / np.sqrt(len(final)) if len(final) > 1 else float("nan")
        rows.append((name, float(final.mean()), float(final.std()), float(se), len(runs)))
        log(f"{name:>24s}: regret {final.mean():10.4f}  std {final.std():9.4f}  se {se:8.4f}")
    path = os.path.join(out_dir, "compare.csv")
    write_csv(rows, path, header=("algorithm", "regret_mean", "regret_std", "regret_se", "n_seeds"))
    log(f"wrote {path}")
    return {"rows": rows}
