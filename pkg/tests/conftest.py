import numpy as np
import pytest

from nsbandit.envs import EnvSpec, PiecewiseElevated, Stationary, sample_env
from nsbandit.runner import learner_factory, make_streams, run_seed_sequence


def pytest_configure(config):
    config._criterion_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_criterion_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def report(request):
    """report(number, name, passed, detail): one pass/fail line per acceptance criterion."""
    lines = request.config._criterion_lines

    def _report(number, name, passed, detail):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {name}: {detail}"
        lines.append(line)
        print(line)
        return passed

    return _report


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_env(seed=0, T=96, variant=None, d=3, A=5, noise=0.1):
    spec = EnvSpec(d, A, T, noise, variant if variant is not None else PiecewiseElevated(((30, 60),)))
    env_ss, streams = make_streams(run_seed_sequence(11, seed))
    return sample_env(spec, env_ss), streams


def linucb_factory(env):
    from nsbandit.envs import reward_scale

    return learner_factory("linucb", env.d, scale=reward_scale(env))


__all__ = ["small_env", "linucb_factory", "Stationary"]
