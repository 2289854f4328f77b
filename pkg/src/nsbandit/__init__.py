"""Non-stationary linear bandits: environments, base learners, the multi-scale
window scheduler with stationarity tests and restarts (MASTER), a transformer
forward pass that reproduces it, and an experiment harness."""
from .base_algs import LinUCB, ThompsonSampling
from .envs import EnvSpec, sample_env
from .errors import ConfigError, ContractError, InternalError
from .master import Master, TestConfig, master_run

__version__ = "0.1.0"
__all__ = ["LinUCB", "ThompsonSampling", "EnvSpec", "sample_env", "ConfigError", "ContractError",
           "InternalError", "Master", "TestConfig", "master_run"]
