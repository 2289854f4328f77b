"""Per-round run records and the CSV column layout."""
from __future__ import annotations

from dataclasses import dataclass

RUN_COLUMNS = ("seed", "t", "active_order", "action", "reward_raw", "reward_norm", "r_tilde",
               "u_t", "r_star", "regret_inst", "regret_cum", "restart", "test1", "test2")
AGGREGATE_COLUMNS = ("t", "regret_mean", "regret_std", "n_seeds")


@dataclass
class RunRecord:
    seed: int
    t: int
    active_order: int
    action: int
    reward_raw: float
    reward_norm: float
    r_tilde: float
    u_t: float
    r_star: float
    regret_inst: float
    regret_cum: float
    restart: bool = False
    test1: bool = True  # True means the test passed
    test2: bool = True
    reward_mean: float = float("nan")  # expected raw reward of the chosen action
    block_order: int = -1  # n of the enclosing MASTER block, -1 outside MASTER
    block_start: int = -1

    def row(self) -> tuple:
        return tuple(getattr(self, c) for c in RUN_COLUMNS)
