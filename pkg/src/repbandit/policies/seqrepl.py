"""Sequential representation learning within one environment.

Cycle ``n`` plays ``L`` tasks with RepE, refreshes the representation
estimate from every RepE estimate collected so far, then plays ``n L`` tasks
with RepT on that estimate.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import TaskRun
from ..subspace import top_r_left_singular_basis
from .etc import rep_e_task, rep_t_task

EXPLORATION = "rep_exploration"
TRANSFER = "rep_transfer"


@dataclass
class SeqRepLState:
    d: int
    r: int
    L: int
    cycle: int = 1
    phase: str = EXPLORATION
    tasks_done_in_phase: int = 0
    p_hat: np.ndarray = None
    explored_count: int = 0
    b_hat: np.ndarray | None = None
    spectral_gap: float | None = None

    def __post_init__(self):
        if self.p_hat is None:
            self.p_hat = np.zeros((self.d, self.d))

    def add_estimate(self, theta_hat: np.ndarray) -> None:
        self.p_hat += np.outer(theta_hat, theta_hat)
        self.explored_count += 1

    def refresh_basis(self) -> np.ndarray:
        w_hat = self.p_hat / self.explored_count
        self.b_hat, self.spectral_gap = top_r_left_singular_basis(w_hat, self.r, return_gap=True)
        return self.b_hat


@dataclass
class StepOutcome:
    phase: str
    cycle: int
    theta_hat: np.ndarray
    basis_updated: bool = False
    cycle_finished: bool = False


def seq_repl_step(
    state: SeqRepLState, run: TaskRun, n1: int, n2: int, lambda0: float | None = None
) -> StepOutcome:
    """Play one whole task (or whatever remains of it) and advance the cycle schedule."""
    cycle = state.cycle
    if state.phase == EXPLORATION:
        theta_hat = rep_e_task(run, n1, lambda0)
        state.add_estimate(theta_hat)
        state.tasks_done_in_phase += 1
        out = StepOutcome(EXPLORATION, cycle, theta_hat)
        if state.tasks_done_in_phase == state.L:
            state.refresh_basis()
            state.phase = TRANSFER
            state.tasks_done_in_phase = 0
            out.basis_updated = True
        return out

    theta_hat = rep_t_task(run, state.b_hat, n2, lambda0)
    state.tasks_done_in_phase += 1
    out = StepOutcome(TRANSFER, cycle, theta_hat)
    if state.tasks_done_in_phase == cycle * state.L:
        state.cycle += 1
        state.phase = EXPLORATION
        state.tasks_done_in_phase = 0
        out.cycle_finished = True
    return out


def phase_sequence(L: int, n_tasks: int, start_cycle: int = 1) -> list[str]:
    """Unrolled task phases (``"E"``/``"T"``) of the cycle schedule."""
    seq: list[str] = []
    n = start_cycle
    while len(seq) < n_tasks:
        seq += ["E"] * L + ["T"] * (n * L)
        n += 1
    return seq[:n_tasks]
