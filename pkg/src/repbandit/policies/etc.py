"""Explore-then-commit building blocks: full-dimensional (RepE) and subspace (RepT)."""
from __future__ import annotations

import logging

import numpy as np

from ..core import TaskRun
from ..subspace import SubspaceError, check_orthonormal, least_squares_pooled, least_squares_subspace

log = logging.getLogger(__name__)


def _probe_actions(run: TaskRun, directions: np.ndarray, lambda0: float | None) -> np.ndarray:
    """Feasible probe actions, one per column of ``directions``, returned as rows."""
    aset = run.problem.action_set
    if lambda0 is None:
        return aset.probe_set(directions)
    return lambda0 * directions.T


def commit(run: TaskRun, theta_hat: np.ndarray, fallback: np.ndarray) -> None:
    """Play the greedy action for ``theta_hat`` for every remaining round."""
    if run.remaining == 0:
        return
    try:
        x = run.problem.action_set.argmax(theta_hat)
    except SubspaceError:
        # theta_hat = 0 happens with zero noise when theta is orthogonal to the probes
        x = fallback
    run.finish(x, "commit")


def rep_e_task(run: TaskRun, n1: int, lambda0: float | None = None) -> np.ndarray:
    """Explore with the ``d`` scaled canonical vectors for ``n1`` rounds, then commit.

    ``n1`` is rounded up to a multiple of ``d``. Returns the least-squares
    estimate of the task coefficients.
    """
    d = run.dim
    if n1 % d:
        rounded = -(-n1 // d) * d
        log.info("n1=%d rounded up to %d", n1, rounded)
        n1 = rounded
    if n1 >= run.remaining:
        raise ValueError(f"n1={n1} must be below the {run.remaining} rounds left in the task")
    probes = _probe_actions(run, np.eye(d), lambda0)
    actions, rewards = run.play_cyclic(probes, n1, "explore")
    theta_hat = least_squares_pooled(actions.T, rewards)
    commit(run, theta_hat, probes[0])
    return theta_hat


def rep_t_task(run: TaskRun, b_hat: np.ndarray, n2: int, lambda0: float | None = None) -> np.ndarray:
    """Explore along the ``r`` columns of ``b_hat`` for ``n2`` rounds, then commit.

    The estimate always lies in ``Span(b_hat)``.
    """
    b_hat = check_orthonormal(b_hat)
    r = b_hat.shape[1]
    if n2 % r:
        rounded = -(-n2 // r) * r
        log.info("n2=%d rounded up to %d", n2, rounded)
        n2 = rounded
    if n2 >= run.remaining:
        raise ValueError(f"n2={n2} must be below the {run.remaining} rounds left in the task")
    probes = _probe_actions(run, b_hat, lambda0)
    actions, rewards = run.play_cyclic(probes, n2, "transfer")
    _, theta_hat = least_squares_subspace(b_hat, actions.T, rewards)
    commit(run, theta_hat, probes[0])
    return theta_hat
