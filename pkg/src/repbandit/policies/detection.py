"""Representation change detection by probing the orthogonal complement."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import TaskRun
from ..subspace import check_orthonormal, orthonormal_complement, random_grassmann_basis
from .params import PolicyConfig, detection_budget, xi_closed_form, xi_exact

SIGMA_FLOOR = 1e-6
# noiseless threshold: rewards of an inlier are zero up to roundoff
NOISELESS_TOL = 1e-9


@dataclass
class DetectionPlan:
    n_det: int
    xi_det: float
    probe_actions: np.ndarray  # (n_det, d), one probe per row
    k: int
    n_bar: int
    raw_n_det: int
    capped: bool
    # probe components along b_hat; set when the probes are not exactly orthogonal to it
    nuisance: np.ndarray | None = None

    @property
    def warning(self) -> str | None:
        return "n_det_capped" if self.capped else None


@dataclass
class DetectionResult:
    outlier: bool
    stat: float
    threshold: float
    rewards: np.ndarray


def build_detection_plan(
    b_hat: np.ndarray,
    cfg: PolicyConfig,
    rng: np.random.Generator,
    action_set=None,
    lambda0: float | None = None,
    rounds: int | None = None,
) -> DetectionPlan:
    """Probing actions in ``Span(b_hat_perp)``.

    ``n_det = k (d - r) + n_bar``: the first ``k (d - r)`` probes cycle through
    the scaled complement columns, the last ``n_bar`` are the columns of
    ``b_hat_perp Q`` for a uniformly random ``Q`` on the Grassmannian.
    """
    b_hat = check_orthonormal(b_hat)
    d, r = b_hat.shape
    if d == r:
        raise ValueError("complement is empty")
    if lambda0 is None:
        lambda0 = cfg.lambda0 if cfg.lambda0 is not None else (
            action_set.probe_scale if action_set is not None else 1.0
        )
    budget = detection_budget(cfg, lambda0, rounds)
    comp = orthonormal_complement(b_hat)
    k, n_bar = divmod(budget.n_det, d - r)
    dirs = [comp] * k
    if n_bar:
        q = random_grassmann_basis(d - r, n_bar, rng)
        dirs.append(comp @ q)
    directions = np.concatenate(dirs, axis=1)
    xi = budget.xi_det
    nuisance = None
    if action_set is not None and action_set.kind == "finite":
        parts = [np.tile(action_set.probe_set(comp), (k, 1))] if k else []
        if n_bar:
            parts.append(action_set.probe_set(comp @ q))
        probes = np.concatenate(parts)
        # arms leak into span(b_hat); the test runs on residuals after fitting that part out
        nuisance = probes @ b_hat
        dof = budget.n_det - np.linalg.matrix_rank(nuisance)
        if dof < 1:
            raise ValueError("detection probes leave no residual degrees of freedom")
        xi = xi_closed_form(cfg, dof) if cfg.threshold_rule == "closed_form" else xi_exact(dof, cfg.false_alarm_level)
    else:
        probes = lambda0 * directions.T
    return DetectionPlan(
        n_det=budget.n_det,
        xi_det=xi,
        probe_actions=probes,
        k=k,
        n_bar=n_bar,
        raw_n_det=budget.raw_n_det,
        capped=budget.capped,
        nuisance=nuisance,
    )


def detection_statistic(rewards: np.ndarray, noise_scale: float, dof: int | None = None) -> float:
    """``| ||Y|| / sqrt(n_det) - sigma |``: the reward norm measured against the noise level.

    ``dof`` replaces ``n_det`` when ``rewards`` are regression residuals.
    """
    n = len(rewards) if dof is None else dof
    return abs(float(np.linalg.norm(rewards)) / math.sqrt(n) - noise_scale)


def residualize(rewards: np.ndarray, nuisance: np.ndarray) -> tuple[np.ndarray, int]:
    """Least-squares residuals of ``rewards`` on the columns of ``nuisance`` and their degrees of freedom."""
    coef, _, rank, _ = np.linalg.lstsq(nuisance, rewards, rcond=None)
    return rewards - nuisance @ coef, len(rewards) - int(rank)


def decide(
    rewards: np.ndarray, xi_det: float, noise_scale: float, nuisance: np.ndarray | None = None
) -> DetectionResult:
    dof = None
    if nuisance is not None:
        rewards, dof = residualize(rewards, nuisance)
    stat = detection_statistic(rewards, noise_scale, dof)
    # with zero noise an inlier returns zero rewards, so any signal above roundoff is a change
    threshold = NOISELESS_TOL if noise_scale == 0 else xi_det * max(noise_scale, SIGMA_FLOOR)
    return DetectionResult(outlier=stat > threshold, stat=stat, threshold=threshold, rewards=rewards)


def rep_cd_test(plan: DetectionPlan, run: TaskRun, noise_scale: float) -> DetectionResult:
    """Spend ``n_det`` rounds on the probes and test the rewards against the noise level."""
    if run.remaining < plan.n_det:
        raise ValueError(f"detection needs {plan.n_det} rounds, only {run.remaining} left")
    rewards = run.play(plan.probe_actions, "detect")
    return decide(rewards, plan.xi_det, noise_scale, plan.nuisance)
