"""Reference policies the adaptive learner is compared against."""
from __future__ import annotations

import logging

import numpy as np

from ..core import Problem, RegretLedger, TaskRun
from .cdrepl import BasisUpdate, PolicyRun, cd_repl_run
from .etc import rep_e_task, rep_t_task
from .params import PolicyConfig, etc_rounds, rep_t_rounds

log = logging.getLogger(__name__)

RANK_TOL = 1e-8


def baseline_independent_etc(problem: Problem, cfg: PolicyConfig, rng: np.random.Generator) -> PolicyRun:
    """Every task played on its own with explore-then-commit, ``n1 = d sqrt(N)``."""
    noise_rng, _ = rng.spawn(2)
    ledger = RegretLedger()
    n1 = etc_rounds(cfg)
    for i in range(problem.schedule.n_tasks):
        rep_e_task(TaskRun(problem, i, ledger, noise_rng), n1, cfg.lambda0)
    return PolicyRun("independent_etc", ledger, info={"n1": n1})


def baseline_oracle(problem: Problem, cfg: PolicyConfig, rng: np.random.Generator) -> PolicyRun:
    """RepT with the true representation of each segment."""
    sched = problem.schedule
    if sched.bases is None:
        raise ValueError("the oracle needs ground-truth representations")
    noise_rng, _ = rng.spawn(2)
    ledger = RegretLedger()
    n2 = rep_t_rounds(cfg)
    run = PolicyRun("oracle", ledger, info={"n2": n2})
    for i in range(sched.n_tasks):
        seg = sched.segment_of(i)
        basis = sched.bases[seg]
        if i == 0 or seg != sched.segment_of(i - 1):
            run.basis_trace.append(BasisUpdate(i, 0, basis.copy()))
        rep_t_task(TaskRun(problem, i, ledger, noise_rng), basis, n2, cfg.lambda0)
    return run


def global_basis(thetas: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the span of all task coefficients (columns of ``thetas``)."""
    u, s, _ = np.linalg.svd(thetas, full_matrices=False)
    rank = int(np.sum(s > tol))
    return u[:, :rank]


def baseline_semi_oracle(problem: Problem, cfg: PolicyConfig, rng: np.random.Generator) -> PolicyRun:
    """RepT with the smallest single subspace containing every task."""
    sched = problem.schedule
    noise_rng, _ = rng.spawn(2)
    basis = global_basis(sched.thetas())
    rank = basis.shape[1]
    ledger = RegretLedger()
    if rank == cfg.d:
        log.info("tasks span the whole space; semi-oracle degenerates to independent ETC")
        n1 = etc_rounds(cfg)
        for i in range(sched.n_tasks):
            rep_e_task(TaskRun(problem, i, ledger, noise_rng), n1, cfg.lambda0)
        return PolicyRun("semi_oracle", ledger, info={"rank": rank, "n1": n1, "degenerate": True})
    n2 = rep_t_rounds(cfg, r=rank)
    for i in range(sched.n_tasks):
        rep_t_task(TaskRun(problem, i, ledger, noise_rng), basis, n2, cfg.lambda0)
    return PolicyRun("semi_oracle", ledger, info={"rank": rank, "n2": n2, "degenerate": False})


def baseline_non_adaptive(problem: Problem, cfg: PolicyConfig, rng: np.random.Generator) -> PolicyRun:
    """The adaptive learner with change detection switched off."""
    return cd_repl_run(problem, cfg, rng, detect=False)


def cd_repl(problem: Problem, cfg: PolicyConfig, rng: np.random.Generator) -> PolicyRun:
    return cd_repl_run(problem, cfg, rng, detect=True)


POLICIES = {
    "cd_repl": cd_repl,
    "independent_etc": baseline_independent_etc,
    "semi_oracle": baseline_semi_oracle,
    "non_adaptive": baseline_non_adaptive,
    "oracle": baseline_oracle,
}

NEEDS_GROUND_TRUTH = {"oracle"}


def run_policy(name: str, problem: Problem, cfg: PolicyConfig, seed: int) -> PolicyRun:
    if name not in POLICIES:
        raise KeyError(f"unknown policy {name!r}; choose from {sorted(POLICIES)}")
    return POLICIES[name](problem, cfg, np.random.default_rng(seed))
