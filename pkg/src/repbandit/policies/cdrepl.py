"""The adaptive algorithm: per-environment initial exploration, per-task change
detection, and sequential representation learning in between."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from ..core import Problem, RegretLedger, TaskRun
from .detection import build_detection_plan, rep_cd_test
from .etc import rep_e_task
from .params import (
    PolicyConfig,
    detection_budget,
    initial_exploration_cycles,
    rep_e_rounds,
    rep_t_rounds,
)
from .seqrepl import SeqRepLState, seq_repl_step

log = logging.getLogger(__name__)

EVENT_KINDS = (
    "init_explore",
    "detect_inlier",
    "detect_outlier",
    "cycle_boundary",
    "n_det_capped",
    "saturation",
)


@dataclass
class Event:
    task: int
    event: str
    cycle: int
    n_det: int | None = None
    stat: float | None = None
    threshold: float | None = None


@dataclass
class BasisUpdate:
    task: int
    cycle: int
    basis: np.ndarray


@dataclass
class PolicyRun:
    """Outcome of running one policy on one problem instance."""

    policy: str
    ledger: RegretLedger
    events: list[Event] = field(default_factory=list)
    basis_trace: list[BasisUpdate] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def event_count(self, kind: str) -> int:
        return sum(e.event == kind for e in self.events)

    def events_to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["task", "event", "cycle", "n_det", "stat", "threshold"])
            for e in self.events:
                w.writerow([
                    e.task,
                    e.event,
                    e.cycle,
                    "" if e.n_det is None else e.n_det,
                    "" if e.stat is None else f"{e.stat:.9g}",
                    "" if e.threshold is None else f"{e.threshold:.9g}",
                ])


def _probe_scale(problem: Problem, cfg: PolicyConfig) -> float:
    return cfg.lambda0 if cfg.lambda0 is not None else problem.action_set.probe_scale


def cd_repl_run(
    problem: Problem, cfg: PolicyConfig, rng: np.random.Generator, detect: bool = True
) -> PolicyRun:
    """Run the change-detecting representation learner over the whole schedule.

    With ``detect=False`` the change test is skipped entirely (no probing
    rounds), which gives the non-adaptive variant.
    """
    noise_rng, probe_rng = rng.spawn(2)
    sched = problem.schedule
    aset = problem.action_set
    lam = cfg.lambda0
    budget = detection_budget(cfg, _probe_scale(problem, cfg))
    b = initial_exploration_cycles(cfg, budget.n_det)
    n_init = b * cfg.L
    n2 = rep_t_rounds(cfg)
    result = PolicyRun(
        "cd_repl" if detect else "non_adaptive",
        RegretLedger(),
        info={"b": b, "n_det": budget.n_det, "raw_n_det": budget.raw_n_det, "xi_det": budget.xi_det, "n2": n2},
    )
    events = result.events
    if detect and budget.capped:
        events.append(Event(0, "n_det_capped", 0, budget.n_det))
        log.warning("n_det=%d capped to %d", budget.raw_n_det, budget.n_det)

    state: SeqRepLState | None = None
    init: SeqRepLState | None = None
    i = 0
    run: TaskRun | None = None
    while i < sched.n_tasks:
        if run is None:
            run = TaskRun(problem, i, result.ledger, noise_rng)

        if state is None:
            if init is None:
                init = SeqRepLState(cfg.d, cfg.r, cfg.L)
                events.append(Event(i, "init_explore", 0))
                if i + n_init > sched.n_tasks:
                    events.append(Event(i, "saturation", 0))
                    log.warning("initial exploration of %d tasks runs past the schedule end", n_init)
            n1 = rep_e_rounds(cfg, L=cfg.ell, rounds=run.remaining)
            init.add_estimate(rep_e_task(run, n1, lam))
            if init.explored_count == n_init:
                state = init
                state.cycle = b + 1
                state.refresh_basis()
                result.basis_trace.append(BasisUpdate(i, state.cycle, state.b_hat.copy()))
                init = None
            i += 1
            run = None
            continue

        if detect:
            plan = build_detection_plan(state.b_hat, cfg, probe_rng, aset, lam, run.remaining)
            res = rep_cd_test(plan, run, cfg.noise_scale)
            kind = "detect_outlier" if res.outlier else "detect_inlier"
            events.append(Event(i, kind, state.cycle, plan.n_det, res.stat, res.threshold))
            if res.outlier:
                # the flagged task's remaining rounds open the new environment's exploration
                state = None
                continue

        n1 = rep_e_rounds(cfg, rounds=run.remaining)
        out = seq_repl_step(state, run, n1, n2, lam)
        if out.basis_updated:
            result.basis_trace.append(BasisUpdate(i, state.cycle, state.b_hat.copy()))
        if out.cycle_finished:
            events.append(Event(i, "cycle_boundary", state.cycle))
        i += 1
        run = None
    return result


def seq_repl_run(
    problem: Problem, cfg: PolicyConfig, rng: np.random.Generator, max_cycles: int | None = None
) -> PolicyRun:
    """Plain sequential representation learning from cycle 1, without detection.

    Stops early after ``max_cycles`` complete cycles when given.
    """
    noise_rng, _ = rng.spawn(2)
    ledger = RegretLedger()
    result = PolicyRun("seq_repl", ledger)
    state = SeqRepLState(cfg.d, cfg.r, cfg.L)
    n1 = rep_e_rounds(cfg)
    n2 = rep_t_rounds(cfg)
    result.info.update(n1=n1, n2=n2)
    for i in range(problem.schedule.n_tasks):
        out = seq_repl_step(state, TaskRun(problem, i, ledger, noise_rng), n1, n2, cfg.lambda0)
        if out.basis_updated:
            result.basis_trace.append(BasisUpdate(i, out.cycle, state.b_hat.copy()))
        if out.cycle_finished:
            result.events.append(Event(i, "cycle_boundary", out.cycle))
            if max_cycles is not None and out.cycle >= max_cycles:
                break
    return result
