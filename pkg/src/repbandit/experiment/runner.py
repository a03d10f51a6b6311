"""Seed-matrix execution, aggregation across seeds, and result files."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import Problem, TaskSchedule
from ..policies.baselines import NEEDS_GROUND_TRUTH, POLICIES
from ..policies.cdrepl import BasisUpdate, Event
from ..policies.params import PolicyConfig
from ..scenarios.recsys import build_recsys_schedule, load_factored_dataset, load_standin
from ..scenarios.synthetic import synthetic_problem
from ..scenarios.wcst import wcst_run
from ..subspace import principal_angle_sines, subspace_distance
from .config import STANDIN, ConfigError, ExperimentConfig, PolicySpec

log = logging.getLogger(__name__)


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class GroundTruth:
    """True representation of every segment and the segment lengths (in tasks)."""

    bases: list
    boundaries: list

    @classmethod
    def from_schedule(cls, sched: TaskSchedule) -> GroundTruth | None:
        if sched.bases is None:
            return None
        return cls(list(sched.bases), list(sched.boundaries))

    def segment_of(self, task: int) -> int:
        return int(np.searchsorted(np.cumsum(self.boundaries), task, side="right"))

    def change_points(self) -> list[int]:
        return [int(c) for c in np.cumsum(self.boundaries)[:-1]]


@dataclass
class CellResult:
    label: str
    seed: int
    cum_regret: np.ndarray
    events: list = field(default_factory=list)
    basis_trace: list = field(default_factory=list)
    ground_truth: GroundTruth | None = None
    mean_reward: float | None = None
    info: dict = field(default_factory=dict)


@dataclass
class RunSummary:
    seeds: list[int]
    final_regret: dict[str, np.ndarray]
    envelope: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]
    event_counts: dict[str, dict[str, int]]
    distances: dict[str, list[list[tuple[int, int, float]]]]
    change_points: list[int] = field(default_factory=list)
    mean_reward: dict[str, np.ndarray] = field(default_factory=dict)

    def post_boundary_distance(self, label: str) -> float | None:
        """Mean representation distance over basis updates after the first change point."""
        traces = self.distances.get(label)
        if not traces or not self.change_points:
            return None
        first = self.change_points[0]
        vals = [dist for trace in traces for task, _, dist in trace if task >= first]
        return float(np.mean(vals)) if vals else None


# --------------------------------------------------------------------------
# problem construction
# --------------------------------------------------------------------------


def _recsys_problem(cfg: ExperimentConfig) -> Problem:
    rc = cfg.recsys
    r = int(rc.get("r", 2))
    if rc.get("arms", STANDIN) == STANDIN:
        ds = load_standin(r)
    else:
        ds = load_factored_dataset(rc["arms"], rc["users"], rc["groups"], r=r)
    return build_recsys_schedule(ds, int(rc.get("N", 200)), float(rc.get("noise_scale", 0.2)), r)


def _min_separation(bases) -> float:
    if bases is None or len(bases) < 2:
        return 1.0
    seps = [principal_angle_sines(a, b)[0] for a, b in zip(bases, bases[1:])]
    return float(np.clip(min(seps), 1e-3, 1.0))


def build_problem(cfg: ExperimentConfig, seed: int) -> tuple[Problem, PolicyConfig]:
    """Problem instance for one seed and the policy configuration derived from it."""
    if cfg.scenario == "synthetic":
        spec = cfg.synthetic_spec(seed)
        problem = synthetic_problem(spec)
        base = dict(
            ell=spec.ell,
            nu=spec.nu_target,
            theta_min=spec.theta_min,
            theta_max=spec.theta_max,
            kappa=min(spec.kappa_targets, default=1.0),
            noise_scale=spec.noise_scale,
        )
        r = spec.r
    elif cfg.scenario == "recsys":
        problem = _recsys_problem(cfg)
        norms = np.linalg.norm(problem.schedule.thetas(), axis=0)
        r = int(cfg.recsys.get("r", 2))
        base = dict(
            ell=max(3, r),
            theta_min=float(norms.min()),
            theta_max=float(norms.max()),
            kappa=_min_separation(problem.schedule.bases),
            noise_scale=problem.noise.scale,
        )
    else:
        raise ConfigError("wcst runs have no bandit problem")
    sched = problem.schedule
    base.update(cfg.policy_config)
    return problem, PolicyConfig(d=sched.dim, r=r, N=sched.rounds_per_task, S=sched.n_tasks, **base)


_PROBLEM_CACHE: dict = {}


def _cached_problem(cfg: ExperimentConfig, seed: int):
    key_seed = seed
    if cfg.scenario == "recsys" or (cfg.scenario == "synthetic" and cfg.synthetic.get("fixed_schedule")):
        key_seed = None
    key = (cfg.config_hash(), key_seed)
    if key not in _PROBLEM_CACHE:
        _PROBLEM_CACHE.clear()
        _PROBLEM_CACHE[key] = build_problem(cfg, seed)
    return _PROBLEM_CACHE[key]


# --------------------------------------------------------------------------
# cells
# --------------------------------------------------------------------------


def run_cell(cfg: ExperimentConfig, pspec: PolicySpec, seed: int, out_dir: Path | None = None) -> CellResult:
    """Run one (policy, seed) cell and write its per-run files under ``out_dir``."""
    if cfg.scenario == "wcst":
        w = cfg.wcst
        trace = wcst_run(
            int(w.get("rule_period", 20)),
            int(w.get("total_rounds", 600)),
            pspec.policy,
            np.random.default_rng(seed),
            random_order=bool(w.get("random_order", False)),
            lr=float(w.get("lr", 0.1)),
            epsilon=float(w.get("epsilon", 0.1)),
        )
        if out_dir is not None:
            trace.to_csv(out_dir / f"seed{seed}.csv")
        return CellResult(pspec.label, seed, np.cumsum(1.0 - trace.rewards), mean_reward=trace.mean_reward)

    problem, pcfg = _cached_problem(cfg, seed)
    if pspec.overrides:
        pcfg = PolicyConfig(**{**pcfg.to_dict(), **pspec.overrides})
    if pspec.policy in NEEDS_GROUND_TRUTH and problem.schedule.bases is None:
        raise ConfigError(f"policy {pspec.policy!r} needs ground-truth representations")
    run = POLICIES[pspec.policy](problem, pcfg, np.random.default_rng(seed))
    ledger = run.ledger
    if len(ledger) != problem.schedule.horizon:
        raise ExperimentError(f"{pspec.label} seed {seed}: ledger has {len(ledger)} rows, expected {problem.schedule.horizon}")
    if out_dir is not None:
        rows = None if cfg.ledger_detail == "round" else ledger.task_end_rows()
        ledger.to_csv(out_dir / f"seed{seed}.csv", rows)
        if run.events:
            run.events_to_csv(out_dir / f"seed{seed}.events.csv")
    return CellResult(
        pspec.label,
        seed,
        ledger.cum_regret.copy(),
        events=list(run.events),
        basis_trace=list(run.basis_trace),
        ground_truth=GroundTruth.from_schedule(problem.schedule),
        info=dict(run.info),
    )


def _run_cell_star(args):
    return run_cell(*args)


# --------------------------------------------------------------------------
# aggregation
# --------------------------------------------------------------------------


def distance_trace(basis_trace: list[BasisUpdate], truth: GroundTruth) -> list[tuple[int, int, float]]:
    out = []
    for upd in basis_trace:
        true_b = truth.bases[truth.segment_of(upd.task)]
        if upd.basis.shape != true_b.shape:
            continue
        out.append((upd.task, upd.cycle, subspace_distance(upd.basis, true_b)))
    return out


def summarize(
    ledgers: dict[str, list],
    event_logs: dict[str, list[list[Event]]] | None = None,
    ground_truth: GroundTruth | list | None = None,
    basis_traces: dict[str, list[list[BasisUpdate]]] | None = None,
    seeds: list[int] | None = None,
    mean_reward: dict[str, list[float]] | None = None,
) -> RunSummary:
    """Aggregate per-seed results of every policy.

    ``ledgers`` maps a policy label to one cumulative-regret array (or
    :class:`RegretLedger`) per seed. ``ground_truth`` is one
    :class:`GroundTruth` shared by all seeds or a list with one per seed.
    """
    n_seeds = None
    final, env, counts, dists = {}, {}, {}, {}
    for label, per_seed in ledgers.items():
        curves = [np.asarray(getattr(x, "cum_regret", x), dtype=float) for x in per_seed]
        if not curves:
            raise ValueError(f"no runs for {label}")
        if n_seeds is None:
            n_seeds = len(curves)
        elif len(curves) != n_seeds:
            raise ValueError(f"{label}: {len(curves)} runs, expected {n_seeds}")
        if len({len(c) for c in curves}) != 1:
            raise ValueError(f"{label}: ledgers have different lengths")
        stack = np.vstack(curves)
        final[label] = stack[:, -1] if stack.shape[1] else np.zeros(len(curves))
        env[label] = (stack.mean(axis=0), stack.min(axis=0), stack.max(axis=0))
    seeds = list(range(n_seeds or 0)) if seeds is None else list(seeds)
    if n_seeds is not None and len(seeds) != n_seeds:
        raise ValueError("seed list does not match the number of runs")

    for label, logs in (event_logs or {}).items():
        if len(logs) != n_seeds:
            raise ValueError(f"{label}: {len(logs)} event logs, expected {n_seeds}")
        c: dict[str, int] = {}
        for log_ in logs:
            for e in log_:
                c[e.event] = c.get(e.event, 0) + 1
        counts[label] = dict(sorted(c.items()))

    truths = ground_truth if isinstance(ground_truth, list) else [ground_truth] * (n_seeds or 0)
    change_points = truths[0].change_points() if truths and truths[0] is not None else []
    for label, traces in (basis_traces or {}).items():
        if len(traces) != n_seeds:
            raise ValueError(f"{label}: {len(traces)} basis traces, expected {n_seeds}")
        if not any(traces) or truths[0] is None:
            continue
        dists[label] = [distance_trace(tr, gt) for tr, gt in zip(traces, truths)]

    rewards = {k: np.asarray(v, dtype=float) for k, v in (mean_reward or {}).items()}
    return RunSummary(seeds, final, env, counts, dists, change_points, rewards)


# --------------------------------------------------------------------------
# acceptance checks
# --------------------------------------------------------------------------


def _need(summary: RunSummary, labels) -> None:
    missing = [x for x in labels if x not in summary.final_regret]
    if missing:
        raise ConfigError(f"check needs policies {missing}")


def check_ordering(summary: RunSummary, factor: float = 0.5, frac: float = 0.9) -> tuple[bool, str]:
    """Oracle < CD-RepL < min(semi-oracle, ETC) and CD-RepL <= factor * mean ETC, per seed."""
    f = summary.final_regret
    _need(summary, ["oracle", "cd_repl", "semi_oracle", "independent_etc"])
    etc_mean = f["independent_etc"].mean()
    ok = (
        (f["oracle"] < f["cd_repl"])
        & (f["cd_repl"] < np.minimum(f["semi_oracle"], f["independent_etc"]))
        & (f["cd_repl"] <= factor * etc_mean)
    )
    need = math.ceil(frac * len(ok))
    ratio = f["cd_repl"] / etc_mean
    return int(ok.sum()) >= need, f"ordering holds on {int(ok.sum())}/{len(ok)} seeds (need {need}); CD/ETC ratio max {ratio.max():.3f}"


def check_beats_etc(summary: RunSummary, frac: float = 0.9) -> tuple[bool, str]:
    f = summary.final_regret
    _need(summary, ["cd_repl", "independent_etc"])
    ok = f["cd_repl"] < f["independent_etc"]
    need = math.ceil(frac * len(ok))
    return int(ok.sum()) >= need, f"CD-RepL below ETC on {int(ok.sum())}/{len(ok)} seeds (need {need})"


def check_wcst(summary: RunSummary) -> tuple[bool, str]:
    m = summary.mean_reward
    _need(summary, ["oracle", "random", "linear_rep", "tabular_q"])
    oracle, rand, lin, tab = m["oracle"].mean(), m["random"].mean(), m["linear_rep"].mean(), m["tabular_q"]
    margin = m["linear_rep"] - tab
    ok = oracle == 1.0 and abs(rand - 0.25) <= 0.02 and lin >= 0.85 and bool(np.all(margin > 0.2))
    return ok, (
        f"oracle {oracle:.3f}, random {rand:.3f}, linear_rep {lin:.3f}, "
        f"min margin over tabular_q {margin.min():.3f}"
    )


def check_l_spread(summary: RunSummary, limit: float = 0.25) -> tuple[bool, str]:
    means = {k: float(v.mean()) for k, v in summary.final_regret.items()}
    lo, hi = min(means.values()), max(means.values())
    spread = (hi - lo) / lo
    return spread <= limit, f"final regret spread {spread:.3f} (limit {limit}) across {sorted(means)}"


CHECK_FUNCTIONS = {
    "ordering": check_ordering,
    "beats_etc": check_beats_etc,
    "wcst": check_wcst,
    "L_spread": check_l_spread,
}


# --------------------------------------------------------------------------
# driver
# --------------------------------------------------------------------------


def _write_envelope(path: Path, env) -> None:
    mean, lo, hi = env
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("t,mean,min,max\n")
        fh.writelines(f"{t},{a:.9g},{b:.9g},{c:.9g}\n" for t, (a, b, c) in enumerate(zip(mean, lo, hi), start=1))


def _write_distances(path: Path, seeds, traces) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "task", "cycle", "distance"])
        for seed, trace in zip(seeds, traces):
            for task, cycle, dist in trace:
                w.writerow([seed, task, cycle, f"{dist:.9g}"])


def _stats(x: np.ndarray) -> tuple[float, float]:
    return float(np.mean(x)), float(np.std(x))


def run_experiment(
    cfg: ExperimentConfig, parallel: int = 1, write: bool = True
) -> tuple[RunSummary, dict]:
    """Execute every (policy, seed) cell and aggregate.

    Returns the in-memory summary and the ``summary.json`` document, which is
    also written under ``<output_dir>/<preset>/`` when ``write`` is set.
    Results do not depend on ``parallel``.
    """
    cfg.validate()
    root = Path(cfg.output_dir) / cfg.name
    outs = {}
    for p in cfg.policies:
        outs[p.label] = None
        if write:
            outs[p.label] = root / p.label
            outs[p.label].mkdir(parents=True, exist_ok=True)
    # seed-major so consecutive cells share a problem instance
    jobs = [(cfg, p, s, outs[p.label]) for s in cfg.seeds for p in cfg.policies]
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            cells = list(pool.map(_run_cell_star, jobs))
    else:
        cells = [_run_cell_star(j) for j in jobs]

    by_label: dict[str, list[CellResult]] = {p.label: [] for p in cfg.policies}
    for c in cells:
        by_label[c.label].append(c)
    truths = [c.ground_truth for c in by_label[cfg.policies[0].label]]
    summary = summarize(
        {k: [c.cum_regret for c in v] for k, v in by_label.items()},
        {k: [c.events for c in v] for k, v in by_label.items()},
        truths if any(t is not None for t in truths) else None,
        {k: [c.basis_trace for c in v] for k, v in by_label.items()},
        seeds=cfg.seeds,
        mean_reward={k: [c.mean_reward for c in v] for k, v in by_label.items()} if cfg.scenario == "wcst" else None,
    )

    policies = {}
    for label, cs in by_label.items():
        mean, std = _stats(summary.final_regret[label])
        entry = {
            "final_regret_mean": mean,
            "final_regret_std": std,
            "final_regret": [float(x) for x in summary.final_regret[label]],
            "per_round_file": f"{label}/per_round.csv",
            "events": summary.event_counts.get(label, {}),
        }
        if label in summary.mean_reward:
            entry["mean_reward_mean"], entry["mean_reward_std"] = _stats(summary.mean_reward[label])
        if label in summary.distances:
            entry["distance_file"] = f"{label}/distance.csv"
            pb = summary.post_boundary_distance(label)
            if pb is not None:
                entry["post_boundary_distance_mean"] = pb
        policies[label] = entry
    doc = {
        "preset": cfg.preset_name,
        "config_hash": cfg.config_hash(),
        "scenario": cfg.scenario,
        "seeds": list(cfg.seeds),
        "policies": policies,
    }
    if cfg.check is not None:
        ok, msg = CHECK_FUNCTIONS[cfg.check](summary)
        doc["check"] = {"name": cfg.check, "passed": bool(ok), "detail": msg}
    if write:
        for label in by_label:
            _write_envelope(root / label / "per_round.csv", summary.envelope[label])
            if label in summary.distances:
                _write_distances(root / label / "distance.csv", cfg.seeds, summary.distances[label])
        (root / "config.json").write_text(cfg.to_json() + "\n", encoding="utf-8")
        stamped = {**doc, "generated_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}
        (root / "summary.json").write_text(json.dumps(stamped, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary, doc
