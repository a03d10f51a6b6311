"""Environment model: action sets, tasks, schedules, rewards and regret accounting."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .subspace import ellipsoid_argmax

FEASIBILITY_SLACK = 1e-9
PHASES = ("explore", "transfer", "commit", "detect", "play")


class InfeasibleActionError(ValueError):
    """An action outside the action set was played; this is a policy bug."""


class LedgerOrderError(ValueError):
    pass


# --------------------------------------------------------------------------
# action sets
# --------------------------------------------------------------------------


class EllipsoidActionSet:
    """The ellipsoid ``{x : x^T M^{-1} x <= 1}`` for symmetric positive-definite ``M``."""

    kind = "ellipsoid"

    def __init__(self, m: np.ndarray):
        m = np.asarray(m, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"M must be square, got {m.shape}")
        if np.max(np.abs(m - m.T)) > 1e-10:
            raise ValueError("M must be symmetric")
        eig = np.linalg.eigvalsh(m)
        if eig[0] <= 0:
            raise ValueError("M must be positive definite")
        self.m = m
        self.m_inv = np.linalg.inv(m)
        self._min_eig = float(eig[0])

    @classmethod
    def unit_ball(cls, d: int) -> EllipsoidActionSet:
        return cls(np.eye(d))

    @property
    def dim(self) -> int:
        return self.m.shape[0]

    def contains(self, x: np.ndarray, slack: float = FEASIBILITY_SLACK) -> bool:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        q = np.einsum("ij,jk,ik->i", x, self.m_inv, x)
        return bool(np.all(q <= 1.0 + slack))

    def argmax(self, theta: np.ndarray) -> np.ndarray:
        return ellipsoid_argmax(theta, self.m)

    def optimal(self, theta: np.ndarray) -> tuple[np.ndarray, float]:
        x = self.argmax(theta)
        return x, float(np.sqrt(theta @ self.m @ theta))

    @property
    def probe_scale(self) -> float:
        """Largest ``lambda0`` with ``lambda0 * u`` feasible for every unit vector ``u``."""
        return math.sqrt(self._min_eig)

    def probe(self, direction: np.ndarray) -> np.ndarray:
        u = np.asarray(direction, dtype=float)
        return self.probe_scale * u / np.linalg.norm(u)

    def probe_set(self, directions: np.ndarray) -> np.ndarray:
        """One probe per column of ``directions``, returned as rows."""
        d = np.asarray(directions, dtype=float)
        return self.probe_scale * (d / np.linalg.norm(d, axis=0)).T


class FiniteActionSet:
    """A discrete action set given by the rows of ``arms``; argmax is an exhaustive scan."""

    kind = "finite"

    def __init__(self, arms: np.ndarray):
        arms = np.asarray(arms, dtype=float)
        if arms.ndim != 2 or arms.shape[0] < 1:
            raise ValueError(f"arms must be a non-empty 2-D array, got {arms.shape}")
        self.arms = arms
        norms = np.linalg.norm(arms, axis=1)
        self._unit = np.divide(arms, norms[:, None], out=np.zeros_like(arms), where=norms[:, None] > 0)

    @property
    def dim(self) -> int:
        return self.arms.shape[1]

    def contains(self, x: np.ndarray, slack: float = FEASIBILITY_SLACK) -> bool:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        # distance from each action to its closest arm
        d2 = (
            np.sum(x**2, axis=1)[:, None]
            - 2 * x @ self.arms.T
            + np.sum(self.arms**2, axis=1)[None, :]
        )
        return bool(np.all(np.min(d2, axis=1) <= slack))

    def argmax(self, theta: np.ndarray) -> np.ndarray:
        return self.arms[int(np.argmax(self.arms @ theta))]

    def optimal(self, theta: np.ndarray) -> tuple[np.ndarray, float]:
        vals = self.arms @ theta
        i = int(np.argmax(vals))
        return self.arms[i], float(vals[i])

    @property
    def probe_scale(self) -> float:
        return 1.0

    def probe(self, direction: np.ndarray) -> np.ndarray:
        """The arm closest in direction to ``direction`` (largest ``|cos|``)."""
        u = np.asarray(direction, dtype=float)
        cos = self._unit @ (u / np.linalg.norm(u))
        return self.arms[int(np.argmax(np.abs(cos)))]

    def probe_set(self, directions: np.ndarray) -> np.ndarray:
        """Distinct arms, one per column of ``directions``, each the unused arm
        with the largest ``|cos|`` to its direction.

        Keeping the arms distinct stops two directions from collapsing onto one
        arm, which would make the probe design singular.
        """
        d = np.asarray(directions, dtype=float)
        cos = np.abs(self._unit @ (d / np.linalg.norm(d, axis=0)))
        if d.shape[1] > len(self.arms):
            return self.arms[np.argmax(cos, axis=0)]
        chosen: list[int] = []
        for j in range(d.shape[1]):
            c = cos[:, j].copy()
            c[chosen] = -1.0
            chosen.append(int(np.argmax(c)))
        return self.arms[chosen]


# --------------------------------------------------------------------------
# tasks, schedules, noise
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Task:
    theta: np.ndarray
    env_label: int = 0

    def check_norm(self, theta_min: float, theta_max: float, tol: float = 1e-9) -> None:
        n = float(np.linalg.norm(self.theta))
        if not theta_min - tol <= n <= theta_max + tol:
            raise ValueError(f"||theta|| = {n:.4g} outside [{theta_min}, {theta_max}]")


@dataclass
class TaskSchedule:
    """``S`` tasks played for ``N`` rounds each, grouped into environment segments.

    ``bases`` optionally carries the ground-truth representation of each
    segment; it is only read by evaluation code and oracle baselines.
    """

    tasks: list[Task]
    rounds_per_task: int
    boundaries: list[int]
    bases: list[np.ndarray] | None = None

    def __post_init__(self):
        if self.rounds_per_task < 1:
            raise ValueError("rounds_per_task must be positive")
        if any(b < 1 for b in self.boundaries):
            raise ValueError("every segment needs at least one task")
        if sum(self.boundaries) != len(self.tasks):
            raise ValueError(
                f"segment lengths sum to {sum(self.boundaries)}, expected {len(self.tasks)}"
            )
        if self.bases is not None and len(self.bases) != len(self.boundaries):
            raise ValueError("one ground-truth basis per segment is required")

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    @property
    def horizon(self) -> int:
        return self.n_tasks * self.rounds_per_task

    @property
    def dim(self) -> int:
        return self.tasks[0].theta.shape[0]

    def task_index(self, t: int) -> int:
        """Zero-based index of the task served at 1-based round ``t``."""
        if not 1 <= t <= self.horizon:
            raise ValueError(f"round {t} outside [1, {self.horizon}]")
        return math.ceil(t / self.rounds_per_task) - 1

    def task_at(self, t: int) -> Task:
        return self.tasks[self.task_index(t)]

    def segment_of(self, task_index: int) -> int:
        return int(np.searchsorted(np.cumsum(self.boundaries), task_index, side="right"))

    def change_points(self) -> list[int]:
        """Zero-based indices of the first task of every segment after the first."""
        return [int(c) for c in np.cumsum(self.boundaries)[:-1]]

    def thetas(self) -> np.ndarray:
        return np.stack([t.theta for t in self.tasks], axis=1)


@dataclass(frozen=True)
class NoiseModel:
    scale: float = 1.0
    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind != "gaussian":
            raise ValueError(f"unsupported noise kind {self.kind!r}")
        if self.scale < 0:
            raise ValueError("noise scale must be non-negative")

    def sample(self, rng: np.random.Generator, size=None):
        if self.scale == 0:
            return np.zeros(size) if size is not None else 0.0
        return self.scale * rng.standard_normal(size)


@dataclass
class Problem:
    """Everything the simulator needs: the task sequence, the action set and the noise."""

    schedule: TaskSchedule
    action_set: EllipsoidActionSet | FiniteActionSet
    noise: NoiseModel


# --------------------------------------------------------------------------
# rewards and regret
# --------------------------------------------------------------------------


def sample_reward(
    task: Task,
    action: np.ndarray,
    noise: NoiseModel,
    rng: np.random.Generator,
    action_set: EllipsoidActionSet | FiniteActionSet | None = None,
) -> float:
    """One noisy linear reward ``action^T theta + eta``."""
    action = np.asarray(action, dtype=float)
    if action_set is not None and not action_set.contains(action):
        raise InfeasibleActionError(f"action with norm {np.linalg.norm(action):.4g} is infeasible")
    return float(action @ task.theta + noise.sample(rng))


def optimal_value(task: Task, action_set) -> tuple[np.ndarray, float]:
    if not np.any(task.theta):
        raise ValueError("optimal value undefined for theta = 0")
    return action_set.optimal(task.theta)


def diversity_index(tasks: Sequence[Task] | np.ndarray, ell: int, r: int) -> float:
    """Minimum over length-``ell`` windows of ``sigma_r(W W^T / ell)``.

    ``tasks`` is a list of :class:`Task` or a ``(d, S)`` array of coefficients.
    """
    w = tasks if isinstance(tasks, np.ndarray) else np.stack([t.theta for t in tasks], axis=1)
    n = w.shape[1]
    if ell > n:
        raise ValueError(f"window length {ell} exceeds sequence length {n}")
    if r > min(w.shape[0], ell):
        return 0.0
    worst = math.inf
    for s in range(n - ell + 1):
        sv = np.linalg.svd(w[:, s : s + ell], compute_uv=False)
        worst = min(worst, sv[r - 1] ** 2 / ell)
    return float(worst)


class RegretLedger:
    """Per-round pseudo-regret records, stored as columnar chunks.

    Each record keeps ``t``, the task index, a phase tag, the action norm, the
    noisy reward, the optimal value and the noise-free instantaneous regret
    ``optimal_value - action^T theta``.
    """

    _fields = ("t", "task", "phase", "action_norm", "reward", "optimal_value", "inst_regret")

    def __init__(self):
        self._chunks: dict[str, list[np.ndarray]] = {f: [] for f in self._fields}
        self._cache: dict[str, np.ndarray] | None = None
        self.last_t = 0

    def __len__(self) -> int:
        return sum(len(c) for c in self._chunks["t"])

    def record_block(
        self,
        t0: int,
        task_index: int,
        actions: np.ndarray,
        rewards: np.ndarray,
        mean_rewards: np.ndarray,
        opt_value: float,
        phase: str,
    ) -> None:
        n = len(rewards)
        if n == 0:
            return
        if t0 <= self.last_t:
            raise LedgerOrderError(f"round {t0} is not after {self.last_t}")
        inst = opt_value - np.asarray(mean_rewards, dtype=float)
        if np.min(inst) < -1e-9:
            raise ValueError("negative pseudo-regret: the optimal value is wrong")
        c = self._chunks
        c["t"].append(np.arange(t0, t0 + n, dtype=np.int64))
        c["task"].append(np.full(n, task_index, dtype=np.int64))
        c["phase"].append(np.full(n, PHASES.index(phase), dtype=np.int8))
        c["action_norm"].append(np.linalg.norm(np.atleast_2d(actions), axis=1) * np.ones(n))
        c["reward"].append(np.asarray(rewards, dtype=float))
        c["optimal_value"].append(np.full(n, opt_value))
        c["inst_regret"].append(inst)
        self.last_t = t0 + n - 1
        self._cache = None

    def record_step(self, t, task_index, task: Task, action, reward, action_set, phase: str) -> RegretLedger:
        action = np.asarray(action, dtype=float)
        _, opt = optimal_value(task, action_set)
        self.record_block(t, task_index, action[None, :], np.array([reward]), np.array([action @ task.theta]), opt, phase)
        return self

    def column(self, name: str) -> np.ndarray:
        if self._cache is None:
            self._cache = {
                f: (np.concatenate(ch) if ch else np.zeros(0)) for f, ch in self._chunks.items()
            }
            self._cache["cum_regret"] = np.cumsum(self._cache["inst_regret"])
        return self._cache[name]

    @property
    def cum_regret(self) -> np.ndarray:
        return self.column("cum_regret")

    @property
    def final_regret(self) -> float:
        cr = self.cum_regret
        return float(cr[-1]) if len(cr) else 0.0

    def per_task_regret(self) -> np.ndarray:
        task = self.column("task")
        return np.bincount(task, weights=self.column("inst_regret"))

    def phases(self) -> np.ndarray:
        return np.asarray(PHASES, dtype=object)[self.column("phase")]

    def task_end_rows(self) -> np.ndarray:
        """Indices of the last recorded round of every task."""
        task = self.column("task")
        return np.flatnonzero(np.append(task[1:] != task[:-1], True)) if len(task) else np.zeros(0, int)

    def to_csv(self, path, rows: np.ndarray | None = None) -> None:
        """Write the ledger, or only the records at positions ``rows``."""
        sel = slice(None) if rows is None else rows
        cols = [self.column(f)[sel] for f in ("t", "task")]
        phase = self.phases()[sel]
        floats = [
            self.column(f)[sel] for f in ("action_norm", "reward", "optimal_value", "inst_regret", "cum_regret")
        ]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write("t,task,phase,action_norm,reward,optimal_value,inst_regret,cum_regret\n")
            rows = zip(cols[0], cols[1], phase, *floats)
            fh.writelines(
                f"{t},{q},{p},{a:.9g},{y:.9g},{o:.9g},{i:.9g},{c:.9g}\n" for t, q, p, a, y, o, i, c in rows
            )


def read_ledger_csv(path) -> dict[str, np.ndarray]:
    """Load a ledger CSV back into columns (used by tests and tooling)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = {k: np.array([r[k] for r in rows]) for k in rows[0]} if rows else {}
    for k in ("t", "task"):
        if k in out:
            out[k] = out[k].astype(np.int64)
    for k in ("action_norm", "reward", "optimal_value", "inst_regret", "cum_regret"):
        if k in out:
            out[k] = out[k].astype(float)
    return out


# --------------------------------------------------------------------------
# the interaction handle policies play through
# --------------------------------------------------------------------------


class TaskRun:
    """Round budget and bookkeeping for one task.

    Policies call :meth:`play` with a block of actions (one per row) and get
    the noisy rewards back; every round is charged to the ledger.
    """

    def __init__(self, problem: Problem, task_index: int, ledger: RegretLedger, rng: np.random.Generator):
        self.problem = problem
        self.task_index = task_index
        self.task = problem.schedule.tasks[task_index]
        self.ledger = ledger
        self.rng = rng
        n = problem.schedule.rounds_per_task
        self.t_next = task_index * n + 1
        self.t_end = (task_index + 1) * n
        self._x_star, self.opt_value = optimal_value(self.task, problem.action_set)

    @property
    def remaining(self) -> int:
        return self.t_end - self.t_next + 1

    @property
    def dim(self) -> int:
        return self.task.theta.shape[0]

    def play(self, actions: np.ndarray, phase: str) -> np.ndarray:
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        n = actions.shape[0]
        if n > self.remaining:
            raise ValueError(f"{n} rounds requested but only {self.remaining} remain in task {self.task_index}")
        if not self.problem.action_set.contains(actions):
            raise InfeasibleActionError(f"infeasible action in task {self.task_index}, phase {phase}")
        mean = actions @ self.task.theta
        rewards = mean + self.problem.noise.sample(self.rng, n)
        self.ledger.record_block(self.t_next, self.task_index, actions, rewards, mean, self.opt_value, phase)
        self.t_next += n
        return rewards

    def play_repeated(self, action: np.ndarray, n: int, phase: str) -> np.ndarray:
        action = np.asarray(action, dtype=float)
        if n <= 0:
            return np.zeros(0)
        if n > self.remaining:
            raise ValueError(f"{n} rounds requested but only {self.remaining} remain in task {self.task_index}")
        if not self.problem.action_set.contains(action):
            raise InfeasibleActionError(f"infeasible action in task {self.task_index}, phase {phase}")
        mean = float(action @ self.task.theta)
        rewards = mean + self.problem.noise.sample(self.rng, n)
        self.ledger.record_block(
            self.t_next, self.task_index, action[None, :], rewards, np.full(n, mean), self.opt_value, phase
        )
        self.t_next += n
        return rewards

    def play_cyclic(self, probes: np.ndarray, n: int, phase: str) -> tuple[np.ndarray, np.ndarray]:
        """Cycle through the rows of ``probes`` for ``n`` rounds; returns ``(actions, rewards)``."""
        probes = np.atleast_2d(probes)
        idx = np.arange(n) % probes.shape[0]
        actions = probes[idx]
        return actions, self.play(actions, phase)

    def finish(self, action: np.ndarray, phase: str = "commit") -> None:
        """Spend every remaining round on ``action``."""
        self.play_repeated(action, self.remaining, phase)


def iter_task_runs(problem: Problem, ledger: RegretLedger, rng: np.random.Generator) -> Iterable[TaskRun]:
    for i in range(problem.schedule.n_tasks):
        yield TaskRun(problem, i, ledger, rng)
