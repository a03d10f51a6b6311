"""Synthetic non-stationary task sequences with controlled representation separation."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..core import EllipsoidActionSet, NoiseModel, Problem, Task, TaskSchedule, diversity_index
from ..subspace import orthonormal_complement, random_grassmann_basis

MAX_RESAMPLES = 10_000


class GenerationError(RuntimeError):
    pass


@dataclass
class SyntheticSpec:
    d: int = 20
    r: int = 3
    m: int = 4
    tasks_per_segment: int = 100
    N: int = 500
    ell: int = 3
    nu_target: float = 0.01
    kappa_targets: list[float] = field(default_factory=lambda: [0.9, 0.9, 0.9])
    noise_scale: float = 0.3
    seed: int = 0
    theta_min: float = 0.5
    theta_max: float = 1.5
    perturbation: float = 0.3

    def __post_init__(self):
        if len(self.kappa_targets) != self.m - 1:
            raise ValueError(f"need m - 1 = {self.m - 1} kappa targets, got {len(self.kappa_targets)}")
        if any(not 0 < k <= 1 for k in self.kappa_targets):
            raise ValueError("kappa targets must lie in (0, 1]")
        if self.m > 1 and self.d - self.r < self.r:
            raise ValueError("a separated basis needs d - r >= r")
        if self.ell < self.r:
            raise ValueError("windows shorter than r can never be diverse")
        if not 0 < self.theta_min <= self.theta_max:
            raise ValueError("need 0 < theta_min <= theta_max")

    def to_dict(self) -> dict:
        return asdict(self)


def separated_basis(b: np.ndarray, kappa: float, rng: np.random.Generator) -> np.ndarray:
    """A basis whose smallest principal-angle sine against ``b`` equals ``kappa``.

    One principal direction is rotated by ``arcsin(kappa)`` into the complement;
    the remaining angles are drawn uniformly between that and a right angle.
    """
    d, r = b.shape
    phi_min = math.asin(min(kappa, 1.0))
    angles = np.concatenate([[phi_min], rng.uniform(phi_min, math.pi / 2, r - 1)])
    v = random_grassmann_basis(r, r, rng)
    w = orthonormal_complement(b) @ random_grassmann_basis(d - r, r, rng)
    return b @ v * np.cos(angles) + w * np.sin(angles)


def _draw_coefficients(spec: SyntheticSpec, frame: np.ndarray, idx: np.ndarray, rng) -> np.ndarray:
    r = spec.r
    raw = frame[:, idx % r] + spec.perturbation * rng.standard_normal((r, len(idx))) / math.sqrt(r)
    norms = rng.uniform(spec.theta_min, spec.theta_max, len(idx))
    return raw / np.linalg.norm(raw, axis=0) * norms


def _segment_coefficients(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    tau, ell, r = spec.tasks_per_segment, spec.ell, spec.r
    frame = random_grassmann_basis(r, r, rng)
    alphas = _draw_coefficients(spec, frame, np.arange(tau), rng)
    floor = spec.nu_target / r
    if tau < ell:
        return alphas
    attempts = 0
    s = 0
    while s <= tau - ell:
        window = alphas[:, s : s + ell]
        if diversity_index(window, ell, r) >= floor:
            s += 1
            continue
        attempts += 1
        if attempts > MAX_RESAMPLES:
            raise GenerationError(f"could not make window {s} diverse after {MAX_RESAMPLES} resamples")
        alphas[:, s : s + ell] = _draw_coefficients(spec, frame, np.arange(s, s + ell), rng)
        s = max(0, s - ell + 1)
    return alphas


def generate_synthetic_schedule(spec: SyntheticSpec, rng: np.random.Generator | None = None) -> TaskSchedule:
    """Task schedule with ``m`` segments of ``tasks_per_segment`` tasks each.

    The returned schedule carries the ground-truth basis of every segment.
    """
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    bases = [random_grassmann_basis(spec.d, spec.r, rng)]
    for kappa in spec.kappa_targets:
        bases.append(separated_basis(bases[-1], kappa, rng))
    tasks: list[Task] = []
    for k, basis in enumerate(bases):
        alphas = _segment_coefficients(spec, rng)
        tasks += [Task(basis @ a, env_label=k) for a in alphas.T]
    return TaskSchedule(tasks, spec.N, [spec.tasks_per_segment] * spec.m, bases)


def synthetic_problem(spec: SyntheticSpec, rng: np.random.Generator | None = None) -> Problem:
    """Schedule on the unit ball with Gaussian reward noise."""
    sched = generate_synthetic_schedule(spec, rng)
    return Problem(sched, EllipsoidActionSet.unit_ball(spec.d), NoiseModel(spec.noise_scale))
