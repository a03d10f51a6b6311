"""Recommendation-style schedules built from a non-negative factorization ``M ~ A U``.

Arms are the rows of ``A``; each selected user column of ``U`` is one task and
users are grouped so that each group spans its own low-rank subspace.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from ..core import FiniteActionSet, NoiseModel, Problem, Task, TaskSchedule
from ..subspace import top_r_left_singular_basis

log = logging.getLogger(__name__)

RANK_RATIO = 10.0
STANDIN_FILES = ("standin_arms.csv", "standin_users.csv", "standin_groups.csv")


class DatasetError(ValueError):
    pass


@dataclass
class FactoredDataset:
    arms: np.ndarray  # (n_arms, d)
    users: np.ndarray  # (d, n_users)
    group_assignment: list[tuple[int, int]]  # (user index, group id), file order

    @property
    def dim(self) -> int:
        return self.arms.shape[1]

    def groups(self) -> list[tuple[int, list[int]]]:
        """Group ids in order of first appearance, each with its users."""
        out: dict[int, list[int]] = {}
        for user, group in self.group_assignment:
            out.setdefault(group, []).append(user)
        return list(out.items())

    def group_rank_ratios(self, r: int) -> list[float]:
        """``s_r / s_{r+1}`` of each group's user matrix (``inf`` when ``s_{r+1}`` vanishes)."""
        ratios = []
        for _, members in self.groups():
            s = np.linalg.svd(self.users[:, members], compute_uv=False)
            s = np.concatenate([s, np.zeros(r + 1)])
            tail = s[r] if s[r] > 1e-12 * max(s[0], 1.0) else 0.0
            ratios.append(np.inf if tail == 0 else float(s[r - 1] / tail))
        return ratios

    def validate(self, r: int | None = None) -> None:
        a, u = self.arms, self.users
        if a.ndim != 2 or u.ndim != 2:
            raise DatasetError("arms and users must be matrices")
        if a.shape[1] != u.shape[0]:
            raise DatasetError(f"dimension mismatch: arms have d={a.shape[1]}, users have d={u.shape[0]}")
        for name, mat in (("arms", a), ("users", u)):
            if not np.all(np.isfinite(mat)):
                raise DatasetError(f"{name} has non-finite entries")
            if np.any(mat < 0):
                raise DatasetError(f"{name} has negative entries")
        if not self.group_assignment:
            raise DatasetError("no users selected")
        for user, _ in self.group_assignment:
            if not 0 <= user < u.shape[1]:
                raise DatasetError(f"group references unknown user {user}")
        if r is not None:
            for (g, _), ratio in zip(self.groups(), self.group_rank_ratios(r)):
                if ratio < RANK_RATIO:
                    raise DatasetError(f"group {g} is not approximately rank {r} (s_r/s_r+1 = {ratio:.3g})")


def _read_matrix(path) -> np.ndarray:
    try:
        mat = np.loadtxt(path, delimiter=",", ndmin=2, encoding="utf-8")
    except ValueError as exc:
        raise DatasetError(f"{path}: {exc}") from exc
    return mat


def _read_groups(path) -> list[tuple[int, int]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["user", "group"]:
        raise DatasetError(f"{path}: expected header 'user,group'")
    out = []
    for line, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            out.append((int(row[0]), int(row[1])))
        except (ValueError, IndexError) as exc:
            raise DatasetError(f"{path}:{line}: bad row {row!r}") from exc
    return out


def load_factored_dataset(arms_path, users_path, groups_path, r: int | None = None) -> FactoredDataset:
    """Load and validate the three CSV files of a factored dataset.

    With ``r`` given, every group must also pass the rank test
    ``s_r >= 10 s_{r+1}``.
    """
    ds = FactoredDataset(_read_matrix(arms_path), _read_matrix(users_path), _read_groups(groups_path))
    ds.validate(r)
    return ds


def build_recsys_schedule(ds: FactoredDataset, N: int, noise_scale: float, r: int = 2) -> Problem:
    """One task per selected user, in group order, played on the discrete arm set.

    Each segment carries the top-``r`` left singular basis of its group as
    ground truth.
    """
    if N < 1:
        raise ValueError("N must be positive")
    tasks, sizes, bases = [], [], []
    for k, (_, members) in enumerate(ds.groups()):
        cols = ds.users[:, members]
        tasks += [Task(cols[:, j].copy(), env_label=k) for j in range(cols.shape[1])]
        sizes.append(len(members))
        if r < ds.dim:
            gram = cols @ cols.T
            bases.append(top_r_left_singular_basis(gram, r))
    sched = TaskSchedule(tasks, N, sizes, bases if bases else None)
    return Problem(sched, FiniteActionSet(ds.arms), NoiseModel(noise_scale))


# --------------------------------------------------------------------------
# bundled stand-in
# --------------------------------------------------------------------------


def make_standin_dataset(
    seed: int = 0,
    d: int = 20,
    n_arms: int = 411,
    group_sizes: tuple[int, ...] = (11, 6, 6),
    r: int = 2,
) -> FactoredDataset:
    """Synthetic non-negative factorization with exact rank-``r`` user groups.

    Group ``k`` draws its users as non-negative combinations of ``r``
    non-negative factors supported on their own block of latent features.
    The first ``d`` arms are the canonical vectors; the rest are sparse
    non-negative rows.
    """
    rng = np.random.default_rng(seed)
    block = d // len(group_sizes)
    if block < r:
        raise ValueError("not enough latent features for the requested groups")
    cols, groups = [], []
    for g, size in enumerate(group_sizes):
        factors = np.zeros((d, r))
        factors[g * block : (g + 1) * block] = rng.uniform(0.0, 1.0, (block, r))
        coef = rng.uniform(0.2, 1.0, (r, size))
        users = factors @ coef
        users *= rng.uniform(0.5, 1.5, size) / np.linalg.norm(users, axis=0)
        groups += [(sum(group_sizes[:g]) + j, g) for j in range(size)]
        cols.append(users)
    extra = np.zeros((n_arms - d, d))
    for row in extra:
        support = rng.choice(d, size=rng.integers(2, 5), replace=False)
        row[support] = rng.uniform(0.0, 1.0, len(support))
        row *= rng.uniform(0.5, 1.0) / np.linalg.norm(row)
    arms = np.vstack([np.eye(d), extra])
    return FactoredDataset(arms, np.hstack(cols), groups)


def write_dataset(ds: FactoredDataset, directory, names=STANDIN_FILES) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = [directory / n for n in names]
    np.savetxt(paths[0], ds.arms, delimiter=",", fmt="%.17g", encoding="utf-8")
    np.savetxt(paths[1], ds.users, delimiter=",", fmt="%.17g", encoding="utf-8")
    with open(paths[2], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["user", "group"])
        w.writerows(ds.group_assignment)
    return paths


def standin_paths() -> tuple[Path, Path, Path]:
    """Paths of the stand-in dataset shipped with the package."""
    root = resources.files("repbandit") / "data"
    return tuple(Path(str(root / n)) for n in STANDIN_FILES)


def load_standin(r: int = 2) -> FactoredDataset:
    return load_factored_dataset(*standin_paths(), r=r)
