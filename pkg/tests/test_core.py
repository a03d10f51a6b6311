import math

import numpy as np
import pytest

from repbandit.core import (
    EllipsoidActionSet,
    FiniteActionSet,
    InfeasibleActionError,
    LedgerOrderError,
    NoiseModel,
    Problem,
    RegretLedger,
    Task,
    TaskRun,
    TaskSchedule,
    diversity_index,
    optimal_value,
    read_ledger_csv,
    sample_reward,
)
from repbandit.subspace import random_grassmann_basis


def _problem(thetas, n_rounds=10, sigma=0.0, boundaries=None):
    tasks = [Task(np.asarray(t, dtype=float)) for t in thetas]
    sched = TaskSchedule(tasks, n_rounds, boundaries or [len(tasks)])
    return Problem(sched, EllipsoidActionSet.unit_ball(len(thetas[0])), NoiseModel(sigma))


# ---------------------------------------------------------------- action sets


def test_ellipsoid_validation():
    with pytest.raises(ValueError):
        EllipsoidActionSet(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        EllipsoidActionSet(np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        EllipsoidActionSet(np.ones(3))


def test_ellipsoid_contains_boundary_slack():
    aset = EllipsoidActionSet(np.diag([4.0, 1.0]))
    assert aset.contains(np.array([2.0, 0.0]))
    assert aset.contains(np.array([2.0 + 1e-12, 0.0]))
    assert not aset.contains(np.array([2.01, 0.0]))


def test_ellipsoid_probe_scale():
    aset = EllipsoidActionSet(np.diag([4.0, 0.25]))
    assert aset.probe_scale == pytest.approx(0.5)
    probes = aset.probe_set(np.eye(2))
    assert aset.contains(probes)


def test_finite_set_scan_and_probe():
    arms = np.array([[1.0, 0.0], [0.0, 1.0], [0.6, 0.6]])
    aset = FiniteActionSet(arms)
    x, v = aset.optimal(np.array([1.0, 1.0]))
    np.testing.assert_array_equal(x, [0.6, 0.6])
    assert v == pytest.approx(1.2)
    assert aset.contains(arms)
    assert not aset.contains(np.array([0.5, 0.5]))
    np.testing.assert_array_equal(aset.probe(np.array([0.0, -2.0])), [0.0, 1.0])


def test_finite_probe_set_distinct():
    arms = np.array([[1.0, 0.0, 0.0], [0.9, 0.1, 0.0], [0.0, 0.0, 1.0]])
    aset = FiniteActionSet(arms)
    dirs = np.array([[1.0, 0.0, 0.0], [1.0, 0.05, 0.0]]).T
    chosen = aset.probe_set(dirs)
    assert not np.array_equal(chosen[0], chosen[1])


# ---------------------------------------------------------------- rewards


def test_sample_reward_noiseless():
    rng = np.random.default_rng(0)
    task = Task(np.array([0.5, 0.2, -0.1]))
    assert sample_reward(task, np.array([1.0, 0, 0]), NoiseModel(0.0), rng) == 0.5
    assert sample_reward(task, np.array([0.0, 0.1, 0.2]), NoiseModel(0.0), rng) == pytest.approx(0.0)


def test_sample_reward_statistics():
    rng = np.random.default_rng(5)
    task = Task(np.array([1.0, 0.0]))
    noise = NoiseModel(0.3)
    draws = np.array([sample_reward(task, np.array([1.0, 0.0]), noise, rng) for _ in range(100_000)])
    assert draws.mean() == pytest.approx(1.0, abs=0.01)
    assert draws.std() == pytest.approx(0.3, abs=0.01)


def test_sample_reward_infeasible():
    with pytest.raises(InfeasibleActionError):
        sample_reward(Task(np.ones(2)), np.array([2.0, 0.0]), NoiseModel(0.0), np.random.default_rng(0),
                      EllipsoidActionSet.unit_ball(2))


def test_optimal_value_cases():
    _, v = optimal_value(Task(np.array([0.6, 0.8])), EllipsoidActionSet.unit_ball(2))
    assert v == pytest.approx(1.0)
    _, v = optimal_value(Task(np.array([1.0, 0.0])), EllipsoidActionSet(np.diag([4.0, 1.0])))
    assert v == pytest.approx(2.0)
    with pytest.raises(ValueError):
        optimal_value(Task(np.zeros(2)), EllipsoidActionSet.unit_ball(2))


def test_optimal_value_rotation_covariance():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((5, 5))
    m = a @ a.T + np.eye(5)
    rot = random_grassmann_basis(5, 5, rng)
    theta = rng.standard_normal(5)
    _, v1 = optimal_value(Task(theta), EllipsoidActionSet(m))
    _, v2 = optimal_value(Task(rot @ theta), EllipsoidActionSet(rot @ m @ rot.T))
    assert v1 == pytest.approx(v2, rel=1e-10)


# ---------------------------------------------------------------- ledger


def test_record_step_regret_values():
    aset = EllipsoidActionSet.unit_ball(3)
    task = Task(np.array([0.0, 2.0, 0.0]))
    led = RegretLedger()
    x_star, _ = optimal_value(task, aset)
    led.record_step(1, 0, task, x_star, 0.0, aset, "play")
    led.record_step(2, 0, task, -x_star, 0.0, aset, "play")
    led.record_step(3, 0, task, np.array([1.0, 0.0, 0.0]), 0.0, aset, "play")
    np.testing.assert_allclose(led.column("inst_regret"), [0.0, 4.0, 2.0], atol=1e-12)
    np.testing.assert_allclose(led.cum_regret, [0.0, 4.0, 6.0])
    assert led.final_regret == pytest.approx(6.0)


def test_record_step_out_of_order():
    aset = EllipsoidActionSet.unit_ball(2)
    task = Task(np.array([1.0, 0.0]))
    led = RegretLedger().record_step(5, 0, task, np.array([1.0, 0.0]), 1.0, aset, "play")
    with pytest.raises(LedgerOrderError):
        led.record_step(5, 0, task, np.array([1.0, 0.0]), 1.0, aset, "play")


def test_ledger_rejects_negative_regret():
    led = RegretLedger()
    with pytest.raises(ValueError):
        led.record_block(1, 0, np.ones((1, 2)), np.ones(1), np.array([2.0]), 1.0, "play")


def test_ledger_csv_roundtrip(tmp_path):
    p = _problem([[0.3, 0.4], [1.0, 0.0]], n_rounds=4, sigma=0.1)
    led = RegretLedger()
    rng = np.random.default_rng(0)
    for i in range(2):
        TaskRun(p, i, led, rng).finish(np.array([0.0, 1.0]), "commit")
    path = tmp_path / "ledger.csv"
    led.to_csv(path)
    text = path.read_text(encoding="utf-8").splitlines()
    assert text[0] == "t,task,phase,action_norm,reward,optimal_value,inst_regret,cum_regret"
    assert len(text) == 9
    back = read_ledger_csv(path)
    np.testing.assert_array_equal(back["t"], np.arange(1, 9))
    np.testing.assert_allclose(back["cum_regret"], led.cum_regret, rtol=1e-8)
    # 9 significant digits
    assert text[1].split(",")[4] == f"{led.column('reward')[0]:.9g}"


def test_ledger_task_rows(tmp_path):
    p = _problem([[1.0, 0.0]] * 3, n_rounds=5)
    led = RegretLedger()
    for i in range(3):
        TaskRun(p, i, led, np.random.default_rng(0)).finish(np.array([0.0, 1.0]))
    np.testing.assert_array_equal(led.task_end_rows(), [4, 9, 14])
    led.to_csv(tmp_path / "t.csv", led.task_end_rows())
    assert len((tmp_path / "t.csv").read_text().splitlines()) == 4


# ---------------------------------------------------------------- schedule


def test_schedule_indexing():
    p = _problem([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], n_rounds=4, boundaries=[2, 1])
    s = p.schedule
    assert s.horizon == 12
    assert [s.task_index(t) for t in (1, 4, 5, 8, 9, 12)] == [0, 0, 1, 1, 2, 2]
    for t in range(1, 13):
        assert s.task_at(t) is s.tasks[math.ceil(t / 4) - 1]
    assert s.change_points() == [2]
    assert [s.segment_of(i) for i in range(3)] == [0, 0, 1]
    with pytest.raises(ValueError):
        s.task_index(13)


def test_schedule_validation():
    tasks = [Task(np.ones(2))] * 3
    with pytest.raises(ValueError):
        TaskSchedule(tasks, 5, [2, 2])
    with pytest.raises(ValueError):
        TaskSchedule(tasks, 5, [3, 0])
    with pytest.raises(ValueError):
        TaskSchedule(tasks, 0, [3])
    with pytest.raises(ValueError):
        TaskSchedule(tasks, 5, [3], bases=[np.eye(2), np.eye(2)])


def test_task_norm_check():
    Task(np.array([0.6, 0.8])).check_norm(0.5, 1.5)
    with pytest.raises(ValueError):
        Task(np.array([0.1, 0.0])).check_norm(0.5, 1.5)


def test_noise_model():
    assert NoiseModel(0.0).sample(np.random.default_rng(0), 3).tolist() == [0.0, 0.0, 0.0]
    with pytest.raises(ValueError):
        NoiseModel(-1.0)
    with pytest.raises(ValueError):
        NoiseModel(1.0, kind="laplace")


# ---------------------------------------------------------------- task runs


def test_task_run_round_accounting():
    p = _problem([[1.0, 0.0], [0.0, 1.0]], n_rounds=10)
    led = RegretLedger()
    run = TaskRun(p, 1, led, np.random.default_rng(0))
    assert (run.t_next, run.remaining) == (11, 10)
    run.play_cyclic(np.eye(2), 4, "explore")
    assert run.remaining == 6
    run.finish(np.array([0.0, 1.0]))
    assert run.remaining == 0
    np.testing.assert_array_equal(led.column("t"), np.arange(11, 21))
    with pytest.raises(ValueError):
        run.play(np.array([[1.0, 0.0]]), "play")


def test_task_run_infeasible():
    p = _problem([[1.0, 0.0]])
    run = TaskRun(p, 0, RegretLedger(), np.random.default_rng(0))
    with pytest.raises(InfeasibleActionError):
        run.play(np.array([[3.0, 0.0]]), "play")


def test_noise_free_determinism():
    p = _problem([[0.3, 0.4], [1.0, 0.0]], n_rounds=6, sigma=0.0)

    def go():
        led = RegretLedger()
        for i in range(2):
            TaskRun(p, i, led, np.random.default_rng(9)).play_cyclic(np.eye(2), 6, "explore")
        return led

    a, b = go(), go()
    for f in ("reward", "inst_regret", "cum_regret"):
        assert np.array_equal(a.column(f), b.column(f))


# ---------------------------------------------------------------- diversity


def test_diversity_orthonormal_cycle():
    r = 3
    dirs = random_grassmann_basis(6, r, np.random.default_rng(0))
    seq = [Task(dirs[:, i % r]) for i in range(12)]
    assert diversity_index(seq, r, r) == pytest.approx(1 / r, abs=1e-12)


def test_diversity_identical_tasks():
    seq = [Task(np.array([1.0, 2.0, 0.0]))] * 5
    assert diversity_index(seq, 3, 2) == pytest.approx(0.0, abs=1e-20)


def test_diversity_too_long_window():
    with pytest.raises(ValueError):
        diversity_index([Task(np.ones(2))] * 2, 3, 1)


def test_diversity_rotation_invariant():
    rng = np.random.default_rng(4)
    w = rng.standard_normal((5, 9))
    rot = random_grassmann_basis(5, 5, rng)
    assert diversity_index(w, 3, 2) == pytest.approx(diversity_index(rot @ w, 3, 2), rel=1e-10)
