"""Wisconsin Card Sorting Task as a linear bandit with a switching representation.

A card is a 4x3 matrix ``A`` whose columns one-hot encode its number, color
and shape. The sorting rule is a canonical vector ``B`` of R^3, so the pile to
choose is ``A B`` and the reward of pile ``x`` is ``x^T A B``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

ATTRIBUTES = ("number", "color", "shape")
N_VALUES = 4
N_CARDS = N_VALUES ** len(ATTRIBUTES)
WCST_POLICIES = ("linear_rep", "tabular_q", "random", "oracle")


def card_matrix(values) -> np.ndarray:
    """``(4, 3)`` card matrix from the attribute values ``(number, color, shape)``."""
    a = np.zeros((N_VALUES, len(ATTRIBUTES)))
    a[list(values), np.arange(len(ATTRIBUTES))] = 1.0
    return a


def card_index(values) -> int:
    n, c, s = (int(v) for v in values)
    return (n * N_VALUES + c) * N_VALUES + s


def rule_vector(rule: int) -> np.ndarray:
    b = np.zeros(len(ATTRIBUTES))
    b[rule] = 1.0
    return b


def rule_schedule(rule_period: int, total_rounds: int, rng: np.random.Generator, random_order: bool = False) -> np.ndarray:
    """Active rule per round. Rules rotate cyclically every ``rule_period`` rounds;
    with ``random_order`` each block draws a rule different from the last one."""
    if rule_period < 1:
        raise ValueError("rule_period must be >= 1")
    n_blocks = -(-total_rounds // rule_period)
    if random_order:
        blocks = [0]
        for _ in range(n_blocks - 1):
            blocks.append(int(rng.choice([k for k in range(len(ATTRIBUTES)) if k != blocks[-1]])))
        blocks = np.array(blocks)
    else:
        blocks = np.arange(n_blocks) % len(ATTRIBUTES)
    return np.repeat(blocks, rule_period)[:total_rounds]


class LinearRepLearner:
    """Recovers the rule by least squares on ``y = (A^T x)^T B``.

    Keeps ``G = sum A^T x x^T A`` and ``h = sum A^T x y``. While ``G`` is
    singular it sorts by an attribute that is still consistent with every
    observation; afterwards it plays ``argmax A B_hat`` with
    ``B_hat = G^{-1} h``. A zero reward for a predicted match means the rule
    changed: the sums restart from that observation alone.
    """

    def __init__(self):
        self.reset()
        self.resets = 0

    def reset(self) -> None:
        self.g = np.zeros((3, 3))
        self.h = np.zeros(3)
        self._rows: list[tuple[np.ndarray, float]] = []
        self._turn = 0

    def b_hat(self) -> np.ndarray | None:
        if np.linalg.matrix_rank(self.g) < 3:
            return None
        return np.linalg.solve(self.g, self.h)

    def _candidates(self) -> list[int]:
        ok = []
        for k in range(3):
            b = rule_vector(k)
            if all(abs(z @ b - y) < 1e-9 for z, y in self._rows):
                ok.append(k)
        return ok

    def act(self, card: np.ndarray) -> tuple[int, bool]:
        """Chosen pile and whether the learner predicts a match."""
        b = self.b_hat()
        if b is not None:
            return int(np.argmax(card @ b)), True
        cands = self._candidates() or list(range(3))
        attr = cands[self._turn % len(cands)]
        self._turn += 1
        return int(np.argmax(card[:, attr])), False

    def update(self, card: np.ndarray, pile: int, reward: float, predicted: bool) -> None:
        if predicted and reward == 0:
            self.resets += 1
            self.reset()
        z = card[pile]  # A^T x for x = e_pile
        self.g += np.outer(z, z)
        self.h += z * reward
        self._rows.append((z, reward))


@dataclass
class WcstTrace:
    policy: str
    rules: np.ndarray
    cards: np.ndarray  # (T, 3) attribute values
    actions: np.ndarray
    rewards: np.ndarray

    @property
    def mean_reward(self) -> float:
        return float(self.rewards.mean())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "rule", "card", "action", "reward", "policy"])
            for t in range(len(self.rewards)):
                w.writerow([
                    t + 1,
                    ATTRIBUTES[self.rules[t]],
                    card_index(self.cards[t]),
                    int(self.actions[t]),
                    int(self.rewards[t]),
                    self.policy,
                ])


def wcst_run(
    rule_period: int,
    total_rounds: int,
    policy: str,
    rng: np.random.Generator,
    random_order: bool = False,
    lr: float = 0.1,
    epsilon: float = 0.1,
) -> WcstTrace:
    """Play ``total_rounds`` rounds of card sorting with ``policy``.

    Cards are uniform over all 64 attribute combinations.
    """
    if policy not in WCST_POLICIES:
        raise ValueError(f"unknown WCST policy {policy!r}; choose from {WCST_POLICIES}")
    if total_rounds < 1:
        raise ValueError("total_rounds must be positive")
    rule_rng, card_rng, policy_rng = rng.spawn(3)
    rules = rule_schedule(rule_period, total_rounds, rule_rng, random_order)
    cards = card_rng.integers(0, N_VALUES, size=(total_rounds, len(ATTRIBUTES)))
    actions = np.empty(total_rounds, dtype=int)
    rewards = np.empty(total_rounds)

    learner = LinearRepLearner() if policy == "linear_rep" else None
    q = np.zeros((N_CARDS, N_VALUES)) if policy == "tabular_q" else None
    for t in range(total_rounds):
        a = card_matrix(cards[t])
        correct = int(cards[t, rules[t]])
        predicted = False
        if policy == "oracle":
            pile = correct
        elif policy == "random":
            pile = int(policy_rng.integers(N_VALUES))
        elif policy == "tabular_q":
            s = card_index(cards[t])
            if policy_rng.random() < epsilon:
                pile = int(policy_rng.integers(N_VALUES))
            else:
                row = q[s]
                pile = int(policy_rng.choice(np.flatnonzero(row == row.max())))
        else:
            pile, predicted = learner.act(a)
        y = float(a[pile] @ rule_vector(rules[t]))
        if policy == "tabular_q":
            # discount 0: each round is its own episode
            q[s, pile] += lr * (y - q[s, pile])
        elif learner is not None:
            learner.update(a, pile, y, predicted)
        actions[t] = pile
        rewards[t] = y
    return WcstTrace(policy, rules, cards, actions, rewards)
