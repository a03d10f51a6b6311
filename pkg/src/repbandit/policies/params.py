"""Policy configuration and the parameter formulas the algorithms are tuned with."""
from __future__ import annotations

import logging
import math
from functools import lru_cache
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize, stats

log = logging.getLogger(__name__)

THRESHOLD_RULES = ("closed_form", "exact")


@dataclass
class PolicyConfig:
    """Knobs shared by every policy.

    ``lambda0=None`` means "derive from the action set": the largest uniform
    probe scale keeping every unit direction feasible.

    ``n_det_max=None`` caps the probing rounds at ``n_det_frac`` of the task,
    but never below one full sweep of the complement, ``d - r``.

    ``threshold_rule`` selects how the detection threshold is set once
    ``n_det`` is known: ``"closed_form"`` uses ``2 sqrt(log(2 S^2 N) / n_det)``;
    ``"exact"`` picks the threshold whose false-alarm probability under
    Gaussian noise equals ``false_alarm`` (default ``1 / (S N)``).
    """

    d: int
    r: int
    N: int
    S: int
    ell: int = 3
    nu: float = 0.01
    lambda0: float | None = None
    theta_min: float = 0.5
    theta_max: float = 1.5
    kappa: float = 0.5
    noise_scale: float = 1.0
    L: int | None = None
    n_det_max: int | None = None
    n_det_frac: float = 0.1
    b_max: int = 1
    n1_max_frac: float = 0.5
    threshold_rule: str = "exact"
    false_alarm: float | None = None

    def __post_init__(self):
        if self.L is None:
            self.L = self.ell
        if not 1 <= self.r < self.d:
            raise ValueError(f"need 1 <= r < d, got r={self.r}, d={self.d}")
        if self.L < 1 or self.ell < 1:
            raise ValueError("L and ell must be positive")
        if not 0 < self.kappa <= 1:
            raise ValueError("kappa must lie in (0, 1]")
        if self.lambda0 is not None and self.lambda0 <= 0:
            raise ValueError("lambda0 must be positive")
        if self.threshold_rule not in THRESHOLD_RULES:
            raise ValueError(f"threshold_rule must be one of {THRESHOLD_RULES}")
        if self.b_max < 1:
            raise ValueError("b_max must be >= 1")
        if not 0 < self.n_det_frac <= 0.25:
            raise ValueError("n_det_frac must lie in (0, 0.25]")
        if not 0 < self.n1_max_frac < 1:
            raise ValueError("n1_max_frac must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def log_term(self) -> float:
        return math.log(2 * self.S**2 * self.N)

    @property
    def false_alarm_level(self) -> float:
        return self.false_alarm if self.false_alarm is not None else 1.0 / (self.S * self.N)


def round_up(n: float, multiple: int) -> int:
    return int(math.ceil(math.ceil(n) / multiple) * multiple)


def fit_budget(raw: float, multiple: int, limit: int) -> int:
    """Round ``raw`` up to a multiple of ``multiple``; if that reaches ``limit``
    fall back to the largest multiple not exceeding ``limit``."""
    n = round_up(raw, multiple)
    if n <= limit:
        return n
    capped = (limit // multiple) * multiple
    if capped < multiple:
        raise ValueError(f"no multiple of {multiple} fits in {limit} rounds")
    log.debug("exploration budget %d capped to %d", n, capped)
    return capped


def rep_e_rounds(cfg: PolicyConfig, L: int | None = None, rounds: int | None = None) -> int:
    """RepE exploration length ``c dr sqrt(N / L)``, a multiple of ``d``.

    ``c = min(1, n1_max_frac N / (dr sqrt(N / ell)))`` shrinks the constant
    when the formula at ``L = ell`` would not fit in ``n1_max_frac`` of a task,
    which keeps the ``1 / sqrt(L)`` scaling instead of clipping every ``L`` to
    the same value. The result is also capped at ``n1_max_frac`` of ``rounds``.
    """
    L = cfg.L if L is None else L
    rounds = cfg.N if rounds is None else rounds
    scale = cfg.d * cfg.r * math.sqrt(cfg.N)
    c = min(1.0, cfg.n1_max_frac * cfg.N / (scale / math.sqrt(cfg.ell)))
    return fit_budget(c * scale / math.sqrt(L), cfg.d, int(cfg.n1_max_frac * rounds))


def rep_t_rounds(cfg: PolicyConfig, r: int | None = None, rounds: int | None = None) -> int:
    """RepT exploration length ``r sqrt(N)``, a multiple of ``r``."""
    r = cfg.r if r is None else r
    rounds = cfg.N if rounds is None else rounds
    return _capped(r * math.sqrt(cfg.N), r, rounds, cfg.n1_max_frac)


def etc_rounds(cfg: PolicyConfig, dim: int | None = None, rounds: int | None = None) -> int:
    """Single-task explore-then-commit balance ``d sqrt(N)``."""
    dim = cfg.d if dim is None else dim
    rounds = cfg.N if rounds is None else rounds
    return _capped(dim * math.sqrt(cfg.N), dim, rounds, cfg.n1_max_frac)


def _capped(raw: float, multiple: int, rounds: int, frac: float) -> int:
    n = round_up(raw, multiple)
    if n < rounds:
        return n
    return fit_budget(raw, multiple, int(frac * rounds))


@dataclass(frozen=True)
class DetectionBudget:
    n_det: int
    xi_det: float
    raw_n_det: int
    capped: bool


def raw_n_det(cfg: PolicyConfig, lambda0: float) -> int:
    """``ceil(9 (d - r) log(2 S^2 N) / (theta_min^2 lambda0^2 kappa^2))``."""
    val = 9 * (cfg.d - cfg.r) * cfg.log_term / (cfg.theta_min**2 * lambda0**2 * cfg.kappa**2)
    return max(1, math.ceil(val))


def xi_closed_form(cfg: PolicyConfig, n_det: int) -> float:
    return 2.0 * math.sqrt(cfg.log_term / n_det)


@lru_cache(maxsize=256)
def xi_exact(n_det: int, level: float) -> float:
    """Half-width ``xi`` with ``P(| ||eta|| / sqrt(n) - 1 | > xi) = level`` for ``eta ~ N(0, I_n)``."""
    chi = stats.chi2(n_det)

    def tail(xi: float) -> float:
        hi = chi.logsf(n_det * (1 + xi) ** 2)
        lo = chi.logcdf(n_det * (1 - xi) ** 2) if xi < 1 else -np.inf
        return np.logaddexp(hi, lo) - math.log(level)

    if tail(1e-12) <= 0:
        return 0.0
    upper = 1.0
    while tail(upper) > 0:
        upper *= 2
    return float(optimize.brentq(tail, 1e-12, upper, xtol=1e-12))


def detection_budget(cfg: PolicyConfig, lambda0: float, rounds: int | None = None) -> DetectionBudget:
    """Number of probing rounds and threshold for the change test.

    ``n_det`` is capped at ``rounds / 4`` and at ``n_det_max`` (or its
    default, see :class:`PolicyConfig`) so detection never eats most of a task.
    """
    rounds = cfg.N if rounds is None else rounds
    raw = raw_n_det(cfg, lambda0)
    cap = max(1, rounds // 4)
    if cfg.n_det_max is not None:
        cap = min(cap, cfg.n_det_max)
    else:
        cap = min(cap, max(cfg.d - cfg.r, int(cfg.n_det_frac * rounds)))
    n_det = min(raw, cap)
    capped = n_det < raw
    if capped:
        log.debug("n_det %d capped to %d", raw, n_det)
    if cfg.threshold_rule == "closed_form":
        xi = xi_closed_form(cfg, n_det)
    else:
        xi = xi_exact(n_det, cfg.false_alarm_level)
    return DetectionBudget(n_det=n_det, xi_det=xi, raw_n_det=raw, capped=capped)


def initial_exploration_cycles(cfg: PolicyConfig, n_det: int) -> int:
    """``b = ceil(9 d r theta_max^2 n_det / (4 nu^2 sqrt(ell N) (d - r) log(2 S^2 N)))``,
    floored at 1 and capped at ``b_max``."""
    val = (
        9 * cfg.d * cfg.r * cfg.theta_max**2 * n_det
        / (4 * cfg.nu**2 * math.sqrt(cfg.ell * cfg.N) * (cfg.d - cfg.r) * cfg.log_term)
    )
    b = max(1, math.ceil(val))
    if b > cfg.b_max:
        log.debug("b = %d capped to %d", b, cfg.b_max)
    return min(b, cfg.b_max)
