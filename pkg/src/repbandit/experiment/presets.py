"""Named experiment configurations.

``*-desk`` presets are scaled down (4 segments of 100 tasks, 500 rounds each)
so they finish in seconds to minutes; ``*-full`` presets use the full sizes
(4 segments of 400 tasks, 2000 rounds each). Synthetic presets write one
ledger row per task; the per-round envelopes are always written in full.
"""
from __future__ import annotations

from .config import ExperimentConfig, PolicySpec

SYNTHETIC_POLICIES = ["cd_repl", "independent_etc", "semi_oracle", "non_adaptive", "oracle"]
KAPPA_REGIMES = {"a": 0.9, "b": 0.5, "c": 0.15}
DESK = {"m": 4, "tasks_per_segment": 100, "N": 500}
FULL = {"m": 4, "tasks_per_segment": 400, "N": 2000}
L_SWEEP = (3, 6, 12, 24)


def _synthetic(name: str, kappa: float, size: dict, check=None) -> ExperimentConfig:
    return ExperimentConfig(
        scenario="synthetic",
        policies=[PolicySpec(p, p) for p in SYNTHETIC_POLICIES],
        seeds=list(range(10)),
        preset_name=name,
        synthetic={"d": 20, "r": 3, "noise_scale": 0.3, "kappa_targets": [kappa] * (size["m"] - 1), **size},
        policy_config={"kappa": kappa},
        ledger_detail="task",
        check=check,
    )


def _fig4() -> ExperimentConfig:
    kappa = KAPPA_REGIMES["a"]
    return ExperimentConfig(
        scenario="synthetic",
        policies=[PolicySpec(f"cd_repl_L{L}", "cd_repl", {"L": L}) for L in L_SWEEP],
        seeds=list(range(10)),
        preset_name="fig4-L-sweep",
        synthetic={
            "d": 20, "r": 3, "noise_scale": 0.3, "kappa_targets": [kappa] * 3, "fixed_schedule": True, **DESK,
        },
        policy_config={"kappa": kappa},
        ledger_detail="task",
        check="L_spread",
    )


def _recsys() -> ExperimentConfig:
    return ExperimentConfig(
        scenario="recsys",
        policies=[PolicySpec(p, p) for p in SYNTHETIC_POLICIES],
        seeds=list(range(10)),
        preset_name="recsys-standin",
        recsys={"arms": "standin", "N": 200, "noise_scale": 0.2, "r": 2},
        check="beats_etc",
    )


def _wcst() -> ExperimentConfig:
    return ExperimentConfig(
        scenario="wcst",
        policies=[PolicySpec(p, p) for p in ("linear_rep", "tabular_q", "random", "oracle")],
        seeds=list(range(10)),
        preset_name="wcst",
        wcst={"rule_period": 20, "total_rounds": 600},
        check="wcst",
    )


def _smoke() -> ExperimentConfig:
    return ExperimentConfig(
        scenario="synthetic",
        policies=[PolicySpec("independent_etc", "independent_etc")],
        seeds=[0],
        preset_name="smoke",
        synthetic={"d": 6, "r": 2, "m": 1, "tasks_per_segment": 2, "N": 50, "ell": 2, "kappa_targets": []},
    )


PRESETS = {
    "smoke": _smoke,
    **{
        f"fig3{k}-desk": (lambda k=k: _synthetic(f"fig3{k}-desk", KAPPA_REGIMES[k], DESK, "ordering" if k == "a" else None))
        for k in KAPPA_REGIMES
    },
    **{f"fig3{k}-full": (lambda k=k: _synthetic(f"fig3{k}-full", KAPPA_REGIMES[k], FULL)) for k in KAPPA_REGIMES},
    "fig4-L-sweep": _fig4,
    "recsys-standin": _recsys,
    "wcst": _wcst,
}

DESCRIPTIONS = {
    "smoke": "one policy, one seed, 2 tasks x 50 rounds",
    "fig3a-desk": "synthetic, large representation shifts (kappa 0.9), desk scale, 5 policies x 10 seeds",
    "fig3b-desk": "synthetic, medium shifts (kappa 0.5), desk scale",
    "fig3c-desk": "synthetic, small shifts (kappa 0.15), desk scale",
    "fig3a-full": "as fig3a-desk at full size (1600 tasks x 2000 rounds)",
    "fig3b-full": "as fig3b-desk at full size",
    "fig3c-full": "as fig3c-desk at full size",
    "fig4-L-sweep": "CD-RepL with L in {3, 6, 12, 24} on one desk schedule",
    "recsys-standin": "bundled stand-in factored dataset, groups 11/6/6, N=200, sigma=0.2",
    "wcst": "card sorting, rule changes every 20 rounds, 600 rounds",
}


def get_preset(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
