"""Experiment configuration: a single JSON document per experiment.

Schema (all keys optional except ``scenario``, ``policies`` and ``seeds``)::

    {
      "scenario": "synthetic" | "recsys" | "wcst",
      "policies": ["cd_repl", {"label": "cd_repl_L6", "policy": "cd_repl", "overrides": {"L": 6}}],
      "seeds": [0, 1, 2],
      "output_dir": "results",
      "preset_name": "fig3a-desk",
      "synthetic": {...SyntheticSpec fields..., "fixed_schedule": false},
      "recsys": {"arms": "standin" | path, "users": path, "groups": path, "N": 200, "noise_scale": 0.2, "r": 2},
      "wcst": {"rule_period": 20, "total_rounds": 600, "random_order": false, "lr": 0.1, "epsilon": 0.1},
      "policy_config": {...PolicyConfig overrides...},
      "ledger_detail": "round" | "task",
      "check": null | "ordering" | "beats_etc" | "wcst" | "L_spread"
    }
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from ..policies.baselines import POLICIES
from ..policies.params import PolicyConfig
from ..scenarios.synthetic import SyntheticSpec
from ..scenarios.wcst import WCST_POLICIES

SCENARIOS = ("synthetic", "recsys", "wcst")
CHECKS = ("ordering", "beats_etc", "wcst", "L_spread")
LEDGER_DETAIL = ("round", "task")
STANDIN = "standin"

_POLICY_CONFIG_KEYS = {f.name for f in dataclasses.fields(PolicyConfig)} - {"d", "r", "N", "S"}
_SYNTHETIC_KEYS = {f.name for f in dataclasses.fields(SyntheticSpec)} | {"fixed_schedule"}
_RECSYS_KEYS = {"arms", "users", "groups", "N", "noise_scale", "r"}
_WCST_KEYS = {"rule_period", "total_rounds", "random_order", "lr", "epsilon"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PolicySpec:
    label: str
    policy: str
    overrides: dict = field(default_factory=dict)

    def to_json(self):
        if self.label == self.policy and not self.overrides:
            return self.policy
        return {"label": self.label, "policy": self.policy, "overrides": dict(self.overrides)}


@dataclass
class ExperimentConfig:
    scenario: str
    policies: list[PolicySpec]
    seeds: list[int]
    output_dir: str = "results"
    preset_name: str | None = None
    synthetic: dict = field(default_factory=dict)
    recsys: dict = field(default_factory=dict)
    wcst: dict = field(default_factory=dict)
    policy_config: dict = field(default_factory=dict)
    ledger_detail: str = "round"
    check: str | None = None

    @property
    def name(self) -> str:
        return self.preset_name or "custom"

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "policies": [p.to_json() for p in self.policies],
            "seeds": list(self.seeds),
            "output_dir": self.output_dir,
            "preset_name": self.preset_name,
            "synthetic": dict(self.synthetic),
            "recsys": dict(self.recsys),
            "wcst": dict(self.wcst),
            "policy_config": dict(self.policy_config),
            "ledger_detail": self.ledger_detail,
            "check": self.check,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form, ignoring where outputs go."""
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, raw: dict) -> ExperimentConfig:
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("scenario", "policies", "seeds"):
            if key not in raw:
                raise ConfigError(f"missing required key {key!r}")
        kwargs = dict(raw)
        kwargs["policies"] = [_parse_policy(p) for p in raw["policies"]]
        kwargs["seeds"] = _parse_seed_list(raw["seeds"])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def validate(self, check_files: bool = True) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if not self.policies:
            raise ConfigError("need at least one policy")
        labels = [p.label for p in self.policies]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"policy labels must be distinct, got {labels}")
        allowed = WCST_POLICIES if self.scenario == "wcst" else tuple(POLICIES)
        for p in self.policies:
            if p.policy not in allowed:
                raise ConfigError(f"policy {p.policy!r} is not available for scenario {self.scenario!r}")
            if p.label in ("", ".", "..") or re.search(r"[\\/]", p.label):
                raise ConfigError(f"policy label {p.label!r} is not a valid directory name")
            _check_keys(p.overrides, _POLICY_CONFIG_KEYS, f"overrides of {p.label}")
        if self.ledger_detail not in LEDGER_DETAIL:
            raise ConfigError(f"ledger_detail must be one of {LEDGER_DETAIL}")
        if self.check is not None and self.check not in CHECKS:
            raise ConfigError(f"check must be one of {CHECKS}")
        _check_keys(self.policy_config, _POLICY_CONFIG_KEYS, "policy_config")
        if self.scenario == "synthetic":
            _check_keys(self.synthetic, _SYNTHETIC_KEYS, "synthetic")
            try:
                self.synthetic_spec(0)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"synthetic: {exc}") from exc
        elif self.scenario == "recsys":
            _check_keys(self.recsys, _RECSYS_KEYS, "recsys")
            if check_files and self.recsys.get("arms", STANDIN) != STANDIN:
                for key in ("arms", "users", "groups"):
                    path = self.recsys.get(key)
                    if path is None or not Path(path).is_file():
                        raise ConfigError(f"recsys.{key}: file {path!r} does not exist")
        else:
            _check_keys(self.wcst, _WCST_KEYS, "wcst")
            if int(self.wcst.get("rule_period", 20)) < 1:
                raise ConfigError("wcst.rule_period must be >= 1")
            if int(self.wcst.get("total_rounds", 600)) < 1:
                raise ConfigError("wcst.total_rounds must be >= 1")
        if self.scenario != "synthetic" and self.synthetic:
            raise ConfigError("synthetic settings given for a non-synthetic scenario")

    def synthetic_spec(self, seed: int) -> SyntheticSpec:
        """Spec for one seed; the schedule seed is offset by ``seed`` unless ``fixed_schedule``."""
        kw = dict(self.synthetic)
        fixed = kw.pop("fixed_schedule", False)
        base = kw.pop("seed", 0)
        return SyntheticSpec(seed=base if fixed else base + seed, **kw)


def _check_keys(d: dict, allowed: set, where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    bad = set(d) - allowed
    if bad:
        raise ConfigError(f"unknown keys in {where}: {sorted(bad)}")


def _parse_policy(p) -> PolicySpec:
    if isinstance(p, str):
        return PolicySpec(p, p)
    if isinstance(p, dict) and "policy" in p:
        extra = set(p) - {"label", "policy", "overrides"}
        if extra:
            raise ConfigError(f"unknown keys in policy entry: {sorted(extra)}")
        return PolicySpec(p.get("label", p["policy"]), p["policy"], dict(p.get("overrides", {})))
    raise ConfigError(f"bad policy entry {p!r}")


def _parse_seed_list(seeds) -> list[int]:
    if isinstance(seeds, str):
        return parse_seeds(seeds)
    if not isinstance(seeds, list) or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
        raise ConfigError("seeds must be a list of integers or a range string like '0..9'")
    return list(seeds)


def parse_seeds(text: str) -> list[int]:
    """``"0..9"`` (inclusive), ``"3"`` or ``"1,4,7"``."""
    text = text.strip()
    m = re.fullmatch(r"(\d+)\.\.(\d+)", text)
    if m:
        a, b = int(m.group(1)), int(m.group(2))
        if b < a:
            raise ConfigError(f"empty seed range {text!r}")
        return list(range(a, b + 1))
    try:
        return [int(s) for s in text.split(",")]
    except ValueError:
        raise ConfigError(f"cannot parse seeds {text!r}") from None


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(raw)
