from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import ConfigInvalid
from .opll import check_threshold_pair


@dataclass(frozen=True)
class ThresholdPair:
    fix: float
    per: float


@dataclass(frozen=True)
class PipelineConfig:
    """Pipeline settings. Defaults are the published adaptation settings."""

    semantic: ThresholdPair = ThresholdPair(0.5, 0.8)
    instance: ThresholdPair = ThresholdPair(0.5, 0.3)
    amodal: ThresholdPair = ThresholdPair(0.3, 0.5)
    strict: ThresholdPair = ThresholdPair(0.95, 0.1)
    r: int = 10
    capacity: int = 2048
    confidence_floor: float = 0.5
    seed: int = 0

    def validate(self):
        for name in ("semantic", "instance", "amodal", "strict"):
            pair = getattr(self, name)
            check_threshold_pair(pair.fix, pair.per, name)
        if not isinstance(self.r, int) or self.r < 0:
            raise ConfigInvalid(f"R must be a non-negative integer, got {self.r!r}")
        if not isinstance(self.capacity, int) or self.capacity < 0:
            raise ConfigInvalid(f"K must be a non-negative integer, got {self.capacity!r}")
        if not 0.0 <= self.confidence_floor <= 1.0:
            raise ConfigInvalid(f"confidence_floor {self.confidence_floor} outside [0, 1]")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise ConfigInvalid(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        return self

    def branch_params(self):
        return {b: (getattr(self, b).fix, getattr(self, b).per) for b in ("semantic", "instance", "amodal")}

    def to_dict(self):
        return {
            "thresholds": {b: {"fix": getattr(self, b).fix, "per": getattr(self, b).per}
                           for b in ("amodal", "instance", "semantic")},
            "strict": {"fix": self.strict.fix, "per": self.strict.per},
            "R": self.r,
            "K": self.capacity,
            "confidence_floor": self.confidence_floor,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigInvalid("config must be a JSON object")
        known = {"thresholds", "strict", "R", "K", "confidence_floor", "seed"}
        unknown = set(d) - known
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
        cfg = cls()
        kw = {}
        try:
            for b, pair in d.get("thresholds", {}).items():
                if b not in ("amodal", "instance", "semantic"):
                    raise ConfigInvalid(f"unknown branch {b!r} in thresholds")
                old = getattr(cfg, b)
                kw[b] = ThresholdPair(float(pair.get("fix", old.fix)), float(pair.get("per", old.per)))
            if "strict" in d:
                kw["strict"] = ThresholdPair(float(d["strict"].get("fix", cfg.strict.fix)),
                                             float(d["strict"].get("per", cfg.strict.per)))
        except (TypeError, ValueError, AttributeError) as e:
            if isinstance(e, ConfigInvalid):
                raise
            raise ConfigInvalid(f"malformed threshold entry: {e}") from e
        for key, attr in (("R", "r"), ("K", "capacity"), ("seed", "seed")):
            if key in d:
                kw[attr] = d[key]
        if "confidence_floor" in d:
            kw["confidence_floor"] = d["confidence_floor"]
        return replace(cfg, **kw).validate()

    def override(self, **kw) -> "PipelineConfig":
        """Return a copy with non-None keyword values replaced. Threshold
        pairs may be given as ``amodal_fix=...`` etc."""
        changes = {}
        for key, value in kw.items():
            if value is None:
                continue
            if "_" in key and key.rsplit("_", 1)[1] in ("fix", "per"):
                branch, part = key.rsplit("_", 1)
                pair = changes.get(branch, getattr(self, branch))
                changes[branch] = replace(pair, **{part: float(value)})
            else:
                changes[key] = value
        return replace(self, **changes).validate()


def load_config(path=None) -> PipelineConfig:
    if path is None:
        return PipelineConfig().validate()
    try:
        data = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigInvalid(f"cannot read config {path}: {e.strerror}") from e
    except json.JSONDecodeError as e:
        raise ConfigInvalid(f"config {path} is not valid JSON: {e.msg}") from e
    return PipelineConfig.from_dict(data)
