"""Run configuration and its JSON file form."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..context import Params

# Overrides outside these ranges are rejected before a run starts.
SANE_RANGES = {
    "eps": (1e-6, 0.5),
    "theta": (1e-9, 0.5),
    "delta_low": (1, 10 ** 9),
    "ell": (1, 10 ** 6),
    "r": (1, 10 ** 6),
    "r_prime": (1, 10 ** 7),
    "c1": (1e-3, 1e3),
    "fp_t": (1, 10 ** 6),
    "gamma_acct": (0.0, 10.0),
    "sct_c": (0.0, 1e4),
    "split_c": (0.1, 100.0),
    "shatter_c": (0.0, 100.0),
}

PHASES = ("acd", "high-degree", "low-degree")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    bandwidth: int | None = None
    kind: str = "gnp"
    instance: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)
    forced_phase: bool = False
    phases: list[str] = field(default_factory=lambda: list(PHASES))
    emit_transcript: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        known = {f.name for f in fields(Params)}
        for k, v in self.overrides.items():
            if k not in known:
                raise ConfigError(f"unknown parameter override {k!r}")
            lo, hi = SANE_RANGES.get(k, (None, None))
            if v is not None and lo is not None and not lo <= v <= hi:
                raise ConfigError(f"override {k}={v} outside [{lo}, {hi}]")
        for ph in self.phases:
            if ph not in PHASES:
                raise ConfigError(f"unknown phase {ph!r}; expected one of {PHASES}")
        if self.bandwidth is not None and self.bandwidth < 8:
            raise ConfigError("bandwidth must be at least 8 bits")

    def params(self) -> Params:
        if self.forced_phase:
            return Params.forced_phase(**self.overrides)
        return Params(**self.overrides)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        return cls(**data)

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))
