"""Run configuration: a flat TOML file, overridable from the command line."""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields
from datetime import date, datetime
from decimal import Decimal, InvalidOperation
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigurationError
from .model import TINYBARS_PER_HBAR, Cadence, Label

SCHEMA_VERSION = 1

METRICS = (
    "tx_counts",
    "active_accounts",
    "released_supply",
    "assortativity",
    "core_fraction",
    "power_law",
    "wealth",
    "correlation",
)


@dataclass
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    archive: str = "archive"
    labels: str | None = None
    hbar_prices: str | None = None
    btc_prices: str | None = None
    cadence: str = "weekly"
    start: str | None = None
    end: str | None = None
    period_start: str | None = None
    metrics: list = field(default_factory=lambda: list(METRICS))
    min_balance_hbar: str = "10"
    exclude_labels: list = field(default_factory=lambda: ["FeeAccount", "StakingReward"])
    min_tail: int = 50
    output_dir: str = "report"
    workers: int = 1
    seed: int = 42
    # ingestion
    endpoint: str | None = None
    fixtures: str | None = None
    rate_limit: float = 10.0
    retry_budget: int = 8
    concurrency: int = 4
    record_cap: int = 100_000
    strict_zero_sum: bool = False
    # demo generator
    demo_transactions: int = 10_000
    demo_accounts: int = 1_500
    demo_weeks: int = 10

    def __post_init__(self):
        self.validate()
        self._base = Path(".")

    def path(self, name: str) -> Path | None:
        """A path-valued field, relative paths taken from the config file's directory."""
        value = getattr(self, name)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self._base / p

    def validate(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigurationError(
                f"config schema version {self.schema_version!r}, expected {SCHEMA_VERSION}")
        try:
            Cadence(self.cadence)
        except ValueError:
            raise ConfigurationError(f"cadence must be daily or weekly, got {self.cadence!r}") from None
        for name in ("start", "end", "period_start"):
            value = getattr(self, name)
            if isinstance(value, (date, datetime)):
                setattr(self, name, value.isoformat())  # unquoted TOML dates
        unknown = set(self.metrics) - set(METRICS)
        if unknown:
            raise ConfigurationError(f"unknown metrics {sorted(unknown)}; choose from {list(METRICS)}")
        for l in self.exclude_labels:
            Label.parse(l)
        self.min_balance_hbar = str(self.min_balance_hbar)
        if self.min_balance < 0:
            raise ConfigurationError("min_balance_hbar must be non-negative")
        for name in ("min_tail", "workers", "concurrency", "record_cap", "retry_budget"):
            if int(getattr(self, name)) < (0 if name == "retry_budget" else 1):
                raise ConfigurationError(f"{name} out of range: {getattr(self, name)!r}")

    @property
    def min_balance(self) -> int:
        """Threshold in tinybars."""
        try:
            return int(Decimal(self.min_balance_hbar) * TINYBARS_PER_HBAR)
        except InvalidOperation:
            raise ConfigurationError(f"bad min_balance_hbar {self.min_balance_hbar!r}") from None

    @property
    def excluded_labels(self) -> frozenset:
        return frozenset(Label.parse(l) for l in self.exclude_labels)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigurationError(f"config file {path} not found") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from None
        config = cls.from_dict(data)
        config._base = Path(path).parent
        return config

    def replace(self, **overrides) -> "RunConfig":
        data = self.to_dict()
        data.update({k: v for k, v in overrides.items() if v is not None})
        config = RunConfig.from_dict(data)
        config._base = self._base
        return config

    def dumps(self) -> str:
        lines = []
        for k, v in self.to_dict().items():
            if v is None:
                continue
            lines.append(f"{k} = {_toml_value(v)}")
        return "\n".join(lines) + "\n"

    def save(self, path):
        Path(path).write_text(self.dumps())


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    s = str(v).replace("\\", "\\\\").replace('"', '\\"')
    return f'"{s}"'
