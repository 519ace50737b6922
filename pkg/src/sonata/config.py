"""TOML configuration loading for the command-line tools."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .errors import ConfigError


def load_toml(source) -> dict:
    """Parse TOML from a path or a text string."""
    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    elif isinstance(source, str) and "\n" not in source and source.endswith(".toml"):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source
    try:
        return _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"bad TOML: {exc}") from None


@dataclass(frozen=True)
class RunConfig:
    """Settings shared by the plan and run commands."""

    queries_path: str
    trace_path: str
    n_max: int
    b_max: int
    seed: int = 0
    alpha: float | None = None
    window: float | None = None
    training_windows: int = 3
    levels: dict = field(default_factory=dict)        # query -> [level, ...]
    refine_keys: dict = field(default_factory=dict)   # query -> field
    thresholds: dict = field(default_factory=dict)    # query -> {level: bound}


def parse_run_config(data: dict) -> RunConfig:
    try:
        switch = data["switch"]
        run = data["run"]
        return RunConfig(
            queries_path=run["queries"],
            trace_path=run["trace"],
            n_max=int(switch["max_tuples"]),
            b_max=int(switch["max_bits"]),
            seed=int(run.get("seed", 0)),
            alpha=run.get("alpha"),
            window=run.get("window"),
            training_windows=int(run.get("training_windows", 3)),
            levels={k: list(v) for k, v in data.get("levels", {}).items()},
            refine_keys=dict(data.get("refine", {})),
            thresholds=dict(data.get("thresholds", {})),
        )
    except KeyError as exc:
        raise ConfigError(f"config missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from None
