"""Plain-text run configuration: `key = value` lines, strict keys."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ValidationError


@dataclass
class RunConfig:
    mesh: str | None = None
    spacing: float = 0.05
    rho: tuple[float, ...] = (0.1, 0.2, 0.4)
    n: int = 10
    d: float = 0.004
    seed: int = 0
    method: str = "field_lattice"
    source: str = "constant"
    threads: int = 1
    levels: int | None = None
    iterations: int = 10
    scale: float = 1.0

    def validate(self):
        if self.spacing <= 0:
            raise ValidationError("spacing must be positive")
        if self.n < 2 or self.n % 2:
            raise ValidationError("n must be even and >= 2")
        if self.d <= 0:
            raise ValidationError("d must be positive")
        if any(r <= 0 for r in self.rho):
            raise ValidationError("rho values must be positive")
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")
        if self.levels is not None and self.levels < 1:
            raise ValidationError("levels must be >= 1")
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        if self.scale <= 0:
            raise ValidationError("scale must be positive")
        if self.method not in ("field_lattice", "poisson_disk", "fps"):
            raise ValidationError(f"unknown method {self.method}")
        if self.source not in ("vertex_color", "texture_atlas", "normal",
                               "constant"):
            raise ValidationError(f"unknown source {self.source}")
        return self


_FIELD_TYPES = {f.name: f for f in fields(RunConfig)}


def _coerce(name: str, raw: str):
    raw = raw.strip()
    if name == "mesh":
        return raw
    if name == "rho":
        return tuple(float(x) for x in raw.split(","))
    if name in ("method", "source"):
        return raw
    if name in ("n", "seed", "threads", "levels", "iterations"):
        return int(raw)
    return float(raw)


def load_config(path) -> RunConfig:
    """Parse a config file; unknown keys are rejected."""
    cfg = RunConfig()
    text = Path(path).read_text()
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{ln}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip().lower().replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ValidationError(f"{path}:{ln}: unknown key {key!r}")
        try:
            setattr(cfg, key, _coerce(key, value))
        except ValueError:
            raise ValidationError(f"{path}:{ln}: bad value for {key!r}")
    return cfg.validate()


def merge_flags(cfg: RunConfig, **flags) -> RunConfig:
    """Explicit flags (not None) win over config-file values."""
    for key, value in flags.items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg.validate()
