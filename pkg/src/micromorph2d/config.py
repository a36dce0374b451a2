"""Plain-text experiment configuration.

One ``key = value`` pair per line; ``#`` starts a comment.  Lists are comma
separated.  Example::

    experiment = e3-convergence
    formulation = MixedSplit
    tiers = 4, 8, 12
    lc = 1e10
    mu_c = 1
    out = results/e5
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

EXPERIMENTS = ("e1-dilatation", "e2-shear", "e3-convergence", "e4-lcsweep",
               "e5-mixed-stability", "macro-check", "element-check")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    mesh_tier: int | None = None
    tiers: tuple = ()
    degree: int = 4
    formulation: str | None = None
    out: str = "results"
    lc: float | None = None
    lcs: tuple = ()
    mu_c: float | None = None
    samples: int = 100
    seed: int = 0
    vtk: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.degree < 2:
            raise ConfigError("degree must be at least 2")

    def tier_list(self, default) -> list:
        if self.mesh_tier is not None:
            return [self.mesh_tier]
        return list(self.tiers) if self.tiers else list(default)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def _int_list(text: str) -> tuple:
    return tuple(int(t) for t in text.split(",") if t.strip())


def _float_list(text: str) -> tuple:
    return tuple(float(t) for t in text.split(",") if t.strip())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_PARSERS = {
    "experiment": str.strip,
    "mesh_tier": int,
    "tiers": _int_list,
    "degree": int,
    "formulation": str.strip,
    "out": str.strip,
    "lc": float,
    "lcs": _float_list,
    "mu_c": float,
    "samples": int,
    "seed": int,
    "vtk": _bool,
}


def parse_config(text: str) -> dict:
    """Parse config text into a dict of typed values (unknown keys kept as strings)."""
    out: dict = {}
    extra: dict = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", no)
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if not key:
            raise ConfigError("empty key", no)
        if key in out or key in extra:
            raise ConfigError(f"duplicate key {key!r}", no)
        if key in _PARSERS:
            try:
                out[key] = _PARSERS[key](value)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}", no) from None
        else:
            extra[key] = value
    if extra:
        out["extra"] = extra
    return out


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    values = parse_config(text)
    if "experiment" not in values:
        raise ConfigError(f"{path}: missing 'experiment'")
    return ExperimentConfig(**values)


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if v is None or v == () or (f.name == "extra" and not v):
            continue
        if f.name == "extra":
            lines += [f"{k} = {x}" for k, x in v.items()]
        elif isinstance(v, tuple):
            lines.append(f"{f.name} = " + ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v))
        elif isinstance(v, float):
            lines.append(f"{f.name} = {v!r}")
        else:
            lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
