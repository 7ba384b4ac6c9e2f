"""Experiment configuration files: UTF-8 ``key = value`` lines.

Blank lines and lines starting with ``#`` are ignored. Values of the keys in
EXPRESSION_KEYS are parsed with the expression grammar when the file is read,
so a malformed expression is rejected together with the line it came from.
Everything else stays a string and is converted by the typed getters.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from wfs.cli.expr import Expr, dimension_of, parse_expression, to_string
from wfs.errors import ConfigError, ExpressionSyntaxError

EXPERIMENTS = ("explaw-verify", "density-run", "mollifier-bound", "evolve", "schwartz-demo", "o-certify")
EXPRESSION_KEYS = ("function", "f", "g")
FAMILY_PRESETS = ("schwartz", "constant", "poly")
GROUPS = ("gl3", "so3", "ut3")


@dataclass
class ExperimentConfig:
    kind: str
    entries: dict = field(default_factory=dict)
    expressions: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.kind!r}; expected one of {', '.join(EXPERIMENTS)}")

    # typed getters ------------------------------------------------------------
    def get(self, key: str, default: Optional[str] = None) -> Optional[str]:
        return self.entries.get(key, default)

    def get_float(self, key: str, default: float) -> float:
        try:
            return float(self.entries[key]) if key in self.entries else float(default)
        except ValueError as exc:
            raise ConfigError(f"{key} must be a number, got {self.entries[key]!r}") from exc

    def get_int(self, key: str, default: int) -> int:
        value = self.get_float(key, default)
        if value != int(value):
            raise ConfigError(f"{key} must be an integer, got {self.entries[key]!r}")
        return int(value)

    def get_floats(self, key: str, default) -> list[float]:
        if key not in self.entries:
            return [float(v) for v in default]
        try:
            return [float(v) for v in self.entries[key].replace(",", " ").split()]
        except ValueError as exc:
            raise ConfigError(f"{key} must be a list of numbers, got {self.entries[key]!r}") from exc

    def get_expr(self, key: str, default: Optional[str] = None) -> Optional[Expr]:
        if key in self.expressions:
            return self.expressions[key]
        return None if default is None else parse_expression(default)

    def family(self, default: str = "schwartz:2") -> tuple[str, int]:
        text = self.entries.get("family", default)
        name, _, arg = text.partition(":")
        name = name.strip()
        if name not in FAMILY_PRESETS:
            raise ConfigError(f"unknown weight family preset {name!r}")
        try:
            return name, int(arg) if arg else 0
        except ValueError as exc:
            raise ConfigError(f"family parameter must be an integer, got {arg!r}") from exc

    # serialization --------------------------------------------------------------
    def to_text(self) -> str:
        lines = [f"experiment = {self.kind}"]
        for key in sorted(self.entries):
            lines.append(f"{key} = {self.entries[key]}")
        for key in sorted(self.expressions):
            lines.append(f"{key} = {to_string(self.expressions[key])}")
        return "\n".join(lines) + "\n"


def parse_config(text: str, kind: Optional[str] = None) -> ExperimentConfig:
    """Parse config text; ``kind`` (from the command line) overrides ``experiment =``."""
    entries: dict = {}
    expressions: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if key in entries or key in expressions:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if key in EXPRESSION_KEYS:
            try:
                expressions[key] = parse_expression(value)
            except ExpressionSyntaxError as exc:
                raise ConfigError(f"line {lineno}: {key}: {exc}") from exc
        else:
            entries[key] = value
    file_kind = entries.pop("experiment", None)
    kind = kind or file_kind
    if kind is None:
        raise ConfigError("no experiment given")
    cfg = ExperimentConfig(kind, entries, expressions)
    validate(cfg)
    return cfg


def load_config(path, kind: Optional[str] = None) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), kind)


def validate(cfg: ExperimentConfig) -> None:
    """Preset names, group labels and expression dimensions."""
    if "family" in cfg.entries:
        cfg.family()
    group = cfg.entries.get("group")
    if group is not None and group not in GROUPS:
        raise ConfigError(f"unknown group {group!r}")
    dims = {"explaw-verify": 2, "schwartz-demo": 2, "density-run": 2}
    if cfg.kind in dims and "function" in cfg.expressions:
        if dimension_of(cfg.expressions["function"]) > dims[cfg.kind]:
            raise ConfigError(f"function uses more than {dims[cfg.kind]} variables")
    if cfg.kind == "o-certify":
        f, g = cfg.expressions.get("f"), cfg.expressions.get("g")
        if f is not None and g is not None and dimension_of(f) > 1 and dimension_of(g) > 1 \
                and dimension_of(f) != dimension_of(g):
            raise ConfigError("f and g have different dimensions")
