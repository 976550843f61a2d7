"""Run configuration: a versioned JSON schema validated with pydantic."""
from __future__ import annotations

import json
from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ._validation import TokenScreenError

SCHEMA_VERSION = 1


class ConfigError(TokenScreenError, ValueError):
    """Malformed or invalid run configuration."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class EntropySpec(_Strict):
    kind: Literal["quadratic-binary", "shannon"] = "quadratic-binary"
    alpha: float = Field(2.0, ge=2.0)


class UniformTypes(_Strict):
    kind: Literal["uniform"] = "uniform"
    lower: float = Field(1.0, gt=0.0)
    upper: float = 2.0

    @model_validator(mode="after")
    def _order(self):
        if not self.upper > self.lower:
            raise ValueError("upper must exceed lower")
        return self


class TabulatedTypes(_Strict):
    kind: Literal["tabulated"]
    r: List[float]
    cdf: Optional[List[float]] = None
    pdf: Optional[List[float]] = None

    @model_validator(mode="after")
    def _one_table(self):
        if (self.cdf is None) == (self.pdf is None):
            raise ValueError("give exactly one of cdf or pdf")
        table = self.cdf if self.cdf is not None else self.pdf
        if len(table) != len(self.r):
            raise ValueError("table length must match r")
        return self


class Grids(_Strict):
    step: Optional[float] = Field(None, gt=0.0)
    n_types: int = Field(401, ge=2)
    horizon_lifetimes: float = Field(20.0, gt=0.0)
    oracle_points: int = Field(201, ge=3)


class Tolerances(_Strict):
    eps_iso: float = Field(1e-7, gt=0.0)
    eps_cap: float = Field(1e-7, gt=0.0)
    eps_event: float = Field(1e-10, gt=0.0)
    quad: float = Field(1e-12, gt=0.0)


class Simulation(_Strict):
    paths: int = Field(100_000, ge=1)
    workers: int = Field(1, ge=1)
    checkpoints: List[float] = [1.0, 5.0, 10.0]


class RunConfig(_Strict):
    version: Literal[1] = SCHEMA_VERSION
    entropy: EntropySpec = EntropySpec()
    prior: List[float] = [0.5, 0.5]
    chi: float = Field(0.125, gt=0.0)
    chi_qv: Optional[float] = Field(None, gt=0.0)
    types: Union[UniformTypes, TabulatedTypes] = Field(UniformTypes(), discriminator="kind")
    valuation: Optional[str] = None
    grids: Grids = Grids()
    tolerances: Tolerances = Tolerances()
    seed: int = 0
    simulation: Simulation = Simulation()
    outputs: dict = {}

    @model_validator(mode="after")
    def _prior(self):
        if len(self.prior) < 2 or min(self.prior) < 0 or abs(sum(self.prior) - 1.0) > 1e-12:
            raise ValueError("prior must be a probability vector with at least 2 entries")
        if self.entropy.kind == "quadratic-binary" and len(self.prior) != 2:
            raise ValueError("quadratic-binary entropy needs a 2-state prior")
        return self


def _key_line(text: str, loc) -> Optional[int]:
    """Line of the innermost named key of ``loc`` in the JSON source (best effort)."""
    pos = 0
    line = None
    for part in loc:
        if not isinstance(part, str):
            continue
        k = text.find(f'"{part}"', pos)
        if k < 0:
            continue
        pos = k
        line = text.count("\n", 0, k) + 1
    return line


def _format_errors(err: ValidationError, text: Optional[str] = None) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        ln = _key_line(text, e["loc"]) if text is not None else None
        prefix = f"line {ln}: " if ln is not None else ""
        lines.append(f"{prefix}{loc}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format_errors(err)) from None


def load_config(path: Optional[Union[str, Path]]) -> RunConfig:
    """Read a JSON config; ``None`` gives the leading example."""
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(f"{path}: {_format_errors(err, text)}") from None
