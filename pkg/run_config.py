"""
Run configuration for the epscope command line.
A YAML document with sections model, scan, output, tolerances,
initial_state and times is merged over the dataclass defaults (which already
carry EPSCOPE_* environment overrides), and command-line flags are merged on
top of the file.
"""

import logging
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import yaml

from noisegraph import load_adjacency
from scan import OBSERVABLES, ModelSpec, ScanAxis, ScanConfig
from settings import ConfigError, default_cluster_radius, default_jobs, default_marginal_tol, default_rank_tol

logger = logging.getLogger(__name__)

MODEL_TYPES = ("dimer", "cycle", "custom")
CHANNELS = ("dephasing", "relaxation")


def _number(path: str, value: Any, integer: bool = False) -> Union[int, float]:
    try:
        # YAML 1.1 reads "1e-8" as a string, so strings are accepted here
        number = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{path} must be a number, got {value!r}")
    if integer:
        if number != int(number):
            raise ConfigError(f"{path} must be an integer, got {value!r}")
        return int(number)
    return number


def _optional_number(path: str, value: Any, integer: bool = False) -> Optional[Union[int, float]]:
    return None if value is None else _number(path, value, integer)


@dataclass(frozen=True)
class ModelSection:
    gamma0: float
    type: str = "dimer"
    channel: str = "dephasing"
    n: Optional[int] = None
    c: float = 0.0
    j: float = 0.0
    delta: float = 0.0
    adjacency_file: Optional[str] = None

    def __post_init__(self):
        if self.type not in MODEL_TYPES:
            raise ConfigError(f"model.type must be one of {MODEL_TYPES}, got {self.type!r}")
        if self.channel not in CHANNELS:
            raise ConfigError(f"model.channel must be one of {CHANNELS}, got {self.channel!r}")
        for name in ("gamma0", "c", "j", "delta"):
            object.__setattr__(self, name, _number(f"model.{name}", getattr(self, name)))
        object.__setattr__(self, "n", _optional_number("model.n", self.n, integer=True))
        if self.gamma0 <= 0:
            raise ConfigError(f"model.gamma0 must be positive, got {self.gamma0}")
        if self.type == "cycle" and self.n is None:
            raise ConfigError("missing required field model.n for a cycle model")
        if self.type == "custom" and not self.adjacency_file:
            raise ConfigError("missing required field model.adjacency_file for a custom model")

    def to_spec(self) -> ModelSpec:
        adjacency = None
        if self.type == "custom":
            graph = load_adjacency(self.adjacency_file)
            adjacency = tuple(tuple(float(x) for x in row) for row in graph.adjacency)
        return ModelSpec(kind=self.type, channel=self.channel, gamma0=self.gamma0, c=self.c,
                         j=self.j, delta=self.delta, n=self.n if self.n is not None else 2,
                         adjacency=adjacency)


@dataclass(frozen=True)
class AxisSection:
    param: str
    lo: float
    hi: float
    steps: int

    def __post_init__(self):
        object.__setattr__(self, "lo", _number("axis.lo", self.lo))
        object.__setattr__(self, "hi", _number("axis.hi", self.hi))
        object.__setattr__(self, "steps", _number("axis.steps", self.steps, integer=True))

    def to_axis(self) -> ScanAxis:
        return ScanAxis(name=self.param, lo=self.lo, hi=self.hi, steps=self.steps)


@dataclass(frozen=True)
class ScanSection:
    axis1: Optional[AxisSection] = None
    axis2: Optional[AxisSection] = None
    observables: Tuple[str, ...] = OBSERVABLES
    jobs: int = field(default_factory=default_jobs)

    def __post_init__(self):
        object.__setattr__(self, "observables", tuple(self.observables))
        object.__setattr__(self, "jobs", _number("scan.jobs", self.jobs, integer=True))
        if self.jobs < 1:
            raise ConfigError(f"scan.jobs must be >= 1, got {self.jobs}")


@dataclass(frozen=True)
class OutputSection:
    path: Optional[str] = None
    plot: Optional[str] = None
    json: bool = False


@dataclass(frozen=True)
class TolerancesSection:
    rank_tol: float = field(default_factory=default_rank_tol)
    cluster_radius: float = field(default_factory=default_cluster_radius)
    marginal_tol: float = field(default_factory=default_marginal_tol)

    def __post_init__(self):
        for name in ("rank_tol", "cluster_radius", "marginal_tol"):
            value = _number(f"tolerances.{name}", getattr(self, name))
            if value <= 0:
                raise ConfigError(f"tolerances.{name} must be positive, got {value}")
            object.__setattr__(self, name, value)


@dataclass(frozen=True)
class InitialStateSection:
    preset: str = "site-1-excited"
    coherences: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self):
        pairs = []
        for pair in self.coherences:
            if isinstance(pair, str):
                pair = pair.split(",")
            if len(pair) != 2:
                raise ConfigError(f"initial_state.coherences entries must be index pairs, got {pair!r}")
            pairs.append(tuple(_number("initial_state.coherences", x, integer=True) for x in pair))
        object.__setattr__(self, "coherences", tuple(pairs))


@dataclass(frozen=True)
class TimesSection:
    t_max: float = 10.0
    steps: int = 201

    def __post_init__(self):
        object.__setattr__(self, "t_max", _number("times.t_max", self.t_max))
        object.__setattr__(self, "steps", _number("times.steps", self.steps, integer=True))
        if self.t_max <= 0 or self.steps < 2:
            raise ConfigError("times needs t_max > 0 and steps >= 2")


SECTIONS = {
    "model": ModelSection,
    "scan": ScanSection,
    "output": OutputSection,
    "tolerances": TolerancesSection,
    "initial_state": InitialStateSection,
    "times": TimesSection,
}
NESTED = {("scan", "axis1"): AxisSection, ("scan", "axis2"): AxisSection}


@dataclass(frozen=True)
class RunConfig:
    model: Optional[ModelSection]
    scan: ScanSection
    output: OutputSection
    tolerances: TolerancesSection
    initial_state: InitialStateSection
    times: TimesSection

    def require_model(self) -> ModelSection:
        if self.model is None:
            raise ConfigError("missing required field model.gamma0")
        return self.model

    def scan_config(self) -> ScanConfig:
        """ScanConfig for the configured model and axes."""
        if self.scan.axis1 is None:
            raise ConfigError("missing required field scan.axis1")
        return ScanConfig(
            model=self.require_model().to_spec(),
            axis1=self.scan.axis1.to_axis(),
            axis2=self.scan.axis2.to_axis() if self.scan.axis2 is not None else None,
            observables=self.scan.observables,
            rank_tol=self.tolerances.rank_tol,
            cluster_radius=self.tolerances.cluster_radius,
            marginal_tol=self.tolerances.marginal_tol,
            jobs=self.scan.jobs,
        )

    def to_dict(self) -> Dict[str, Any]:
        echo = asdict(self)
        echo["scan"].pop("jobs")
        echo["scan"]["observables"] = list(self.scan.observables)
        echo["initial_state"]["coherences"] = [list(p) for p in self.initial_state.coherences]
        return echo


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must be a mapping, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown key {path}.{key}")

    kwargs = {}
    for name, spec in known.items():
        if name in data and data[name] is not None:
            value = data[name]
            section = path.split(".")[-1]
            if (section, name) in NESTED:
                value = _build(NESTED[(section, name)], value, f"{path}.{name}")
            kwargs[name] = value
        elif spec.default is MISSING and spec.default_factory is MISSING:
            raise ConfigError(f"missing required field {path}.{name}")
    return cls(**kwargs)


def _apply_override(raw: Dict[str, Any], dotted: str, value: Any):
    node = raw
    *parents, leaf = dotted.split(".")
    for key in parents:
        child = node.setdefault(key, {})
        if not isinstance(child, dict):
            raise ConfigError(f"{key} must be a mapping")
        node = child
    node[leaf] = value


def read_yaml(path: Union[str, Path]) -> Dict[str, Any]:
    """Parse a YAML run file into a plain mapping (empty file -> {})."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = yaml.safe_load(handle)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}")
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} must hold a mapping of sections")
    return raw


def load_run_config(path: Optional[Union[str, Path]] = None,
                    overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Resolve a RunConfig.

    Args:
        path: optional YAML file
        overrides: dotted keys ("model.gamma0", "scan.jobs", ...) from flags;
            None values are skipped

    Raises:
        ConfigError: for unknown keys, missing required fields or bad values
    """
    raw = read_yaml(path) if path is not None else {}
    for key in raw:
        if key not in SECTIONS:
            raise ConfigError(f"unknown key {key}")
    for dotted, value in (overrides or {}).items():
        if value is not None:
            _apply_override(raw, dotted, value)

    sections: Dict[str, Any] = {}
    for name, cls in SECTIONS.items():
        data = raw.get(name)
        if name == "model" and data is None:
            sections[name] = None
            continue
        sections[name] = _build(cls, data if data is not None else {}, name)
    config = RunConfig(**sections)
    logger.debug(f"resolved run config: {config.to_dict()}")
    return config
