"""Experiment configuration: YAML documents with fully embedded defaults.

Every field has a default, so an empty file (or no file) is a complete
configuration. ``streamnet --print-config`` dumps the defaults; any subset of
keys may be overridden. Unknown keys are rejected so typos cannot silently
fall back to a default.

A single master ``seed`` drives every random choice (generated weights,
signal noise, probe draws) unless a section sets its own ``seed``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import yaml

from .analysis import PhaseExperiment, TrackingExperiment
from .core import ActivationKind, NeuronParams
from .errors import ConfigError, StreamNetError
from .executor import NetworkSpec
from .streams import SignalKind, SignalSpec


@dataclass
class LayerConfig:
    """One layer. Missing ``W``/``W_s``/``b`` are drawn uniformly from [-0.5, 0.5]."""

    inputs: int = 1
    outputs: int = 1
    activation: str = "tanh"
    alpha: float = 1.0
    lam: float = 0.9
    W: list | None = None
    W_s: list | None = None
    b: list | None = None

    def build(self, rng: np.random.Generator) -> NeuronParams:
        drawn = NeuronParams.seeded(
            self.inputs, self.outputs, seed=rng, alpha=self.alpha, lam=self.lam,
            activation=self.activation,
        )
        return NeuronParams(
            drawn.W if self.W is None else self.W,
            drawn.W_s if self.W_s is None else self.W_s,
            drawn.b if self.b is None else self.b,
            self.alpha,
            self.lam,
            self.activation,
        )


@dataclass
class SignalConfig:
    kind: str = "sinusoid"
    amplitude: float = 1.0
    frequency: float = 2 * math.pi / 50
    phase: float = 0.0
    noise_std: float = 0.0
    seed: int | None = None
    dimension: int = 1
    onset: int = 0

    def build(self, master_seed: int) -> SignalSpec:
        return SignalSpec(
            SignalKind.parse(self.kind), self.amplitude, self.frequency, self.phase,
            self.noise_std, master_seed if self.seed is None else self.seed,
            self.dimension, self.onset,
        )


@dataclass
class NetworkConfig:
    layers: list[LayerConfig] = field(default_factory=lambda: [LayerConfig()])

    def build(self, seed: int) -> NetworkSpec:
        rng = np.random.default_rng(seed)
        return NetworkSpec(tuple(layer.build(rng) for layer in self.layers))


@dataclass
class PhaseConfig:
    neuron: LayerConfig = field(
        default_factory=lambda: LayerConfig(W=[[1.0]], W_s=[[0.5]], b=[0.0], alpha=1.0, lam=0.9)
    )
    signal: SignalConfig = field(default_factory=SignalConfig)
    steps: int = 2000
    burn_in: int = 500
    eps_fp: float | None = None
    eps_rec: float | None = None
    min_period: int = 3


@dataclass
class RetentionConfig:
    lambdas: list[float] = field(default_factory=lambda: [0.5, 0.9, 0.99])
    s0: list[float] = field(default_factory=lambda: [1.0])
    steps: int = 1000
    activation: str = "tanh"


@dataclass
class TrackingConfig:
    lam: float = 0.9
    signal: SignalConfig = field(
        default_factory=lambda: SignalConfig(
            kind="noisy_sinusoid", frequency=2 * math.pi / 500, noise_std=0.3
        )
    )
    steps: int = 3000
    transient: int = 500


@dataclass
class ContractionSuite:
    lambdas: list[float] = field(default_factory=lambda: [0.0, 0.25, 0.5, 0.9, 0.999])
    pairs: int = 1000
    steps: int = 100
    dimension: int = 8
    tol_ulps: float = 64.0


@dataclass
class BoundsSuite:
    draws: int = 20
    steps: int = 20000
    max_dimension: int = 4
    weight_scale: float = 2.0
    noise_std: float = 3.0
    tol_eps: float = 4.0


@dataclass
class CollapseSuite:
    lags: list[int] = field(default_factory=lambda: [1, 2, 5, 10])
    length: int = 32
    perturbation: float = 1e-6
    alpha: float = 1.0
    lam: float = 0.9
    W: float = 0.5
    W_s: float = 0.5
    b: float = 0.1
    min_stateful: float = 1e-4


@dataclass
class VerifyConfig:
    contraction: ContractionSuite = field(default_factory=ContractionSuite)
    bounds: BoundsSuite = field(default_factory=BoundsSuite)
    collapse: CollapseSuite = field(default_factory=CollapseSuite)


@dataclass
class BenchConfig:
    steps: int = 1_001_000
    early: list[int] = field(default_factory=lambda: [1000, 2000])
    late: list[int] = field(default_factory=lambda: [1_000_000, 1_001_000])
    memory_probe: int = 1000
    max_ratio: float = 2.0
    signal: SignalConfig = field(default_factory=SignalConfig)


@dataclass
class ExperimentConfig:
    seed: int = 0
    format: str = "csv"
    output_dir: str = "streamnet_out"
    network: NetworkConfig = field(default_factory=NetworkConfig)
    phase: PhaseConfig = field(default_factory=PhaseConfig)
    retention: RetentionConfig = field(default_factory=RetentionConfig)
    tracking: TrackingConfig = field(default_factory=TrackingConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)

    # -- builders -----------------------------------------------------------

    def network_spec(self) -> NetworkSpec:
        return self.network.build(self.seed)

    def phase_experiment(self) -> PhaseExperiment:
        c = self.phase
        params = c.neuron.build(np.random.default_rng(self.seed))
        return PhaseExperiment(
            params, c.signal.build(self.seed), c.steps, c.burn_in, c.eps_fp, c.eps_rec, c.min_period
        )

    def tracking_experiment(self) -> TrackingExperiment:
        c = self.tracking
        return TrackingExperiment(c.signal.build(self.seed), c.lam, c.steps, c.transient)

    def validate(self) -> "ExperimentConfig":
        """Build every derived object once so bad values fail before any work."""
        try:
            if self.format not in ("csv", "jsonl"):
                raise ConfigError(f"format must be csv or jsonl, got {self.format!r}")
            self.network_spec()
            self.phase_experiment()
            self.tracking_experiment()
            ActivationKind.parse(self.retention.activation)
            for lam in self.retention.lambdas + self.verify.contraction.lambdas + [self.verify.collapse.lam]:
                NeuronParams([[0.0]], [[0.0]], [0.0], 0.0, lam)
            self.bench.signal.build(self.seed)
        except ConfigError:
            raise
        except (StreamNetError, ValueError, TypeError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc
        return self

    def to_dict(self) -> dict:
        return _dump(self)


# -- (de)serialisation ----------------------------------------------------------

_ALIASES = {"lambda": "lam"}
_REVERSE = {v: k for k, v in _ALIASES.items()}


def _dump(obj) -> Any:
    if dataclasses.is_dataclass(obj):
        return {_REVERSE.get(f.name, f.name): _dump(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, list):
        return [_dump(v) for v in obj]
    return obj


def _hint_class(hint):
    if isinstance(hint, str):
        return globals().get(hint.split("[")[0].strip())
    return hint


def _load(cls, data, path: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(data).__name__}")
    data = dict(data)
    if cls is SignalConfig and "period" in data:
        period = data.pop("period")
        try:
            data["frequency"] = 2 * math.pi / float(period)
        except (TypeError, ValueError, ZeroDivisionError):
            raise ConfigError(f"{path}.period must be a non-zero number") from None
    names = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        name = _ALIASES.get(key, key)
        if name not in names:
            raise ConfigError(f"unknown key {path + '.' if path else ''}{key}")
        hint = names[name].type
        sub = _hint_class(hint)
        where = f"{path}.{key}" if path else key
        if isinstance(sub, type) and dataclasses.is_dataclass(sub):
            kwargs[name] = _load(sub, value, where)
        elif isinstance(hint, str) and hint.startswith("list[LayerConfig]"):
            if not isinstance(value, list):
                raise ConfigError(f"{where} must be a list of layers")
            kwargs[name] = [_load(LayerConfig, v, f"{where}[{i}]") for i, v in enumerate(value)]
        else:
            kwargs[name] = _coerce(value, hint, where)
    return cls(**kwargs)


def _coerce(value, hint: str, where: str):
    base = hint.replace(" | None", "")
    if value is None:
        if "None" in hint:
            return None
        raise ConfigError(f"{where} may not be null")
    try:
        if base == "int":
            if isinstance(value, bool) or float(value) != int(value):
                raise ValueError
            return int(value)
        if base == "float":
            if isinstance(value, bool):
                raise ValueError
            return float(value)
        if base == "str":
            return str(value)
        if base.startswith("list[float]"):
            return [float(v) for v in value]
        if base.startswith("list[int]"):
            return [int(v) for v in value]
        if base == "list":
            return [list(map(float, row)) if isinstance(row, list) else float(row) for row in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: cannot interpret {value!r} as {base}") from None
    return value


def load_config(path=None, text: str | None = None) -> ExperimentConfig:
    """Read a YAML config file (or string); missing keys take their defaults."""
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        data = yaml.safe_load(text) if text else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    return _load(ExperimentConfig, data, "")


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)
