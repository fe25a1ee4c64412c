"""Run configuration: one YAML document with a section per subsystem.

Unknown keys are rejected and every value is validated on load; errors carry
the dotted path of the offending field.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .attention import AttentionConfig
from .errors import ConfigError
from .harness import PresentationConfig
from .plasticity import BoxcarParams, PlasticityConfig
from .saccade import SaccadeConfig
from .snn import NeuronParams, build_network


def parse_window(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in str(text).lower().split("x"))
    except ValueError:
        raise ConfigError(f"expected WxH, got {text!r}", "input.window") from None
    return w, h


@dataclass
class NetworkSection:
    layers: list[int] = field(default_factory=lambda: [2 * 64 * 64, 200, 200, 11])
    seed: int = 0
    p_drop: float = 0.35
    tau_mem: float = 20.0
    v_threshold: float = 1.0
    v_reset: float = 0.0
    t_refractory: float = 4.0
    tau_dendrite: float = 20.0
    label_rate: float = 200.0
    error_weight: float = 0.5


@dataclass
class PlasticitySection:
    learning_rate: float = 1e-3
    b_min: float = -1.0   # units of v_threshold
    b_max: float = 1.0


@dataclass
class InputSection:
    mode: str = "rescale"
    window: str = "64x64"
    n_attention: int = 1000
    pool: int = 1


@dataclass
class SaccadeSection:
    alpha: float = 1.833
    phase_ms: float = 200.0
    threshold: float = 0.15
    ppd: float = 10.0
    dt_us: int = 1000


@dataclass
class RunSection:
    epochs: int = 30
    gap_ms: float = 50.0
    dt_us: int = 1000
    reset: bool = True
    eval_every: int = 1
    wall_clock: bool = True
    train_manifest: str | None = None
    test_manifest: str | None = None
    out_dir: str = "run"


@dataclass
class RunConfig:
    network: NetworkSection = field(default_factory=NetworkSection)
    plasticity: PlasticitySection = field(default_factory=PlasticitySection)
    input: InputSection = field(default_factory=InputSection)
    saccade: SaccadeSection = field(default_factory=SaccadeSection)
    run: RunSection = field(default_factory=RunSection)

    # -- (de)serialisation -------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.dump())
        return path

    @classmethod
    def from_dict(cls, data: dict | None) -> "RunConfig":
        cfg = cls()
        data = data or {}
        if not isinstance(data, dict):
            raise ConfigError("top level must be a mapping")
        for section, values in data.items():
            if section not in _SECTIONS:
                raise ConfigError("unknown section", section)
            if values is None:
                continue
            if not isinstance(values, dict):
                raise ConfigError("section must be a mapping", section)
            for key, value in values.items():
                cfg.set(f"{section}.{key}", value)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = yaml.safe_load(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}", str(path)) from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}", str(path)) from None
        return cls.from_dict(data)

    def set(self, dotted: str, value: Any) -> None:
        section, _, key = dotted.partition(".")
        if section not in _SECTIONS:
            raise ConfigError("unknown section", section)
        obj = getattr(self, section)
        fields = {f.name: f for f in dataclasses.fields(obj)}
        if key not in fields:
            raise ConfigError("unknown key", dotted)
        setattr(obj, key, _coerce(value, fields[key].type, dotted))

    # -- validation and views ----------------------------------------------

    def validate(self) -> "RunConfig":
        """Construct every component config once so their invariants are checked."""
        self.neuron_params()
        self.plasticity_config()
        self.presentation()
        self.saccade_config()
        layers = self.network.layers
        if len(layers) < 3 or any(n < 1 for n in layers):
            raise ConfigError(f"need >= 3 non-empty layers, got {layers}", "network.layers")
        if not 0.0 <= self.network.p_drop <= 1.0:
            raise ConfigError("must be in [0, 1]", "network.p_drop")
        if self.network.label_rate < 0:
            raise ConfigError("must be >= 0", "network.label_rate")
        if self.run.eval_every < 0:
            raise ConfigError("must be >= 0", "run.eval_every")
        return self

    def neuron_params(self) -> NeuronParams:
        n = self.network
        return NeuronParams(n.tau_mem, n.v_threshold, n.v_reset, n.t_refractory, n.tau_dendrite)

    def plasticity_config(self) -> PlasticityConfig:
        p = self.plasticity
        return PlasticityConfig(p.learning_rate, BoxcarParams(p.b_min, p.b_max))

    def presentation(self, shuffle_seed: int | None = None) -> PresentationConfig:
        i, r = self.input, self.run
        return PresentationConfig(
            mode=i.mode, window=parse_window(i.window), n_attention=i.n_attention, pool=i.pool,
            gap_ms=r.gap_ms, epochs=r.epochs,
            shuffle_seed=self.component_seed("shuffle") if shuffle_seed is None else shuffle_seed,
            reset=r.reset, dt=r.dt_us, wall_clock=r.wall_clock,
        )

    def attention_config(self) -> AttentionConfig:
        return AttentionConfig(self.input.n_attention, parse_window(self.input.window))

    def saccade_config(self) -> SaccadeConfig:
        s = self.saccade
        return SaccadeConfig(s.alpha, s.phase_ms / 1000.0, s.ppd, s.threshold, s.dt_us)

    def component_seed(self, name: str) -> int:
        """Deterministic per-component seed derived from ``network.seed``."""
        import numpy as np

        key = {"network": 0, "shuffle": 1}[name]
        return int(np.random.SeedSequence([self.network.seed, key]).generate_state(1)[0])

    def build_network(self):
        n = self.network
        return build_network(
            n.layers, seed=self.component_seed("network"), params=self.neuron_params(),
            p_drop=n.p_drop, plasticity=self.plasticity_config(),
            label_rate=n.label_rate, error_weight=n.error_weight,
        )


_SECTIONS = {f.name for f in dataclasses.fields(RunConfig)}


def _coerce(value, annotation: str, dotted: str):
    """Check/convert a raw YAML or CLI value against a field's annotation string."""
    try:
        if annotation == "bool":
            if isinstance(value, bool):
                return value
            if isinstance(value, str) and value.lower() in ("true", "false", "1", "0", "yes", "no"):
                return value.lower() in ("true", "1", "yes")
            raise ValueError
        if annotation == "int":
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError
            return int(value)
        if annotation == "float":
            if isinstance(value, bool):
                raise ValueError
            return float(value)
        if annotation == "str":
            if isinstance(value, (list, dict)):
                raise ValueError
            return str(value)
        if annotation == "str | None":
            return None if value is None else str(value)
        if annotation == "list[int]":
            if isinstance(value, str):
                value = [v for v in value.replace(",", " ").split()]
            if not isinstance(value, (list, tuple)):
                raise ValueError
            return [_coerce(v, "int", dotted) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value {value!r} (expected {annotation})", dotted) from None
    raise ConfigError(f"unsupported field type {annotation}", dotted)
