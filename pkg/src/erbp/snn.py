"""Clock-driven simulation of a feedforward LIF network trained by eRBP.

Per tick of ``dt`` microseconds, in this order:

1. Every LIF membrane leaks by ``exp(-dt / tau_mem)``.
2. Layers are updated input to output. Each presynaptic spike reaches each
   target independently with probability ``1 - p_drop``. Delivered spikes are
   integrated with the current weights and then trigger the plasticity update,
   gated on the freshly integrated membrane potential. Neurons above threshold
   and out of their refractory period spike and hard-reset. Their spikes feed
   the next layer within the same tick.
3. The label neuron of the presented class fires on a regular schedule.
4. The error pair of each class integrates +output/-label (positive neuron)
   and -output/+label (negative neuron) with the same LIF rule.
5. Error spikes are deposited into the signed output error accumulator ``e``
   (+1/-1) and into every hidden dendrite through the fixed feedback weights
   ``g``. Both leak with ``tau_dendrite``. Plasticity sees them from the next
   tick on.

Membranes keep integrating during the refractory period; refractoriness only
blocks spiking.
"""

from __future__ import annotations

import json
import math
import struct
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CheckpointError, ConfigError
from .plasticity import (
    BoxcarParams,
    PlasticityConfig,
    UpdateCounter,
    hidden_update,
    output_update,
)

_NEVER = np.iinfo(np.int64).min // 2


@dataclass(frozen=True)
class NeuronParams:
    tau_mem: float = 20.0        # ms
    v_threshold: float = 1.0
    v_reset: float = 0.0
    t_refractory: float = 4.0    # ms
    tau_dendrite: float = 20.0   # ms

    def __post_init__(self):
        if not self.tau_mem > 0:
            raise ConfigError("must be > 0", "network.tau_mem")
        if not self.tau_dendrite > 0:
            raise ConfigError("must be > 0", "network.tau_dendrite")
        if not self.v_threshold > self.v_reset:
            raise ConfigError("v_threshold must exceed v_reset", "network.v_threshold")
        if self.t_refractory < 0:
            raise ConfigError("must be >= 0", "network.t_refractory")

    @property
    def refractory_us(self) -> int:
        return int(round(self.t_refractory * 1000))


@dataclass
class StepResult:
    spikes: list[np.ndarray]          # [input counts, hidden..., output] per layer
    label: np.ndarray                 # label neuron spikes
    error_pos: np.ndarray
    error_neg: np.ndarray
    updates: list[np.ndarray] | None = None   # dense dw per matrix, if recorded


class ErrorPathway:
    """Label neurons, per-class (+, -) error neurons and the fixed feedback weights."""

    def __init__(self, n_classes: int, feedback: list[np.ndarray], label_rate: float,
                 error_weight: float):
        self.n_classes = n_classes
        self.feedback = feedback
        self.label_rate = label_rate
        self.error_weight = error_weight
        for g in feedback:
            g.flags.writeable = False
        self.reset()

    def reset(self) -> None:
        k = self.n_classes
        self.v_pos = np.zeros(k)
        self.v_neg = np.zeros(k)
        self.refr_pos = np.full(k, _NEVER, dtype=np.int64)
        self.refr_neg = np.full(k, _NEVER, dtype=np.int64)
        self.error = np.zeros(k)
        self.n_pos = np.zeros(k, dtype=np.int64)
        self.n_neg = np.zeros(k, dtype=np.int64)

    def label_spikes(self, label: int | None, now: int, dt: int) -> np.ndarray:
        """Regular label train: one spike in every tick that contains a multiple of the period."""
        out = np.zeros(self.n_classes, dtype=bool)
        if label is None or self.label_rate <= 0:
            return out
        period = 1e6 / self.label_rate
        k = math.ceil(now / period)
        if k * period < now + dt:
            out[label] = True
        return out

    def integrate(self, output: np.ndarray, label: np.ndarray, now: int, decay: float,
                  params: NeuronParams, rng: np.random.Generator, p_drop: float):
        """Advance both error populations by one tick; returns (pos, neg) spikes."""
        out = output.astype(np.float64)
        lab = label.astype(np.float64)
        if p_drop > 0 and (output.any() or label.any()):
            keep = 1.0 - p_drop
            o_pos, o_neg, l_pos, l_neg = (rng.random((4, self.n_classes)) < keep).astype(np.float64)
            o_pos, o_neg, l_pos, l_neg = o_pos * out, o_neg * out, l_pos * lab, l_neg * lab
        else:
            o_pos = o_neg = out
            l_pos = l_neg = lab
        w = self.error_weight * params.v_threshold
        self.v_pos *= decay
        self.v_pos += w * o_pos - w * l_pos
        self.v_neg *= decay
        self.v_neg += w * l_neg - w * o_neg
        fire_pos = (self.v_pos > params.v_threshold) & (now >= self.refr_pos)
        fire_neg = (self.v_neg > params.v_threshold) & (now >= self.refr_neg)
        for v, refr, fire in ((self.v_pos, self.refr_pos, fire_pos), (self.v_neg, self.refr_neg, fire_neg)):
            v[fire] = params.v_reset
            refr[fire] = now + params.refractory_us
        self.n_pos += fire_pos
        self.n_neg += fire_neg
        return fire_pos, fire_neg


class Network:
    """Layered LIF network with its error pathway and RNG. Build with :func:`build_network`."""

    def __init__(self, sizes: Sequence[int], weights: list[np.ndarray], pathway: ErrorPathway,
                 params: NeuronParams, plasticity: PlasticityConfig, p_drop: float, seed: int,
                 rng: np.random.Generator):
        self.sizes = list(sizes)
        self.weights = weights
        self.pathway = pathway
        self.params = params
        self.plasticity = plasticity
        self.p_drop = p_drop
        self.seed = seed
        self.rng = rng
        self.step_count = 0
        self.counter = UpdateCounter(len(weights))
        self._gate_cfg = PlasticityConfig(
            plasticity.learning_rate, plasticity.boxcar.scaled(params.v_threshold), plasticity.enabled
        )
        self._decay_cache: dict[int, tuple[float, float]] = {}
        self.reset_dynamic_state()

    @property
    def n_classes(self) -> int:
        return self.sizes[-1]

    @property
    def feedback(self) -> list[np.ndarray]:
        return self.pathway.feedback

    @property
    def gate_config(self) -> PlasticityConfig:
        """Plasticity settings with boxcar bounds in membrane-potential units."""
        return self._gate_cfg

    def reset_dynamic_state(self) -> "Network":
        """Zero membranes, dendrites, refractory clocks and error state. Weights are kept."""
        post = self.sizes[1:]
        self.v = [np.zeros(n) for n in post]
        self.dendrites = [np.zeros(n) for n in post[:-1]]
        self.refractory_until = [np.full(n, _NEVER, dtype=np.int64) for n in post]
        self.pathway.reset()
        return self

    def decay_factors(self, dt: int) -> tuple[float, float]:
        if dt not in self._decay_cache:
            dt_ms = dt / 1000.0
            self._decay_cache[dt] = (
                math.exp(-dt_ms / self.params.tau_mem),
                math.exp(-dt_ms / self.params.tau_dendrite),
            )
        return self._decay_cache[dt]

    def _deliver(self, counts: np.ndarray, n_post: int) -> np.ndarray:
        """Per-synapse delivered spike counts for presynaptic ``counts`` (one row each)."""
        if self.p_drop <= 0:
            return np.repeat(counts.astype(np.float64)[:, None], n_post, axis=1)
        keep = 1.0 - self.p_drop
        if counts.max() == 1:
            return (self.rng.random((counts.size, n_post)) < keep).astype(np.float64)
        return self.rng.binomial(counts[:, None], keep, size=(counts.size, n_post)).astype(np.float64)

    def step(self, input_spikes, label: int | None = None, now: int = 0, dt: int = 1000,
             learn: bool | None = None, record_updates: bool = False) -> StepResult:
        """Advance the network by one tick.

        ``input_spikes`` is a sequence of input-neuron indices; repeated indices
        count as multiple spikes. ``learn`` defaults to ``plasticity.enabled``.
        """
        if dt <= 0:
            raise ConfigError(f"dt must be > 0, got {dt}", "dt")
        learn = self.plasticity.enabled if learn is None else learn
        a_mem, a_dend = self.decay_factors(dt)
        params = self.params
        cfg = self._gate_cfg
        idx = np.asarray(input_spikes, dtype=np.int64).reshape(-1)
        if idx.size and (idx.min() < 0 or idx.max() >= self.sizes[0]):
            raise IndexError(f"input index outside [0, {self.sizes[0]})")
        pre = np.bincount(idx, minlength=self.sizes[0])
        spikes = [pre]
        updates = [np.zeros_like(W) for W in self.weights] if record_updates else None
        last = len(self.weights) - 1

        for l, W in enumerate(self.weights):
            v = self.v[l]
            v *= a_mem
            active = np.flatnonzero(pre)
            if active.size:
                delivered = self._deliver(pre[active], W.shape[1])
                v += (delivered * W[active]).sum(axis=0)
                if learn:
                    if l < last:
                        unit = hidden_update(self.dendrites[l], v, cfg)
                    else:
                        unit = output_update(self.pathway.error, v, cfg)
                    dw = delivered * unit
                    W[active] += dw
                    self.counter.add(l, np.count_nonzero(dw))
                    if updates is not None:
                        updates[l][active] = dw
            fire = (v > params.v_threshold) & (now >= self.refractory_until[l])
            v[fire] = params.v_reset
            self.refractory_until[l][fire] = now + params.refractory_us
            spikes.append(fire)
            pre = fire.astype(np.int64)

        pw = self.pathway
        lab = pw.label_spikes(label, now, dt)
        pos, neg = pw.integrate(spikes[-1], lab, now, a_mem, params, self.rng, self.p_drop)
        self._deposit_errors(pos, neg, a_dend)
        if learn:
            self.step_count += 1
        return StepResult(spikes, lab, pos, neg, updates)

    def _deposit_errors(self, pos: np.ndarray, neg: np.ndarray, decay: float) -> None:
        pw = self.pathway
        any_err = pos.any() or neg.any()
        signed = pos.astype(np.float64) - neg.astype(np.float64)
        keep = 1.0 - self.p_drop
        pw.error *= decay
        if any_err:
            if self.p_drop > 0:
                mp, mn = (self.rng.random((2, pw.n_classes)) < keep).astype(np.float64)
                pw.error += pos * mp - neg * mn
            else:
                pw.error += signed
        for D, g in zip(self.dendrites, pw.feedback):
            D *= decay
            if not any_err:
                continue
            if self.p_drop > 0:
                mp, mn = (self.rng.random((2,) + g.shape) < keep).astype(np.float64)
                D += ((mp * pos - mn * neg) * g).sum(axis=1)
            else:
                D += g @ signed


def error_rates(net: Network | ErrorPathway, horizon_us: float) -> np.ndarray:
    """Measured (nu_plus, nu_minus) per class in Hz from spikes counted since the last reset."""
    if not horizon_us > 0:
        raise ConfigError("horizon must be > 0", "horizon")
    pw = net.pathway if isinstance(net, Network) else net
    scale = 1e6 / horizon_us
    return np.stack([pw.n_pos * scale, pw.n_neg * scale], axis=1)


def reset_dynamic_state(net: Network) -> Network:
    return net.reset_dynamic_state()


def step(net: Network, input_spikes, label=None, now: int = 0, dt: int = 1000, **kw) -> StepResult:
    return net.step(input_spikes, label, now, dt, **kw)


def _component_rngs(seed: int):
    ss = np.random.SeedSequence(seed)
    w_ss, g_ss, syn_ss = ss.spawn(3)
    return np.random.default_rng(w_ss), np.random.default_rng(g_ss), np.random.default_rng(syn_ss)


def build_network(layer_sizes: Sequence[int], seed: int = 0, params: NeuronParams | None = None,
                  p_drop: float = 0.35, plasticity: PlasticityConfig | None = None,
                  label_rate: float = 200.0, error_weight: float = 0.5) -> Network:
    """Create a network with uniform fan-in scaled weights and frozen random feedback.

    Forward weights are uniform in +-sqrt(3 / fan_in); feedback weights are
    uniform in +-1/sqrt(n_classes). Everything derives from ``seed``.
    """
    sizes = [int(n) for n in layer_sizes]
    if len(sizes) < 3:
        raise ConfigError(f"need input, >=1 hidden and output layer, got {sizes}", "network.layers")
    if any(n < 1 for n in sizes):
        raise ConfigError(f"empty layer in {sizes}", "network.layers")
    if not 0.0 <= p_drop <= 1.0:
        raise ConfigError(f"must be in [0, 1], got {p_drop}", "network.p_drop")
    if label_rate < 0:
        raise ConfigError("must be >= 0", "network.label_rate")
    params = params or NeuronParams()
    plasticity = plasticity or PlasticityConfig()
    w_rng, g_rng, syn_rng = _component_rngs(seed)
    weights = []
    for n_pre, n_post in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(3.0 / n_pre)
        weights.append(w_rng.uniform(-bound, bound, size=(n_pre, n_post)))
    n_classes = sizes[-1]
    gb = 1.0 / math.sqrt(n_classes)
    feedback = [g_rng.uniform(-gb, gb, size=(n, n_classes)) for n in sizes[1:-1]]
    pathway = ErrorPathway(n_classes, feedback, label_rate, error_weight)
    return Network(sizes, weights, pathway, params, plasticity, p_drop, seed, syn_rng)


# -- checkpoints -------------------------------------------------------------
#
# Layout (all integers little-endian):
#   0   8 bytes   magic b"ERBPCKPT"
#   8   u32       format version
#   12  u32       header length H
#   16  u32       CRC-32 of header + payload
#   20  H bytes   UTF-8 JSON header, sorted keys
#   ... payload   float64 LE arrays, C order, in header["arrays"] order
#
# The header holds layer sizes, neuron/plasticity parameters, p_drop, label
# rate, error weight, seed, training step count, update counters, the
# synapse RNG state and an optional run configuration.

CHECKPOINT_MAGIC = b"ERBPCKPT"
CHECKPOINT_VERSION = 1
_CKPT_PREFIX = struct.Struct("<8sIII")


def _header(net: Network, config: dict | None) -> dict:
    arrays = [[f"w{l}", list(W.shape)] for l, W in enumerate(net.weights)]
    arrays += [[f"g{l}", list(g.shape)] for l, g in enumerate(net.feedback)]
    return {
        "arrays": arrays,
        "config": config,
        "error_weight": net.pathway.error_weight,
        "label_rate": net.pathway.label_rate,
        "learning_rate": net.plasticity.learning_rate,
        "b_min": net.plasticity.boxcar.b_min,
        "b_max": net.plasticity.boxcar.b_max,
        "neuron": asdict(net.params),
        "p_drop": net.p_drop,
        "rng_state": net.rng.bit_generator.state,
        "seed": net.seed,
        "sizes": net.sizes,
        "step_count": net.step_count,
        "update_counts": net.counter.counts,
    }


def checkpoint_bytes(net: Network, config: dict | None = None) -> bytes:
    header = json.dumps(_header(net, config), sort_keys=True, separators=(",", ":")).encode()
    payload = b"".join(
        np.ascontiguousarray(a, dtype="<f8").tobytes() for a in [*net.weights, *net.feedback]
    )
    crc = zlib.crc32(header + payload)
    return _CKPT_PREFIX.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(header), crc) + header + payload


def save_checkpoint(net: Network, path, config: dict | None = None) -> Path:
    path = Path(path)
    path.write_bytes(checkpoint_bytes(net, config))
    return path


def load_checkpoint(path) -> tuple[Network, dict | None]:
    """Restore a network saved by :func:`save_checkpoint`; returns ``(net, config)``."""
    data = Path(path).read_bytes()
    if len(data) < _CKPT_PREFIX.size:
        raise CheckpointError(f"{path}: truncated checkpoint")
    magic, version, hlen, crc = _CKPT_PREFIX.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    body = data[_CKPT_PREFIX.size:]
    if len(body) < hlen or zlib.crc32(body) != crc:
        raise CheckpointError(f"{path}: checksum mismatch, file is corrupted")
    try:
        h = json.loads(body[:hlen])
    except ValueError as exc:
        raise CheckpointError(f"{path}: unreadable header") from exc
    arrays, offset = {}, hlen
    for name, shape in h["arrays"]:
        n = int(np.prod(shape)) * 8
        if offset + n > len(body):
            raise CheckpointError(f"{path}: truncated payload")
        arrays[name] = np.frombuffer(body, dtype="<f8", count=n // 8, offset=offset).reshape(shape).astype(np.float64)
        offset += n
    if offset != len(body):
        raise CheckpointError(f"{path}: trailing bytes after payload")

    params = NeuronParams(**h["neuron"])
    plasticity = PlasticityConfig(h["learning_rate"], BoxcarParams(h["b_min"], h["b_max"]))
    sizes = h["sizes"]
    weights = [arrays[f"w{l}"] for l in range(len(sizes) - 1)]
    feedback = [arrays[f"g{l}"] for l in range(len(sizes) - 2)]
    pathway = ErrorPathway(sizes[-1], feedback, h["label_rate"], h["error_weight"])
    rng = np.random.default_rng()
    rng.bit_generator.state = h["rng_state"]
    net = Network(sizes, weights, pathway, params, plasticity, h["p_drop"], h["seed"], rng)
    net.step_count = h["step_count"]
    net.counter.counts = list(h["update_counts"])
    return net, h["config"]
