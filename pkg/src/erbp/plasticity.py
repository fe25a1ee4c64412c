"""Event-driven random-backprop weight updates.

Every delivered presynaptic spike ``j -> i`` changes ``w[j, i]`` by

    hidden layer:  -lr * D_i * boxcar(I_i)
    output layer:  -lr * e_i * boxcar(I_i)

where ``D_i`` is the dendritic error compartment (a leaky sum of randomly
weighted error spikes), ``e_i`` the signed error accumulator of the output
class, and ``boxcar`` is 1 strictly inside ``(b_min, b_max)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class BoxcarParams:
    b_min: float = -1.0
    b_max: float = 1.0

    def __post_init__(self):
        if not self.b_min < self.b_max:
            raise ConfigError(f"b_min ({self.b_min}) must be < b_max ({self.b_max})", "plasticity.b_min")

    def scaled(self, factor: float) -> "BoxcarParams":
        return BoxcarParams(self.b_min * factor, self.b_max * factor)


@dataclass(frozen=True)
class PlasticityConfig:
    learning_rate: float = 1e-3
    boxcar: BoxcarParams = field(default_factory=BoxcarParams)
    enabled: bool = True

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"must be > 0, got {self.learning_rate}", "plasticity.learning_rate")


class UpdateCounter:
    """Cumulative number of nonzero weight changes, per synapse matrix."""

    def __init__(self, n_layers: int):
        self.counts = [0] * n_layers

    def add(self, layer: int, n: int) -> None:
        self.counts[layer] += int(n)

    @property
    def total(self) -> int:
        return sum(self.counts)


def boxcar(I, p: BoxcarParams):
    """Surrogate derivative: 1 for ``b_min < I < b_max``, else 0."""
    inside = (np.asarray(I) > p.b_min) & (np.asarray(I) < p.b_max)
    return inside.astype(np.float64) if np.ndim(inside) else float(inside)


def hidden_update(D, I, cfg: PlasticityConfig):
    """Weight change per delivered input spike for hidden neurons with dendrite ``D``."""
    return -cfg.learning_rate * D * boxcar(I, cfg.boxcar)


def output_update(e, I, cfg: PlasticityConfig):
    """Weight change per delivered input spike for output neurons with error ``e``."""
    return -cfg.learning_rate * e * boxcar(I, cfg.boxcar)


def dense_oracle_step(weights, membranes, decay, feedback, error, layer_spikes, cfg: PlasticityConfig):
    """Brute-force evaluation of the random-backprop update for one tick.

    For every synapse ``j -> i`` this evaluates

        dw_ji = y_j * phi'(a * I_i + sum_j' w_j'i y_j') * T_i,
        T_i   = -lr * sum_k e_k g_ik   (hidden),   -lr * e_i   (output)

    with ``phi'`` the boxcar. Pure Python loops over every synapse; meant for
    small networks in tests only.

    Args:
        weights: forward matrices, ``weights[l][j, i]``.
        membranes: membrane potentials of layers 1.. before the tick.
        decay: membrane leak factor for one tick.
        feedback: fixed random matrices ``feedback[l][i, k]`` for hidden layers.
        error: signed per-class error ``e_k``.
        layer_spikes: spike counts of layers 0..L-2 during the tick.
        cfg: plasticity settings with boxcar bounds already in potential units.

    Returns:
        list of dense ``dw`` arrays shaped like ``weights``.
    """
    lr, lo, hi = cfg.learning_rate, cfg.boxcar.b_min, cfg.boxcar.b_max
    n_classes = len(error)
    out = []
    for l, W in enumerate(weights):
        n_pre, n_post = W.shape
        y = [float(v) for v in layer_spikes[l]]
        hidden = l < len(weights) - 1
        dw = np.zeros_like(W)
        for i in range(n_post):
            drive = 0.0
            for j in range(n_pre):
                drive += y[j] * W[j, i]
            potential = membranes[l][i] * decay + drive
            gate = 1.0 if lo < potential < hi else 0.0
            if hidden:
                signal = 0.0
                for k in range(n_classes):
                    signal += error[k] * feedback[l][i, k]
            else:
                signal = error[i]
            unit = -lr * signal * gate
            for j in range(n_pre):
                dw[j, i] = y[j] * unit
        out.append(dw)
    return out
