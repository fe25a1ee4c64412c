"""Synthetic Poisson-pattern classification data for smoke tests and desk-scale runs."""

from __future__ import annotations

import argparse
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .events import EVENT_DTYPE, EventFormat, EventStream, write_events, write_manifest
from .harness import PreparedSample, PresentationConfig, evaluate, prepare, train_epoch
from .snn import Network


def sensor_for_inputs(n_inputs: int) -> tuple[int, int]:
    """Widest ``w x h`` sensor with ``2*w*h == n_inputs`` and ``w >= h``."""
    if n_inputs % 2:
        raise ValueError("input count must be even (ON and OFF blocks)")
    pixels = n_inputs // 2
    h = int(np.sqrt(pixels))
    while pixels % h:
        h -= 1
    return pixels // h, h


def class_prototypes(n_classes: int, n_inputs: int, n_active: int, rng) -> np.ndarray:
    """Boolean ``(n_classes, n_inputs)`` masks of the inputs each class drives."""
    protos = np.zeros((n_classes, n_inputs), dtype=bool)
    for k in range(n_classes):
        protos[k, rng.choice(n_inputs, n_active, replace=False)] = True
    return protos


def poisson_pattern_dataset(n_classes: int = 3, n_inputs: int = 64, samples_per_class: int = 50,
                            duration_ms: int = 200, rate_on: float = 60.0, rate_off: float = 2.0,
                            n_active: int = 16, seed: int = 0, prototypes: np.ndarray | None = None
                            ) -> tuple[list[EventStream], np.ndarray]:
    """Each class fires a fixed random subset of inputs at ``rate_on`` Hz, the rest at ``rate_off``.

    Samples are independent Poisson realisations on a 1 ms grid, with an
    onset event on the first tick so all samples share the same time base.
    Returns the samples (class-interleaved) and the prototype masks, which
    can be passed back in to draw a held-out split from the same classes.
    """
    rng = np.random.default_rng(seed)
    if prototypes is None:
        prototypes = class_prototypes(n_classes, n_inputs, n_active, rng)
    width, height = sensor_for_inputs(n_inputs)
    pixels = width * height
    samples = []
    for i in range(samples_per_class):
        for k in range(n_classes):
            rates = np.where(prototypes[k], rate_on, rate_off) / 1000.0
            fire = rng.random((duration_ms, n_inputs)) < rates
            fire[0, rng.choice(np.flatnonzero(prototypes[k]))] = True
            t_ms, neuron = np.nonzero(fire)
            ev = np.zeros(t_ms.size, dtype=EVENT_DTYPE)
            ev["t"] = t_ms * 1000
            block, pix = np.divmod(neuron, pixels)
            ev["p"] = 1 - block           # ON block first
            ev["y"], ev["x"] = np.divmod(pix, width)
            samples.append(EventStream(width, height, ev, k))
    return samples, prototypes


@dataclass
class ToyTask:
    train: list[PreparedSample]
    test: list[PreparedSample]
    prototypes: np.ndarray
    cfg: PresentationConfig
    layers: list[int]


def toy_task(n_classes: int = 3, n_inputs: int = 64, samples_per_class: int = 50,
             test_per_class: int = 20, hidden: int = 200, seed: int = 1,
             wall_clock: bool = False) -> ToyTask:
    """Train and held-out splits drawn from the same class prototypes, pre-binned."""
    train, protos = poisson_pattern_dataset(n_classes, n_inputs, samples_per_class, seed=seed)
    test, _ = poisson_pattern_dataset(n_classes, n_inputs, test_per_class, seed=seed + 1,
                                      prototypes=protos)
    cfg = PresentationConfig(mode="rescale", window=sensor_for_inputs(n_inputs), wall_clock=wall_clock)
    return ToyTask([prepare(s, cfg) for s in train], [prepare(s, cfg) for s in test], protos, cfg,
                   [n_inputs, hidden, hidden, n_classes])


@dataclass
class FitResult:
    epochs: int                  # epochs run
    converged: bool
    history: list[dict]          # per epoch: online train row and clean train/test evaluations
    elapsed_s: float = 0.0


def fit(net: Network, task: ToyTask, max_epochs: int = 20, train_target: float = 0.95,
        test_target: float = 0.90) -> FitResult:
    """Train epoch by epoch until both clean rate-readout accuracies reach their targets."""
    history = []
    start = time.perf_counter()
    for epoch in range(1, max_epochs + 1):
        online = train_epoch(net, task.train, task.cfg, epoch)
        on_train = evaluate(net, task.train, task.cfg, epoch, "train")
        on_test = evaluate(net, task.test, task.cfg, epoch, "test")
        history.append({"online": online, "train": on_train, "test": on_test})
        if on_train.acc_rate >= train_target and on_test.acc_rate >= test_target:
            return FitResult(epoch, True, history, time.perf_counter() - start)
    return FitResult(max_epochs, False, history, time.perf_counter() - start)


def write_dataset(samples, directory, fmt: EventFormat = EventFormat.BIN) -> Path:
    """Write samples as numbered event files plus ``manifest.tsv``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ext = ".evs" if EventFormat(fmt) is EventFormat.BIN else ".txt"
    entries = []
    for i, s in enumerate(samples):
        name = f"sample_{i:05d}{ext}"
        write_events(s, directory / name, fmt)
        entries.append((name, s.label))
    return write_manifest(directory, entries)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="python -m erbp.toy",
                                description="write the synthetic Poisson-pattern task as event files")
    p.add_argument("out_dir")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--train-per-class", type=int, default=50)
    p.add_argument("--test-per-class", type=int, default=20)
    p.add_argument("--inputs", type=int, default=64)
    p.add_argument("--seed", type=int, default=1)
    args = p.parse_args(argv)
    train, protos = poisson_pattern_dataset(args.classes, args.inputs, args.train_per_class, seed=args.seed)
    test, _ = poisson_pattern_dataset(args.classes, args.inputs, args.test_per_class, seed=args.seed + 1,
                                      prototypes=protos)
    out = Path(args.out_dir)
    for name, samples in (("train", train), ("test", test)):
        print(write_dataset(samples, out / name))
    w, h = sensor_for_inputs(args.inputs)
    print(f"sensor {w}x{h}: train with --layers {args.inputs},200,200,{args.classes} --window {w}x{h}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
