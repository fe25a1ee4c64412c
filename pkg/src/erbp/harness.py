"""Training and evaluation loops, readouts, metrics and spiketrain logs."""

from __future__ import annotations

import csv
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .attention import AttentionConfig, attend, rescale
from .errors import ConfigError, DataError
from .events import EventStream, downsample, stream_indices
from .snn import Network

METRICS_COLUMNS = ("epoch", "split", "acc_rate", "acc_first", "weight_updates", "wall_ms")
SPIKE_COLUMNS = ("t_us", "layer", "neuron")


@dataclass(frozen=True)
class PresentationConfig:
    mode: str = "rescale"              # "attention" or "rescale"
    window: tuple[int, int] = (64, 64)
    n_attention: int = 1000
    pool: int = 1                      # applied before attention / rescaling
    gap_ms: float = 50.0
    epochs: int = 1
    shuffle_seed: int = 0
    reset: bool = True
    dt: int = 1000                     # microseconds per tick
    wall_clock: bool = True

    def __post_init__(self):
        if self.mode not in ("attention", "rescale"):
            raise ConfigError(f"must be 'attention' or 'rescale', got {self.mode!r}", "input.mode")
        if self.epochs < 1:
            raise ConfigError(f"must be >= 1, got {self.epochs}", "run.epochs")
        if self.dt <= 0:
            raise ConfigError("must be > 0", "run.dt_us")
        if self.gap_ms < 0:
            raise ConfigError("must be >= 0", "run.gap_ms")
        if self.pool < 1:
            raise ConfigError("must be >= 1", "input.pool")
        AttentionConfig(self.n_attention, self.window)

    @property
    def input_size(self) -> int:
        return 2 * self.window[0] * self.window[1]


@dataclass
class MetricsRow:
    epoch: int
    split: str
    acc_rate: float
    acc_first: float
    weight_updates: int
    wall_ms: int
    samples: list["SampleResult"] = field(default_factory=list, repr=False)

    def csv_row(self) -> list[str]:
        return [str(self.epoch), self.split, f"{self.acc_rate:.6f}", f"{self.acc_first:.6f}",
                str(self.weight_updates), str(self.wall_ms)]


@dataclass
class RunMetrics:
    rows: list[MetricsRow] = field(default_factory=list)

    def append(self, row: MetricsRow) -> None:
        self.rows.append(row)

    def write_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(METRICS_COLUMNS)
            w.writerows(r.csv_row() for r in self.rows)
        return path


@dataclass
class SampleResult:
    label: int | None
    counts: np.ndarray
    rate_class: int
    no_spike: bool
    first_class: int | None
    latency_us: int | None
    max_rate_hz: float = 0.0


@dataclass
class PreparedSample:
    """A sample binned onto the simulation clock."""

    ticks: list[np.ndarray]     # input indices per tick
    onset: int                  # timestamp of the first raw event
    label: int | None


class SpikeLog:
    """Collects ``(t_us, layer, neuron)`` triples. Hidden layers share one index range."""

    def __init__(self, sizes: Sequence[int]):
        self.offsets = np.concatenate([[0], np.cumsum(sizes[1:-1])]).astype(np.int64)
        self.rows: list[tuple[int, str, int]] = []

    def record(self, t: int, result) -> None:
        spikes = result.spikes
        for n in np.repeat(np.arange(spikes[0].size), spikes[0]):
            self.rows.append((t, "input", int(n)))
        for h, s in enumerate(spikes[1:-1]):
            for n in np.flatnonzero(s):
                self.rows.append((t, "hidden", int(n + self.offsets[h])))
        for n in np.flatnonzero(spikes[-1]):
            self.rows.append((t, "output", int(n)))
        for n in np.flatnonzero(result.label):
            self.rows.append((t, "label", int(n)))

    def write_csv(self, path) -> Path:
        path = Path(path)
        order = {"input": 0, "hidden": 1, "output": 2, "label": 3}
        rows = sorted(self.rows, key=lambda r: (r[0], order[r[1]], r[2]))
        try:
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(SPIKE_COLUMNS)
                w.writerows(rows)
        except OSError as exc:
            raise OSError(f"cannot write spiketrain log {path}: {exc}") from exc
        return path


def prepare(sample: EventStream, cfg: PresentationConfig) -> PreparedSample:
    """Pool, attend or rescale, then bin a raw stream into per-tick input indices."""
    onset = sample.t_start
    n_ticks = (sample.t_end - onset) // cfg.dt + 1 if len(sample) else 0
    s = downsample(sample, cfg.pool) if cfg.pool > 1 else sample
    if cfg.mode == "attention":
        s = attend(s, AttentionConfig(cfg.n_attention, cfg.window))
    elif (s.width, s.height) != tuple(cfg.window):
        s = rescale(s, cfg.window)
    idx = stream_indices(s)
    tick = (s.events["t"].astype(np.int64) - onset) // cfg.dt
    bounds = np.searchsorted(tick, np.arange(1, n_ticks))
    ticks = np.split(idx, bounds) if n_ticks else []
    return PreparedSample(ticks, onset, sample.label)


def rate_readout(counts) -> tuple[int, bool]:
    """Argmax of output spike counts, lowest index on ties; flags an all-silent output."""
    counts = np.asarray(counts)
    return int(np.argmax(counts)), bool(counts.max(initial=0) == 0)


def _check_label(label, net: Network) -> None:
    if label is not None and not 0 <= label < net.n_classes:
        raise DataError(f"label {label} outside [0, {net.n_classes})")


def present(net: Network, sample: PreparedSample, cfg: PresentationConfig, learn: bool,
            drive_label: bool, log: SpikeLog | None = None) -> SampleResult:
    """Run one sample through the network from the current dynamic state."""
    if sample.ticks and net.sizes[0] != cfg.input_size:
        raise ConfigError(
            f"network has {net.sizes[0]} inputs but the input window needs {cfg.input_size}",
            "network.layers",
        )
    _check_label(sample.label, net)
    label = sample.label if drive_label else None
    counts = np.zeros(net.n_classes, dtype=np.int64)
    first_class = first_t = None
    dt = cfg.dt
    last_spike = [np.full(n, -1, dtype=np.int64) for n in net.sizes[1:]]
    min_isi = None
    for k, idx in enumerate(sample.ticks):
        now = k * dt
        res = net.step(idx, label, now, dt, learn=learn)
        out = res.spikes[-1]
        if out.any():
            counts += out
            if first_class is None:
                first_class, first_t = int(np.flatnonzero(out)[0]), now
        for l, fired in enumerate(res.spikes[1:]):
            if fired.any():
                prev = last_spike[l][fired]
                seen = prev >= 0
                if seen.any():
                    isi = int((now - prev[seen]).min())
                    min_isi = isi if min_isi is None else min(min_isi, isi)
                last_spike[l][fired] = now
        if log is not None:
            log.record(sample.onset + now, res)
    rate_class, silent = rate_readout(counts)
    return SampleResult(
        sample.label, counts, rate_class, silent, first_class, first_t,
        max_rate_hz=(1e6 / min_isi) if min_isi else 0.0,
    )


def _idle(net: Network, cfg: PresentationConfig) -> None:
    n = int(round(cfg.gap_ms * 1000 / cfg.dt))
    empty = np.zeros(0, dtype=np.int64)
    for k in range(n):
        net.step(empty, None, k * cfg.dt, cfg.dt, learn=False)


@contextmanager
def _eval_mode(net: Network):
    """Leave the synapse RNG as found, so evaluation never changes a checkpoint."""
    state = net.rng.bit_generator.state
    try:
        yield
    finally:
        net.rng.bit_generator.state = state


def _run(net: Network, samples: Sequence[PreparedSample], cfg: PresentationConfig, learn: bool,
         epoch: int, split: str) -> MetricsRow:
    if not learn:
        with _eval_mode(net):
            return _run_samples(net, samples, cfg, False, epoch, split)
    return _run_samples(net, samples, cfg, True, epoch, split)


def _run_samples(net: Network, samples: Sequence[PreparedSample], cfg: PresentationConfig,
                 learn: bool, epoch: int, split: str) -> MetricsRow:
    start = time.perf_counter()
    before = net.counter.total
    results = []
    for s in samples:
        if cfg.reset:
            net.reset_dynamic_state()
        results.append(present(net, s, cfg, learn=learn, drive_label=learn))
        if not cfg.reset:
            _idle(net, cfg)
    labelled = [r for r in results if r.label is not None]
    n = max(len(labelled), 1)
    acc_rate = sum(r.rate_class == r.label for r in labelled) / n
    acc_first = sum(r.first_class == r.label for r in labelled) / n
    wall = int(round((time.perf_counter() - start) * 1000)) if cfg.wall_clock else 0
    return MetricsRow(epoch, split, acc_rate, acc_first, net.counter.total - before, wall, results)


def _as_prepared(dataset, cfg) -> list[PreparedSample]:
    return [s if isinstance(s, PreparedSample) else prepare(s, cfg) for s in dataset]


def epoch_order(n: int, shuffle_seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([shuffle_seed, epoch]).permutation(n)


def train_epoch(net: Network, dataset: Sequence, cfg: PresentationConfig, epoch: int = 1) -> MetricsRow:
    """Present every sample once in seeded shuffled order with label drive and plasticity on.

    The accuracies in the returned row are read out online, during learning.
    """
    if not len(dataset):
        raise DataError("training set is empty")
    samples = _as_prepared(dataset, cfg)
    for s in samples:
        if s.label is None:
            raise DataError("training sample without label")
        _check_label(s.label, net)
    order = epoch_order(len(samples), cfg.shuffle_seed, epoch)
    return _run(net, [samples[i] for i in order], cfg, True, epoch, "train")


def evaluate(net: Network, dataset: Sequence, cfg: PresentationConfig, epoch: int = 0,
             split: str = "test") -> MetricsRow:
    """Both readouts on every sample, label neurons silent and plasticity off.

    A silent output counts as a class-0 rate decision and as a wrong
    first-spike decision.
    """
    return _run(net, _as_prepared(dataset, cfg), cfg, False, epoch, split)


def train(net: Network, train_set: Sequence, cfg: PresentationConfig, test_set: Sequence | None = None,
          eval_every: int = 0, metrics: RunMetrics | None = None, on_epoch=None) -> RunMetrics:
    """``cfg.epochs`` training epochs, optionally evaluating ``test_set`` every ``eval_every``."""
    metrics = metrics if metrics is not None else RunMetrics()
    train_p = _as_prepared(train_set, cfg)
    test_p = _as_prepared(test_set, cfg) if test_set else None
    for epoch in range(1, cfg.epochs + 1):
        metrics.append(train_epoch(net, train_p, cfg, epoch))
        if test_p and eval_every and (epoch % eval_every == 0 or epoch == cfg.epochs):
            metrics.append(evaluate(net, test_p, cfg, epoch, "test"))
        if on_epoch is not None:
            on_epoch(metrics.rows[-1])
    return metrics


def classify_rate(net: Network, sample, cfg: PresentationConfig) -> tuple[int, np.ndarray]:
    s = sample if isinstance(sample, PreparedSample) else prepare(sample, cfg)
    net.reset_dynamic_state()
    with _eval_mode(net):
        r = present(net, s, cfg, learn=False, drive_label=False)
    return r.rate_class, r.counts


def classify_first_spike(net: Network, sample, cfg: PresentationConfig) -> tuple[int | None, int | None]:
    """Class of the earliest output spike and its latency in microseconds, or ``(None, None)``."""
    s = sample if isinstance(sample, PreparedSample) else prepare(sample, cfg)
    net.reset_dynamic_state()
    with _eval_mode(net):
        r = present(net, s, cfg, learn=False, drive_label=False)
    return r.first_class, r.latency_us


def dump_spiketrains(net: Network, sample, path, cfg: PresentationConfig,
                     drive_label: bool = False) -> Path:
    """Write a ``t_us,layer,neuron`` CSV for one evaluation-mode presentation."""
    s = sample if isinstance(sample, PreparedSample) else prepare(sample, cfg)
    log = SpikeLog(net.sizes)
    net.reset_dynamic_state()
    with _eval_mode(net):
        present(net, s, cfg, learn=False, drive_label=drive_label, log=log)
    return log.write_csv(path)


def find_bursts(times_us: Iterable[int], bin_us: int = 4000, quiet_fraction: float = 0.6,
                window_bins: int = 15, min_burst_bins: int = 2) -> list[tuple[int, int]]:
    """``(start_us, end_us)`` spans of activity bursts in a spike-time histogram.

    A bin is quiet when it is empty or holds fewer than ``quiet_fraction``
    times the median of the ``window_bins`` bins around it; a burst is a run of at
    least ``min_burst_bins`` non-quiet bins.
    """
    t = np.asarray(list(times_us), dtype=np.int64)
    if not t.size:
        return []
    t0 = int(t.min())
    hist = np.bincount((t - t0) // bin_us).astype(np.float64)
    local = ndimage.median_filter(hist, size=window_bins, mode="nearest")
    active = np.append((hist > 0) & (hist >= quiet_fraction * local), False)
    spans, start = [], None
    for k, a in enumerate(active):
        if a and start is None:
            start = k
        elif not a and start is not None:
            if k - start >= min_burst_bins:
                spans.append((t0 + start * bin_us, t0 + k * bin_us))
            start = None
    return spans


def count_bursts(times_us: Iterable[int], **kw) -> int:
    return len(find_bursts(times_us, **kw))
