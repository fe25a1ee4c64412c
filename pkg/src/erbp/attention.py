"""Covert attention window driven by the running median of recent events.

The window centre is the per-axis median of the coordinates of the last
``n_attention`` events. For an even number of buffered events the lower of
the two middle values is used (order statistic ``(n - 1) // 2``). Events are
re-addressed relative to the centre, and anything falling outside the window
is dropped.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from sortedcontainers import SortedList

from .errors import ConfigError
from .events import AddressEvent, EventStream, EVENT_DTYPE, downsample


@dataclass(frozen=True)
class AttentionConfig:
    n_attention: int = 1000
    window: tuple[int, int] = (64, 64)

    def __post_init__(self):
        if self.n_attention < 1:
            raise ConfigError(f"must be >= 1, got {self.n_attention}", "input.n_attention")
        w, h = self.window
        if w < 1 or h < 1:
            raise ConfigError(f"window must be positive, got {w}x{h}", "input.window")

    def check_sensor(self, width: int, height: int) -> None:
        w, h = self.window
        if w > width or h > height:
            raise ConfigError(f"window {w}x{h} exceeds sensor {width}x{height}", "input.window")


class AttentionState:
    """Ring buffer of recent event coordinates plus two order-statistic lists."""

    def __init__(self, n_attention: int, sensor: tuple[int, int]):
        self.n_attention = n_attention
        self.sensor = sensor
        self._buf: deque[tuple[int, int]] = deque()
        self._xs = SortedList()
        self._ys = SortedList()

    def __len__(self) -> int:
        return len(self._buf)

    @property
    def center(self) -> tuple[int, int]:
        if not self._buf:
            return self.sensor[0] // 2, self.sensor[1] // 2
        k = (len(self._buf) - 1) // 2
        return self._xs[k], self._ys[k]

    def update(self, x: int, y: int) -> "AttentionState":
        if len(self._buf) == self.n_attention:
            ox, oy = self._buf.popleft()
            self._xs.remove(ox)
            self._ys.remove(oy)
        self._buf.append((x, y))
        self._xs.add(x)
        self._ys.add(y)
        return self

    def reset(self) -> None:
        self._buf.clear()
        self._xs.clear()
        self._ys.clear()


def attention_update(state: AttentionState, e: AddressEvent) -> AttentionState:
    return state.update(e.x, e.y)


def remap(e: AddressEvent, state: AttentionState, cfg: AttentionConfig) -> AddressEvent | None:
    """Re-address ``e`` into the window around the current centre; ``None`` means discard."""
    cx, cy = state.center
    w, h = cfg.window
    x = e.x - cx + w // 2
    y = e.y - cy + h // 2
    if 0 <= x < w and 0 <= y < h:
        return AddressEvent(e.t, x, y, e.polarity)
    return None


def attend(s: EventStream, cfg: AttentionConfig, state: AttentionState | None = None) -> EventStream:
    """Run a whole stream through the attention window.

    Each event first enters the median buffer and is then remapped. A fresh
    state is used unless one is passed in, i.e. the buffer resets per sample.
    """
    cfg.check_sensor(s.width, s.height)
    if state is None:
        state = AttentionState(cfg.n_attention, (s.width, s.height))
    w, h = cfg.window
    half_w, half_h = w // 2, h // 2
    out = []
    # inlined update/remap; this loop dominates attention-mode preprocessing
    buf, xs, ys, n = state._buf, state._xs, state._ys, state.n_attention
    for t, x, y, p in s.events.tolist():
        if len(buf) == n:
            ox, oy = buf.popleft()
            xs.remove(ox)
            ys.remove(oy)
        buf.append((x, y))
        xs.add(x)
        ys.add(y)
        k = (len(buf) - 1) // 2
        rx = x - xs[k] + half_w
        ry = y - ys[k] + half_h
        if 0 <= rx < w and 0 <= ry < h:
            out.append((t, rx, ry, p))
    arr = np.array(out, dtype=EVENT_DTYPE) if out else np.zeros(0, dtype=EVENT_DTYPE)
    return EventStream(w, h, arr, s.label)


def rescale(s: EventStream, target: tuple[int, int]) -> EventStream:
    """Pool a stream down to ``target`` as the non-attention baseline.

    The pooling factor is ``min(width // tw, height // th)``. If the sensor is
    not an exact multiple of the target at that factor, it is first cropped
    to the centred ``tw * pool`` x ``th * pool`` region.
    """
    tw, th = target
    if tw < 1 or th < 1:
        raise ConfigError(f"target must be positive, got {tw}x{th}", "input.window")
    if tw > s.width or th > s.height:
        raise ConfigError(f"target {tw}x{th} larger than source {s.width}x{s.height}", "input.window")
    pool = min(s.width // tw, s.height // th)
    cw, ch = tw * pool, th * pool
    if (cw, ch) != (s.width, s.height):
        ox, oy = (s.width - cw) // 2, (s.height - ch) // 2
        ev = s.events
        keep = (ev["x"] >= ox) & (ev["x"] < ox + cw) & (ev["y"] >= oy) & (ev["y"] < oy + ch)
        ev = ev[keep].copy()
        ev["x"] -= ox
        ev["y"] -= oy
        s = EventStream(cw, ch, ev, s.label)
    return downsample(s, pool)
