"""Image-to-event synthesis by simulated triangular microsaccades.

A static grayscale image is translated along a closed triangular path in
(pan, tilt) and observed by an idealised DVS pixel array: each pixel keeps a
reference log intensity and emits one event each time its change exceeds
``contrast_threshold``, moving its reference by that amount.

Pan maps to +x and tilt to +y image translation, ``pixels_per_degree`` pixels
per degree. Translation is sampled bilinearly with edge clamping.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import ConfigError, DataError
from .events import EVENT_DTYPE, EventStream

LOG_EPS = 1.0 / 255.0
# A pixel fires only once its change exceeds a multiple of the threshold by
# this relative margin, so landing exactly on a level (as on the return to
# the start of a closed path) is not decided by rounding noise.
LEVEL_TOL = 1e-9


@dataclass(frozen=True)
class SaccadeConfig:
    alpha: float = 1.833             # degrees
    phase_duration: float = 0.2      # seconds per phase
    pixels_per_degree: float = 10.0
    contrast_threshold: float = 0.15  # log units
    dt: int = 1000                   # microseconds

    def __post_init__(self):
        for name in ("alpha", "phase_duration", "contrast_threshold", "dt"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"must be > 0, got {getattr(self, name)}", f"saccade.{name}")
        if self.pixels_per_degree < 0:
            raise ConfigError("must be >= 0", "saccade.pixels_per_degree")

    @property
    def phase_us(self) -> int:
        return int(round(self.phase_duration * 1e6))


@dataclass(frozen=True)
class SaccadePath:
    """Three straight (pan, tilt) moves of equal duration forming a closed triangle."""

    segments: tuple[tuple[float, float], ...]
    phase_us: int

    @property
    def duration_us(self) -> int:
        return len(self.segments) * self.phase_us

    def vertices(self) -> np.ndarray:
        return np.vstack([[0.0, 0.0], np.cumsum(self.segments, axis=0)])

    def position(self, t_us: float) -> tuple[float, float]:
        """(pan, tilt) in degrees at time ``t_us`` after onset, clamped to the path."""
        t = min(max(float(t_us), 0.0), float(self.duration_us))
        verts = self.vertices()
        k = min(int(t // self.phase_us), len(self.segments) - 1)
        frac = (t - k * self.phase_us) / self.phase_us
        pan = verts[k, 0] + frac * self.segments[k][0]
        tilt = verts[k, 1] + frac * self.segments[k][1]
        if t == self.duration_us:
            # land exactly on the last vertex; avoids rounding residue
            pan, tilt = verts[-1]
        return float(pan), float(tilt)


def saccade_path(cfg: SaccadeConfig) -> SaccadePath:
    a = cfg.alpha
    return SaccadePath(((-a / 2, -a), (-a / 2, a), (a, 0.0)), cfg.phase_us)


def sample_times(cfg: SaccadeConfig) -> np.ndarray:
    """Simulation clock in microseconds, from 0 to exactly the path duration."""
    end = saccade_path(cfg).duration_us
    times = np.arange(0, end + 1, cfg.dt, dtype=np.int64)
    if times[-1] != end:
        times = np.append(times, end)
    return times


def _as_intensity(img) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 2 or img.size == 0:
        raise DataError(f"expected a non-empty 2-D grayscale image, got shape {img.shape}")
    if img.dtype == np.uint8:
        return img.astype(np.float64) / 255.0
    img = img.astype(np.float64)
    if img.min() < 0 or img.max() > 1:
        raise DataError("float image intensities must lie in [0, 1]")
    return img


def translate_image(img: np.ndarray, shift_x: float, shift_y: float) -> np.ndarray:
    return ndimage.shift(img, (shift_y, shift_x), order=1, mode="nearest", prefilter=False)


def crossings(diff, theta: float) -> np.ndarray:
    """Threshold levels strictly passed by a positive log change ``diff``."""
    n = np.floor(np.maximum(diff, 0.0) / theta - LEVEL_TOL)
    return np.maximum(n, 0).astype(np.int64)


def events_from_shifts(img, times_us, shifts_px, contrast_threshold: float,
                       label: int | None = None) -> EventStream:
    """Idealised DVS response to ``img`` translated by ``shifts_px[k] = (sx, sy)`` at ``times_us[k]``.

    The first sample sets the per-pixel reference; events are stamped with the
    time of the sample that triggered them.
    """
    intensity = _as_intensity(img)
    height, width = intensity.shape
    theta = contrast_threshold
    if not theta > 0:
        raise ConfigError("must be > 0", "saccade.contrast_threshold")

    def frame(k):
        sx, sy = shifts_px[k]
        return np.log(translate_image(intensity, sx, sy) + LOG_EPS)

    ref = frame(0)
    chunks = []
    for k in range(1, len(times_us)):
        diff = frame(k) - ref
        n_on = crossings(diff, theta)
        n_off = crossings(-diff, theta)
        ref += (n_on - n_off) * theta
        counts = np.stack([n_off, n_on], axis=-1).reshape(-1)  # (y, x, polarity) row-major
        if not counts.any():
            continue
        flat = np.repeat(np.arange(counts.size), counts)
        pix, pol = np.divmod(flat, 2)
        y, x = np.divmod(pix, width)
        ev = np.zeros(flat.size, dtype=EVENT_DTYPE)
        ev["t"], ev["x"], ev["y"], ev["p"] = times_us[k], x, y, pol
        chunks.append(ev)
    events = np.concatenate(chunks) if chunks else np.zeros(0, dtype=EVENT_DTYPE)
    return EventStream(width, height, events, label)


def synthesize_events(img, cfg: SaccadeConfig = SaccadeConfig(), reverse: bool = False,
                      label: int | None = None) -> EventStream:
    """Convert a static image into an event stream along the microsaccade triangle.

    ``reverse=True`` traverses the same triangle backwards in time.
    """
    path = saccade_path(cfg)
    times = sample_times(cfg)
    end = path.duration_us
    shifts = []
    for t in times:
        pan, tilt = path.position(end - t if reverse else t)
        shifts.append((pan * cfg.pixels_per_degree, tilt * cfg.pixels_per_degree))
    return events_from_shifts(img, times, shifts, cfg.contrast_threshold, label)


def read_pgm(path) -> np.ndarray:
    """Read an 8-bit binary (P5) PGM as a uint8 array."""
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(2) != b"P5":
            raise DataError(f"{path}: not a binary PGM (P5) file")
    try:
        with Image.open(path) as im:
            if im.mode != "L":
                raise DataError(f"{path}: expected 8-bit grayscale, got mode {im.mode}")
            return np.array(im, dtype=np.uint8)
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc


def write_pgm(path, img: np.ndarray) -> Path:
    img = np.asarray(img)
    if img.dtype != np.uint8:
        img = np.clip(np.round(np.asarray(img, dtype=np.float64) * 255), 0, 255).astype(np.uint8)
    Image.fromarray(img, mode="L").save(path, format="PPM")
    return Path(path)
