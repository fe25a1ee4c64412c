import numpy as np
import pytest
from scipy import ndimage

from erbp.errors import ConfigError, DataError
from erbp.events import Polarity
from erbp.saccade import (
    LOG_EPS, SaccadeConfig, events_from_shifts, read_pgm, sample_times, saccade_path,
    synthesize_events, write_pgm,
)


def step_edge(width=48, height=6, col=30, dark=0.2, bright=0.8):
    img = np.full((height, width), dark)
    img[:, col:] = bright
    return img


def smooth_image(seed, shape=(32, 32)):
    rng = np.random.default_rng(seed)
    img = ndimage.gaussian_filter(rng.random(shape), 2.0)
    return (img - img.min()) / (img.max() - img.min())


def per_pixel_counts(stream, polarity):
    ev = stream.events[stream.events["p"] == polarity]
    counts = np.zeros((stream.height, stream.width), dtype=np.int64)
    np.add.at(counts, (ev["y"], ev["x"]), 1)
    return counts


def edge_oracle(profile, cfg):
    """Row-wise DVS counts for a horizontally invariant image, using np.interp for the shift."""
    path = saccade_path(cfg)
    xs = np.arange(profile.size, dtype=float)

    def log_at(t):
        sx = path.position(t)[0] * cfg.pixels_per_degree
        return np.log(np.interp(np.clip(xs - sx, 0, xs[-1]), xs, profile) + LOG_EPS)

    ref = log_at(0)
    on = np.zeros(profile.size, dtype=np.int64)
    off = np.zeros_like(on)
    for t in sample_times(cfg)[1:]:
        d = log_at(t) - ref
        n = np.floor(np.abs(d) / cfg.contrast_threshold).astype(np.int64)
        on += np.where(d > 0, n, 0)
        off += np.where(d < 0, n, 0)
        ref += np.sign(d) * n * cfg.contrast_threshold
    return on, off


def test_default_path_segments():
    path = saccade_path(SaccadeConfig())
    np.testing.assert_allclose(path.segments, [(-0.9165, -1.833), (-0.9165, 1.833), (1.833, 0.0)])
    assert path.phase_us == 200_000


def test_path_closes():
    path = saccade_path(SaccadeConfig(alpha=2.7))
    assert path.position(path.duration_us) == (0.0, 0.0)
    np.testing.assert_allclose(path.vertices()[-1], [0.0, 0.0], atol=1e-12)


def test_path_vertices_at_phase_boundaries():
    cfg = SaccadeConfig()
    path = saccade_path(cfg)
    for k, vertex in enumerate(path.vertices()):
        np.testing.assert_allclose(path.position(k * cfg.phase_us), vertex, atol=1e-12)


def test_sample_times_end_exactly():
    times = sample_times(SaccadeConfig(dt=3000))
    assert times[0] == 0 and times[-1] == 600_000
    assert np.all(np.diff(times) > 0)


def test_uniform_image_is_silent():
    s = synthesize_events(np.full((16, 16), 0.5))
    assert len(s) == 0
    assert (s.width, s.height) == (16, 16)


def test_timestamps_within_path():
    cfg = SaccadeConfig()
    s = synthesize_events(smooth_image(0), cfg)
    assert len(s) > 0
    assert s.events["t"].min() > 0
    assert s.events["t"].max() <= 3 * cfg.phase_us


def test_step_edge_matches_1d_oracle():
    img = step_edge()
    cfg = SaccadeConfig()
    s = synthesize_events(img, cfg)
    on, off = edge_oracle(img[0], cfg)
    for pol, expected in [(Polarity.ON, on), (Polarity.OFF, off)]:
        counts = per_pixel_counts(s, pol)
        np.testing.assert_array_equal(counts, np.broadcast_to(expected, counts.shape))


def test_step_edge_polarity_by_phase():
    cfg = SaccadeConfig()
    col = 30
    s = synthesize_events(step_edge(col=col), cfg)
    ev, ph = s.events, cfg.phase_us
    early, late = ev[ev["t"] <= 2 * ph], ev[ev["t"] > 2 * ph]
    # leftward sweep brightens pixels just left of the edge, the return darkens them
    assert len(early) and np.all(early["p"] == Polarity.ON)
    assert len(late) and np.all(late["p"] == Polarity.OFF)
    assert np.all(ev["x"] < col)
    # dark/bright swapped: polarities swap
    flipped = synthesize_events(step_edge(col=col, dark=0.8, bright=0.2), cfg).events
    assert np.all(flipped["p"][flipped["t"] <= 2 * ph] == Polarity.OFF)
    assert np.all(flipped["p"][flipped["t"] > 2 * ph] == Polarity.ON)


def test_step_edge_reverse_antisymmetric():
    img = step_edge()
    fwd = synthesize_events(img)
    rev = synthesize_events(img, reverse=True)
    assert np.abs(per_pixel_counts(fwd, Polarity.ON) - per_pixel_counts(rev, Polarity.OFF)).max() <= 1
    assert np.abs(per_pixel_counts(fwd, Polarity.OFF) - per_pixel_counts(rev, Polarity.ON)).max() <= 1


def test_single_sweep_reverse_swaps_polarity():
    img = step_edge()
    times = np.arange(0, 201_000, 1000)
    shifts = [(-12.0 * t / times[-1], 0.0) for t in times]
    fwd = events_from_shifts(img, times, shifts, 0.15)
    rev = events_from_shifts(img, times, shifts[::-1], 0.15)
    assert len(fwd) > 0
    assert np.all(fwd.events["p"] == Polarity.ON)
    assert np.all(rev.events["p"] == Polarity.OFF)
    assert np.abs(per_pixel_counts(fwd, Polarity.ON) - per_pixel_counts(rev, Polarity.OFF)).max() <= 1


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_event_count_monotone_in_threshold(seed):
    img = smooth_image(seed)
    counts = [len(synthesize_events(img, SaccadeConfig(contrast_threshold=th)))
              for th in (0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.8)]
    assert all(a >= b for a, b in zip(counts, counts[1:])), counts


def test_doubling_threshold_never_adds_events():
    img = smooth_image(5)
    for th in (0.05, 0.1, 0.2):
        lo = per_pixel_counts(synthesize_events(img, SaccadeConfig(contrast_threshold=th)), Polarity.ON)
        hi = per_pixel_counts(synthesize_events(img, SaccadeConfig(contrast_threshold=2 * th)), Polarity.ON)
        assert np.all(hi <= lo)


def test_zero_ppd_is_silent():
    assert len(synthesize_events(smooth_image(0), SaccadeConfig(pixels_per_degree=0.0))) == 0


def test_uint8_and_float_inputs_agree():
    img = np.round(smooth_image(3) * 255).astype(np.uint8)
    a = synthesize_events(img)
    b = synthesize_events(img.astype(np.float64) / 255.0)
    assert a == b


@pytest.mark.parametrize("bad", [np.zeros(5), np.zeros((0, 0)), np.full((4, 4), 2.0)])
def test_bad_images_rejected(bad):
    with pytest.raises(DataError):
        synthesize_events(bad)


@pytest.mark.parametrize("field", ["alpha", "phase_duration", "contrast_threshold", "dt"])
def test_bad_config_rejected(field):
    with pytest.raises(ConfigError) as info:
        SaccadeConfig(**{field: 0})
    assert info.value.field == f"saccade.{field}"


def test_pgm_round_trip(tmp_path):
    img = np.arange(12 * 7, dtype=np.uint8).reshape(7, 12)
    path = write_pgm(tmp_path / "a.pgm", img)
    assert path.read_bytes()[:2] == b"P5"
    np.testing.assert_array_equal(read_pgm(path), img)


def test_read_pgm_rejects_other_formats(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P2\n2 2\n255\n0 1 2 3\n")
    with pytest.raises(DataError):
        read_pgm(p)


def test_label_attached():
    assert synthesize_events(step_edge(), label=3).label == 3
