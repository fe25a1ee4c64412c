import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from erbp.errors import BoundsError, ConfigError, IntegrityError, ParseError
from erbp.events import (
    EVENT_DTYPE,
    AddressEvent,
    EventFormat,
    EventStream,
    Polarity,
    StreamGeometry,
    downsample,
    encode_events,
    load_dataset,
    read_events,
    read_manifest,
    stream_indices,
    to_input_indices,
    write_events,
    write_manifest,
)


@st.composite
def streams(draw, max_events=60):
    w = draw(st.sampled_from([4, 8, 16, 32]))
    h = draw(st.sampled_from([4, 8, 16]))
    n = draw(st.integers(0, max_events))
    gaps = draw(st.lists(st.integers(0, 5000), min_size=n, max_size=n))
    xs = draw(st.lists(st.integers(0, w - 1), min_size=n, max_size=n))
    ys = draw(st.lists(st.integers(0, h - 1), min_size=n, max_size=n))
    ps = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    return EventStream.from_arrays(w, h, np.cumsum(gaps, dtype=np.int64), xs, ys, ps)


def test_text_line_maps_fields(tmp_path):
    f = tmp_path / "a.txt"
    f.write_text("128 128\n1000 5 9 1\n")
    s = read_events(f)
    assert (s.width, s.height) == (128, 128)
    assert list(s) == [AddressEvent(1000, 5, 9, Polarity.ON)]


def test_empty_body(tmp_path):
    f = tmp_path / "a.txt"
    f.write_text("32 32\n")
    s = read_events(f, EventFormat.TEXT)
    assert len(s) == 0 and s.geometry == StreamGeometry(32, 32)


def test_binary_round_trip_is_byte_identical(tmp_path):
    s = EventStream(128, 128, [(10, 1, 2, 1), (10, 3, 4, 0), (99, 127, 127, 1)])
    first = write_events(s, tmp_path / "a.evs")
    raw = first.read_bytes()
    assert len(raw) == 16 + 3 * 13
    assert raw[:4] == b"EVS1"
    again = write_events(read_events(first), tmp_path / "b.evs")
    assert again.read_bytes() == raw


def test_binary_layout_is_little_endian_packed():
    s = EventStream(0x0B0C, 2, [(0x0102030405060708, 0x0A0B, 1, 1)])
    raw = encode_events(s, "BIN")
    assert raw[4:6] == bytes([0x0C, 0x0B])
    assert raw[8:16] == (1).to_bytes(8, "little")
    assert raw[16:24] == (0x0102030405060708).to_bytes(8, "little")
    assert raw[24:26] == bytes([0x0B, 0x0A])
    assert raw[28] == 1


@pytest.mark.parametrize(
    "body, offset",
    [("1000 5 9\n", 2), ("1000 5 x 1\n", 2), ("1 1 1 1\n5 1 1 2\n", 3), ("1 1 1 -1\n", 2)],
)
def test_text_parse_errors_report_line(tmp_path, body, offset):
    f = tmp_path / "bad.txt"
    f.write_text("8 8\n" + body)
    with pytest.raises(ParseError) as info:
        read_events(f)
    assert info.value.offset == offset


def test_text_decreasing_timestamps(tmp_path):
    f = tmp_path / "bad.txt"
    f.write_text("8 8\n10 1 1 1\n9 1 1 1\n")
    with pytest.raises(IntegrityError):
        read_events(f)


def test_binary_truncated_reports_byte_offset(tmp_path):
    s = EventStream(8, 8, [(1, 1, 1, 1), (2, 2, 2, 0)])
    raw = encode_events(s, "BIN")
    f = tmp_path / "t.evs"
    f.write_bytes(raw[:-4])
    with pytest.raises(ParseError) as info:
        read_events(f)
    assert info.value.offset == len(raw) - 4


def test_binary_bad_magic(tmp_path):
    f = tmp_path / "t.evs"
    f.write_bytes(b"NOPE" + bytes(12))
    with pytest.raises(ParseError):
        read_events(f)


def test_binary_decreasing_timestamps(tmp_path):
    arr = np.zeros(2, dtype=EVENT_DTYPE)
    arr["t"] = [5, 4]
    f = tmp_path / "t.evs"
    f.write_bytes(b"EVS1" + (8).to_bytes(2, "little") * 2 + (2).to_bytes(8, "little") + arr.tobytes())
    with pytest.raises(IntegrityError):
        read_events(f)


def test_out_of_geometry_event_rejected():
    with pytest.raises(BoundsError):
        EventStream(4, 4, [(0, 4, 0, 1)])


@settings(max_examples=50, deadline=None)
@given(streams())
def test_round_trip_both_formats(tmp_path_factory, s):
    d = tmp_path_factory.mktemp("rt")
    for name in ("s.txt", "s.evs"):
        assert read_events(write_events(s, d / name)) == s


def test_downsample_sensor_geometry():
    s = EventStream(128, 128, [(0, 5, 9, 1), (3, 127, 127, 0)])
    d = downsample(s, 4)
    assert (d.width, d.height) == (32, 32)
    assert [(e.x, e.y) for e in d] == [(1, 2), (31, 31)]


def test_downsample_identity_and_misfit():
    s = EventStream(10, 10, [(0, 9, 9, 1)])
    assert downsample(s, 1) == s
    with pytest.raises(ConfigError):
        downsample(s, 4)


@settings(max_examples=100, deadline=None)
@given(streams(), st.sampled_from([1, 2, 4]))
def test_downsample_preserves_count_and_order(s, pool):
    d = downsample(s, pool)
    assert len(d) == len(s)
    np.testing.assert_array_equal(d.events["t"], s.events["t"])
    np.testing.assert_array_equal(d.events["p"], s.events["p"])
    np.testing.assert_array_equal(d.events["x"], s.events["x"] // pool)


def test_input_index_bijection_32x32():
    g = StreamGeometry(32, 32)
    seen = {}
    for x, y, p in itertools.product(range(32), range(32), Polarity):
        seen[(x, y, p)] = to_input_indices(AddressEvent(0, x, y, p), g)
    assert sorted(seen.values()) == list(range(2048))
    # frozen from the enumeration above
    assert seen[(0, 0, Polarity.ON)] == 0
    assert seen[(0, 0, Polarity.OFF)] == 1024
    assert seen[(31, 31, Polarity.OFF)] == 2047
    assert max(v for k, v in seen.items() if k[2] == Polarity.ON) == 1023


def test_input_index_bounds():
    with pytest.raises(BoundsError):
        to_input_indices(AddressEvent(0, 32, 0, Polarity.ON), StreamGeometry(32, 32))


@settings(max_examples=50, deadline=None)
@given(streams())
def test_vectorised_indices_match_scalar(s):
    g = s.geometry
    assert stream_indices(s).tolist() == [to_input_indices(e, g) for e in s]


def test_manifest_round_trip(tmp_path):
    s = EventStream(4, 4, [(0, 1, 1, 1)])
    write_events(s, tmp_path / "a.evs")
    write_events(s, tmp_path / "b.txt")
    write_manifest(tmp_path, [("a.evs", 2), ("b.txt", 0)])
    assert [(p.name, l) for p, l in read_manifest(tmp_path)] == [("a.evs", 2), ("b.txt", 0)]
    ds = load_dataset(tmp_path / "manifest.tsv")
    assert [d.label for d in ds] == [2, 0]


def test_manifest_bad_label(tmp_path):
    (tmp_path / "manifest.tsv").write_text("a.evs\tcat\n")
    with pytest.raises(ParseError):
        read_manifest(tmp_path)
