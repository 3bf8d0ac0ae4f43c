import os
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from neurogrid.megdata import (HEADER_SIZE, BadMagicError, Component, NyquistError, Recording,
                               RecordingFormatError, SyntheticSpec, TruncatedPayloadError,
                               ZeroSensorsError, load_csv, load_recording, payload_size,
                               store_recording, synthesize_recording, window)


def _rec(sensors=2, n=4, rate=500.0, seed=0):
    rng = np.random.default_rng(seed)
    return Recording(rate, rng.normal(size=(sensors, n)).astype(np.float32))


def test_round_trip(tmp_path):
    r = _rec(3, 50)
    store_recording(r, tmp_path / "r.megr")
    back = load_recording(tmp_path / "r.megr")
    assert back == r
    assert back.sensor_count == 3 and back.duration_samples == 50


def test_payload_layout(tmp_path):
    r = _rec(2, 4)
    path = tmp_path / "r.megr"
    store_recording(r, path)
    data = path.read_bytes()
    assert HEADER_SIZE == 26
    assert len(data) - HEADER_SIZE == 2 * 4 * 4
    magic, version, sensors, duration, rate = struct.unpack_from("<4sHIQd", data)
    assert (magic, version, sensors, duration, rate) == (b"MEGR", 1, 2, 4, 500.0)
    # sensor-major: first four floats are sensor 0
    first = np.frombuffer(data[HEADER_SIZE:HEADER_SIZE + 16], dtype="<f4")
    assert np.array_equal(first, r.samples[0])


def test_store_load_store_is_byte_identical(tmp_path):
    store_recording(_rec(4, 33), tmp_path / "a.megr")
    store_recording(load_recording(tmp_path / "a.megr"), tmp_path / "b.megr")
    assert (tmp_path / "a.megr").read_bytes() == (tmp_path / "b.megr").read_bytes()


def test_hour_long_recording_size():
    # 64 sensors at 500 Hz for an hour, 4-byte samples
    size = payload_size(64, 500, 3600)
    assert size == 64 * 500 * 3600 * 4 == 460_800_000
    # the same geometry at 8 bytes lands near the 0.9 GB per hour figure
    assert abs(payload_size(64, 500, 3600, 8) / 1e9 - 0.9) < 0.05


def test_parse_errors(tmp_path):
    bad = tmp_path / "bad"
    bad.write_bytes(b"NOPE" + bytes(30))
    with pytest.raises(BadMagicError):
        load_recording(bad)

    zero = tmp_path / "zero"
    zero.write_bytes(struct.pack("<4sHIQd", b"MEGR", 1, 0, 10, 500.0))
    with pytest.raises(ZeroSensorsError, match="zero sensors"):
        load_recording(zero)

    store_recording(_rec(2, 8), tmp_path / "ok")
    (tmp_path / "short").write_bytes((tmp_path / "ok").read_bytes()[:-3])
    with pytest.raises(TruncatedPayloadError):
        load_recording(tmp_path / "short")
    assert issubclass(TruncatedPayloadError, RecordingFormatError)


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_unwritable_path(tmp_path):
    d = tmp_path / "ro"
    d.mkdir()
    d.chmod(0o500)
    with pytest.raises(OSError):
        store_recording(_rec(), d / "x.megr")


def test_missing_directory_is_io_error(tmp_path):
    with pytest.raises(OSError):
        store_recording(_rec(), tmp_path / "nope" / "x.megr")


def test_recording_invariants():
    with pytest.raises(ValueError):
        Recording(500.0, np.zeros((1, 10)))
    with pytest.raises(ValueError):
        Recording(0.0, np.zeros((2, 10)))


def test_csv_fixture(tmp_path):
    p = tmp_path / "fix.csv"
    p.write_text("sample_rate=250\n1,2\n3,4\n5,6\n")
    r = load_csv(p)
    assert r.sample_rate_hz == 250
    assert r.samples.tolist() == [[1, 3, 5], [2, 4, 6]]


def test_synthesis_identical_sensors_without_noise_or_delay():
    spec = SyntheticSpec(4, 500, (Component(10.0, 50.0, (0, 0, 0, 0)),))
    r = synthesize_recording(spec)
    for s in range(1, 4):
        assert np.array_equal(r.samples[s], r.samples[0])


def test_synthesis_formula():
    spec = SyntheticSpec(2, 100, (Component(10.0, 2.0, (0, 25)),), noise_amplitude=0.0)
    r = synthesize_recording(spec)
    t = np.arange(100)
    np.testing.assert_allclose(r.samples[1], 2 * np.sin(2 * np.pi * 10 * (t - 25) / 500),
                               atol=1e-6)
    # sensor 1 lags sensor 0 by 25 samples = 50 ms
    np.testing.assert_allclose(r.samples[1][25:], r.samples[0][:75], atol=1e-5)


def test_synthesis_deterministic_and_seeded():
    spec = SyntheticSpec(3, 256, (Component(7.0, 1.0, (0, 1, 2)),), noise_amplitude=0.5, seed=9)
    assert synthesize_recording(spec) == synthesize_recording(spec)
    other = SyntheticSpec(3, 256, spec.components, noise_amplitude=0.5, seed=10)
    assert synthesize_recording(other) != synthesize_recording(spec)
    noise_only = synthesize_recording(SyntheticSpec(2, 1000, (), noise_amplitude=1.0, seed=1))
    assert noise_only.samples.min() >= -1 and noise_only.samples.max() <= 1


def test_nyquist_violation():
    with pytest.raises(NyquistError):
        synthesize_recording(SyntheticSpec(2, 10, (Component(250.0, 1.0, (0, 0)),)))


def test_window_slices():
    r = _rec(2, 20)
    assert np.array_equal(window(r, 1, 0, 20).values, r.samples[1])
    last = window(r, 0, 15, 5)
    assert np.array_equal(last.values, r.samples[0, 15:])
    with pytest.raises(IndexError):
        window(r, 0, 16, 5)
    a, b = window(r, 0, 3, 6), window(r, 0, 4, 6)
    assert np.array_equal(a.values[1:], b.values[:-1])


@settings(max_examples=40, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(2, 5), st.integers(1, 40)),
              elements=st.floats(-1e6, 1e6, width=32)),
       st.floats(1.0, 1e4))
def test_round_trip_property(tmp_path_factory, samples, rate):
    path = tmp_path_factory.mktemp("rt") / "r.megr"
    r = Recording(rate, samples)
    store_recording(r, path)
    assert load_recording(path) == r


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(1, 6))
def test_window_composition(length, pieces):
    r = _rec(2, length * pieces, seed=length)
    parts = [window(r, 0, i * length, length).values for i in range(pieces)]
    assert np.array_equal(np.concatenate(parts), r.samples[0])
