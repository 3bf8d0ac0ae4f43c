"""Multichannel MEG recordings: data model, MEGR file format and test-signal synthesis.

The MEGR binary layout is little-endian::

    magic        4 bytes  b"MEGR"
    version      u16      (= 1)
    sensor_count u32
    duration     u64      samples per sensor
    sample_rate  f64      Hz
    payload      f32 * sensor_count * duration, sensor-major

which gives a fixed 26-byte header.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

MAGIC = b"MEGR"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIQd")
HEADER_SIZE = _HEADER.size
SAMPLE_DTYPE = np.dtype("<f4")
DEFAULT_SAMPLE_RATE = 500.0


class RecordingFormatError(ValueError):
    """Base class for MEGR parse failures."""


class BadMagicError(RecordingFormatError):
    pass


class TruncatedPayloadError(RecordingFormatError):
    pass


class ZeroSensorsError(RecordingFormatError):
    pass


class UnsupportedVersionError(RecordingFormatError):
    pass


class NyquistError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Recording:
    """Sensor-major sample matrix (femtotesla) plus its sampling rate."""

    sample_rate_hz: float
    samples: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.samples, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError("samples must be a (sensors, duration) matrix")
        if arr.shape[0] < 2:
            raise ValueError("a recording needs at least two sensors")
        if arr.shape[1] < 1:
            raise ValueError("a recording needs at least one sample")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    @property
    def sensor_count(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def payload_bytes(self) -> int:
        return self.samples.size * SAMPLE_DTYPE.itemsize

    def __eq__(self, other):
        if not isinstance(other, Recording):
            return NotImplemented
        return (
            self.sample_rate_hz == other.sample_rate_hz
            and self.samples.shape == other.samples.shape
            and self.samples.tobytes() == other.samples.tobytes()
        )

    __hash__ = None


@dataclass(frozen=True)
class Component:
    frequency_hz: float
    amplitude: float
    delays: tuple[float, ...]  # per sensor, in samples


@dataclass(frozen=True)
class SyntheticSpec:
    sensor_count: int
    duration_samples: int
    components: tuple[Component, ...] = ()
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE
    noise_amplitude: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class Window:
    sensor_index: int
    offset_samples: int
    values: np.ndarray = field(repr=False)

    @property
    def length_samples(self) -> int:
        return len(self.values)


def payload_size(sensor_count: int, sample_rate_hz: float, seconds: float,
                 sample_width: int = SAMPLE_DTYPE.itemsize) -> int:
    """Bytes of raw samples for a recording of the given geometry."""
    return int(round(sensor_count * sample_rate_hz * seconds)) * sample_width


def store_recording(recording: Recording, path) -> None:
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, recording.sensor_count,
                          recording.duration_samples, recording.sample_rate_hz)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(recording.samples.astype(SAMPLE_DTYPE, copy=False).tobytes())


def load_recording(path) -> Recording:
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic, not a MEGR file")
    if len(data) < HEADER_SIZE:
        raise TruncatedPayloadError(f"{path}: truncated header")
    _, version, sensors, duration, rate = _HEADER.unpack_from(data)
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported MEGR version {version}")
    if sensors == 0:
        raise ZeroSensorsError(f"{path}: zero sensors")
    expected = sensors * duration * SAMPLE_DTYPE.itemsize
    payload = data[HEADER_SIZE:]
    if len(payload) != expected:
        raise TruncatedPayloadError(
            f"{path}: truncated payload ({len(payload)} of {expected} bytes)")
    samples = np.frombuffer(payload, dtype=SAMPLE_DTYPE).reshape(sensors, duration)
    return Recording(sample_rate_hz=rate, samples=samples)


def load_csv(path) -> Recording:
    """Read the hand-made fixture format: ``sample_rate=<hz>`` then one column per sensor."""
    with open(path) as fh:
        first = fh.readline().strip()
        key, _, value = first.partition("=")
        if key.strip() != "sample_rate":
            raise RecordingFormatError(f"{path}: expected 'sample_rate=<hz>' header")
        table = np.loadtxt(fh, delimiter=",", ndmin=2)
    return Recording(sample_rate_hz=float(value), samples=table.T)


def load_any(path) -> Recording:
    if str(path).endswith(".csv"):
        return load_csv(path)
    return load_recording(path)


def _noise(seed: int, sensor: int, n: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, sensor]))
    return rng.uniform(-1.0, 1.0, size=n)


def synthesize_recording(spec: SyntheticSpec) -> Recording:
    nyquist = spec.sample_rate_hz / 2
    for comp in spec.components:
        if comp.frequency_hz >= nyquist:
            raise NyquistError(
                f"component at {comp.frequency_hz} Hz is not below Nyquist ({nyquist} Hz)")
        if len(comp.delays) != spec.sensor_count:
            raise ValueError("each component needs one delay per sensor")
        if min(comp.delays) < 0:
            raise ValueError("delays must be non-negative")

    t = np.arange(spec.duration_samples, dtype=np.float64)
    out = np.zeros((spec.sensor_count, spec.duration_samples))
    for s in range(spec.sensor_count):
        for comp in spec.components:
            phase = 2 * np.pi * comp.frequency_hz * (t - comp.delays[s]) / spec.sample_rate_hz
            out[s] += comp.amplitude * np.sin(phase)
        if spec.noise_amplitude:
            out[s] += spec.noise_amplitude * _noise(spec.seed, s, spec.duration_samples)
    return Recording(sample_rate_hz=spec.sample_rate_hz, samples=out)


def delayed_tones(frequencies: Sequence[float], delays: Sequence[float], duration_samples: int,
                  sample_rate_hz: float = DEFAULT_SAMPLE_RATE, amplitude: float = 100.0,
                  noise_amplitude: float = 0.0, seed: int = 0) -> Recording:
    """Shorthand for a recording where every tone shares the same per-sensor delays."""
    comps = tuple(Component(f, amplitude, tuple(delays)) for f in frequencies)
    return synthesize_recording(SyntheticSpec(
        sensor_count=len(delays), duration_samples=duration_samples, components=comps,
        sample_rate_hz=sample_rate_hz, noise_amplitude=noise_amplitude, seed=seed))


def window(recording: Recording, sensor: int, offset: int, length: int) -> Window:
    if not 0 <= sensor < recording.sensor_count:
        raise IndexError(f"sensor {sensor} out of range")
    if offset < 0 or length < 1 or offset + length > recording.duration_samples:
        raise IndexError(
            f"window [{offset}, {offset + length}) outside 0..{recording.duration_samples}")
    return Window(sensor, offset, recording.samples[sensor, offset:offset + length])
