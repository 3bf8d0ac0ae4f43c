"""Morlet wavelet transform and per-scale wavelet cross-correlation.

Phase one turns a sensor window into complex coefficients on a geometric
scale grid; phase two correlates two such transforms scale by scale over a
range of lags.  Results are written as ASC text matrices and P6 heatmaps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .megdata import Recording, Window, window

DEFAULT_OMEGA0 = 6.0
DEFAULT_WINDOW_LEN = 256


@dataclass(frozen=True)
class WaveletConfig:
    s0: float
    octaves: int = 6
    voices_per_octave: int = 4
    omega0: float = DEFAULT_OMEGA0
    lag_max: int = DEFAULT_WINDOW_LEN // 4

    def __post_init__(self):
        if self.s0 < 1:
            raise ValueError("s0 must be at least one sample")
        if self.octaves < 1 or self.voices_per_octave < 1:
            raise ValueError("need at least one scale")
        if self.lag_max < 0:
            raise ValueError("lag_max must be non-negative")

    @classmethod
    def default(cls, sample_rate_hz: float, window_len: int = DEFAULT_WINDOW_LEN,
                top_frequency_hz: float = 60.0, **kw) -> "WaveletConfig":
        """Scale grid whose smallest scale is centred on ``top_frequency_hz``."""
        omega0 = kw.pop("omega0", DEFAULT_OMEGA0)
        s0 = sample_rate_hz * omega0 / (2 * math.pi * top_frequency_hz)
        kw.setdefault("lag_max", window_len // 4)
        return cls(s0=s0, omega0=omega0, **kw)

    @property
    def scale_count(self) -> int:
        return self.octaves * self.voices_per_octave

    def scales(self) -> np.ndarray:
        k = np.arange(self.scale_count)
        return self.s0 * 2.0 ** (k / self.voices_per_octave)

    def center_frequencies(self, sample_rate_hz: float) -> np.ndarray:
        return self.omega0 * sample_rate_hz / (2 * math.pi * self.scales())


@dataclass(frozen=True, eq=False)
class WaveletCoefficients:
    scales: np.ndarray
    coefficients: np.ndarray  # (K, N) complex, scale-major

    @property
    def length(self) -> int:
        return self.coefficients.shape[1]


@dataclass(frozen=True, eq=False)
class CorrelationMap:
    scales: np.ndarray
    lags: np.ndarray
    magnitudes: np.ndarray  # (K, 2*lag_max + 1)
    zero_energy: np.ndarray  # (K,) bool; rows forced to 0

    def peak_lag(self, scale_index: int) -> int:
        return int(self.lags[np.argmax(self.magnitudes[scale_index])])


def morlet(u: np.ndarray, omega0: float = DEFAULT_OMEGA0) -> np.ndarray:
    return math.pi ** -0.25 * np.exp(1j * omega0 * u) * np.exp(-0.5 * u * u)


def _kernel(scale: float, n: int, omega0: float) -> np.ndarray:
    # conj(psi(d / s)) / sqrt(s) for d = -(n-1) .. n-1
    d = np.arange(-(n - 1), n, dtype=np.float64)
    return np.conj(morlet(d / scale, omega0)) / math.sqrt(scale)


def _as_array(x) -> np.ndarray:
    if isinstance(x, Window):
        x = x.values
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError("cwt needs a one-dimensional window of at least 2 samples")
    return arr


def cwt(x, cfg: WaveletConfig) -> WaveletCoefficients:
    """W[k, tau] = sum_t x[t] * conj(psi((t - tau) / s_k)) / sqrt(s_k), truncated to the window.

    Evaluated as an FFT cross-correlation against the full-support kernel, so no
    tail of the Gaussian is dropped.
    """
    x = _as_array(x)
    n = x.size
    scales = cfg.scales()
    out = np.empty((scales.size, n), dtype=np.complex128)
    for k, s in enumerate(scales):
        kern = _kernel(s, n, cfg.omega0)
        full = fftconvolve(x, kern[::-1], mode="full")
        out[k] = full[n - 1:2 * n - 1]
    return WaveletCoefficients(scales, out)


def cwt_direct(x, cfg: WaveletConfig) -> WaveletCoefficients:
    """Quadratic-time reference evaluation of the defining sum."""
    x = _as_array(x)
    n = x.size
    scales = cfg.scales()
    out = np.empty((scales.size, n), dtype=np.complex128)
    for k, s in enumerate(scales):
        kern = _kernel(s, n, cfg.omega0)
        # row tau holds kernel values for t - tau = -tau .. n-1-tau
        rows = np.lib.stride_tricks.sliding_window_view(kern, n)[::-1]
        out[k] = rows @ x
    return WaveletCoefficients(scales, out)


def wavelet_cross_correlation(wa: WaveletCoefficients, wb: WaveletCoefficients,
                              lag_max: int) -> CorrelationMap:
    """Normalised |sum_tau Wa(tau) conj(Wb(tau + lag))| per scale, overlap-only normalisation."""
    if wa.coefficients.shape != wb.coefficients.shape or not np.array_equal(wa.scales, wb.scales):
        raise ValueError("transforms must share scales and length")
    n = wa.length
    if not 0 <= lag_max < n:
        raise ValueError(f"lag_max must lie in [0, {n})")
    a, b = wa.coefficients, wb.coefficients
    ea, eb = np.abs(a) ** 2, np.abs(b) ** 2
    lags = np.arange(-lag_max, lag_max + 1)
    mags = np.zeros((a.shape[0], lags.size))
    zero = (ea.sum(axis=1) == 0) | (eb.sum(axis=1) == 0)
    for j, lag in enumerate(lags):
        if lag >= 0:
            sa, sb = slice(0, n - lag), slice(lag, n)
        else:
            sa, sb = slice(-lag, n), slice(0, n + lag)
        num = np.abs(np.sum(a[:, sa] * np.conj(b[:, sb]), axis=1))
        den = np.sqrt(ea[:, sa].sum(axis=1) * eb[:, sb].sum(axis=1))
        with np.errstate(invalid="ignore", divide="ignore"):
            mags[:, j] = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    mags[zero] = 0.0
    return CorrelationMap(wa.scales, lags, mags, zero)


def analyze_pair(recording: Recording, a: int, b: int, offset: int, window_len: int,
                 cfg: WaveletConfig) -> CorrelationMap:
    if a == b:
        raise ValueError(f"self pair: sensor {a} with itself")
    wa = cwt(window(recording, a, offset, window_len), cfg)
    wb = cwt(window(recording, b, offset, window_len), cfg)
    return wavelet_cross_correlation(wa, wb, cfg.lag_max)


def output_stem(a: int, b: int, offset: int) -> str:
    return f"pair_{a}_{b}_off_{offset}"


def emit_asc(cmap: CorrelationMap, path) -> None:
    lines = [" ".join(f"{v:.9g}" for v in row) for row in cmap.magnitudes]
    Path(path).write_text("\n".join(lines) + "\n")


def read_asc(path) -> np.ndarray:
    return np.loadtxt(path, ndmin=2)


def heatmap_rgb(values: np.ndarray) -> np.ndarray:
    """Linear blue (minimum) to red (maximum) ramp; a constant map is all blue."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    rgb = np.zeros(values.shape + (3,), dtype=np.uint8)
    if hi > lo:
        frac = (values - lo) / (hi - lo)
        rgb[..., 0] = np.rint(255 * frac).astype(np.uint8)
        rgb[..., 2] = np.rint(255 * (1 - frac)).astype(np.uint8)
    else:
        rgb[..., 2] = 255
    return rgb


def emit_ppm(cmap: CorrelationMap, path) -> None:
    rgb = heatmap_rgb(cmap.magnitudes)
    height, width = rgb.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6 {width} {height} 255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    head, _, body = data.partition(b"\n")
    magic, width, height, maxval = head.split()
    if magic != b"P6" or maxval != b"255":
        raise ValueError(f"{path}: not an 8-bit P6 image")
    return np.frombuffer(body, dtype=np.uint8).reshape(int(height), int(width), 3)
