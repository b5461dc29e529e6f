"""Time-frequency analysis: framing, FFT / constant-Q / wavelet spectrograms,
spectral mean-variance normalization, and the fixed-shape unifiers
(truncation-with-repeat and sliding windows) used to feed fixed-size inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .audio_io import Waveform

POWER_FLOOR = 1e-10

SCALES = ("power", "log-power", "normalized", "magnitude", "log-magnitude")


@dataclass(frozen=True)
class Spectrogram:
    """Real-valued frequency x time matrix with per-bin center frequencies."""

    values: np.ndarray          # (freq_bins, time_frames)
    bin_frequencies: np.ndarray  # (freq_bins,) strictly increasing, Hz
    hop_seconds: float
    scale: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        freqs = np.asarray(self.bin_frequencies, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"values must be a non-empty 2-D matrix, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("spectrogram values must all be finite")
        if freqs.shape != (values.shape[0],):
            raise ValueError("bin_frequencies length must equal the number of rows")
        if np.any(np.diff(freqs) <= 0):
            raise ValueError("bin_frequencies must be strictly increasing")
        if self.hop_seconds <= 0:
            raise ValueError("hop_seconds must be positive")
        if self.scale not in SCALES:
            raise ValueError(f"unknown scale {self.scale!r}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "bin_frequencies", freqs)

    @property
    def n_bins(self) -> int:
        return self.values.shape[0]

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class UnifiedFeature:
    """Fixed-shape (freq x time) matrix for fixed-size model inputs."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("unified feature must be a 2-D matrix")
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class FramingConfig:
    window_seconds: float = 0.128
    hop_seconds: float = 0.016
    window: str = "hann"

    def __post_init__(self):
        if self.window_seconds <= 0 or self.hop_seconds <= 0:
            raise ValueError("window and hop durations must be positive")
        if self.window not in ("hann", "rectangular"):
            raise ValueError(f"unsupported window {self.window!r}")


@dataclass(frozen=True)
class FftConfig:
    framing: FramingConfig = field(default_factory=FramingConfig)
    n_fft: int = 2048
    floor: float = POWER_FLOOR
    # Optional linear row resampling, e.g. to the 864-row layout.
    target_bins: int | None = None

    def __post_init__(self):
        if self.n_fft < 2 or self.n_fft & (self.n_fft - 1):
            raise ValueError(f"n_fft must be a power of two >= 2, got {self.n_fft}")
        if self.floor <= 0:
            raise ValueError("power floor must be positive")
        if self.target_bins is not None and self.target_bins < 2:
            raise ValueError("target_bins must be >= 2")


@dataclass(frozen=True)
class CqtConfig:
    f_min: float = 15.625
    bins_per_octave: int = 96
    n_bins: int = 864
    hop_length: int = 256
    floor: float = POWER_FLOOR

    def __post_init__(self):
        if self.f_min <= 0:
            raise ValueError("f_min must be positive")
        if self.bins_per_octave < 1 or self.n_bins < 1 or self.hop_length < 1:
            raise ValueError("bins_per_octave, n_bins and hop_length must be >= 1")
        if self.floor <= 0:
            raise ValueError("power floor must be positive")

    @property
    def q_factor(self) -> float:
        return 1.0 / (2.0 ** (1.0 / self.bins_per_octave) - 1.0)

    def bin_frequencies(self) -> np.ndarray:
        k = np.arange(self.n_bins)
        return self.f_min * 2.0 ** (k / self.bins_per_octave)


def frame_signal(wave: Waveform, window_seconds: float, hop_seconds: float,
                 window: str = "hann") -> np.ndarray:
    """Slice a waveform into windowed frames, shape (n_frames, frame_len)."""
    frame_len = int(round(window_seconds * wave.sample_rate))
    hop_len = int(round(hop_seconds * wave.sample_rate))
    if frame_len < 2:
        raise ValueError("window must span at least 2 samples")
    if hop_len < 1:
        raise ValueError("hop must span at least 1 sample")
    x = wave.samples
    if x.size < frame_len:
        raise ValueError(
            f"utterance of {x.size} samples is shorter than one "
            f"{frame_len}-sample analysis window"
        )
    n_frames = (x.size - frame_len) // hop_len + 1
    frames = np.lib.stride_tricks.sliding_window_view(x, frame_len)[::hop_len]
    frames = np.array(frames[:n_frames], dtype=np.float64)
    if window == "hann":
        frames *= np.hanning(frame_len)
    elif window != "rectangular":
        raise ValueError(f"unsupported window {window!r}")
    return frames


def resample_rows_linear(values: np.ndarray, src_positions: np.ndarray,
                         n_out: int) -> tuple[np.ndarray, np.ndarray]:
    """Linearly interpolate matrix rows onto n_out uniformly spaced positions."""
    src = np.asarray(src_positions, dtype=np.float64)
    new = np.linspace(src[0], src[-1], n_out)
    idx = np.clip(np.searchsorted(src, new, side="right") - 1, 0, src.size - 2)
    w = (new - src[idx]) / (src[idx + 1] - src[idx])
    out = values[idx] * (1.0 - w)[:, None] + values[idx + 1] * w[:, None]
    return out, new


def fft_spectrogram(wave: Waveform, cfg: FftConfig, scale: str = "log-power") -> Spectrogram:
    """FFT spectrogram in the requested scale (magnitude, power or log-power)."""
    frames = frame_signal(wave, cfg.framing.window_seconds, cfg.framing.hop_seconds,
                          cfg.framing.window)
    if cfg.n_fft < frames.shape[1]:
        raise ValueError(
            f"n_fft ({cfg.n_fft}) must be >= frame length ({frames.shape[1]})"
        )
    spectrum = np.fft.rfft(frames, n=cfg.n_fft)
    freqs = np.arange(cfg.n_fft // 2 + 1) * wave.sample_rate / cfg.n_fft

    if scale == "magnitude":
        values = np.abs(spectrum)
    elif scale == "power":
        values = np.abs(spectrum) ** 2
    elif scale == "log-power":
        values = np.log(np.maximum(np.abs(spectrum) ** 2, cfg.floor))
    else:
        raise ValueError(f"unsupported fft scale {scale!r}")

    values = values.T
    if cfg.target_bins is not None:
        values, freqs = resample_rows_linear(values, freqs, cfg.target_bins)
    return Spectrogram(values, freqs, cfg.framing.hop_seconds, scale)


def fft_log_power_spectrogram(wave: Waveform, cfg: FftConfig) -> Spectrogram:
    """Log of floored FFT power: log(max(|X|^2, floor))."""
    return fft_spectrogram(wave, cfg, scale="log-power")


class _CqtKernels:
    """Per-bin windowed complex-exponential kernels plus cached FFTs."""

    def __init__(self, cfg: CqtConfig, sample_rate: int):
        freqs = cfg.bin_frequencies()
        nyquist = sample_rate / 2.0
        over = np.nonzero(freqs >= nyquist)[0]
        if over.size:
            k = int(over[0])
            raise ValueError(
                f"CQT bin {k} center frequency {freqs[k]:.2f} Hz reaches the "
                f"Nyquist frequency {nyquist:.2f} Hz"
            )
        self.cfg = cfg
        self.sample_rate = sample_rate
        self.frequencies = freqs
        q = cfg.q_factor
        self.kernels = []
        for f in freqs:
            n_k = max(int(np.ceil(q * sample_rate / f)), 2)
            window = np.hanning(n_k)
            phase = np.exp(2j * np.pi * f * np.arange(n_k) / sample_rate)
            self.kernels.append(window * phase * (2.0 / window.sum()))
        self.lengths = np.array([k.size for k in self.kernels])
        self._fft_cache: dict[int, dict[int, np.ndarray]] = {}

    def kernel_fft(self, k: int, size: int) -> np.ndarray:
        per_size = self._fft_cache.setdefault(size, {})
        if k not in per_size:
            per_size[k] = np.fft.fft(self.kernels[k], size)
        return per_size[k]


_KERNEL_CACHE: dict[tuple[CqtConfig, int], _CqtKernels] = {}


def _cqt_kernels(cfg: CqtConfig, sample_rate: int) -> _CqtKernels:
    key = (cfg, sample_rate)
    if key not in _KERNEL_CACHE:
        _KERNEL_CACHE[key] = _CqtKernels(cfg, sample_rate)
    return _KERNEL_CACHE[key]


def cqt_magnitude(wave: Waveform, cfg: CqtConfig) -> tuple[np.ndarray, np.ndarray]:
    """Constant-Q magnitudes, shape (n_bins, n_frames), and bin frequencies.

    Each bin is the linear correlation of the signal with that bin's kernel,
    evaluated at frame centers 0, hop, 2*hop, ... with zero padding beyond the
    signal edges.  Computed per bin via FFT convolution; the equivalent direct
    summation is the natural cross-check.
    """
    kernels = _cqt_kernels(cfg, wave.sample_rate)
    x = wave.samples
    n = x.size
    centers = np.arange((n - 1) // cfg.hop_length + 1) * cfg.hop_length

    mags = np.empty((cfg.n_bins, centers.size))
    signal_ffts: dict[int, np.ndarray] = {}
    for k in range(cfg.n_bins):
        n_k = int(kernels.lengths[k])
        size = 1 << int(np.ceil(np.log2(n + n_k)))
        if size not in signal_ffts:
            signal_ffts[size] = np.fft.fft(x, size)
        corr = np.fft.ifft(signal_ffts[size] * np.conj(kernels.kernel_fft(k, size)))
        idx = (centers - n_k // 2) % size
        mags[k] = np.abs(corr[idx])
    return mags, kernels.frequencies


def cqt_log_power_spectrogram(wave: Waveform, cfg: CqtConfig) -> Spectrogram:
    """Constant-Q spectrogram: log of floored squared kernel magnitudes."""
    mags, freqs = cqt_magnitude(wave, cfg)
    values = np.log(np.maximum(mags**2, cfg.floor))
    return Spectrogram(values, freqs, cfg.hop_length / wave.sample_rate, "log-power")


# 8-tap Daubechies (db4) scaling filter, natural order.
DB4_LOWPASS = np.array(
    [
        0.23037781330885523,
        0.7148465705525415,
        0.6308807679295904,
        -0.02798376941698385,
        -0.18703481171888114,
        0.030841381835986965,
        0.032883011666982945,
        -0.010597401784997278,
    ]
)
DB4_HIGHPASS = DB4_LOWPASS[::-1].copy()
DB4_HIGHPASS[1::2] *= -1.0


@dataclass(frozen=True)
class DwtConfig:
    frame_len: int = 256
    hop_length: int = 256
    levels: int = 4
    floor: float = POWER_FLOOR

    def __post_init__(self):
        if self.frame_len < 2 or self.hop_length < 1:
            raise ValueError("frame_len must be >= 2 and hop_length >= 1")
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.frame_len % (1 << self.levels):
            raise ValueError(
                f"frame_len {self.frame_len} must be divisible by 2^levels "
                f"({1 << self.levels})"
            )
        if self.floor <= 0:
            raise ValueError("power floor must be positive")


def _dwt_step(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = x.size
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(DB4_LOWPASS.size)[None, :]) % n
    windows = x[idx]
    return windows @ DB4_LOWPASS, windows @ DB4_HIGHPASS


def _idwt_step(approx: np.ndarray, detail: np.ndarray) -> np.ndarray:
    n = 2 * approx.size
    idx = (2 * np.arange(approx.size)[:, None] + np.arange(DB4_LOWPASS.size)[None, :]) % n
    x = np.zeros(n)
    np.add.at(x, idx, approx[:, None] * DB4_LOWPASS + detail[:, None] * DB4_HIGHPASS)
    return x


def dwt_decompose(x: np.ndarray, levels: int) -> list[np.ndarray]:
    """Periodized multi-level db4 analysis: [a_L, d_L, d_{L-1}, ..., d_1]."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < (1 << levels) or x.size % (1 << levels):
        raise ValueError(
            f"signal of {x.size} samples is too short (or not divisible) "
            f"for a depth-{levels} decomposition"
        )
    details = []
    approx = x
    for _ in range(levels):
        approx, detail = _dwt_step(approx)
        details.append(detail)
    return [approx] + details[::-1]


def dwt_reconstruct(coeffs: list[np.ndarray]) -> np.ndarray:
    """Inverse of dwt_decompose (the analysis is orthogonal, so exact)."""
    approx = coeffs[0]
    for detail in coeffs[1:]:
        approx = _idwt_step(approx, detail)
    return approx


def dwt_scalogram(wave: Waveform, cfg: DwtConfig) -> Spectrogram:
    """Per-frame db4 subband log-energies, one row per wavelet coefficient.

    Rows run low to high frequency: the depth-L approximation coefficients,
    then details d_L .. d_1.  Each row carries a nominal center frequency
    spaced linearly inside its subband so the frequency axis stays strictly
    increasing.
    """
    if wave.samples.size < (1 << cfg.levels):
        raise ValueError(
            f"signal of {wave.samples.size} samples is too short for a "
            f"depth-{cfg.levels} decomposition"
        )
    frames = frame_signal(
        wave,
        cfg.frame_len / wave.sample_rate,
        cfg.hop_length / wave.sample_rate,
        window="rectangular",
    )
    rows = []
    for frame in frames:
        coeffs = dwt_decompose(frame, cfg.levels)
        rows.append(np.concatenate(coeffs))
    values = np.log(np.maximum(np.stack(rows, axis=1) ** 2, cfg.floor))

    # Band edges 0, fs/2^(L+1), fs/2^L, ..., fs/2; one band per subband in
    # row order, with that band's coefficients spread linearly inside it.
    nyquist = wave.sample_rate / 2.0
    edges = [0.0] + [nyquist / (1 << level) for level in range(cfg.levels, -1, -1)]
    sizes = [cfg.frame_len >> cfg.levels] + [
        cfg.frame_len >> level for level in range(cfg.levels, 0, -1)
    ]
    freqs = np.concatenate(
        [
            lo + (np.arange(m) + 1) * (hi - lo) / m
            for lo, hi, m in zip(edges[:-1], edges[1:], sizes)
        ]
    )
    return Spectrogram(values, freqs, cfg.hop_length / wave.sample_rate, "log-power")


def mvn_spectrum(spec: Spectrogram, epsilon: float = 1e-12) -> Spectrogram:
    """Normalize each frequency row to zero mean / unit variance over time."""
    if spec.n_frames < 2:
        raise ValueError("mean-variance normalization needs at least 2 frames")
    mean = spec.values.mean(axis=1, keepdims=True)
    var = spec.values.var(axis=1, keepdims=True)
    values = (spec.values - mean) / np.sqrt(np.maximum(var, epsilon))
    values = np.where(var < epsilon, 0.0, values)  # degenerate rows go to zero
    return Spectrogram(values, spec.bin_frequencies, spec.hop_seconds, "normalized")


def _tile_columns(values: np.ndarray, target: int) -> np.ndarray:
    n = values.shape[1]
    if n >= target:
        return values[:, :target].copy()
    reps = -(-target // n)
    return np.tile(values, (1, reps))[:, :target]


def truncate_or_repeat(spec: Spectrogram, target_frames: int) -> UnifiedFeature:
    """Fix the time axis to target_frames: truncate, or cyclically repeat."""
    if target_frames < 1:
        raise ValueError("target_frames must be >= 1")
    return UnifiedFeature(_tile_columns(spec.values, target_frames))


def sliding_windows(spec: Spectrogram, window_frames: int,
                    overlap_fraction: float) -> list[UnifiedFeature]:
    """Fixed-size windows with the given overlap along the time axis.

    Hop is max(1, round(window * (1 - overlap))).  Windows start at
    0, hop, 2*hop, ...; if the last full step leaves a remainder, one extra
    window anchored at the end is emitted.  Inputs shorter than one window
    are repeat-extended first.
    """
    if window_frames < 1:
        raise ValueError("window_frames must be >= 1")
    if not 0.0 <= overlap_fraction < 1.0:
        raise ValueError("overlap_fraction must lie in [0, 1)")
    values = spec.values
    if values.shape[1] < window_frames:
        values = _tile_columns(values, window_frames)
    hop = max(1, round(window_frames * (1.0 - overlap_fraction)))
    last = values.shape[1] - window_frames
    starts = list(range(0, last + 1, hop))
    if starts[-1] != last:
        starts.append(last)
    return [UnifiedFeature(values[:, s : s + window_frames].copy()) for s in starts]
