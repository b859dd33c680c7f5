"""Audio ingestion, resampling, STFT, and log-Mel feature extraction.

Conventions fixed here and relied on everywhere else:
  - 25 ms frames, 10 ms hop, Hann window, nfft=512
  - STFT magnitudes are normalized by the window coefficient sum, so a
    full-scale bin-centered sine peaks near 0.5 and DC at 1.0
  - Mel filters use the 2595*log10(1 + f/700) scale over 0..Nyquist
  - log-Mel uses natural log with a 1e-10 power floor
"""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyInputError,
    FormatError,
    ParameterError,
    UnsupportedFormatError,
)

FRAME_LEN_S = 0.025
FRAME_SHIFT_S = 0.010
NFFT = 512
LOG_FLOOR = 1e-10

# Anti-alias filter for 16k -> 8k decimation: windowed sinc, 3.8 kHz cutoff.
# The 101-tap Hamming window gives ~53 dB stopband attenuation.
DECIMATION_CUTOFF_HZ = 3800.0
DECIMATION_TAPS = 101

SUPPORTED_RATES = (8000, 16000)


@dataclass
class AudioBuffer:
    """Mono audio samples in [-1, 1] at a known sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ParameterError("AudioBuffer requires a 1-D sample array")
        if self.sample_rate <= 0:
            raise ParameterError(f"invalid sample rate {self.sample_rate}")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise ParameterError("samples must be finite")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate

    def slice_seconds(self, start_s: float, end_s: float) -> "AudioBuffer":
        lo = max(0, int(round(start_s * self.sample_rate)))
        hi = min(self.samples.size, int(round(end_s * self.sample_rate)))
        return AudioBuffer(self.samples[lo:hi].copy(), self.sample_rate)


@dataclass
class Spectrogram:
    """Window-sum-normalized STFT magnitudes, frames x (nfft/2 + 1)."""

    magnitudes: np.ndarray
    bin_hz: float


@dataclass
class FeatureMatrix:
    """Log-Mel energies, frames x bins, on the 25 ms / 10 ms grid."""

    data: np.ndarray
    frame_shift_s: float = FRAME_SHIFT_S
    frame_len_s: float = FRAME_LEN_S

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def bins(self) -> int:
        return self.data.shape[1]


def read_wav(path) -> AudioBuffer:
    """Read a RIFF/WAVE PCM-16 mono file at 8 or 16 kHz."""
    try:
        with wave.open(str(path), "rb") as wf:
            channels = wf.getnchannels()
            sampwidth = wf.getsampwidth()
            rate = wf.getframerate()
            comptype = wf.getcomptype()
            n = wf.getnframes()
            raw = wf.readframes(n)
    except wave.Error as exc:
        raise FormatError(f"{path}: {exc}") from exc
    except EOFError as exc:
        raise FormatError(f"{path}: truncated file") from exc
    if comptype != "NONE":
        raise UnsupportedFormatError(f"{path}: compressed WAV ({comptype}) not supported")
    if channels != 1:
        raise UnsupportedFormatError(f"{path}: {channels} channels, expected mono")
    if sampwidth != 2:
        raise UnsupportedFormatError(f"{path}: {8 * sampwidth}-bit PCM, expected 16-bit")
    if rate not in SUPPORTED_RATES:
        raise UnsupportedFormatError(f"{path}: sample rate {rate}, expected 8000 or 16000")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioBuffer(samples, rate)


def write_wav(path, buf: AudioBuffer) -> None:
    """Write an AudioBuffer as PCM-16 mono."""
    pcm = np.clip(np.round(buf.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(buf.sample_rate)
        wf.writeframes(pcm.tobytes())


def _decimation_filter(taps: int = DECIMATION_TAPS) -> np.ndarray:
    n = np.arange(taps) - (taps - 1) / 2
    fc = DECIMATION_CUTOFF_HZ / 16000.0
    h = 2 * fc * np.sinc(2 * fc * n) * np.hamming(taps)
    return h / h.sum()


def resample_to_8k(buf: AudioBuffer) -> AudioBuffer:
    """Decimate 16 kHz audio by 2 after an anti-alias low-pass."""
    if buf.sample_rate != 16000:
        raise ParameterError(f"expected 16 kHz input, got {buf.sample_rate}")
    if buf.samples.size == 0:
        return AudioBuffer(np.zeros(0), 8000)
    h = _decimation_filter()
    filtered = np.convolve(buf.samples, h, mode="full")
    delay = (len(h) - 1) // 2
    filtered = filtered[delay : delay + buf.samples.size]
    return AudioBuffer(filtered[::2], 8000)


def _frame_signal(samples: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    if samples.size < frame_len:
        raise EmptyInputError(
            f"buffer of {samples.size} samples shorter than one frame ({frame_len})"
        )
    n_frames = (samples.size - frame_len) // hop + 1
    view = np.lib.stride_tricks.sliding_window_view(samples, frame_len)
    return view[:: hop][:n_frames]


def stft_magnitude(
    buf: AudioBuffer,
    frame_len_s: float = FRAME_LEN_S,
    hop_s: float = FRAME_SHIFT_S,
    nfft: int = NFFT,
) -> Spectrogram:
    """Hann-windowed magnitude STFT normalized by the window sum."""
    frame_len = int(round(frame_len_s * buf.sample_rate))
    hop = int(round(hop_s * buf.sample_rate))
    if frame_len > nfft:
        raise ParameterError(f"frame length {frame_len} exceeds nfft {nfft}")
    frames = _frame_signal(buf.samples, frame_len, hop)
    window = np.hanning(frame_len)
    mags = np.abs(np.fft.rfft(frames * window, n=nfft, axis=1)) / window.sum()
    return Spectrogram(mags, bin_hz=buf.sample_rate / nfft)


def mel_filterbank(n_mels: int, nfft: int, sample_rate: int) -> np.ndarray:
    """Triangular Mel filters (2595*log10(1+f/700) scale) spanning 0..Nyquist."""

    def hz_to_mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def mel_to_hz(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    mel_pts = np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate / 2.0), n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    bin_freqs = np.arange(nfft // 2 + 1) * sample_rate / nfft
    fb = np.zeros((n_mels, nfft // 2 + 1))
    for i in range(n_mels):
        lo, mid, hi = hz_pts[i], hz_pts[i + 1], hz_pts[i + 2]
        rising = (bin_freqs - lo) / (mid - lo)
        falling = (hi - bin_freqs) / (hi - mid)
        fb[i] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


def log_mel(buf: AudioBuffer, n_mels: int) -> FeatureMatrix:
    """Log-Mel filterbank energies with 25 ms frames and 10 ms hop."""
    if n_mels < 1 or n_mels > NFFT // 2:
        raise ParameterError(f"n_mels {n_mels} outside 1..{NFFT // 2}")
    spec = stft_magnitude(buf)
    power = spec.magnitudes**2
    fb = mel_filterbank(n_mels, NFFT, buf.sample_rate)
    energies = power @ fb.T
    return FeatureMatrix(np.log(np.maximum(energies, LOG_FLOOR)))


def mean_normalize(f: FeatureMatrix) -> FeatureMatrix:
    """Subtract the per-bin mean over frames."""
    if f.n_frames < 1:
        raise EmptyInputError("feature matrix has no frames")
    return FeatureMatrix(f.data - f.data.mean(axis=0), f.frame_shift_s, f.frame_len_s)


def frame_count(n_samples: int, sample_rate: int) -> int:
    """Number of 25 ms / 10 ms frames for a buffer of n_samples."""
    frame_len = int(round(FRAME_LEN_S * sample_rate))
    hop = int(round(FRAME_SHIFT_S * sample_rate))
    if n_samples < frame_len:
        return 0
    return (n_samples - frame_len) // hop + 1
