"""Narrowband/wideband recording classification from high-frequency energy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import AudioBuffer, stft_magnitude
from .errors import ParameterError

CTS = "CTS"
NCTS = "NCTS"

DEFAULT_THRESHOLD = 0.07
DEFAULT_HORIZON_S = 100.0
SPLIT_HZ = 4000.0


@dataclass(frozen=True)
class BandwidthClass:
    value: str
    peak_above_4k: float

    @property
    def is_cts(self) -> bool:
        return self.value == CTS


def classify_bandwidth(
    buf: AudioBuffer,
    threshold: float = DEFAULT_THRESHOLD,
    horizon_s: float = DEFAULT_HORIZON_S,
) -> BandwidthClass:
    """Classify a 16 kHz recording as CTS (telephone) or NCTS.

    Looks at the first `horizon_s` seconds and takes the maximum STFT
    magnitude over bins whose center frequency is strictly above 4 kHz.
    The recording is NCTS iff that peak exceeds `threshold`.
    """
    if buf.sample_rate != 16000:
        raise ParameterError(
            f"bandwidth classification needs 16 kHz input, got {buf.sample_rate}"
        )
    n = min(buf.samples.size, int(round(horizon_s * buf.sample_rate)))
    spec = stft_magnitude(AudioBuffer(buf.samples[:n], buf.sample_rate))
    freqs = np.arange(spec.magnitudes.shape[1]) * spec.bin_hz
    above = spec.magnitudes[:, freqs > SPLIT_HZ]
    peak = float(above.max()) if above.size else 0.0
    return BandwidthClass(NCTS if peak > threshold else CTS, peak)
