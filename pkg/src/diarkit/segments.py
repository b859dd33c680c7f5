"""Timestamped segments, speaker-labeled diarizations, and frame/interval helpers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

FRAME_SHIFT_S = 0.010


@dataclass(frozen=True)
class Segment:
    """Half-open time interval [start_s, end_s) in seconds."""

    start_s: float
    end_s: float

    def __post_init__(self):
        if not (0.0 <= self.start_s < self.end_s):
            raise ParameterError(
                f"invalid segment [{self.start_s}, {self.end_s}]: need 0 <= start < end"
            )

    @property
    def duration(self) -> float:
        return self.end_s - self.start_s


@dataclass
class Diarization:
    """Speaker-attributed segments for one recording.

    Cross-speaker overlap is allowed; segments of the same speaker are kept
    disjoint by the operations that produce them.
    """

    recording_id: str
    turns: list[tuple[Segment, str]] = field(default_factory=list)

    def speakers(self) -> list[str]:
        seen: dict[str, None] = {}
        for _, spk in self.turns:
            seen.setdefault(spk, None)
        return list(seen)

    def per_speaker(self) -> dict[str, list[Segment]]:
        out: dict[str, list[Segment]] = {}
        for seg, spk in self.turns:
            out.setdefault(spk, []).append(seg)
        for spk in out:
            out[spk] = sorted(out[spk], key=lambda s: (s.start_s, s.end_s))
        return out

    def total_speaker_time(self) -> float:
        return sum(seg.duration for seg, _ in self.turns)

    def validate(self) -> None:
        """Check the same-speaker non-overlap invariant."""
        for spk, segs in self.per_speaker().items():
            for a, b in zip(segs, segs[1:]):
                if b.start_s < a.end_s - 1e-9:
                    raise ParameterError(
                        f"speaker {spk} has overlapping segments {a} and {b}"
                    )


def merge_segments(segs: list[Segment], gap_s: float = 0.0) -> list[Segment]:
    """Union overlapping (or near-touching, within gap_s) segments."""
    if not segs:
        return []
    ordered = sorted(segs, key=lambda s: (s.start_s, s.end_s))
    out = [ordered[0]]
    for seg in ordered[1:]:
        last = out[-1]
        if seg.start_s <= last.end_s + gap_s:
            if seg.end_s > last.end_s:
                out[-1] = Segment(last.start_s, seg.end_s)
        else:
            out.append(seg)
    return out


def total_duration(segs: list[Segment]) -> float:
    return sum(s.duration for s in merge_segments(segs))


def segments_to_mask(
    segs: list[Segment], n_frames: int, frame_shift_s: float = FRAME_SHIFT_S
) -> np.ndarray:
    """Boolean frame mask; frame i is on iff its start time lies in a segment."""
    mask = np.zeros(n_frames, dtype=bool)
    for seg in segs:
        lo = int(np.ceil(seg.start_s / frame_shift_s - 1e-9))
        hi = int(np.ceil(seg.end_s / frame_shift_s - 1e-9))
        lo = max(lo, 0)
        hi = min(hi, n_frames)
        if hi > lo:
            mask[lo:hi] = True
    return mask


def mask_to_segments(
    mask: np.ndarray, frame_shift_s: float = FRAME_SHIFT_S
) -> list[Segment]:
    """Convert a boolean frame mask into sorted disjoint segments."""
    mask = np.asarray(mask, dtype=bool)
    edges = np.flatnonzero(np.diff(np.concatenate([[0], mask.astype(np.int8), [0]])))
    return [
        Segment(lo * frame_shift_s, hi * frame_shift_s)
        for lo, hi in zip(edges[::2], edges[1::2])
    ]
