"""RTTM/UEM parsing and emission, DER computation with optimal speaker
mapping, and frame-level VAD accuracy.

DER follows the standard per-frame accounting: with a one-to-one
hypothesis-to-reference speaker mapping chosen to maximize matched speaker
time, each frame contributes
    miss      = max(0, n_ref - n_hyp)
    false al. = max(0, n_hyp - n_ref)
    confusion = min(n_ref, n_hyp) - n_matched
and every component is normalized by total reference speaker time (overlap
counted multiply). Frames are 1 ms by default, which reproduces interval
arithmetic at the precision RTTM carries.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, InputError
from .segments import Diarization, Segment

MAX_MAPPED_SPEAKERS = 8
FRAME_S = 0.001


@dataclass(frozen=True)
class RttmTurn:
    file_id: str
    onset_s: float
    duration_s: float
    speaker: str

    def __post_init__(self):
        if self.duration_s <= 0 or self.onset_s < 0:
            raise FormatError(
                f"invalid turn: onset {self.onset_s}, duration {self.duration_s}"
            )


@dataclass
class DerReport:
    der: float
    miss: float
    false_alarm: float
    confusion: float
    total_ref_s: float
    mapping: dict[str, str] = field(default_factory=dict)


def parse_rttm(text: str) -> list[RttmTurn]:
    """Parse SPEAKER lines; other record types are ignored."""
    turns = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith(";;"):
            continue
        parts = line.split()
        if parts[0] != "SPEAKER":
            continue
        if len(parts) < 8:
            raise FormatError(f"line {lineno}: SPEAKER line has {len(parts)} fields, need >= 8")
        try:
            onset, dur = float(parts[3]), float(parts[4])
        except ValueError as exc:
            raise FormatError(f"line {lineno}: non-numeric onset/duration") from exc
        try:
            turns.append(RttmTurn(parts[1], onset, dur, parts[7]))
        except FormatError as exc:
            raise FormatError(f"line {lineno}: {exc}") from exc
    return turns


def emit_rttm(turns: list[RttmTurn]) -> str:
    lines = [
        f"SPEAKER {t.file_id} 1 {t.onset_s:.3f} {t.duration_s:.3f} "
        f"<NA> <NA> {t.speaker} <NA> <NA>"
        for t in turns
    ]
    return "".join(line + "\n" for line in lines)


def diarization_to_turns(diar: Diarization) -> list[RttmTurn]:
    return [
        RttmTurn(diar.recording_id, seg.start_s, seg.duration, spk)
        for seg, spk in diar.turns
    ]


def turns_to_diarization(turns: list[RttmTurn], file_id: str) -> Diarization:
    selected = [t for t in turns if t.file_id == file_id]
    return Diarization(
        file_id,
        [(Segment(t.onset_s, t.onset_s + t.duration_s), t.speaker) for t in selected],
    )


def rttm_file_ids(turns: list[RttmTurn]) -> list[str]:
    seen: dict[str, None] = {}
    for t in turns:
        seen.setdefault(t.file_id, None)
    return list(seen)


def parse_uem(text: str) -> dict[str, list[Segment]]:
    """Parse `<file-id> 1 <start> <end>` scored-region lines."""
    regions: dict[str, list[Segment]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith(";;"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise FormatError(f"line {lineno}: UEM line needs 4 fields, got {len(parts)}")
        try:
            start, end = float(parts[2]), float(parts[3])
        except ValueError as exc:
            raise FormatError(f"line {lineno}: non-numeric UEM times") from exc
        regions.setdefault(parts[0], []).append(Segment(start, end))
    return regions


def _frame_index(t: float, frame_s: float) -> int:
    return int(np.floor(t / frame_s + 0.5))


def _speaker_frames(
    diar: Diarization, n_frames: int, frame_s: float
) -> dict[str, np.ndarray]:
    masks: dict[str, np.ndarray] = {}
    for seg, spk in diar.turns:
        mask = masks.setdefault(spk, np.zeros(n_frames, dtype=bool))
        lo = _frame_index(seg.start_s, frame_s)
        hi = min(_frame_index(seg.end_s, frame_s), n_frames)
        if hi > lo:
            mask[lo:hi] = True
    return masks


def _best_mapping(overlap: np.ndarray) -> tuple[int, list[tuple[int, int]]]:
    """Exhaustive one-to-one assignment maximizing total overlap.

    Rows are reference speakers, columns hypothesis speakers; returns the
    matched frame count and the (ref, hyp) pairs of the best assignment.
    """
    n_ref, n_hyp = overlap.shape
    if n_ref == 0 or n_hyp == 0:
        return 0, []
    best_total, best_pairs = -1, []
    if n_hyp <= n_ref:
        for perm in itertools.permutations(range(n_ref), n_hyp):
            total = sum(overlap[r, h] for h, r in enumerate(perm))
            if total > best_total:
                best_total = total
                best_pairs = [(r, h) for h, r in enumerate(perm)]
    else:
        for perm in itertools.permutations(range(n_hyp), n_ref):
            total = sum(overlap[r, h] for r, h in enumerate(perm))
            if total > best_total:
                best_total = total
                best_pairs = [(r, h) for r, h in enumerate(perm)]
    return int(best_total), best_pairs


def compute_der(
    ref: Diarization,
    hyp: Diarization,
    collar_s: float = 0.0,
    score_overlap: bool = True,
    frame_s: float = FRAME_S,
    uem: list[Segment] | None = None,
) -> DerReport:
    """Diarization error rate of `hyp` against `ref` on a common frame grid."""
    if ref.recording_id != hyp.recording_id:
        raise InputError(
            f"recording mismatch: ref {ref.recording_id!r} vs hyp {hyp.recording_id!r}"
        )
    end = 0.0
    for seg, _ in list(ref.turns) + list(hyp.turns):
        end = max(end, seg.end_s)
    if uem:
        end = max(end, max(seg.end_s for seg in uem))
    n = _frame_index(end, frame_s)
    if n == 0:
        raise InputError("nothing to score: reference and hypothesis are empty")

    ref_masks = _speaker_frames(ref, n, frame_s)
    hyp_masks = _speaker_frames(hyp, n, frame_s)
    if len(ref_masks) > MAX_MAPPED_SPEAKERS or len(hyp_masks) > MAX_MAPPED_SPEAKERS:
        raise InputError(
            f"exhaustive mapping supports <= {MAX_MAPPED_SPEAKERS} speakers per side"
        )

    scored = np.ones(n, dtype=bool)
    if uem is not None:
        scored[:] = False
        for seg in uem:
            lo = _frame_index(seg.start_s, frame_s)
            hi = min(_frame_index(seg.end_s, frame_s), n)
            scored[lo:hi] = True
    if collar_s > 0.0:
        half = _frame_index(collar_s, frame_s)
        for seg, _ in ref.turns:
            for boundary in (seg.start_s, seg.end_s):
                center = _frame_index(boundary, frame_s)
                scored[max(0, center - half) : min(n, center + half)] = False

    ref_stack = (
        np.stack([m for m in ref_masks.values()]) if ref_masks else np.zeros((0, n), dtype=bool)
    )
    hyp_stack = (
        np.stack([m for m in hyp_masks.values()]) if hyp_masks else np.zeros((0, n), dtype=bool)
    )
    ref_stack = ref_stack & scored
    hyp_stack = hyp_stack & scored
    if not score_overlap:
        non_overlap = ref_stack.sum(axis=0) <= 1
        ref_stack = ref_stack & non_overlap
        hyp_stack = hyp_stack & non_overlap

    n_ref = ref_stack.sum(axis=0).astype(np.int64)
    n_hyp = hyp_stack.sum(axis=0).astype(np.int64)
    overlap = (ref_stack.astype(np.int64) @ hyp_stack.T.astype(np.int64))
    matched, pairs = _best_mapping(overlap)

    total_ref = int(n_ref.sum())
    if total_ref == 0:
        raise InputError("reference has no scored speaker time")
    miss = int(np.maximum(n_ref - n_hyp, 0).sum())
    false_alarm = int(np.maximum(n_hyp - n_ref, 0).sum())
    confusion = int(np.minimum(n_ref, n_hyp).sum()) - matched

    ref_names = list(ref_masks)
    hyp_names = list(hyp_masks)
    mapping = {hyp_names[h]: ref_names[r] for r, h in pairs}
    report = DerReport(
        der=(miss + false_alarm + confusion) / total_ref,
        miss=miss / total_ref,
        false_alarm=false_alarm / total_ref,
        confusion=confusion / total_ref,
        total_ref_s=total_ref * frame_s,
        mapping=mapping,
    )
    return report


def vad_frame_accuracy(ref_mask: np.ndarray, hyp_mask: np.ndarray) -> float:
    """Fraction of frames where the speech/non-speech decision matches."""
    ref = np.asarray(ref_mask, dtype=np.float64) >= 0.5
    hyp = np.asarray(hyp_mask, dtype=np.float64) >= 0.5
    if ref.shape != hyp.shape:
        raise InputError(f"mask length mismatch: {ref.shape} vs {hyp.shape}")
    if ref.size == 0:
        raise InputError("empty masks")
    return float(np.mean(ref == hyp))
