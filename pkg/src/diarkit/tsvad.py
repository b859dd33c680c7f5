"""Target-speaker detection inference: target extraction, per-speaker frame
tracks, median-filter post-processing, and fixed-point round iteration."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .audio import FRAME_SHIFT_S, AudioBuffer
from .errors import EmptyInputError, InsufficientSpeechError, ParameterError
from .segments import Diarization, Segment, mask_to_segments, merge_segments, segments_to_mask

TSVAD_THRESHOLD = 0.65
MEDIAN_TAPS = 11
MAX_ROUNDS = 4
TARGET_MAX_S = 8.0
MIN_TARGET_SPEECH_S = 0.25


@dataclass
class SpeakerTracks:
    """Per-speaker frame probability tracks of equal length."""

    speaker_ids: list[str]
    tracks: np.ndarray  # [n_speakers, n_frames]
    frame_shift_s: float = FRAME_SHIFT_S

    @property
    def n_frames(self) -> int:
        return self.tracks.shape[1]


@dataclass
class RoundResult:
    diarization: Diarization
    rounds: int
    converged: bool
    warning: str | None = None
    history: list[Diarization] = field(default_factory=list)


def extract_target_embeddings(
    buf: AudioBuffer,
    speaker_regions: dict[str, list[Segment]],
    embedder,
    max_s: float = TARGET_MAX_S,
) -> dict[str, np.ndarray]:
    """Embed up to the first `max_s` seconds of each speaker's speech.

    Regions are unioned, concatenated in time order, and truncated at the
    budget; the result is deterministic for identical regions.
    """
    targets: dict[str, np.ndarray] = {}
    for speaker, regions in speaker_regions.items():
        merged = merge_segments(regions)
        available = sum(seg.duration for seg in merged)
        if available < MIN_TARGET_SPEECH_S:
            raise InsufficientSpeechError(
                f"speaker {speaker}: {available:.3f}s of speech, "
                f"need >= {MIN_TARGET_SPEECH_S}s"
            )
        budget = int(round(max_s * buf.sample_rate))
        pieces = []
        for seg in merged:
            lo = int(round(seg.start_s * buf.sample_rate))
            hi = int(round(seg.end_s * buf.sample_rate))
            take = min(hi - lo, budget - sum(len(p) for p in pieces))
            if take <= 0:
                break
            pieces.append(buf.samples[lo : lo + take])
        samples = np.concatenate(pieces)
        targets[speaker] = embedder(AudioBuffer(samples, buf.sample_rate))
    return targets


def run_tsvad(net, buf: AudioBuffer, targets: dict[str, np.ndarray]) -> SpeakerTracks:
    """One detection pass per target over the whole recording."""
    if not targets:
        raise ParameterError("run_tsvad needs at least one target")
    ids = list(targets)
    tracks = net.tracks(buf, [targets[s] for s in ids])
    return SpeakerTracks(ids, np.asarray(tracks, dtype=np.float64))


def median_filter(track: np.ndarray, taps: int = MEDIAN_TAPS) -> np.ndarray:
    """Sliding-window median with reflection padding at the edges."""
    if taps % 2 == 0 or taps < 1:
        raise ParameterError(f"median taps must be odd and positive, got {taps}")
    n = track.size
    if n == 0:
        return track.copy()
    # Reflection padding needs pad <= n-1; clamp taps for very short tracks.
    eff = min(taps, 2 * n - 1)
    half = eff // 2
    padded = np.pad(track, half, mode="reflect") if half else track
    windows = np.lib.stride_tricks.sliding_window_view(padded, eff)
    return np.median(windows, axis=1)


def postprocess(
    tracks: SpeakerTracks,
    speech: list[Segment],
    threshold: float = TSVAD_THRESHOLD,
    median_taps: int = MEDIAN_TAPS,
    recording_id: str = "rec",
) -> Diarization:
    """Median-filter each track, threshold inside speech regions, and fall
    back to the per-frame argmax speaker when no track reaches threshold.

    Frames outside the speech regions stay unassigned. Consecutive frames
    assigned to the same speaker merge into segments.
    """
    filtered = np.stack([median_filter(t, median_taps) for t in tracks.tracks])
    n = tracks.n_frames
    hop = tracks.frame_shift_s
    speech_mask = segments_to_mask(speech, n, hop)
    assigned = filtered >= threshold
    none_hit = ~assigned.any(axis=0)
    argmax = filtered.argmax(axis=0)  # ties resolve to the lower speaker index
    assigned[argmax[none_hit], np.nonzero(none_hit)[0]] = True
    assigned &= speech_mask[None, :]
    turns: list[tuple[Segment, str]] = []
    for row, speaker in enumerate(tracks.speaker_ids):
        for seg in mask_to_segments(assigned[row], hop):
            turns.append((seg, speaker))
    turns.sort(key=lambda t: (t[0].start_s, t[1]))
    return Diarization(recording_id, turns)


def _assignment_matrix(diar: Diarization, speakers: list[str], n_frames: int, hop: float) -> np.ndarray:
    per = diar.per_speaker()
    return np.stack(
        [segments_to_mask(per.get(s, []), n_frames, hop) for s in speakers]
    )


def run_rounds(
    buf: AudioBuffer,
    initial_regions: dict[str, list[Segment]],
    net,
    embedder,
    speech: list[Segment],
    threshold: float = TSVAD_THRESHOLD,
    median_taps: int = MEDIAN_TAPS,
    max_rounds: int = MAX_ROUNDS,
    target_max_s: float = TARGET_MAX_S,
    recording_id: str = "rec",
) -> RoundResult:
    """Iterate target extraction and detection until the diarization stops
    changing frame-for-frame, or the round budget runs out.

    A round that leaves any speaker without speech falls back to the previous
    round's result with a warning instead of failing.
    """
    if max_rounds < 1:
        raise ParameterError("max_rounds must be >= 1")
    speakers = list(initial_regions)
    regions = initial_regions
    previous: Diarization | None = None
    prev_matrix: np.ndarray | None = None
    history: list[Diarization] = []
    n_frames = 0
    for rounds in range(1, max_rounds + 1):
        try:
            targets = extract_target_embeddings(buf, regions, embedder, target_max_s)
        except InsufficientSpeechError as exc:
            if previous is None:
                raise
            return RoundResult(previous, rounds - 1, False, warning=str(exc), history=history)
        tracks = run_tsvad(net, buf, targets)
        n_frames = tracks.n_frames
        diar = postprocess(tracks, speech, threshold, median_taps, recording_id)
        history.append(diar)
        per = diar.per_speaker()
        empty = [s for s in speakers if not per.get(s)]
        if empty:
            if previous is None:
                raise EmptyInputError(f"round 1 produced no speech for {empty}")
            return RoundResult(
                previous, rounds - 1, False,
                warning=f"round {rounds} emptied speakers {empty}; kept round {rounds - 1}",
                history=history,
            )
        matrix = _assignment_matrix(diar, speakers, n_frames, tracks.frame_shift_s)
        if prev_matrix is not None and np.array_equal(matrix, prev_matrix):
            return RoundResult(diar, rounds, True, history=history)
        previous, prev_matrix = diar, matrix
        regions = {s: per[s] for s in speakers}
    return RoundResult(previous, max_rounds, False, history=history)
