"""Full-pipeline orchestration: bandwidth partition, then the narrowband
(AHC + overlap + TSVAD rounds) or wideband (spectral clustering) path, with
per-recording isolation and a JSON-lines run report."""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import AudioBuffer, read_wav, resample_to_8k
from .clustering import (
    ahc,
    assign_with_overlap,
    cosine_similarity_matrix,
    select_two_speakers,
    spectral_cluster,
    v2s_similarity_matrix,
)
from .config import PipelineConfig
from .errors import ConfigError, DiarkitError, InsufficientSpeakersError
from .metrics import diarization_to_turns, emit_rttm
from .partition import classify_bandwidth
from .segmenter import EmbeddedSegment, recursive_merge, uniform_segments
from .segments import Diarization, Segment, merge_segments
from .stubs import EnergyVad, SpectralEmbedder, SpectralTsvad
from .tsvad import run_rounds
from .vad import binarize, predict_speech, read_vad_file

TASK1 = "task1"  # external speech regions supplied
TASK2 = "task2"  # internal VAD


@dataclass
class Components:
    """Resolved model set; stub components need no weight files."""

    embedder: object
    tsvad_net: object
    vad_net: object | None = None
    scorer: object | None = None
    stub: bool = False


@dataclass
class FileResult:
    file_id: str
    status: str
    bandwidth: str = ""
    peak_above_4k: float = 0.0
    n_segments: int = 0
    n_speakers: int = 0
    rounds: int = 0
    warning: str = ""
    error: str = ""
    timing: dict[str, float] = field(default_factory=dict)
    rttm_path: str = ""

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)


def build_stub_components() -> Components:
    return Components(
        embedder=SpectralEmbedder(),
        tsvad_net=SpectralTsvad(),
        vad_net=EnergyVad(),
        scorer=None,
        stub=True,
    )


def build_net_components(cfg: PipelineConfig) -> Components:
    from .models import EmbedNet, TsvadNet, V2sScorer, VadNet
    from .stubs import NetEmbedder
    from .weights import load_weights

    if not cfg.embed_weights or not cfg.tsvad_weights:
        raise ConfigError(
            "embed_weights and tsvad_weights are required without --stub-embeddings"
        )
    embedder = NetEmbedder(EmbedNet(load_weights(cfg.embed_weights)))
    tsvad_net = TsvadNet(load_weights(cfg.tsvad_weights))
    vad_net = VadNet(load_weights(cfg.vad_weights)) if cfg.vad_weights else None
    scorer = (
        V2sScorer.from_store(load_weights(cfg.v2s_weights)) if cfg.v2s_weights else None
    )
    return Components(embedder, tsvad_net, vad_net, scorer)


def speech_regions_for(
    buf: AudioBuffer, mode: str, vad_path, components: Components, cfg: PipelineConfig
) -> list[Segment]:
    if mode == TASK1:
        if vad_path is None:
            raise ConfigError("task1 needs an external VAD file per recording")
        return read_vad_file(vad_path)
    if components.stub:
        mask = components.vad_net.predict(buf)
    else:
        if components.vad_net is None:
            raise ConfigError("task2 needs vad_weights (or stub components)")
        mask = predict_speech(
            components.vad_net, buf, cfg.vad_window_s, cfg.vad_shift_s
        )
    return binarize(mask, cfg.vad_threshold, cfg.vad_min_dur_s, cfg.vad_min_gap_s)


def _embed_segments(
    buf: AudioBuffer, segs: list[Segment], embedder, min_segment_s: float
) -> list[EmbeddedSegment]:
    out = []
    for seg in segs:
        if seg.duration < min_segment_s - 1e-9:
            continue
        out.append(EmbeddedSegment(seg, embedder(buf.slice_seconds(seg.start_s, seg.end_s))))
    return out


def _single_speaker_fallback(recording_id: str, speech: list[Segment]) -> Diarization:
    return Diarization(recording_id, [(seg, "spk0") for seg in merge_segments(speech)])


def cluster_two_speakers(
    buf: AudioBuffer, speech: list[Segment], components: Components, cfg: PipelineConfig
) -> dict[str, list[Segment]] | None:
    """Merge-driven segmentation plus two-anchor clustering with overlap
    assignment; returns per-speaker regions, or None when the audio does not
    split into two clusters."""
    segs = uniform_segments(speech, cfg.cts_win_s, cfg.cts_shift_s)
    embedded = _embed_segments(buf, segs, components.embedder, cfg.min_segment_s)
    if not embedded:
        return None
    merged = recursive_merge(embedded, cfg.merge_threshold)
    clustering = ahc(merged, cfg.ahc_stop_threshold)
    try:
        center_a, center_b, (idx_a, idx_b), rest = select_two_speakers(clustering, merged)
    except InsufficientSpeakersError:
        return None
    regions = {
        "spk0": [merged[i].segment for i in idx_a],
        "spk1": [merged[i].segment for i in idx_b],
    }
    extra_a, extra_b = assign_with_overlap(
        [merged[i] for i in rest], center_a, center_b, cfg.overlap_threshold
    )
    regions["spk0"] += [e.segment for e in extra_a]
    regions["spk1"] += [e.segment for e in extra_b]
    return {s: merge_segments(r) for s, r in regions.items()}


def diarize_cts(
    buf: AudioBuffer,
    speech: list[Segment],
    components: Components,
    cfg: PipelineConfig,
    recording_id: str,
) -> tuple[Diarization, int, str]:
    """Narrowband path: downsample if needed, cluster into two speakers, then
    iterate target-speaker detection rounds."""
    if buf.sample_rate == 16000:
        buf = resample_to_8k(buf)
    regions = cluster_two_speakers(buf, speech, components, cfg)
    if regions is None:
        return _single_speaker_fallback(recording_id, speech), 0, "single cluster"
    result = run_rounds(
        buf,
        regions,
        components.tsvad_net,
        components.embedder,
        speech,
        threshold=cfg.tsvad_threshold,
        median_taps=cfg.median_taps,
        max_rounds=cfg.max_rounds,
        target_max_s=cfg.target_max_s,
        recording_id=recording_id,
    )
    return result.diarization, result.rounds, result.warning or ""


def diarize_ncts(
    buf: AudioBuffer,
    speech: list[Segment],
    components: Components,
    cfg: PipelineConfig,
    recording_id: str,
) -> Diarization:
    """Wideband path: uniform segmentation, pair similarity, spectral
    clustering with eigengap speaker-count selection."""
    segs = uniform_segments(speech, cfg.ncts_win_s, cfg.ncts_shift_s)
    embedded = _embed_segments(buf, segs, components.embedder, cfg.min_segment_s)
    if not embedded:
        return _single_speaker_fallback(recording_id, speech)
    if len(embedded) == 1:
        return Diarization(recording_id, [(embedded[0].segment, "spk0")])
    xs = np.stack([e.embedding for e in embedded])
    if cfg.similarity == "v2s" and components.scorer is not None:
        sim = v2s_similarity_matrix(xs, components.scorer)
    else:
        sim = np.clip(cosine_similarity_matrix(xs), 0.0, None)
    clustering = spectral_cluster(sim, cfg.max_speakers, seed=cfg.seed)
    per_speaker: dict[str, list[Segment]] = {}
    for e, label in zip(embedded, clustering.labels):
        per_speaker.setdefault(f"spk{label}", []).append(e.segment)
    turns = [
        (seg, spk)
        for spk, seg_list in sorted(per_speaker.items())
        for seg in merge_segments(seg_list)
    ]
    turns.sort(key=lambda t: (t[0].start_s, t[1]))
    return Diarization(recording_id, turns)


def process_recording(
    wav_path,
    out_dir,
    mode: str,
    components: Components,
    cfg: PipelineConfig,
    vad_path=None,
) -> FileResult:
    """Diarize one recording and write `<file-id>.rttm` atomically."""
    file_id = Path(wav_path).stem
    result = FileResult(file_id=file_id, status="ok")
    timer = time.perf_counter
    try:
        t0 = timer()
        buf = read_wav(wav_path)
        result.timing["read"] = round(timer() - t0, 4)

        t0 = timer()
        if buf.sample_rate == 16000:
            bandwidth = classify_bandwidth(buf, cfg.bandwidth_threshold, cfg.bandwidth_horizon_s)
            result.bandwidth = bandwidth.value
            result.peak_above_4k = round(bandwidth.peak_above_4k, 6)
        else:
            result.bandwidth = "CTS"  # already narrowband
        result.timing["partition"] = round(timer() - t0, 4)

        t0 = timer()
        speech = speech_regions_for(buf, mode, vad_path, components, cfg)
        result.timing["vad"] = round(timer() - t0, 4)
        if not speech:
            raise DiarkitError("no speech detected")

        t0 = timer()
        if result.bandwidth == "CTS":
            diar, rounds, warning = diarize_cts(buf, speech, components, cfg, file_id)
            result.rounds = rounds
            result.warning = warning
        else:
            diar = diarize_ncts(buf, speech, components, cfg, file_id)
        result.timing["diarize"] = round(timer() - t0, 4)

        result.n_segments = len(diar.turns)
        result.n_speakers = len(diar.speakers())
        out_path = Path(out_dir) / f"{file_id}.rttm"
        _atomic_write(out_path, emit_rttm(diarization_to_turns(diar)))
        result.rttm_path = str(out_path)
    except Exception as exc:  # per-recording isolation: record, keep going
        result.status = "error"
        result.error = f"{type(exc).__name__}: {exc}"
    return result


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def run_pipeline(
    inputs: list,
    out_dir,
    mode: str,
    components: Components,
    cfg: PipelineConfig,
    vad_paths: dict[str, object] | None = None,
    report_path=None,
) -> list[FileResult]:
    """Process a batch of recordings; failures are recorded, not fatal.

    `vad_paths` maps file ids to external speech-region files (task-1 mode).
    Returns per-file results in input order; the JSON-lines report mirrors it.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vad_paths = vad_paths or {}

    def work(wav_path):
        return process_recording(
            wav_path, out, mode, components, cfg, vad_paths.get(Path(wav_path).stem)
        )

    if cfg.workers > 1 and len(inputs) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(work, inputs))
    else:
        results = [work(p) for p in inputs]

    if report_path is not None:
        _atomic_write(Path(report_path), "".join(r.to_json() + "\n" for r in results))
    return results
