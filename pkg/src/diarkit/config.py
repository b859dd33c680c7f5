"""Pipeline configuration: a flat key=value file whose defaults are the
published operating points of every stage."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class PipelineConfig:
    # bandwidth partition
    bandwidth_threshold: float = 0.07
    bandwidth_horizon_s: float = 100.0
    # VAD
    vad_window_s: float = 4.0
    vad_shift_s: float = 2.0
    vad_threshold: float = 0.5
    vad_min_dur_s: float = 0.1
    vad_min_gap_s: float = 0.1
    # segmentation
    ncts_win_s: float = 1.5
    ncts_shift_s: float = 0.25
    ncts_train_win_s: float = 1.5
    ncts_train_shift_s: float = 0.75
    cts_win_s: float = 0.5
    cts_shift_s: float = 0.25
    merge_threshold: float = 0.6
    min_segment_s: float = 0.25
    # clustering
    ahc_stop_threshold: float = 0.6
    overlap_threshold: float = 0.0
    max_speakers: int = 8
    similarity: str = "cosine"  # "cosine" or "v2s"
    # TSVAD
    tsvad_threshold: float = 0.65
    median_taps: int = 11
    max_rounds: int = 4
    target_max_s: float = 8.0
    # training presets (exercised at toy scale only)
    v2s_lr: float = 0.01
    v2s_final_lr: float = 0.0001
    v2s_finetune_epochs: int = 30
    # execution
    seed: int = 0
    workers: int = 1
    vad_weights: str = ""
    embed_weights: str = ""
    tsvad_weights: str = ""
    v2s_weights: str = ""

    def validate(self) -> None:
        if self.median_taps % 2 == 0 or self.median_taps < 1:
            raise ConfigError(f"median_taps must be odd, got {self.median_taps}")
        if self.similarity not in ("cosine", "v2s"):
            raise ConfigError(f"similarity must be 'cosine' or 'v2s', got {self.similarity!r}")
        if self.max_rounds < 1 or self.max_speakers < 1 or self.workers < 1:
            raise ConfigError("max_rounds, max_speakers, and workers must be >= 1")

    def override(self, **kwargs) -> "PipelineConfig":
        known = {f.name for f in fields(self)}
        updates = {k: v for k, v in kwargs.items() if v is not None}
        unknown = set(updates) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged = {f.name: getattr(self, f.name) for f in fields(self)}
        merged.update(updates)
        cfg = PipelineConfig(**merged)
        cfg.validate()
        return cfg


def load_config(path) -> PipelineConfig:
    """Read `key=value` lines; blank lines and #-comments are ignored.
    Unknown keys are rejected."""
    types = {f.name: f.type for f in fields(PipelineConfig)}
    casts = {"float": float, "int": int, "str": str}
    values: dict[str, object] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in types:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = casts[types[key]](raw)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {raw!r}") from exc
    cfg = PipelineConfig(**values)
    cfg.validate()
    return cfg


def save_config(cfg: PipelineConfig, path) -> None:
    lines = [f"{f.name}={getattr(cfg, f.name)}" for f in fields(cfg)]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
