"""Request/response bodies for the transcription service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PerformanceNoteModel(StrictModel):
    onset_sec: float
    pitch: int = Field(ge=0, le=127)
    offset_sec: float | None = None


class ScoreNoteModel(StrictModel):
    voice: int = Field(ge=1)
    onset_tick: int = Field(ge=0)
    pitch: int = Field(ge=0, le=127)
    value_tick: int = Field(ge=1)


class TranscribedNoteModel(StrictModel):
    onset_sec: float
    pitch: int = Field(ge=0, le=127)
    voice: int = Field(ge=1)
    note_value: int = Field(ge=0)
    cluster_flag: int = Field(ge=0, le=1)
    score_time: int
    tempo: float = Field(gt=0)


class TempoGridModel(StrictModel):
    v_min: float = Field(default=0.3, gt=0)
    v_max: float = 1.5
    n: int = Field(default=50, ge=1)


ModelName = Literal["merged", "cascade", "note", "metrical"]


class TranscribeRequest(StrictModel):
    notes: list[PerformanceNoteModel] = Field(min_length=1)
    model: ModelName = "merged"
    params_toml: str | None = None
    metrical_params_toml: str | None = None
    n_h: int = 30
    beam_width: int | None = None
    tempo: TempoGridModel = Field(default_factory=TempoGridModel)


class TranscribeResponse(StrictModel):
    model: str
    log_prob: float
    info: dict
    notes: list[TranscribedNoteModel]


class TrainRequest(StrictModel):
    pieces: list[list[ScoreNoteModel]] = Field(min_length=1)
    kind: Literal["merged", "metrical"] = "merged"
    smoothing: float = Field(default=0.1, gt=0)
    span_threshold: int = Field(default=15, ge=0)
    grid_values: list[int] | None = None
    bar_ticks: int = Field(default=192, ge=1)


class TrainResponse(StrictModel):
    params_toml: str


class SampleRequest(StrictModel):
    kind: Literal["model", "3v2", "4v3"] = "model"
    seed: int = 0
    params_toml: str | None = None
    n_notes: int = Field(default=60, ge=1)
    grid_tempo: bool = False
    tempo: TempoGridModel = Field(default_factory=TempoGridModel)
    n_bars: int = Field(default=8, ge=1)
    sec_per_quarter: float = Field(default=0.5, gt=0)
    sigma_t: float = Field(default=0.02, ge=0)
    lam: float = Field(default=0.0101, ge=0)
    tempo_drift: float = Field(default=0.0332, ge=0)


class SampleResponse(StrictModel):
    performance: list[PerformanceNoteModel]
    truth: list[TranscribedNoteModel]
    log_prob: float | None
    info: dict


class CostWeightsModel(StrictModel):
    scale: float = Field(default=1.0, ge=0)
    shift: float = Field(default=1.0, ge=0)


class EvaluateRequest(StrictModel):
    truth: list[ScoreNoteModel] = Field(min_length=1)
    estimate: list[TranscribedNoteModel] = Field(min_length=1)
    weights: CostWeightsModel = Field(default_factory=CostWeightsModel)


class EvaluateResponse(StrictModel):
    n_notes: int
    voice_accuracy: float
    correction_cost: float
    n_scale: int
    n_shift: int
    correction_rate: float
    value_match_rate: float


class ComparePiece(StrictModel):
    name: str
    notes: list[PerformanceNoteModel] = Field(min_length=1)
    truth: list[ScoreNoteModel] = Field(min_length=1)


class CompareRequest(StrictModel):
    pieces: list[ComparePiece] = Field(min_length=1)
    models: list[ModelName] = Field(
        default_factory=lambda: ["merged", "cascade", "note", "metrical"]
    )
    params_toml: str | None = None
    metrical_params_toml: str | None = None
    n_h: int = 30
    beam_width: int | None = None
    tempo: TempoGridModel = Field(default_factory=TempoGridModel)
    weights: CostWeightsModel = Field(default_factory=CostWeightsModel)


class PieceComparison(StrictModel):
    name: str
    n_notes: int
    rates: dict[str, float]
    voice_accuracy: dict[str, float]
    log_probs: dict[str, float]


class ModelAggregate(StrictModel):
    model: str
    n_pieces: int
    mean_rate: float
    sem_rate: float
    mean_diff_vs_merged: float | None = None
    sem_diff_vs_merged: float | None = None


class CompareResponse(StrictModel):
    pieces: list[PieceComparison]
    aggregates: list[ModelAggregate]


class HealthResponse(StrictModel):
    status: str
    version: str
