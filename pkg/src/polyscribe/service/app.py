"""HTTP endpoints wrapping the transcription engine.

Every endpoint is a pure function of its request body — parameters travel as
inline TOML documents and notes as JSON rows, so the service holds no state
and needs no filesystem.  `/compare` fans its per-piece, per-model decodes
out to a small worker pool.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..baselines import (
    DUPLE_BAR_TICKS,
    TRIPLE_BAR_TICKS,
    MetricalParams,
    decode_metrical_hmm,
    decode_note_hmm,
    train_metrical,
)
from ..core import (
    FormatError,
    NoteValueGrid,
    PerformanceNote,
    ScoreNote,
    canonicalize,
    is_canonical,
)
from ..decoder import DecodeError, DecoderConfig, TempoGrid, decode_cascade, decode_merged
from ..evaluation import CostWeights, evaluation_report
from ..merged_model import MergedModelParams, default_merged_params
from ..params_io import dumps_params, loads_params
from ..sampler import make_polyrhythm_suite, sample_merged
from ..training import train_merged_params
from . import schemas as sc

_CLIENT_ERRORS = (FormatError, DecodeError, ValueError)
_COMPARE_WORKERS = 4


def _bad_request(exc: Exception):
    raise HTTPException(status_code=400, detail=f"{type(exc).__name__}: {exc}")


def _to_performance(rows) -> list[PerformanceNote]:
    return [PerformanceNote(r.onset_sec, r.pitch, r.offset_sec) for r in rows]


def _to_score(rows) -> list[ScoreNote]:
    return [ScoreNote(r.voice, r.onset_tick, r.pitch, r.value_tick) for r in rows]


def _merged_params(toml: str | None) -> MergedModelParams:
    if toml is None:
        return default_merged_params(NoteValueGrid())
    params = loads_params(toml)
    if not isinstance(params, MergedModelParams):
        raise FormatError("params_toml must hold merged-model parameters")
    return params


def _metrical_params(toml: str | None) -> list[MetricalParams]:
    if toml is None:
        return [MetricalParams(DUPLE_BAR_TICKS), MetricalParams(TRIPLE_BAR_TICKS)]
    params = loads_params(toml)
    if not isinstance(params, MetricalParams):
        raise FormatError("metrical_params_toml must hold metrical parameters")
    return [params]


def _tempo_grid(model: sc.TempoGridModel) -> TempoGrid:
    return TempoGrid(model.v_min, model.v_max, model.n)


def _run_model(model, notes, merged, metricals, config):
    if model == "merged":
        return decode_merged(merged, notes, config)
    if model == "cascade":
        return decode_cascade(merged, notes, config)
    if model == "note":
        return decode_note_hmm(merged.voice1, notes, config)
    if model == "metrical":
        return decode_metrical_hmm(metricals, notes, config)
    raise ValueError(f"unknown model {model!r}")


def _json_info(info: dict) -> dict:
    """Scalar subset of a result's info dict (full objects such as the
    decoded latent assignment stay library-side; the note rows already
    carry their content)."""
    out = {}
    for key, value in info.items():
        if isinstance(value, np.generic):
            out[key] = value.item()
        elif value is None or isinstance(value, (bool, int, float, str)):
            out[key] = value
    return out


def _note_models(notes) -> list[sc.TranscribedNoteModel]:
    return [
        sc.TranscribedNoteModel(
            onset_sec=n.onset_sec,
            pitch=n.pitch,
            voice=n.voice,
            note_value=n.note_value,
            cluster_flag=n.cluster_flag,
            score_time=n.score_time,
            tempo=n.tempo,
        )
        for n in notes
    ]


def _sem(xs: np.ndarray) -> float:
    if len(xs) < 2:
        return 0.0
    return float(np.std(xs, ddof=1) / math.sqrt(len(xs)))


def create_app() -> FastAPI:
    app = FastAPI(title="polyscribe", version=__version__)

    @app.get("/health", response_model=sc.HealthResponse)
    def health() -> sc.HealthResponse:
        return sc.HealthResponse(status="ok", version=__version__)

    @app.post("/transcribe", response_model=sc.TranscribeResponse)
    def transcribe(req: sc.TranscribeRequest) -> sc.TranscribeResponse:
        try:
            notes = canonicalize(_to_performance(req.notes))
            merged = _merged_params(req.params_toml)
            metricals = _metrical_params(req.metrical_params_toml)
            config = DecoderConfig(_tempo_grid(req.tempo), req.n_h, req.beam_width)
            result = _run_model(req.model, notes, merged, metricals, config)
        except _CLIENT_ERRORS as exc:
            _bad_request(exc)
        return sc.TranscribeResponse(
            model=result.model,
            log_prob=result.log_prob,
            info=_json_info(result.info),
            notes=_note_models(result.notes),
        )

    @app.post("/train", response_model=sc.TrainResponse)
    def train(req: sc.TrainRequest) -> sc.TrainResponse:
        try:
            pieces = [_to_score(piece) for piece in req.pieces]
            if req.kind == "merged":
                grid = (
                    NoteValueGrid(tuple(req.grid_values))
                    if req.grid_values is not None
                    else NoteValueGrid()
                )
                params = train_merged_params(
                    pieces, grid, smoothing=req.smoothing, span_threshold=req.span_threshold
                )
            else:
                params = train_metrical(pieces, req.bar_ticks, smoothing=req.smoothing)
            doc = dumps_params(params)
        except _CLIENT_ERRORS as exc:
            _bad_request(exc)
        return sc.TrainResponse(params_toml=doc)

    @app.post("/sample", response_model=sc.SampleResponse)
    def sample(req: sc.SampleRequest) -> sc.SampleResponse:
        try:
            if req.kind == "model":
                params = _merged_params(req.params_toml)
                grid = _tempo_grid(req.tempo) if req.grid_tempo else None
                result = sample_merged(params, req.n_notes, req.seed, tempo_grid=grid)
            else:
                result = make_polyrhythm_suite(
                    req.kind,
                    1,
                    req.seed,
                    n_bars=req.n_bars,
                    sec_per_quarter=req.sec_per_quarter,
                    sigma_t=req.sigma_t,
                    lam=req.lam,
                    sigma_v=req.tempo_drift,
                )[0]
            perf, truth = result.performance, result.truth
        except _CLIENT_ERRORS as exc:
            _bad_request(exc)
        log_prob = truth.log_prob if math.isfinite(truth.log_prob) else None
        return sc.SampleResponse(
            performance=[
                sc.PerformanceNoteModel(
                    onset_sec=n.onset_sec, pitch=n.pitch, offset_sec=n.offset_sec
                )
                for n in perf
            ],
            truth=_note_models(truth.notes),
            log_prob=log_prob,
            info=_json_info(truth.info),
        )

    @app.post("/evaluate", response_model=sc.EvaluateResponse)
    def evaluate(req: sc.EvaluateRequest) -> sc.EvaluateResponse:
        try:
            weights = CostWeights(req.weights.scale, req.weights.shift)
            report = evaluation_report(req.truth, req.estimate, weights)
        except _CLIENT_ERRORS as exc:
            _bad_request(exc)
        return sc.EvaluateResponse(**report)

    @app.post("/compare", response_model=sc.CompareResponse)
    def compare(req: sc.CompareRequest) -> sc.CompareResponse:
        try:
            merged = _merged_params(req.params_toml)
            metricals = _metrical_params(req.metrical_params_toml)
            config = DecoderConfig(_tempo_grid(req.tempo), req.n_h, req.beam_width)
            weights = CostWeights(req.weights.scale, req.weights.shift)
            pieces = []
            for piece in req.pieces:
                notes = _to_performance(piece.notes)
                if not is_canonical(notes):
                    raise FormatError(
                        f"piece {piece.name!r}: notes must be in canonical order "
                        "to stay aligned with the truth rows"
                    )
                truth = _to_score(piece.truth)
                if len(truth) != len(notes):
                    raise FormatError(
                        f"piece {piece.name!r}: truth and performance row counts differ"
                    )
                pieces.append((piece.name, notes, truth))

            jobs = [
                (idx, model, notes)
                for idx, (_, notes, _) in enumerate(pieces)
                for model in req.models
            ]
            with ThreadPoolExecutor(max_workers=_COMPARE_WORKERS) as pool:
                futures = {
                    (idx, model): pool.submit(
                        _run_model, model, notes, merged, metricals, config
                    )
                    for idx, model, notes in jobs
                }
                decoded = {key: fut.result() for key, fut in futures.items()}

            piece_rows = []
            rates: dict[str, list[float]] = {m: [] for m in req.models}
            for idx, (name, notes, truth) in enumerate(pieces):
                piece_rates, piece_acc, piece_lp = {}, {}, {}
                for model in req.models:
                    result = decoded[(idx, model)]
                    report = evaluation_report(truth, result.notes, weights)
                    piece_rates[model] = report["correction_rate"]
                    piece_acc[model] = report["voice_accuracy"]
                    piece_lp[model] = result.log_prob
                    rates[model].append(report["correction_rate"])
                piece_rows.append(
                    sc.PieceComparison(
                        name=name,
                        n_notes=len(notes),
                        rates=piece_rates,
                        voice_accuracy=piece_acc,
                        log_probs=piece_lp,
                    )
                )

            aggregates = []
            merged_rates = np.array(rates.get("merged", []))
            for model in req.models:
                xs = np.array(rates[model])
                diff = sem_d = None
                if model != "merged" and len(merged_rates) == len(xs) and len(xs):
                    deltas = xs - merged_rates
                    diff = float(deltas.mean())
                    sem_d = _sem(deltas)
                aggregates.append(
                    sc.ModelAggregate(
                        model=model,
                        n_pieces=len(xs),
                        mean_rate=float(xs.mean()) if len(xs) else 0.0,
                        sem_rate=_sem(xs),
                        mean_diff_vs_merged=diff,
                        sem_diff_vs_merged=sem_d,
                    )
                )
        except _CLIENT_ERRORS as exc:
            _bad_request(exc)
        return sc.CompareResponse(pieces=piece_rows, aggregates=aggregates)

    return app
