"""Corpus estimation of score-side model parameters.

The trainable pieces are the note-value chain (initial + transition
distributions), the chordal-cluster entry/extension probabilities, the pitch
interval weights, and the context-conditioned voice probabilities.  Timing
parameters (tempo walk, onset noise, chordal asynchrony) are fixed constants
of the performance model and are not estimated here.

A corpus is a list of pieces, each piece a list of ``ScoreNote`` in canonical
order (voice, onset, pitch).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import replace
from typing import Iterable, Sequence

import numpy as np

from .core import NoteValueGrid, ScoreNote, TICKS_PER_QUARTER
from .merged_model import (
    MergedModelParams,
    N_CONTEXTS,
    SPAN_THRESHOLD,
    default_merged_params,
    pitch_span_contexts,
)
from .voice_model import MAX_INTERVAL, VoiceHmmParams

DEFAULT_SMOOTHING = 0.1
# How long a score note is considered sounding when measuring pitch spans:
# four quarter notes.
SOUNDING_HORIZON_TICKS = 4 * TICKS_PER_QUARTER

__all__ = [
    "DEFAULT_SMOOTHING",
    "SOUNDING_HORIZON_TICKS",
    "estimate_note_value_model",
    "estimate_cluster_params",
    "estimate_pitch_model",
    "estimate_alpha",
    "train_merged_params",
    "stationary_distribution",
    "voice_clusters",
]


def _piece_voices(piece: Sequence[ScoreNote]) -> dict[int, list[ScoreNote]]:
    byv: dict[int, list[ScoreNote]] = {}
    for note in piece:
        byv.setdefault(note.voice, []).append(note)
    for notes in byv.values():
        notes.sort(key=lambda n: (n.onset_tick, n.pitch))
    return byv


def voice_clusters(notes: Sequence[ScoreNote]) -> list[tuple[int, int, int]]:
    """Group one voice's notes into onset clusters.

    Returns ``(onset_tick, value_tick, size)`` triples in onset order.  The
    cluster value is the value of its first (lowest-pitched) note.
    """
    clusters: list[tuple[int, int, int]] = []
    for note in notes:
        if clusters and clusters[-1][0] == note.onset_tick:
            onset, value, size = clusters[-1]
            clusters[-1] = (onset, value, size + 1)
        else:
            clusters.append((note.onset_tick, note.value_tick, 1))
    return clusters


def _value_index(grid: NoteValueGrid, value: int) -> int:
    try:
        return grid.index(value)
    except KeyError:
        raise ValueError(
            f"corpus note value {value} ticks is not on the note-value grid"
        ) from None


def stationary_distribution(pi: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Stationary row vector of a row-stochastic matrix, by power iteration."""
    n = pi.shape[0]
    x = np.full(n, 1.0 / n)
    for _ in range(100_000):
        nxt = x @ pi
        nxt /= nxt.sum()
        if np.abs(nxt - x).sum() < tol:
            return nxt
        x = nxt
    return x


def estimate_note_value_model(
    corpus: Iterable[Sequence[ScoreNote]],
    grid: NoteValueGrid,
    smoothing: float = DEFAULT_SMOOTHING,
) -> tuple[np.ndarray, np.ndarray]:
    """Estimate the note-value chain from cluster-value bigrams.

    Bigrams are counted over consecutive clusters within each voice of each
    piece, additively smoothed, and row-normalized.  The initial distribution
    is the stationary distribution of the transition matrix.
    """
    r = len(grid)
    counts = np.zeros((r, r))
    for piece in corpus:
        for notes in _piece_voices(piece).values():
            values = [_value_index(grid, c[1]) for c in voice_clusters(notes)]
            for a, b in zip(values, values[1:]):
                counts[a, b] += 1.0
    counts += smoothing
    pi = counts / counts.sum(axis=1, keepdims=True)
    return stationary_distribution(pi), pi


def estimate_cluster_params(
    corpus: Iterable[Sequence[ScoreNote]],
    grid: NoteValueGrid,
) -> tuple[np.ndarray, np.ndarray]:
    """Estimate chord-entry (beta) and chord-extension (gamma) probabilities.

    For each note value r, beta_r is the fraction of r-valued clusters holding
    two or more notes, and gamma_r is set so the mean size of multi-note
    clusters is matched: mean = 2 + gamma/(1 - gamma).  Values unseen in the
    corpus fall back to the corpus-wide estimate.
    """
    r = len(grid)
    sizes: list[Counter] = [Counter() for _ in range(r)]
    for piece in corpus:
        for notes in _piece_voices(piece).values():
            for _, value, size in voice_clusters(notes):
                sizes[_value_index(grid, value)][size] += 1

    def beta_of(counter: Counter) -> float | None:
        total = sum(counter.values())
        if total == 0:
            return None
        return sum(c for m, c in counter.items() if m >= 2) / total

    def gamma_of(counter: Counter) -> float | None:
        multi = {m: c for m, c in counter.items() if m >= 2}
        total = sum(multi.values())
        if total == 0:
            return None
        mean = sum(m * c for m, c in multi.items()) / total
        return (mean - 2.0) / (mean - 1.0)

    pooled = Counter()
    for counter in sizes:
        pooled.update(counter)
    global_beta = beta_of(pooled)
    global_gamma = gamma_of(pooled)
    beta = np.empty(r)
    gamma = np.empty(r)
    for i in range(r):
        b = beta_of(sizes[i])
        beta[i] = b if b is not None else (global_beta if global_beta is not None else 0.0)
        g = gamma_of(sizes[i])
        gamma[i] = g if g is not None else (global_gamma if global_gamma is not None else 0.0)
    return beta, gamma


def estimate_pitch_model(
    corpus: Iterable[Sequence[ScoreNote]],
    smoothing: float = DEFAULT_SMOOTHING,
) -> np.ndarray:
    """Estimate pitch-interval weights from consecutive notes within voices."""
    weights = np.full(2 * MAX_INTERVAL + 1, smoothing)
    for piece in corpus:
        for notes in _piece_voices(piece).values():
            for a, b in zip(notes, notes[1:]):
                iv = b.pitch - a.pitch
                if abs(iv) <= MAX_INTERVAL:
                    weights[iv + MAX_INTERVAL] += 1.0
    return weights / weights.sum()


def estimate_alpha(
    corpus: Iterable[Sequence[ScoreNote]],
    span_threshold: int = SPAN_THRESHOLD,
    smoothing: float = DEFAULT_SMOOTHING,
    horizon_ticks: int = SOUNDING_HORIZON_TICKS,
) -> np.ndarray:
    """Estimate per-context voice probabilities from labeled scores.

    Contexts are measured in the tick domain: a note sounds from its onset
    until the next onset of the same pitch, capped at ``horizon_ticks``.
    Counts are additively smoothed so every (context, voice) cell is positive.
    """
    counts = np.zeros((N_CONTEXTS, 2))
    for piece in corpus:
        notes = sorted(piece, key=lambda n: (n.onset_tick, n.pitch))
        onsets = [n.onset_tick for n in notes]
        pitches = [n.pitch for n in notes]
        offsets = []
        for i, note in enumerate(notes):
            end = onsets[i] + horizon_ticks
            for j in range(i + 1, len(notes)):
                if pitches[j] == note.pitch:
                    end = min(end, onsets[j])
                    break
            offsets.append(end)
        ctx = pitch_span_contexts(onsets, pitches, offsets, span_threshold)
        for c, note in zip(ctx, notes):
            if note.voice not in (1, 2):
                raise ValueError(
                    f"voice probabilities support voices 1 and 2, got {note.voice}"
                )
            counts[c, note.voice - 1] += 1.0
    counts += smoothing
    return counts / counts.sum(axis=1, keepdims=True)


def train_merged_params(
    corpus: Sequence[Sequence[ScoreNote]],
    grid: NoteValueGrid,
    smoothing: float = DEFAULT_SMOOTHING,
    span_threshold: int = SPAN_THRESHOLD,
) -> MergedModelParams:
    """Estimate a full two-voice model from a labeled score corpus.

    Each voice's note-value chain, cluster probabilities, and pitch-interval
    weights are estimated from that voice's notes alone; the voice choice
    probabilities come from the pooled corpus.  Timing constants and the
    per-voice pitch register priors keep their defaults.  A voice absent from
    the corpus keeps its default tables.
    """
    defaults = default_merged_params(grid)
    voices = []
    for v, base in ((1, defaults.voice1), (2, defaults.voice2)):
        sub = [
            [n for n in piece if n.voice == v]
            for piece in corpus
        ]
        sub = [piece for piece in sub if piece]
        if not sub:
            voices.append(base)
            continue
        pi_ini, pi = estimate_note_value_model(sub, grid, smoothing)
        beta, gamma = estimate_cluster_params(sub, grid)
        theta = estimate_pitch_model(sub, smoothing)
        voices.append(
            replace(
                base,
                pi_ini=pi_ini,
                pi=pi,
                beta=beta,
                gamma=gamma,
                theta_interval=theta,
            )
        )
    alpha = estimate_alpha(corpus, span_threshold, smoothing)
    params = MergedModelParams(
        voice1=voices[0],
        voice2=voices[1],
        alpha=alpha,
        span_threshold=span_threshold,
    )
    params.validate()
    return params
