"""Baseline transcription models: single-voice note HMM and metrical HMM.

The note HMM is the one-voice core of the merged model: note-value states
with chord flags, a tempo random walk, pitch intervals, and the same onset
noise.  The metrical HMM instead tracks the position of each onset within a
bar of fixed length, so note values are differences of bar positions and any
tick position is reachable; it ignores pitch.  Several metrical variants
(e.g. duple and triple bars) can be decoded side by side and the best scoring
one kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import voice_model as vm
from .core import PerformanceNote, TICKS_PER_QUARTER, TranscribedNote, Transcription, is_canonical
from .decoder import (
    DecodeError,
    DecoderConfig,
    _identity_kernel,
    _maxplus_pair,
    _onset_grid,
    _pitch_ini,
    _pitch_tr,
    _tempo_matrices,
    reconstruct_score_times,
)
from .merged_model import LatentAssignment
from .voice_model import NEG_INF, VoiceHmmParams, _safe_log

__all__ = [
    "decode_note_hmm",
    "MetricalParams",
    "DUPLE_BAR_TICKS",
    "TRIPLE_BAR_TICKS",
    "train_metrical",
    "decode_metrical_hmm",
]

DUPLE_BAR_TICKS = 192   # four quarter notes
TRIPLE_BAR_TICKS = 144  # three quarter notes


# ---------------------------------------------------------------------------
# Note HMM (single voice)


def decode_note_hmm(
    voice: VoiceHmmParams, notes: Sequence[PerformanceNote], config: DecoderConfig
) -> Transcription:
    """Most probable single-voice transcription of a performance."""
    if not notes:
        raise DecodeError("cannot transcribe an empty performance")
    if not is_canonical(notes):
        raise DecodeError("performance must be in canonical order")
    voice.validate()
    n = len(notes)
    grid = config.tempo_grid
    values_v = grid.values
    nv = grid.n
    w_count = voice.n_states

    xi_ini = vm.cluster_initial_log_vector(voice)
    xi = vm.cluster_transition_log_matrix(voice)
    t_ini, t_tr = _tempo_matrices(voice, grid)
    ident = _identity_kernel(nv)

    d = xi_ini[:, None] + _pitch_ini(voice, notes[0].pitch)
    d = d + (t_ini[None, :] if n >= 2 else 0.0)
    backs = []
    for i in range(1, n):
        dt = notes[i].onset_sec - notes[i - 1].onset_sec
        e = _onset_grid(voice, [dt], values_v)[0]
        tt = t_tr if i <= n - 2 else ident
        out, w_star, v_star = _maxplus_pair(d + e, xi, tt)
        d = out + _pitch_tr(voice, notes[i - 1].pitch, notes[i].pitch)
        backs.append((w_star * nv + v_star).astype(np.int32))

    flat = int(d.argmax())
    log_prob = float(d.flat[flat])
    if not math.isfinite(log_prob):
        raise DecodeError("no admissible transcription (all paths impossible)")
    wi, vi = divmod(flat, nv)
    w_seq = [wi]
    v_seq = [vi]
    for i in range(n - 1, 0, -1):
        code = int(backs[i - 1][wi, vi])
        wi, vi = divmod(code, nv)
        w_seq.append(wi)
        v_seq.append(vi)
    w_seq.reverse()
    v_seq.reverse()

    assignment = LatentAssignment(
        s=[1] * n,
        w=[voice.state_of(w) for w in w_seq],
        v_idx=v_seq[: n - 1] if n >= 2 else [],
    )
    taus = reconstruct_score_times(assignment)
    out_notes = []
    for i in range(n):
        st = assignment.w[i]
        tempo = float(values_v[v_seq[max(i - 1, 0)]]) if n >= 2 else math.exp(voice.u_ini)
        out_notes.append(
            TranscribedNote(
                onset_sec=notes[i].onset_sec,
                pitch=notes[i].pitch,
                voice=1,
                note_value=st.value,
                cluster_flag=st.flag,
                score_time=taus[i],
                tempo=tempo,
            )
        )
    return Transcription(notes=out_notes, log_prob=log_prob, model="note_hmm", info={})


# ---------------------------------------------------------------------------
# Metrical HMM


@dataclass
class MetricalParams:
    """Bar-position chain: states are onset positions within a fixed bar."""

    bar_ticks: int = DUPLE_BAR_TICKS
    initial: np.ndarray = None    # (B,) position distribution for the first note
    transition: np.ndarray = None  # (B, B) position bigrams; diagonal = chords
    u_ini: float = vm.DEFAULT_U_INI
    sigma_v_ini: float = vm.DEFAULT_SIGMA_V_INI
    sigma_v: float = vm.DEFAULT_SIGMA_V
    sigma_t: float = vm.DEFAULT_SIGMA_T
    lam: float = vm.DEFAULT_LAMBDA

    def __post_init__(self):
        b = self.bar_ticks
        if b < 1:
            raise ValueError("bar_ticks must be positive")
        if self.initial is None:
            self.initial = np.full(b, 1.0 / b)
        if self.transition is None:
            self.transition = np.full((b, b), 1.0 / b)
        self.initial = np.asarray(self.initial, dtype=float)
        self.transition = np.asarray(self.transition, dtype=float)
        self.validate()

    def validate(self):
        b = self.bar_ticks
        if b < 1:
            raise ValueError("bar_ticks must be positive")
        if self.initial.shape != (b,) or self.transition.shape != (b, b):
            raise ValueError("table shapes do not match bar_ticks")
        if not (np.all(np.isfinite(self.initial)) and np.all(np.isfinite(self.transition))):
            raise ValueError("probabilities must be finite")
        if np.any(self.initial < 0) or np.any(self.transition < 0):
            raise ValueError("probabilities must be non-negative")
        if abs(self.initial.sum() - 1.0) > 1e-6:
            raise ValueError("initial must sum to 1")
        if np.any(np.abs(self.transition.sum(axis=1) - 1.0) > 1e-6):
            raise ValueError("transition rows must sum to 1")
        for name in ("sigma_v_ini", "sigma_v", "sigma_t", "lam"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def train_metrical(
    corpus: Sequence[Sequence], bar_ticks: int, smoothing: float = 0.1
) -> MetricalParams:
    """Estimate bar-position tables from a score corpus.

    Positions are onsets modulo the bar over the merged note stream in
    canonical order; chords contribute diagonal transitions.
    """
    b = bar_ticks
    ini = np.full(b, smoothing)
    trans = np.full((b, b), smoothing)
    for piece in corpus:
        notes = sorted(piece, key=lambda x: (x.onset_tick, x.pitch))
        if not notes:
            continue
        pos = [x.onset_tick % b for x in notes]
        ini[pos[0]] += 1.0
        for a, c in zip(pos, pos[1:]):
            trans[a, c] += 1.0
    # positions never seen as a bigram source (possible at zero smoothing)
    # carry a uniform row rather than an undefined one
    row_sums = trans.sum(axis=1, keepdims=True)
    empty = row_sums[:, 0] == 0
    trans[empty] = 1.0 / b
    row_sums[empty] = 1.0
    if ini.sum() == 0:
        ini[:] = 1.0 / b
    return MetricalParams(
        bar_ticks=b,
        initial=ini / ini.sum(),
        transition=trans / row_sums,
    )


def _decode_metrical_one(
    params: MetricalParams, notes: Sequence[PerformanceNote], config: DecoderConfig
) -> Transcription:
    n = len(notes)
    b = params.bar_ticks
    grid = config.tempo_grid
    values_v = grid.values
    nv = grid.n
    t_ini, t_tr = _tempo_matrices(params, grid)
    ident = _identity_kernel(nv)
    ln_tr = _safe_log(params.transition)

    # Gaussian onset means for every implied value (b - b') mod B, per tempo.
    r_of = (np.arange(b)[None, :] - np.arange(b)[:, None]) % b  # (B', B)
    quarters = r_of / TICKS_PER_QUARTER
    gauss_mean = quarters[:, :, None] * values_v[None, None, :]  # (B', B, V')

    d = _safe_log(params.initial)[:, None] + (t_ini[None, :] if n >= 2 else 0.0)
    backs = []
    for i in range(1, n):
        dt = notes[i].onset_sec - notes[i - 1].onset_sec
        z = (dt - gauss_mean) / params.sigma_t
        e = -0.5 * z * z - math.log(params.sigma_t) - 0.5 * vm.LOG_2PI
        chord = -math.log(params.lam) - dt / params.lam if dt >= 0 else NEG_INF
        bi = np.arange(b)
        e[bi, bi, :] = chord
        cand = d[:, None, :] + ln_tr[:, :, None] + e  # (B', B, V')
        arg_b = cand.argmax(axis=0)  # (B, V')
        m1 = np.take_along_axis(cand, arg_b[None, :, :], axis=0)[0]
        tt = t_tr if i <= n - 2 else ident
        c = m1[:, :, None] + tt[None, :, :]  # (B, V', V)
        v_star = c.argmax(axis=1)  # (B, V)
        m2 = np.take_along_axis(c, v_star[:, None, :], axis=1)[:, 0, :]
        b_star = np.take_along_axis(arg_b, v_star, axis=1)
        backs.append((b_star * nv + v_star).astype(np.int32))
        d = m2

    flat = int(d.argmax())
    log_prob = float(d.flat[flat])
    if not math.isfinite(log_prob):
        raise DecodeError("no admissible transcription (all paths impossible)")
    bi_, vi = divmod(flat, nv)
    b_seq = [bi_]
    v_seq = [vi]
    for i in range(n - 1, 0, -1):
        code = int(backs[i - 1][bi_, vi])
        bi_, vi = divmod(code, nv)
        b_seq.append(bi_)
        v_seq.append(vi)
    b_seq.reverse()
    v_seq.reverse()

    out_notes = []
    tau = 0
    for i in range(n):
        if i < n - 1:
            value = (b_seq[i + 1] - b_seq[i]) % b
            flag = 0 if value == 0 else 1
        else:
            value, flag = 0, 1
        tempo = float(values_v[v_seq[max(i - 1, 0)]]) if n >= 2 else math.exp(params.u_ini)
        out_notes.append(
            TranscribedNote(
                onset_sec=notes[i].onset_sec,
                pitch=notes[i].pitch,
                voice=1,
                note_value=value,
                cluster_flag=flag,
                score_time=tau,
                tempo=tempo,
            )
        )
        if i < n - 1:
            tau += value
    return Transcription(
        notes=out_notes,
        log_prob=log_prob,
        model="metrical_hmm",
        info={"bar_ticks": b, "first_bar_position": b_seq[0]},
    )


def decode_metrical_hmm(
    params: MetricalParams | Sequence[MetricalParams],
    notes: Sequence[PerformanceNote],
    config: DecoderConfig,
) -> Transcription:
    """Metrical transcription; with several parameter sets (e.g. duple and
    triple bars) the highest-scoring decode wins."""
    if not notes:
        raise DecodeError("cannot transcribe an empty performance")
    if not is_canonical(notes):
        raise DecodeError("performance must be in canonical order")
    options = [params] if isinstance(params, MetricalParams) else list(params)
    if not options:
        raise DecodeError("need at least one metrical parameter set")
    for p in options:
        p.validate()
    best: Transcription | None = None
    for p in options:
        trial = _decode_metrical_one(p, notes, config)
        if best is None or trial.log_prob > best.log_prob:
            best = trial
    return best
