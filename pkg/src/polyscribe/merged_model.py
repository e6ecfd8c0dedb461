"""Two voice HMMs merged into one output stream.

Each performance note is emitted by one of two voices chosen with a
context-dependent Bernoulli weight alpha.  Only the chosen voice advances
its cluster and pitch chains; the other voice's components are frozen by a
Kronecker delta.  Both voices share the log-tempo random walk.

The voice that does not own the first note still draws an initial cluster
state.  That state acts as a phantom note at score time zero anchored at
the first observed onset: the voice's first real note transitions out of
it, which is how the score-time offset between the two voices' entries is
generated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import PITCH_MAX, PITCH_MIN, ClusterState, NoteValueGrid
from . import voice_model as vm
from .voice_model import NEG_INF, VoiceHmmParams

N_CONTEXTS = 4
SPAN_THRESHOLD = 15
SOUNDING_FALLBACK_SEC = 2.0


@dataclass
class MergedModelParams:
    voice1: VoiceHmmParams = None
    voice2: VoiceHmmParams = None
    # alpha[c, s-1] = P(voice s | pitch context c); row 0 is the context-free
    # weight used for generation, rows 1-3 apply at recognition time.
    alpha: np.ndarray = None
    span_threshold: int = SPAN_THRESHOLD

    def __post_init__(self):
        if self.voice1 is None:
            self.voice1 = VoiceHmmParams(mu_p=54.0)
        if self.voice2 is None:
            self.voice2 = VoiceHmmParams(grid=self.voice1.grid, mu_p=70.0)
        if self.alpha is None:
            self.alpha = np.array([[0.5, 0.5], [0.8, 0.2], [0.2, 0.8], [0.5, 0.5]])
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.validate()

    def validate(self):
        if self.alpha.shape != (N_CONTEXTS, 2):
            raise ValueError("alpha must be a 4x2 table")
        if np.any(self.alpha < 0) or np.any(np.abs(self.alpha.sum(axis=1) - 1.0) > 1e-6):
            raise ValueError("alpha rows must be distributions")
        if self.voice1.grid != self.voice2.grid:
            raise ValueError("voices must share one note value grid")
        for name in ("u_ini", "sigma_v_ini", "sigma_v"):
            if getattr(self.voice1, name) != getattr(self.voice2, name):
                raise ValueError(f"tempo parameter {name} must be shared by both voices")
        if self.span_threshold < 0:
            raise ValueError("span_threshold must be non-negative")

    @property
    def grid(self) -> NoteValueGrid:
        return self.voice1.grid

    def voice(self, s: int) -> VoiceHmmParams:
        if s == 1:
            return self.voice1
        if s == 2:
            return self.voice2
        raise ValueError(f"voice must be 1 or 2, got {s}")


def default_merged_params(grid: NoteValueGrid | None = None) -> MergedModelParams:
    grid = grid or NoteValueGrid()
    return MergedModelParams(
        voice1=VoiceHmmParams(grid=grid, mu_p=54.0),
        voice2=VoiceHmmParams(grid=grid, mu_p=70.0),
    )


# ---------------------------------------------------------------------------
# Pitch context of each note (recognition-time voice prior)


def effective_offsets(notes) -> list:
    """Offsets used for the sounding test; missing ones fall back to the next
    onset of the same pitch or a fixed horizon, whichever comes first."""
    out = []
    for i, n in enumerate(notes):
        if n.offset_sec is not None:
            out.append(n.offset_sec)
            continue
        off = n.onset_sec + SOUNDING_FALLBACK_SEC
        for m in notes[i + 1 :]:
            if m.onset_sec >= off:
                break
            if m.pitch == n.pitch and m.onset_sec > n.onset_sec:
                off = m.onset_sec
                break
        out.append(off)
    return out


def pitch_span_contexts(onsets, pitches, offsets, span_threshold: int) -> np.ndarray:
    """Context index per note: bit 1 = wide span below, bit 0 = wide span above.

    A note m sounds at time x when onset_m <= x < offset_m; the span is
    measured against everything sounding at the note's own onset.  Works for
    any time unit as long as onsets and offsets agree on it.
    """
    ctx = np.zeros(len(onsets), dtype=np.int64)
    for i in range(len(onsets)):
        lo = hi = pitches[i]
        for j in range(len(onsets)):
            if j == i:
                continue
            if onsets[j] > onsets[i]:
                break
            if onsets[j] <= onsets[i] < offsets[j]:
                lo = min(lo, pitches[j])
                hi = max(hi, pitches[j])
        ctx[i] = 2 * (pitches[i] - lo > span_threshold) + (hi - pitches[i] > span_threshold)
    return ctx


def alpha_contexts(notes, span_threshold: int = SPAN_THRESHOLD) -> np.ndarray:
    """Pitch contexts of a canonical performance."""
    offs = effective_offsets(notes)
    return pitch_span_contexts(
        [n.onset_sec for n in notes], [n.pitch for n in notes], offs, span_threshold
    )


# ---------------------------------------------------------------------------
# Full merged state and its transition kernel


@dataclass(frozen=True)
class MergedState:
    """State after one note: which voice emitted, both voices' cluster
    states, their last pitches/onsets (pitch None = not yet emitted), and
    the tempo for the interval that starts here."""

    s: int
    w1: ClusterState
    w2: ClusterState
    p1: int | None
    t1: float
    p2: int | None
    t2: float
    v: float


def _clamp_pitch(p: int) -> int:
    return min(max(p, PITCH_MIN), PITCH_MAX)


def merged_transition_log_prob(
    params: MergedModelParams, prev: MergedState, new: MergedState, context: int = 0
) -> float:
    """log P(new | prev) for one emitted note; -inf when the frozen voice moved."""
    s = new.s
    if s not in (1, 2):
        raise ValueError("voice must be 1 or 2")
    if s == 1:
        frozen_same = (new.w2, new.p2, new.t2) == (prev.w2, prev.p2, prev.t2)
        w_prev, p_prev, t_prev = prev.w1, prev.p1, prev.t1
        w, p, t = new.w1, new.p1, new.t1
    else:
        frozen_same = (new.w1, new.p1, new.t1) == (prev.w1, prev.p1, prev.t1)
        w_prev, p_prev, t_prev = prev.w2, prev.p2, prev.t2
        w, p, t = new.w2, new.p2, new.t2
    if not frozen_same:
        return NEG_INF
    if p is None:
        raise ValueError("the emitting voice must carry the new note's pitch")
    voice = params.voice(s)
    total = math.log(params.alpha[context, s - 1]) if params.alpha[context, s - 1] > 0 else NEG_INF
    total += vm.tempo_transition_log_prob(voice, prev.v, new.v)
    total += vm.cluster_transition_log_prob(voice, w_prev, w)
    if p_prev is None:
        total += vm.pitch_initial_log_prob(voice, _clamp_pitch(p))
    else:
        total += vm.pitch_transition_log_prob(voice, _clamp_pitch(p_prev), _clamp_pitch(p))
    total += vm.onset_log_prob(voice, t, t_prev, prev.v, w_prev)
    return total


# ---------------------------------------------------------------------------
# Complete-data log probability of a latent assignment


@dataclass
class LatentAssignment:
    """One explanation of a performance: per-note voice and cluster state,
    per-interval tempo grid index, and the phantom initial state of the
    voice that does not own the first note (None if that voice never
    appears or the phantom is to be maximized over)."""

    s: list
    w: list
    v_idx: list | None
    pending: ClusterState | None = None

    def __post_init__(self):
        if len(self.s) != len(self.w):
            raise ValueError("voice and state sequences must have equal length")
        if (
            self.v_idx is not None
            and len(self.s) >= 2
            and len(self.v_idx) != len(self.s) - 1
        ):
            raise ValueError("need one tempo per inter-onset interval")
        for s in self.s:
            if s not in (1, 2):
                raise ValueError("voices must be 1 or 2")


def complete_data_log_prob(
    params: MergedModelParams,
    notes,
    assignment: LatentAssignment,
    tempo_values: np.ndarray,
    contexts: np.ndarray | None = None,
) -> float:
    """Joint log density of the observed notes and the latent assignment.

    When the assignment's phantom state is None but a second voice appears,
    the phantom is maximized over, matching what a decoder would report.
    """
    n = len(notes)
    if len(assignment.s) != n:
        raise ValueError("assignment length does not match the performance")
    if assignment.v_idx is None and n >= 2:
        raise ValueError("assignment carries no tempo grid path")
    if contexts is None:
        contexts = alpha_contexts(notes, params.span_threshold)
    tempo_values = np.asarray(tempo_values, dtype=float)

    s1 = assignment.s[0]
    first = params.voice(s1)
    a = params.alpha[contexts[0], s1 - 1]
    total = math.log(a) if a > 0 else NEG_INF
    total += vm.cluster_initial_log_prob(first, assignment.w[0])
    total += vm.pitch_initial_log_prob(first, _clamp_pitch(notes[0].pitch))
    if n >= 2:
        total += vm.tempo_initial_log_prob(first, tempo_values[assignment.v_idx[0]])

    other = 2 if s1 == 1 else 1
    pending = assignment.pending
    if pending is not None:
        total += vm.cluster_initial_log_prob(params.voice(other), pending)

    # last emitted (state, pitch, onset) per voice; the phantom anchors at
    # the first observed onset with the initial pitch law
    last = {s1: (assignment.w[0], notes[0].pitch, notes[0].onset_sec)}
    if pending is not None:
        last[other] = (pending, None, notes[0].onset_sec)

    for i in range(1, n):
        s = assignment.s[i]
        voice = params.voice(s)
        v_prev = tempo_values[assignment.v_idx[i - 1]]
        a = params.alpha[contexts[i], s - 1]
        total += math.log(a) if a > 0 else NEG_INF
        if i <= n - 2:
            total += vm.tempo_transition_log_prob(
                voice, v_prev, tempo_values[assignment.v_idx[i]]
            )
        note = notes[i]
        if s not in last:
            # phantom left unspecified: report the best completion
            best = NEG_INF
            for idx in range(voice.n_states):
                w0 = voice.state_of(idx)
                cand = (
                    vm.cluster_initial_log_prob(voice, w0)
                    + vm.cluster_transition_log_prob(voice, w0, assignment.w[i])
                    + vm.onset_log_prob(voice, note.onset_sec, notes[0].onset_sec, v_prev, w0)
                )
                best = max(best, cand)
            total += best + vm.pitch_initial_log_prob(voice, _clamp_pitch(note.pitch))
        else:
            w_prev, p_prev, t_prev = last[s]
            total += vm.cluster_transition_log_prob(voice, w_prev, assignment.w[i])
            if p_prev is None:
                total += vm.pitch_initial_log_prob(voice, _clamp_pitch(note.pitch))
            else:
                total += vm.pitch_transition_log_prob(
                    voice, _clamp_pitch(p_prev), _clamp_pitch(note.pitch)
                )
            total += vm.onset_log_prob(voice, note.onset_sec, t_prev, v_prev, w_prev)
        last[s] = (assignment.w[i], note.pitch, note.onset_sec)

    if pending is None and other not in last:
        # the second voice never emitted: its unspecified initial draw is
        # maximized over, matching what a decoder reports for such a path
        other_voice = params.voice(other)
        total += max(
            vm.cluster_initial_log_prob(other_voice, other_voice.state_of(idx))
            for idx in range(other_voice.n_states)
        )
    return total
