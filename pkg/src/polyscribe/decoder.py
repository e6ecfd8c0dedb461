"""Viterbi decoding of performances under the merged two-voice model.

The search state after each note is (s, h, w1, w2, v):

  s   voice that emitted the note,
  h   how far back the other voice's most recent note lies (1 = previous
      note; 0 is a sentinel meaning no other-voice note has appeared yet,
      in which case the other voice still sits on its phantom initial
      state anchored at the first observed onset),
  w1, w2  cluster states of both voices,
  v   tempo grid index for the interval starting at this note.

h is capped at n_h; continuation paths that would push a finite h beyond
the cap are pruned (the sentinel is exempt, it costs one state).  With
n_h >= number of notes - 1 the search is exact.

Onset emissions use the tempo of the previous state, and the tempo walks
one grid transition per note except at the final note, which keeps its
tempo so that a performance of N notes carries exactly N - 1 tempo
variables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    PITCH_MAX,
    PITCH_MIN,
    ClusterState,
    Transcription,
    TranscribedNote,
    is_canonical,
)
from . import voice_model as vm
from .merged_model import (
    LatentAssignment,
    MergedModelParams,
    alpha_contexts,
    complete_data_log_prob,
)
from .voice_model import NEG_INF

PURE = 0  # sentinel h index: same-voice run all the way from the first note


class DecodeError(RuntimeError):
    pass


@dataclass(frozen=True)
class TempoGrid:
    """Log-equally spaced tempo candidates in seconds per quarter note."""

    v_min: float = vm.DEFAULT_V_MIN
    v_max: float = vm.DEFAULT_V_MAX
    n: int = 50

    def __post_init__(self):
        if self.v_min <= 0 or self.v_max < self.v_min:
            raise ValueError("need 0 < v_min <= v_max")
        if self.n < 1:
            raise ValueError("tempo grid needs at least one point")
        if self.n == 1 and self.v_max != self.v_min:
            raise ValueError("a single-point grid requires v_min == v_max")

    @property
    def values(self) -> np.ndarray:
        if self.n == 1:
            return np.array([self.v_min])
        ratio = self.v_max / self.v_min
        return self.v_min * ratio ** (np.arange(self.n) / (self.n - 1))

    @property
    def log_values(self) -> np.ndarray:
        return np.log(self.values)


def build_tempo_grid(v_min=vm.DEFAULT_V_MIN, v_max=vm.DEFAULT_V_MAX, n=50) -> TempoGrid:
    return TempoGrid(v_min, v_max, n)


@dataclass
class DecoderConfig:
    tempo_grid: TempoGrid = field(default_factory=TempoGrid)
    n_h: int = 30
    beam_width: int | None = None

    def __post_init__(self):
        if self.n_h < 1:
            raise ValueError("n_h must be at least 1")
        if self.beam_width is not None and self.beam_width < 1:
            raise ValueError("beam_width must be positive")


# ---------------------------------------------------------------------------
# Shared relaxation helpers


def _tempo_matrices(voice, grid: TempoGrid):
    u = grid.log_values
    t_ini = -0.5 * ((u - voice.u_ini) / voice.sigma_v_ini) ** 2 - math.log(
        voice.sigma_v_ini
    ) - 0.5 * vm.LOG_2PI
    z = (u[None, :] - u[:, None]) / voice.sigma_v
    t_tr = -0.5 * z * z - math.log(voice.sigma_v) - 0.5 * vm.LOG_2PI
    return t_ini, t_tr


def _identity_kernel(n: int) -> np.ndarray:
    out = np.full((n, n), NEG_INF)
    np.fill_diagonal(out, 0.0)
    return out


def _maxplus_pair(m, xi, tt):
    """max over (w', v') of m[..., w', v'] + xi[w', w] + tt[v', v].

    Returns (out[..., w, v], w_star[..., w, v], v_star[..., w, v]).
    """
    a = m[..., :, :, None] + xi[:, None, :]          # (..., W', V', W)
    arg_w = a.argmax(axis=-3)                        # (..., V', W)
    s1 = np.take_along_axis(a, arg_w[..., None, :, :], axis=-3)
    s1 = np.squeeze(s1, axis=-3)                     # (..., V', W)
    c = s1[..., :, :, None] + tt[:, None, :]         # (..., V', W, V)
    v_star = c.argmax(axis=-3)                       # (..., W, V)
    out = np.take_along_axis(c, v_star[..., None, :, :], axis=-3)
    out = np.squeeze(out, axis=-3)
    arg_w_t = np.swapaxes(arg_w, -2, -1)             # (..., W, V')
    w_star = np.take_along_axis(arg_w_t, v_star, axis=-1)
    return out, w_star, v_star


def _onset_grid(voice, dts, v_values) -> np.ndarray:
    """(len(dts), 2R, N_v) onset log densities; dt may be NaN for invalid rows."""
    dts = np.asarray(dts, dtype=float)
    r = len(voice.grid)
    out = np.full((len(dts), 2 * r, len(v_values)), NEG_INF)
    valid = ~np.isnan(dts)
    chordal = np.where(dts >= 0, -math.log(voice.lam) - dts / voice.lam, NEG_INF)
    out[:, 0::2, :] = np.where(valid, chordal, NEG_INF)[:, None, None]
    quarters = np.array(voice.grid.values, dtype=float) / voice.grid.ticks_per_quarter
    means = quarters[:, None] * np.asarray(v_values)[None, :]
    z = (np.where(valid, dts, 0.0)[:, None, None] - means[None, :, :]) / voice.sigma_t
    gauss = -0.5 * z * z - math.log(voice.sigma_t) - 0.5 * vm.LOG_2PI
    out[:, 1::2, :] = np.where(valid[:, None, None], gauss, NEG_INF)
    return out


def _clamp(p: int) -> int:
    return min(max(p, PITCH_MIN), PITCH_MAX)


def _pitch_tr(voice, p_prev, p) -> float:
    return vm.pitch_transition_log_prob(voice, _clamp(p_prev), _clamp(p))


def _pitch_ini(voice, p) -> float:
    return vm.pitch_initial_log_prob(voice, _clamp(p))


def _log_alpha(params, c, s) -> float:
    a = params.alpha[c, s - 1]
    return math.log(a) if a > 0 else NEG_INF


# ---------------------------------------------------------------------------
# Merged decode


def decode_merged(params: MergedModelParams, notes, config: DecoderConfig) -> Transcription:
    notes = list(notes)
    if len(notes) == 0:
        raise DecodeError("empty performance")
    if not is_canonical(notes):
        raise DecodeError("performance must be canonical (sorted by onset, then pitch)")
    n = len(notes)
    grid_v = config.tempo_grid
    values_v = grid_v.values
    nv = grid_v.n
    nh = config.n_h
    nhp = nh + 1
    w_count = params.voice1.n_states
    contexts = alpha_contexts(notes, params.span_threshold)
    onsets = [x.onset_sec for x in notes]
    pitches = [x.pitch for x in notes]

    xi = [None, vm.cluster_transition_log_matrix(params.voice1),
          vm.cluster_transition_log_matrix(params.voice2)]
    xi_ini = [None, vm.cluster_initial_log_vector(params.voice1),
              vm.cluster_initial_log_vector(params.voice2)]
    t_ini, t_tr = _tempo_matrices(params.voice1, grid_v)
    t_id = _identity_kernel(nv)

    # D[s-1, h, w1, w2, v]
    d = np.full((2, nhp, w_count, w_count, nv), NEG_INF)
    for s in (1, 2):
        own = xi_ini[s] + _log_alpha(params, contexts[0], s) + _pitch_ini(params.voice(s), pitches[0])
        other = xi_ini[3 - s]
        if s == 1:
            block = own[:, None, None] + other[None, :, None]
        else:
            block = other[:, None, None] + own[None, :, None]
        if n >= 2:
            block = block + t_ini[None, None, :]
        else:
            block = np.broadcast_to(block, (w_count, w_count, nv)).copy()
        d[s - 1, PURE] = block

    backptrs = []
    same_targets = np.array([PURE] + list(range(2, nh + 1)))
    src_h = np.arange(0, nh)  # paired with same_targets

    for i in range(1, n):
        last_step = i == n - 1
        tt = t_id if last_step else t_tr
        d_new = np.full_like(d, NEG_INF)
        bp = np.zeros(d.shape, dtype=np.int32)
        for s in (1, 2):
            voice = params.voice(s)
            ln_a = _log_alpha(params, contexts[i], s)
            # --- same-voice continuation: h 0->0, h'->h'+1 (h'=nh pruned)
            e_same = _onset_grid(voice, [onsets[i] - onsets[i - 1]], values_v)[0]
            p_same = _pitch_tr(voice, pitches[i - 1], pitches[i])
            src = d[s - 1][src_h]                       # (nh, W1, W2, V)
            if s == 1:
                m = src.transpose(0, 2, 1, 3)           # (nh, WO, W', V)
            else:
                m = src
            out, w_star, v_star = _maxplus_pair(m + e_same[None, None, :, :], xi[s], tt)
            out = out + (ln_a + p_same)
            hprime = src_h[:, None, None, None]
            packed = ((hprime * w_count + w_star) * nv + v_star).astype(np.int32)
            if s == 1:
                out = out.transpose(0, 2, 1, 3)
                packed = packed.transpose(0, 2, 1, 3)
            d_new[s - 1][same_targets] = out
            bp[s - 1][same_targets] = packed
            # --- switch from the other voice: target h = 1
            dts = np.empty(nhp)
            p_sw = np.empty(nhp)
            dts[PURE] = onsets[i] - onsets[0]
            p_sw[PURE] = _pitch_ini(voice, pitches[i])
            for hp in range(1, nhp):
                a_idx = i - 1 - hp
                if a_idx < 0:
                    dts[hp] = math.nan
                    p_sw[hp] = NEG_INF
                else:
                    dts[hp] = onsets[i] - onsets[a_idx]
                    p_sw[hp] = _pitch_tr(voice, pitches[a_idx], pitches[i])
            e_sw = _onset_grid(voice, dts, values_v)    # (nhp, W', V)
            src_o = d[2 - s]                            # other voice's slice
            if s == 1:
                m_sw = src_o.transpose(0, 2, 1, 3)
            else:
                m_sw = src_o
            t_all = m_sw + e_sw[:, None, :, :] + p_sw[:, None, None, None]
            arg_h = t_all.argmax(axis=0)                # (WO, W', V)
            g = np.take_along_axis(t_all, arg_h[None], axis=0)[0]
            out, w_star, v_star = _maxplus_pair(g, xi[s], tt)
            wo_idx = np.arange(w_count)[:, None, None]
            h_star = arg_h[wo_idx, w_star, v_star]
            out = out + ln_a
            packed = ((h_star * w_count + w_star) * nv + v_star).astype(np.int32)
            if s == 1:
                out = out.transpose(1, 0, 2)
                packed = packed.transpose(1, 0, 2)
            d_new[s - 1, 1] = out
            bp[s - 1, 1] = packed
        if config.beam_width is not None:
            flat = d_new.ravel()
            finite = np.isfinite(flat)
            if finite.sum() > config.beam_width:
                kth = np.partition(flat[finite], -config.beam_width)[-config.beam_width]
                d_new[d_new < kth] = NEG_INF
        backptrs.append(bp)
        d = d_new

    flat_best = int(np.argmax(d))
    best = d.ravel()[flat_best]
    if not np.isfinite(best):
        raise DecodeError("no admissible path; raise n_h or widen the tempo grid")
    state = np.unravel_index(flat_best, d.shape)
    path = [state]
    for i in range(n - 1, 0, -1):
        si, hi, i1, i2, vi = path[-1]
        code = int(backptrs[i - 1][si, hi, i1, i2, vi])
        v_prev = code % nv
        w_prev = (code // nv) % w_count
        h_prev = code // (nv * w_count)
        s_prev = 1 - si if hi == 1 else si
        # the advancing chain at this step is voice si's; its pre-transition
        # state replaces the own component, the other voice was frozen
        if si == 0:
            prev = (s_prev, h_prev, w_prev, i2, v_prev)
        else:
            prev = (s_prev, h_prev, i1, w_prev, v_prev)
        path.append(prev)
    path.reverse()
    return _assemble(params, notes, path, values_v, best, contexts, "merged")


def _assemble(params, notes, path, values_v, log_prob, contexts, model, info=None):
    n = len(notes)
    voice_of = lambda st: st[0] + 1
    own_w = lambda st: st[2] if st[0] == 0 else st[3]
    grid = params.grid
    s_seq = [voice_of(st) for st in path]
    w_seq = [params.voice(s_seq[i]).state_of(own_w(path[i])) for i in range(n)]
    v_idx = [int(path[i][4]) for i in range(n - 1)]
    other0 = path[0][3] if s_seq[0] == 1 else path[0][2]
    pending = params.voice(3 - s_seq[0]).state_of(int(other0))
    assignment = LatentAssignment(s=s_seq, w=w_seq, v_idx=v_idx, pending=pending)
    taus = reconstruct_score_times(assignment)
    out_notes = []
    for i in range(n):
        if n >= 2:
            tempo = float(values_v[v_idx[i - 1 if i > 0 else 0]])
        else:
            tempo = math.exp(params.voice1.u_ini)
        out_notes.append(
            TranscribedNote(
                onset_sec=notes[i].onset_sec,
                pitch=notes[i].pitch,
                voice=s_seq[i],
                note_value=w_seq[i].value,
                cluster_flag=w_seq[i].flag,
                score_time=taus[i],
                tempo=tempo,
            )
        )
    full_info = {"assignment": assignment}
    if info:
        full_info.update(info)
    return Transcription(notes=out_notes, log_prob=float(log_prob), model=model, info=full_info)


def reconstruct_score_times(assignment: LatentAssignment) -> list:
    """Integer score time (ticks) of every note.

    The first note's voice starts at zero.  The other voice starts at the
    phantom state's contribution flag*value, which is zero when the phantom
    is chordal with the opening."""
    s0 = assignment.s[0]
    cum = {s0: 0, 3 - s0: 0}
    if assignment.pending is not None:
        cum[3 - s0] = assignment.pending.flag * assignment.pending.value
    taus = []
    for s, w in zip(assignment.s, assignment.w):
        taus.append(cum[s])
        cum[s] += w.flag * w.value
    return taus


# ---------------------------------------------------------------------------
# Cascade decode: voices first from pitches alone, then rhythm


def decode_cascade(params: MergedModelParams, notes, config: DecoderConfig) -> Transcription:
    notes = list(notes)
    if len(notes) == 0:
        raise DecodeError("empty performance")
    if not is_canonical(notes):
        raise DecodeError("performance must be canonical (sorted by onset, then pitch)")
    n = len(notes)
    contexts = alpha_contexts(notes, params.span_threshold)
    pitches = [x.pitch for x in notes]
    s_seq = _voice_stage(params, pitches, contexts, config.n_h)
    return _rhythm_stage(params, notes, s_seq, contexts, config)


def _voice_stage(params, pitches, contexts, nh):
    """Viterbi over (s, h) using only the voice prior and the pitch chains."""
    n = len(pitches)
    nhp = nh + 1
    d = np.full((2, nhp), NEG_INF)
    for s in (1, 2):
        d[s - 1, PURE] = _log_alpha(params, contexts[0], s) + _pitch_ini(
            params.voice(s), pitches[0]
        )
    bps = []
    for i in range(1, n):
        d_new = np.full((2, nhp), NEG_INF)
        bp = np.zeros((2, nhp), dtype=np.int64)
        for s in (1, 2):
            voice = params.voice(s)
            ln_a = _log_alpha(params, contexts[i], s)
            p_same = _pitch_tr(voice, pitches[i - 1], pitches[i])
            d_new[s - 1, PURE] = d[s - 1, PURE] + ln_a + p_same
            bp[s - 1, PURE] = PURE
            for h in range(2, nhp):
                d_new[s - 1, h] = d[s - 1, h - 1] + ln_a + p_same
                bp[s - 1, h] = h - 1
            best, best_h = NEG_INF, 0
            for hp in range(nhp):
                a_idx = i - 1 - hp
                if hp == PURE:
                    p_sw = _pitch_ini(voice, pitches[i])
                elif a_idx < 0:
                    continue
                else:
                    p_sw = _pitch_tr(voice, pitches[a_idx], pitches[i])
                cand = d[2 - s, hp] + p_sw
                if cand > best:
                    best, best_h = cand, hp
            d_new[s - 1, 1] = best + ln_a
            bp[s - 1, 1] = best_h
        bps.append(bp)
        d = d_new
    si, hi = np.unravel_index(int(np.argmax(d)), d.shape)
    si, hi = int(si), int(hi)
    s_seq = [si + 1]
    for i in range(n - 1, 0, -1):
        hp = int(bps[i - 1][si, hi])
        if hi == 1:
            si = 1 - si
        s_seq.append(si + 1)
        hi = hp
    s_seq.reverse()
    return s_seq


def _rhythm_stage(params, notes, s_seq, contexts, config):
    """Coupled-tempo note value decode with the voice labels fixed."""
    n = len(notes)
    grid_v = config.tempo_grid
    values_v = grid_v.values
    nv = grid_v.n
    w_count = params.voice1.n_states
    onsets = [x.onset_sec for x in notes]
    xi = [None, vm.cluster_transition_log_matrix(params.voice1),
          vm.cluster_transition_log_matrix(params.voice2)]
    xi_ini = [None, vm.cluster_initial_log_vector(params.voice1),
              vm.cluster_initial_log_vector(params.voice2)]
    t_ini, t_tr = _tempo_matrices(params.voice1, grid_v)
    t_id = _identity_kernel(nv)

    prev_idx = []  # last index of the same voice, -1 = phantom
    seen = {}
    for i, s in enumerate(s_seq):
        prev_idx.append(seen.get(s, -1))
        seen[s] = i

    s0 = s_seq[0]
    d = xi_ini[s0][:, None, None] if s0 == 1 else xi_ini[s0][None, :, None]
    d = d + (xi_ini[3 - s0][None, :, None] if s0 == 1 else xi_ini[3 - s0][:, None, None])
    d = d + (t_ini[None, None, :] if n >= 2 else 0.0)
    d = np.broadcast_to(d, (w_count, w_count, nv)).copy()

    bps = []
    for i in range(1, n):
        s = s_seq[i]
        voice = params.voice(s)
        tt = t_id if i == n - 1 else t_tr
        anchor = prev_idx[i]
        dt = onsets[i] - onsets[anchor if anchor >= 0 else 0]
        e = _onset_grid(voice, [dt], values_v)[0]
        m = d.transpose(1, 0, 2) if s == 1 else d
        out, w_star, v_star = _maxplus_pair(m + e[None, :, :], xi[s], tt)
        packed = (w_star * nv + v_star).astype(np.int64)
        if s == 1:
            out = out.transpose(1, 0, 2)
            packed = packed.transpose(1, 0, 2)
        bps.append(packed)
        d = out

    flat_best = int(np.argmax(d))
    if not np.isfinite(d.ravel()[flat_best]):
        raise DecodeError("no admissible rhythm for the fixed voice labels")
    i1, i2, vi = np.unravel_index(flat_best, d.shape)
    states = [(int(i1), int(i2), int(vi))]
    for i in range(n - 1, 0, -1):
        i1, i2, vi = states[-1]
        code = int(bps[i - 1][i1, i2, vi])
        v_prev = code % nv
        w_prev = code // nv
        if s_seq[i] == 1:
            states.append((w_prev, i2, v_prev))
        else:
            states.append((i1, w_prev, v_prev))
    states.reverse()

    w_seq = [
        params.voice(s_seq[i]).state_of(states[i][0] if s_seq[i] == 1 else states[i][1])
        for i in range(n)
    ]
    v_idx = [states[i][2] for i in range(n - 1)]
    pending = params.voice(3 - s0).state_of(states[0][1] if s0 == 1 else states[0][0])
    assignment = LatentAssignment(s=list(s_seq), w=w_seq, v_idx=v_idx, pending=pending)
    log_prob = complete_data_log_prob(params, notes, assignment, values_v, contexts)
    taus = reconstruct_score_times(assignment)
    out_notes = [
        TranscribedNote(
            onset_sec=notes[i].onset_sec,
            pitch=notes[i].pitch,
            voice=s_seq[i],
            note_value=w_seq[i].value,
            cluster_flag=w_seq[i].flag,
            score_time=taus[i],
            tempo=float(values_v[v_idx[i - 1 if i > 0 else 0]]) if n >= 2
            else math.exp(params.voice1.u_ini),
        )
        for i in range(n)
    ]
    return Transcription(
        notes=out_notes,
        log_prob=float(log_prob),
        model="cascade",
        info={"assignment": assignment},
    )
