"""Generative sampling from the two-voice performance model.

``sample_merged`` draws a random performance together with its ground-truth
latent assignment and score; ``make_polyrhythm_suite`` renders benchmark sets
of cross-rhythm pieces (three-against-two, four-against-three) with
model-style timing noise and tempo drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    PerformanceNote,
    ScoreNote,
    TICKS_PER_QUARTER,
    TranscribedNote,
    Transcription,
    transcription_to_score_notes,
)
from .decoder import TempoGrid, _tempo_matrices
from .merged_model import LatentAssignment, MergedModelParams, complete_data_log_prob
from .voice_model import (
    DEFAULT_LAMBDA,
    DEFAULT_SIGMA_T,
    DEFAULT_SIGMA_V,
    PITCH_MIN,
    VoiceHmmParams,
    cluster_initial_log_vector,
    cluster_transition_log_matrix,
    pitch_initial_log_vector,
    pitch_transition_log_matrix,
)

__all__ = ["SampleResult", "sample_merged", "make_polyrhythm_suite", "POLYRHYTHM_KINDS"]


@dataclass
class SampleResult:
    """A sampled performance with its ground truth.

    Iterating yields (performance, assignment, score).  ``truth`` carries the
    same information row-aligned with the performance as a transcription.
    """

    performance: list
    assignment: LatentAssignment | None
    score: list
    truth: Transcription
    info: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.performance, self.assignment, self.score))


def _normalized(log_weights: np.ndarray) -> np.ndarray:
    w = np.exp(log_weights - log_weights.max())
    return w / w.sum()


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


class _VoiceSampler:
    """Cached sampling tables for one voice."""

    def __init__(self, voice: VoiceHmmParams, rng: np.random.Generator):
        self.voice = voice
        self.rng = rng
        self.xi_ini = _normalized(cluster_initial_log_vector(voice))
        xi = cluster_transition_log_matrix(voice)
        self.xi_rows = [_normalized(row) for row in xi]
        self.pitch_ini = _normalized(pitch_initial_log_vector(voice))
        ptr = pitch_transition_log_matrix(voice)
        self.pitch_rows = [_normalized(row) for row in ptr]

    def draw_initial_state(self) -> int:
        return int(self.rng.choice(len(self.xi_ini), p=self.xi_ini))

    def draw_next_state(self, w_prev: int) -> int:
        return int(self.rng.choice(len(self.xi_ini), p=self.xi_rows[w_prev]))

    def draw_pitch(self, p_prev: int | None) -> int:
        if p_prev is None:
            row = self.pitch_ini
        else:
            row = self.pitch_rows[p_prev - PITCH_MIN]
        return PITCH_MIN + int(self.rng.choice(len(row), p=row))

    def draw_onset(self, t_prev: float, w_prev: int, tempo: float) -> float:
        state = self.voice.state_of(w_prev)
        if state.flag == 0:
            return t_prev + self.rng.exponential(self.voice.lam)
        mean = self.voice.grid.quarters(state.value) * tempo
        return t_prev + mean + self.rng.normal(0.0, self.voice.sigma_t)


def sample_merged(
    params: MergedModelParams,
    n_notes: int,
    seed,
    tempo_grid: TempoGrid | None = None,
    start_time: float = 0.0,
) -> SampleResult:
    """Sample a performance of ``n_notes`` notes with its ground truth.

    Voices are drawn per note from the base (context-free) voice
    probabilities; only the chosen voice's cluster state, pitch, and clock
    advance, while the shared log-tempo walks.  When ``tempo_grid`` is given
    the tempo walk is sampled on that grid (transition rows are the
    grid-restricted, renormalized walk kernel) so the drawn trajectory is
    representable by a decoder using the same grid; otherwise the walk is
    continuous.

    The result is re-canonicalized (noise can reorder nearly simultaneous
    notes); the assignment and truth rows follow the reorder.  When the
    order was already canonical and the walk was grid-sampled, ``truth``'s
    log_prob is the exact complete-data log probability; otherwise NaN.
    ``seed`` may be an integer or a ``numpy.random.Generator``.
    """
    if n_notes < 1:
        raise ValueError("n_notes must be >= 1")
    params.validate()
    rng = _as_rng(seed)
    samplers = {1: _VoiceSampler(params.voice1, rng), 2: _VoiceSampler(params.voice2, rng)}
    alpha0 = params.alpha[0]
    v1 = params.voice1

    if tempo_grid is not None:
        t_ini_log, t_tr_log = _tempo_matrices(v1, tempo_grid)
        p_v_ini = _normalized(t_ini_log)
        p_v_rows = [_normalized(row) for row in t_tr_log]
        v_indices = [int(rng.choice(tempo_grid.n, p=p_v_ini))]
        grid_values = tempo_grid.values
        tempo_of = lambda i: float(grid_values[v_indices[i]])
    else:
        u_values = [rng.normal(v1.u_ini, v1.sigma_v_ini)]
        v_indices = None
        tempo_of = lambda i: float(math.exp(u_values[i]))

    s_seq: list[int] = []
    w_states: list = []
    pitches: list[int] = []
    onsets: list[float] = []
    score_times: list[int] = []
    tempo_per_note: list[float] = []

    # last[s] = (w_idx, pitch|None, onset, next_score_time); the unused voice
    # starts in a phantom state anchored at the first onset.
    s0 = 1 + int(rng.choice(2, p=alpha0))
    w0 = {1: samplers[1].draw_initial_state(), 2: samplers[2].draw_initial_state()}
    pending_voice = 2 if s0 == 1 else 1
    pending_state = params.voice(pending_voice).state_of(w0[pending_voice])

    last: dict[int, tuple[int, int | None, float, int]] = {}
    for v in (1, 2):
        st = params.voice(v).state_of(w0[v])
        offset = 0 if v == s0 else st.flag * st.value
        last[v] = (w0[v], None, start_time, offset)

    for i in range(n_notes):
        if i == 0:
            s = s0
            w_new = w0[s]
            pitch = samplers[s].draw_pitch(None)
            onset = start_time
        else:
            s = 1 + int(rng.choice(2, p=alpha0))
            w_prev, p_prev, t_prev, _ = last[s]
            onset = samplers[s].draw_onset(t_prev, w_prev, tempo_of(i - 1))
            pitch = samplers[s].draw_pitch(p_prev)
            w_new = samplers[s].draw_next_state(w_prev)
        st = params.voice(s).state_of(w_new)
        score_time = last[s][3]
        last[s] = (w_new, pitch, onset, score_time + st.flag * st.value)

        s_seq.append(s)
        w_states.append(st)
        pitches.append(pitch)
        onsets.append(onset)
        score_times.append(score_time)
        tempo_per_note.append(tempo_of(max(i - 1, 0)))

        if i < n_notes - 1:
            if tempo_grid is not None:
                v_indices.append(int(rng.choice(tempo_grid.n, p=p_v_rows[v_indices[-1]])))
            else:
                u_values.append(rng.normal(u_values[-1], v1.sigma_v))

    order = sorted(range(n_notes), key=lambda k: (onsets[k], pitches[k]))
    order_preserved = order == list(range(n_notes))

    perf = [PerformanceNote(onset_sec=onsets[k], pitch=pitches[k]) for k in order]
    truth_notes = [
        TranscribedNote(
            onset_sec=onsets[k],
            pitch=pitches[k],
            voice=s_seq[k],
            note_value=w_states[k].value,
            cluster_flag=w_states[k].flag,
            score_time=score_times[k],
            tempo=tempo_per_note[k],
        )
        for k in order
    ]
    assignment = LatentAssignment(
        s=[s_seq[k] for k in order],
        w=[w_states[k] for k in order],
        v_idx=list(v_indices[: n_notes - 1]) if tempo_grid is not None else None,
        pending=pending_state,
    )

    log_prob = float("nan")
    if order_preserved and tempo_grid is not None:
        log_prob = complete_data_log_prob(params, perf, assignment, tempo_grid.values)

    info = {
        "kind": "sample",
        "order_preserved": order_preserved,
        "tempo_sampling": "grid" if tempo_grid is not None else "continuous",
    }
    truth = Transcription(notes=truth_notes, log_prob=log_prob, model="sample", info=info)
    return SampleResult(
        performance=perf,
        assignment=assignment,
        score=transcription_to_score_notes(truth),
        truth=truth,
        info=info,
    )


# Cross-rhythm patterns: bar length in ticks and per-voice onset cycles.
POLYRHYTHM_KINDS = {
    "3v2": {
        "bar_ticks": 2 * TICKS_PER_QUARTER,
        "voice1": (0, 32, 64),
        "voice2": (0, 48),
    },
    "4v3": {
        "bar_ticks": TICKS_PER_QUARTER,
        "voice1": (0, 16, 32),
        "voice2": (0, 12, 24, 36),
    },
}


def _render_score(
    rows: list[tuple[int, int, int, int]],
    rng: np.random.Generator,
    sec_per_quarter: float,
    sigma_t: float,
    lam: float,
    sigma_v: float,
) -> tuple[list[float], list[float]]:
    """Performance times for score rows (tick, pitch, voice, value).

    The tempo drifts as a log-scale random walk per distinct score time; each
    event group lands at the integrated time plus Gaussian noise, and
    within-group notes are spread by exponential asynchronies.
    Returns (onset seconds, tempo at each row).
    """
    ticks = sorted({tick for tick, _, _, _ in rows})
    u = math.log(sec_per_quarter)
    base: dict[int, float] = {ticks[0]: 0.0}
    tempo_at: dict[int, float] = {ticks[0]: math.exp(u)}
    for prev, tick in zip(ticks, ticks[1:]):
        if sigma_v > 0:
            u = rng.normal(u, sigma_v)
        base[tick] = base[prev] + (tick - prev) / TICKS_PER_QUARTER * math.exp(u)
        tempo_at[tick] = math.exp(u)

    onsets = [0.0] * len(rows)
    tempos = [0.0] * len(rows)
    by_tick: dict[int, list[int]] = {}
    for idx, (tick, _, _, _) in enumerate(rows):
        by_tick.setdefault(tick, []).append(idx)
    for tick, members in by_tick.items():
        t = base[tick] + (rng.normal(0.0, sigma_t) if sigma_t > 0 else 0.0)
        for idx in members:
            onsets[idx] = t
            tempos[idx] = tempo_at[tick]
            if lam > 0:
                t += rng.exponential(lam)
    return onsets, tempos


def make_polyrhythm_suite(
    kind: str,
    instances: int,
    seed,
    n_bars: int = 8,
    sec_per_quarter: float = 0.5,
    sigma_t: float = DEFAULT_SIGMA_T,
    lam: float = DEFAULT_LAMBDA,
    sigma_v: float = DEFAULT_SIGMA_V,
    pitch_voice1: int = 55,
    pitch_voice2: int = 72,
) -> list[SampleResult]:
    """Benchmark set of two-voice cross-rhythm pieces with known truth.

    Voice 1 plays the first cycle of the pattern on a low pitch, voice 2 the
    second on a high pitch, repeating for ``n_bars`` bars.  Each instance is
    rendered with Gaussian onset noise, exponential asynchrony between
    simultaneous notes, and a drifting tempo around ``sec_per_quarter``.
    Zero noise parameters give a deterministic render.
    """
    try:
        pattern = POLYRHYTHM_KINDS[kind]
    except KeyError:
        raise ValueError(
            f"unknown polyrhythm kind {kind!r}; expected one of {sorted(POLYRHYTHM_KINDS)}"
        ) from None
    if instances < 1:
        raise ValueError("instances must be >= 1")
    if n_bars < 1:
        raise ValueError("n_bars must be >= 1")
    for name, value in (("sigma_t", sigma_t), ("lam", lam), ("sigma_v", sigma_v)):
        if value < 0:
            raise ValueError(f"{name} must be >= 0")
    rng = _as_rng(seed)

    bar = pattern["bar_ticks"]
    rows: list[tuple[int, int, int, int]] = []
    for voice, cycle, pitch in (
        (1, pattern["voice1"], pitch_voice1),
        (2, pattern["voice2"], pitch_voice2),
    ):
        cycle = list(cycle)
        for b in range(n_bars):
            for k, off in enumerate(cycle):
                tick = b * bar + off
                nxt = b * bar + cycle[k + 1] if k + 1 < len(cycle) else (b + 1) * bar
                rows.append((tick, pitch, voice, nxt - tick))
    rows.sort(key=lambda r: (r[0], r[1]))

    results = []
    for _ in range(instances):
        onsets, tempos = _render_score(rows, rng, sec_per_quarter, sigma_t, lam, sigma_v)
        order = sorted(range(len(rows)), key=lambda i: (onsets[i], rows[i][1]))
        truth_notes = [
            TranscribedNote(
                onset_sec=onsets[i],
                pitch=rows[i][1],
                voice=rows[i][2],
                note_value=rows[i][3],
                cluster_flag=1,
                score_time=rows[i][0],
                tempo=tempos[i],
            )
            for i in order
        ]
        perf = [PerformanceNote(n.onset_sec, n.pitch) for n in truth_notes]
        info = {"kind": f"polyrhythm-{kind}", "n_bars": n_bars, "bar_ticks": bar}
        truth = Transcription(
            notes=truth_notes, log_prob=float("nan"), model="polyrhythm", info=info
        )
        results.append(
            SampleResult(
                performance=perf,
                assignment=None,
                score=transcription_to_score_notes(truth),
                truth=truth,
                info=info,
            )
        )
    return results
