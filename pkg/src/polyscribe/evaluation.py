"""Transcription quality metrics.

The central metric counts the editing operations needed to turn an estimated
rhythm into the true one.  Two operations are available: rescaling a
contiguous run of elements by a rational factor (one operation per run, plus
one if the very first run is not at scale 1) and shifting a single element to
its true value.  The minimum-cost plan is found exactly by dynamic
programming over a finite set of candidate scales; a tiny brute-force
enumerator over all scale sequences provides an independent check.

Rhythm is compared through score-time differences rather than note values, so
an estimate that is locally consistent but globally half speed costs one
scaling instead of wholesale shifts.  For two-voice output the per-voice
difference sequences are interleaved into a single comparison sequence (see
``score_time_elements``).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import NoteValueGrid

__all__ = [
    "CostWeights",
    "CorrectionCost",
    "build_scaling_space",
    "pair_scaling_space",
    "rhythm_correction_cost",
    "brute_force_correction_cost",
    "score_time_elements",
    "polyphonic_correction_cost",
    "voice_separation_accuracy",
    "evaluation_report",
]


@dataclass(frozen=True)
class CostWeights:
    scale: float = 1.0
    shift: float = 1.0

    def __post_init__(self):
        if self.scale < 0 or self.shift < 0:
            raise ValueError("operation weights must be non-negative")


@dataclass(frozen=True)
class CorrectionCost:
    cost: float
    n_scale: int
    n_shift: int
    n_elements: int

    @property
    def rate(self) -> float:
        """Operations per comparison element."""
        if self.n_elements == 0:
            return 0.0
        return (self.n_scale + self.n_shift) / self.n_elements


def _as_fractions(seq) -> list[Fraction]:
    out = []
    for v in seq:
        out.append(v if isinstance(v, Fraction) else Fraction(v))
    return out


def build_scaling_space(grid: NoteValueGrid) -> tuple[Fraction, ...]:
    """Candidate run scales from a note-value grid: every ratio of two grid
    values, plus 1, as exact deduplicated rationals."""
    if len(grid) == 0:
        raise ValueError("grid must be nonempty")
    omega = {Fraction(1)}
    for a in grid.values:
        for b in grid.values:
            omega.add(Fraction(a, b))
    return tuple(sorted(omega))


def pair_scaling_space(truth: Sequence, estimate: Sequence) -> tuple[Fraction, ...]:
    """Candidate run scales for one comparison: 1 plus every ratio of a
    positive true element to a positive estimated element.  Any scale outside
    this set can never zero a shift, so restricting the correction DP to it
    is exact."""
    y = _as_fractions(truth)
    x = _as_fractions(estimate)
    omega = {Fraction(1)}
    for a in y:
        if a > 0:
            for b in x:
                if b > 0:
                    omega.add(a / b)
    return tuple(sorted(omega))


def rhythm_correction_cost(
    truth: Sequence,
    estimate: Sequence,
    weights: CostWeights | None = None,
    scaling_space: Sequence[Fraction] | None = None,
) -> CorrectionCost:
    """Minimum-cost correction of ``estimate`` into ``truth``.

    Elements are compared exactly (rational arithmetic).  Ties between
    keeping the current scale and opening a new run are resolved in favor of
    keeping it; among new-run candidates the lowest-indexed scale in the
    scaling space wins.
    """
    weights = weights or CostWeights()
    y = _as_fractions(truth)
    x = _as_fractions(estimate)
    if len(y) != len(x):
        raise ValueError("sequences must have equal length")
    m = len(y)
    if m == 0:
        return CorrectionCost(0.0, 0, 0, 0)

    omega = list(scaling_space) if scaling_space is not None else list(
        pair_scaling_space(y, x)
    )
    if Fraction(1) not in omega:
        raise ValueError("scaling space must contain 1")
    k_one = omega.index(Fraction(1))
    k = len(omega)
    w_sc, w_sh = weights.scale, weights.shift

    miss = np.empty((m, k), dtype=bool)
    for i in range(m):
        yi, xi = y[i], x[i]
        miss[i] = [yi != d * xi for d in omega]

    cost = np.where(np.arange(k) == k_one, 0.0, w_sc) + np.where(miss[0], w_sh, 0.0)
    back = np.empty((m, k), dtype=np.int32)
    back[0] = -1
    for i in range(1, m):
        best_j = int(cost.argmin())
        rest = np.delete(cost, best_j)
        if len(rest):
            second_rel = int(rest.argmin())
            second_j = second_rel if second_rel < best_j else second_rel + 1
        else:
            second_j = best_j
        change = np.full(k, cost[best_j] + w_sc)
        change[best_j] = cost[second_j] + w_sc
        jumps = np.full(k, best_j, dtype=np.int32)
        jumps[best_j] = second_j
        stay_wins = cost <= change
        back[i] = np.where(stay_wins, np.arange(k, dtype=np.int32), jumps)
        cost = np.where(stay_wins, cost, change) + np.where(miss[i], w_sh, 0.0)

    k_final = int(cost.argmin())
    total = float(cost[k_final])

    path = np.empty(m, dtype=np.int32)
    path[m - 1] = k_final
    for i in range(m - 1, 0, -1):
        path[i - 1] = back[i, path[i]]
    n_scale = int(path[0] != k_one) + int(np.count_nonzero(path[1:] != path[:-1]))
    n_shift = int(miss[np.arange(m), path].sum())
    return CorrectionCost(total, n_scale, n_shift, m)


def brute_force_correction_cost(
    truth: Sequence,
    estimate: Sequence,
    weights: CostWeights | None = None,
    scaling_space: Sequence[Fraction] | None = None,
    max_states: int = 4_000_000,
) -> float:
    """Exhaustive minimum over every scale sequence (reference for tests)."""
    weights = weights or CostWeights()
    y = _as_fractions(truth)
    x = _as_fractions(estimate)
    if len(y) != len(x):
        raise ValueError("sequences must have equal length")
    m = len(y)
    if m == 0:
        return 0.0
    omega = list(scaling_space) if scaling_space is not None else list(
        pair_scaling_space(y, x)
    )
    k_one = omega.index(Fraction(1))
    k = len(omega)
    if k**m > max_states:
        raise ValueError(f"{k}^{m} scale sequences exceed the enumeration budget")

    miss = np.empty((m, k), dtype=bool)
    for i in range(m):
        miss[i] = [y[i] != d * x[i] for d in omega]

    # total[j_0, ..., j_{m-1}] = cost of assigning scale omega[j_i] to element i,
    # assembled by broadcasting the per-element and per-adjacent-pair terms.
    def along(arr: np.ndarray, axes: tuple[int, ...]) -> np.ndarray:
        shape = [1] * m
        for axis, size in zip(axes, arr.shape):
            shape[axis] = size
        return arr.reshape(shape)

    total = np.zeros((k,) * m)
    first = np.where(np.arange(k) == k_one, 0.0, weights.scale)
    total += along(first, (0,))
    for i in range(m):
        total += along(np.where(miss[i], weights.shift, 0.0), (i,))
    change = weights.scale * (np.arange(k)[:, None] != np.arange(k)[None, :])
    for i in range(1, m):
        total += along(change, (i - 1, i))
    return float(total.min())


def score_time_elements(voices: Sequence[int], score_times: Sequence) -> list[Fraction]:
    """Interleave two voices' rhythms into one comparison sequence.

    Elements are within-voice score-time differences, tagged to the earlier
    note of each pair, plus the initial score offset of every voice other
    than the one owning the first note (tagged to that voice's first note,
    sorting before a difference with the same tag).  For N notes the result
    always has N - 1 elements regardless of how the voices are assigned.
    """
    n = len(voices)
    if len(score_times) != n:
        raise ValueError("voices and score_times must have equal length")
    if n == 0:
        return []
    times = _as_fractions(score_times)
    tagged: list[tuple[int, int, Fraction]] = []
    last: dict[int, tuple[int, Fraction]] = {}
    first_voice = voices[0]
    for i, (v, t) in enumerate(zip(voices, times)):
        if v in last:
            j, tj = last[v]
            tagged.append((j, 1, t - tj))
        elif v != first_voice:
            tagged.append((i, 0, t))
        last[v] = (i, t)
    tagged.sort(key=lambda e: (e[0], e[1]))
    return [value for _, _, value in tagged]


def polyphonic_correction_cost(
    truth_voices: Sequence[int],
    truth_times: Sequence,
    est_voices: Sequence[int],
    est_times: Sequence,
    weights: CostWeights | None = None,
) -> CorrectionCost:
    """Correction cost between two voice-labeled rhythm transcriptions of the
    same performance (row-aligned by performance note)."""
    if len(truth_voices) != len(est_voices):
        raise ValueError("truth and estimate must describe the same notes")
    truth_seq = score_time_elements(truth_voices, truth_times)
    est_seq = score_time_elements(est_voices, est_times)
    cc = rhythm_correction_cost(truth_seq, est_seq, weights)
    # The rate is conventionally normalized by the note count, one more than
    # the number of rhythm elements.
    return CorrectionCost(cc.cost, cc.n_scale, cc.n_shift, len(truth_voices))


def voice_separation_accuracy(
    truth_voices: Sequence[int], est_voices: Sequence[int]
) -> float:
    """Fraction of notes on the correct voice, up to swapping the two labels."""
    if len(truth_voices) != len(est_voices):
        raise ValueError("truth and estimate must describe the same notes")
    n = len(truth_voices)
    if n == 0:
        return 1.0
    same = sum(t == e for t, e in zip(truth_voices, est_voices))
    swapped = sum(t == 3 - e for t, e in zip(truth_voices, est_voices))
    return max(same, swapped) / n


def _rows(notes) -> tuple[list[int], list[int], list[int]]:
    voices, times, values = [], [], []
    for n in notes:
        voices.append(n.voice)
        times.append(n.score_time if hasattr(n, "score_time") else n.onset_tick)
        values.append(n.note_value if hasattr(n, "note_value") else n.value_tick)
    return voices, times, values


def evaluation_report(truth_notes, est_notes, weights: CostWeights | None = None) -> dict:
    """Metrics comparing an estimated transcription to the truth.

    Both inputs list the same performance's notes in the same (canonical)
    order; truth rows may be score notes or transcribed notes.
    """
    if len(truth_notes) != len(est_notes):
        raise ValueError("truth and estimate must have the same number of rows")
    tv, tt, tval = _rows(truth_notes)
    ev, et, eval_ = _rows(est_notes)
    cc = polyphonic_correction_cost(tv, tt, ev, et, weights)
    n = len(tv)
    value_matches = sum(a == b for a, b in zip(tval, eval_))
    return {
        "n_notes": n,
        "voice_accuracy": voice_separation_accuracy(tv, ev),
        "correction_cost": cc.cost,
        "n_scale": cc.n_scale,
        "n_shift": cc.n_shift,
        "correction_rate": cc.rate,
        "value_match_rate": value_matches / n if n else 1.0,
    }
