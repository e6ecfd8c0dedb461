"""Probabilistic model of a single voice.

A voice is a sequence of note clusters.  Each note carries a hidden state
w = (value, flag); the flag says whether the following note of the same
voice belongs to the same cluster (0) or starts a new one `value` ticks
later (1).  On top of the cluster chain sit a pitch Markov chain over the
piano range, a log-tempo random walk shared with the other voice, and the
onset model that turns score durations into seconds.

All probability functions work in log space and return -inf for impossible
events.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import N_PITCHES, PITCH_MAX, PITCH_MIN, NoteValueGrid, ClusterState

LOG_2PI = math.log(2.0 * math.pi)
NEG_INF = float("-inf")

# Performance-model constants; these are configuration, not trained.
DEFAULT_SIGMA_V = 3.32e-2
DEFAULT_SIGMA_T = 0.02
DEFAULT_LAMBDA = 0.0101
DEFAULT_SIGMA_V_INI = 3 * DEFAULT_SIGMA_V
DEFAULT_V_MIN = 0.3
DEFAULT_V_MAX = 1.5
DEFAULT_U_INI = 0.5 * (math.log(DEFAULT_V_MIN) + math.log(DEFAULT_V_MAX))

MAX_INTERVAL = N_PITCHES - 1  # 87 semitones spans the whole range


def normal_log_pdf(x, mean, sigma):
    z = (x - mean) / sigma
    return -0.5 * z * z - math.log(sigma) - 0.5 * LOG_2PI


@dataclass
class VoiceHmmParams:
    """Everything one voice needs: cluster chain, pitch chain, timing."""

    grid: NoteValueGrid = field(default_factory=NoteValueGrid)
    pi_ini: np.ndarray = None      # (R,) initial note-value distribution
    pi: np.ndarray = None          # (R, R) note-value transitions
    beta: np.ndarray = None        # (R,) P(next note shares the cluster | entering value r)
    gamma: np.ndarray = None       # (R,) P(cluster keeps growing | already chordal)
    theta_interval: np.ndarray = None  # (175,) pitch-interval weights, index = interval + 87
    mu_p: float = 64.0
    sigma_p: float = 12.0
    u_ini: float = DEFAULT_U_INI   # mean of the initial log-tempo (sec per quarter)
    sigma_v_ini: float = DEFAULT_SIGMA_V_INI
    sigma_v: float = DEFAULT_SIGMA_V
    sigma_t: float = DEFAULT_SIGMA_T
    lam: float = DEFAULT_LAMBDA    # within-cluster asynchrony scale (sec)

    def __post_init__(self):
        r = len(self.grid)
        if self.pi_ini is None:
            self.pi_ini = np.full(r, 1.0 / r)
        if self.pi is None:
            self.pi = np.full((r, r), 1.0 / r)
        if self.beta is None:
            self.beta = np.full(r, 0.3)
        if self.gamma is None:
            self.gamma = np.full(r, 0.3)
        if self.theta_interval is None:
            # mild preference for small intervals
            iv = np.arange(-MAX_INTERVAL, MAX_INTERVAL + 1)
            self.theta_interval = np.exp(-np.abs(iv) / 6.0)
        self.pi_ini = np.asarray(self.pi_ini, dtype=float)
        self.pi = np.asarray(self.pi, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        self.gamma = np.asarray(self.gamma, dtype=float)
        self.theta_interval = np.asarray(self.theta_interval, dtype=float)
        self.validate()

    def validate(self):
        r = len(self.grid)
        if self.pi_ini.shape != (r,) or self.pi.shape != (r, r):
            raise ValueError("note-value table shapes do not match the grid")
        if self.beta.shape != (r,) or self.gamma.shape != (r,):
            raise ValueError("cluster parameter shapes do not match the grid")
        if self.theta_interval.shape != (2 * MAX_INTERVAL + 1,):
            raise ValueError("theta_interval must cover intervals -87..87")
        if np.any(self.pi_ini < 0) or np.any(self.pi < 0) or np.any(self.theta_interval < 0):
            raise ValueError("probabilities must be non-negative")
        if abs(self.pi_ini.sum() - 1.0) > 1e-6:
            raise ValueError("pi_ini must sum to 1")
        if np.any(np.abs(self.pi.sum(axis=1) - 1.0) > 1e-6):
            raise ValueError("pi rows must sum to 1")
        if np.any((self.beta < 0) | (self.beta > 1)):
            raise ValueError("beta outside [0, 1]")
        if np.any((self.gamma < 0) | (self.gamma >= 1)):
            raise ValueError("gamma outside [0, 1)")
        for name in ("sigma_p", "sigma_v_ini", "sigma_v", "sigma_t", "lam"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    # --- state indexing: w = 2 * value_index + flag --------------------

    @property
    def n_states(self) -> int:
        return 2 * len(self.grid)

    def state_index(self, w: ClusterState) -> int:
        return 2 * self.grid.index(w.value) + w.flag

    def state_of(self, index: int) -> ClusterState:
        return ClusterState(self.grid.values[index // 2], index % 2)


# ---------------------------------------------------------------------------
# Cluster chain


def cluster_initial_log_prob(params: VoiceHmmParams, w: ClusterState) -> float:
    i = params.grid.index(w.value)
    p = params.pi_ini[i] * (params.beta[i] if w.flag == 0 else 1.0 - params.beta[i])
    return math.log(p) if p > 0 else NEG_INF


def cluster_transition_log_prob(
    params: VoiceHmmParams, w_prev: ClusterState, w: ClusterState
) -> float:
    i_prev = params.grid.index(w_prev.value)
    i = params.grid.index(w.value)
    if w_prev.flag == 0:
        # still inside a cluster: the value cannot change
        if i != i_prev:
            return NEG_INF
        g = params.gamma[i]
        p = g if w.flag == 0 else 1.0 - g
    else:
        # cluster closed: move to the next cluster's value
        b = params.beta[i]
        p = params.pi[i_prev, i] * (b if w.flag == 0 else 1.0 - b)
    return math.log(p) if p > 0 else NEG_INF


def _safe_log(x: np.ndarray) -> np.ndarray:
    out = np.full(x.shape, NEG_INF)
    np.log(x, out=out, where=x > 0)
    return out


def cluster_initial_log_vector(params: VoiceHmmParams) -> np.ndarray:
    """(2R,) log of the initial distribution over states, index 2*i+flag."""
    r = len(params.grid)
    vec = np.empty(2 * r)
    vec[0::2] = params.pi_ini * params.beta
    vec[1::2] = params.pi_ini * (1.0 - params.beta)
    return _safe_log(vec)


def cluster_transition_log_matrix(params: VoiceHmmParams) -> np.ndarray:
    """(2R, 2R) log transition matrix over packed states."""
    r = len(params.grid)
    mat = np.zeros((2 * r, 2 * r))
    # rows with flag=0: stay on the same value, flag drawn from gamma
    for i in range(r):
        mat[2 * i, 2 * i] = params.gamma[i]
        mat[2 * i, 2 * i + 1] = 1.0 - params.gamma[i]
    # rows with flag=1: value moves by pi, flag drawn from beta
    enter = np.empty(2 * r)
    enter[0::2] = params.beta
    enter[1::2] = 1.0 - params.beta
    for i_prev in range(r):
        mat[2 * i_prev + 1, :] = np.repeat(params.pi[i_prev], 2) * enter
    return _safe_log(mat)


# ---------------------------------------------------------------------------
# Tempo (log scale random walk; u = ln of seconds per quarter note)


def tempo_initial_log_prob(params: VoiceHmmParams, v: float) -> float:
    return normal_log_pdf(math.log(v), params.u_ini, params.sigma_v_ini)


def tempo_transition_log_prob(params: VoiceHmmParams, v_prev: float, v: float) -> float:
    return normal_log_pdf(math.log(v), math.log(v_prev), params.sigma_v)


# ---------------------------------------------------------------------------
# Onsets


def onset_log_prob(
    params: VoiceHmmParams, t: float, t_prev: float, v: float, w_prev: ClusterState
) -> float:
    """Density of the next onset given the previous note of the same voice.

    flag=0: the notes share a cluster and the gap is exponential noise.
    flag=1: the gap is the note value scaled by the tempo, plus Gaussian noise.
    """
    dt = t - t_prev
    if w_prev.flag == 0:
        if dt < 0:
            return NEG_INF
        return -math.log(params.lam) - dt / params.lam
    mean = params.grid.quarters(w_prev.value) * v
    return normal_log_pdf(dt, mean, params.sigma_t)


def onset_log_prob_array(params: VoiceHmmParams, dt: float, v_values: np.ndarray) -> np.ndarray:
    """(2R, N_v) onset log densities for every (previous state, tempo) pair."""
    r = len(params.grid)
    out = np.empty((2 * r, len(v_values)))
    if dt < 0:
        out[0::2, :] = NEG_INF
    else:
        out[0::2, :] = -math.log(params.lam) - dt / params.lam
    quarters = np.array([v / params.grid.ticks_per_quarter for v in params.grid.values])
    means = quarters[:, None] * v_values[None, :]
    z = (dt - means) / params.sigma_t
    out[1::2, :] = -0.5 * z * z - math.log(params.sigma_t) - 0.5 * LOG_2PI
    return out


# ---------------------------------------------------------------------------
# Pitches


def _in_range(p: int):
    if not PITCH_MIN <= p <= PITCH_MAX:
        raise ValueError(f"pitch {p} outside model range [{PITCH_MIN}, {PITCH_MAX}]")


def pitch_initial_log_vector(params: VoiceHmmParams) -> np.ndarray:
    """(88,) normalized initial pitch distribution, index = pitch - 21."""
    pitches = np.arange(PITCH_MIN, PITCH_MAX + 1, dtype=float)
    logw = -0.5 * ((pitches - params.mu_p) / params.sigma_p) ** 2
    logw -= np.log(np.exp(logw - logw.max()).sum()) + logw.max()
    return logw


def pitch_initial_log_prob(params: VoiceHmmParams, p: int) -> float:
    _in_range(p)
    return float(pitch_initial_log_vector(params)[p - PITCH_MIN])


def pitch_transition_log_prob(params: VoiceHmmParams, p_prev: int, p: int) -> float:
    """Interval distribution renormalized over the reachable pitch range."""
    _in_range(p_prev)
    _in_range(p)
    lo = PITCH_MIN - p_prev + MAX_INTERVAL
    row = params.theta_interval[lo : lo + N_PITCHES]
    z = row.sum()
    if z <= 0:
        raise ValueError("theta_interval row has no mass inside the pitch range")
    w = params.theta_interval[p - p_prev + MAX_INTERVAL]
    return math.log(w / z) if w > 0 else NEG_INF


def pitch_transition_log_matrix(params: VoiceHmmParams) -> np.ndarray:
    """(88, 88) log transition matrix over the piano range."""
    idx = np.arange(N_PITCHES)
    iv = idx[None, :] - idx[:, None] + MAX_INTERVAL
    mat = params.theta_interval[iv]
    return _safe_log(mat / mat.sum(axis=1, keepdims=True))
