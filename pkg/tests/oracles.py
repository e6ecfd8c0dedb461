"""Slow reference implementations used only to cross-check the fast code.

Two layers: `enumerate_assignments`/`exhaustive_best` literally score every
latent assignment through the public complete-data density, and
`reference_viterbi` is a plain exact search over states that keep an
explicit anchor index instead of the capped h counter.  The second layer is
checked against the first on tiny instances, then serves as the oracle at
sizes where full enumeration is impossible.
"""

import itertools
import math

import numpy as np

from polyscribe.core import ClusterState
from polyscribe.merged_model import (
    LatentAssignment,
    alpha_contexts,
    complete_data_log_prob,
)
from polyscribe import voice_model as vm

NEG_INF = float("-inf")


def enumerate_assignments(params, n_notes, n_tempi):
    """Yield every (s, w, v, pending) combination for a tiny instance."""
    states = [params.voice1.state_of(i) for i in range(params.voice1.n_states)]
    n_v = n_notes - 1
    for s_seq in itertools.product((1, 2), repeat=n_notes):
        for w_seq in itertools.product(states, repeat=n_notes):
            for pending in states:
                for v_seq in itertools.product(range(n_tempi), repeat=n_v):
                    yield LatentAssignment(
                        s=list(s_seq),
                        w=list(w_seq),
                        v_idx=list(v_seq),
                        pending=pending,
                    )


def exhaustive_best(params, notes, tempo_values):
    """Brute-force maximum of the complete-data density over all assignments."""
    best, best_a = NEG_INF, None
    for a in enumerate_assignments(params, len(notes), len(tempo_values)):
        lp = complete_data_log_prob(params, notes, a, tempo_values)
        if lp > best:
            best, best_a = lp, a
    return best, best_a


def reference_viterbi(params, notes, tempo_values):
    """Exact joint decode with explicit anchor bookkeeping.

    State after note i: (s, j, w1, w2, v) where j is the index of the most
    recent note of the voice other than s, or -1 if that voice has not
    emitted yet (its cluster component is then the phantom initial state).
    No h cap, no staged maxima: every predecessor is scored directly.
    """
    n = len(notes)
    contexts = alpha_contexts(notes, params.span_threshold)
    w_count = params.voice1.n_states
    nv = len(tempo_values)
    u = np.log(tempo_values)
    onsets = [x.onset_sec for x in notes]
    pitches = [x.pitch for x in notes]

    def log_alpha(c, s):
        a = params.alpha[c, s - 1]
        return math.log(a) if a > 0 else NEG_INF

    def states_of(v):
        return [params.voice(v).state_of(i) for i in range(w_count)]

    st1, st2 = states_of(1), states_of(2)

    # D maps (s, j, i1, i2, iv) -> score
    d = {}
    for s in (1, 2):
        voice = params.voice(s)
        base = log_alpha(contexts[0], s) + vm.pitch_initial_log_prob(
            voice, min(max(pitches[0], 21), 108)
        )
        for i1 in range(w_count):
            ini1 = vm.cluster_initial_log_prob(params.voice1, st1[i1])
            for i2 in range(w_count):
                ini2 = vm.cluster_initial_log_prob(params.voice2, st2[i2])
                for iv in range(nv):
                    t_ini = (
                        vm.tempo_initial_log_prob(voice, tempo_values[iv])
                        if n >= 2
                        else 0.0
                    )
                    d[(s, -1, i1, i2, iv)] = base + ini1 + ini2 + t_ini
    back = []

    for i in range(1, n):
        last = i == n - 1
        d_new, bp = {}, {}
        for (s_p, j_p, i1_p, i2_p, iv_p), sc in d.items():
            if sc == NEG_INF:
                continue
            v_prev = tempo_values[iv_p]
            for s in (1, 2):
                voice = params.voice(s)
                la = log_alpha(contexts[i], s)
                own_p = i1_p if s == 1 else i2_p
                w_prev = st1[own_p] if s == 1 else st2[own_p]
                if s == s_p:
                    anchor_p, anchor_t = pitches[i - 1], onsets[i - 1]
                    j_new = j_p
                else:
                    if j_p == -1:
                        anchor_p, anchor_t = None, onsets[0]
                    else:
                        anchor_p, anchor_t = pitches[j_p], onsets[j_p]
                    j_new = i - 1
                if anchor_p is None:
                    lp_pitch = vm.pitch_initial_log_prob(voice, min(max(pitches[i], 21), 108))
                else:
                    lp_pitch = vm.pitch_transition_log_prob(
                        voice, min(max(anchor_p, 21), 108), min(max(pitches[i], 21), 108)
                    )
                base = sc + la + lp_pitch
                if base == NEG_INF:
                    continue
                for wn in range(w_count):
                    w_new = st1[wn] if s == 1 else st2[wn]
                    lp_w = vm.cluster_transition_log_prob(voice, w_prev, w_new)
                    if lp_w == NEG_INF:
                        continue
                    lp_on = vm.onset_log_prob(voice, onsets[i], anchor_t, v_prev, w_prev)
                    cand0 = base + lp_w + lp_on
                    if cand0 == NEG_INF:
                        continue
                    vi_range = (iv_p,) if last else range(nv)
                    for iv in vi_range:
                        cand = cand0
                        if not last:
                            cand = cand + vm.normal_log_pdf(u[iv], u[iv_p], voice.sigma_v)
                        i1n, i2n = (wn, i2_p) if s == 1 else (i1_p, wn)
                        key = (s, j_new, i1n, i2n, iv)
                        if cand > d_new.get(key, NEG_INF):
                            d_new[key] = cand
                            bp[key] = (s_p, j_p, i1_p, i2_p, iv_p)
        back.append(bp)
        d = d_new

    key = max(d, key=lambda k: (d[k], [-x for x in k]))
    best = d[key]
    path = [key]
    for i in range(n - 1, 0, -1):
        path.append(back[i - 1][path[-1]])
    path.reverse()

    s_seq = [k[0] for k in path]
    w_seq = []
    for i, k in enumerate(path):
        own = k[2] if k[0] == 1 else k[3]
        w_seq.append(params.voice(k[0]).state_of(own))
    v_idx = [k[4] for k in path[: n - 1]] if n >= 2 else []
    pend_idx = path[0][3] if s_seq[0] == 1 else path[0][2]
    pending = params.voice(3 - s_seq[0]).state_of(pend_idx)
    assignment = LatentAssignment(s=s_seq, w=w_seq, v_idx=v_idx, pending=pending)
    return best, assignment
