"""Shared builders for unit and acceptance tests."""

import dataclasses

import numpy as np

from polyscribe.core import NoteValueGrid, PerformanceNote
from polyscribe.merged_model import MergedModelParams, default_merged_params
from polyscribe.voice_model import MAX_INTERVAL, VoiceHmmParams


def random_stochastic(rng, shape):
    m = rng.uniform(0.05, 1.0, size=shape)
    return m / m.sum(axis=-1, keepdims=True)


def random_voice_params(rng, grid=None, **overrides) -> VoiceHmmParams:
    """A fully random but valid single-voice parameter set."""
    grid = grid or NoteValueGrid(values=(24, 48))
    r = len(grid)
    fields = dict(
        grid=grid,
        pi_ini=random_stochastic(rng, r),
        pi=random_stochastic(rng, (r, r)),
        beta=rng.uniform(0.05, 0.9, r),
        gamma=rng.uniform(0.0, 0.9, r),
        theta_interval=rng.uniform(0.05, 1.0, 2 * MAX_INTERVAL + 1),
        mu_p=float(rng.uniform(40, 90)),
        sigma_p=float(rng.uniform(4, 20)),
        u_ini=float(rng.uniform(np.log(0.35), np.log(1.2))),
        sigma_v_ini=float(rng.uniform(0.05, 0.3)),
        sigma_v=float(rng.uniform(0.01, 0.1)),
        sigma_t=float(rng.uniform(0.005, 0.05)),
        lam=float(rng.uniform(0.005, 0.05)),
    )
    fields.update(overrides)
    return VoiceHmmParams(**fields)


def random_merged_params(rng, grid=None, **overrides) -> MergedModelParams:
    """Random valid two-voice parameters (voices differ, alpha random).

    The tempo walk is shared, so its scalars are copied from voice 1."""
    grid = grid or NoteValueGrid(values=(24, 48))
    voice1 = random_voice_params(rng, grid)
    voice2 = random_voice_params(
        rng,
        grid,
        u_ini=voice1.u_ini,
        sigma_v_ini=voice1.sigma_v_ini,
        sigma_v=voice1.sigma_v,
    )
    fields = dict(
        voice1=voice1,
        voice2=voice2,
        alpha=np.clip(random_stochastic(rng, (4, 2)), 0.02, None),
    )
    fields["alpha"] = fields["alpha"] / fields["alpha"].sum(axis=1, keepdims=True)
    fields.update(overrides)
    return MergedModelParams(**fields)


def random_performance(rng, n, spread=0.4):
    """Canonical random notes: increasing-ish onsets, random pitches."""
    onsets = np.cumsum(rng.uniform(0.01, spread, n)) - 0.01
    notes = [
        PerformanceNote(onset_sec=float(t), pitch=int(rng.integers(30, 100)))
        for t in onsets
    ]
    notes.sort(key=lambda x: (x.onset_sec, x.pitch))
    return notes


def round_trip_params(sigma_t=0.005, lam=0.002, sigma_v=0.01) -> MergedModelParams:
    """Two clearly separated voices with a sticky 3-value rhythm vocabulary.

    Used by the recovery and scaling acceptance checks: values repeat with
    probability 0.8, chords are rare, pitch intervals are small enough that
    the registers (50 vs 80) never collide over ~60 notes.
    """
    grid = NoteValueGrid(values=(24, 48, 96))
    base = default_merged_params(grid)
    pi = np.array(
        [
            [0.8, 0.1, 0.1],
            [0.1, 0.8, 0.1],
            [0.1, 0.1, 0.8],
        ]
    )
    iv = np.arange(-MAX_INTERVAL, MAX_INTERVAL + 1)
    theta = np.exp(-np.abs(iv) / 1.2)
    v1 = dataclasses.replace(
        base.voice1,
        pi_ini=np.full(3, 1 / 3),
        pi=pi,
        beta=np.full(3, 0.08),
        gamma=np.full(3, 0.3),
        theta_interval=theta,
        mu_p=50.0,
        sigma_p=6.0,
        sigma_t=sigma_t,
        lam=lam,
        sigma_v=sigma_v,
        sigma_v_ini=0.03,
    )
    v2 = dataclasses.replace(v1, mu_p=80.0)
    return dataclasses.replace(base, voice1=v1, voice2=v2)


def polyrhythm_decode_params() -> MergedModelParams:
    """Decode-side parameters for the cross-rhythm benchmark.

    Shared by the two-voice decoder and the single-voice baseline: the value
    grid covers both patterns, values repeat with probability 0.7, and pitch
    intervals are sharp (each benchmark voice sits on one pitch).
    """
    grid = NoteValueGrid(values=(12, 16, 24, 32, 36, 48))
    r = len(grid)
    pi = np.full((r, r), 0.3 / (r - 1))
    np.fill_diagonal(pi, 0.7)
    base = default_merged_params(grid)
    iv = np.arange(-MAX_INTERVAL, MAX_INTERVAL + 1)
    theta = np.exp(-np.abs(iv) / 2.0)
    v1 = dataclasses.replace(
        base.voice1, pi=pi, theta_interval=theta, beta=np.full(r, 0.15)
    )
    v2 = dataclasses.replace(
        base.voice2, pi=pi, theta_interval=theta, beta=np.full(r, 0.15)
    )
    return dataclasses.replace(base, voice1=v1, voice2=v2)
