import dataclasses
import math

import numpy as np
import pytest
from scipy import stats

from helpers import random_merged_params, round_trip_params
from polyscribe.core import NoteValueGrid, TICKS_PER_QUARTER, canonicalize
from polyscribe.decoder import DecoderConfig, TempoGrid, decode_merged
from polyscribe.sampler import POLYRHYTHM_KINDS, SampleResult, make_polyrhythm_suite, sample_merged
from polyscribe.training import estimate_cluster_params
from polyscribe.voice_model import VoiceHmmParams


def single_voice_params(grid=None, **voice_overrides):
    """Merged params that always pick voice 1."""
    grid = grid or NoteValueGrid(values=(24, 48, 96))
    rng = np.random.default_rng(0)
    params = random_merged_params(rng, grid)
    voice1 = dataclasses.replace(params.voice1, **voice_overrides)
    voice2 = dataclasses.replace(
        params.voice2,
        u_ini=voice1.u_ini,
        sigma_v_ini=voice1.sigma_v_ini,
        sigma_v=voice1.sigma_v,
    )
    return dataclasses.replace(
        params, voice1=voice1, voice2=voice2, alpha=np.array([[1.0, 0.0]] * 4)
    )


class TestSampleMerged:
    def test_seed_determinism(self):
        params = round_trip_params()
        a = sample_merged(params, 20, 123)
        b = sample_merged(params, 20, 123)
        assert a.performance == b.performance
        assert a.truth.notes == b.truth.notes

    def test_generator_seed_matches_int_seed(self):
        params = round_trip_params()
        a = sample_merged(params, 15, 7)
        b = sample_merged(params, 15, np.random.default_rng(7))
        assert a.performance == b.performance

    def test_result_unpacks_as_triple(self):
        params = round_trip_params()
        result = sample_merged(params, 5, 1)
        perf, assignment, score = result
        assert perf is result.performance
        assert assignment is result.assignment
        assert score is result.score

    def test_n_notes_must_be_positive(self):
        with pytest.raises(ValueError):
            sample_merged(round_trip_params(), 0, 0)

    def test_rows_are_canonical_and_aligned(self):
        params = round_trip_params()
        result = sample_merged(params, 40, 5)
        assert result.performance == canonicalize(result.performance)
        for note, row, srow in zip(result.performance, result.truth.notes, result.score):
            assert note.onset_sec == row.onset_sec
            assert note.pitch == row.pitch
            assert srow.onset_tick == row.score_time
            assert srow.voice == row.voice

    def test_start_time_offsets_first_onset(self):
        params = round_trip_params()
        result = sample_merged(params, 8, 3, start_time=10.0)
        assert result.performance[0].onset_sec == 10.0

    def test_forced_voice_choice(self):
        result = sample_merged(single_voice_params(), 30, 2)
        assert all(s == 1 for s in result.assignment.s)
        assert all(row.voice == 1 for row in result.truth.notes)

    def test_score_times_advance_by_flagged_values(self):
        params = round_trip_params()
        result = sample_merged(params, 60, 11)
        for voice in (1, 2):
            rows = [r for r in result.truth.notes if r.voice == voice]
            for prev, cur in zip(rows, rows[1:]):
                assert cur.score_time == prev.score_time + prev.cluster_flag * prev.note_value

    def test_noise_free_onsets_follow_the_values(self):
        grid = NoteValueGrid(values=(24, 48, 96))
        params = single_voice_params(
            grid,
            beta=np.zeros(3),
            sigma_t=1e-9,
            lam=1e-9,
            sigma_v=1e-9,
            sigma_v_ini=1e-9,
        )
        tempo = 0.5
        result = sample_merged(params, 25, 4, tempo_grid=TempoGrid(tempo, tempo, 1))
        rows = result.truth.notes
        assert all(r.tempo == tempo for r in rows)
        for cur, nxt in zip(rows, rows[1:]):
            ioi = nxt.onset_sec - cur.onset_sec
            assert ioi == pytest.approx(cur.note_value / TICKS_PER_QUARTER * tempo, abs=1e-4)

    def test_grid_sampled_tempo_stays_on_the_grid(self):
        params = round_trip_params()
        grid = TempoGrid(0.4, 1.0, 6)
        result = sample_merged(params, 30, 9, tempo_grid=grid)
        assert result.truth.info["tempo_sampling"] == "grid"
        for row in result.truth.notes:
            assert min(abs(row.tempo - v) for v in grid.values) < 1e-12

    def test_flag_one_residuals_are_gaussian(self):
        grid = NoteValueGrid(values=(24, 48, 96))
        sigma_t = 0.01
        params = single_voice_params(
            grid, beta=np.zeros(3), sigma_t=sigma_t, lam=1e-9
        )
        tempo = 0.6
        result = sample_merged(params, 800, 17, tempo_grid=TempoGrid(tempo, tempo, 1))
        rows = result.truth.notes
        res = [
            (nxt.onset_sec - cur.onset_sec) - cur.note_value / TICKS_PER_QUARTER * tempo
            for cur, nxt in zip(rows, rows[1:])
        ]
        assert stats.kstest(np.array(res) / sigma_t, "norm").pvalue > 0.01

    def test_cluster_statistics_match_the_parameters(self):
        grid = NoteValueGrid(values=(24, 48))
        beta, gamma = 0.4, 0.5
        params = single_voice_params(
            grid,
            beta=np.full(2, beta),
            gamma=np.full(2, gamma),
            sigma_t=0.002,
            lam=0.001,
        )
        result = sample_merged(params, 4000, 23)
        beta_hat, gamma_hat = estimate_cluster_params([result.score], grid)
        np.testing.assert_allclose(beta_hat, beta, atol=0.05)
        np.testing.assert_allclose(gamma_hat, gamma, atol=0.06)

    def test_truth_log_prob_is_a_lower_bound_for_the_decoder(self):
        params = round_trip_params()
        grid = TempoGrid(0.4, 1.0, 8)
        checked = 0
        for seed in range(10):
            result = sample_merged(params, 5, seed, tempo_grid=grid)
            if not result.truth.info["order_preserved"]:
                assert math.isnan(result.truth.log_prob)
                continue
            assert math.isfinite(result.truth.log_prob)
            out = decode_merged(
                params, result.performance, DecoderConfig(tempo_grid=grid, n_h=5)
            )
            assert out.log_prob >= result.truth.log_prob - 1e-9
            checked += 1
        assert checked >= 3

    def test_continuous_tempo_has_no_exact_log_prob(self):
        params = round_trip_params()
        result = sample_merged(params, 10, 2)
        assert result.truth.info["tempo_sampling"] == "continuous"
        assert math.isnan(result.truth.log_prob)


class TestPolyrhythmSuite:
    def test_zero_noise_render_is_exact(self):
        (result,) = make_polyrhythm_suite(
            "3v2", 1, 0, n_bars=2, sec_per_quarter=0.5, sigma_t=0.0, lam=0.0, sigma_v=0.0
        )
        for row in result.truth.notes:
            expected = row.score_time / TICKS_PER_QUARTER * 0.5
            assert row.onset_sec == pytest.approx(expected, rel=1e-12, abs=1e-12)
            assert row.cluster_flag == 1
            assert row.tempo == 0.5
        v1 = [r.note_value for r in result.truth.notes if r.voice == 1]
        v2 = [r.note_value for r in result.truth.notes if r.voice == 2]
        assert v1 == [32] * 6
        assert v2 == [48] * 4

    def test_zero_noise_render_ignores_the_seed(self):
        kwargs = dict(n_bars=3, sigma_t=0.0, lam=0.0, sigma_v=0.0)
        (a,) = make_polyrhythm_suite("4v3", 1, 0, **kwargs)
        (b,) = make_polyrhythm_suite("4v3", 1, 999, **kwargs)
        assert a.performance == b.performance

    def test_four_against_three_shape(self):
        (result,) = make_polyrhythm_suite("4v3", 1, 1, n_bars=1)
        v1 = [r for r in result.truth.notes if r.voice == 1]
        v2 = [r for r in result.truth.notes if r.voice == 2]
        assert [r.note_value for r in sorted(v1, key=lambda r: r.score_time)] == [16] * 3
        assert [r.note_value for r in sorted(v2, key=lambda r: r.score_time)] == [12] * 4
        assert result.truth.info["bar_ticks"] == POLYRHYTHM_KINDS["4v3"]["bar_ticks"]
        assert result.assignment is None

    def test_instances_are_distinct_but_seeded(self):
        suite = make_polyrhythm_suite("3v2", 3, 42, n_bars=2)
        again = make_polyrhythm_suite("3v2", 3, 42, n_bars=2)
        assert len(suite) == len(again)
        assert all(x.performance == y.performance for x, y in zip(suite, again))
        assert suite[0].performance != suite[1].performance

    def test_performance_is_canonical(self):
        for result in make_polyrhythm_suite("4v3", 2, 7, n_bars=4):
            assert result.performance == canonicalize(result.performance)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError, match="4v3"):
            make_polyrhythm_suite("5v4", 1, 0)
        with pytest.raises(ValueError):
            make_polyrhythm_suite("3v2", 0, 0)
        with pytest.raises(ValueError):
            make_polyrhythm_suite("3v2", 1, 0, n_bars=0)
        with pytest.raises(ValueError):
            make_polyrhythm_suite("3v2", 1, 0, sigma_t=-0.1)
