"""Two-voice rhythm transcription of polyphonic MIDI performances.

Decodes performed onsets into quantized note values split across two voices
with a merged-output hidden Markov model, alongside simpler baselines, a
generative sampler, corpus training, and an edit-cost evaluation metric.
"""

from .core import (
    FormatError,
    NoteValueGrid,
    PerformanceNote,
    ScoreNote,
    TranscribedNote,
    Transcription,
    canonicalize,
    is_canonical,
    read_performance_tsv,
    read_score_tsv,
    read_transcription_tsv,
    transcription_to_score_notes,
    write_performance_tsv,
    write_score_tsv,
    write_transcription_tsv,
)
from .voice_model import VoiceHmmParams
from .merged_model import MergedModelParams, default_merged_params
from .decoder import (
    DecodeError,
    DecoderConfig,
    TempoGrid,
    build_tempo_grid,
    decode_cascade,
    decode_merged,
)
from .baselines import (
    MetricalParams,
    decode_metrical_hmm,
    decode_note_hmm,
    train_metrical,
)
from .training import train_merged_params
from .sampler import SampleResult, make_polyrhythm_suite, sample_merged
from .evaluation import (
    CostWeights,
    CorrectionCost,
    brute_force_correction_cost,
    build_scaling_space,
    pair_scaling_space,
    score_time_elements,
    evaluation_report,
    polyphonic_correction_cost,
    rhythm_correction_cost,
    voice_separation_accuracy,
)
from .midi import MalformedFile, NoNotes, UnsupportedFormat, read_smf
from .params_io import (
    dumps_params,
    loads_params,
    read_params_toml,
    write_params_toml,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "FormatError",
    "NoteValueGrid",
    "PerformanceNote",
    "ScoreNote",
    "TranscribedNote",
    "Transcription",
    "canonicalize",
    "is_canonical",
    "read_performance_tsv",
    "read_score_tsv",
    "read_transcription_tsv",
    "transcription_to_score_notes",
    "write_performance_tsv",
    "write_score_tsv",
    "write_transcription_tsv",
    "VoiceHmmParams",
    "MergedModelParams",
    "default_merged_params",
    "DecodeError",
    "DecoderConfig",
    "TempoGrid",
    "build_tempo_grid",
    "decode_cascade",
    "decode_merged",
    "MetricalParams",
    "decode_metrical_hmm",
    "decode_note_hmm",
    "train_metrical",
    "train_merged_params",
    "SampleResult",
    "make_polyrhythm_suite",
    "sample_merged",
    "CostWeights",
    "CorrectionCost",
    "brute_force_correction_cost",
    "build_scaling_space",
    "pair_scaling_space",
    "score_time_elements",
    "evaluation_report",
    "polyphonic_correction_cost",
    "rhythm_correction_cost",
    "voice_separation_accuracy",
    "MalformedFile",
    "NoNotes",
    "UnsupportedFormat",
    "read_smf",
    "dumps_params",
    "loads_params",
    "read_params_toml",
    "write_params_toml",
]
