"""Core types and file formats shared by every other module.

Time units: performance onsets are seconds (float), score times are integer
ticks with 48 ticks per quarter note.  A "note value" is the quantized
duration between successive score onsets of one voice, expressed in ticks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

TICKS_PER_QUARTER = 48
PITCH_MIN = 21
PITCH_MAX = 108
N_PITCHES = PITCH_MAX - PITCH_MIN + 1

# Tick lengths of the supported note values: plain binary values from a
# whole note down to a 32nd, their dotted variants, and the triplet values.
# 6 does not get a dotted variant (9 ticks would leave the 32nd lattice)
# and 192 no triplet counterpart (128 is unused in the corpora).
DEFAULT_NOTE_VALUES = (6, 8, 12, 16, 18, 24, 32, 36, 48, 64, 72, 96, 144, 192, 288)


class FormatError(ValueError):
    """Raised for malformed files and parameter documents."""


@dataclass(frozen=True)
class NoteValueGrid:
    """Ordered roster of candidate note values (ticks)."""

    values: tuple = DEFAULT_NOTE_VALUES
    ticks_per_quarter: int = TICKS_PER_QUARTER

    def __post_init__(self):
        if len(self.values) == 0:
            raise ValueError("note value grid must not be empty")
        if len(set(self.values)) != len(self.values):
            raise ValueError("duplicate note values in grid")
        for v in self.values:
            if not isinstance(v, int) or v <= 0:
                raise ValueError(f"note values must be positive integers, got {v!r}")
        if self.ticks_per_quarter <= 0:
            raise ValueError("ticks_per_quarter must be positive")

    def __len__(self):
        return len(self.values)

    def index(self, value: int) -> int:
        try:
            return self.values.index(value)
        except ValueError:
            raise ValueError(f"note value {value} not in grid") from None

    def quarters(self, value: int) -> float:
        """Length of `value` in quarter notes."""
        return value / self.ticks_per_quarter


@dataclass(frozen=True)
class ClusterState:
    """Hidden state of one note: its cluster's note value (ticks) and the
    flag telling whether the next note of the same voice shares the cluster
    (flag=0) or starts value ticks later (flag=1)."""

    value: int
    flag: int

    def __post_init__(self):
        if self.flag not in (0, 1):
            raise ValueError("cluster flag must be 0 or 1")
        if self.value <= 0:
            raise ValueError("cluster value must be positive")


@dataclass(frozen=True)
class PerformanceNote:
    onset_sec: float
    pitch: int
    offset_sec: float | None = None

    def __post_init__(self):
        if not math.isfinite(self.onset_sec):
            raise ValueError("onset must be finite")
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch {self.pitch} outside MIDI range")
        if self.offset_sec is not None and self.offset_sec < self.onset_sec:
            raise ValueError("offset before onset")


@dataclass(frozen=True)
class ScoreNote:
    voice: int
    onset_tick: int
    pitch: int
    value_tick: int

    def __post_init__(self):
        if self.voice < 1:
            raise ValueError("voices are numbered from 1")
        if self.value_tick <= 0:
            raise ValueError("cluster value must be positive")
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch {self.pitch} outside MIDI range")


@dataclass(frozen=True)
class TranscribedNote:
    onset_sec: float
    pitch: int
    voice: int
    note_value: int
    cluster_flag: int
    score_time: int
    tempo: float


@dataclass
class Transcription:
    notes: list
    log_prob: float
    model: str = "merged"
    info: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.notes)


def canonicalize(notes) -> list:
    """Sort performance notes by onset, breaking ties by ascending pitch.

    Equal-onset groups keep no input-order information; downstream code may
    rely on this ordering being a pure function of (onset, pitch) pairs.
    """
    return sorted(notes, key=lambda n: (n.onset_sec, n.pitch))


def is_canonical(notes) -> bool:
    return all(
        (a.onset_sec, a.pitch) <= (b.onset_sec, b.pitch)
        for a, b in zip(notes, notes[1:])
    )


# ---------------------------------------------------------------------------
# TSV formats.  All files are UTF-8, tab separated, with '#' comment lines.


def _data_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, line.split("\t")


def read_performance_tsv(text: str) -> list:
    """Parse `onset_sec<TAB>pitch[<TAB>offset_sec]` rows."""
    notes = []
    for lineno, fields in _data_lines(text):
        if len(fields) not in (2, 3):
            raise FormatError(f"line {lineno}: expected 2 or 3 fields, got {len(fields)}")
        try:
            onset = float(fields[0])
            pitch = int(fields[1])
            offset = float(fields[2]) if len(fields) == 3 else None
            notes.append(PerformanceNote(onset, pitch, offset))
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    if not notes:
        raise FormatError("no notes in performance file")
    return notes


def write_performance_tsv(notes) -> str:
    lines = ["# onset_sec\tpitch\toffset_sec"]
    for n in notes:
        if n.offset_sec is None:
            lines.append(f"{n.onset_sec:.6f}\t{n.pitch}")
        else:
            lines.append(f"{n.onset_sec:.6f}\t{n.pitch}\t{n.offset_sec:.6f}")
    return "\n".join(lines) + "\n"


def read_score_tsv(text: str) -> list:
    """Parse `voice<TAB>onset_tick<TAB>pitch<TAB>value_tick` rows."""
    notes = []
    for lineno, fields in _data_lines(text):
        if len(fields) != 4:
            raise FormatError(f"line {lineno}: expected 4 fields, got {len(fields)}")
        try:
            notes.append(
                ScoreNote(int(fields[0]), int(fields[1]), int(fields[2]), int(fields[3]))
            )
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    if not notes:
        raise FormatError("no notes in score file")
    return notes


def write_score_tsv(notes) -> str:
    lines = ["# voice\tonset_tick\tpitch\tvalue_tick"]
    for n in notes:
        lines.append(f"{n.voice}\t{n.onset_tick}\t{n.pitch}\t{n.value_tick}")
    return "\n".join(lines) + "\n"


def write_transcription_tsv(t: Transcription) -> str:
    lines = [
        "# note_index\tonset_sec\tpitch\tvoice\tnote_value_tick"
        "\tcluster_flag\tscore_time_tick\ttempo_sec_per_quarter"
    ]
    for i, n in enumerate(t.notes):
        lines.append(
            f"{i}\t{n.onset_sec:.6f}\t{n.pitch}\t{n.voice}\t{n.note_value}"
            f"\t{n.cluster_flag}\t{n.score_time}\t{n.tempo:.6f}"
        )
    lines.append(f"# log_prob\t{t.log_prob:.6f}")
    return "\n".join(lines) + "\n"


def read_transcription_tsv(text: str) -> Transcription:
    notes = []
    log_prob = math.nan
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            fields = line[1:].strip().split("\t")
            if len(fields) == 2 and fields[0] == "log_prob":
                log_prob = float(fields[1])
            continue
        fields = line.split("\t")
        if len(fields) != 8:
            raise FormatError(f"line {lineno}: expected 8 fields, got {len(fields)}")
        try:
            notes.append(
                TranscribedNote(
                    onset_sec=float(fields[1]),
                    pitch=int(fields[2]),
                    voice=int(fields[3]),
                    note_value=int(fields[4]),
                    cluster_flag=int(fields[5]),
                    score_time=int(fields[6]),
                    tempo=float(fields[7]),
                )
            )
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    if not notes:
        raise FormatError("no notes in transcription file")
    return Transcription(notes=notes, log_prob=log_prob)


def transcription_to_score_notes(t: Transcription) -> list:
    """Per-note score view of a transcription, row-aligned with the input."""
    return [
        ScoreNote(n.voice, n.score_time, n.pitch, n.note_value) for n in t.notes
    ]
