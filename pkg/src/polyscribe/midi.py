"""Standard MIDI File ingestion.

Reads format 0 and format 1 files: note-on events across all tracks are
merged on the shared tick timeline, converted to seconds through the file's
tempo map, and canonicalized.  Note-offs (including the note-on-velocity-0
spelling) become note offsets.  Channel 10 is percussion and is dropped.
"""

from __future__ import annotations

from pathlib import Path

from .core import FormatError, PerformanceNote, canonicalize

__all__ = ["MalformedFile", "UnsupportedFormat", "NoNotes", "read_smf"]

DEFAULT_USPQ = 500_000  # microseconds per quarter note (120 BPM)
PERCUSSION_CHANNEL = 9  # zero-based channel number of GM channel 10


class MalformedFile(FormatError):
    """The byte stream is not a well-formed Standard MIDI File."""


class UnsupportedFormat(FormatError):
    """Well-formed, but a variant this reader does not handle (e.g. SMF 2)."""


class NoNotes(FormatError):
    """The file contains no usable note events."""


class _Cursor:
    def __init__(self, data: bytes, pos: int, end: int):
        self.data = data
        self.pos = pos
        self.end = end

    def u8(self) -> int:
        if self.pos >= self.end:
            raise MalformedFile("track data ended mid-event")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def skip(self, n: int):
        if self.pos + n > self.end:
            raise MalformedFile("track data ended mid-event")
        self.pos += n

    def varlen(self) -> int:
        value = 0
        for _ in range(4):
            b = self.u8()
            value = (value << 7) | (b & 0x7F)
            if not b & 0x80:
                return value
        raise MalformedFile("variable-length quantity longer than 4 bytes")


def _parse_track(data: bytes, start: int, end: int, track_no: int, events: list, tempos: list):
    cur = _Cursor(data, start, end)
    tick = 0
    status = None
    seq = 0
    while cur.pos < cur.end:
        tick += cur.varlen()
        b = cur.u8()
        if b >= 0x80:
            status = b
            if b < 0xF0:
                first = cur.u8()
            else:
                first = None
        else:
            if status is None or status >= 0xF0:
                raise MalformedFile("data byte without a running status")
            first = b
        if status < 0xF0:
            kind = status & 0xF0
            channel = status & 0x0F
            if kind in (0x80, 0x90, 0xA0, 0xB0, 0xE0):
                second = cur.u8()
            else:  # 0xC0, 0xD0
                second = None
            if kind == 0x90 and second > 0:
                events.append((tick, track_no, seq, "on", channel, first))
            elif kind == 0x80 or (kind == 0x90 and second == 0):
                events.append((tick, track_no, seq, "off", channel, first))
            seq += 1
        elif status in (0xF0, 0xF7):
            cur.skip(cur.varlen())
            status = None
        elif status == 0xFF:
            meta = cur.u8()
            length = cur.varlen()
            if meta == 0x51 and length == 3:
                uspq = int.from_bytes(cur.data[cur.pos : cur.pos + 3], "big")
                if uspq <= 0:
                    raise MalformedFile("non-positive tempo")
                tempos.append((tick, uspq))
                cur.skip(3)
            elif meta == 0x2F:
                cur.skip(length)
                return
            else:
                cur.skip(length)
            status = None
        else:
            raise MalformedFile(f"unexpected status byte 0x{status:02x}")


def _tick_to_seconds(tempos: list, division: int):
    """Piecewise-linear tick → seconds map from sorted tempo changes."""
    segments = []  # (tick, seconds_at_tick, uspq)
    t_sec = 0.0
    prev_tick = 0
    uspq = DEFAULT_USPQ
    for tick, new_uspq in tempos:
        t_sec += (tick - prev_tick) * uspq / division / 1e6
        prev_tick = tick
        uspq = new_uspq
        segments.append((tick, t_sec, uspq))
    if not segments or segments[0][0] > 0:
        segments.insert(0, (0, 0.0, segments[0][2] if segments and segments[0][0] == 0 else DEFAULT_USPQ))

    def convert(tick: int) -> float:
        lo_tick, lo_sec, lo_uspq = segments[0]
        for seg_tick, seg_sec, seg_uspq in segments:
            if seg_tick <= tick:
                lo_tick, lo_sec, lo_uspq = seg_tick, seg_sec, seg_uspq
            else:
                break
        return lo_sec + (tick - lo_tick) * lo_uspq / division / 1e6

    return convert


def read_smf(path) -> list[PerformanceNote]:
    """Read a format 0/1 Standard MIDI File as a canonical performance."""
    data = Path(path).read_bytes()
    if len(data) < 14 or data[:4] != b"MThd":
        raise MalformedFile("missing MThd header")
    header_len = int.from_bytes(data[4:8], "big")
    if header_len < 6:
        raise MalformedFile("header chunk too short")
    fmt = int.from_bytes(data[8:10], "big")
    n_tracks = int.from_bytes(data[10:12], "big")
    division = int.from_bytes(data[12:14], "big")
    if fmt not in (0, 1):
        raise UnsupportedFormat(f"SMF format {fmt} unsupported (only 0 and 1)")
    if division & 0x8000:
        raise UnsupportedFormat("SMPTE time division unsupported")
    if division == 0:
        raise MalformedFile("zero ticks per quarter note")

    events: list = []
    tempos: list = []
    pos = 8 + header_len
    tracks_seen = 0
    while pos + 8 <= len(data):
        chunk_type = data[pos : pos + 4]
        chunk_len = int.from_bytes(data[pos + 4 : pos + 8], "big")
        body_start = pos + 8
        body_end = body_start + chunk_len
        if body_end > len(data):
            raise MalformedFile("chunk extends past end of file")
        if chunk_type == b"MTrk":
            _parse_track(data, body_start, body_end, tracks_seen, events, tempos)
            tracks_seen += 1
        pos = body_end
    if tracks_seen == 0:
        raise MalformedFile("no track chunks")
    if tracks_seen < n_tracks:
        raise MalformedFile(f"header promises {n_tracks} tracks, found {tracks_seen}")

    tempos.sort(key=lambda t: t[0])
    convert = _tick_to_seconds(tempos, division)

    events.sort(key=lambda e: (e[0], e[1], e[2]))
    notes: list[PerformanceNote] = []
    open_notes: dict[tuple[int, int], list[int]] = {}
    offsets: dict[int, float] = {}
    for tick, _track, _seq, kind, channel, pitch in events:
        if channel == PERCUSSION_CHANNEL:
            continue
        key = (channel, pitch)
        if kind == "on":
            open_notes.setdefault(key, []).append(len(notes))
            notes.append(PerformanceNote(onset_sec=convert(tick), pitch=pitch))
        else:
            stack = open_notes.get(key)
            if stack:
                offsets[stack.pop(0)] = convert(tick)
    if not notes:
        raise NoNotes("no note events on melodic channels")
    notes = [
        PerformanceNote(n.onset_sec, n.pitch, offsets.get(i))
        for i, n in enumerate(notes)
    ]
    return canonicalize(notes)
