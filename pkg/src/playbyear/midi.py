"""Minimal type-0 Standard MIDI File writer and parser for note events.

Fixed grid: 480 ticks per quarter at 120 bpm, so one second is 960 ticks.
Frame indices round-trip exactly for the 32 ms analysis hop.
"""

import struct

from .env import NoteEvent

TICKS_PER_QUARTER = 480
TEMPO_BPM = 120
TEMPO_USEC = 60_000_000 // TEMPO_BPM


def _ticks_per_second() -> float:
    return TICKS_PER_QUARTER * TEMPO_BPM / 60.0


def frame_to_tick(frame: int, frame_duration_s: float) -> int:
    return int(round(frame * frame_duration_s * _ticks_per_second()))


def tick_to_frame(tick: int, frame_duration_s: float) -> int:
    return int(round(tick / (frame_duration_s * _ticks_per_second())))


def encode_vlq(value: int) -> bytes:
    """Variable-length quantity, MIDI's 7-bit big-endian integer encoding."""
    if value < 0:
        raise ValueError("delta times cannot be negative")
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def export_midi(notes, frame_duration_s: float, path) -> None:
    """Write notes as a single-track SMF; offs sort before ons at equal ticks."""
    events = []
    for note in notes:
        on = frame_to_tick(note.onset_frame, frame_duration_s)
        off = frame_to_tick(note.offset_frame, frame_duration_s)
        events.append((on, 1, note.pitch, note.velocity))
        events.append((off, 0, note.pitch, 64))
    events.sort(key=lambda e: (e[0], e[1], e[2]))

    track = bytearray()
    track += encode_vlq(0) + bytes([0xFF, 0x51, 0x03]) + struct.pack(">I", TEMPO_USEC)[1:]
    prev_tick = 0
    for tick, is_on, pitch, velocity in events:
        track += encode_vlq(tick - prev_tick)
        status = 0x90 if is_on else 0x80
        track += bytes([status, pitch, velocity])
        prev_tick = tick
    track += encode_vlq(0) + bytes([0xFF, 0x2F, 0x00])

    with open(path, "wb") as fh:
        fh.write(b"MThd" + struct.pack(">IHHH", 6, 0, 1, TICKS_PER_QUARTER))
        fh.write(b"MTrk" + struct.pack(">I", len(track)))
        fh.write(track)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def read(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ValueError("truncated MIDI data")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def byte(self) -> int:
        return self.read(1)[0]

    def peek(self) -> int:
        if self.pos >= len(self.data):
            raise ValueError("truncated MIDI data")
        return self.data[self.pos]

    def vlq(self) -> int:
        value = 0
        while True:
            b = self.byte()
            value = (value << 7) | (b & 0x7F)
            if not b & 0x80:
                return value


def parse_midi(path, frame_duration_s: float):
    """Read back note events from an SMF written by export_midi.

    Handles running status and type-0/1 layouts; on/off pairs are matched
    first-in-first-out per pitch. Returns notes sorted by (onset, pitch).
    """
    with open(path, "rb") as fh:
        data = fh.read()
    reader = _Reader(data)
    if reader.read(4) != b"MThd":
        raise ValueError(f"{path}: missing MThd header")
    header_len, fmt, n_tracks, division = struct.unpack(">IHHH", reader.read(10))
    if header_len != 6:
        reader.read(header_len - 6)
    if division & 0x8000:
        raise ValueError("SMPTE time division is not supported")

    notes = []
    open_notes: dict = {}
    for _ in range(n_tracks):
        if reader.read(4) != b"MTrk":
            raise ValueError(f"{path}: missing MTrk chunk")
        (length,) = struct.unpack(">I", reader.read(4))
        track = _Reader(reader.read(length))
        tick = 0
        status = None
        while track.pos < len(track.data):
            tick += track.vlq()
            if track.peek() & 0x80:
                status = track.byte()
            elif status is None:
                raise ValueError("running status before any status byte")
            if status == 0xFF:
                track.byte()  # meta type
                track.read(track.vlq())
                continue
            if status in (0xF0, 0xF7):
                track.read(track.vlq())
                continue
            kind = status & 0xF0
            if kind in (0x80, 0x90, 0xA0, 0xB0, 0xE0):
                d1, d2 = track.byte(), track.byte()
            elif kind in (0xC0, 0xD0):
                d1, d2 = track.byte(), None
            else:
                raise ValueError(f"unsupported status byte 0x{status:02x}")
            if kind == 0x90 and d2 > 0:
                open_notes.setdefault(d1, []).append((tick, d2))
            elif kind == 0x80 or (kind == 0x90 and d2 == 0):
                if not open_notes.get(d1):
                    raise ValueError(f"note-off without note-on for pitch {d1}")
                on_tick, velocity = open_notes[d1].pop(0)
                # Assumes the fixed 120 bpm grid this module writes.
                ticks_per_frame = frame_duration_s * division * TEMPO_BPM / 60.0
                onset = int(round(on_tick / ticks_per_frame))
                offset = int(round(tick / ticks_per_frame))
                notes.append(NoteEvent(onset, offset, d1, velocity))
    if any(stack for stack in open_notes.values()):
        raise ValueError("unterminated notes in MIDI file")
    notes.sort(key=lambda n: (n.onset_frame, n.pitch))
    return notes
