"""Deterministic polyphonic additive synthesizer.

Converts key events into audio samples. Each voice is a bank of sinusoidal
partials shaped by a linear ADSR envelope; rendering is pure numpy with no
randomness, so identical event sequences always produce bit-identical buffers.
"""

from dataclasses import dataclass

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is an optional accelerator
    njit = None

SAMPLE_RATE = 16000

ATTACK = "attack"
DECAY = "decay"
SUSTAIN = "sustain"
RELEASE = "release"
DEAD = "dead"


@dataclass(frozen=True)
class InstrumentPreset:
    """Additive-synth program: partial weights plus an ADSR envelope.

    partial_amplitudes[0] weights the fundamental; partial h additionally
    rolls off by (h+1) ** -decay_per_partial.
    """

    name: str
    partial_amplitudes: tuple
    attack_s: float
    decay_s: float
    sustain_level: float
    release_s: float
    decay_per_partial: float

    def __post_init__(self):
        if len(self.partial_amplitudes) == 0:
            raise ValueError("preset needs at least one partial")
        if any(a < 0 for a in self.partial_amplitudes):
            raise ValueError("partial amplitudes must be non-negative")
        if self.partial_amplitudes[0] <= 0:
            raise ValueError("fundamental amplitude must be positive")
        if not 0.0 <= self.sustain_level <= 1.0:
            raise ValueError("sustain_level must lie in [0, 1]")
        if min(self.attack_s, self.decay_s, self.release_s) < 0:
            raise ValueError("envelope times must be non-negative")


PRESETS = {
    # Percussive: power concentrates at onsets (sustain decays to zero).
    "piano": InstrumentPreset(
        name="piano",
        partial_amplitudes=(1.0,) * 8,
        attack_s=0.005,
        decay_s=1.5,
        sustain_level=0.0,
        release_s=0.1,
        decay_per_partial=1.0,
    ),
    # Fewer, faster-decaying partials: a darker pluck for the
    # changed-acoustics experiments.
    "guitar": InstrumentPreset(
        name="guitar",
        partial_amplitudes=(1.0,) * 6,
        attack_s=0.003,
        decay_s=1.0,
        sustain_level=0.0,
        release_s=0.08,
        decay_per_partial=1.5,
    ),
}


def get_preset(name: str) -> InstrumentPreset:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    return PRESETS[name]


def pitch_to_frequency(pitch: int) -> float:
    """Equal-temperament frequency in Hz for a pitch number (A4 = 69 = 440 Hz)."""
    if not 0 <= pitch <= 127:
        raise ValueError(f"pitch {pitch} outside [0, 127]")
    return 440.0 * 2.0 ** ((pitch - 69) / 12.0)


@dataclass
class KeyboardState:
    """Binary pressed-vector of length K; key 0 sounds base_pitch."""

    pressed: np.ndarray
    base_pitch: int

    @classmethod
    def silent(cls, n_keys: int, base_pitch: int) -> "KeyboardState":
        return cls(np.zeros(n_keys, dtype=np.int8), base_pitch)


def apply_keyboard(prev: KeyboardState, action: np.ndarray):
    """Move the keyboard to an absolute target state.

    Returns (new KeyboardState, events) where events is a list of
    ("on"|"off", key_index) pairs in ascending key order, one per key whose
    state changed. Holding a key emits nothing, so a pressed key can never
    retrigger.
    """
    action = np.asarray(action)
    if action.shape != prev.pressed.shape:
        raise ValueError(
            f"action length {action.shape} does not match keyboard {prev.pressed.shape}"
        )
    new_pressed = (action != 0).astype(np.int8)
    events = []
    for key in range(len(new_pressed)):
        if prev.pressed[key] == 0 and new_pressed[key] == 1:
            events.append(("on", key))
        elif prev.pressed[key] == 1 and new_pressed[key] == 0:
            events.append(("off", key))
    return KeyboardState(new_pressed, prev.base_pitch), events


@dataclass
class VoiceState:
    """One sounding note: per-partial phase accumulators plus envelope stage."""

    pitch: int
    phases: np.ndarray
    stage: str = ATTACK
    stage_time_s: float = 0.0
    amplitude_at_release: float = 0.0

    @classmethod
    def start(cls, pitch: int, n_partials: int) -> "VoiceState":
        return cls(pitch=pitch, phases=np.zeros(n_partials))


def envelope_value(preset: InstrumentPreset, voice: VoiceState) -> float:
    """Instantaneous envelope amplitude for a voice."""
    t = voice.stage_time_s
    if voice.stage == ATTACK:
        return 1.0 if preset.attack_s == 0 else min(1.0, t / preset.attack_s)
    if voice.stage == DECAY:
        if preset.decay_s == 0:
            return preset.sustain_level
        frac = min(1.0, t / preset.decay_s)
        return 1.0 + (preset.sustain_level - 1.0) * frac
    if voice.stage == SUSTAIN:
        return preset.sustain_level
    if voice.stage == RELEASE:
        if preset.release_s == 0:
            return 0.0
        frac = min(1.0, t / preset.release_s)
        return voice.amplitude_at_release * (1.0 - frac)
    return 0.0


def _envelope_block(preset: InstrumentPreset, voice: VoiceState, n: int, dt: float):
    """Fill an n-sample envelope buffer, advancing the voice's stage machine.

    Stages are piecewise linear, so each stage segment is a vectorized ramp.
    The voice's stage and stage_time_s are updated to the end of the block.
    Returns (buffer, nonzero flag).
    """
    env = np.empty(n)
    nonzero = False
    i = 0
    while i < n:
        t0 = voice.stage_time_s
        if voice.stage == ATTACK:
            if t0 >= preset.attack_s:
                voice.stage, voice.stage_time_s = DECAY, 0.0
                continue
            n_left = int(np.ceil((preset.attack_s - t0) / dt))
            m = min(n_left, n - i)
            env[i : i + m] = (t0 + np.arange(m) * dt) / preset.attack_s
            voice.stage_time_s = t0 + m * dt
            nonzero = True
            i += m
        elif voice.stage == DECAY:
            if t0 >= preset.decay_s:
                voice.stage, voice.stage_time_s = SUSTAIN, 0.0
                continue
            n_left = int(np.ceil((preset.decay_s - t0) / dt))
            m = min(n_left, n - i)
            frac = (t0 + np.arange(m) * dt) / preset.decay_s
            env[i : i + m] = 1.0 + (preset.sustain_level - 1.0) * frac
            voice.stage_time_s = t0 + m * dt
            nonzero = True
            i += m
        elif voice.stage == SUSTAIN:
            env[i:] = preset.sustain_level
            voice.stage_time_s = t0 + (n - i) * dt
            nonzero = nonzero or preset.sustain_level > 0.0
            i = n
        elif voice.stage == RELEASE:
            if t0 >= preset.release_s:
                voice.stage, voice.stage_time_s = DEAD, 0.0
                continue
            n_left = int(np.ceil((preset.release_s - t0) / dt))
            m = min(n_left, n - i)
            frac = (t0 + np.arange(m) * dt) / preset.release_s
            env[i : i + m] = voice.amplitude_at_release * (1.0 - frac)
            voice.stage_time_s = t0 + m * dt
            nonzero = nonzero or voice.amplitude_at_release > 0.0
            i += m
        else:  # DEAD
            env[i:] = 0.0
            i = n
    return env, nonzero


def _osc_accum_numpy(out, env, phase0, incr, amps):
    phases = phase0[:, None] + incr[:, None] * np.arange(out.shape[0])
    out += env * (amps @ np.sin(phases))


if njit is not None:
    # Oscillator bank via the Chebyshev recurrence
    # sin(t + w) = 2 cos(w) sin(t) - sin(t - w),
    # re-anchored from the exact phase accumulator at every frame, so roundoff
    # cannot drift across frames. The voice contribution env * sum_p(...) is
    # built in a scratch buffer and added to `out` in one pass, which keeps
    # rendering exactly additive per voice.
    @njit(cache=True)
    def _osc_accum(out, env, phase0, incr, amps):  # pragma: no cover - jitted
        n = out.shape[0]
        tmp = np.zeros(n)
        for p in range(phase0.shape[0]):
            a = amps[p]
            if a == 0.0:
                continue
            w = incr[p]
            coeff = 2.0 * np.cos(w)
            s_prev = np.sin(phase0[p] - w)
            s_cur = np.sin(phase0[p])
            for i in range(n):
                tmp[i] += a * s_cur
                s_next = coeff * s_cur - s_prev
                s_prev = s_cur
                s_cur = s_next
        for i in range(n):
            out[i] += env[i] * tmp[i]

else:  # pragma: no cover
    _osc_accum = _osc_accum_numpy


def _voice_tables(preset: InstrumentPreset, pitch: int, sample_rate: int):
    """Cached per-partial (phase increment, weight, audible mask) arrays."""
    key = (preset, pitch, sample_rate)
    tables = _VOICE_TABLES.get(key)
    if tables is None:
        n = len(preset.partial_amplitudes)
        freqs = pitch_to_frequency(pitch) * np.arange(1, n + 1)
        incr = 2.0 * np.pi * freqs / sample_rate
        amps = np.asarray(preset.partial_amplitudes) * np.arange(1, n + 1, dtype=float) ** (
            -preset.decay_per_partial
        )
        audible = freqs < sample_rate / 2.0  # drop aliasing partials
        tables = (incr, amps * audible, bool(audible.any()))
        _VOICE_TABLES[key] = tables
    return tables


_VOICE_TABLES: dict = {}


def render_frame(voices, preset: InstrumentPreset, n_samples: int, sample_rate: int = SAMPLE_RATE):
    """Render n_samples of audio from the given voices.

    Returns (buffer, voices). Voice states are advanced in place: phases move
    forward continuously and voices whose release has finished become dead.
    Dead voices contribute exactly zero. All sounding partials are batched
    into a single oscillator-bank evaluation.
    """
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    dt = 1.0 / sample_rate
    out = np.zeros(n_samples)
    for voice in voices:
        if voice.stage == DEAD:
            continue
        env, nonzero = _envelope_block(preset, voice, n_samples, dt)
        incr, amps, any_audible = _voice_tables(preset, voice.pitch, sample_rate)
        if nonzero and any_audible:
            _osc_accum(out, env, voice.phases, incr, amps)
        voice.phases = np.mod(voice.phases + incr * n_samples, 2.0 * np.pi)
    return out, voices


class Instrument:
    """Stateful wrapper: holds live voices for one player and renders hops."""

    def __init__(self, preset: InstrumentPreset, sample_rate: int = SAMPLE_RATE):
        self.preset = preset
        self.sample_rate = sample_rate
        self.voices: list = []

    def note_on(self, pitch: int) -> None:
        self.voices.append(VoiceState.start(pitch, len(self.preset.partial_amplitudes)))

    def note_off(self, pitch: int) -> None:
        for voice in self.voices:
            if voice.pitch == pitch and voice.stage not in (RELEASE, DEAD):
                voice.amplitude_at_release = envelope_value(self.preset, voice)
                voice.stage = RELEASE
                voice.stage_time_s = 0.0
                return

    def render(self, n_samples: int) -> np.ndarray:
        buf, _ = render_frame(self.voices, self.preset, n_samples, self.sample_rate)
        self.voices = [v for v in self.voices if v.stage != DEAD]
        return buf
