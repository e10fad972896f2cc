"""The transcription MDP: a random "world" track plus the agent's instrument.

Both audio streams run through the same render-and-analyze path, so an agent
that mirrors the world's keyboard on an identical preset produces bit-identical
frames and earns the maximal reward at every step.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import features, rewards, synth


@dataclass(frozen=True)
class NoteEvent:
    """Symbolic note: half-open frame interval [onset_frame, offset_frame)."""

    onset_frame: int
    offset_frame: int
    pitch: int
    velocity: int = 100

    def __post_init__(self):
        if self.offset_frame <= self.onset_frame:
            raise ValueError(
                f"offset {self.offset_frame} must exceed onset {self.onset_frame}"
            )
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch {self.pitch} outside [0, 127]")
        if not 1 <= self.velocity <= 127:
            raise ValueError(f"velocity {self.velocity} outside [1, 127]")


@dataclass
class WorldScore:
    """A note list with its tonal range and length in frames."""

    notes: list
    length_frames: int
    base_pitch: int
    n_keys: int
    max_polyphony: int = 1

    def validate(self) -> None:
        for note in self.notes:
            if not self.base_pitch <= note.pitch < self.base_pitch + self.n_keys:
                raise ValueError(f"note pitch {note.pitch} outside tonal range")
            if note.offset_frame > self.length_frames:
                raise ValueError("note extends past the end of the score")
        poly = polyphony_profile(self)
        if len(poly) and int(poly.max()) > self.max_polyphony:
            raise ValueError("score exceeds its declared polyphony limit")


def polyphony_profile(score: WorldScore) -> np.ndarray:
    """Number of simultaneously sounding notes at each frame."""
    counts = np.zeros(score.length_frames, dtype=int)
    for note in score.notes:
        counts[note.onset_frame : note.offset_frame] += 1
    return counts


def truth_activity(score: WorldScore, t: int) -> np.ndarray:
    """Binary key-activity vector at frame t (evaluation ground truth)."""
    if not 0 <= t < score.length_frames:
        raise ValueError(f"frame {t} outside [0, {score.length_frames})")
    row = np.zeros(score.n_keys, dtype=np.int8)
    for note in score.notes:
        if note.onset_frame <= t < note.offset_frame:
            row[note.pitch - score.base_pitch] = 1
    return row


def truth_matrix(score: WorldScore) -> np.ndarray:
    """(length_frames, n_keys) activity matrix for the whole score."""
    mat = np.zeros((score.length_frames, score.n_keys), dtype=np.int8)
    for note in score.notes:
        mat[note.onset_frame : note.offset_frame, note.pitch - score.base_pitch] = 1
    return mat


def save_score(score: WorldScore, path) -> None:
    payload = {
        "length_frames": score.length_frames,
        "base_pitch": score.base_pitch,
        "K": score.n_keys,
        "notes": [
            {
                "onset": n.onset_frame,
                "offset": n.offset_frame,
                "pitch": n.pitch,
                "velocity": n.velocity,
            }
            for n in score.notes
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_score(path) -> WorldScore:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    notes = [
        NoteEvent(n["onset"], n["offset"], n["pitch"], n.get("velocity", 100))
        for n in payload["notes"]
    ]
    score = WorldScore(
        notes=notes,
        length_frames=int(payload["length_frames"]),
        base_pitch=int(payload["base_pitch"]),
        n_keys=int(payload["K"]),
    )
    profile = polyphony_profile(score)
    score.max_polyphony = int(profile.max()) if len(profile) else 1
    score.validate()
    return score


@dataclass
class EpisodeConfig:
    """Everything that fixes one episode distribution."""

    n_keys: int = 12
    base_pitch: int = 60  # C4; default range spans one octave C4-B4
    episode_frames: int = 256
    context_c: int = 1
    world_preset: str = "piano"
    agent_preset: str = "piano"
    reward_kind: str = "combined_hellinger_cosine"
    max_polyphony: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_keys < 1:
            raise ValueError("n_keys must be at least 1")
        if self.episode_frames <= 2 * self.context_c:
            raise ValueError("episode_frames must exceed twice the context radius")
        if self.context_c < 0:
            raise ValueError("context_c must be non-negative")
        if not 1 <= self.max_polyphony <= self.n_keys:
            raise ValueError("max_polyphony must lie in [1, n_keys]")
        if self.base_pitch < 0 or self.base_pitch + self.n_keys - 1 > 127:
            raise ValueError("tonal range leaves [0, 127]")
        synth.get_preset(self.world_preset)
        synth.get_preset(self.agent_preset)
        rewards.get_reward_fn(self.reward_kind)


@dataclass
class StepResult:
    state: features.EnvState
    reward: float
    done: bool
    truth_frame: np.ndarray  # evaluation only; never part of the state


MIN_DURATION = 4
MAX_DURATION = 32
MAX_GAP = 16


def generate_world(config: EpisodeConfig, rng: np.random.Generator) -> WorldScore:
    """Draw a random score: uniform pitches, gaps, durations and chord sizes.

    Candidate notes that would exceed the polyphony limit, or that would
    collide with the same key already sounding, are truncated (or dropped
    when nothing remains).
    """
    length = config.episode_frames
    counts = np.zeros(length, dtype=int)
    active = np.zeros((length, config.n_keys), dtype=bool)
    notes = []
    onset = int(rng.integers(0, MAX_GAP + 1))
    while onset < length:
        chord = int(rng.integers(1, config.max_polyphony + 1))
        keys = rng.choice(config.n_keys, size=min(chord, config.n_keys), replace=False)
        for key in keys:
            duration = int(rng.integers(MIN_DURATION, MAX_DURATION + 1))
            end = min(onset + duration, length)
            # Leave one silent frame after the same key so distinct notes
            # stay distinct key presses.
            if onset > 0 and active[onset - 1, key]:
                continue
            stop = onset
            while stop < end and counts[stop] < config.max_polyphony and not active[stop, key]:
                stop += 1
            if stop == onset:
                continue
            counts[onset:stop] += 1
            active[onset:stop, key] = True
            notes.append(
                NoteEvent(onset, stop, config.base_pitch + int(key), velocity=100)
            )
        onset += int(rng.integers(0, MAX_GAP + 1))
        if not notes and onset >= length:
            break
    return WorldScore(
        notes=notes,
        length_frames=length,
        base_pitch=config.base_pitch,
        n_keys=config.n_keys,
        max_polyphony=config.max_polyphony,
    )


def action_space_size(n_keys: int, polyphonic: bool) -> int:
    """Count of distinct actions: every key combination, or one key at a time."""
    if n_keys < 1:
        raise ValueError("n_keys must be at least 1")
    return 2**n_keys if polyphonic else n_keys + 1


class TranscriptionEnv:
    """Gym-style environment: reset() then step(action) until done.

    The action is an absolute binary keyboard state of length n_keys. Rewards
    compare the world's current analysis frame with the one produced by the
    agent's instrument after the action, using the configured similarity.
    """

    def __init__(self, config: EpisodeConfig, world_score: WorldScore = None):
        self.config = config
        self.sample_rate = synth.SAMPLE_RATE
        self.window = features.WINDOW_SIZE
        self.hop = features.HOP_SIZE
        self.n_bins = features.N_BINS
        self._fixed_score = world_score
        if world_score is not None:
            if world_score.n_keys != config.n_keys or world_score.base_pitch != config.base_pitch:
                raise ValueError("fixed score tonal range does not match config")
            if world_score.length_frames != config.episode_frames:
                raise ValueError("fixed score length does not match episode_frames")
            world_score.validate()
        self._reward_fn = rewards.get_reward_fn(config.reward_kind)
        self.score = None
        self._t = None
        self._done = True

    @property
    def frame_duration_s(self) -> float:
        return self.hop / self.sample_rate

    def world_features(self) -> np.ndarray:
        """Compressed world spectrogram (n_bins, episode_frames) of this episode."""
        if self.score is None:
            raise RuntimeError("reset() the environment first")
        return self._world_compressed

    def reset(self, seed: int = None) -> StepResult:
        cfg = self.config
        if self._fixed_score is not None:
            self.score = self._fixed_score
        else:
            rng = np.random.default_rng(cfg.seed if seed is None else seed)
            self.score = generate_world(cfg, rng)
        self._truth = truth_matrix(self.score)
        self._render_world()
        self._agent = synth.Instrument(synth.get_preset(cfg.agent_preset), self.sample_rate)
        self._keyboard = synth.KeyboardState.silent(cfg.n_keys, cfg.base_pitch)
        # Trailing window - hop samples of agent audio; the analysis window
        # for a step is this tail plus the freshly rendered hop.
        self._agent_tail = np.zeros(self.window - self.hop)
        self._t = 0
        self._done = False
        state = features.assemble_state(
            self._world_compressed, 0, cfg.context_c, self._keyboard.pressed
        )
        return StepResult(state, 0.0, False, self._truth[0].copy())

    def _render_world(self) -> None:
        """Render the score hop by hop through the same path the agent uses."""
        cfg = self.config
        instrument = synth.Instrument(synth.get_preset(cfg.world_preset), self.sample_rate)
        keyboard = synth.KeyboardState.silent(cfg.n_keys, cfg.base_pitch)
        tail = np.zeros(self.window - self.hop)
        linear = np.empty((self.n_bins, cfg.episode_frames))
        for t in range(cfg.episode_frames):
            keyboard, events = synth.apply_keyboard(keyboard, self._truth[t])
            for kind, key in events:
                pitch = cfg.base_pitch + key
                if kind == "on":
                    instrument.note_on(pitch)
                else:
                    instrument.note_off(pitch)
            hop_samples = instrument.render(self.hop)
            analysis = np.concatenate([tail, hop_samples])
            linear[:, t] = features.window_magnitude(analysis)
            tail = analysis[self.hop :]
        self._world_linear = linear
        self._world_compressed = features.log_compress(linear)

    def step(self, action) -> StepResult:
        if self._t is None:
            raise RuntimeError("reset() the environment before stepping")
        if self._done:
            raise RuntimeError("episode finished; reset() before stepping again")
        cfg = self.config
        action = np.asarray(action)
        self._keyboard, events = synth.apply_keyboard(self._keyboard, action)
        for kind, key in events:
            pitch = cfg.base_pitch + key
            if kind == "on":
                self._agent.note_on(pitch)
            else:
                self._agent.note_off(pitch)
        hop_samples = self._agent.render(self.hop)
        analysis = np.concatenate([self._agent_tail, hop_samples])
        self._agent_tail = analysis[self.hop :]
        agent_frame = features.window_magnitude(analysis)
        t = self._t
        reward = self._reward_fn(self._world_linear[:, t], agent_frame)
        truth_frame = self._truth[t].copy()
        self._t = t + 1
        self._done = self._t >= cfg.episode_frames
        state = features.assemble_state(
            self._world_compressed, self._t, cfg.context_c, self._keyboard.pressed
        )
        return StepResult(state, float(reward), self._done, truth_frame)
