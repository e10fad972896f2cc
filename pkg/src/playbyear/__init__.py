"""playbyear: learn polyphonic transcription by playing along.

An agent hears a synthesized "world" track, plays a virtual instrument, and
is rewarded by the acoustic similarity between the two streams; no labels are
used for training. Ground truth exists only on the evaluation side.
"""

from .agent import (
    Hyperparams,
    ModelDims,
    ParamSet,
    Trajectory,
    adam_step,
    compute_returns,
    init_params,
    load_checkpoint,
    policy_forward,
    reinforce_grad,
    sample_action,
    save_checkpoint,
    train_a2c,
)
from .env import (
    EpisodeConfig,
    NoteEvent,
    TranscriptionEnv,
    WorldScore,
    action_space_size,
    generate_world,
    load_score,
    save_score,
    truth_activity,
)
from .features import EnvState, assemble_state, flatten_state, stft_magnitude
from .metrics import FrameCounts, extract_notes, prf, update_counts
from .rewards import (
    hellinger,
    reward_combined,
    reward_cosine,
    reward_neg_l1,
    reward_neg_l2,
)
from .runlog import RunLog, correlate
from .synth import (
    Instrument,
    InstrumentPreset,
    KeyboardState,
    PRESETS,
    VoiceState,
    apply_keyboard,
    pitch_to_frequency,
    render_frame,
)

__version__ = "0.1.0"
