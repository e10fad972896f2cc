"""Experiment harness: named experiment recipes, config handling, artifacts.

A run trains (or evaluates) an agent and leaves reproducible artifacts in the
output directory: runlog.csv, checkpoint.bin, the best episode's transcription
as score JSON and MIDI, and, for the polyphonic-agent recipes, a piano-roll
CSV for inspecting how key presses cluster around onsets.
"""

import argparse
import dataclasses
import importlib.resources
import json
import os
import sys

import numpy as np

from . import agent, metrics, midi
from .env import EpisodeConfig, TranscriptionEnv, load_score, save_score, WorldScore
from .metrics import extract_notes
from .runlog import RunLog, correlate

EXPERIMENTS = ("mono_mono", "fixed_melody_adapt", "mono_poly", "poly_poly")


class ConfigError(ValueError):
    pass


@dataclasses.dataclass
class RunConfig:
    episode: EpisodeConfig
    hyper: agent.Hyperparams
    experiment: str = "mono_mono"
    episodes: int = 1000
    output_dir: str = "runs/out"
    checkpoint_in: str = None

    @property
    def mode(self) -> str:
        return agent.MONO if self.experiment in ("mono_mono", "fixed_melody_adapt") else agent.POLY

    def validate(self) -> "RunConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; have {EXPERIMENTS}")
        if self.episodes < 0:
            raise ConfigError("episodes must be non-negative")
        if self.episode.context_c != self.hyper.c:
            raise ConfigError(
                f"context radius mismatch: episode.context_c={self.episode.context_c} "
                f"vs hyper.c={self.hyper.c}"
            )
        if self.experiment in ("mono_mono", "fixed_melody_adapt", "mono_poly"):
            if self.episode.max_polyphony != 1:
                raise ConfigError(f"{self.experiment} requires max_polyphony=1")
        elif self.episode.max_polyphony < 2:
            raise ConfigError("poly_poly requires max_polyphony >= 2")
        if self.experiment == "fixed_melody_adapt":
            fixed = twinkle_score()
            if (
                fixed.length_frames != self.episode.episode_frames
                or fixed.n_keys != self.episode.n_keys
                or fixed.base_pitch != self.episode.base_pitch
            ):
                raise ConfigError(
                    "fixed_melody_adapt needs episode_frames=256, n_keys=12, base_pitch=60"
                )
        return self


def twinkle_score() -> WorldScore:
    """The packaged fixed melody used by the adaptation experiment."""
    ref = importlib.resources.files("playbyear") / "melodies" / "twinkle.score.json"
    with importlib.resources.as_file(ref) as path:
        return load_score(path)


def _merge_dataclass(cls, defaults, overrides: dict, where: str):
    values = dataclasses.asdict(defaults)
    for key, val in overrides.items():
        if key not in values:
            raise ConfigError(f"unknown key {where}.{key}")
        values[key] = val
    try:
        return cls(**values)
    except ValueError as exc:
        raise ConfigError(f"invalid {where} config: {exc}") from exc


def load_run_config(path=None, overrides: dict = None) -> RunConfig:
    """Build a RunConfig from defaults, an optional JSON file, then overrides."""
    payload = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        if not isinstance(payload, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
    overrides = overrides or {}
    episode = _merge_dataclass(EpisodeConfig, EpisodeConfig(), payload.get("episode", {}), "episode")
    hyper = _merge_dataclass(agent.Hyperparams, agent.Hyperparams(), payload.get("hyper", {}), "hyper")
    known = {"episode", "hyper", "experiment", "episodes", "output_dir", "checkpoint_in"}
    unknown = set(payload) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    config = RunConfig(
        episode=episode,
        hyper=hyper,
        experiment=payload.get("experiment", "mono_mono"),
        episodes=int(payload.get("episodes", 1000)),
        output_dir=payload.get("output_dir", "runs/out"),
        checkpoint_in=payload.get("checkpoint_in"),
    )
    if "seed" in overrides and overrides["seed"] is not None:
        config.episode = dataclasses.replace(config.episode, seed=int(overrides["seed"]))
    if "episodes" in overrides and overrides["episodes"] is not None:
        config.episodes = int(overrides["episodes"])
    if "output_dir" in overrides and overrides["output_dir"] is not None:
        config.output_dir = overrides["output_dir"]
    if "checkpoint_in" in overrides and overrides["checkpoint_in"] is not None:
        config.checkpoint_in = overrides["checkpoint_in"]
    return config.validate()


def env_factory_for(config: RunConfig):
    fixed = twinkle_score() if config.experiment == "fixed_melody_adapt" else None
    episode_cfg = config.episode

    def factory():
        return TranscriptionEnv(episode_cfg, world_score=fixed)

    return factory


def write_pianoroll_csv(path, actions: np.ndarray, truth: np.ndarray) -> None:
    """Frame-by-frame predicted and true key activity of one episode."""
    n_keys = actions.shape[1]
    header = (
        ["frame"]
        + [f"pred_{k}" for k in range(n_keys)]
        + [f"truth_{k}" for k in range(n_keys)]
    )
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for t in range(actions.shape[0]):
            row = [str(t)] + [str(int(v)) for v in actions[t]] + [
                str(int(v)) for v in truth[t]
            ]
            fh.write(",".join(row) + "\n")


def run(config: RunConfig, stop_when=None, quiet: bool = False) -> RunLog:
    """Execute one experiment recipe and write its artifacts."""
    config.validate()
    os.makedirs(config.output_dir, exist_ok=True)
    params = None
    if config.checkpoint_in is not None:
        params, _, _ = agent.load_checkpoint(config.checkpoint_in)
        if params.dims.mode != config.mode:
            raise ConfigError(
                f"checkpoint mode {params.dims.mode!r} does not fit experiment "
                f"{config.experiment!r}"
            )
    result = agent.train_a2c(
        env_factory_for(config),
        config.hyper,
        config.episodes,
        mode=config.mode,
        seed=config.episode.seed,
        params=params,
        stop_when=stop_when,
    )
    out = config.output_dir
    result.runlog.write_csv(os.path.join(out, "runlog.csv"))
    agent.save_checkpoint(
        result.params, config.hyper, os.path.join(out, "checkpoint.bin"),
        seed=config.episode.seed,
    )
    if result.best.actions is not None:
        notes = extract_notes(result.best.actions, config.episode.base_pitch)
        best_score = WorldScore(
            notes=notes,
            length_frames=config.episode.episode_frames,
            base_pitch=config.episode.base_pitch,
            n_keys=config.episode.n_keys,
            max_polyphony=max((int(v) for v in result.best.actions.sum(axis=1)), default=1) or 1,
        )
        save_score(best_score, os.path.join(out, "best_transcription.score.json"))
        frame_s = 512 / 16000.0
        midi.export_midi(notes, frame_s, os.path.join(out, "best_transcription.mid"))
        if config.mode == agent.POLY:
            write_pianoroll_csv(
                os.path.join(out, "pianoroll.csv"), result.best.actions, result.best.truth
            )
    if not quiet:
        tail = min(len(result.runlog), 50)
        print(
            f"{config.experiment}: {len(result.runlog)} episodes, "
            f"last-{tail} F1 {result.runlog.tail_mean('f1', tail):.3f}, "
            f"artifacts in {out}"
        )
    return result.runlog


def _cmd_train(args) -> int:
    config = load_run_config(
        args.config,
        {
            "seed": args.seed,
            "episodes": args.episodes,
            "output_dir": args.out,
        },
    )
    run(config)
    return 0


def _cmd_eval(args) -> int:
    config = load_run_config(
        args.config,
        {"seed": args.seed, "episodes": args.episodes, "output_dir": args.out},
    )
    params, hyper, _ = agent.load_checkpoint(args.checkpoint)
    if params.dims.mode != config.mode:
        raise ConfigError("checkpoint mode does not fit the configured experiment")
    result = agent.evaluate_policy(
        env_factory_for(config), params, config.hyper, config.episodes,
        seed=config.episode.seed,
    )
    os.makedirs(config.output_dir, exist_ok=True)
    out_path = os.path.join(config.output_dir, "eval_runlog.csv")
    result.runlog.write_csv(out_path)
    print(
        f"eval: {len(result.runlog)} episodes, mean F1 "
        f"{result.runlog.column('f1').mean():.3f}, log in {out_path}"
    )
    return 0


def _cmd_correlate(args) -> int:
    log = RunLog.read_csv(args.runlog)
    value = correlate(log)
    if value is None:
        print("correlation undefined (fewer than 2 rows or zero variance)")
    else:
        print(f"pearson(reward, f1) = {value:.4f} over {len(log)} episodes")
    return 0


def _cmd_export_midi(args) -> int:
    score = load_score(args.score)
    frame_s = 512 / 16000.0
    midi.export_midi(score.notes, frame_s, args.out)
    print(f"wrote {len(score.notes)} notes to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="playbyear",
        description="Learn music transcription by playing along with a synthesized world.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train an agent per the configured experiment")
    train.add_argument("--config", required=True, help="JSON run configuration")
    train.add_argument("--seed", type=int, default=None, help="override the run seed")
    train.add_argument("--episodes", type=int, default=None, help="override episode count")
    train.add_argument("--out", default=None, help="override the output directory")
    train.set_defaults(func=_cmd_train)

    evaluate = sub.add_parser("eval", help="run a checkpoint without learning")
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--config", required=True)
    evaluate.add_argument("--seed", type=int, default=None)
    evaluate.add_argument("--episodes", type=int, default=None)
    evaluate.add_argument("--out", default=None)
    evaluate.set_defaults(func=_cmd_eval)

    corr = sub.add_parser("correlate", help="reward/F1 correlation of a run log")
    corr.add_argument("--runlog", required=True)
    corr.set_defaults(func=_cmd_correlate)

    export = sub.add_parser("export-midi", help="convert a score JSON to a MIDI file")
    export.add_argument("--score", required=True)
    export.add_argument("--out", required=True)
    export.set_defaults(func=_cmd_export_midi)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
