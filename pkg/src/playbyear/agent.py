"""Linear policy and value model, episodic policy-gradient training, Adam.

The model has three linear input branches (context window, its time
difference, keyboard), concatenated into a trunk representation that feeds an
action head (softmax over keys plus a no-op, or one sigmoid per key) and a
scalar value head. The trunk belongs to the policy parameters; the value head
regresses returns on the trunk output without pushing gradients into it, so
policy and value gradients stay cleanly separated.

Gradients returned by reinforce_grad are update directions: adding them
increases the policy objective and decreases the value error. adam_step
therefore always applies `param += step`.
"""

import json
import struct
import time
from dataclasses import dataclass, asdict

import numpy as np

from . import features, metrics
from .runlog import RunLog

MONO = "mono"
POLY = "poly"

ADAM_EPS = 1e-8
CHECKPOINT_MAGIC = b"PBCK"


@dataclass
class Hyperparams:
    gamma: float = 0.9
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eta: float = 0.01
    hidden_units: int = 128
    n_workers: int = 8
    c: int = 1

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ValueError("betas must lie in [0, 1)")
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        if self.hidden_units < 4 or self.hidden_units % 4 != 0:
            raise ValueError("hidden_units must be a positive multiple of 4")
        if self.n_workers < 1:
            raise ValueError("n_workers must be at least 1")


@dataclass(frozen=True)
class ModelDims:
    """Shapes shared by every forward/backward pass."""

    n_bins: int
    c: int
    n_keys: int
    hidden: int
    mode: str

    def __post_init__(self):
        if self.mode not in (MONO, POLY):
            raise ValueError(f"mode must be {MONO!r} or {POLY!r}")

    @property
    def block(self) -> int:
        return (2 * self.c + 1) * self.n_bins

    @property
    def branch(self) -> int:
        return self.hidden // 4

    @property
    def trunk(self) -> int:
        return 3 * self.branch

    @property
    def n_actions(self) -> int:
        return self.n_keys + 1 if self.mode == MONO else self.n_keys

    @property
    def state_dim(self) -> int:
        return 2 * self.block + self.n_keys


PARAM_SHAPES = (
    ("policy/w_x", lambda d: (d.branch, d.block)),
    ("policy/b_x", lambda d: (d.branch,)),
    ("policy/w_dx", lambda d: (d.branch, d.block)),
    ("policy/b_dx", lambda d: (d.branch,)),
    ("policy/w_k", lambda d: (d.branch, d.n_keys)),
    ("policy/b_k", lambda d: (d.branch,)),
    ("policy/w_act", lambda d: (d.n_actions, d.trunk)),
    ("policy/b_act", lambda d: (d.n_actions,)),
    ("value/w", lambda d: (d.trunk,)),
    ("value/b", lambda d: (1,)),
)


class ParamSet:
    """Named parameter arrays for policy and value, plus Adam moment state."""

    def __init__(self, arrays: dict, dims: ModelDims):
        expected = {name: shape(dims) for name, shape in PARAM_SHAPES}
        if set(arrays) != set(expected):
            raise ValueError("parameter names do not match the model layout")
        for name, arr in arrays.items():
            if arr.shape != expected[name]:
                raise ValueError(
                    f"{name}: shape {arr.shape} does not match {expected[name]}"
                )
        self.arrays = {name: arrays[name] for name, _ in PARAM_SHAPES}
        self.dims = dims
        self.m = {k: np.zeros_like(a) for k, a in self.arrays.items()}
        self.v = {k: np.zeros_like(a) for k, a in self.arrays.items()}
        self.step_count = 0

    def copy(self) -> "ParamSet":
        dup = ParamSet({k: a.copy() for k, a in self.arrays.items()}, self.dims)
        dup.m = {k: a.copy() for k, a in self.m.items()}
        dup.v = {k: a.copy() for k, a in self.v.items()}
        dup.step_count = self.step_count
        return dup

    def zero_grads(self) -> dict:
        return {k: np.zeros_like(a) for k, a in self.arrays.items()}


def init_params(dims: ModelDims, rng: np.random.Generator) -> ParamSet:
    """Weights ~ N(0, 1/fan_in), biases zero."""
    arrays = {}
    for name, shape_fn in PARAM_SHAPES:
        shape = shape_fn(dims)
        if name.endswith(("/b_x", "/b_dx", "/b_k", "/b_act", "/b")):
            arrays[name] = np.zeros(shape)
        else:
            fan_in = shape[-1] if len(shape) > 1 else shape[0]
            arrays[name] = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shape)
    return ParamSet(arrays, dims)


@dataclass
class PolicyOutput:
    """Action distribution: a simplex over K+1 choices (mono) or K independent
    key probabilities (poly)."""

    mode: str
    probs: np.ndarray
    logits: np.ndarray = None


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def categorical_entropy(p: np.ndarray) -> float:
    nz = p > 0
    return float(-np.sum(p[nz] * np.log(p[nz])))


def bernoulli_entropy(p: np.ndarray) -> float:
    """Sum of per-key Bernoulli entropies."""
    inner = (p > 0) & (p < 1)
    pi = p[inner]
    return float(-np.sum(pi * np.log(pi) + (1 - pi) * np.log(1 - pi)))


def _trunk_batch(params: ParamSet, s_x, s_dx, s_k) -> np.ndarray:
    a = params.arrays
    return np.concatenate(
        [
            s_x @ a["policy/w_x"].T + a["policy/b_x"],
            s_dx @ a["policy/w_dx"].T + a["policy/b_dx"],
            s_k @ a["policy/w_k"].T + a["policy/b_k"],
        ],
        axis=1,
    )


def _split_state_batch(params: ParamSet, states: np.ndarray):
    block = params.dims.block
    return states[:, :block], states[:, block : 2 * block], states[:, 2 * block :]


def policy_forward(params: ParamSet, state_vec: np.ndarray):
    """Forward pass for one state vector. Returns (PolicyOutput, value)."""
    state_vec = np.asarray(state_vec, dtype=float)
    if state_vec.shape != (params.dims.state_dim,):
        raise ValueError(
            f"state vector shape {state_vec.shape} does not match "
            f"({params.dims.state_dim},)"
        )
    s_x, s_dx, s_k = _split_state_batch(params, state_vec[None, :])
    h = _trunk_batch(params, s_x, s_dx, s_k)[0]
    a = params.arrays
    logits = a["policy/w_act"] @ h + a["policy/b_act"]
    value = float(a["value/w"] @ h + a["value/b"][0])
    if params.dims.mode == MONO:
        probs = _softmax(logits)
    else:
        probs = _sigmoid(logits)
    return PolicyOutput(params.dims.mode, probs, logits), value


def sample_action(output: PolicyOutput, rng: np.random.Generator):
    """Draw an action vector and its log-probability under the policy.

    Mono: one categorical draw; the extra index means "press nothing".
    Poly: one Bernoulli draw per key.
    """
    p = output.probs
    if output.mode == MONO:
        n_keys = len(p) - 1
        u = rng.random()
        idx = int(np.searchsorted(np.cumsum(p), u, side="right"))
        idx = min(idx, n_keys)
        action = np.zeros(n_keys, dtype=np.int8)
        if idx < n_keys:
            action[idx] = 1
        return action, float(np.log(p[idx]))
    draws = rng.random(len(p))
    action = (draws < p).astype(np.int8)
    chosen = np.where(action == 1, p, 1.0 - p)
    return action, float(np.sum(np.log(chosen)))


def compute_returns(rewards, gamma: float) -> np.ndarray:
    """Discounted returns G_t = R_{t+1} + gamma * G_{t+1}, zero after the end."""
    rewards = np.asarray(rewards, dtype=float)
    out = np.empty(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


@dataclass
class Trajectory:
    """One episode of interaction records."""

    states: np.ndarray  # (T, state_dim)
    actions: np.ndarray  # (T, n_keys) binary
    rewards: np.ndarray  # (T,)
    log_probs: np.ndarray  # (T,)
    values: np.ndarray  # (T,)
    action_index: np.ndarray = None  # (T,), mono only
    returns: np.ndarray = None  # cached discounted returns

    def __len__(self) -> int:
        return len(self.rewards)


def _first_bad_row(arr: np.ndarray) -> int:
    bad = ~np.isfinite(arr)
    if bad.ndim > 1:
        bad = bad.any(axis=tuple(range(1, bad.ndim)))
    return int(np.argmax(bad))


def reinforce_grad(trajectory: Trajectory, params: ParamSet, hyper: Hyperparams) -> dict:
    """Update directions for one episode.

    Policy entries ascend (return - value) * log-prob plus the entropy bonus;
    value entries descend the squared error between value estimates and
    returns. The advantage weight is a constant with respect to the policy.
    """
    dims = params.dims
    a = params.arrays
    T = len(trajectory)
    s_x, s_dx, s_k = _split_state_batch(params, trajectory.states)
    with np.errstate(invalid="ignore", over="ignore"):
        h = _trunk_batch(params, s_x, s_dx, s_k)
        logits = h @ a["policy/w_act"].T + a["policy/b_act"]
    if not np.isfinite(logits).all():
        raise FloatingPointError(
            f"non-finite logits at step {_first_bad_row(logits)}"
        )
    values = h @ a["value/w"] + a["value/b"][0]
    returns = trajectory.returns
    if returns is None:
        returns = compute_returns(trajectory.rewards, hyper.gamma)
    if not np.isfinite(returns).all():
        raise FloatingPointError(
            f"non-finite return at step {_first_bad_row(returns)}"
        )
    adv = returns - values

    if dims.mode == MONO:
        zmax = logits.max(axis=1, keepdims=True)
        lse = zmax[:, 0] + np.log(np.sum(np.exp(logits - zmax), axis=1))
        logp_all = logits - lse[:, None]
        p = np.exp(logp_all)
        onehot = np.zeros_like(p)
        onehot[np.arange(T), trajectory.action_index] = 1.0
        dlogits = adv[:, None] * (onehot - p)
        if hyper.eta != 0.0:
            ent = -np.sum(p * logp_all, axis=1)
            dlogits += hyper.eta * (-p * (logp_all + ent[:, None]))
    else:
        p = _sigmoid(logits)
        dlogits = adv[:, None] * (trajectory.actions - p)
        if hyper.eta != 0.0:
            dlogits += hyper.eta * (-logits * p * (1.0 - p))

    grads = {
        "policy/w_act": dlogits.T @ h,
        "policy/b_act": dlogits.sum(axis=0),
        "value/w": h.T @ (2.0 * adv),
        "value/b": np.array([2.0 * adv.sum()]),
    }
    g_h = dlogits @ a["policy/w_act"]
    b = dims.branch
    for name, seg, inp in (
        ("x", g_h[:, :b], s_x),
        ("dx", g_h[:, b : 2 * b], s_dx),
        ("k", g_h[:, 2 * b :], s_k),
    ):
        grads[f"policy/w_{name}"] = seg.T @ inp
        grads[f"policy/b_{name}"] = seg.sum(axis=0)
    return grads


def accumulate_grads(total: dict, grads: dict) -> dict:
    for name, g in grads.items():
        total[name] += g
    return total


def adam_step(params: ParamSet, grads: dict, hyper: Hyperparams) -> ParamSet:
    """One Adam update, applied in place: param += alpha * m_hat / (sqrt(v_hat) + eps)."""
    if set(grads) != set(params.arrays):
        raise ValueError("gradient names do not match parameter names")
    params.step_count += 1
    t = params.step_count
    b1, b2 = hyper.beta1, hyper.beta2
    for name, arr in params.arrays.items():
        g = grads[name]
        if g.shape != arr.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} vs {arr.shape}")
        m = params.m[name]
        v = params.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        arr += hyper.alpha * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return params


def collect_episode(env, params: ParamSet, hyper: Hyperparams, rng: np.random.Generator, world_seed: int):
    """Roll out one episode with the current policy.

    Returns (Trajectory, stats dict). The world-dependent branch activations
    are precomputed for the whole episode, so each step only touches the
    keyboard branch and the heads.
    """
    dims = params.dims
    a = params.arrays
    result = env.reset(seed=world_seed)
    n_frames = env.config.episode_frames
    s_x, s_dx = features.window_stacks(env.world_features(), dims.c)
    h_x = s_x @ a["policy/w_x"].T + a["policy/b_x"]
    h_dx = s_dx @ a["policy/w_dx"].T + a["policy/b_dx"]

    actions = np.zeros((n_frames, dims.n_keys), dtype=np.int8)
    action_index = np.zeros(n_frames, dtype=np.int64) if dims.mode == MONO else None
    rewards_e = np.zeros(n_frames)
    log_probs = np.zeros(n_frames)
    values = np.zeros(n_frames)
    entropies = np.zeros(n_frames)
    keyboards = np.zeros((n_frames, dims.n_keys), dtype=np.int8)
    truths = np.zeros((n_frames, dims.n_keys), dtype=np.int8)
    counts = metrics.FrameCounts()

    keyboard = np.zeros(dims.n_keys, dtype=np.int8)
    for t in range(n_frames):
        keyboards[t] = keyboard
        h = np.concatenate(
            [h_x[t], h_dx[t], a["policy/w_k"] @ keyboard + a["policy/b_k"]]
        )
        logits = a["policy/w_act"] @ h + a["policy/b_act"]
        values[t] = a["value/w"] @ h + a["value/b"][0]
        if dims.mode == MONO:
            probs = _softmax(logits)
            entropies[t] = categorical_entropy(probs)
        else:
            probs = _sigmoid(logits)
            entropies[t] = bernoulli_entropy(probs)
        action, logp = sample_action(PolicyOutput(dims.mode, probs, logits), rng)
        if dims.mode == MONO:
            pressed = np.flatnonzero(action)
            action_index[t] = pressed[0] if len(pressed) else dims.n_keys
        actions[t] = action
        log_probs[t] = logp
        result = env.step(action)
        rewards_e[t] = result.reward
        truths[t] = result.truth_frame
        metrics.update_counts(counts, action, result.truth_frame)
        keyboard = action

    states = np.hstack([s_x, s_dx, keyboards.astype(float)])
    traj = Trajectory(
        states=states,
        actions=actions,
        rewards=rewards_e,
        log_probs=log_probs,
        values=values,
        action_index=action_index,
    )
    traj.returns = compute_returns(rewards_e, hyper.gamma)
    precision, recall, f1 = metrics.prf(counts)
    stats = {
        "mean_reward": float(rewards_e.mean()),
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "entropy": float(entropies.mean()),
        "world_seed": world_seed,
        "truth": truths,
    }
    return traj, stats


@dataclass
class BestEpisode:
    """Highest-mean-reward episode seen in a run (reward is all the agent has,
    so selection uses it, not the F1 score)."""

    actions: np.ndarray = None
    truth: np.ndarray = None
    mean_reward: float = -np.inf
    episode: int = -1
    world_seed: int = 0


@dataclass
class TrainResult:
    params: ParamSet
    runlog: RunLog
    best: BestEpisode


def seed_streams(seed: int, n_workers: int):
    """Deterministic generator fan-out: one init stream plus one per worker."""
    children = np.random.SeedSequence(seed).spawn(n_workers + 1)
    return (
        np.random.default_rng(children[0]),
        [np.random.default_rng(c) for c in children[1:]],
    )


def _run_episodes(env_factory, hyper, episodes, mode, seed, params, learn, stop_when=None):
    init_rng, worker_rngs = seed_streams(seed, hyper.n_workers)
    envs = [env_factory() for _ in range(hyper.n_workers)]
    cfg = envs[0].config
    dims = ModelDims(envs[0].n_bins, cfg.context_c, cfg.n_keys, hyper.hidden_units, mode)
    if params is None:
        if not learn:
            raise ValueError("evaluation requires trained parameters")
        params = init_params(dims, init_rng)
    elif params.dims != dims:
        raise ValueError(f"parameter dims {params.dims} do not match run dims {dims}")

    runlog = RunLog()
    best = BestEpisode()
    start = time.monotonic()
    done = 0
    while done < episodes:
        width = min(hyper.n_workers, episodes - done)
        batch_grads = None
        for w in range(width):
            rng = worker_rngs[w]
            world_seed = int(rng.integers(0, 2**63))
            try:
                traj, stats = collect_episode(envs[w], params, hyper, rng, world_seed)
            except Exception as exc:
                raise RuntimeError(
                    f"worker {w} failed on episode {done + w} "
                    f"(world seed {world_seed}): {exc}"
                ) from exc
            if learn:
                grads = reinforce_grad(traj, params, hyper)
                batch_grads = grads if batch_grads is None else accumulate_grads(batch_grads, grads)
            episode_idx = done + w
            runlog.append(
                episode=episode_idx,
                mean_reward=stats["mean_reward"],
                precision=stats["precision"],
                recall=stats["recall"],
                f1=stats["f1"],
                entropy=stats["entropy"],
                seed=stats["world_seed"],
                wall_s=time.monotonic() - start,
            )
            if stats["mean_reward"] > best.mean_reward:
                best = BestEpisode(
                    actions=traj.actions.copy(),
                    truth=stats["truth"],
                    mean_reward=stats["mean_reward"],
                    episode=episode_idx,
                    world_seed=world_seed,
                )
        if learn and batch_grads is not None:
            adam_step(params, batch_grads, hyper)
        done += width
        if stop_when is not None and stop_when(runlog):
            break
    return TrainResult(params, runlog, best)


def train_a2c(env_factory, hyper: Hyperparams, episodes: int, mode: str = MONO,
              seed: int = 0, params: ParamSet = None, stop_when=None) -> TrainResult:
    """Synchronous advantage actor-critic over parallel episode batches.

    Each batch, every worker rolls out one full episode against its own
    environment; per-episode gradients are summed in worker order and applied
    in a single Adam update, after which all workers see the new parameters.
    With one worker this is exactly sequential REINFORCE with baseline.
    """
    return _run_episodes(env_factory, hyper, episodes, mode, seed, params,
                         learn=True, stop_when=stop_when)


def evaluate_policy(env_factory, params: ParamSet, hyper: Hyperparams, episodes: int,
                    seed: int = 0) -> TrainResult:
    """Run a trained policy without learning, logging the same statistics."""
    return _run_episodes(env_factory, hyper, episodes, params.dims.mode, seed,
                         params, learn=False)


def save_checkpoint(params: ParamSet, hyper: Hyperparams, path, seed: int = 0) -> None:
    """Single-file checkpoint: JSON manifest + raw little-endian float64 arrays."""
    names = []
    blobs = []
    for prefix, source in (("param", params.arrays), ("adam_m", params.m), ("adam_v", params.v)):
        for name, arr in source.items():
            names.append({"name": f"{prefix}:{name}", "shape": list(arr.shape)})
            blobs.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    manifest = {
        "format": "playbyear-checkpoint",
        "version": 1,
        "dims": {
            "n_bins": params.dims.n_bins,
            "c": params.dims.c,
            "n_keys": params.dims.n_keys,
            "hidden": params.dims.hidden,
            "mode": params.dims.mode,
        },
        "hyper": asdict(hyper),
        "step_count": params.step_count,
        "seed": seed,
        "arrays": names,
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path):
    """Returns (ParamSet, Hyperparams, manifest dict)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (manifest_len,) = struct.unpack("<I", fh.read(4))
        manifest = json.loads(fh.read(manifest_len).decode("utf-8"))
        dims = ModelDims(**manifest["dims"])
        stores = {"param": {}, "adam_m": {}, "adam_v": {}}
        for entry in manifest["arrays"]:
            prefix, name = entry["name"].split(":", 1)
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ValueError(f"{path}: truncated array {entry['name']}")
            stores[prefix][name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    params = ParamSet(stores["param"], dims)
    params.m = {k: stores["adam_m"][k] for k in params.arrays}
    params.v = {k: stores["adam_v"][k] for k in params.arrays}
    params.step_count = int(manifest["step_count"])
    hyper = Hyperparams(**manifest["hyper"])
    return params, hyper, manifest
