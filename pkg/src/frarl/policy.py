"""Shared actor-critic MLP with a Gaussian action head, trained with PPO.

Everything is plain numpy: the forward pass, its hand-written backward pass,
generalized advantage estimation, the clipped surrogate loss and Adam.

Network: 5 features -> tanh(64) -> tanh(64) -> {action mean, value}; the
action standard deviation is ``exp(log_std)`` with a state-independent
``log_std``.  Features are multiplied by a fixed scale before the first
layer so that gaps (tens of metres) and accelerations share a range.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

N_FEATURES = 5
HIDDEN = 64
OBS_SCALE = np.array([1 / 50, 1 / 10, 1 / 30, 1 / 10, 1 / 10])
PARAM_NAMES = ("w1", "b1", "w2", "b2", "w_mu", "b_mu", "w_v", "b_v", "log_std")
_LOG_2PI = math.log(2 * math.pi)


class NonFiniteLossError(FloatingPointError):
    def __init__(self, message: str, diagnostics: dict):
        self.diagnostics = diagnostics
        super().__init__(f"{message}: {diagnostics}")


@dataclass
class PolicyParams:
    tensors: Dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def copy(self) -> "PolicyParams":
        return PolicyParams({k: v.copy() for k, v in self.tensors.items()})

    def zeros_like(self) -> "PolicyParams":
        return PolicyParams({k: np.zeros_like(v) for k, v in self.tensors.items()})

    def items(self):
        return ((k, self.tensors[k]) for k in PARAM_NAMES)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.tensors.values())

    def equals(self, other: "PolicyParams") -> bool:
        return all(np.array_equal(self[k], other[k]) for k in PARAM_NAMES)

    @classmethod
    def zeros(cls, hidden: int = HIDDEN) -> "PolicyParams":
        shapes = _shapes(hidden)
        return cls({k: np.zeros(shapes[k]) for k in PARAM_NAMES})


def _shapes(hidden: int) -> Dict[str, Tuple[int, ...]]:
    return {
        "w1": (N_FEATURES, hidden),
        "b1": (hidden,),
        "w2": (hidden, hidden),
        "b2": (hidden,),
        "w_mu": (hidden, 1),
        "b_mu": (1,),
        "w_v": (hidden, 1),
        "b_v": (1,),
        "log_std": (1,),
    }


def _orthogonal(shape, gain: float, rng: np.random.Generator) -> np.ndarray:
    rows, cols = shape
    a = rng.normal(size=(max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_params(rng: np.random.Generator, hidden: int = HIDDEN, log_std: float = 0.0) -> PolicyParams:
    """Orthogonal init: gain sqrt(2) for hidden layers, 0.01 for the action head, 1 for the value head."""
    t = {
        "w1": _orthogonal((N_FEATURES, hidden), math.sqrt(2), rng),
        "b1": np.zeros(hidden),
        "w2": _orthogonal((hidden, hidden), math.sqrt(2), rng),
        "b2": np.zeros(hidden),
        "w_mu": _orthogonal((hidden, 1), 0.01, rng),
        "b_mu": np.zeros(1),
        "w_v": _orthogonal((hidden, 1), 1.0, rng),
        "b_v": np.zeros(1),
        "log_std": np.full(1, float(log_std)),
    }
    return PolicyParams(t)


def _as_batch(obs) -> Tuple[np.ndarray, bool]:
    obs = np.asarray(obs, dtype=float)
    single = obs.ndim == 1
    obs = np.atleast_2d(obs)
    if obs.shape[1] != N_FEATURES:
        raise ValueError(f"observation must have {N_FEATURES} features, got shape {obs.shape}")
    if not np.all(np.isfinite(obs)):
        raise ValueError("observation contains non-finite values")
    return obs, single


def _trunk(params: PolicyParams, obs: np.ndarray):
    x = obs * OBS_SCALE
    h1 = np.tanh(x @ params["w1"] + params["b1"])
    h2 = np.tanh(h1 @ params["w2"] + params["b2"])
    mean = (h2 @ params["w_mu"])[:, 0] + params["b_mu"][0]
    value = (h2 @ params["w_v"])[:, 0] + params["b_v"][0]
    return x, h1, h2, mean, value


def forward(params: PolicyParams, obs):
    """Action mean [m/s^2] and state value; scalars for a single observation."""
    obs, single = _as_batch(obs)
    _, _, _, mean, value = _trunk(params, obs)
    if single:
        return float(mean[0]), float(value[0])
    return mean, value


def gaussian_log_prob(actions, mean, log_std) -> np.ndarray:
    z = (np.asarray(actions) - mean) * np.exp(-log_std)
    return -0.5 * z * z - log_std - 0.5 * _LOG_2PI


def sample_action(params: PolicyParams, obs, rng: Optional[np.random.Generator] = None, deterministic: bool = False):
    """Draw ``action ~ N(mean, exp(log_std))`` and return it with its log density.

    With ``deterministic`` the mean is returned (the evaluation mode).
    """
    obs, single = _as_batch(obs)
    _, _, _, mean, _ = _trunk(params, obs)
    log_std = params["log_std"][0]
    if deterministic:
        action = mean
    else:
        action = mean + np.exp(log_std) * rng.standard_normal(len(mean))
    logp = gaussian_log_prob(action, mean, log_std)
    if single:
        return float(action[0]), float(logp[0])
    return action, logp


def act(params: PolicyParams, obs: np.ndarray, rng: np.random.Generator):
    """Batched stochastic step for rollouts: (actions, log-probs, values)."""
    _, _, _, mean, value = _trunk(params, obs)
    log_std = params["log_std"][0]
    action = mean + np.exp(log_std) * rng.standard_normal(len(mean))
    return action, gaussian_log_prob(action, mean, log_std), value


def deterministic_controller(params: PolicyParams):
    """Controller (observations -> mean accelerations) for evaluation and falsification."""
    return lambda obs: _trunk(params, np.asarray(obs, dtype=float))[3]


# --------------------------------------------------------------------------
# Advantage estimation


def compute_gae(rewards, values, dones, last_value, gamma: float, lam: float):
    """Generalized advantage estimates and value targets.

    Arrays are time-major, ``(T,)`` or ``(T, n_actors)``.  ``dones[t]`` marks
    that the episode ended after step ``t``; the recursion does not cross it.
    ``last_value`` is the value of the state following the final step.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    if not (rewards.shape == values.shape == dones.shape):
        raise ValueError(
            f"length mismatch: rewards {rewards.shape}, values {values.shape}, dones {dones.shape}"
        )
    adv = np.zeros_like(rewards)
    running = np.zeros_like(rewards[0])
    next_value = np.asarray(last_value, dtype=float)
    for t in range(len(rewards) - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values


# --------------------------------------------------------------------------
# PPO


@dataclass
class PpoConfig:
    clip_range: float = 0.2
    value_coef: float = 0.5
    gamma: float = 0.99
    lam: float = 0.95
    learning_rate: float = 3e-4
    minibatch_size: int = 128
    epochs: int = 4
    n_actors: int = 4
    steps_per_actor: int = 512
    max_grad_norm: float = 0.5
    normalize_advantages: bool = True
    init_log_std: float = 0.0

    def __post_init__(self):
        if not 0 < self.clip_range < 1:
            raise ValueError("clip_range must be in (0, 1)")
        if not (0 <= self.gamma <= 1 and 0 <= self.lam <= 1):
            raise ValueError("gamma and lam must be in [0, 1]")
        if self.minibatch_size < 1 or self.epochs < 1 or self.n_actors < 1 or self.steps_per_actor < 1:
            raise ValueError("batch settings must be positive")


@dataclass
class RolloutBatch:
    obs: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    rewards: Optional[np.ndarray] = None
    values: Optional[np.ndarray] = None
    dones: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.actions)

    def subset(self, idx) -> "RolloutBatch":
        pick = lambda a: None if a is None else a[idx]
        return RolloutBatch(
            self.obs[idx], self.actions[idx], self.logp[idx], self.advantages[idx], self.returns[idx],
            pick(self.rewards), pick(self.values), pick(self.dones),
        )

    def normalized(self) -> "RolloutBatch":
        adv = self.advantages
        std = adv.std()
        out = self.subset(slice(None))
        out.advantages = (adv - adv.mean()) / (std + 1e-8)
        return out


@dataclass
class LossResult:
    loss: float
    policy_loss: float
    value_loss: float
    clip_fraction: float
    approx_kl: float
    grads: Optional[PolicyParams] = None


def ppo_loss(params: PolicyParams, batch: RolloutBatch, cfg: PpoConfig, with_grad: bool = True) -> LossResult:
    """Clipped surrogate plus value loss (to be minimized) and its exact gradient.

    loss = -mean(min(r A, clip(r, 1-eps, 1+eps) A)) + c * mean((V - V_targ)^2)
    """
    obs = np.asarray(batch.obs, dtype=float)
    B = len(batch)
    x, h1, h2, mean, value = _trunk(params, obs)
    log_std = params["log_std"][0]
    inv_var = math.exp(-2 * log_std)
    diff = batch.actions - mean
    logp = -0.5 * diff * diff * inv_var - log_std - 0.5 * _LOG_2PI
    log_ratio = logp - batch.logp
    ratio = np.exp(log_ratio)
    A = batch.advantages
    eps = cfg.clip_range
    s1 = ratio * A
    s2 = np.clip(ratio, 1 - eps, 1 + eps) * A
    policy_loss = -float(np.mean(np.minimum(s1, s2)))
    verr = value - batch.returns
    value_loss = float(np.mean(verr * verr))
    loss = policy_loss + cfg.value_coef * value_loss
    diag = {
        "clip_fraction": float(np.mean(np.abs(ratio - 1) > eps)),
        "approx_kl": float(np.mean((ratio - 1) - log_ratio)),
    }
    if not math.isfinite(loss):
        raise NonFiniteLossError("non-finite PPO loss", {"policy_loss": policy_loss, "value_loss": value_loss, **diag})
    result = LossResult(loss, policy_loss, value_loss, **diag)
    if not with_grad:
        return result

    # d loss / d logp; the clipped branch is flat wherever it is the minimum
    g_logp = np.where(s1 <= s2, -A / B, 0.0) * ratio
    g_mean = g_logp * diff * inv_var
    g_log_std = float(np.sum(g_logp * (diff * diff * inv_var - 1.0)))
    g_value = cfg.value_coef * 2.0 * verr / B

    g = {}
    g["w_mu"] = h2.T @ g_mean[:, None]
    g["b_mu"] = np.array([g_mean.sum()])
    g["w_v"] = h2.T @ g_value[:, None]
    g["b_v"] = np.array([g_value.sum()])
    dh2 = g_mean[:, None] @ params["w_mu"].T + g_value[:, None] @ params["w_v"].T
    dz2 = dh2 * (1 - h2 * h2)
    g["w2"] = h1.T @ dz2
    g["b2"] = dz2.sum(axis=0)
    dz1 = (dz2 @ params["w2"].T) * (1 - h1 * h1)
    g["w1"] = x.T @ dz1
    g["b1"] = dz1.sum(axis=0)
    g["log_std"] = np.array([g_log_std])
    result.grads = PolicyParams(g)
    return result


@dataclass
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: PolicyParams) -> "AdamState":
        return cls(
            {k: np.zeros_like(p) for k, p in params.tensors.items()},
            {k: np.zeros_like(p) for k, p in params.tensors.items()},
        )


def adam_step(state: AdamState, params: PolicyParams, grads: PolicyParams, lr: float) -> PolicyParams:
    """One bias-corrected Adam update; ``state`` is advanced in place."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1**state.t
    c2 = 1 - b2**state.t
    out = {}
    for k, p in params.tensors.items():
        g = grads.tensors[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match {k} {p.shape}")
        m = state.m[k] = b1 * state.m[k] + (1 - b1) * g
        v = state.v[k] = b2 * state.v[k] + (1 - b2) * g * g
        out[k] = p - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return PolicyParams(out)


def clip_grad_norm(grads: PolicyParams, max_norm: float) -> Tuple[PolicyParams, float]:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.tensors.values()))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        grads = PolicyParams({k: g * scale for k, g in grads.tensors.items()})
    return grads, norm


def ppo_update(
    params: PolicyParams,
    opt: AdamState,
    batch: RolloutBatch,
    cfg: PpoConfig,
    rng: np.random.Generator,
    learning_rate: Optional[float] = None,
) -> Tuple[PolicyParams, dict]:
    """Several epochs of shuffled minibatch Adam steps on the PPO loss.

    ``learning_rate`` overrides ``cfg.learning_rate`` (used for schedules).
    """
    lr = cfg.learning_rate if learning_rate is None else learning_rate
    if cfg.normalize_advantages:
        batch = batch.normalized()
    n = len(batch)
    stats = {"loss": [], "policy_loss": [], "value_loss": [], "clip_fraction": [], "approx_kl": []}
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            mb = batch.subset(order[start : start + cfg.minibatch_size])
            res = ppo_loss(params, mb, cfg)
            grads, _ = clip_grad_norm(res.grads, cfg.max_grad_norm)
            params = adam_step(opt, params, grads, lr)
            for k in stats:
                stats[k].append(getattr(res, k))
    if not params.all_finite():
        raise NonFiniteLossError("parameters became non-finite", {k: v[-1] for k, v in stats.items()})
    return params, {k: float(np.mean(v)) for k, v in stats.items()}


# --------------------------------------------------------------------------
# Checkpoints

_MAGIC = b"FRARL-CHECKPOINT 1\n"


@dataclass
class Checkpoint:
    params: PolicyParams
    opt: Optional[AdamState] = None
    meta: dict = field(default_factory=dict)


def _dumps_checkpoint(ckpt: Checkpoint) -> bytes:
    named = [(f"params.{k}", v) for k, v in ckpt.params.items()]
    opt_meta = None
    if ckpt.opt is not None:
        named += [(f"adam.m.{k}", ckpt.opt.m[k]) for k in PARAM_NAMES]
        named += [(f"adam.v.{k}", ckpt.opt.v[k]) for k in PARAM_NAMES]
        o = ckpt.opt
        opt_meta = {"t": o.t, "beta1": o.beta1, "beta2": o.beta2, "eps": o.eps}
    entries = []
    payload = []
    offset = 0
    for name, arr in named:
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(data)})
        payload.append(data)
        offset += len(data)
    header = {"format": 1, "dtype": "<f8", "tensors": entries, "adam": opt_meta, "meta": ckpt.meta}
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n"
    return _MAGIC + head + b"".join(payload)


def save_checkpoint(path, params: PolicyParams, opt: Optional[AdamState] = None, meta: Optional[dict] = None) -> None:
    Path(path).write_bytes(_dumps_checkpoint(Checkpoint(params, opt, dict(meta or {}))))


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if not raw.startswith(_MAGIC):
        raise ValueError(f"{path}: not a checkpoint file (bad header)")
    end = raw.index(b"\n", len(_MAGIC))
    header = json.loads(raw[len(_MAGIC) : end])
    if header.get("format") != 1:
        raise ValueError(f"{path}: unsupported checkpoint version {header.get('format')}")
    body = raw[end + 1 :]
    tensors = {}
    for e in header["tensors"]:
        chunk = body[e["offset"] : e["offset"] + e["nbytes"]]
        tensors[e["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(e["shape"]).astype(float)
    names = {k[len("params.") :] for k in tensors if k.startswith("params.")}
    if names != set(PARAM_NAMES):
        raise ValueError(f"{path}: checkpoint tensors {sorted(names)} do not match the network")
    params = PolicyParams({k: tensors[f"params.{k}"] for k in PARAM_NAMES})
    if params["w1"].shape[0] != N_FEATURES:
        raise ValueError(f"{path}: network expects {params['w1'].shape[0]} features, not {N_FEATURES}")
    opt = None
    if header["adam"] is not None:
        a = header["adam"]
        opt = AdamState(
            {k: tensors[f"adam.m.{k}"] for k in PARAM_NAMES},
            {k: tensors[f"adam.v.{k}"] for k in PARAM_NAMES},
            a["t"], a["beta1"], a["beta2"], a["eps"],
        )
    return Checkpoint(params, opt, header["meta"])
