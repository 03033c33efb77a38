"""Monte-Carlo policy gradient with a fitted baseline, plus the meta-training
loop that produces the base policy, the anchor mode set, and per-mode banks of
full-horizon trajectories used later for lookahead adaptation."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from colalab.env import Mode, Trajectory


def rollout(env, policy, theta, env_rng, action_rng) -> Trajectory:
    """Play one episode; env noise and action sampling use separate streams."""
    horizon = env.horizon
    obs = env.reset(env_rng)
    n_features = obs.shape[0]
    observations = np.empty((horizon, n_features))
    actions = np.empty(horizon, dtype=np.intp)
    rewards = np.empty(horizon)
    speeds = np.zeros(horizon)
    mode_trace = np.zeros((horizon, 3))
    t = 0
    info = {}
    for t in range(horizon):
        observations[t] = obs
        a = policy.sample_action(theta, obs, action_rng)
        actions[t] = a
        obs, r, done, info = env.step(a)
        rewards[t] = r
        speeds[t] = info.get("speed", 0.0)
        mode = info.get("mode")
        if mode is not None:
            mode_trace[t] = mode.as_array()
        if done:
            break
    t_term = t + 1
    return Trajectory(
        observations=observations[:t_term].copy(),
        actions=actions[:t_term].copy(),
        rewards=rewards[:t_term].copy(),
        speeds=speeds[:t_term].copy(),
        mode_trace=mode_trace[:t_term].copy(),
        t_term=t_term,
        n_out=int(info.get("n_out", 0)),
        n_slow=int(info.get("n_slow", 0)),
        horizon=horizon,
    )


def returns_to_go(traj, gamma: float = 1.0) -> np.ndarray:
    """Reward-to-go from each step; gamma=1 matches the plain tail sum."""
    rewards = traj.rewards if hasattr(traj, "rewards") else np.asarray(traj, dtype=float)
    if rewards.size == 0:
        raise ValueError("empty trajectory")
    out = np.empty_like(rewards, dtype=float)
    acc = 0.0
    for i in range(rewards.size - 1, -1, -1):
        acc = rewards[i] + gamma * acc
        out[i] = acc
    return out


@dataclass
class LinearBaseline:
    """State-value baseline fit by least squares on observation features."""

    weights: np.ndarray | None  # includes appended intercept; None => constant
    constant: float = 0.0

    def predict(self, obs_batch) -> np.ndarray:
        obs_batch = np.atleast_2d(np.asarray(obs_batch, dtype=float))
        if self.weights is None:
            return np.full(obs_batch.shape[0], self.constant)
        x = np.hstack([obs_batch, np.ones((obs_batch.shape[0], 1))])
        return x @ self.weights


def fit_baseline(batch, gamma: float = 1.0) -> LinearBaseline:
    """Least-squares fit of returns-to-go on features; constant fallback when
    the design matrix is rank deficient."""
    if not batch:
        raise ValueError("empty batch")
    feats = np.vstack([traj.observations for traj in batch])
    targets = np.concatenate([returns_to_go(traj, gamma) for traj in batch])
    x = np.hstack([feats, np.ones((feats.shape[0], 1))])
    weights, _, rank, _ = np.linalg.lstsq(x, targets, rcond=None)
    if rank < x.shape[1]:
        return LinearBaseline(weights=None, constant=float(targets.mean()))
    return LinearBaseline(weights=weights)


def trajectory_gradient(policy, theta, traj, baseline=None, gamma: float = 1.0) -> np.ndarray:
    """Score-function gradient of one trajectory with optional baseline."""
    rtg = returns_to_go(traj, gamma)
    if baseline is not None:
        rtg = rtg - baseline.predict(traj.observations)
    return policy.segment_gradient(theta, traj.observations, traj.actions, rtg)


def mc_policy_gradient(policy, theta, batch, baseline=None, gamma: float = 1.0) -> np.ndarray:
    """Batch-mean trajectory gradient."""
    if not batch:
        raise ValueError("empty batch")
    out = np.zeros(policy.dim)
    for traj in batch:
        out += trajectory_gradient(policy, theta, traj, baseline, gamma)
    return out / len(batch)


@dataclass
class TrajectoryBank:
    """Per-anchor-mode stores of full-horizon rollouts under one policy."""

    trajectories: dict[Mode, list[Trajectory]]
    policy_hash: str
    horizon: int

    def modes(self):
        return list(self.trajectories.keys())

    def size(self, mode: Mode) -> int:
        return len(self.trajectories[mode])

    def validate(self):
        for mode, trajs in self.trajectories.items():
            for traj in trajs:
                if traj.t_term != self.horizon:
                    raise ValueError(f"bank trajectory for {mode} is not full horizon")


@dataclass
class MetaTrainReport:
    theta: np.ndarray
    anchors: list[Mode]
    banks: TrajectoryBank | None
    iteration_rewards: list[float]
    policy_meta: dict = field(default_factory=dict)


@dataclass
class TrainerConfig:
    alpha: float = 1e-4
    episodes_per_mode: int = 8
    max_iters: int = 120
    window: int = 12              # sliding-window length for the plateau stop rule
    rel_tol: float = 0.01
    bank_size: int = 16
    bank_attempt_factor: int = 50
    max_grad_norm: float = 2000.0  # 0 disables the cap
    gamma: float = 1.0             # discount inside the gradient estimator
    use_baseline: bool = True
    seed: int = 0


def policy_hash(policy, theta) -> str:
    h = hashlib.sha256()
    h.update(repr(sorted(policy.metadata().items())).encode())
    h.update(np.ascontiguousarray(theta, dtype=np.float64).tobytes())
    return h.hexdigest()[:16]


def collect_bank(make_env, policy, theta, modes, cfg: TrainerConfig, seed_seq) -> TrajectoryBank:
    """Gather bank_size full-horizon rollouts per mode, discarding early
    terminations (attempt cap guards against policies that cannot finish)."""
    if not modes:
        raise ValueError("no modes to collect banks for")
    banks: dict[Mode, list[Trajectory]] = {}
    horizon = 0
    for mode in modes:
        env = make_env(mode)
        horizon = env.horizon
        kept: list[Trajectory] = []
        attempts = 0
        max_attempts = cfg.bank_attempt_factor * cfg.bank_size
        while len(kept) < cfg.bank_size:
            if attempts >= max_attempts:
                raise RuntimeError(
                    f"bank collection for mode {mode} got {len(kept)}/{cfg.bank_size} "
                    f"full-horizon episodes in {attempts} attempts"
                )
            env_rng, act_rng = (np.random.default_rng(s) for s in seed_seq.spawn(2))
            traj = rollout(env, policy, theta, env_rng, act_rng)
            attempts += 1
            if traj.completed:
                kept.append(traj)
        banks[mode] = kept
    bank = TrajectoryBank(banks, policy_hash(policy, theta), horizon=horizon)
    bank.validate()
    return bank


def meta_train(make_env, policy, theta0, mode_sampler, cfg: TrainerConfig,
               collect_banks: bool = True) -> MetaTrainReport:
    """Averaged policy-gradient ascent over sampled modes until the sliding
    mean episode reward plateaus; returns the final parameters, the last mode
    batch as the anchor set, and fresh full-horizon banks under them."""
    root = np.random.SeedSequence(cfg.seed)
    sampler_rng = np.random.default_rng(root.spawn(1)[0])
    theta = np.array(theta0, dtype=np.float64)
    iteration_rewards: list[float] = []
    modes: list[Mode] = []

    for it in range(cfg.max_iters):
        modes = list(mode_sampler(sampler_rng))
        grads = []
        rewards = []
        for mode in modes:
            env = make_env(mode)
            batch = []
            for _ in range(cfg.episodes_per_mode):
                env_rng, act_rng = (np.random.default_rng(s) for s in root.spawn(2))
                batch.append(rollout(env, policy, theta, env_rng, act_rng))
            baseline = fit_baseline(batch, cfg.gamma) if cfg.use_baseline else None
            grads.append(mc_policy_gradient(policy, theta, batch, baseline, cfg.gamma))
            rewards.extend(traj.total_reward for traj in batch)
        g = np.mean(grads, axis=0)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite meta gradient at iteration {it}")
        if cfg.max_grad_norm:
            norm = float(np.linalg.norm(g))
            if norm > cfg.max_grad_norm:
                g = g * (cfg.max_grad_norm / norm)
        theta = theta + cfg.alpha * g
        iteration_rewards.append(float(np.mean(rewards)))

        w = cfg.window
        if len(iteration_rewards) >= 2 * w:
            recent = float(np.mean(iteration_rewards[-w:]))
            prev = float(np.mean(iteration_rewards[-2 * w : -w]))
            if abs(recent - prev) < cfg.rel_tol * max(abs(prev), 1e-12):
                break

    banks = None
    if collect_banks:
        banks = collect_bank(make_env, policy, theta, modes, cfg, root.spawn(1)[0])
    return MetaTrainReport(
        theta=theta,
        anchors=modes,
        banks=banks,
        iteration_rewards=iteration_rewards,
        policy_meta=policy.metadata(),
    )
