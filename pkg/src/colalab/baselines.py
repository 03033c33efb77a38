"""The four comparison policies: the stationary base policy, past-window
gradient adaptation, a belief-weighted tabular Q mixture, and the oracle that
solves the lookahead with authentic future rollouts and true-mode access."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from colalab.belief import apply_likelihood_floor, bayes_update, uniform_belief
from colalab.cola import AdaptConfig, TrustRegionConfig, WindowData, solve_adaptation
from colalab.env import Mode, Trajectory
from colalab.meta import TrainerConfig, meta_train, returns_to_go


def train_base_policy(make_dynamic_env, policy, theta0, cfg: TrainerConfig):
    """Stationary policy trained on full dynamic-schedule episodes."""
    report = meta_train(
        make_env=lambda _mode: make_dynamic_env(),
        policy=policy,
        theta0=theta0,
        mode_sampler=lambda rng: [None],
        cfg=cfg,
        collect_banks=False,
    )
    return report.theta, report.iteration_rewards


def maml_adapt(policy, theta, past_window, alpha: float) -> np.ndarray:
    """Single policy-gradient step on the most recent trajectory window."""
    obs = np.atleast_2d(past_window.observations)
    if obs.shape[0] == 0:
        raise ValueError("empty past window")
    rtg = returns_to_go(past_window.rewards)
    return theta + alpha * policy.segment_gradient(theta, obs, past_window.actions, rtg)


@dataclass
class PastWindow:
    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray


def maml_episode(policy, meta_theta, env, lookback: int, alpha: float,
                 env_rng, action_rng) -> Trajectory:
    """Online rollout where each step re-adapts from the current parameters
    using the policy gradient of the trailing lookback-step window."""
    horizon = env.horizon
    theta = np.array(meta_theta, dtype=float)
    obs = env.reset(env_rng)
    n_features = obs.shape[0]
    observations = np.empty((horizon, n_features))
    actions = np.empty(horizon, dtype=np.intp)
    rewards = np.empty(horizon)
    speeds = np.zeros(horizon)
    mode_trace = np.zeros((horizon, 3))
    info = {}
    t = 0
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
        lo = max(0, t + 1 - lookback)
        window = PastWindow(observations[lo : t + 1], actions[lo : t + 1], rewards[lo : t + 1])
        theta = maml_adapt(policy, theta, window, alpha)
        if not np.all(np.isfinite(theta)):
            theta = np.array(meta_theta, dtype=float)
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


@dataclass
class LaneDiscretizer:
    """Buckets the (noisy) observation features for tabular methods."""

    offset_edges: np.ndarray = field(default_factory=lambda: np.array([-0.6, -0.2, 0.2, 0.6]))
    heading_edges: np.ndarray = field(default_factory=lambda: np.array([-0.2, -0.05, 0.05, 0.2]))
    speed_edges: np.ndarray = field(default_factory=lambda: np.array([0.2, 0.5, 0.8]))
    visibility_edges: np.ndarray = field(default_factory=lambda: np.array([0.45, 0.7]))

    @property
    def n_buckets(self) -> int:
        return (
            (len(self.offset_edges) + 1)
            * (len(self.heading_edges) + 1)
            * (len(self.speed_edges) + 1)
            * (len(self.visibility_edges) + 1)
        )

    def bucket(self, obs) -> int:
        # observation layout: [bias, offset, heading, speed, visibility]
        i0 = int(np.digitize(obs[1], self.offset_edges))
        i1 = int(np.digitize(obs[2], self.heading_edges))
        i2 = int(np.digitize(obs[3], self.speed_edges))
        i3 = int(np.digitize(obs[4], self.visibility_edges))
        n1 = len(self.heading_edges) + 1
        n2 = len(self.speed_edges) + 1
        n3 = len(self.visibility_edges) + 1
        return ((i0 * n1 + i1) * n2 + i2) * n3 + i3

    def metadata(self) -> dict:
        return {
            "offset_edges": self.offset_edges.tolist(),
            "heading_edges": self.heading_edges.tolist(),
            "speed_edges": self.speed_edges.tolist(),
            "visibility_edges": self.visibility_edges.tolist(),
        }


@dataclass
class QTable:
    values: np.ndarray   # (n_buckets, n_actions)
    visited: np.ndarray  # bool mask of updated pairs

    def greedy_action(self, bucket: int) -> int:
        return int(np.argmax(self.values[bucket]))

    @property
    def unvisited_fraction(self) -> float:
        return float(1.0 - self.visited.mean())


@dataclass
class QLearnConfig:
    episodes: int = 400
    alpha: float = 0.2
    alpha_decay: float = 0.999
    epsilon: float = 0.3
    epsilon_decay: float = 0.995
    epsilon_min: float = 0.02
    gamma: float = 0.99
    plateau_window: int = 20
    plateau_tol: float = 1e-3
    seed: int = 0


def train_q_table(make_env, discretize, n_buckets: int, n_actions: int,
                  cfg: QLearnConfig) -> QTable:
    """Tabular Q-learning over bucketed observations in a fixed-mode env,
    stopping on a value-change plateau."""
    rng = np.random.default_rng(cfg.seed)
    q = np.zeros((n_buckets, n_actions))
    visited = np.zeros((n_buckets, n_actions), dtype=bool)
    alpha = cfg.alpha
    epsilon = cfg.epsilon
    deltas: list[float] = []
    for _ in range(cfg.episodes):
        env = make_env()
        obs = env.reset(rng)
        s = discretize(obs)
        done = False
        max_delta = 0.0
        while not done:
            if rng.random() < epsilon:
                a = int(rng.integers(n_actions))
            else:
                a = int(np.argmax(q[s]))
            obs, r, done, _ = env.step(a)
            s_next = discretize(obs)
            target = r if done else r + cfg.gamma * float(np.max(q[s_next]))
            delta = alpha * (target - q[s, a])
            q[s, a] += delta
            visited[s, a] = True
            max_delta = max(max_delta, abs(delta))
            s = s_next
        deltas.append(max_delta)
        alpha *= cfg.alpha_decay
        epsilon = max(cfg.epsilon_min, epsilon * cfg.epsilon_decay)
        if len(deltas) >= cfg.plateau_window and np.mean(deltas[-cfg.plateau_window :]) < cfg.plateau_tol:
            break
    return QTable(values=q, visited=visited)


def q_mix_action(belief, tables: list[QTable], bucket: int) -> int:
    """Greedy action of the belief-weighted table mixture; ties take the
    lowest action index."""
    if len(tables) != len(belief):
        raise ValueError("one table per supported mode is required")
    mixed = np.zeros(tables[0].values.shape[1])
    for b, table in zip(belief, tables):
        mixed += b * table.values[bucket]
    return int(np.argmax(mixed))


def qmix_episode(tables: list[QTable], discretize, likelihood_fn, env,
                 likelihood_floor: float, env_rng, belief_rng) -> Trajectory:
    """Online rollout acting greedily on the belief-weighted Q mixture,
    with the same belief pipeline the adaptive policy uses."""
    horizon = env.horizon
    belief = uniform_belief(len(tables))
    obs = env.reset(env_rng)
    n_features = obs.shape[0]
    observations = np.empty((horizon, n_features))
    actions = np.empty(horizon, dtype=np.intp)
    rewards = np.empty(horizon)
    speeds = np.zeros(horizon)
    mode_trace = np.zeros((horizon, 3))
    info = {}
    t = 0
    for t in range(horizon):
        observations[t] = obs
        current_mode = env.current_mode()
        a = q_mix_action(belief, tables, discretize(obs))
        actions[t] = a
        f_out = likelihood_fn(obs, current_mode, belief_rng)
        belief = bayes_update(belief, apply_likelihood_floor(f_out, likelihood_floor))
        obs, r, done, info = env.step(a)
        rewards[t] = r
        speeds[t] = info.get("speed", 0.0)
        mode_trace[t] = current_mode.as_array()
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


def authentic_window(policy, theta, env, lookahead: int, n_rollouts: int, rng) -> WindowData | None:
    """Roll n_rollouts K-step futures from the live state under the true mode
    sequence (privileged simulator access) and package them for the solver."""
    if not hasattr(env, "clone"):
        raise TypeError("oracle requires an environment that supports cloning")
    obs_parts, act_parts, rtg_parts = [], [], []
    start_obs = env.last_observation()
    children = rng.spawn(n_rollouts)
    for child in children:
        sim = env.clone(child)
        obs = start_obs
        seg_obs, seg_act, seg_rew = [], [], []
        for _ in range(lookahead):
            a = policy.sample_action(theta, obs, child)
            seg_obs.append(obs)
            seg_act.append(a)
            obs, r, done, _ = sim.step(a)
            seg_rew.append(r)
            if done:
                break
        if seg_obs:
            obs_parts.append(np.array(seg_obs))
            act_parts.append(np.array(seg_act, dtype=np.intp))
            rtg_parts.append(returns_to_go(np.array(seg_rew)))
    if not obs_parts:
        return None
    return WindowData(
        obs=np.vstack(obs_parts),
        actions=np.concatenate(act_parts),
        rtg=np.concatenate(rtg_parts),
        n_segments=len(obs_parts),
    )


def oracle_step(policy, theta, env, lookahead: int, n_rollouts: int,
                trust: TrustRegionConfig, rng):
    """Trust-region update from authentic futures; reads neither belief nor banks."""
    data = authentic_window(policy, theta, env, lookahead, n_rollouts, rng)
    if data is None:
        return theta, None
    theta_new, diag = solve_adaptation(policy, theta, [(1.0, data)], trust)
    return theta_new, diag


def oracle_episode(policy, meta_theta, env, cfg: AdaptConfig, env_rng, action_rng,
                   oracle_rng) -> Trajectory:
    """Online rollout adapting every step with authentic future rollouts."""
    horizon = env.horizon
    theta = np.array(meta_theta, dtype=float)
    obs = env.reset(env_rng)
    n_features = obs.shape[0]
    observations = np.empty((horizon, n_features))
    actions = np.empty(horizon, dtype=np.intp)
    rewards = np.empty(horizon)
    speeds = np.zeros(horizon)
    mode_trace = np.zeros((horizon, 3))
    info = {}
    t = 0
    for t in range(horizon):
        observations[t] = obs
        current_mode = env.current_mode()
        a = policy.sample_action(theta, obs, action_rng)
        actions[t] = a
        obs, r, done, info = env.step(a)
        rewards[t] = r
        speeds[t] = info.get("speed", 0.0)
        mode_trace[t] = current_mode.as_array()
        if not done and t + cfg.lookahead <= horizon:
            theta, _ = oracle_step(policy, theta, env, cfg.lookahead, cfg.segments,
                                   cfg.trust, oracle_rng)
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
