"""LaneWorld: a desk-scale lane-keeping environment with a hidden weather mode.

The hidden mode is a 3-vector (cloudiness, rain, puddles) driven by a periodic
schedule W(t); it corrupts observations (rain scales feature noise, puddles and
clouds attenuate the lane-line visibility cue) and perturbs the dynamics
through a friction term. Rewards combine a speed-maintenance term per step and
terminal collision / driving-too-slowly penalties.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

W0_LOW, W0_HIGH = -150.0, 100.0

# Discrete action catalog entries are [throttle_brake, steer].
COMPACT_CATALOG = np.array(
    [
        [0.0, 0.0],    # coast
        [1.0, 0.0],    # forward
        [-0.5, 0.0],   # brake
        [0.0, -0.5],   # left
        [0.0, 0.5],    # right
        [0.5, -0.5],   # forward left
        [0.5, 0.5],    # forward right
        [-0.5, -0.5],  # brake left
        [-0.5, 0.5],   # brake right
    ]
)

FULL_CATALOG = np.array(
    [
        [0.0, 0.0],
        [0.0, -0.5],
        [0.0, 0.5],
        [1.0, 0.0],
        [-0.5, 0.0],
        [0.5, -0.5],
        [0.5, 0.5],
        [-0.5, -0.5],
        [-0.5, 0.5],
        [0.5, 0.0],
        [0.75, 1.0],
        [0.75, -1.0],
        [-0.5, 1.0],
        [-0.5, -1.0],
        [0.5, 0.75],
        [0.5, -0.75],
        [0.75, 0.0],
        [-1.0, 0.0],
    ]
)

N_FEATURES = 5  # bias, offset/halfwidth, heading, speed/vmax, lane visibility


@dataclass(frozen=True)
class Mode:
    """Hidden weather mode: the three simulator weather parameters."""

    cloudiness: float
    rain: float
    puddles: float

    def as_array(self):
        return np.array([self.cloudiness, self.rain, self.puddles])

    def distance(self, other: "Mode") -> float:
        return float(np.linalg.norm(self.as_array() - other.as_array()))


@dataclass
class VehicleState:
    lateral_offset: float
    heading: float
    speed: float


@dataclass(frozen=True)
class ScheduleConfig:
    """Weather-schedule parameters for one episode."""

    delta_t: int
    w0: float
    horizon: int
    gamma: float = 0.99

    def __post_init__(self):
        if self.horizon % self.delta_t != 0:
            raise ValueError(
                f"horizon {self.horizon} not divisible by delta_t {self.delta_t}"
            )
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")


@dataclass(frozen=True)
class EnvConfig:
    """All LaneWorld constants. Defaults are the documented desk-scale setup."""

    horizon: int = 120
    delta_t: int = 30
    gamma: float = 0.99
    dt: float = 0.1
    a_max: float = 5.0
    c_drag: float = 0.25
    c_steer: float = 0.35
    v_max: float = 12.0
    lane_half_width: float = 2.0
    lane_marking_frac: float = 0.6   # |offset| beyond frac*half_width counts as out of lane
    lane_penalty: float = 30.0       # per-step shaping on squared normalized offset
    noise_scale: float = 1.0         # feature noise sigma at full rain
    visibility_noise: float = 0.4    # constant noise floor on the visibility cue
    slow_speed: float = 0.5          # m/s threshold for the driving-too-slowly flag
    friction_puddles: float = 0.3    # extra drag fraction at max puddles
    catalog: str = "compact"         # "compact" (9 actions) or "full" (18)
    offroad_terminates: bool = True
    w_cloudy: float = -20.0          # anchor W values for the two default modes
    w_rainy: float = 60.0

    def action_catalog(self):
        return COMPACT_CATALOG if self.catalog == "compact" else FULL_CATALOG

    @property
    def n_actions(self):
        return len(self.action_catalog())

    @property
    def n_features(self):
        return N_FEATURES

    def anchor_modes(self):
        """Default anchor set: a cloudy-side and a rainy-side mode."""
        return [
            mode_params(self.w_cloudy, -10.0),
            mode_params(self.w_rainy, -10.0),
        ]


def weather_schedule(k, cfg: ScheduleConfig):
    """Schedule value W for interval index k (k=0 returns the initial value)."""
    w = 25.0 / 12.0 * np.abs(np.mod(1.3 * k * cfg.delta_t + cfg.w0, 250.0) - 125.0) - 150.0
    return np.where(np.asarray(k) == 0, cfg.w0, w)[()]


def translation_d(w_curr, w_next):
    """Puddle translation: -10 while W is rising (puddles lag the rain), 90 after."""
    return np.where(np.asarray(w_next) >= w_curr, -10.0, 90.0)[()]


def mode_params(w, d) -> Mode:
    """Weather parameters derived from the schedule value and puddle translation."""
    return Mode(
        cloudiness=float(np.clip(w + 40.0, 0.0, 90.0)),
        rain=float(np.clip(w, 0.0, 80.0)),
        puddles=float(np.clip(w + d, 0.0, 75.0)),
    )


def speed_reward(v):
    """Per-step speed maintenance reward, peaked at 30 m/s."""
    v = np.asarray(v, dtype=float)
    out = np.where(
        v < 0.0,
        -0.005,
        np.where(
            v <= 30.0,
            v * v / 9.0,
            np.where(v <= 50.0, 5.0 * (50.0 - v), -2.0 * (v - 50.0) ** 2),
        ),
    )
    return out[()]


def collision_penalty(t_term: int, horizon: int, n_out: int) -> float:
    """Terminal penalty for early termination and out-of-lane step count."""
    completed = 100.0 if t_term == horizon else 0.0
    return -100.0 + (t_term - horizon) + completed - 0.1 * n_out


def dts_penalty(n_slow: int) -> float:
    """Terminal driving-too-slowly penalty, as printed (constant for small counts)."""
    return -0.005 * max(50.0, 1e-7 * n_slow)


def mode_at(t: int, sched: ScheduleConfig) -> Mode:
    """Mode in effect at step t under the dynamic schedule."""
    k = t // sched.delta_t
    w_k = float(weather_schedule(k, sched))
    w_next = float(weather_schedule(k + 1, sched))
    return mode_params(w_k, translation_d(w_k, w_next))


def friction(mode: Mode, cfg: EnvConfig) -> float:
    return 1.0 + cfg.friction_puddles * mode.puddles / 75.0


def kinematic_step(state: VehicleState, action, mode: Mode, cfg: EnvConfig) -> VehicleState:
    """One explicit-Euler update of the lane-frame kinematics."""
    throttle_brake, steer = action
    v = state.speed
    v_new = v + cfg.a_max * throttle_brake * cfg.dt - cfg.c_drag * v * cfg.dt * friction(mode, cfg)
    v_new = min(max(v_new, 0.0), cfg.v_max)
    heading_new = state.heading + cfg.c_steer * steer * v * cfg.dt
    offset_new = state.lateral_offset + v * math.sin(state.heading) * cfg.dt
    return VehicleState(offset_new, heading_new, v_new)


def lane_visibility(mode: Mode) -> float:
    """Lane-line visibility cue, attenuated by puddles and cloud cover."""
    return (1.0 - mode.puddles / 150.0) * (1.0 - mode.cloudiness / 180.0)


def observe(state: VehicleState, mode: Mode, cfg: EnvConfig, rng) -> np.ndarray:
    """Noisy feature vector; rain scales the additive noise on every feature.

    The visibility cue carries an extra constant noise floor so a single
    snapshot is an ambiguous mode indicator (temporal integration pays).
    """
    sigma = cfg.noise_scale * mode.rain / 80.0
    noise = rng.normal(0.0, 1.0, 4)
    return np.array(
        [
            1.0,
            state.lateral_offset / cfg.lane_half_width + noise[0] * sigma,
            state.heading + noise[1] * sigma,
            state.speed / cfg.v_max + noise[2] * sigma,
            lane_visibility(mode) + noise[3] * np.hypot(sigma, cfg.visibility_noise),
        ]
    )


def env_step(state: VehicleState, action_idx: int, mode: Mode, rng, cfg: EnvConfig):
    """Stateless single transition: kinematics, observation, step reward, crash flag.

    Horizon bookkeeping and terminal penalties live in LaneWorld.
    """
    catalog = cfg.action_catalog()
    if not 0 <= action_idx < len(catalog):
        raise ValueError(f"action index {action_idx} outside catalog of size {len(catalog)}")
    new_state = kinematic_step(state, catalog[action_idx], mode, cfg)
    crashed = abs(new_state.lateral_offset) > cfg.lane_half_width
    if crashed and not cfg.offroad_terminates:
        new_state.lateral_offset = math.copysign(cfg.lane_half_width, new_state.lateral_offset)
    reward = float(speed_reward(new_state.speed))
    reward -= cfg.lane_penalty * (new_state.lateral_offset / cfg.lane_half_width) ** 2
    obs = observe(new_state, mode, cfg, rng)
    return new_state, obs, reward, crashed


@dataclass
class Trajectory:
    """One episode: step-indexed arrays plus terminal bookkeeping."""

    observations: np.ndarray  # (t_term, n_features)
    actions: np.ndarray       # (t_term,) int
    rewards: np.ndarray       # (t_term,), terminal penalties folded into the last entry
    speeds: np.ndarray        # (t_term,)
    mode_trace: np.ndarray    # (t_term, 3)
    t_term: int
    n_out: int
    n_slow: int
    horizon: int

    def __len__(self):
        return self.t_term

    @property
    def total_reward(self) -> float:
        return float(self.rewards.sum())

    @property
    def completed(self) -> bool:
        return self.t_term == self.horizon


class LaneWorld:
    """Sequential episode interface over the stateless transition functions.

    A fixed `mode` freezes the weather; otherwise the dynamic schedule applies
    with W(0) sampled uniformly at reset.
    """

    def __init__(self, cfg: EnvConfig, mode: Mode | None = None):
        self.cfg = cfg
        self.fixed_mode = mode
        self.state: VehicleState | None = None
        self.sched: ScheduleConfig | None = None
        self.t = 0
        self.n_out = 0
        self.n_slow = 0
        self._rng = None
        self._prev_slow = False
        self._last_obs: np.ndarray | None = None

    @property
    def n_actions(self):
        return self.cfg.n_actions

    @property
    def n_features(self):
        return self.cfg.n_features

    @property
    def horizon(self):
        return self.cfg.horizon

    def current_mode(self) -> Mode:
        return self.fixed_mode if self.fixed_mode is not None else mode_at(self.t, self.sched)

    def mode_sequence(self, start: int, length: int):
        """Modes for steps [start, start+length); the oracle's privileged view."""
        if self.fixed_mode is not None:
            return [self.fixed_mode] * length
        return [mode_at(t, self.sched) for t in range(start, start + length)]

    def reset(self, rng, w0: float | None = None) -> np.ndarray:
        self._rng = rng
        if self.fixed_mode is None:
            if w0 is None:
                w0 = float(rng.uniform(W0_LOW, W0_HIGH))
            self.sched = ScheduleConfig(self.cfg.delta_t, w0, self.cfg.horizon, self.cfg.gamma)
        self.state = VehicleState(0.0, 0.0, 0.0)
        self.t = 0
        self.n_out = 0
        self.n_slow = 0
        self._prev_slow = False
        self._last_obs = observe(self.state, self.current_mode(), self.cfg, self._rng)
        return self._last_obs

    def step(self, action_idx: int):
        if self.state is None:
            raise RuntimeError("step() before reset()")
        cfg = self.cfg
        mode = self.current_mode()
        self.state, obs, reward, crashed = env_step(self.state, action_idx, mode, self._rng, cfg)
        self.t += 1

        if abs(self.state.lateral_offset) > cfg.lane_marking_frac * cfg.lane_half_width:
            self.n_out += 1
        slow = self.state.speed < cfg.slow_speed
        if slow and self._prev_slow:
            self.n_slow += 1
        self._prev_slow = slow

        self._last_obs = obs
        done = (crashed and cfg.offroad_terminates) or self.t >= cfg.horizon
        info = {
            "speed": self.state.speed,
            "mode": mode,
            "step_reward": reward,
            "terminal_penalty": 0.0,
        }
        if done:
            terminal = collision_penalty(self.t, cfg.horizon, self.n_out) + dts_penalty(self.n_slow)
            reward += terminal
            info["terminal_penalty"] = terminal
            info["t_term"] = self.t
            info["n_out"] = self.n_out
            info["n_slow"] = self.n_slow
        return obs, reward, done, info

    def last_observation(self) -> np.ndarray:
        if self._last_obs is None:
            raise RuntimeError("no observation yet; call reset() first")
        return self._last_obs.copy()

    def clone(self, rng) -> "LaneWorld":
        """Mid-episode copy with its own noise stream (for authentic rollouts)."""
        other = LaneWorld(self.cfg, self.fixed_mode)
        other.sched = self.sched
        other.state = replace(self.state)
        other.t = self.t
        other.n_out = self.n_out
        other.n_slow = self.n_slow
        other._prev_slow = self._prev_slow
        other._last_obs = None if self._last_obs is None else self._last_obs.copy()
        other._rng = rng
        return other


def initial_controller_params(cfg: EnvConfig, forward_bias: float = 1.5,
                              offset_gain: float = 2.0, heading_gain: float = 3.0):
    """Hand-built linear-softmax starting point: a forward bias plus
    corrective steering against offset and heading.

    Policy-gradient training from all-zero logits settles into a parked
    policy (the printed slow-driving penalty is constant at desk scale), so
    trainers start from a driving controller and refine it.
    """
    catalog = cfg.action_catalog()
    theta = np.zeros((len(catalog), N_FEATURES))
    for i, (throttle_brake, steer) in enumerate(catalog):
        if throttle_brake == 1.0 and steer == 0.0:
            theta[i, 0] = forward_bias
        if steer < 0.0:
            theta[i, 1] = offset_gain
            theta[i, 2] = heading_gain
        elif steer > 0.0:
            theta[i, 1] = -offset_gain
            theta[i, 2] = -heading_gain
    return theta.ravel()


class LaneWorldFamily:
    """Environment factory over modes, shared by training and evaluation."""

    def __init__(self, cfg: EnvConfig):
        self.cfg = cfg

    def make(self, mode: Mode | None = None) -> LaneWorld:
        return LaneWorld(self.cfg, mode)

    def anchor_modes(self):
        return self.cfg.anchor_modes()
