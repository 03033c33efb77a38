"""Belief-weighted lookahead adaptation: per-step trust-region policy updates
computed from time-aligned bank segments, solved matrix-free with conjugate
gradients. The same solver core serves the online loop and the oracle baseline
(which feeds it authentic rollouts instead of bank slices)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from colalab.belief import apply_likelihood_floor, bayes_update, uniform_belief
from colalab.env import Mode, Trajectory
from colalab.meta import TrajectoryBank, policy_hash


@dataclass(frozen=True)
class TrustRegionConfig:
    delta: float = 0.01
    cg_iters: int = 30
    cg_tol: float = 1e-8
    damping: float = 1e-4
    step_mode: str = "line-search"  # or "fixed"
    backtracks: int = 10
    fixed_beta: float | None = None  # absolute fixed step, capped by the KL bound
    fixed_frac: float = 0.5          # else this fraction of the bound


@dataclass(frozen=True)
class AdaptConfig:
    lookahead: int = 10       # K
    segments: int = 8         # M
    trust: TrustRegionConfig = field(default_factory=TrustRegionConfig)
    likelihood_floor: float = 1e-6
    log_drift: bool = False


@dataclass
class LookaheadWindow:
    """M bank-trajectory slices covering absolute steps [start, start+length)."""

    start: int
    length: int
    obs: np.ndarray      # (M, K, F)
    actions: np.ndarray  # (M, K)
    rewards: np.ndarray  # (M, K)

    @property
    def n_segments(self) -> int:
        return self.obs.shape[0]


def sample_window(banks: TrajectoryBank, t: int, lookahead: int, n_segments: int,
                  rng) -> dict[Mode, LookaheadWindow]:
    """Uniformly draw n_segments trajectories per anchor mode (without
    replacement) and slice their [t, t+K) windows."""
    if t + lookahead > banks.horizon:
        raise ValueError(f"window [{t}, {t + lookahead}) exceeds horizon {banks.horizon}")
    out = {}
    for mode in banks.modes():
        trajs = banks.trajectories[mode]
        if len(trajs) < n_segments:
            raise ValueError(
                f"bank for {mode} holds {len(trajs)} trajectories, need {n_segments}"
            )
        idx = rng.choice(len(trajs), size=n_segments, replace=False)
        obs = np.stack([trajs[i].observations[t : t + lookahead] for i in idx])
        act = np.stack([trajs[i].actions[t : t + lookahead] for i in idx])
        rew = np.stack([trajs[i].rewards[t : t + lookahead] for i in idx])
        out[mode] = LookaheadWindow(t, lookahead, obs, act, rew)
    return out


@dataclass
class WindowData:
    """Flattened segment steps with in-window reward-to-go weights.

    The weights are the raw within-segment tail sums. Their positive bulk is
    load-bearing off-policy: once the live parameters drift from the bank
    policy, the unreweighted score term pulls the policy toward each mode's
    demonstrated behavior in proportion to that mode's return level, which is
    how bank knowledge (fast cloudy driving, cautious rainy driving) transfers.
    """

    obs: np.ndarray      # (n_segments*K, F)
    actions: np.ndarray  # (n_segments*K,)
    rtg: np.ndarray      # (n_segments*K,)
    n_segments: int


def window_data(window: LookaheadWindow) -> WindowData:
    rtg = np.flip(np.cumsum(np.flip(window.rewards, axis=1), axis=1), axis=1)
    m, k = window.actions.shape
    return WindowData(
        obs=window.obs.reshape(m * k, -1),
        actions=window.actions.reshape(m * k),
        rtg=rtg.reshape(m * k),
        n_segments=m,
    )


def conjectural_gradient(policy, theta, belief, windows: dict[Mode, LookaheadWindow],
                         modes: list[Mode]) -> np.ndarray:
    """Belief-weighted mean segment gradient, reward-to-go within the window."""
    if not windows:
        raise ValueError("no lookahead windows")
    out = np.zeros(policy.dim)
    for w, mode in zip(belief, modes):
        if w == 0.0:
            continue
        data = window_data(windows[mode])
        out += w * policy.segment_gradient(theta, data.obs, data.actions, data.rtg) / data.n_segments
    return out


@dataclass
class CGResult:
    x: np.ndarray
    residual: float  # ||A x - g|| recomputed with one extra operator call
    iterations: int


def conjugate_gradient(avp, g, cfg: TrustRegionConfig) -> CGResult:
    """Solve A x = g for symmetric PSD A given only the product v -> A v."""
    g = np.asarray(g, dtype=float)
    x = np.zeros_like(g)
    gnorm = float(np.linalg.norm(g))
    rdotr = float(g @ g)
    if gnorm == 0.0 or rdotr == 0.0:  # rdotr underflows before gnorm does
        return CGResult(x, 0.0, 0)
    r = g.copy()
    p = g.copy()
    tol2 = (cfg.cg_tol * gnorm) ** 2
    iterations = 0
    for _ in range(cfg.cg_iters):
        ap = avp(p)
        if not np.all(np.isfinite(ap)):
            raise FloatingPointError("non-finite operator output in conjugate gradient")
        pap = float(p @ ap)
        if pap <= 1e-300:  # numerically lost positive-definiteness
            break
        alpha = rdotr / pap
        x += alpha * p
        r -= alpha * ap
        new_rdotr = float(r @ r)
        iterations += 1
        if new_rdotr <= tol2:
            break
        p = r + (new_rdotr / rdotr) * p
        rdotr = new_rdotr
    residual = float(np.linalg.norm(avp(x) - g))
    return CGResult(x, residual, iterations)


@dataclass
class StepDiagnostics:
    g_norm: float = 0.0
    cg_residual: float = 0.0
    cg_iterations: int = 0
    beta: float = 0.0
    sampled_kl: float = 0.0
    curvature: float = 0.0
    accepted: bool = False
    skipped: str = ""


def trust_region_step(theta, dtheta, avp, cfg: TrustRegionConfig,
                      kl_fn=None, objective_fn=None, diag: StepDiagnostics | None = None):
    """Scale the search direction so the quadratic KL model spends exactly the
    budget; line-search mode backtracks until the sampled KL fits and the
    surrogate objective improves. `avp` must be the undamped curvature."""
    diag = diag if diag is not None else StepDiagnostics()
    curvature = float(dtheta @ avp(dtheta))
    diag.curvature = curvature
    if curvature <= 0.0 or not np.isfinite(curvature):
        diag.skipped = "non-positive curvature"
        return theta, diag
    beta = float(np.sqrt(2.0 * cfg.delta / curvature))
    if cfg.step_mode == "fixed":
        if cfg.fixed_beta is not None:
            beta = min(cfg.fixed_beta, beta)
        else:
            beta = cfg.fixed_frac * beta
        diag.beta = beta
        diag.accepted = True
        return theta + beta * dtheta, diag
    if kl_fn is None or objective_fn is None:
        diag.beta = beta
        diag.accepted = True
        return theta + beta * dtheta, diag
    base_objective = objective_fn(theta)
    for _ in range(cfg.backtracks + 1):
        candidate = theta + beta * dtheta
        kl = kl_fn(candidate)
        if kl <= cfg.delta and objective_fn(candidate) > base_objective:
            diag.beta = beta
            diag.sampled_kl = float(kl)
            diag.accepted = True
            return candidate, diag
        beta *= 0.5
    diag.skipped = "line search exhausted"
    return theta, diag


def solve_adaptation(policy, theta, weighted: list[tuple[float, WindowData]],
                     cfg: TrustRegionConfig) -> tuple[np.ndarray, StepDiagnostics]:
    """One trust-region solve on a weighted mixture of window datasets.

    The online loop weights bank windows by the belief; the oracle passes a
    single unit-weight window of authentic rollouts.
    """
    diag = StepDiagnostics()
    active = [(w, d) for w, d in weighted if w > 0.0]
    if not active:
        diag.skipped = "empty mixture"
        return theta, diag

    g = np.zeros(policy.dim)
    for w, data in active:
        g += w * policy.segment_gradient(theta, data.obs, data.actions, data.rtg) / data.n_segments
    g_norm = float(np.linalg.norm(g))
    diag.g_norm = g_norm
    if g_norm == 0.0 or not np.isfinite(g_norm):
        diag.skipped = "zero or non-finite gradient"
        return theta, diag

    def avp_pure(v):
        out = np.zeros_like(v)
        for w, data in active:
            out += w * policy.fisher_vector_product(theta, data.obs, v, damping=0.0)
        return out

    def avp_damped(v):
        return avp_pure(v) + cfg.damping * v

    cg = conjugate_gradient(avp_damped, g, cfg)
    diag.cg_residual = cg.residual
    diag.cg_iterations = cg.iterations
    if not np.all(np.isfinite(cg.x)):
        diag.skipped = "non-finite search direction"
        return theta, diag

    def kl_fn(candidate):
        return sum(w * policy.mean_kl(theta, candidate, d.obs) for w, d in active)

    def objective_fn(candidate):
        return sum(
            w * policy.surrogate(theta, candidate, d.obs, d.actions, d.rtg) / d.n_segments
            for w, d in active
        )

    theta_new, diag = trust_region_step(theta, cg.x, avp_pure, cfg, kl_fn, objective_fn, diag)
    if diag.accepted:
        diag.sampled_kl = float(kl_fn(theta_new))
    if not np.all(np.isfinite(theta_new)):
        diag.skipped = "non-finite update"
        diag.accepted = False
        return theta, diag
    return theta_new, diag


@dataclass
class EpisodeLogs:
    """Per-step adaptation telemetry for one online episode."""

    columns: list[str]
    rows: list[list[float]] = field(default_factory=list)

    def append(self, *values):
        self.rows.append([float(v) for v in values])

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([row[i] for row in self.rows])


LOG_COLUMNS = [
    "t", "belief_cloudy", "belief_rainy", "g_norm", "cg_residual",
    "beta", "sampled_kl", "reward", "speed", "drift_kl",
]


def cola_episode(policy, meta_theta, likelihood_fn, banks: TrajectoryBank, env,
                 cfg: AdaptConfig, env_rng, action_rng, adapt_rng, belief_rng,
                 belief_mode: str = "filter", forced_belief=None,
                 check_hash: bool = True) -> tuple[Trajectory, EpisodeLogs]:
    """One online episode: act, calibrate the belief, adapt within the KL
    budget using time-aligned bank windows.

    likelihood_fn(obs, mode, rng) -> probability vector over the anchor set.
    belief_mode "vanilla" bypasses the filter (belief := classifier output);
    forced_belief pins the belief (used for the knowledge-transfer probe).
    """
    if check_hash and banks.policy_hash != policy_hash(policy, meta_theta):
        raise ValueError("trajectory banks were not collected under this policy")
    modes = banks.modes()
    horizon = env.horizon
    theta = np.array(meta_theta, dtype=float)
    belief = uniform_belief(len(modes))

    obs = env.reset(env_rng)
    n_features = obs.shape[0]
    observations = np.empty((horizon, n_features))
    actions_arr = np.empty(horizon, dtype=np.intp)
    rewards = np.empty(horizon)
    speeds = np.zeros(horizon)
    mode_trace = np.zeros((horizon, 3))
    logs = EpisodeLogs(LOG_COLUMNS)
    info = {}
    t = 0

    for t in range(horizon):
        observations[t] = obs
        current_mode = env.current_mode()
        a = policy.sample_action(theta, obs, action_rng)
        actions_arr[t] = a
        obs_next, r, done, info = env.step(a)
        rewards[t] = r
        speeds[t] = info.get("speed", 0.0)
        mode_trace[t] = current_mode.as_array()

        if forced_belief is not None:
            belief = np.asarray(forced_belief, dtype=float)
        else:
            f_out = likelihood_fn(observations[t], current_mode, belief_rng)
            if belief_mode == "vanilla":
                belief = np.asarray(f_out, dtype=float) / np.sum(f_out)
            else:
                belief = bayes_update(belief, apply_likelihood_floor(f_out, cfg.likelihood_floor))

        diag = StepDiagnostics()
        if t + cfg.lookahead <= horizon:
            windows = sample_window(banks, t, cfg.lookahead, cfg.segments, adapt_rng)
            weighted = [(float(b), window_data(windows[m])) for b, m in zip(belief, modes)]
            theta, diag = solve_adaptation(policy, theta, weighted, cfg.trust)
        drift = policy.mean_kl(meta_theta, theta, observations[t][None, :]) if cfg.log_drift else 0.0
        logs.append(t, belief[0], belief[-1], diag.g_norm, diag.cg_residual,
                    diag.beta, diag.sampled_kl, r, speeds[t], drift)

        obs = obs_next
        if done:
            break

    t_term = t + 1
    traj = Trajectory(
        observations=observations[:t_term].copy(),
        actions=actions_arr[:t_term].copy(),
        rewards=rewards[:t_term].copy(),
        speeds=speeds[:t_term].copy(),
        mode_trace=mode_trace[:t_term].copy(),
        t_term=t_term,
        n_out=int(info.get("n_out", 0)),
        n_slow=int(info.get("n_slow", 0)),
        horizon=horizon,
    )
    return traj, logs
