import dataclasses

import numpy as np
import pytest

from colalab.cola import (
    AdaptConfig,
    TrustRegionConfig,
    WindowData,
    cola_episode,
    conjectural_gradient,
    conjugate_gradient,
    sample_window,
    solve_adaptation,
    trust_region_step,
    window_data,
)
from colalab.env import LaneWorld, Mode
from colalab.meta import TrainerConfig, collect_bank, policy_hash, rollout, trajectory_gradient
from colalab.policy import LinearSoftmaxPolicy


@pytest.fixture(scope="module")
def bank_setup(request):
    """Docile env + untrained-but-nonzero policy + full-horizon banks."""
    from colalab.env import EnvConfig

    env_cfg = EnvConfig(horizon=40, delta_t=10, noise_scale=0.1,
                        lane_half_width=6.0, lane_penalty=2.0)
    policy = LinearSoftmaxPolicy(env_cfg.n_features, env_cfg.n_actions)
    theta = np.random.default_rng(8).normal(0, 0.1, policy.dim)
    anchors = env_cfg.anchor_modes()
    cfg = TrainerConfig(bank_size=6, seed=3)
    banks = collect_bank(
        lambda mode: LaneWorld(env_cfg, mode), policy, theta, anchors, cfg,
        np.random.SeedSequence(100),
    )
    return env_cfg, policy, theta, anchors, banks


class TestSampleWindow:
    def test_full_bank_returns_all_slices(self, bank_setup):
        _, _, _, anchors, banks = bank_setup
        windows = sample_window(banks, 5, 10, 6, np.random.default_rng(0))
        for mode in anchors:
            stored = {tr.observations[5:15].tobytes() for tr in banks.trajectories[mode]}
            sampled = {windows[mode].obs[i].tobytes() for i in range(6)}
            assert sampled == stored

    def test_window_beyond_horizon_rejected(self, bank_setup):
        _, _, _, _, banks = bank_setup
        with pytest.raises(ValueError):
            sample_window(banks, 35, 10, 2, np.random.default_rng(0))

    def test_insufficient_depth_rejected(self, bank_setup):
        _, _, _, _, banks = bank_setup
        with pytest.raises(ValueError):
            sample_window(banks, 0, 5, 7, np.random.default_rng(0))

    def test_fixed_seed_reproduces_sample(self, bank_setup):
        _, _, _, anchors, banks = bank_setup
        w1 = sample_window(banks, 3, 8, 3, np.random.default_rng(9))
        w2 = sample_window(banks, 3, 8, 3, np.random.default_rng(9))
        for mode in anchors:
            assert np.array_equal(w1[mode].obs, w2[mode].obs)
            assert np.array_equal(w1[mode].actions, w2[mode].actions)

    def test_window_slices_align_with_bank_times(self, bank_setup):
        _, _, _, anchors, banks = bank_setup
        windows = sample_window(banks, 7, 5, 2, np.random.default_rng(1))
        w = windows[anchors[0]]
        assert w.start == 7 and w.length == 5
        assert w.obs.shape == (2, 5, 5)


class TestConjecturalGradient:
    def test_degenerate_belief_selects_single_mode(self, bank_setup):
        _, policy, theta, anchors, banks = bank_setup
        windows = sample_window(banks, 2, 6, 4, np.random.default_rng(2))
        g = conjectural_gradient(policy, theta, np.array([1.0, 0.0]), windows, anchors)
        data = window_data(windows[anchors[0]])
        manual = policy.segment_gradient(theta, data.obs, data.actions, data.rtg) / 4
        assert np.allclose(g, manual, atol=1e-14)

    def test_mixture_linearity_exact(self, bank_setup):
        _, policy, theta, anchors, banks = bank_setup
        windows = sample_window(banks, 2, 6, 4, np.random.default_rng(3))
        g0 = conjectural_gradient(policy, theta, np.array([1.0, 0.0]), windows, anchors)
        g1 = conjectural_gradient(policy, theta, np.array([0.0, 1.0]), windows, anchors)
        for b in (0.25, 0.5, 0.9):
            mix = conjectural_gradient(policy, theta, np.array([b, 1.0 - b]), windows, anchors)
            assert np.allclose(mix, b * g0 + (1.0 - b) * g1, atol=1e-12)

    def test_rtg_is_segment_local(self, bank_setup):
        _, _, _, anchors, banks = bank_setup
        windows = sample_window(banks, 0, 4, 2, np.random.default_rng(4))
        data = window_data(windows[anchors[0]])
        rewards = windows[anchors[0]].rewards
        assert data.rtg[0] == pytest.approx(rewards[0].sum(), abs=1e-12)
        assert data.rtg[3] == pytest.approx(rewards[0, 3], abs=1e-12)

    def test_empty_windows_rejected(self, bank_setup):
        _, policy, theta, _, _ = bank_setup
        with pytest.raises(ValueError):
            conjectural_gradient(policy, theta, np.array([1.0]), {}, [])

    def test_matches_kstep_objective_gradient(self, enum_mdp, enum_policy):
        """Mean conjectural gradient over bank resamples vs the exact gradient
        of the K-step window objective, by exhaustive enumeration."""
        rng = np.random.default_rng(5)
        theta = rng.normal(0, 0.3, enum_policy.dim)
        theta_mat = theta.reshape(enum_mdp.n_actions, enum_mdp.n_states)
        start_t, k = 1, 2
        horizon = start_t + k

        # exact: enumerate length-(t+K) prefixes; window gradient only counts
        # scores inside [t, t+K) weighted by in-window reward-to-go
        exact = np.zeros(enum_policy.dim)
        from conftest import local_logpi_grad

        for prob, states, actions in enum_mdp.enumerate_paths(theta_mat, horizon=horizon):
            score = np.zeros(enum_policy.dim)
            for h in range(start_t, horizon):
                rtg = sum(
                    enum_mdp.reward[states[j], actions[j]] for j in range(h, horizon)
                )
                score += rtg * local_logpi_grad(theta_mat, enum_mdp.features(states[h]), actions[h])
            exact += prob * score

        from colalab.cola import LookaheadWindow

        draws = 3000
        for n_segments in (1, 2):  # M=2 exercises the leave-one-out baseline
            samples = np.empty((draws, enum_policy.dim))
            for i in range(draws):
                segs = [enum_mdp.simulate(theta_mat, rng, horizon=horizon)
                        for _ in range(n_segments)]
                win = LookaheadWindow(
                    start=start_t, length=k,
                    obs=np.stack([s.observations[start_t:horizon] for s in segs]),
                    actions=np.stack([s.actions[start_t:horizon] for s in segs]),
                    rewards=np.stack([s.rewards[start_t:horizon] for s in segs]),
                )
                data = window_data(win)
                samples[i] = enum_policy.segment_gradient(
                    theta, data.obs, data.actions, data.rtg
                ) / n_segments
            mean = samples.mean(axis=0)
            se = samples.std(axis=0, ddof=1) / np.sqrt(draws)
            assert np.all(np.abs(mean - exact) <= 3.0 * se + 1e-12)


class TestConjugateGradient:
    def cfg(self, **kw):
        return TrustRegionConfig(**kw)

    def test_identity_system(self):
        g = np.array([1.0, -2.0, 3.0])
        res = conjugate_gradient(lambda v: v, g, self.cfg())
        assert np.allclose(res.x, g, atol=1e-12)
        assert res.residual <= 1e-10

    def test_diagonal_hand_solve(self):
        a = np.diag([2.0, 4.0])
        res = conjugate_gradient(lambda v: a @ v, np.array([2.0, 4.0]), self.cfg())
        assert np.allclose(res.x, [1.0, 1.0], atol=1e-10)

    def test_random_spd_50(self):
        rng = np.random.default_rng(6)
        m = rng.normal(size=(50, 50))
        a = m @ m.T + 50 * np.eye(50)
        g = rng.normal(size=50)
        res = conjugate_gradient(lambda v: a @ v, g, self.cfg(cg_iters=50, cg_tol=1e-10))
        dense = np.linalg.solve(a, g)
        assert res.residual <= 1e-8 * np.linalg.norm(g)
        assert np.allclose(res.x, dense, atol=1e-6)
        assert res.iterations <= 50

    def test_zero_rhs(self):
        res = conjugate_gradient(lambda v: v, np.zeros(4), self.cfg())
        assert np.array_equal(res.x, np.zeros(4))
        assert res.iterations == 0

    def test_non_finite_aborts(self):
        with pytest.raises(FloatingPointError):
            conjugate_gradient(lambda v: v * np.nan, np.ones(3), self.cfg())


class TestTrustRegionStep:
    def test_unit_beta_when_curvature_is_twice_delta(self):
        cfg = TrustRegionConfig(delta=0.01)
        d = np.array([np.sqrt(2 * 0.01), 0.0])  # d.d = 2*delta under identity
        theta, diag = trust_region_step(np.zeros(2), d, lambda v: v, cfg)
        assert diag.beta == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(theta, d, atol=1e-12)

    def test_identity_curvature_closed_form(self):
        cfg = TrustRegionConfig(delta=0.02)
        g = np.array([0.3, -0.4, 1.2])
        theta, diag = trust_region_step(np.zeros(3), g, lambda v: v, cfg)
        beta = np.sqrt(2 * 0.02 / float(g @ g))
        assert np.allclose(theta, beta * g, atol=1e-14)

    def test_quadratic_model_spends_exact_budget(self):
        rng = np.random.default_rng(7)
        m = rng.normal(size=(6, 6))
        a = m @ m.T + np.eye(6)
        cfg = TrustRegionConfig(delta=0.01)
        d = rng.normal(size=6)
        theta, _ = trust_region_step(np.zeros(6), d, lambda v: a @ v, cfg)
        model = 0.5 * float(theta @ (a @ theta))
        assert model == pytest.approx(cfg.delta, abs=1e-10)

    def test_non_positive_curvature_returns_theta(self):
        cfg = TrustRegionConfig(delta=0.01)
        theta0 = np.array([1.0, 2.0])
        theta, diag = trust_region_step(theta0, np.array([1.0, 0.0]), lambda v: -v, cfg)
        assert np.array_equal(theta, theta0)
        assert diag.skipped == "non-positive curvature"

    def test_fixed_mode_scales_bound(self):
        cfg = TrustRegionConfig(delta=0.02, step_mode="fixed", fixed_frac=0.5)
        g = np.array([1.0, 0.0])
        theta, diag = trust_region_step(np.zeros(2), g, lambda v: v, cfg)
        assert diag.beta == pytest.approx(0.5 * np.sqrt(2 * 0.02), abs=1e-12)

    def test_fixed_beta_capped_by_bound(self):
        cfg = TrustRegionConfig(delta=0.02, step_mode="fixed", fixed_beta=100.0)
        g = np.array([1.0, 0.0])
        _, diag = trust_region_step(np.zeros(2), g, lambda v: v, cfg)
        assert diag.beta == pytest.approx(np.sqrt(2 * 0.02), abs=1e-12)

    def test_line_search_halves_until_kl_fits(self):
        cfg = TrustRegionConfig(delta=0.01)
        g = np.array([1.0])

        # pretend the sampled KL is 4x the quadratic model: two halvings needed
        def kl_fn(candidate):
            return 4.0 * 0.5 * float(candidate @ candidate)

        theta, diag = trust_region_step(
            np.zeros(1), g, lambda v: v, cfg, kl_fn=kl_fn, objective_fn=lambda th: float(th[0])
        )
        assert kl_fn(theta) <= cfg.delta
        assert diag.accepted

    def test_line_search_exhaustion_keeps_theta(self):
        cfg = TrustRegionConfig(delta=0.01, backtracks=3)
        theta, diag = trust_region_step(
            np.zeros(1), np.array([1.0]), lambda v: v, cfg,
            kl_fn=lambda th: 1e9, objective_fn=lambda th: 0.0,
        )
        assert np.array_equal(theta, np.zeros(1))
        assert diag.skipped == "line search exhausted"


class TestSolveAdaptation:
    def test_zero_weights_skip(self, bank_setup):
        _, policy, theta, anchors, banks = bank_setup
        windows = sample_window(banks, 0, 5, 3, np.random.default_rng(0))
        weighted = [(0.0, window_data(windows[m])) for m in anchors]
        theta_new, diag = solve_adaptation(policy, theta, weighted, TrustRegionConfig())
        assert np.array_equal(theta_new, theta)
        assert diag.skipped == "empty mixture"

    def test_oracle_and_bank_paths_identical_on_same_data(self, bank_setup):
        _, policy, theta, anchors, banks = bank_setup
        windows = sample_window(banks, 0, 6, 4, np.random.default_rng(1))
        data = window_data(windows[anchors[0]])
        cfg = TrustRegionConfig()
        bank_theta, _ = solve_adaptation(policy, theta, [(1.0, data), (0.0, window_data(windows[anchors[1]]))], cfg)
        oracle_theta, _ = solve_adaptation(policy, theta, [(1.0, data)], cfg)
        assert np.array_equal(bank_theta, oracle_theta)

    def test_sampled_kl_within_budget(self, bank_setup):
        _, policy, theta, anchors, banks = bank_setup
        cfg = TrustRegionConfig(delta=0.01)
        windows = sample_window(banks, 0, 8, 4, np.random.default_rng(2))
        weighted = [(0.5, window_data(windows[m])) for m in anchors]
        theta_new, diag = solve_adaptation(policy, theta, weighted, cfg)
        if diag.accepted:
            assert diag.sampled_kl <= 1.05 * cfg.delta


class TestColaEpisode:
    def likelihoods(self, kind):
        if kind == "perfect":
            return lambda obs, mode, rng: np.array([0.0, 1.0])
        return lambda obs, mode, rng: np.array([0.6, 0.4])

    def test_zero_delta_reduces_to_base_rollout(self, bank_setup):
        env_cfg, policy, theta, anchors, banks = bank_setup
        adapt = AdaptConfig(lookahead=8, segments=4,
                            trust=TrustRegionConfig(delta=0.0))
        traj_cola, _ = cola_episode(
            policy, theta, self.likelihoods("noisy"), banks, LaneWorld(env_cfg),
            adapt, np.random.default_rng(21), np.random.default_rng(22),
            np.random.default_rng(23), np.random.default_rng(24),
        )
        traj_plain = rollout(LaneWorld(env_cfg), policy, theta,
                             np.random.default_rng(21), np.random.default_rng(22))
        assert np.array_equal(traj_cola.rewards, traj_plain.rewards)
        assert np.array_equal(traj_cola.actions, traj_plain.actions)

    def test_perfect_classifier_collapses_belief_immediately(self, bank_setup):
        env_cfg, policy, theta, anchors, banks = bank_setup
        adapt = dataclasses.replace(AdaptConfig(lookahead=8, segments=4), likelihood_floor=0.0)
        _, logs = cola_episode(
            policy, theta, self.likelihoods("perfect"), banks, LaneWorld(env_cfg),
            adapt, np.random.default_rng(31), np.random.default_rng(32),
            np.random.default_rng(33), np.random.default_rng(34),
        )
        rainy = logs.column("belief_rainy")
        assert np.all(rainy == 1.0)

    def test_bit_reproducible(self, bank_setup):
        env_cfg, policy, theta, anchors, banks = bank_setup
        adapt = AdaptConfig(lookahead=8, segments=4)
        outs = []
        for _ in range(2):
            traj, logs = cola_episode(
                policy, theta, self.likelihoods("noisy"), banks, LaneWorld(env_cfg),
                adapt, np.random.default_rng(41), np.random.default_rng(42),
                np.random.default_rng(43), np.random.default_rng(44),
            )
            outs.append((traj, logs))
        assert np.array_equal(outs[0][0].rewards, outs[1][0].rewards)
        assert outs[0][1].rows == outs[1][1].rows

    def test_wrong_bank_hash_rejected(self, bank_setup):
        env_cfg, policy, theta, anchors, banks = bank_setup
        with pytest.raises(ValueError):
            cola_episode(
                policy, theta + 1.0, self.likelihoods("noisy"), banks, LaneWorld(env_cfg),
                AdaptConfig(), np.random.default_rng(0), np.random.default_rng(1),
                np.random.default_rng(2), np.random.default_rng(3),
            )

    def test_adaptation_skipped_near_horizon(self, bank_setup):
        env_cfg, policy, theta, anchors, banks = bank_setup
        adapt = AdaptConfig(lookahead=8, segments=4)
        _, logs = cola_episode(
            policy, theta, self.likelihoods("noisy"), banks, LaneWorld(env_cfg),
            adapt, np.random.default_rng(51), np.random.default_rng(52),
            np.random.default_rng(53), np.random.default_rng(54),
        )
        skip_from = env_cfg.horizon - adapt.lookahead + 1
        betas = logs.column("beta")
        ts = logs.column("t").astype(int)
        assert np.all(betas[ts >= skip_from] == 0.0)

    def test_line_search_kl_bound_on_all_steps(self, bank_setup):
        env_cfg, policy, theta, anchors, banks = bank_setup
        adapt = AdaptConfig(lookahead=8, segments=4, trust=TrustRegionConfig(delta=0.01))
        for seed in range(5):
            _, logs = cola_episode(
                policy, theta, self.likelihoods("noisy"), banks, LaneWorld(env_cfg),
                adapt, np.random.default_rng(60 + seed), np.random.default_rng(70 + seed),
                np.random.default_rng(80 + seed), np.random.default_rng(90 + seed),
            )
            assert np.all(logs.column("sampled_kl") <= 1.05 * 0.01 + 1e-15)

    def test_forced_belief_pins_mixture(self, bank_setup):
        env_cfg, policy, theta, anchors, banks = bank_setup
        adapt = AdaptConfig(lookahead=8, segments=4)
        _, logs = cola_episode(
            policy, theta, self.likelihoods("noisy"), banks, LaneWorld(env_cfg),
            adapt, np.random.default_rng(61), np.random.default_rng(62),
            np.random.default_rng(63), np.random.default_rng(64),
            forced_belief=np.array([0.0, 1.0]),
        )
        assert np.all(logs.column("belief_rainy") == 1.0)
        assert np.all(logs.column("belief_cloudy") == 0.0)
