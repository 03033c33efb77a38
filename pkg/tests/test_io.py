import io as stdio

import numpy as np
import pytest

from colalab import io
from colalab.baselines import LaneDiscretizer, QTable
from colalab.belief import LikelihoodModel
from colalab.config import (
    ExperimentConfig,
    config_from_dict,
    config_to_dict,
    load_config,
    save_config,
)
from colalab.env import EnvConfig, LaneWorld, Mode
from colalab.meta import TrajectoryBank, rollout
from colalab.policy import LinearSoftmaxPolicy, MlpSoftmaxPolicy


def sample_trajectory(seed=0):
    cfg = EnvConfig(horizon=20, delta_t=10, lane_half_width=6.0)
    policy = LinearSoftmaxPolicy(cfg.n_features, cfg.n_actions)
    theta = np.random.default_rng(seed).normal(0, 0.2, policy.dim)
    return rollout(LaneWorld(cfg), policy, theta,
                   np.random.default_rng(seed + 1), np.random.default_rng(seed + 2))


class TestTrajectoryRoundTrip:
    def test_bit_exact(self):
        traj = sample_trajectory()
        buf = stdio.StringIO()
        io.write_trajectory(buf, traj)
        buf.seek(0)
        back = io.read_trajectory(buf)
        assert np.array_equal(back.observations, traj.observations)
        assert np.array_equal(back.actions, traj.actions)
        assert np.array_equal(back.rewards, traj.rewards)
        assert np.array_equal(back.mode_trace, traj.mode_trace)
        assert (back.t_term, back.n_out, back.n_slow, back.horizon) == (
            traj.t_term, traj.n_out, traj.n_slow, traj.horizon,
        )

    def test_version_header_required(self):
        buf = stdio.StringIO("not a header\n")
        with pytest.raises(ValueError):
            io.read_trajectory(buf)


class TestPolicyFile:
    def test_round_trip_both_families(self, tmp_path):
        for policy in (LinearSoftmaxPolicy(5, 9), MlpSoftmaxPolicy(5, 9, 4)):
            theta = np.random.default_rng(1).normal(size=policy.dim)
            path = tmp_path / f"{policy.family}.json"
            io.save_policy(path, policy, theta, {"catalog_hash": "abc"})
            loaded, theta2, meta = io.load_policy(path)
            assert np.array_equal(theta, theta2)
            assert loaded.dim == policy.dim
            assert meta["catalog_hash"] == "abc"

    def test_wrong_format_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format": "other"}')
        with pytest.raises(ValueError):
            io.load_policy(path)


class TestBankRoundTrip:
    def test_round_trip(self, tmp_path):
        trajs = [sample_trajectory(seed=i) for i in range(3)]
        full = [t for t in trajs]
        bank = TrajectoryBank(
            {Mode(1.0, 2.0, 3.0): full, Mode(4.0, 5.0, 6.0): full[:2]},
            policy_hash="deadbeef", horizon=full[0].horizon,
        )
        io.save_bank(tmp_path / "banks", bank)
        back = io.load_bank(tmp_path / "banks")
        assert back.policy_hash == "deadbeef"
        assert back.horizon == bank.horizon
        assert set(back.trajectories) == set(bank.trajectories)
        for mode in bank.trajectories:
            for a, b in zip(bank.trajectories[mode], back.trajectories[mode]):
                assert np.array_equal(a.rewards, b.rewards)


class TestQTableFile:
    def test_round_trip(self, tmp_path):
        disc = LaneDiscretizer()
        rng = np.random.default_rng(2)
        tables = [
            QTable(values=rng.normal(size=(disc.n_buckets, 9)),
                   visited=rng.random((disc.n_buckets, 9)) > 0.5)
            for _ in range(2)
        ]
        modes = [Mode(20.0, 0.0, 0.0), Mode(90.0, 75.0, 65.0)]
        io.save_q_tables(tmp_path / "q.json", tables, modes, disc)
        back_tables, back_modes, back_disc = io.load_q_tables(tmp_path / "q.json")
        assert back_modes == modes
        assert np.array_equal(back_disc.offset_edges, disc.offset_edges)
        for a, b in zip(tables, back_tables):
            assert np.array_equal(a.values, b.values)
            assert np.array_equal(a.visited, b.visited)


class TestClassifierFile:
    def test_round_trip(self, tmp_path):
        model = LikelihoodModel(weights=np.array([0.5, -1.5, 2.0]), holdout_accuracy=0.91)
        io.save_likelihood(tmp_path / "clf.json", model)
        back = io.load_likelihood(tmp_path / "clf.json")
        assert np.array_equal(back.weights, model.weights)
        assert back.holdout_accuracy == 0.91


class TestCSV:
    def test_round_trip_with_comment(self, tmp_path):
        path = tmp_path / "out.csv"
        io.write_csv(path, ["a", "b"], [[1, 2.5], [3, -0.125]], "config_hash=xyz")
        comment, columns, rows = io.read_csv(path)
        assert comment == "config_hash=xyz"
        assert columns == ["a", "b"]
        assert rows == [["1", "2.5"], ["3", "-0.125"]]

    def test_repeated_write_is_byte_identical(self, tmp_path):
        rows = [[i, float(np.sin(i))] for i in range(50)]
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        io.write_csv(p1, ["i", "x"], rows, "h=1")
        io.write_csv(p2, ["i", "x"], rows, "h=1")
        assert p1.read_bytes() == p2.read_bytes()


class TestConfig:
    def test_round_trip(self, tmp_path):
        cfg = ExperimentConfig(seeds=[1, 2, 3], episodes_per_seed=4)
        save_config(tmp_path / "cfg.json", cfg)
        back = load_config(tmp_path / "cfg.json")
        assert config_to_dict(back) == config_to_dict(cfg)

    def test_nested_overrides(self):
        cfg = config_from_dict({
            "env": {"horizon": 60, "delta_t": 20},
            "adapt": {"lookahead": 5, "trust": {"delta": 0.02}},
            "seeds": [0],
        })
        assert cfg.env.horizon == 60
        assert cfg.adapt.lookahead == 5
        assert cfg.adapt.trust.delta == 0.02

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError):
            config_from_dict({"envv": {}})
        with pytest.raises(ValueError):
            config_from_dict({"env": {"horizont": 5}})

    def test_empty_seed_list_rejected(self):
        with pytest.raises(ValueError):
            ExperimentConfig(seeds=[])

    def test_hash_is_stable(self):
        cfg = ExperimentConfig()
        from colalab.config import experiment_hash

        assert experiment_hash(cfg) == experiment_hash(ExperimentConfig())
        assert experiment_hash(cfg) != experiment_hash(ExperimentConfig(episodes_per_seed=99))
