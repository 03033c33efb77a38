import numpy as np
import pytest

from colalab.env import EnvConfig, Trajectory
from colalab.policy import LinearSoftmaxPolicy


def local_softmax(theta_mat, feat):
    """Test-local softmax, independent of the package kernels."""
    logits = theta_mat @ feat
    logits = logits - logits.max()
    e = np.exp(logits)
    return e / e.sum()


def local_logpi_grad(theta_mat, feat, action):
    """Test-local d log pi(a|s) / d theta for the linear-softmax family."""
    p = local_softmax(theta_mat, feat)
    coef = -p.copy()
    coef[action] += 1.0
    return np.outer(coef, feat).ravel()


class EnumMDP:
    """Tiny finite MDP, exhaustively enumerable: 3 states, 2 actions, H=3.

    Observations are one-hot state encodings so the linear-softmax policy is
    exact. Fixed initial state 0.
    """

    def __init__(self, horizon=3):
        self.n_states = 3
        self.n_actions = 2
        self.horizon = horizon
        # transition[s, a] -> distribution over next states
        self.transition = np.array(
            [
                [[0.7, 0.2, 0.1], [0.1, 0.6, 0.3]],
                [[0.3, 0.3, 0.4], [0.5, 0.4, 0.1]],
                [[0.2, 0.5, 0.3], [0.6, 0.1, 0.3]],
            ]
        )
        self.reward = np.array([[1.0, 0.0], [0.5, 2.0], [-1.0, 0.3]])

    def features(self, s):
        out = np.zeros(self.n_states)
        out[s] = 1.0
        return out

    def enumerate_paths(self, theta_mat, start=0, horizon=None):
        """Yields (prob, states, actions) for every length-horizon path."""
        horizon = horizon or self.horizon
        stack = [(1.0, [start], [])]
        for _ in range(horizon):
            nxt = []
            for prob, states, actions in stack:
                s = states[-1]
                p = local_softmax(theta_mat, self.features(s))
                for a in range(self.n_actions):
                    for s2 in range(self.n_states):
                        q = prob * p[a] * self.transition[s, a, s2]
                        if q > 0.0:
                            nxt.append((q, states + [s2], actions + [a]))
            stack = nxt
        return stack

    def path_return(self, states, actions):
        return sum(self.reward[s, a] for s, a in zip(states, actions))

    def exact_value(self, theta_mat, start=0, horizon=None):
        return sum(
            prob * self.path_return(states, actions)
            for prob, states, actions in self.enumerate_paths(theta_mat, start, horizon)
        )

    def exact_gradient(self, theta_mat, start=0, horizon=None):
        """Product-rule gradient of the enumerated objective (test-local math)."""
        grad = np.zeros(theta_mat.size)
        for prob, states, actions in self.enumerate_paths(theta_mat, start, horizon):
            ret = self.path_return(states, actions)
            score = np.zeros(theta_mat.size)
            for s, a in zip(states, actions):
                score += local_logpi_grad(theta_mat, self.features(s), a)
            grad += prob * ret * score
        return grad

    def path_trajectory(self, states, actions) -> Trajectory:
        t = len(actions)
        obs = np.array([self.features(s) for s in states[:-1]])
        rewards = np.array([self.reward[s, a] for s, a in zip(states, actions)])
        return Trajectory(
            observations=obs,
            actions=np.array(actions, dtype=np.intp),
            rewards=rewards,
            speeds=np.zeros(t),
            mode_trace=np.zeros((t, 3)),
            t_term=t,
            n_out=0,
            n_slow=0,
            horizon=self.horizon,
        )

    def simulate(self, theta_mat, rng, start=0, horizon=None) -> Trajectory:
        horizon = horizon or self.horizon
        s = start
        states, actions = [s], []
        for _ in range(horizon):
            p = local_softmax(theta_mat, self.features(s))
            a = int(rng.choice(self.n_actions, p=p))
            actions.append(a)
            s = int(rng.choice(self.n_states, p=self.transition[states[-1], a]))
            states.append(s)
        return self.path_trajectory(states, actions)


@pytest.fixture
def enum_mdp():
    return EnumMDP()


@pytest.fixture
def enum_policy(enum_mdp):
    return LinearSoftmaxPolicy(enum_mdp.n_states, enum_mdp.n_actions)


@pytest.fixture
def docile_env_cfg():
    """Gentle LaneWorld setup for plumbing tests: little noise, wide lane."""
    return EnvConfig(
        horizon=40,
        delta_t=10,
        noise_scale=0.1,
        lane_half_width=6.0,
        lane_penalty=2.0,
    )
