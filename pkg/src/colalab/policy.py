"""Differentiable stochastic policies over the discrete action catalog.

Two families behind one interface: a linear-softmax policy (default; exact
closed-form gradients, KL and Fisher-vector products via the kernel backend)
and a single-hidden-layer softmax policy with manual backprop. Parameters are
always flat float64 vectors; every operation is a pure function of its inputs.
"""
from __future__ import annotations

import numpy as np

from colalab import _kernels as K


class LinearSoftmaxPolicy:
    """Softmax over per-action linear scores of the observation features."""

    family = "linear"

    def __init__(self, n_features: int, n_actions: int):
        self.n_features = n_features
        self.n_actions = n_actions

    @property
    def dim(self) -> int:
        return self.n_features * self.n_actions

    def init_params(self) -> np.ndarray:
        return np.zeros(self.dim)

    def _mat(self, theta):
        if theta.size != self.dim:
            raise ValueError(f"theta has size {theta.size}, expected {self.dim}")
        return np.ascontiguousarray(theta, dtype=np.float64).reshape(self.n_actions, self.n_features)

    def _check_obs(self, obs):
        obs = np.ascontiguousarray(obs, dtype=np.float64)
        if obs.shape[-1] != self.n_features:
            raise ValueError(f"observation dim {obs.shape[-1]} != {self.n_features}")
        return obs

    def action_distribution(self, theta, obs) -> np.ndarray:
        return K.probs(self._mat(theta), self._check_obs(obs))

    def sample_action(self, theta, obs, rng) -> int:
        return K.sample_action(self._mat(theta), self._check_obs(obs), rng.random())

    def log_prob_grad(self, theta, obs, action: int) -> np.ndarray:
        obs = self._check_obs(obs)
        return K.segment_gradient(
            self._mat(theta), obs[None, :], np.array([action], dtype=np.intp), np.ones(1)
        )

    def segment_gradient(self, theta, obs_batch, actions, weights) -> np.ndarray:
        """Sum over steps of weights[k] * grad log pi(actions[k] | obs[k])."""
        return K.segment_gradient(
            self._mat(theta),
            self._check_obs(obs_batch),
            np.ascontiguousarray(actions, dtype=np.intp),
            np.ascontiguousarray(weights, dtype=np.float64),
        )

    def kl_divergence(self, theta, theta_prime, obs) -> float:
        return K.kl_mean(self._mat(theta), self._mat(theta_prime), self._check_obs(obs)[None, :])

    def mean_kl(self, theta, theta_prime, obs_batch) -> float:
        return K.kl_mean(self._mat(theta), self._mat(theta_prime), self._check_obs(obs_batch))

    def fisher_vector_product(self, theta, obs_batch, v, damping: float = 0.0) -> np.ndarray:
        v = np.ascontiguousarray(v, dtype=np.float64)
        if v.size != self.dim:
            raise ValueError(f"vector has size {v.size}, expected {self.dim}")
        return K.fvp_batch(self._mat(theta), self._check_obs(obs_batch), v, damping)

    def surrogate(self, theta, theta_prime, obs_batch, actions, weights) -> float:
        """Sum of weights * importance ratio pi' / pi at the recorded actions."""
        return K.surrogate_sum(
            self._mat(theta),
            self._mat(theta_prime),
            self._check_obs(obs_batch),
            np.ascontiguousarray(actions, dtype=np.intp),
            np.ascontiguousarray(weights, dtype=np.float64),
        )

    def metadata(self) -> dict:
        return {
            "family": self.family,
            "n_features": self.n_features,
            "n_actions": self.n_actions,
        }


class MlpSoftmaxPolicy:
    """Softmax over scores from one tanh hidden layer; same call surface."""

    family = "mlp"

    def __init__(self, n_features: int, n_actions: int, n_hidden: int = 8):
        self.n_features = n_features
        self.n_actions = n_actions
        self.n_hidden = n_hidden

    @property
    def dim(self) -> int:
        h, f, a = self.n_hidden, self.n_features, self.n_actions
        return h * f + h + a * h + a

    def init_params(self, rng=None, scale: float = 0.1) -> np.ndarray:
        if rng is None:
            return np.zeros(self.dim)
        return rng.normal(0.0, scale, self.dim)

    def _unpack(self, theta):
        if theta.size != self.dim:
            raise ValueError(f"theta has size {theta.size}, expected {self.dim}")
        h, f, a = self.n_hidden, self.n_features, self.n_actions
        i = 0
        w1 = theta[i : i + h * f].reshape(h, f); i += h * f
        b1 = theta[i : i + h]; i += h
        w2 = theta[i : i + a * h].reshape(a, h); i += a * h
        b2 = theta[i : i + a]
        return w1, b1, w2, b2

    def _forward(self, theta, obs):
        w1, b1, w2, b2 = self._unpack(theta)
        hidden = np.tanh(w1 @ obs + b1)
        logits = w2 @ hidden + b2
        logits -= logits.max()
        e = np.exp(logits)
        return e / e.sum(), hidden, (w1, b1, w2, b2)

    def action_distribution(self, theta, obs) -> np.ndarray:
        obs = self._check_obs(obs)
        return self._forward(theta, obs)[0]

    def _check_obs(self, obs):
        obs = np.asarray(obs, dtype=np.float64)
        if obs.shape[-1] != self.n_features:
            raise ValueError(f"observation dim {obs.shape[-1]} != {self.n_features}")
        return obs

    def sample_action(self, theta, obs, rng) -> int:
        p = self.action_distribution(theta, obs)
        c = np.cumsum(p)
        return int(np.searchsorted(c, rng.random() * c[-1], side="right").clip(0, p.size - 1))

    def _backprop(self, dlogits, hidden, obs, w2):
        dw2 = np.outer(dlogits, hidden)
        db2 = dlogits
        dhpre = (w2.T @ dlogits) * (1.0 - hidden * hidden)
        dw1 = np.outer(dhpre, obs)
        db1 = dhpre
        return np.concatenate([dw1.ravel(), db1, dw2.ravel(), db2])

    def log_prob_grad(self, theta, obs, action: int) -> np.ndarray:
        obs = self._check_obs(obs)
        p, hidden, (w1, b1, w2, b2) = self._forward(theta, obs)
        dlogits = -p
        dlogits[action] += 1.0
        return self._backprop(dlogits, hidden, obs, w2)

    def segment_gradient(self, theta, obs_batch, actions, weights) -> np.ndarray:
        out = np.zeros(self.dim)
        for obs, a, w in zip(self._check_obs(obs_batch), actions, weights):
            out += w * self.log_prob_grad(theta, obs, int(a))
        return out

    def kl_divergence(self, theta, theta_prime, obs) -> float:
        obs = self._check_obs(obs)
        p = self.action_distribution(theta, obs)
        q = self.action_distribution(theta_prime, obs)
        return float(np.sum(p * (np.log(p) - np.log(q))))

    def mean_kl(self, theta, theta_prime, obs_batch) -> float:
        obs_batch = np.atleast_2d(self._check_obs(obs_batch))
        return float(np.mean([self.kl_divergence(theta, theta_prime, o) for o in obs_batch]))

    def fisher_vector_product(self, theta, obs_batch, v, damping: float = 0.0) -> np.ndarray:
        """Exact Fisher (sum over the catalog of pi_a g_a g_a^T) applied to v."""
        v = np.asarray(v, dtype=np.float64)
        if v.size != self.dim:
            raise ValueError(f"vector has size {v.size}, expected {self.dim}")
        obs_batch = np.atleast_2d(self._check_obs(obs_batch))
        out = np.zeros(self.dim)
        for obs in obs_batch:
            p, hidden, (w1, b1, w2, b2) = self._forward(theta, obs)
            for a in range(self.n_actions):
                dlogits = -p.copy()
                dlogits[a] += 1.0
                g = self._backprop(dlogits, hidden, obs, w2)
                out += p[a] * (g @ v) * g
        return out / len(obs_batch) + damping * v

    def surrogate(self, theta, theta_prime, obs_batch, actions, weights) -> float:
        total = 0.0
        for obs, a, w in zip(self._check_obs(obs_batch), actions, weights):
            p = self.action_distribution(theta, obs)[int(a)]
            q = self.action_distribution(theta_prime, obs)[int(a)]
            total += w * q / p
        return float(total)

    def metadata(self) -> dict:
        return {
            "family": self.family,
            "n_features": self.n_features,
            "n_actions": self.n_actions,
            "n_hidden": self.n_hidden,
        }


def make_policy(meta: dict):
    """Rebuild a policy object from its serialized metadata."""
    if meta["family"] == "linear":
        return LinearSoftmaxPolicy(meta["n_features"], meta["n_actions"])
    if meta["family"] == "mlp":
        return MlpSoftmaxPolicy(meta["n_features"], meta["n_actions"], meta["n_hidden"])
    raise ValueError(f"unknown policy family {meta['family']!r}")
