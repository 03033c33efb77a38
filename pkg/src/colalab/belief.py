"""Mode inference: distance-based labeling, a logistic likelihood model over
observation features, the recursive Bayes filter, and the transient/episodic
accuracy metrics used by the filter ablation."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from colalab.env import Mode


def true_label(z_img: Mode, z_r: Mode, z_c: Mode) -> int:
    """1 (rainy) when strictly closer to the rainy anchor, else 0 (cloudy)."""
    return 1 if z_img.distance(z_r) < z_img.distance(z_c) else 0


def labels_for_modes(mode_trace: np.ndarray, z_r: Mode, z_c: Mode) -> np.ndarray:
    """Vectorized true labels for a (T, 3) trace of mode parameter vectors."""
    d_r = np.linalg.norm(mode_trace - z_r.as_array(), axis=1)
    d_c = np.linalg.norm(mode_trace - z_c.as_array(), axis=1)
    return (d_r < d_c).astype(int)


def mode_margin(mode: Mode, z_r: Mode, z_c: Mode) -> float:
    """Signed separation, positive toward rainy, normalized by anchor distance."""
    return (mode.distance(z_c) - mode.distance(z_r)) / z_r.distance(z_c)


@dataclass
class LikelihoodModel:
    """Binary logistic discriminator; outputs (cloudy, rainy) probabilities."""

    weights: np.ndarray  # (n_features + 1,), intercept last
    holdout_accuracy: float = float("nan")

    def rainy_prob(self, obs) -> float:
        obs = np.asarray(obs, dtype=float)
        z = float(obs @ self.weights[:-1] + self.weights[-1])
        return 1.0 / (1.0 + np.exp(-z))

    def outputs(self, obs) -> np.ndarray:
        p = self.rainy_prob(obs)
        return np.array([1.0 - p, p])


def train_likelihood(labeled_samples, l2: float = 1e-4, max_iters: int = 50,
                     holdout_every: int = 5) -> LikelihoodModel:
    """Newton fit of the logistic model on mean cross-entropy with L2; the
    optimizer is deterministic and invariant to dataset duplication. Every
    holdout_every-th sample is held out for the reported accuracy."""
    if isinstance(labeled_samples, tuple):
        features, labels = labeled_samples
        features = np.asarray(features, dtype=float)
        labels = np.asarray(labels, dtype=int)
    else:
        features = np.array([np.asarray(o, dtype=float) for o, _ in labeled_samples])
        labels = np.array([int(lab) for _, lab in labeled_samples])
    if len(np.unique(labels)) < 2:
        raise ValueError("training data contains a single class")

    idx = np.arange(len(labels))
    hold = idx % holdout_every == 0
    x_tr = np.hstack([features[~hold], np.ones((np.sum(~hold), 1))])
    y_tr = labels[~hold].astype(float)
    if len(np.unique(y_tr)) < 2:  # tiny datasets: train on everything
        x_tr = np.hstack([features, np.ones((len(labels), 1))])
        y_tr = labels.astype(float)
        hold = np.zeros(len(labels), dtype=bool)

    w = np.zeros(x_tr.shape[1])
    n = x_tr.shape[0]
    for _ in range(max_iters):
        mu = 1.0 / (1.0 + np.exp(-(x_tr @ w)))
        grad = x_tr.T @ (mu - y_tr) / n + l2 * w
        r = np.clip(mu * (1.0 - mu), 1e-10, None)
        hess = (x_tr * r[:, None]).T @ x_tr / n + l2 * np.eye(x_tr.shape[1])
        step = np.linalg.solve(hess, grad)
        w = w - step
        if np.max(np.abs(step)) < 1e-10:
            break

    model = LikelihoodModel(weights=w)
    if hold.any():
        preds = np.array([model.rainy_prob(f) >= 0.5 for f in features[hold]]).astype(int)
        model.holdout_accuracy = float(np.mean(preds == labels[hold]))
    else:
        model.holdout_accuracy = float("nan")
    return model


def uniform_belief(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def apply_likelihood_floor(f_out: np.ndarray, floor: float) -> np.ndarray:
    """Floors likelihood entries; floor=0 restores the raw update."""
    return np.maximum(np.asarray(f_out, dtype=float), floor)


def bayes_update(b_prev: np.ndarray, f_out: np.ndarray) -> np.ndarray:
    """Posterior over anchor modes: prior times likelihood, renormalized.

    A zero normalizer keeps the previous belief and warns.
    """
    b_prev = np.asarray(b_prev, dtype=float)
    unnorm = b_prev * np.asarray(f_out, dtype=float)
    total = unnorm.sum()
    if total <= 0.0:
        warnings.warn("bayes_update: zero normalizer, keeping previous belief")
        return b_prev.copy()
    return unnorm / total


def belief_label(belief: np.ndarray) -> int:
    """Class with the larger probability; ties resolve to label 0."""
    return int(np.argmax(belief))


@dataclass
class AccuracyRecord:
    """Per-episode predicted and true label sequences."""

    predicted: np.ndarray
    truth: np.ndarray

    def __post_init__(self):
        self.predicted = np.asarray(self.predicted, dtype=int)
        self.truth = np.asarray(self.truth, dtype=int)
        if self.predicted.shape != self.truth.shape:
            raise ValueError("predicted/truth length mismatch")


def transient_accuracy(records: list[AccuracyRecord], t: int) -> float:
    """Fraction of episodes whose prediction at step t is correct."""
    if any(len(r.predicted) <= t for r in records):
        raise ValueError(f"some episodes do not contain step {t}")
    hits = [r.predicted[t] == r.truth[t] for r in records]
    return float(np.mean(hits))


def episodic_accuracy(records: list[AccuracyRecord]) -> float:
    """Mean per-step correctness over all episodes and steps."""
    correct = sum(int(np.sum(r.predicted == r.truth)) for r in records)
    total = sum(len(r.predicted) for r in records)
    return correct / total


@dataclass
class SyntheticClassifier:
    """Stand-in classifier with controlled accuracy for ablation studies.

    Predicts the true label with probability `accuracy` (i.i.d. per step) and
    reports a confidence that scales with the mode's distance margin, so the
    output is uninformative exactly where the label boundary sits.
    """

    z_r: Mode
    z_c: Mode
    accuracy: float = 0.85
    gain: float = 4.0
    confidence_cap: float = 0.95

    def outputs(self, mode: Mode, rng) -> np.ndarray:
        margin = mode_margin(mode, self.z_r, self.z_c)
        truth = true_label(mode, self.z_r, self.z_c)
        predicted = truth if rng.random() < self.accuracy else 1 - truth
        conf = 0.5 + (self.confidence_cap - 0.5) * abs(np.tanh(self.gain * margin))
        f = np.empty(2)
        f[predicted] = conf
        f[1 - predicted] = 1.0 - conf
        return f
