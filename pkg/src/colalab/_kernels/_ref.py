"""Pure-numpy reference kernels for the linear-softmax policy family.

Same call surface as the compiled module `_fast`; whichever imports cleanly
is selected in `colalab._kernels.__init__`.
"""
import numpy as np

BACKEND = "python"


def probs(theta2d, feat):
    """Action probabilities for a single feature vector. theta2d is (A, F)."""
    logits = theta2d @ feat
    logits -= logits.max()
    e = np.exp(logits)
    return e / e.sum()


def probs_batch(theta2d, feats):
    """Row-wise action probabilities for a (N, F) feature matrix."""
    logits = feats @ theta2d.T
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def sample_action(theta2d, feat, u):
    """Inverse-CDF draw from the softmax given a uniform u in [0, 1)."""
    p = probs(theta2d, feat)
    c = np.cumsum(p)
    return int(np.searchsorted(c, u * c[-1], side="right").clip(0, p.size - 1))


def segment_gradient(theta2d, feats, actions, weights):
    """Sum over steps k of weights[k] * grad log pi(actions[k] | feats[k]).

    Returns the flat (A*F,) gradient. For linear-softmax the per-step
    gradient is (onehot(a) - pi) outer feat.
    """
    p = probs_batch(theta2d, feats)
    coef = -p * weights[:, None]
    np.add.at(coef, (np.arange(len(actions)), actions), weights)
    return (coef.T @ feats).ravel()


def fvp_batch(theta2d, feats, v, damping):
    """Averaged Fisher-vector product over a batch of observations.

    The Fisher block per observation is (diag(pi) - pi pi^T) kron (feat feat^T);
    applied matrix-free. A damping*v term is added.
    """
    n_actions, n_features = theta2d.shape
    vmat = v.reshape(n_actions, n_features)
    p = probs_batch(theta2d, feats)
    u = feats @ vmat.T
    pu = p * u
    w = pu - p * pu.sum(axis=1, keepdims=True)
    out = (w.T @ feats) / feats.shape[0]
    return out.ravel() + damping * v


def kl_mean(theta_p, theta_q, feats):
    """Mean over the batch of KL(pi_p(.|s) || pi_q(.|s))."""
    lp = feats @ theta_p.T
    lq = feats @ theta_q.T
    lp -= _logsumexp(lp)
    lq -= _logsumexp(lq)
    p = np.exp(lp)
    return float(np.mean(np.sum(p * (lp - lq), axis=1)))


def surrogate_sum(theta_p, theta_q, feats, actions, weights):
    """Sum over steps of weights[k] * pi_q(a_k|s_k) / pi_p(a_k|s_k)."""
    lp = feats @ theta_p.T
    lq = feats @ theta_q.T
    lp -= _logsumexp(lp)
    lq -= _logsumexp(lq)
    idx = np.arange(len(actions))
    ratio = np.exp(lq[idx, actions] - lp[idx, actions])
    return float(np.sum(weights * ratio))


def _logsumexp(logits):
    m = logits.max(axis=1, keepdims=True)
    return m + np.log(np.sum(np.exp(logits - m), axis=1, keepdims=True))
