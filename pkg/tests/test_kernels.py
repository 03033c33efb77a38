"""Parity between the compiled kernel backend and the numpy reference."""
import numpy as np
import pytest

from colalab._kernels import _ref

try:
    from colalab._kernels import _fast
except ImportError:
    _fast = None

needs_fast = pytest.mark.skipif(_fast is None, reason="compiled kernels not built")


def cases(seed):
    rng = np.random.default_rng(seed)
    n_actions, n_features, n = 9, 5, 64
    theta = np.ascontiguousarray(rng.normal(0, 0.7, (n_actions, n_features)))
    theta2 = np.ascontiguousarray(theta + 0.05 * rng.normal(size=theta.shape))
    feats = np.ascontiguousarray(rng.normal(size=(n, n_features)))
    actions = rng.integers(0, n_actions, n).astype(np.intp)
    weights = rng.normal(size=n)
    v = rng.normal(size=n_actions * n_features)
    return theta, theta2, feats, actions, weights, v


@needs_fast
@pytest.mark.parametrize("seed", range(5))
def test_probs_match(seed):
    theta, _, feats, _, _, _ = cases(seed)
    assert np.allclose(_ref.probs(theta, feats[0]), _fast.probs(theta, feats[0]), atol=1e-14)
    assert np.allclose(_ref.probs_batch(theta, feats), _fast.probs_batch(theta, feats), atol=1e-14)


@needs_fast
@pytest.mark.parametrize("seed", range(5))
def test_segment_gradient_match(seed):
    theta, _, feats, actions, weights, _ = cases(seed)
    a = _ref.segment_gradient(theta, feats, actions, weights)
    b = _fast.segment_gradient(theta, feats, actions, weights)
    assert np.allclose(a, b, atol=1e-12)


@needs_fast
@pytest.mark.parametrize("seed", range(5))
def test_fvp_match(seed):
    theta, _, feats, _, _, v = cases(seed)
    for damping in (0.0, 1e-4):
        a = _ref.fvp_batch(theta, feats, v, damping)
        b = _fast.fvp_batch(theta, feats, v, damping)
        assert np.allclose(a, b, atol=1e-13)


@needs_fast
@pytest.mark.parametrize("seed", range(5))
def test_kl_and_surrogate_match(seed):
    theta, theta2, feats, actions, weights, _ = cases(seed)
    assert _ref.kl_mean(theta, theta2, feats) == pytest.approx(
        _fast.kl_mean(theta, theta2, feats), abs=1e-13
    )
    assert _ref.surrogate_sum(theta, theta2, feats, actions, weights) == pytest.approx(
        _fast.surrogate_sum(theta, theta2, feats, actions, weights), rel=1e-12
    )


@needs_fast
def test_sample_action_agrees_on_grid():
    theta, _, feats, _, _, _ = cases(11)
    for u in np.linspace(0.001, 0.999, 97):
        assert _ref.sample_action(theta, feats[0], float(u)) == _fast.sample_action(
            theta, feats[0], float(u)
        )


def test_selected_backend_exports_surface():
    from colalab import _kernels

    for name in ("probs", "probs_batch", "sample_action", "segment_gradient",
                 "fvp_batch", "kl_mean", "surrogate_sum"):
        assert callable(getattr(_kernels, name))
    assert _kernels.BACKEND in ("python", "cython")
