"""Kernel backend selection.

The compiled extension is preferred when present; the numpy reference
implementation is the fallback. COLALAB_KERNELS=python|cython forces a
backend (cython raises if the extension is missing).
"""
import os

_forced = os.environ.get("COLALAB_KERNELS", "").lower()

if _forced == "python":
    from colalab._kernels import _ref as _impl
elif _forced == "cython":
    from colalab._kernels import _fast as _impl
else:
    try:
        from colalab._kernels import _fast as _impl
    except ImportError:
        from colalab._kernels import _ref as _impl

BACKEND = _impl.BACKEND
probs = _impl.probs
probs_batch = _impl.probs_batch
sample_action = _impl.sample_action
segment_gradient = _impl.segment_gradient
fvp_batch = _impl.fvp_batch
kl_mean = _impl.kl_mean
surrogate_sum = _impl.surrogate_sum
