"""Benchmark the compiled kernels against the numpy reference backend.

Runs the hot per-step operations at the sizes the online adaptation loop
uses (policy of 9 actions x 5 features, windows of M*K = 80-160 steps) plus a
full adaptation-solve composite. Usage: python benchmarks/bench_kernels.py
"""
import time

import numpy as np

from colalab._kernels import _ref

try:
    from colalab._kernels import _fast
except ImportError:
    _fast = None


def timeit(fn, repeat=2000):
    fn()  # warm up
    best = float("inf")
    for _ in range(3):
        start = time.perf_counter()
        for _ in range(repeat):
            fn()
        best = min(best, (time.perf_counter() - start) / repeat)
    return best


def bench_backend(mod, n_window):
    rng = np.random.default_rng(0)
    n_actions, n_features = 9, 5
    theta = np.ascontiguousarray(rng.normal(0, 0.6, (n_actions, n_features)))
    theta2 = np.ascontiguousarray(theta + 0.02 * rng.normal(size=theta.shape))
    feats = np.ascontiguousarray(rng.normal(size=(n_window, n_features)))
    actions = rng.integers(0, n_actions, n_window).astype(np.intp)
    weights = rng.normal(size=n_window)
    v = rng.normal(size=n_actions * n_features)
    feat1 = feats[0].copy()
    return {
        "probs(1 obs)": timeit(lambda: mod.probs(theta, feat1)),
        "sample_action": timeit(lambda: mod.sample_action(theta, feat1, 0.37)),
        f"segment_gradient({n_window})": timeit(lambda: mod.segment_gradient(theta, feats, actions, weights)),
        f"fvp_batch({n_window})": timeit(lambda: mod.fvp_batch(theta, feats, v, 1e-2)),
        f"kl_mean({n_window})": timeit(lambda: mod.kl_mean(theta, theta2, feats)),
        f"surrogate_sum({n_window})": timeit(lambda: mod.surrogate_sum(theta, theta2, feats, actions, weights)),
    }


def bench_solve(backend_env):
    """Composite: one trust-region adaptation solve on a synthetic window."""
    import importlib
    import os
    import subprocess
    import sys

    code = (
        "import time, numpy as np\n"
        "from colalab.policy import LinearSoftmaxPolicy\n"
        "from colalab.cola import WindowData, solve_adaptation, TrustRegionConfig\n"
        "rng = np.random.default_rng(0)\n"
        "policy = LinearSoftmaxPolicy(5, 9)\n"
        "theta = rng.normal(0, 0.5, policy.dim)\n"
        "data = WindowData(obs=rng.normal(size=(160, 5)), actions=rng.integers(0, 9, 160).astype(np.intp),\n"
        "                  rtg=rng.normal(size=160) * 20, n_segments=16)\n"
        "cfg = TrustRegionConfig(delta=0.005, damping=0.01)\n"
        "solve_adaptation(policy, theta, [(1.0, data)], cfg)\n"
        "start = time.perf_counter()\n"
        "for _ in range(300):\n"
        "    solve_adaptation(policy, theta, [(1.0, data)], cfg)\n"
        "print((time.perf_counter() - start) / 300)\n"
    )
    env = dict(os.environ, COLALAB_KERNELS=backend_env)
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env)
    return float(out.stdout.strip())


def main():
    print(f"numpy reference backend: always available")
    if _fast is None:
        print("compiled backend: NOT BUILT (pip install -e . or python setup.py build_ext --inplace)")
    for n_window in (80, 160):
        ref = bench_backend(_ref, n_window)
        fast = bench_backend(_fast, n_window) if _fast is not None else None
        print(f"\nwindow size {n_window}:")
        print(f"{'kernel':<24}{'python':>12}{'cython':>12}{'speedup':>9}")
        for name, t_ref in ref.items():
            if fast:
                t_fast = fast[name]
                print(f"{name:<24}{t_ref*1e6:>10.1f}us{t_fast*1e6:>10.1f}us{t_ref/t_fast:>8.1f}x")
            else:
                print(f"{name:<24}{t_ref*1e6:>10.1f}us{'-':>12}{'-':>9}")
    if _fast is not None:
        t_py = bench_solve("python")
        t_cy = bench_solve("cython")
        print(f"\n{'full adaptation solve':<24}{t_py*1e6:>10.1f}us{t_cy*1e6:>10.1f}us{t_py/t_cy:>8.1f}x")


if __name__ == "__main__":
    main()
