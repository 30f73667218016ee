"""Time the numba kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--paths 512] [--n 32] [--steps 1000] [--repeat 3]

The backend is switched through ``RDLAB_BACKEND`` exactly as a user would.
Compilation happens once before timing.  Both backends must agree to
round-off or the script exits nonzero.
"""
import argparse
import os
import sys
import time

import numpy as np

from rdlab.kernels import causal_conv, mild_paths
from rdlab.models import reaction_diffusion_model, sine_state
from rdlab.simulate import sample_increments


def best_of(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def run(backend, args, inputs):
    os.environ["RDLAB_BACKEND"] = backend
    P, coeffs, spatial, shape, U0, dW, W, C = inputs
    step = lambda: mild_paths(P, coeffs, spatial, shape, U0, dW, 1e-3, np.inf, stride=10)  # noqa: E731
    conv = lambda: causal_conv(W, C)  # noqa: E731
    step()
    conv()  # compile / warm caches
    t_step, s = best_of(step, args.repeat)
    t_conv, c = best_of(conv, args.repeat)
    return t_step, t_conv, s[0], c


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=512)
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--steps", type=int, default=1000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    model = reaction_diffusion_model(n=args.n)
    P = model.semigroup_matrix(1e-3)
    dW = np.stack([sample_increments(1, p, args.steps, model.K, 1e-3).dW for p in range(args.paths)])
    U0 = np.broadcast_to(sine_state(model.grid), (args.paths, args.n)).copy()
    rng = np.random.default_rng(0)
    W = rng.random((args.steps + 1, args.n))
    C = rng.standard_normal((args.steps + 1, args.n))
    inputs = (P, model.F.coeffs, model.G.spatial_nodes, model.G.shape, U0, dW, W, C)

    res = {b: run(b, args, inputs) for b in ("numba", "numpy")}
    print(f"paths={args.paths} n={args.n} steps={args.steps}")
    print(f"{'kernel':<14}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for i, name in enumerate(("mild_paths", "causal_conv")):
        a, b = res["numba"][i], res["numpy"][i]
        print(f"{name:<14}{a:>12.4f}{b:>12.4f}{b / a:>10.1f}")
    gap_s = np.abs(res["numba"][2] - res["numpy"][2]).max()
    gap_c = np.abs(res["numba"][3] - res["numpy"][3]).max()
    print(f"max |numba - numpy|: states {gap_s:.2e}, convolution {gap_c:.2e}")
    return 0 if gap_s < 1e-9 and gap_c < 1e-9 else 1


if __name__ == "__main__":
    sys.exit(main())
