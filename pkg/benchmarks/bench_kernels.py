"""Compiled vs numpy transport kernels on one (macrocell, velocity) stencil.

    python3 benchmarks/bench_kernels.py [--degree 3] [--sub 8] [--repeat 50]

Prints time per call of the volume residual and the block solve for every
available backend and checks that both backends agree.
"""
import argparse
import time

import numpy as np

from kindg import kernels
from kindg.mesh import build_box_macromesh
from kindg.transport import build_stencil


def _time(fn, repeat):
    fn()
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def main(argv=None):
    p = argparse.ArgumentParser()
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--sub", type=int, default=8)
    p.add_argument("--repeat", type=int, default=50)
    args = p.parse_args(argv)

    mesh = build_box_macromesh([0.0, 0.0], [1.0, 1.0], [1, 1], [args.sub, args.sub], args.degree)
    st = build_stencil(mesh, 0, np.array([1.0, 1.0]))
    rng = np.random.default_rng(0)
    F = rng.standard_normal((mesh.n_sub, mesh.ref.n_nodes))
    print(f"subcells={mesh.n_sub} nodes/subcell={mesh.ref.n_nodes}  backends={kernels.available_backends()}")
    print("backend,kernel,seconds_per_call")
    out = {}
    for name in kernels.available_backends():
        k = kernels.get_backend(name)
        R = np.empty_like(F)
        X = np.empty_like(F)
        t_res = _time(lambda: k.volume_residual(st, F, 0.01, R), args.repeat)
        t_fac = _time(lambda: k.block_solve(st, R, 0.01, X, None), args.repeat)
        cache = {}
        k.block_solve(st, R, 0.01, X, cache)
        t_cached = _time(lambda: k.block_solve(st, R, 0.01, X, cache), args.repeat)
        out[name] = (R.copy(), X.copy())
        for kern, t in (("volume_residual", t_res), ("block_solve", t_fac), ("block_solve_cached", t_cached)):
            print(f"{name},{kern},{t:.3e}")
    if len(out) == 2:
        (r1, x1), (r2, x2) = out.values()
        print(f"max |residual diff| = {np.max(np.abs(r1 - r2)):.2e}, max |solve diff| = {np.max(np.abs(x1 - x2)):.2e}")


if __name__ == "__main__":
    main()
