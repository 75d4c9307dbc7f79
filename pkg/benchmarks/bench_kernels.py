"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--sizes 128 256 512] [--repeat 5] [--threads 1]

Prints one row per (kernel, size) with the best-of-``repeat`` time of each
backend, the speedup, and whether the two outputs agree bitwise.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from acvlab import grid as gc
from acvlab import kernels


def _cases(n: int, rng: np.random.Generator):
    g = gc.GridSpec.box((0.0, 0.0), (1.0, 1.0), n)
    u = rng.standard_normal(g.node_shape)
    rho = -2.0 * sum(m * m for m in g.mesh())
    p = gc.pad_ghosts(g, u)
    pe = gc.pad_ghosts(g, np.exp(rho), reflect_dirichlet=True)
    shape3 = g.node_shape + (1,)
    inv_h2 = gc._inv(g, 2)
    inv_2h = gc._inv(g, 1, 2.0)
    flat = np.ascontiguousarray(u.ravel())
    f = gc.ScalarField(g, u)

    def stencil(name, *args, out_shape=shape3):
        def run(mod, nt):
            out = np.empty(out_shape)
            getattr(mod, name)(*args, out, nt)
            return out

        return run

    return {
        "laplacian": stencil("laplacian", p, inv_h2),
        "grad_sq": stencil("grad_sq", p, inv_h2),
        "weighted_div": stencil("weighted_div", p, pe, inv_h2),
        "gradient": stencil("gradient", p, inv_2h, out_shape=(3,) + shape3),
        "tree_sum": lambda mod, nt: np.float64(mod.tree_sum(flat)),
        "ball_integral": lambda mod, nt: _ball(mod, nt, f),
    }


def _ball(mod, nt, f):
    with kernels.use_backend("cython" if mod is kernels.get_backend("cython") else "python"), kernels.use_threads(nt):
        return np.float64(gc.ball_integral(f, (0.5, 0.5), 0.3))


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--sizes", type=int, nargs="+", default=[128, 256, 512])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)
    if not kernels.compiled_available():
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
    cy, py = kernels.get_backend("cython"), kernels.get_backend("python")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<14}{'n':>6}{'cython [ms]':>14}{'python [ms]':>14}{'speedup':>10}  bitwise")
    for n in args.sizes:
        for name, fn in _cases(n, rng).items():
            t_cy = min(timeit.repeat(lambda: fn(cy, args.threads), number=1, repeat=args.repeat))
            t_py = min(timeit.repeat(lambda: fn(py, 1), number=1, repeat=args.repeat))
            same = np.array_equal(fn(cy, args.threads), fn(py, 1))
            print(f"{name:<14}{n:>6}{1e3 * t_cy:>14.3f}{1e3 * t_py:>14.3f}{t_py / t_cy:>10.1f}  {'yes' if same else 'NO'}")


if __name__ == "__main__":
    main()
