"""Time the compiled kernels against the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N] [--json PATH]

Both backends get identical inputs; the script also checks that their
outputs agree before reporting timings.
"""
import argparse
import json
import sys
import timeit

import numpy as np

from robust_halfspace import _kernels_py

try:
    from robust_halfspace import _kernels as compiled
except ImportError:
    compiled = None

DYKSTRA_TOL = 1e-12


def cases(rng):
    d = 20
    u = np.eye(d)[0]
    X = rng.standard_normal((2000, d))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    y = np.where(X[:, 0] >= 0, 1.0, -1.0)
    y[rng.random(2000) < 0.05] *= -1
    p = np.full(2000, 1 / 2000)
    w = u + 0.1 * rng.standard_normal(d)
    Z = 2 * rng.standard_normal((200, d))
    A = X.T @ X / len(X)
    starts = np.array([_kernels_py.project_two_balls(u + 0.3 * rng.standard_normal(d), u, 0.5)
                       for _ in range(12)])
    step = 1 / np.linalg.eigvalsh(A)[-1]

    def projection(k):
        return lambda: [k.project_two_balls(z, u, 0.5) for z in Z]

    return {
        "project_two_balls x200": projection,
        "hinge_objective_grad n=2000": lambda k: lambda: k.hinge_objective_grad(X, y, p, 0.05, w),
        "hinge_descent 2000 steps": lambda k: lambda: k.hinge_descent(
            X, y, p, 0.05, u, 0.5, u, 0.05, 2000, 1e-9),
        "quad_ascent 12 starts": lambda k: lambda: k.quad_ascent(
            A, u, 0.5, starts, 200, step, DYKSTRA_TOL),
    }


def agree(a, b):
    if isinstance(a, (tuple, list)):
        return len(a) == len(b) and all(agree(x, z) for x, z in zip(a, b))
    return bool(np.allclose(a, b, rtol=1e-7, atol=1e-9))


def best_time(fn, repeat):
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", metavar="PATH")
    args = ap.parse_args(argv)
    if compiled is None:
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
        return 1
    rng = np.random.default_rng(0)
    rows = []
    print(f"{'kernel':<30}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, make in cases(rng).items():
        a, b = make(_kernels_py)(), make(compiled)()
        ok = agree(a, b)
        tp = best_time(make(_kernels_py), args.repeat)
        tc = best_time(make(compiled), args.repeat)
        rows.append({"kernel": name, "python_s": tp, "cython_s": tc, "speedup": tp / tc,
                     "outputs_agree": ok})
        flag = "" if ok else "  (outputs differ)"
        print(f"{name:<30}{tp * 1e3:>12.3f}{tc * 1e3:>12.3f}{tp / tc:>9.1f}x{flag}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
