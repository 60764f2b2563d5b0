"""Compare the compiled and numpy mode-synthesis kernels.

    python benchmarks/bench_kernels.py [--n-max 5] [--repeat 3]

Prints per-backend wall times for values only and for values + Jacobians on
the default solver quadrature, plus the largest difference between them.
"""
import argparse
import time

import numpy as np

from cavityshape import ballmodes, kernels, solver
from cavityshape.geomquad import build_ball_quadrature


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n-max", type=int, default=5)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    quad = build_ball_quadrature(1.0, solver.DEFAULT_QUAD)
    modes = solver.basis_for(solver.SolverConfig(n_max=args.n_max)).modes
    print(f"active backend: {kernels.BACKEND}; {len(modes)} modes x {quad.size} nodes")
    if kernels.BACKEND != "cython":
        print("compiled kernel unavailable; timing the numpy kernel only")
    for jac in (False, True):
        tp, ref = best_of(lambda: ballmodes.mode_arrays(modes, quad.nodes, jac, synth=kernels.python_synthesize),
                          args.repeat)
        line = f"jacobian={jac!s:<5}  numpy {tp:7.3f} s"
        if kernels.BACKEND == "cython":
            tc, out = best_of(lambda: ballmodes.mode_arrays(modes, quad.nodes, jac, synth=kernels.synthesize),
                              args.repeat)
            diff = max(float(np.max(np.abs(a - b))) for a, b in zip(out, ref) if a is not None)
            line += f"  cython {tc:7.3f} s  speedup {tp / tc:5.2f}x  max diff {diff:.1e}"
        print(line)


if __name__ == "__main__":
    main()
