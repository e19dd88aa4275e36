"""Benchmark the compiled kernel core against the numpy fallback.

Run:  python benchmarks/bench_kernels.py [--repeat N]

Times the hot kernels on representative assembly workloads and, when the
compiled module is available, a full mixed-system assembly plus one Newton
solve with each backend (the backend is chosen at import time via
HPFEM_PURE_PYTHON, so the end-to-end comparison re-executes itself in a
subprocess).
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np


def time_fn(fn, *args, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(repeat):
    from hpfem._kernels import _fallback

    try:
        from hpfem._kernels import _core
    except ImportError:
        print("compiled kernels unavailable; showing fallback timings only")
        _core = None

    rng = np.random.default_rng(0)
    t = np.ascontiguousarray(rng.uniform(-1, 1, 20000))
    nq, nb, d = 36, 36, 2
    dphi = np.ascontiguousarray(rng.standard_normal((nq, nb, d)))
    w = np.ascontiguousarray(rng.uniform(0.5, 1.0, nq))
    phi = np.ascontiguousarray(rng.standard_normal((nq, nb)))
    phiq = np.ascontiguousarray(rng.standard_normal((nq, 25)))
    S = np.ascontiguousarray(rng.standard_normal((2, d, d)))
    N, L = 20000, 2
    P = np.ascontiguousarray(rng.standard_normal((N, L)))
    LAM = np.ascontiguousarray(rng.standard_normal((N, L)))
    SIG = np.ascontiguousarray(rng.uniform(0.5, 1.0, N))

    cases = [
        ("legendre_table(20k pts, j<=12)", lambda m: m.legendre_table(t, 12)),
        ("shape_table(20k pts, j<=12)", lambda m: m.shape_table(t, 12)),
        ("scalar_stiffness(36q,36b)", lambda m: m.scalar_stiffness(dphi, w)),
        ("elastic_stiffness(36q,36b)",
         lambda m: m.elastic_stiffness(dphi, w, 1.0, 1.0)),
        ("mass_matrix(36q,36b)", lambda m: m.mass_matrix(phi, w)),
        ("coupling_block(36q,36b,25m)",
         lambda m: m.coupling_block(dphi, w, phiq, S)),
        ("chi_blocks(20k dofs)", lambda m: m.chi_blocks(P, LAM, SIG, 1.0, True)),
    ]
    print(f"{'kernel':<34} {'fallback':>12} {'compiled':>12} {'speedup':>9}")
    for name, call in cases:
        tf = time_fn(lambda: call(_fallback), repeat=repeat)
        if _core is not None:
            tc = time_fn(lambda: call(_core), repeat=repeat)
            print(f"{name:<34} {tf * 1e3:>10.3f}ms {tc * 1e3:>10.3f}ms "
                  f"{tf / tc:>8.2f}x")
        else:
            print(f"{name:<34} {tf * 1e3:>10.3f}ms {'-':>12} {'-':>9}")


def bench_end_to_end():
    import warnings

    warnings.filterwarnings("ignore")
    from hpfem import IS_COMPILED
    from hpfem.assembly import assemble_system
    from hpfem.plasticity import NewtonConfig, default_rho, solve_semismooth_newton
    from hpfem.problems import plastic_square
    from hpfem.space import GaussPointSpace, ScalarSpace

    mesh, mat, loads = plastic_square(n=16, degree=2)
    space = ScalarSpace(mesh)
    qs = GaussPointSpace(mesh, mat.yield_stress)
    t0 = time.perf_counter()
    system = assemble_system(space, qs, mat, loads)
    t1 = time.perf_counter()
    sol = solve_semismooth_newton(system, qs, NewtonConfig(rho=default_rho(mat)))
    t2 = time.perf_counter()
    tag = "compiled" if IS_COMPILED else "fallback"
    print(f"[{tag:>8}] assembly {t1 - t0:.3f}s, newton ({sol.iterations} its) "
          f"{t2 - t1:.3f}s, dofs {system.K.shape[0] + 2 * system.C.shape[0]}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--end-to-end-only", action="store_true")
    args = ap.parse_args()
    if args.end_to_end_only:
        bench_end_to_end()
        return
    bench_kernels(args.repeat)
    print()
    bench_end_to_end()
    sys.stdout.flush()
    env = dict(os.environ, HPFEM_PURE_PYTHON="1")
    subprocess.run([sys.executable, __file__, "--end-to-end-only"], env=env,
                   check=False)


if __name__ == "__main__":
    main()
