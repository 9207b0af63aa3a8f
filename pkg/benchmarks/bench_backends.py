"""Time the compiled core against the numpy fallback.

    python benchmarks/bench_backends.py [--sizes 400,1600,6400] [--repeat 3]

Each size is a jittered square patch at h = 1.5 dp with random stress and
knots.  Reports the best wall time of neighbour search and of one rate
evaluation per backend, and checks the two backends agree.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from adaptsph import _backend, neighbors
from adaptsph.kernel import KernelFamily
from adaptsph.sph import KernelSetup, MaterialModel, Particles, ViscosityParams, compute_rates

MAT = MaterialModel(rho0=7850.0, E=200e9, nu=0.3)
VISC = ViscosityParams(1.0, 1.0)


def patch(n: int, seed: int = 0) -> Particles:
    side = int(round(n ** 0.5))
    rng = np.random.default_rng(seed)
    g = np.arange(side) * 1e-3
    x = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    x += rng.uniform(-0.1, 0.1, x.shape) * 1e-3
    p = Particles.create(x, rho=MAT.rho0 * rng.uniform(0.98, 1.02, len(x)), m=MAT.rho0 * 1e-6,
                         v=rng.normal(0, 1.0, x.shape))
    S = rng.normal(0, 1e7, (len(x), 2, 2))
    p.S = S + S.transpose(0, 2, 1)
    p.a_knot = rng.uniform(0.2, 1.2, len(x))
    return p


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="400,1600,6400")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = _backend.available()
    kern = KernelSetup(KernelFamily.CUBIC, 1.5e-3)
    print(f"backends: {', '.join(backends)}")
    print(f"{'n':>7} {'backend':>8} {'pairs [s]':>10} {'rates [s]':>10} {'speed-up':>9}")
    for n in (int(s) for s in args.sizes.split(",")):
        p = patch(n)
        table = neighbors.build(p.x, kern.radius)
        ref_time = None
        results = {}
        for name in ["python", *[b for b in backends if b != "python"]]:
            t_pairs = best_of(lambda: neighbors.build(p.x, kern.radius, backend=name), args.repeat)
            t_rates = best_of(lambda: compute_rates(p, table, MAT, VISC, kern, backend=name),
                              args.repeat)
            results[name] = compute_rates(p, table, MAT, VISC, kern, backend=name)
            if ref_time is None:
                ref_time = t_pairs + t_rates
            speed = ref_time / (t_pairs + t_rates)
            print(f"{p.n:>7} {name:>8} {t_pairs:>10.4f} {t_rates:>10.4f} {speed:>8.1f}x")
        if "cython" in results:
            a, b = results["cython"].dv, results["python"].dv
            err = np.max(np.abs(a - b)) / np.max(np.abs(b))
            print(f"{'':>7} max relative dv difference {err:.2e}")


if __name__ == "__main__":
    main()
