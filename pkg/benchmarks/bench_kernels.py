"""Time the compiled and NumPy lattice sweeps on identical inputs.

    python3 benchmarks/bench_kernels.py [--repeat 3]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from stochhj.env import sample_environment, single_mode
from stochhj.hamiltonian import PowerLawHamiltonian
from stochhj.kernels import get_backend
from stochhj.optimizer import Sweep, symmetric_lattice

CASES = [
    # (label, d, radius, h, dt, v_max, subsamples, K)
    ("1d fine", 1, 4.0, 1 / 64, 1 / 64, 4.0, 2, 64),
    ("1d long", 1, 8.0, 1 / 32, 1 / 8, 5.0, 2, 256),
    ("2d", 2, 1.5, 1 / 16, 1 / 16, 3.0, 2, 32),
]


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    try:
        backends = {"python": get_backend("python"), "cython": get_backend("cython")}
    except ImportError:
        backends = {"python": get_backend("python")}
        print("compiled extension not built; timing the NumPy backend only")
    ham = PowerLawHamiltonian(2.0)
    print(f"{'case':10s} {'cells':>7s} {'edges':>5s} {'K':>4s} " + " ".join(f"{b:>10s}" for b in backends)
          + ("   speedup  identical" if len(backends) == 2 else ""))
    for label, d, radius, h, dt, v_max, sub, K in CASES:
        lat = symmetric_lattice(radius, h, dt, v_max, d, sub)
        env = sample_environment(single_mode(1.0, 1.5, d), K * dt + 1.0, dt / sub, 0, 0)
        sw = Sweep.build(lat, env, ham, 0.0, K)
        V0 = np.zeros(lat.ncell)
        out, times = {}, {}
        for name in backends:
            out[name] = sw.run(V0, backend=name)[0]
            times[name] = best_of(lambda: sw.run(V0, backend=name), args.repeat)
        row = f"{label:10s} {lat.ncell:7d} {len(sw.offsets):5d} {K:4d} " + " ".join(
            f"{times[b]:9.3f}s" for b in backends)
        if len(backends) == 2:
            same = np.array_equal(out["python"], out["cython"])
            row += f"   {times['python'] / times['cython']:6.1f}x  {same}"
        print(row)


if __name__ == "__main__":
    main()
