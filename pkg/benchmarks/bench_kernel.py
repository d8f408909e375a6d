"""Time the transmission hot loop with the compiled and pure-Python kernels.

    python benchmarks/bench_kernel.py [--seconds 5] [--dt 1e-3] [--repeat 3]

Both backends integrate the same load step on the 9-bus case; the script
reports wall time per simulated second, the speed-up, and the largest
state difference between the two.
"""
import argparse
import time

import numpy as np

from hybridtd.transmission.case import default_case
from hybridtd.transmission.dynamics import TransmissionModel


def bench(backend, seconds, dt, repeat):
    model = TransmissionModel(default_case(), backend=backend)
    steps = int(round(seconds / dt))
    best = float("inf")
    for _ in range(repeat):
        state = model.init_steady_state()
        t0 = time.perf_counter()
        state = model.advance(state, dt, steps, loads={5: 135 + 50j}, agc_setpoints=[0.0, 1.0, -0.5])
        best = min(best, time.perf_counter() - t0)
    return best, state


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seconds", type=float, default=5.0, help="simulated seconds per run")
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    results = {}
    for backend in ("compiled", "python"):
        try:
            results[backend] = bench(backend, args.seconds, args.dt, args.repeat)
        except ImportError:
            print(f"{backend:9s} unavailable (extension not built)")
    for name, (wall, _) in results.items():
        print(f"{name:9s} {wall:8.3f} s  ({wall / args.seconds * 1e3:.2f} ms per simulated s)")
    if len(results) == 2:
        (fast, a), (slow, b) = results["compiled"], results["python"]
        diff = max(np.max(np.abs(a.as_array() - b.as_array())), np.max(np.abs(a.v - b.v)))
        print(f"speed-up  {slow / fast:8.1f}x   max state difference {diff:.1e}")


if __name__ == "__main__":
    main()
