"""Compiled kernel against the pure-NumPy fallback on lab-frame qubit/cavity trajectories.

Usage::

    python benchmarks/bench_backends.py [--steps 2000] [--truncations 5 10 20 40] [--repeat 3]

Prints steps per second for each backend and scheme, the speed-up, and the
largest state difference between backends (they run the same arithmetic, so
it should sit at rounding level).
"""

import argparse
import time

import numpy as np

from dispersive_sme import amplitudes as am
from dispersive_sme import hilbert as hb
from dispersive_sme import models as md
from dispersive_sme import sme
from dispersive_sme.noise import NoiseSource


def timed_run(model, rho0, dt, T, scheme, backend, repeat):
    best, rec = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        rec = sme.simulate(model, rho0, dt, T, scheme, NoiseSource(1), stride=100,
                           track_min_eigenvalue=False, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, rec


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--truncations", type=int, nargs="+", default=[5, 10, 20, 40])
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    backends = sme.available_backends()
    if "compiled" not in backends:
        print("compiled kernel not built; only the python backend is available")
    T = args.steps * args.dt
    drive = am.DriveSignal.constant(0.5)
    print(f"{'N':>4} {'scheme':>16} " + " ".join(f"{b + ' steps/s':>18}" for b in backends)
          + f" {'speed-up':>9} {'max diff':>9}")
    for N in args.truncations:
        model = md.full_qubit_cavity(1.0, 0.5, 1.0, drive, N)
        rho0 = hb.tensor(np.full((2, 2), 0.5, complex), hb.coherent_state(0.5, N))
        for scheme in sme.Scheme:
            rates, recs = {}, {}
            for b in backends:
                wall, recs[b] = timed_run(model, rho0, args.dt, T, scheme, b, args.repeat)
                rates[b] = args.steps / wall
            if len(backends) > 1:
                speed = rates["compiled"] / rates["python"]
                diff = np.max(np.abs(recs["compiled"].states - recs["python"].states))
            else:
                speed, diff = float("nan"), float("nan")
            print(f"{N:>4} {scheme.value:>16} " + " ".join(f"{rates[b]:>18.0f}" for b in backends)
                  + f" {speed:>9.2f} {diff:>9.1e}")


if __name__ == "__main__":
    main()
