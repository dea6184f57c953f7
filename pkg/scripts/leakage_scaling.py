"""Peak leakage out of the instantaneous ground state for a linear qubit sweep.

H(s) = (1 - s) sigma_x + s sigma_z.  The peak leakage should halve with
each doubling of the total time.
"""
import argparse

import numpy as np

from openadiabatic.evolution import leakage
from openadiabatic.lindblad import Schedule, TimeDependentOperator
from openadiabatic.models import SIGMA_X, SIGMA_Z


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--times", type=float, nargs="+", default=[5, 10, 20, 40, 80])
    p.add_argument("--steps", type=int, default=20_000)
    args = p.parse_args()

    H = TimeDependentOperator(((SIGMA_X, Schedule.linear(1, -1)), (SIGMA_Z, Schedule.linear(0, 1))))
    grid = np.linspace(0, 1, 401)
    prev = None
    print("T,peak_leakage,final_leakage,ratio")
    for T in args.times:
        _, leak = leakage(H, T, steps=args.steps, grid=grid)
        ratio = "" if prev is None else f"{prev / leak.max():.3f}"
        print(f"{T:g},{leak.max():.5g},{leak[-1]:.3g},{ratio}")
        prev = leak.max()


if __name__ == "__main__":
    main()
