"""Fourth-order convergence of the state-picture integrator.

A weakly damped, oscillating qubit started off the steady state is
integrated with doubling step counts; errors are taken against a run with
four times the finest step count.
"""
import argparse

import numpy as np

from openadiabatic.evolution import integrate_exact
from openadiabatic.lindblad import Schedule, TimeDependentOperator, TimeDependentSuperoperator
from openadiabatic.models import SIGMA_MINUS, SIGMA_X, SIGMA_Z
from openadiabatic.operator_space import from_bloch


def oscillator(total_time):
    one = Schedule.constant(1.0)
    return TimeDependentSuperoperator(
        dimension=2,
        hamiltonian=TimeDependentOperator(((2.5 * SIGMA_Z + 0.7 * SIGMA_X, one),)),
        lindblad_ops=(TimeDependentOperator(((0.05 * SIGMA_MINUS, one),)),),
        total_time=total_time,
    )


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--total-time", type=float, default=30.0)
    p.add_argument("--steps", type=int, nargs="+", default=[1000, 2000, 4000])
    args = p.parse_args()

    gen = oscillator(args.total_time)
    rho0 = from_bloch([1.0, 0.0, 0.0])
    grid = np.array([0.0, 1.0])
    ref = integrate_exact(gen, rho0, steps=4 * max(args.steps), grid=grid).states[-1]
    prev = None
    print("steps,error,ratio")
    for n in sorted(args.steps):
        err = np.abs(integrate_exact(gen, rho0, steps=n, grid=grid).states[-1] - ref).max()
        ratio = "" if prev is None else f"{prev / err:.2f}"
        print(f"{n},{err:.4e},{ratio}")
        prev = err


if __name__ == "__main__":
    main()
