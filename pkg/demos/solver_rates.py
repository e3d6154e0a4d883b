"""The upper-bound side: two solvers whose error matches the lower bounds.

A Taylor method with adaptive information reaches error n^(-r), independent
of the dimension.  A method that interpolates f on a fixed grid and
integrates the interpolant only reaches n^(-r/d), and the fooling pair
built against its grid shows it cannot do better.
"""
from ivpcomplexity import ProblemSpec
from ivpcomplexity.harness import adversary_pair_for_grid, measure_separation
from ivpcomplexity.solvers import (PolynomialCutoffField, reference_solve, solve_adaptive_taylor,
                                   solve_nonadaptive_grid, sup_distance, taylor_charge)


def taylor(r):
    spec = ProblemSpec.create(d=2, r=r)
    f = PolynomialCutoffField(spec)
    ref = reference_solve(f, spec, tol=1e-12)
    print(f"\nTaylor, r={r}, {taylor_charge(2, r)} functionals per step")
    print("       n    error       ratio")
    prev = None
    for steps in (64, 128, 256, 512):
        traj = solve_adaptive_taylor(f, spec, steps)
        err = sup_distance(traj, ref)
        print(f"{traj.info_count:8d}    {err:.4e}  {'' if prev is None else f'{prev / err:.2f}'}")
        prev = err


def grid():
    spec = ProblemSpec.create(d=2, r=2)
    print("\ngrid interpolation, d=2 r=2, against its own fooling pair")
    print("       n    error       half separation")
    for n in (16, 64, 256, 1024):
        pair, _ = adversary_pair_for_grid(spec, n)
        sep, z1, z2, _ = measure_separation(pair)
        approx = solve_nonadaptive_grid(pair.f2, spec, n)
        err = max(sup_distance(approx, z1), sup_distance(approx, z2))
        print(f"{n:8d}    {err:.4e}  {sep / 2:.4e}")


if __name__ == "__main__":
    taylor(1)
    taylor(2)
    grid()
