"""Build one fooling pair and look at it.

Two right-hand sides f1 and f2 = f1 + H agree on every sample point of a
nonadaptive grid, yet their solutions drift apart.  Any algorithm that only
sees those samples must err by at least half the gap.
"""
import numpy as np

from ivpcomplexity import ProblemSpec, build_thm1
from ivpcomplexity.fooling import predicted_separation, verify_zero_information
from ivpcomplexity.harness import audit_inequalities, measure_separation
from ivpcomplexity.information import evaluate_info, uniform_grid_info


def main():
    spec = ProblemSpec.create(d=2, r=2)
    N = uniform_grid_info(spec, 64)
    pair = build_thm1(spec, N)

    print(f"budget n = {N.n}, cells = {pair.grid.ncells}, chosen parallelepiped {pair.kstar}")
    print(f"cells with beta = 1 on that parallelepiped: {pair.meta['ones']} of {pair.grid.cells_per}")
    print(f"certified bump amplitude C = {pair.c_hat}")

    diff = np.abs(evaluate_info(N, pair.f1) - evaluate_info(N, pair.f2))
    print(f"max |N(f1) - N(f2)| = {float(diff.max())!r}  (residual check: {float(np.max(verify_zero_information(pair, N)))!r})")

    measured, z1, z2, _ = measure_separation(pair)
    print(f"sup |z1 - z2| = {measured:.6e}")
    print(f"closed-form lower bound = {predicted_separation(pair):.6e}")
    print(f"so every algorithm using N has worst-case error >= {measured / 2:.6e}")

    for line in audit_inequalities(pair, z1, z2).lines():
        print("  " + line)

    ts = np.linspace(spec.a, spec.b, 6)
    print("t      |z1 - z2|_inf")
    for t, gap in zip(ts, np.max(np.abs(z1.deviation(ts) - z2.deviation(ts)), axis=1)):
        print(f"{t:.2f}   {gap:.3e}")


if __name__ == "__main__":
    main()
