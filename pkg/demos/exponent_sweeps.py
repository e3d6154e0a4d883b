"""Separation sweeps for the lower-bound constructions.

For each construction the separation shrinks like a power of the budget n.
The fitted exponent is compared with its theoretical value.
"""
import sys

from ivpcomplexity.harness import ExperimentConfig, run_sweep

SWEEPS = [
    dict(d=2, r=1, variant="thm1", schedule=[16, 64, 256, 1024], atoms="random", seed=1),
    dict(d=2, r=2, variant="thm1", schedule=[16, 64, 256, 1024], atoms="random", seed=1),
    dict(d=2, r=1, variant="thm2i", schedule=[8, 27, 64, 125], seed=1),
    dict(d=2, r=1, variant="thm2ii", schedule=[16, 64, 256, 1024], alpha_info=2.0, k=-1, seed=4),
    dict(d=1, r=2, variant="d1", schedule=[32, 64, 128, 256, 512, 1024], k=2, seed=1),
]


def main():
    for data in SWEEPS:
        cfg = ExperimentConfig.from_dict(data)
        run = run_sweep(cfg)
        print(f"\n{cfg.variant}  d={cfg.d} r={cfg.r}")
        print("       n    separation")
        for row in run.rows:
            print(f"{row.n:8d}    {row.measured:.4e}")
        print(f"slope {run.slope:+.4f} (theory {run.theory:+.4f} ± {cfg.tolerance})  {run.verdict}")
    if len(sys.argv) > 1:
        # write the last sweep as CSV, the format the CLI emits
        run.write(sys.argv[1])


if __name__ == "__main__":
    main()
