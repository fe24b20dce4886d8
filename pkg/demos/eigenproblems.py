"""k, lambda and c on slabs tuned to k = 0.9, 1.0 and 1.1.

The three eigenvalue problems agree on criticality: lambda < 0, c < 1 and
k < 1 together, and likewise for supercritical slabs.
"""
import numpy as np

from neutronk import models, nbp
from neutronk import estimators as E
from neutronk.oracle import tune_to_k


def main():
    print("target  oracle k   power k            log-growth k       lambda              c")
    for target in (0.9, 1.0, 1.1):
        tuned = tune_to_k(models.standard_slab(), target)
        m = tuned.model
        gen = np.random.default_rng(int(10 * target))
        k, _, _ = E.power_iteration_k(m, None, nbp.uniform_source(m, 5000, gen), 20, 60, 5000, gen)
        src = nbp.uniform_source(m, 100_000, gen)
        lg = E.log_growth_k(m, None, (src.pos, src.vel), 16, 100_000, gen)
        lam = E.lambda_time_estimate(m, None, (src.pos, src.vel), 20.0, 100_000, gen)
        c = E.collision_c_estimate(m, None, nbp.uniform_source(m, 5000, gen), 60, 5000, gen)
        cols = "  ".join(f"{e.value:+.4f} +- {e.std_error:.4f}" for e in (k, lg, lam, c))
        print(f"{target:5.2f}   {tuned.k:.5f}   {cols}")


if __name__ == "__main__":
    main()
