"""Compare the branching process with its single-particle weighted walk.

For the heterogeneous model, the mean size of the n-th fission generation is
estimated three ways: by simulating the branching process, by the weighted
walk, and by N_max**n times the survival probability of the killed walk.
The walk weights grow heavy-tailed with n, so at the later generations their
quoted errors are optimistic; with more histories all three columns converge.
"""
import numpy as np

from neutronk import models, nbp, nrw
from neutronk.nbp import GenerationCensus
from neutronk.phase import PhasePoint
from neutronk.results import mean_estimate

HISTORIES = 500_000


def main():
    m = models.heterogeneous_box()
    start = PhasePoint((1.5, 1.0, 1.0), (1.2, 0.0, 0.0))
    gen = np.random.default_rng(3)
    census = GenerationCensus.point_source(start, HISTORIES, gen)
    walk = nrw.psi_n_curve(m, start, 5, HISTORIES, gen)
    killed = nrw.psi_n_curve(m, start, 5, HISTORIES, gen, dagger=True)
    print(" n   branching          weighted walk      N_max^n x survival")
    for n in range(1, 6):
        census = nbp.next_fission_generation(m, None, census, gen)
        a = mean_estimate(census.counts_by_root(HISTORIES))
        b = mean_estimate(walk[:, n])
        c = mean_estimate(killed[:, n] * m.n_max ** n)
        print(f"{n:2d}   " + "   ".join(f"{e.value:.4f} +- {e.std_error:.4f}" for e in (a, b, c)))


if __name__ == "__main__":
    main()
