"""Ready-made test problems.

Lengths are in units of the reference mean free path and speeds in units of
the reference speed, so a rate of 1 means one event per unit time.
"""
from __future__ import annotations

import numpy as np

from .phase import (Cell, ConvexDomain, MaterialModel, OffspringLaw, VelocityKernel,
                    VelocitySet, homogeneous_cell)

UNIT_SHELL = VelocityKernel.isotropic_shell(1.0)

# transverse half-width used to make a box behave like an infinite slab
SLAB_TRANSVERSE = 1.0e5


def pmf_with_mean(m: float, n_max: int = 3) -> tuple:
    """Offspring law on two adjacent integers with mean ``m``."""
    if not 0 <= m <= n_max:
        raise ValueError("mean must lie in [0, n_max]")
    lo = min(int(np.floor(m)), n_max - 1)
    p = np.zeros(n_max + 1)
    p[lo + 1] = m - lo
    p[lo] = 1.0 - (m - lo)
    return tuple(p)


def homogeneous_box(sigma_s=1.0, sigma_f=1.0, offspring=(0.0, 0.0, 1.0), size=1.0, n_max=3,
                    **flags) -> MaterialModel:
    """One-speed homogeneous cube ``[0, size]^3``."""
    lo, hi = (0.0, 0.0, 0.0), (size, size, size)
    cell = homogeneous_cell(lo, hi, sigma_s, sigma_f, UNIT_SHELL, offspring)
    return MaterialModel(ConvexDomain.box(lo, hi), VelocitySet(1.0, 1.0), (cell,), n_max=n_max,
                         **flags)


def no_leakage_box(sigma_s=1.0, sigma_f=1.0, m=2.5, size=1.0e4, n_max=3) -> MaterialModel:
    """Homogeneous cube whose side is ``size`` mean free paths (leakage negligible from the centre)."""
    return homogeneous_box(sigma_s, sigma_f, pmf_with_mean(m, n_max), size, n_max)


def box_center(model: MaterialModel) -> np.ndarray:
    lo, hi = model.domain.bounding_box
    return 0.5 * (lo + hi)


def slab(regions, thickness_edges, n_max=3, transverse=SLAB_TRANSVERSE, speed=1.0) -> MaterialModel:
    """One-speed slab along x, made from a box with a large transverse extent.

    ``regions`` is a list of ``(sigma_s, sigma_f, m)`` and ``thickness_edges``
    the x coordinates of the region boundaries.
    """
    e = list(map(float, thickness_edges))
    if len(e) != len(regions) + 1:
        raise ValueError("need len(regions) + 1 edges")
    shell = VelocityKernel.isotropic_shell(speed)
    cells = []
    for (ss, sf, m), a, b in zip(regions, e[:-1], e[1:]):
        cells.append(homogeneous_cell((a, -transverse, -transverse), (b, transverse, transverse),
                                      ss, sf, shell, pmf_with_mean(m, n_max)))
    dom = ConvexDomain.box((e[0], -transverse, -transverse), (e[-1], transverse, transverse))
    return MaterialModel(dom, VelocitySet(speed, speed), tuple(cells), n_max=n_max)


def standard_slab(m=1.25, n_max=3) -> MaterialModel:
    """Symmetric three-region slab, 4 mean free paths thick.

    Fuel-like outer regions (sigma_s = sigma_f = 0.5) sandwich a scattering
    middle region (sigma_s = 0.8, sigma_f = 0.2).
    """
    return slab([(0.5, 0.5, m), (0.8, 0.2, m), (0.5, 0.5, m)], [0.0, 1.5, 2.5, 4.0], n_max)


def heterogeneous_box(n_max=3) -> MaterialModel:
    """Three cells along x, two speed bands, histogram kernels differing per cell and band."""
    lo, hi = (0.0, 0.0, 0.0), (3.0, 2.0, 2.0)
    vs = VelocitySet(1.0, 2.0, (1.0, 1.5, 2.0))
    edges = (1.0, 1.5, 2.0)
    soft = VelocityKernel.histogram(edges, (1.2, 0.8))   # mass 1, favours slow
    hard = VelocityKernel.histogram(edges, (0.6, 1.4))   # mass 1, favours fast
    data = [
        # (sigma_s per band, sigma_f per band, mean yield per band)
        ((1.0, 0.8), (0.6, 0.4), (2.0, 2.4)),
        ((1.5, 1.2), (0.1, 0.05), (1.5, 1.5)),
        ((0.7, 0.9), (0.9, 0.6), (2.5, 1.8)),
    ]
    cells = []
    for i, (ss, sf, ms) in enumerate(data):
        laws = tuple(OffspringLaw(pmf_with_mean(m, n_max)) for m in ms)
        pi_s = (soft, hard)
        pi_f = tuple((hard if i % 2 else soft).scaled(m) for m in ms)
        cells.append(Cell((float(i), lo[1], lo[2]), (float(i + 1), hi[1], hi[2]),
                          tuple(map(float, ss)), tuple(map(float, sf)), pi_s, pi_f, laws))
    return MaterialModel(ConvexDomain.box(lo, hi), vs, tuple(cells), n_max=n_max)


def sphere_model(radius=2.0, sigma_s=0.6, sigma_f=0.4, m=2.0, n_max=3) -> MaterialModel:
    dom = ConvexDomain.sphere((0.0, 0.0, 0.0), radius)
    lo = (-radius,) * 3
    hi = (radius,) * 3
    cell = homogeneous_cell(lo, hi, sigma_s, sigma_f, UNIT_SHELL, pmf_with_mean(m, n_max))
    return MaterialModel(dom, VelocitySet(1.0, 1.0), (cell,), n_max=n_max)
