"""Neutron random walks and their many-to-one estimators.

The alpha-pi walk flies with total rate ``alpha = sigma_s + sigma_f m``.  At
each scatter a coin decides between a fission-type event (probability
``sigma_f m / alpha``, new velocity from ``pi_f / m``) and a scatter-type event
(new velocity from ``pi_s``).  Weighting it by ``exp(int beta)`` with
``beta = sigma_f (m - 1)`` gives the time-dependent means ``psi_t``.

Generation-indexed means ``Psi_n`` need fission-type events at the branching
process's own fission rate ``sigma_f``.  The generational walk therefore flies
with rate ``sigma_s + sigma_f`` and is fission-type with probability
``sigma_f / (sigma_s + sigma_f)``; its weight is the product of the yields
``m`` collected at fission-type events, bounded by ``N_max**n``.  The alpha-pi
walk weighted by ``exp(int beta)`` up to ``T_n`` is offered as an equivalent
cross-check (``walk="alpha"``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .phase import ConvexDomain, MaterialModel, PhasePoint
from .results import Estimate, mean_estimate
from .transport import stream_base


@dataclass(frozen=True)
class WalkState:
    point: PhasePoint
    log_weight: float
    fission_count: int
    alive: bool
    clock: float


def _check_domain(model, domain):
    if domain is not None and domain is not model.domain and domain != model.domain:
        raise ValueError("domain does not match the model")


def start_arrays(model: MaterialModel, start, histories: int):
    """Broadcast ``start`` (a PhasePoint or a ``(pos, vel)`` pair) to ``histories`` rows."""
    if isinstance(start, PhasePoint):
        model.locate(start)
        pos = np.tile(start.r, (histories, 1))
        vel = np.tile(start.v, (histories, 1))
    else:
        pos, vel = (np.asarray(a, float).reshape(-1, 3) for a in start)
        if pos.shape[0] != histories:
            idx = np.arange(histories) % pos.shape[0]
            pos, vel = pos[idx], vel[idx]
    return np.ascontiguousarray(pos), np.ascontiguousarray(vel)


def _evaluate(g, pos, vel):
    if g is None:
        return np.ones(pos.shape[0])
    out = np.asarray(g(pos, vel), float)
    return np.broadcast_to(out, (pos.shape[0],))


def nrw_scatter(model: MaterialModel, p: PhasePoint, rng=None,
                generational: bool = False) -> tuple[np.ndarray, str]:
    """One coin toss plus velocity draw; returns ``(new_velocity, event_type)``."""
    c, b = model.locate(p)
    return nrw_scatters(model, np.array([c]), np.array([b]), rng, generational)[0]


WALKS = {"generational": K.WALK_GENERATIONAL, "alpha": K.WALK_ALPHA}


def nrw_scatters(model, cells, bands, rng=None, generational: bool = False):
    """Vectorised :func:`nrw_scatter`; ``generational`` selects the sigma_f coin."""
    T = model.tables
    cells = np.asarray(cells, np.int64)
    bands = np.asarray(bands, np.int64)
    alpha = T.sig_s + T.sig_f * T.yield_m
    if np.any(alpha[cells, bands] <= 0):
        raise ValueError("alpha = 0: the walk cannot scatter here (H2 fails)")
    keys = K.derive_keys(stream_base(rng), cells.size)
    ftype, vel = K.nrw_scatters(T, cells, bands, keys, bool(generational))
    return [(vel[i], "fission-type" if ftype[i] else "scatter-type") for i in range(cells.size)]


def walk_generations(model: MaterialModel, start, n: int, histories: int, rng=None,
                     dagger: bool = False, walk: str = "generational"):
    """Raw per-history output of the walk run to its ``n``-th fission-type event.

    Returns ``(weight, end_pos, end_vel, clock, count)`` with ``weight`` of
    shape ``(histories, n + 1)``.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if histories <= 0:
        raise ValueError("histories must be > 0")
    if walk not in WALKS:
        raise ValueError(f"walk must be one of {sorted(WALKS)}")
    if dagger and walk != "generational":
        raise ValueError("the dagger walk is defined for the generational walk only")
    pos, vel = start_arrays(model, start, histories)
    keys = K.derive_keys(stream_base(rng), histories)
    rate, aux = K.walk_tables(model.tables, WALKS[walk])
    out = K.nrw_generations(model.tables, pos, vel, keys, int(n), bool(dagger), WALKS[walk],
                            np.ascontiguousarray(rate), np.ascontiguousarray(aux))
    weight = out[0]
    if not dagger and walk == "generational":
        # a product of n yields can never exceed N_max**n
        bound = float(model.n_max) ** np.arange(n + 1) * (1 + 1e-12)
        assert np.all(weight <= bound), "walk weight exceeds N_max**n"
    return out


def run_to_generation(model: MaterialModel, domain: ConvexDomain, start: PhasePoint, n: int,
                      rng=None) -> WalkState:
    _check_domain(model, domain)
    weight, pos, vel, clock, count = walk_generations(model, start, n, 1, rng)
    w = weight[0, n]
    alive = bool(w > 0)
    return WalkState(PhasePoint(pos[0], vel[0]), float(np.log(w)) if alive else -np.inf,
                     int(count[0]), alive, float(clock[0]))


def psi_n_many_to_one(model: MaterialModel, domain: ConvexDomain, start, n: int, g=None,
                      histories: int = 10_000, rng=None, walk: str = "generational") -> Estimate:
    """Estimate ``Psi_n[g](start) = E[prod m * g(end) 1{T_n < exit}]``.

    ``g(pos, vel)`` is vectorised over rows; ``None`` means ``g = 1``.
    """
    _check_domain(model, domain)
    if n == 0 and isinstance(start, PhasePoint):
        val = float(_evaluate(g, start.r[None], start.v[None])[0])
        return Estimate(val, 0.0, histories)
    weight, pos, vel, _, _ = walk_generations(model, start, n, histories, rng, walk=walk)
    return mean_estimate(weight[:, n] * _evaluate(g, pos, vel))


def psi_n_curve(model: MaterialModel, start, n: int, histories: int, rng=None,
                dagger: bool = False) -> np.ndarray:
    """Per-history weights for every generation ``0..n`` with ``g = 1``."""
    return walk_generations(model, start, n, histories, rng, dagger)[0]


def psi_dagger_survival(model: MaterialModel, domain: ConvexDomain, start, n: int,
                        histories: int = 10_000, rng=None) -> Estimate:
    """Survival frequency of the walk with extra killing ``1 - m / N_max`` at fission-type events.

    Its mean is ``N_max**-n Psi_n[1](start)``.
    """
    _check_domain(model, domain)
    if n == 0:
        return Estimate(1.0, 0.0, histories)
    weight = walk_generations(model, start, n, histories, rng, dagger=True)[0]
    return mean_estimate(weight[:, n])


def psi_t_weights(model: MaterialModel, start, times, histories: int, rng=None):
    """Per-history ``exp(int beta) 1{alive}`` at each of the sorted ``times``."""
    times = np.asarray(times, float).ravel()
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValueError("times must be sorted and >= 0")
    pos, vel = start_arrays(model, start, histories)
    keys = K.derive_keys(stream_base(rng), histories)
    return K.nrw_times(model.tables, pos, vel, keys, np.ascontiguousarray(times))


def psi_t_many_to_one(model: MaterialModel, domain: ConvexDomain, start, t: float, g=None,
                      histories: int = 10_000, rng=None) -> Estimate:
    """Estimate ``psi_t[g](start) = E[exp(int_0^t beta) g(R_t, V_t) 1{t < exit}]``."""
    _check_domain(model, domain)
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0 and isinstance(start, PhasePoint):
        return Estimate(float(_evaluate(g, start.r[None], start.v[None])[0]), 0.0, histories)
    weight, pos, vel = psi_t_weights(model, start, [t], histories, rng)
    return mean_estimate(weight[:, 0] * _evaluate(g, pos, vel))
