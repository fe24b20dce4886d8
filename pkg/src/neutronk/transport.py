"""Ray mechanics and flight sampling under piecewise-constant rates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .phase import ConvexDomain, MaterialModel, PhasePoint

RATE_FIELDS = ("total", "scatter", "fission", "alpha")


@dataclass(frozen=True)
class FlightOutcome:
    kind: str  # "event" or "exited"
    time: float
    endpoint: PhasePoint

    @property
    def exited(self) -> bool:
        return self.kind == "exited"


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def stream_base(rng) -> np.uint64:
    """A 64-bit stream key drawn from ``rng`` (Generator or seed)."""
    return np.uint64(as_generator(rng).integers(0, 2 ** 64, dtype=np.uint64))


def rate_table(model: MaterialModel, rate_field: str) -> np.ndarray:
    T = model.tables
    if rate_field == "total":
        return T.sig_s + T.sig_f
    if rate_field == "scatter":
        return T.sig_s.copy()
    if rate_field == "fission":
        return T.sig_f.copy()
    if rate_field == "alpha":
        return T.sig_s + T.sig_f * T.yield_m
    raise ValueError(f"rate_field must be one of {RATE_FIELDS}")


def exit_time(domain: ConvexDomain, p: PhasePoint) -> float:
    """Time for the ray ``r + v t`` to leave ``domain``."""
    return domain.exit_time(p.r, p.v)


def advect_indicator(domain: ConvexDomain, p: PhasePoint, t: float) -> PhasePoint | None:
    """Translated point if it is still inside after time ``t``, else ``None``."""
    if t == 0:
        return p
    if t < exit_time(domain, p):
        return PhasePoint(p.r + p.v * t, p.v)
    return None


def sample_flights(model: MaterialModel, pos, vel, rate_field="total", rng=None,
                   t_limit=None) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised flights; returns ``(exited, time)`` arrays.

    ``time`` is the event time for rows that did not exit and the exit time
    for rows that did.
    """
    pos = np.ascontiguousarray(pos, dtype=float).reshape(-1, 3)
    vel = np.ascontiguousarray(vel, dtype=float).reshape(-1, 3)
    n = pos.shape[0]
    keys = K.derive_keys(stream_base(rng), n)
    rate = np.ascontiguousarray(rate_table(model, rate_field))
    tlim = np.full(n, np.inf) if t_limit is None else np.broadcast_to(
        np.asarray(t_limit, float), (n,)).copy()
    status, times, _ = K.flights(model.tables, pos, vel, keys, rate, np.zeros_like(rate), tlim)
    return status != K.EVENT, times


def sample_flight(model: MaterialModel, domain: ConvexDomain, p: PhasePoint,
                  rate_field: str = "total", rng=None) -> FlightOutcome:
    if domain is not model.domain and domain != model.domain:
        raise ValueError("domain does not match the model")
    exited, t = sample_flights(model, p.r[None], p.v[None], rate_field, rng)
    t = float(t[0])
    end = PhasePoint(p.r + p.v * t, p.v)
    return FlightOutcome("exited" if exited[0] else "event", t, end)
