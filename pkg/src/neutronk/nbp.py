"""Direct simulation of the neutron branching process.

Populations are held as :class:`GenerationCensus` objects (structure of
arrays).  Each particle carries its own random stream ``(key, ctr)`` so a
generation step is a pure function of the census, whatever the thread count.
Passing ``rng`` to a step re-keys the census from ``rng`` first; passing
``None`` continues every particle's existing stream, which is what makes
the collision-by-collision and fission-by-fission views of one history
replay the same random events.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernels as K
from .errors import PopulationCapError
from .phase import ConvexDomain, MaterialModel, PhasePoint
from .transport import as_generator, stream_base

POPULATION_CAP = 10_000_000
KINDS = ("fission-generation", "collision-generation", "time-snapshot")
CENSUS_COLUMNS = ("generation", "x", "y", "z", "vx", "vy", "vz", "weight")


@dataclass
class GenerationCensus:
    pos: np.ndarray
    vel: np.ndarray
    key: np.ndarray
    ctr: np.ndarray
    root: np.ndarray
    parent: np.ndarray
    weight: np.ndarray
    generation: int = 0
    kind: str = "fission-generation"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown census kind {self.kind!r}")

    def __len__(self):
        return self.pos.shape[0]

    @property
    def size(self) -> int:
        return self.pos.shape[0]

    @property
    def total_weight(self) -> float:
        return float(self.weight.sum())

    @classmethod
    def from_arrays(cls, pos, vel, rng=None, kind="fission-generation", generation=0,
                    root=None):
        pos = np.ascontiguousarray(pos, float).reshape(-1, 3)
        vel = np.ascontiguousarray(vel, float).reshape(-1, 3)
        n = pos.shape[0]
        keys = K.derive_keys(stream_base(rng), n)
        return cls(pos=pos, vel=vel, key=keys, ctr=np.zeros(n, np.uint64),
                   root=np.arange(n) if root is None else np.asarray(root, np.int64),
                   parent=np.full(n, -1, np.int64), weight=np.ones(n),
                   generation=generation, kind=kind)

    @classmethod
    def point_source(cls, p: PhasePoint, n: int, rng=None):
        return cls.from_arrays(np.tile(p.r, (n, 1)), np.tile(p.v, (n, 1)), rng)

    @classmethod
    def empty(cls, generation=0, kind="fission-generation"):
        return cls(pos=np.empty((0, 3)), vel=np.empty((0, 3)), key=np.empty(0, np.uint64),
                   ctr=np.empty(0, np.uint64), root=np.empty(0, np.int64),
                   parent=np.empty(0, np.int64), weight=np.empty(0),
                   generation=generation, kind=kind)

    def take(self, idx) -> "GenerationCensus":
        idx = np.asarray(idx)
        return replace(self, pos=self.pos[idx], vel=self.vel[idx], key=self.key[idx],
                       ctr=self.ctr[idx], root=self.root[idx], parent=self.parent[idx],
                       weight=self.weight[idx], meta=dict(self.meta))

    def rekeyed(self, rng) -> "GenerationCensus":
        n = self.size
        return replace(self, key=K.derive_keys(stream_base(rng), n), ctr=np.zeros(n, np.uint64))

    def pairing(self, g=None) -> float:
        """``<g, X>`` for a vectorised test function ``g(pos, vel)``."""
        if g is None:
            return self.total_weight
        return float(np.sum(self.weight * np.asarray(g(self.pos, self.vel), float)))

    def counts_by_root(self, n_roots: int, g=None) -> np.ndarray:
        w = self.weight if g is None else self.weight * np.asarray(g(self.pos, self.vel), float)
        return np.bincount(self.root, weights=w, minlength=n_roots)


def uniform_source(model: MaterialModel, n: int, rng=None) -> GenerationCensus:
    """``n`` neutrons uniform in D with fission-spectrum velocities."""
    gen = as_generator(rng)
    pos = model.domain.sample_uniform(n, gen)
    cells = np.array([model.cell_index(r) for r in pos]) if len(model.cells) > 1 \
        else np.zeros(n, np.int64)
    vel = K.sample_velocities(model.tables, K.KERNEL_FISSION, cells.astype(np.int64),
                              np.zeros(n, np.int64), K.derive_keys(stream_base(gen), n))
    return GenerationCensus.from_arrays(pos, vel, gen)


def _check(model, domain):
    if domain is not None and domain is not model.domain and domain != model.domain:
        raise ValueError("domain does not match the model")


def _children(census, out, cap):
    outcome, elapsed, end_pos, end_vel, end_ctr, nchild, cvel, ckey, cctr = out
    total = int(nchild.sum())
    if total > cap:
        raise PopulationCapError(f"population {total} exceeds cap {cap}")
    kmax = cvel.shape[1]
    mask = np.arange(kmax)[None, :] < nchild[:, None]
    parent = np.repeat(np.arange(census.size), nchild)
    return dict(pos=end_pos[parent], vel=cvel[mask], key=ckey[mask], ctr=cctr[mask],
                parent=parent, root=census.root[parent], weight=census.weight[parent],
                elapsed=elapsed[parent], outcome=outcome)


def _step(model, census, mode, rng, cap, kind):
    if rng is not None:
        census = census.rekeyed(rng)
    n = census.size
    if n == 0:
        return GenerationCensus.empty(census.generation + 1, kind), np.empty(0, np.int64)
    out = K.advance(model.tables, census.pos, census.vel, census.key, census.ctr,
                    np.full(n, np.inf), mode)
    ch = _children(census, out, cap)
    nxt = GenerationCensus(pos=ch["pos"], vel=ch["vel"], key=ch["key"], ctr=ch["ctr"],
                           root=ch["root"], parent=ch["parent"], weight=ch["weight"],
                           generation=census.generation + 1, kind=kind)
    return nxt, out[0]


def next_fission_generation(model: MaterialModel, domain: ConvexDomain | None,
                            census: GenerationCensus, rng=None,
                            cap: int = POPULATION_CAP) -> GenerationCensus:
    """Follow each neutron to its first fission and collect all offspring.

    Scatters along the way are absorbed into the motion; leaked neutrons and
    fissions with zero offspring contribute nothing.
    """
    _check(model, domain)
    if census.kind == "collision-generation":
        raise ValueError("next_fission_generation needs a fission-generation census")
    nxt, outcome = _step(model, census, K.MODE_FISSION, rng, cap, "fission-generation")
    nxt.meta["fissions"] = int(np.sum(outcome == K.OUT_FISSION))
    return nxt


def next_collision_generation(model: MaterialModel, domain: ConvexDomain | None,
                              census: GenerationCensus, rng=None,
                              cap: int = POPULATION_CAP) -> GenerationCensus:
    """Follow each neutron to its first collision of either type."""
    _check(model, domain)
    nxt, outcome = _step(model, census, K.MODE_COLLISION, rng, cap, "collision-generation")
    # flag which outputs were born at a fission (parent's outcome)
    nxt.meta["from_fission"] = outcome[nxt.parent] == K.OUT_FISSION if nxt.size else \
        np.empty(0, bool)
    return nxt


def simulate_time(model: MaterialModel, domain: ConvexDomain | None, initial: GenerationCensus,
                  t: float, rng=None, cap: int = POPULATION_CAP) -> GenerationCensus:
    """Population ``X_t`` of the branching process started from ``initial``.

    Runs in waves: each wave moves every pending neutron to its first fission
    or to time ``t``; the offspring form the next wave.
    """
    _check(model, domain)
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return replace(initial, kind="time-snapshot", meta={"t": 0.0})
    wave = initial.rekeyed(rng) if rng is not None else initial
    birth = np.zeros(wave.size)
    done = []
    alive = wave.size
    while wave.size:
        out = K.advance(model.tables, wave.pos, wave.vel, wave.key, wave.ctr,
                        np.maximum(t - birth, 0.0), K.MODE_FISSION)
        outcome, elapsed, end_pos, end_vel, end_ctr = out[:5]
        stop = outcome == K.OUT_TIME
        if np.any(stop):
            done.append(GenerationCensus(pos=end_pos[stop], vel=end_vel[stop],
                                         key=wave.key[stop], ctr=end_ctr[stop],
                                         root=wave.root[stop], parent=wave.parent[stop],
                                         weight=wave.weight[stop]))
        ch = _children(wave, out, cap)
        alive = sum(c.size for c in done) + ch["pos"].shape[0]
        if alive > cap:
            raise PopulationCapError(f"population {alive} exceeds cap {cap} before t={t}")
        birth = birth[ch["parent"]] + ch["elapsed"]
        wave = GenerationCensus(pos=ch["pos"], vel=ch["vel"], key=ch["key"], ctr=ch["ctr"],
                                root=ch["root"], parent=ch["parent"], weight=ch["weight"])
    if not done:
        res = GenerationCensus.empty(kind="time-snapshot")
    else:
        res = GenerationCensus(
            pos=np.concatenate([c.pos for c in done]), vel=np.concatenate([c.vel for c in done]),
            key=np.concatenate([c.key for c in done]), ctr=np.concatenate([c.ctr for c in done]),
            root=np.concatenate([c.root for c in done]),
            parent=np.concatenate([c.parent for c in done]),
            weight=np.concatenate([c.weight for c in done]), kind="time-snapshot")
    res.meta["t"] = float(t)
    return res


def fission_generations(model, census, n, rng=None, cap=POPULATION_CAP):
    """Censuses ``X_0 .. X_n`` without renormalisation."""
    gens = [census]
    for _ in range(n):
        gens.append(next_fission_generation(model, None, gens[-1], rng, cap))
    return gens


# ---------------------------------------------------------------- census I/O

def write_census(path, censuses) -> Path:
    """Dump one or more censuses as CSV rows ``generation,x,y,z,vx,vy,vz,weight``."""
    if isinstance(censuses, GenerationCensus):
        censuses = [censuses]
    rows = [np.column_stack([np.full(c.size, c.generation), c.pos, c.vel, c.weight])
            for c in censuses]
    data = np.vstack(rows) if rows else np.empty((0, 8))
    path = Path(path)
    fmt = ["%d"] + ["%.17g"] * 7
    np.savetxt(path, data, delimiter=",", header=",".join(CENSUS_COLUMNS), comments="", fmt=fmt)
    return path


def read_census(path) -> list[GenerationCensus]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    out = []
    for g in np.unique(data[:, 0]).astype(int):
        rows = data[data[:, 0] == g]
        c = GenerationCensus.from_arrays(rows[:, 1:4], rows[:, 4:7], rng=0, generation=int(g))
        c.weight = rows[:, 7].copy()
        out.append(c)
    return out
