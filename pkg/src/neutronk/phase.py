"""Phase space, geometry, velocity kernels and material fields.

A problem lives on ``D x V`` where ``D`` is a convex primitive (box or
sphere) and ``V`` the speed annulus ``v_min <= |v| <= v_max``.  Material data
are constant per (cell, incoming speed band); cells are axis-aligned boxes
that partition ``D``'s bounding box.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .errors import AssumptionError, ConfigError, DomainError

# Kernel mass agreement demanded at load time.
MASS_TOL = 1e-9
# Points closer than this fraction of the diameter to the boundary count as outside.
BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class PhasePoint:
    r: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "r", np.asarray(self.r, dtype=float).reshape(3))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float).reshape(3))

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.v))


@dataclass(frozen=True)
class VelocitySet:
    v_min: float
    v_max: float
    band_edges: tuple = ()

    def __post_init__(self):
        if not self.v_min > 0:
            raise ConfigError("velocity_set: v_min must be > 0")
        if self.v_max < self.v_min:
            raise ConfigError("velocity_set: v_max must be >= v_min")
        edges = tuple(float(e) for e in self.band_edges) or (self.v_min, self.v_max)
        if abs(edges[0] - self.v_min) > 0 or abs(edges[-1] - self.v_max) > 0:
            raise ConfigError("velocity_set: bands must start at v_min and end at v_max")
        if len(edges) < 2 or any(b < a for a, b in zip(edges, edges[1:])):
            raise ConfigError("velocity_set: bands must be nondecreasing with >= 2 edges")
        if len(edges) > 2 and any(b <= a for a, b in zip(edges, edges[1:])):
            raise ConfigError("velocity_set: bands must be strictly increasing")
        object.__setattr__(self, "band_edges", edges)

    @property
    def n_bands(self) -> int:
        return len(self.band_edges) - 1

    @property
    def single_speed(self) -> bool:
        return self.v_min == self.v_max

    def band(self, speed: float) -> int:
        if self.n_bands == 1:
            return 0
        b = int(np.searchsorted(self.band_edges, speed, side="right")) - 1
        return min(max(b, 0), self.n_bands - 1)

    def contains(self, v) -> bool:
        s = float(np.linalg.norm(v))
        tol = 1e-12 * self.v_max
        return self.v_min - tol <= s <= self.v_max + tol


@dataclass(frozen=True)
class ConvexDomain:
    """Axis-aligned box (``lower``, ``upper``) or sphere (``center``, ``radius``)."""

    shape: str
    lower: tuple = (0.0, 0.0, 0.0)
    upper: tuple = (1.0, 1.0, 1.0)
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 1.0

    def __post_init__(self):
        if self.shape == "box":
            lo = np.asarray(self.lower, float)
            hi = np.asarray(self.upper, float)
            if lo.shape != (3,) or hi.shape != (3,) or not np.all(hi > lo):
                raise ConfigError("domain: box needs 3-vectors with upper > lower")
            if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
                raise ConfigError("domain: box must be bounded")
        elif self.shape == "sphere":
            if not (np.isfinite(self.radius) and self.radius > 0):
                raise ConfigError("domain: sphere radius must be finite and > 0")
            if np.asarray(self.center, float).shape != (3,):
                raise ConfigError("domain: sphere center must be a 3-vector")
        else:
            raise ConfigError(f"domain: unknown shape {self.shape!r}")

    @classmethod
    def box(cls, lower, upper):
        return cls("box", lower=tuple(map(float, lower)), upper=tuple(map(float, upper)))

    @classmethod
    def sphere(cls, center, radius):
        return cls("sphere", center=tuple(map(float, center)), radius=float(radius))

    @property
    def kind(self) -> int:
        return 0 if self.shape == "box" else 1

    @property
    def params(self) -> np.ndarray:
        if self.shape == "box":
            return np.array(self.lower + self.upper, dtype=float)
        return np.array(tuple(self.center) + (self.radius, 0.0, 0.0), dtype=float)

    @property
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.shape == "box":
            return np.array(self.lower, float), np.array(self.upper, float)
        c = np.array(self.center, float)
        return c - self.radius, c + self.radius

    @property
    def diameter(self) -> float:
        lo, hi = self.bounding_box
        if self.shape == "box":
            return float(np.linalg.norm(hi - lo))
        return 2.0 * self.radius

    @property
    def volume(self) -> float:
        if self.shape == "box":
            return float(np.prod(np.subtract(self.upper, self.lower)))
        return 4.0 / 3.0 * np.pi * self.radius ** 3

    def contains(self, r) -> np.ndarray:
        """Open-set membership; vectorised over leading axes."""
        r = np.asarray(r, float)
        tol = BOUNDARY_TOL * self.diameter
        if self.shape == "box":
            lo = np.asarray(self.lower) + tol
            hi = np.asarray(self.upper) - tol
            return np.all((r > lo) & (r < hi), axis=-1)
        d = np.linalg.norm(r - np.asarray(self.center), axis=-1)
        return d < self.radius - tol

    def exit_time(self, r, v) -> float:
        """Time for ``r + v t`` to leave the domain."""
        from . import _kernels

        r = np.asarray(r, float)
        v = np.asarray(v, float)
        return float(_kernels.exit_time(self.kind, self.params, r[0], r[1], r[2], v[0], v[1], v[2]))

    def sample_uniform(self, n: int, rng) -> np.ndarray:
        lo, hi = self.bounding_box
        out = np.empty((0, 3))
        while out.shape[0] < n:
            pts = rng.uniform(lo, hi, size=(2 * (n - out.shape[0]) + 8, 3))
            out = np.vstack([out, pts[self.contains(pts)]])
        return out[:n]


@dataclass(frozen=True)
class VelocityKernel:
    """Isotropic outgoing-direction kernel with a speed distribution.

    ``kind="histogram"``: speed bins ``edges`` with ``density`` per unit speed;
    each bin is uniform in speed.  ``kind="shells"``: components
    ``shells=[(lo, hi), ...]`` with masses ``weights``, each uniform in
    velocity-space volume (``lo == hi`` gives a single speed).
    """

    kind: str
    edges: tuple = ()
    density: tuple = ()
    shells: tuple = ()
    weights: tuple = ()
    declared_mass: float | None = None

    def __post_init__(self):
        if self.kind == "histogram":
            e = np.asarray(self.edges, float)
            d = np.asarray(self.density, float)
            if e.ndim != 1 or e.size < 2 or d.size != e.size - 1:
                raise ConfigError("histogram kernel needs len(density) == len(edges) - 1")
            if np.any(np.diff(e) <= 0):
                raise ConfigError("histogram kernel edges must be strictly increasing")
            if np.any(d < 0) or not np.all(np.isfinite(d)):
                raise ConfigError("histogram kernel densities must be finite and >= 0")
        elif self.kind == "shells":
            s = np.asarray(self.shells, float).reshape(-1, 2)
            w = np.asarray(self.weights, float)
            if s.shape[0] == 0 or w.size != s.shape[0]:
                raise ConfigError("shell kernel needs one weight per shell")
            if np.any(s[:, 1] < s[:, 0]):
                raise ConfigError("shell kernel needs lo <= hi for every shell")
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ConfigError("shell kernel weights must be finite and >= 0")
        else:
            raise ConfigError(f"unknown kernel type {self.kind!r}")

    @classmethod
    def isotropic_shell(cls, speed_lo, speed_hi=None, mass=1.0):
        hi = speed_lo if speed_hi is None else speed_hi
        return cls("shells", shells=((float(speed_lo), float(hi)),), weights=(float(mass),))

    @classmethod
    def histogram(cls, edges, density):
        return cls("histogram", edges=tuple(map(float, edges)), density=tuple(map(float, density)))

    def components(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(kind, lo, hi, mass) per component; kind 0 uniform in speed, 1 uniform in volume."""
        if self.kind == "histogram":
            e = np.asarray(self.edges, float)
            d = np.asarray(self.density, float)
            return np.zeros(d.size, int), e[:-1], e[1:], d * np.diff(e)
        s = np.asarray(self.shells, float).reshape(-1, 2)
        return np.ones(s.shape[0], int), s[:, 0], s[:, 1], np.asarray(self.weights, float)

    @property
    def mass(self) -> float:
        return float(self.components()[3].sum())

    def quadrature_mass(self, order: int = 8) -> float:
        """Integral of the velocity-space density over V by Gauss-Legendre in speed."""
        x, w = np.polynomial.legendre.leggauss(order)
        total = 0.0
        for kind, lo, hi, m in zip(*self.components()):
            if hi == lo:
                total += m
                continue
            s = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
            rho = self.speed_density(s, component=(kind, lo, hi, m))
            total += 0.5 * (hi - lo) * np.sum(w * 4.0 * np.pi * s ** 2 * rho)
        return float(total)

    def speed_density(self, s, component=None):
        """Velocity-space density at speed ``s`` (per unit velocity volume)."""
        s = np.asarray(s, float)
        comps = [component] if component is not None else zip(*self.components())
        out = np.zeros_like(s)
        for kind, lo, hi, m in comps:
            if hi == lo:
                continue
            inside = (s >= lo) & (s <= hi)
            if kind == 0:
                val = m / ((hi - lo) * 4.0 * np.pi * np.maximum(s, 1e-300) ** 2)
            else:
                val = m / (4.0 / 3.0 * np.pi * (hi ** 3 - lo ** 3)) * np.ones_like(s)
            out = out + np.where(inside, val, 0.0)
        return out

    def covers(self, v_min: float, v_max: float) -> bool:
        """True when the density is positive everywhere on [v_min, v_max]."""
        kinds, lo, hi, m = self.components()
        if v_min == v_max:
            return bool(np.any((lo <= v_min) & (hi >= v_max) & (m > 0)))
        segs = sorted((a, b) for a, b, w in zip(lo, hi, m) if w > 0 and b > a)
        reach = v_min
        for a, b in segs:
            if a > reach:
                return False
            reach = max(reach, b)
        return reach >= v_max

    def inf_density(self, v_min: float, v_max: float) -> float:
        if not self.covers(v_min, v_max):
            return 0.0
        if v_min == v_max:
            return float("inf")
        s = np.linspace(v_min, v_max, 257)
        return float(self.speed_density(s).min())

    def sup_density(self) -> float:
        kinds, lo, hi, m = self.components()
        if np.any((hi == lo) & (m > 0)):
            return float("inf")
        pts = np.concatenate([lo, hi])
        return float(self.speed_density(pts).max()) if pts.size else 0.0

    def scaled(self, factor: float) -> "VelocityKernel":
        if self.kind == "histogram":
            return VelocityKernel("histogram", edges=self.edges,
                                  density=tuple(d * factor for d in self.density))
        return VelocityKernel("shells", shells=self.shells,
                              weights=tuple(w * factor for w in self.weights))


@dataclass(frozen=True)
class OffspringLaw:
    pmf: tuple

    def __post_init__(self):
        p = np.asarray(self.pmf, float)
        if p.ndim != 1 or p.size < 2:
            raise ConfigError("offspring pmf needs at least p_0 and p_1")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ConfigError(f"offspring pmf must be nonnegative and sum to 1 (sum={p.sum()!r})")
        object.__setattr__(self, "pmf", tuple(float(x) for x in p))

    @property
    def mean(self) -> float:
        return float(np.dot(np.arange(len(self.pmf)), self.pmf))

    @property
    def support_max(self) -> int:
        nz = np.nonzero(np.asarray(self.pmf) > 0)[0]
        return int(nz[-1]) if nz.size else 0

    def cdf(self, n_max: int) -> np.ndarray:
        p = np.zeros(n_max + 1)
        k = min(len(self.pmf), n_max + 1)
        p[:k] = self.pmf[:k]
        c = np.cumsum(p)
        c[-1] = 1.0
        return c


@dataclass(frozen=True)
class Cell:
    lower: tuple
    upper: tuple
    sigma_s: tuple  # one per speed band
    sigma_f: tuple
    pi_s: tuple  # VelocityKernel per band
    pi_f: tuple
    offspring: tuple  # OffspringLaw per band

    def mean_yield(self, band: int) -> float:
        return self.pi_f[band].mass


class Tables(NamedTuple):
    dom_kind: int
    dom_par: np.ndarray
    eps_len: float
    vmin: float
    vmax: float
    band_edges: np.ndarray
    cell_lo: np.ndarray
    cell_hi: np.ndarray
    sig_s: np.ndarray
    sig_f: np.ndarray
    yield_m: np.ndarray
    off_cdf: np.ndarray
    n_max: int
    kstart: np.ndarray
    kcount: np.ndarray
    kkind: np.ndarray
    klo: np.ndarray
    khi: np.ndarray
    kcdf: np.ndarray


@dataclass
class AssumptionReport:
    h1: bool
    h2: bool
    h3: bool
    h3star: bool
    h4: bool
    h5: bool
    n_max: int
    notes: list = field(default_factory=list)

    def holds(self, name: str) -> bool:
        return getattr(self, name.lower().replace("*", "star"))

    def as_dict(self) -> dict:
        return {"H1": self.h1, "H2": self.h2, "H3": self.h3, "H3*": self.h3star,
                "H4": self.h4, "H5": self.h5, "N_max": self.n_max}

    def _line(self, names):
        mark = {True: "✓", False: "✗"}
        d = self.as_dict()
        return " ".join(f"{k} {mark[d[k]]}" for k in names) + f" (N_max={self.n_max})"

    def __str__(self):
        return self._line(("H1", "H2", "H3*", "H4"))

    def full(self) -> str:
        return self._line(("H1", "H2", "H3", "H3*", "H4", "H5"))


@dataclass(frozen=True)
class MaterialModel:
    domain: ConvexDomain
    velocities: VelocitySet
    cells: tuple
    n_max: int
    strict_positivity: bool = False
    assume_h3star: bool = False
    sigma_bound: float | None = None
    density_bound: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "report", validate(self))

    # -- lookups ---------------------------------------------------------
    def cell_index(self, r) -> int:
        r = np.asarray(r, float)
        for i, c in enumerate(self.cells):
            if np.all(r >= c.lower) and np.all(r < c.upper):
                return i
        for i, c in enumerate(self.cells):
            if np.all(r >= c.lower) and np.all(r <= c.upper):
                return i
        raise DomainError(f"position {r.tolist()} lies in no cell")

    def locate(self, p: PhasePoint) -> tuple[int, int]:
        if not self.domain.contains(p.r):
            raise DomainError(f"position {p.r.tolist()} is outside the domain")
        if not self.velocities.contains(p.v):
            raise DomainError(f"speed {p.speed} is outside [v_min, v_max]")
        return self.cell_index(p.r), self.velocities.band(p.speed)

    @cached_property
    def tables(self) -> Tables:
        return _build_tables(self)


def _build_tables(model: MaterialModel) -> Tables:
    nc = len(model.cells)
    nb = model.velocities.n_bands
    sig_s = np.array([c.sigma_s for c in model.cells], float).reshape(nc, nb)
    sig_f = np.array([c.sigma_f for c in model.cells], float).reshape(nc, nb)
    ym = np.array([[c.pi_f[b].mass for b in range(nb)] for c in model.cells], float)
    cdf = np.array([[c.offspring[b].cdf(model.n_max) for b in range(nb)] for c in model.cells])
    kstart = np.zeros((2, nc, nb), np.int64)
    kcount = np.zeros((2, nc, nb), np.int64)
    kinds, los, his, cdfs = [], [], [], []
    for which, attr in enumerate(("pi_s", "pi_f")):
        for ci, cell in enumerate(model.cells):
            for b in range(nb):
                kind, lo, hi, m = getattr(cell, attr)[b].components()
                kstart[which, ci, b] = len(kinds)
                kcount[which, ci, b] = len(kind)
                total = m.sum()
                c = np.cumsum(m) / total if total > 0 else np.linspace(1, 1, len(m))
                c[-1] = 1.0
                kinds.extend(kind)
                los.extend(lo)
                his.extend(hi)
                cdfs.extend(c)
    lo = np.array([c.lower for c in model.cells], float)
    hi = np.array([c.upper for c in model.cells], float)
    return Tables(
        dom_kind=model.domain.kind,
        dom_par=model.domain.params,
        eps_len=BOUNDARY_TOL * model.domain.diameter,
        vmin=float(model.velocities.v_min),
        vmax=float(model.velocities.v_max),
        band_edges=np.array(model.velocities.band_edges, float),
        cell_lo=lo,
        cell_hi=hi,
        sig_s=sig_s,
        sig_f=sig_f,
        yield_m=ym,
        off_cdf=cdf,
        n_max=int(model.n_max),
        kstart=kstart,
        kcount=kcount,
        kkind=np.array(kinds, np.int64),
        klo=np.array(los, float),
        khi=np.array(his, float),
        kcdf=np.array(cdfs, float),
    )


def _check_partition(model: MaterialModel):
    lo, hi = model.domain.bounding_box
    boxes = []
    for i, c in enumerate(model.cells):
        a = np.maximum(np.asarray(c.lower, float), lo)
        b = np.minimum(np.asarray(c.upper, float), hi)
        if np.any(b <= a):
            raise ConfigError(f"cells[{i}] does not intersect the domain")
        boxes.append((a, b))
    total = sum(float(np.prod(b - a)) for a, b in boxes)
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            a = np.maximum(boxes[i][0], boxes[j][0])
            b = np.minimum(boxes[i][1], boxes[j][1])
            if np.all(b > a):
                raise ConfigError(f"cells[{i}] and cells[{j}] overlap")
    if abs(total - float(np.prod(hi - lo))) > 1e-9 * float(np.prod(hi - lo)):
        raise ConfigError("cells do not cover the domain's bounding box")


def validate(model: MaterialModel) -> AssumptionReport:
    """Check structural invariants (raise) and evaluate H1-H5 (report).

    Flags ``strict_positivity`` and ``assume_h3star`` turn the corresponding
    report entries into hard requirements.
    """
    vs = model.velocities
    nb = vs.n_bands
    if not model.cells:
        raise ConfigError("at least one cell is required")
    _check_partition(model)
    notes = []
    if model.n_max < 1:
        raise AssumptionError("H4: N_max must be >= 1")
    for i, cell in enumerate(model.cells):
        for name in ("sigma_s", "sigma_f", "pi_s", "pi_f", "offspring"):
            if len(getattr(cell, name)) != nb:
                raise ConfigError(f"cells[{i}].{name}: need one entry per speed band ({nb})")
        for b in range(nb):
            for kname in ("pi_s", "pi_f"):
                k = getattr(cell, kname)[b]
                q = k.quadrature_mass()
                if k.declared_mass is not None and abs(q - k.declared_mass) > MASS_TOL:
                    raise AssumptionError(
                        f"kernel mass mismatch: cells[{i}].{kname} declares {k.declared_mass} "
                        f"but integrates to {q:.12g}")
                kinds, lo, hi, m = k.components()
                if np.any((m > 0) & ((lo < vs.v_min - 1e-12) | (hi > vs.v_max + 1e-12))):
                    raise ConfigError(f"cells[{i}].{kname}: support leaves [v_min, v_max]")
            q = cell.pi_s[b].quadrature_mass()
            if abs(q - 1.0) > MASS_TOL:
                raise AssumptionError(
                    f"kernel mass mismatch: cells[{i}].pi_s integrates to {q:.12g}, expected 1")
            off = cell.offspring[b]
            if off.support_max > model.n_max:
                raise AssumptionError(
                    f"H4: p_{off.support_max} > 0 but N_max = {model.n_max}")
            m = cell.pi_f[b].quadrature_mass()
            if abs(m - off.mean) > MASS_TOL:
                raise AssumptionError(
                    f"kernel mass mismatch: cells[{i}].pi_f integrates to {m:.12g} "
                    f"but the offspring mean is {off.mean:.12g}")
            if not (m > 0):
                raise AssumptionError(f"cells[{i}]: mean yield m must be > 0")
            if m > model.n_max + MASS_TOL:
                raise AssumptionError(f"H4: mean yield {m} exceeds N_max = {model.n_max}")
            if cell.sigma_s[b] < 0 or cell.sigma_f[b] < 0:
                raise ConfigError(f"cells[{i}]: cross sections must be >= 0")

    sig = np.array([[c.sigma_s, c.sigma_f] for c in model.cells], float)
    h1 = bool(np.all(np.isfinite(sig)))
    if model.sigma_bound is not None and np.any(sig > model.sigma_bound):
        h1 = False
        notes.append("H1: a cross section exceeds sigma_bound")
    if model.density_bound is not None:
        for c in model.cells:
            for b in range(nb):
                if max(c.pi_s[b].sup_density(), c.pi_f[b].sup_density()) > model.density_bound:
                    h1 = False
                    notes.append("H1: a kernel density exceeds density_bound")
    if not h1:
        raise AssumptionError("H1: " + ("; ".join(notes) or "non-finite cross section"))

    def scat_pos(c, b):
        return c.sigma_s[b] > 0 and c.pi_s[b].covers(vs.v_min, vs.v_max)

    def fis_pos(c, b):
        return c.sigma_f[b] > 0 and c.pi_f[b].covers(vs.v_min, vs.v_max)

    def union_pos(c, b):
        if scat_pos(c, b) or fis_pos(c, b):
            return True
        kernels = []
        if c.sigma_s[b] > 0:
            kernels.append(c.pi_s[b])
        if c.sigma_f[b] > 0:
            kernels.append(c.pi_f[b])
        if not kernels:
            return False
        comps = [k.components() for k in kernels]
        merged = VelocityKernel("shells",
                                shells=tuple((a, bb) for kk in comps for a, bb in zip(kk[1], kk[2])),
                                weights=tuple(w for kk in comps for w in kk[3]))
        return merged.covers(vs.v_min, vs.v_max)

    h2 = all(union_pos(c, b) for c in model.cells for b in range(nb))
    h3 = any(all(fis_pos(c, b) for b in range(nb)) for c in model.cells)
    h3star = all(c.sigma_f[b] > 0 and c.pi_f[b].inf_density(vs.v_min, vs.v_max) > 0
                 for c in model.cells for b in range(nb))
    h5 = all(scat_pos(c, b) and fis_pos(c, b) for c in model.cells for b in range(nb))
    report = AssumptionReport(h1=h1, h2=h2, h3=h3, h3star=h3star, h4=True, h5=h5,
                              n_max=int(model.n_max), notes=notes)
    if model.assume_h3star and not h3star:
        raise AssumptionError("H3*: fission cross section not bounded below")
    if model.strict_positivity and not (h2 and h5):
        raise AssumptionError("H5: sigma_s pi_s > 0 and sigma_f pi_f > 0 fail on some cell")
    return report


def mean_yield(model: MaterialModel, p: PhasePoint) -> float:
    """Mean number of fission offspring ``m(r, v)``."""
    c, b = model.locate(p)
    return model.cells[c].mean_yield(b)


def beta(model: MaterialModel, p: PhasePoint) -> float:
    """Net branching rate ``sigma_f (m - 1)``; negative where fission loses neutrons."""
    c, b = model.locate(p)
    cell = model.cells[c]
    return cell.sigma_f[b] * (cell.mean_yield(b) - 1.0)


def homogeneous_cell(lower, upper, sigma_s, sigma_f, pi_s: VelocityKernel,
                     offspring: Sequence[float], pi_f_shape: VelocityKernel | None = None,
                     n_bands: int = 1) -> Cell:
    """A cell with the same data in every band; ``pi_f`` is ``pi_f_shape`` scaled to the offspring mean."""
    law = OffspringLaw(tuple(offspring))
    shape = pi_f_shape if pi_f_shape is not None else pi_s
    pi_f = shape.scaled(law.mean / shape.mass)
    return Cell(tuple(map(float, lower)), tuple(map(float, upper)),
                (float(sigma_s),) * n_bands, (float(sigma_f),) * n_bands,
                (pi_s,) * n_bands, (pi_f,) * n_bands, (law,) * n_bands)
