"""Deterministic one-speed slab reference for k.

The slab is discretised into ``n_x`` mesh cells and ``n_mu`` discrete
ordinates (double Gauss-Legendre, weights summing to 2).  For a unit fission
birth in each mesh cell the scattering problem is solved by source
iteration with a step-characteristic sweep; the resulting fission
production per birth gives a dense nonnegative matrix.  ``DiscreteTransport.matrix``
is the generation operator acting on importances (the analogue of
``-(T+S)^-1 F``); its dominant right eigenvector is the importance ``phi`` and
the left one is the fission-source shape ``phi_tilde``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
from numba import njit

from .config import scale_fission_yield
from .errors import ConfigError, ConvergenceError
from .phase import MaterialModel


@dataclass(frozen=True)
class SlabConfig:
    """Piecewise-constant one-speed slab on ``[edges[0], edges[-1]]``.

    Cross sections are macroscopic (per unit length): ``sigma_t`` total,
    ``sigma_s`` scatter and ``nu_sigma_f`` fission production.
    """

    edges: tuple
    sigma_t: tuple
    sigma_s: tuple
    nu_sigma_f: tuple
    left: str = "vacuum"
    right: str = "vacuum"

    def __post_init__(self):
        e = np.asarray(self.edges, float)
        n = e.size - 1
        if n < 1 or np.any(np.diff(e) <= 0):
            raise ConfigError("slab: edges must be strictly increasing with thickness > 0")
        for name in ("sigma_t", "sigma_s", "nu_sigma_f"):
            if len(getattr(self, name)) != n:
                raise ConfigError(f"slab: {name} needs one value per region")
        if np.any(np.asarray(self.sigma_s) > np.asarray(self.sigma_t) + 1e-15):
            raise ConfigError("slab: sigma_s exceeds sigma_t")
        for side in (self.left, self.right):
            if side not in ("vacuum", "reflective"):
                raise ConfigError("slab: boundaries are 'vacuum' or 'reflective'")

    @property
    def thickness(self) -> float:
        return float(self.edges[-1] - self.edges[0])

    @property
    def n_regions(self) -> int:
        return len(self.edges) - 1

    def scaled(self, s: float) -> "SlabConfig":
        return replace(self, nu_sigma_f=tuple(s * v for v in self.nu_sigma_f))

    @property
    def symmetric(self) -> bool:
        def mirrored(a):
            return np.allclose(a, a[::-1])
        e = np.asarray(self.edges)
        return (mirrored(np.diff(e)) and mirrored(np.asarray(self.sigma_t))
                and mirrored(np.asarray(self.sigma_s)) and mirrored(np.asarray(self.nu_sigma_f))
                and self.left == self.right)


def slab_from_model(model: MaterialModel, left="vacuum", right="vacuum") -> SlabConfig:
    """One-speed slab equivalent of a model whose data vary only along x.

    Rates per unit time become per unit length on dividing by the speed.
    Every cell must span the domain's full y and z extent.
    """
    vs = model.velocities
    if not vs.single_speed:
        raise ConfigError("oracle needs a single-speed model (v_min == v_max)")
    if model.domain.shape != "box":
        raise ConfigError("oracle needs a box domain")
    lo, hi = model.domain.bounding_box
    v = vs.v_max
    cells = sorted(model.cells, key=lambda c: c.lower[0])
    edges = [max(cells[0].lower[0], lo[0])]
    st, ss, nsf = [], [], []
    for c in cells:
        if not (c.lower[1] <= lo[1] and c.lower[2] <= lo[2] and c.upper[1] >= hi[1]
                and c.upper[2] >= hi[2]):
            raise ConfigError("oracle needs cells that span the full y-z extent")
        if abs(max(c.lower[0], lo[0]) - edges[-1]) > 1e-12 * (hi[0] - lo[0]):
            raise ConfigError("oracle needs cells that tile the x axis")
        edges.append(min(c.upper[0], hi[0]))
        st.append((c.sigma_s[0] + c.sigma_f[0]) / v)
        ss.append(c.sigma_s[0] / v)
        nsf.append(c.sigma_f[0] * c.mean_yield(0) / v)
    return SlabConfig(tuple(edges), tuple(st), tuple(ss), tuple(nsf), left, right)


def double_gauss(n_mu: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre on each half-range; ``n_mu`` even, weights sum to 2."""
    if n_mu < 2 or n_mu % 2:
        raise ValueError("n_mu must be even and >= 2")
    x, w = np.polynomial.legendre.leggauss(n_mu // 2)
    mu = 0.5 * (x + 1.0)
    w = 0.5 * w
    return np.concatenate([-mu[::-1], mu]), np.concatenate([w[::-1], w])


@njit(cache=True)
def _sweep(sig_t, dx, mu_pos, w_pos, q, refl_left, refl_right, inc):
    """One transport sweep for isotropic emission densities ``q`` (n_x, ncol).

    Returns cell-averaged scalar flux.  ``inc`` holds the incoming angular
    fluxes at (left, right) for reflective faces from the previous sweep and
    is updated in place.
    """
    nx, ncol = q.shape
    nm = mu_pos.shape[0]
    phi = np.zeros((nx, ncol))
    for a in range(nm):
        mu = mu_pos[a]
        wt = w_pos[a]
        # rightward
        for c in range(ncol):
            psi = inc[0, a, c] if refl_left else 0.0
            for i in range(nx):
                s = 0.5 * q[i, c]
                tau = sig_t[i] * dx[i] / mu
                if tau > 1e-8:
                    e = np.exp(-tau)
                    out = psi * e + s / sig_t[i] * (1.0 - e)
                    avg = s / sig_t[i] + (psi - out) / tau
                else:
                    out = psi + s * dx[i] / mu
                    avg = 0.5 * (psi + out)
                phi[i, c] += wt * avg
                psi = out
            inc[2, a, c] = psi
        # leftward
        for c in range(ncol):
            psi = inc[1, a, c] if refl_right else 0.0
            for i in range(nx - 1, -1, -1):
                s = 0.5 * q[i, c]
                tau = sig_t[i] * dx[i] / mu
                if tau > 1e-8:
                    e = np.exp(-tau)
                    out = psi * e + s / sig_t[i] * (1.0 - e)
                    avg = s / sig_t[i] + (psi - out) / tau
                else:
                    out = psi + s * dx[i] / mu
                    avg = 0.5 * (psi + out)
                phi[i, c] += wt * avg
                psi = out
            inc[3, a, c] = psi
    return phi


def _solve(sig_t, sig_s, dx, mu_pos, w_pos, src, refl, tol, max_inner):
    """Source iteration ``phi = sweep(src + sigma_s phi)`` to relative tolerance ``tol``."""
    nx, ncol = src.shape
    inc = np.zeros((4, mu_pos.size, ncol))
    phi = np.zeros_like(src)
    for it in range(max_inner):
        q = src + sig_s[:, None] * phi
        new = _sweep(sig_t, dx, mu_pos, w_pos, q, refl[0], refl[1], inc)
        # reflective faces: the outgoing flux at a face comes back in
        if refl[0]:
            inc[0] = inc[3]
        if refl[1]:
            inc[1] = inc[2]
        change = np.max(np.abs(new - phi)) / max(np.max(np.abs(new)), 1e-300)
        phi = new
        if change < tol:
            return phi, it + 1
    raise ConvergenceError(
        f"source iteration did not converge in {max_inner} sweeps (scattering ratio near 1?)")


@dataclass
class DiscreteTransport:
    slab: SlabConfig
    n_x: int
    n_mu: int
    tol: float = 1e-10
    max_inner: int = 100_000
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        e = np.asarray(self.slab.edges, float)
        widths = np.diff(e)
        # mesh cells per region proportional to width, at least one each
        counts = np.maximum(1, np.round(widths / widths.sum() * self.n_x).astype(int))
        while counts.sum() > self.n_x and counts.max() > 1:
            counts[np.argmax(counts)] -= 1
        while counts.sum() < self.n_x:
            counts[np.argmax(widths / counts)] += 1
        mesh = [np.linspace(e[r], e[r + 1], counts[r] + 1)[:-1] for r in range(len(widths))]
        self.x_edges = np.concatenate(mesh + [e[-1:]])
        self.region = np.repeat(np.arange(len(widths)), counts)
        self.dx = np.diff(self.x_edges)
        self.sig_t = np.asarray(self.slab.sigma_t, float)[self.region]
        self.sig_s = np.asarray(self.slab.sigma_s, float)[self.region]
        self.nu_sig_f = np.asarray(self.slab.nu_sigma_f, float)[self.region]
        self.mu, self.w = double_gauss(self.n_mu)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.x_edges[:-1] + self.x_edges[1:])

    @cached_property
    def response(self) -> np.ndarray:
        """``R[i, j]``: track length in cell i per neutron born uniformly in cell j."""
        half = self.n_mu // 2
        mu_pos = np.ascontiguousarray(self.mu[half:])
        w_pos = np.ascontiguousarray(self.w[half:])
        src = np.diag(1.0 / self.dx)
        refl = (self.slab.left == "reflective", self.slab.right == "reflective")
        phi, its = _solve(self.sig_t, self.sig_s, self.dx, mu_pos, w_pos, src, refl,
                          self.tol, self.max_inner)
        self.info["inner_iterations"] = its
        return phi * self.dx[:, None]

    @property
    def forward(self) -> np.ndarray:
        """``F[i, j]``: expected fission neutrons born in cell i per birth in cell j."""
        return self.nu_sig_f[:, None] * self.response

    @property
    def matrix(self) -> np.ndarray:
        """Generation operator on importances: ``(M g)_j = E_j[<g, next generation>]``."""
        return self.forward.T

    def apply(self, g) -> np.ndarray:
        return self.matrix @ np.asarray(g, float)

    def apply_transpose(self, x) -> np.ndarray:
        return self.forward @ np.asarray(x, float)

    def scaled(self, s: float) -> "DiscreteTransport":
        """Same transport, fission production times ``s`` (reuses the response)."""
        out = DiscreteTransport(self.slab.scaled(s), self.n_x, self.n_mu, self.tol, self.max_inner)
        if "response" in self.__dict__:
            out.__dict__["response"] = self.response
        return out


def assemble(slab: SlabConfig, n_x: int = 200, n_mu: int = 16, tol: float = 1e-10) -> DiscreteTransport:
    op = DiscreteTransport(slab, int(n_x), int(n_mu), tol)
    op.response  # noqa: B018 - build eagerly so errors surface here
    return op


@dataclass(frozen=True)
class OracleResult:
    k: float
    phi: np.ndarray
    phi_tilde: np.ndarray
    iterations: int
    x_edges: np.ndarray | None = None

    def rayleigh(self, matrix) -> float:
        return float(self.phi_tilde @ matrix @ self.phi / (self.phi_tilde @ self.phi))

    def to_csv(self, path) -> Path:
        e = self.x_edges
        np.savetxt(path, np.column_stack([e[:-1], e[1:], self.phi, self.phi_tilde]), delimiter=",",
                   header="x_lo,x_hi,phi,phi_tilde", comments="", fmt="%.17g")
        return Path(path)


def _power(A, tol, max_iter):
    n = A.shape[0]
    x = np.full(n, 1.0 / np.sqrt(n))
    k_old = 0.0
    for it in range(1, max_iter + 1):
        y = A @ x
        k = float(x @ y / (x @ x))
        norm = np.linalg.norm(y)
        if norm == 0:
            raise ConvergenceError("operator annihilated the iterate")
        y = y / norm
        if it > 1 and abs(k - k_old) <= tol * abs(k) and np.max(np.abs(y - x)) <= np.sqrt(tol):
            return k, y, it
        x, k_old = y, k
    raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations")


def power_iterate(op, tol: float = 1e-12, max_iter: int = 200_000) -> OracleResult:
    """Dominant eigenpair by power iteration on ``op`` and on its transpose.

    ``op`` is a ``DiscreteTransport`` or a square array.  ``phi`` is scaled to
    max 1 and ``phi_tilde`` to unit sum.
    """
    A = op.matrix if hasattr(op, "matrix") else np.asarray(op, float)
    k, phi, it1 = _power(A, tol, max_iter)
    k2, phit, it2 = _power(A.T, tol, max_iter)
    phi = phi / phi[np.argmax(np.abs(phi))]
    phit = phit / phit.sum()
    edges = getattr(op, "x_edges", None)
    return OracleResult(k, phi, phit, max(it1, it2), edges)


@dataclass(frozen=True)
class TuneResult:
    scale: float
    k: float
    slab: SlabConfig
    model: MaterialModel | None
    iterations: int


def tune_to_k(slab_config, target_k: float, tol: float = 1e-3, n_x: int = 200, n_mu: int = 16,
              model: MaterialModel | None = None, bracket=None, max_iter: int = 200) -> TuneResult:
    """Bisect on a fission-production scale factor until the oracle k hits ``target_k``.

    ``slab_config`` may be a ``SlabConfig`` or a ``MaterialModel`` (then the
    rescaled model is returned too, with its yields scaled via
    :func:`scale_fission_yield`).
    """
    if not target_k > 0:
        raise ValueError("target_k must be > 0")
    if isinstance(slab_config, MaterialModel):
        model = slab_config
        slab_config = slab_from_model(model)
    base = assemble(slab_config, n_x, n_mu)
    k0 = power_iterate(base).k
    if bracket is None:
        hi = 2.0 * target_k / k0
        if model is not None:
            mmax = max(c.mean_yield(b) for c in model.cells for b in range(len(c.sigma_f)))
            hi = min(hi, model.n_max / mmax)
        bracket = (0.0, hi)
    lo, hi = bracket

    def k_of(s):
        return power_iterate(base.scaled(s)).k

    k_hi = k_of(hi)
    if k_hi < target_k - tol:
        raise ValueError(f"target k={target_k} unreachable: k={k_hi:.6g} at the bracket end")
    s, k = hi, k_hi
    for it in range(1, max_iter + 1):
        s = 0.5 * (lo + hi)
        k = k_of(s)
        if abs(k - target_k) <= 0.1 * tol:
            break
        if k < target_k:
            lo = s
        else:
            hi = s
    else:
        raise ConvergenceError("bisection did not converge")
    scaled_model = scale_fission_yield(model, s) if model is not None else None
    return TuneResult(s, k, slab_config.scaled(s), scaled_model, it)
