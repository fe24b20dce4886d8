"""Eigenvalue and eigenfunction estimators built on the branching process and the walk.

* k by census power iteration and by superhistory powering
* k from the log growth of ``Psi_n[1]`` (weighted walk)
* c by collision-generation power iteration
* lambda from the log growth of ``psi_t[1]`` (weighted walk)
* the Cesaro eigenfunction pairing, the W_n martingale and a convergence
  diagnostic for the source transient
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import curve_fit

from . import nbp
from .errors import ExtinctionError
from .nbp import GenerationCensus, next_collision_generation, next_fission_generation
from .nrw import psi_n_curve, psi_t_weights
from .phase import MaterialModel, PhasePoint
from .results import EigenEstimate
from .transport import as_generator

# batch means: at least N_BATCHES batches, about BATCH_LEN cycles each for long runs
N_BATCHES = 10
BATCH_LEN = 10
MAX_BATCHES = 50


# ---------------------------------------------------------------- histograms

@dataclass
class PhaseHistogram:
    """Tallies on a regular grid over the bounding box times speed bins."""

    edges: tuple  # (x_edges, y_edges, z_edges, s_edges)
    value: np.ndarray
    variance: np.ndarray
    normalization: str = "probability"

    @classmethod
    def grid(cls, model: MaterialModel, shape=(10, 1, 1), speed_bins=None,
             normalization="probability"):
        lo, hi = model.domain.bounding_box
        edges = [np.linspace(lo[a], hi[a], shape[a] + 1) for a in range(3)]
        s = np.asarray(model.velocities.band_edges if speed_bins is None else speed_bins, float)
        edges.append(s)
        dims = tuple(len(e) - 1 for e in edges)
        return cls(tuple(edges), np.zeros(dims), np.zeros(dims), normalization)

    @property
    def shape(self):
        return self.value.shape

    def index(self, pos, vel) -> np.ndarray:
        """Flat bin index of each row (clipped onto the grid)."""
        pos = np.asarray(pos, float).reshape(-1, 3)
        speed = np.linalg.norm(np.asarray(vel, float).reshape(-1, 3), axis=1)
        idx = []
        for a, e in enumerate(self.edges):
            x = pos[:, a] if a < 3 else speed
            idx.append(np.clip(np.searchsorted(e, x, side="right") - 1, 0, len(e) - 2))
        return np.ravel_multi_index(tuple(idx), self.shape)

    def evaluate(self, pos, vel) -> np.ndarray:
        return self.value.ravel()[self.index(pos, vel)]

    __call__ = evaluate

    def centers(self, axis=0) -> np.ndarray:
        e = self.edges[axis]
        return 0.5 * (e[:-1] + e[1:])

    def to_csv(self, path) -> Path:
        cols = []
        grids = np.meshgrid(*[np.arange(len(e) - 1) for e in self.edges], indexing="ij")
        for a, e in enumerate(self.edges):
            i = grids[a].ravel()
            cols += [e[i], e[i + 1]]
        data = np.column_stack(cols + [self.value.ravel(), self.variance.ravel()])
        header = "x_lo,x_hi,y_lo,y_hi,z_lo,z_hi,s_lo,s_hi,value,variance"
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")
        return Path(path)


@dataclass
class MartingaleTrace:
    values: np.ndarray  # (replicates, n + 1)
    k: float
    phi: object = None

    @property
    def mean(self) -> np.ndarray:
        return self.values.mean(axis=0)

    @property
    def std_error(self) -> np.ndarray:
        r = self.values.shape[0]
        return self.values.std(axis=0, ddof=1) / np.sqrt(r) if r > 1 else np.zeros(self.values.shape[1])

    def ci(self, n_sigma=3.0):
        return self.mean - n_sigma * self.std_error, self.mean + n_sigma * self.std_error

    def exceed_prob(self, eps: float) -> np.ndarray:
        return (self.values > eps).mean(axis=0)


@dataclass
class PairingResult:
    matrix: np.ndarray
    std_error: np.ndarray
    starts: list
    n_generations: int
    extras: dict = field(default_factory=dict)
    # covariance of the entries of each row (rows share histories, rows are independent)
    row_cov: np.ndarray | None = None

    def rank1_residuals(self):
        """``(M[a,g] M[b,h] - M[a,h] M[b,g]) / sigma`` for every 2x2 minor.

        ``sigma`` is the delta-method error; entries of one row are correlated
        through shared histories, which ``row_cov`` accounts for when present.
        """
        M = self.matrix
        na, ng = M.shape
        C = self.row_cov
        if C is None:
            C = np.zeros((na, ng, ng))
            for a in range(na):
                C[a] = np.diag(self.std_error[a] ** 2)
        out = []
        for a in range(na):
            for b in range(a + 1, na):
                for g in range(ng):
                    for h in range(g + 1, ng):
                        d = M[a, g] * M[b, h] - M[a, h] * M[b, g]
                        ga = np.array([M[b, h], -M[b, g]])   # d/d(M[a,g], M[a,h])
                        gb = np.array([-M[a, h], M[a, g]])   # d/d(M[b,g], M[b,h])
                        ia = np.ix_([g, h], [g, h])
                        var = ga @ C[a][ia] @ ga + gb @ C[b][ia] @ gb
                        out.append(d / np.sqrt(var) if var > 0 else 0.0)
        return np.array(out)


# ---------------------------------------------------------------- statistics

def batch_means(x, n_batches=None) -> tuple[float, float]:
    """Mean and batch-means standard error of a cycle sequence."""
    x = np.asarray(x, float)
    n = x.size
    if n == 0:
        return float("nan"), float("nan")
    if n_batches is None:
        n_batches = int(np.clip(n // BATCH_LEN, N_BATCHES, MAX_BATCHES))
    b = min(n_batches, n)
    if b < 2:
        return float(x.mean()), 0.0
    size = n // b
    means = x[: b * size].reshape(b, size).mean(axis=1)
    return float(x.mean()), float(means.std(ddof=1) / np.sqrt(b))


def lag1_autocorrelation(x) -> float:
    x = np.asarray(x, float)
    if x.size < 3:
        return float("nan")
    d = x - x.mean()
    den = np.dot(d, d)
    return float(np.dot(d[:-1], d[1:]) / den) if den > 0 else 0.0


def _log_slope(times, samples, lo, hi):
    """OLS slope of ``log(mean)`` against ``times`` on ``lo <= t <= hi``.

    ``samples`` holds one row per history.  The standard error comes from the
    delta method with the full covariance between time points.
    """
    sel = (times >= lo) & (times <= hi)
    t = times[sel]
    w = samples[:, sel]
    mean = w.mean(axis=0)
    if t.size < 2 or np.any(mean <= 0):
        raise ExtinctionError("tail window empty: every history died before the window")
    h = w.shape[0]
    y = np.log(mean)
    c = (t - t.mean()) / np.sum((t - t.mean()) ** 2)
    slope = float(np.dot(c, y))
    cov = np.atleast_2d(np.cov(w, rowvar=False)) / h
    g = c / mean
    var = float(g @ cov @ g)
    return slope, np.sqrt(max(var, 0.0)), t, y


# ---------------------------------------------------------------- power iteration

def _resample(census: GenerationCensus, n: int, gen) -> tuple[GenerationCensus, np.ndarray]:
    idx = np.sort(gen.integers(0, census.size, size=n))
    return census.take(idx), idx


@dataclass
class _CycleRun:
    k: np.ndarray
    sources: list
    ancestry: list
    extinct_at: int | None


def _run_cycles(model, source, n_cycles, L, population, gen, keep_sources=False, cap=nbp.POPULATION_CAP):
    census, _ = _resample(source, population, gen) if source.size != population else (source, None)
    census = GenerationCensus(pos=census.pos, vel=census.vel, key=census.key, ctr=census.ctr,
                              root=np.arange(census.size), parent=np.full(census.size, -1),
                              weight=census.weight, generation=0)
    ks, sources, ancestry = [], [], []
    extinct = None
    for cyc in range(n_cycles):
        if keep_sources:
            sources.append((census.pos.copy(), census.vel.copy()))
        start = census.size
        cur = census.take(np.arange(census.size))
        cur.root = np.arange(cur.size)
        for _ in range(L):
            cur = next_fission_generation(model, None, cur, gen, cap)
            if cur.size == 0:
                break
        n_out = cur.size
        ks.append((n_out / start) ** (1.0 / L))
        if n_out == 0:
            extinct = cyc
            break
        census, idx = _resample(cur, population, gen)
        ancestry.append(cur.root[idx])
        census.generation = cyc + 1
    return _CycleRun(np.array(ks), sources, ancestry, extinct)


def _tally_eta(hist, sources):
    counts = []
    for pos, vel in sources:
        counts.append(np.bincount(hist.index(pos, vel), minlength=hist.value.size) / pos.shape[0])
    counts = np.array(counts)
    hist.value = counts.mean(axis=0).reshape(hist.shape)
    hist.variance = (counts.var(axis=0, ddof=1) / len(counts) if len(counts) > 1
                     else np.zeros(hist.value.size)).reshape(hist.shape)
    hist.normalization = "probability"
    s = hist.value.sum()
    if s > 0:
        hist.value = hist.value / s
    return hist


def _tally_phi(hist, sources, ancestry, lag, eta):
    """Importance from descendant counts ``lag`` cycles later."""
    nb = hist.value.size
    tot = np.zeros(nb)
    tot2 = np.zeros(nb)
    cnt = np.zeros(nb)
    for c in range(len(sources)):
        if c + lag > len(ancestry):
            break
        n = sources[c][0].shape[0]
        anc = np.arange(ancestry[c + lag - 1].size)
        for j in range(c + lag - 1, c - 1, -1):
            anc = ancestry[j][anc]
        desc = np.bincount(anc, minlength=n).astype(float)
        desc *= n / desc.sum()
        b = hist.index(*sources[c])
        tot += np.bincount(b, weights=desc, minlength=nb)
        tot2 += np.bincount(b, weights=desc ** 2, minlength=nb)
        cnt += np.bincount(b, minlength=nb)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(cnt > 0, tot / cnt, 0.0)
        var = np.where(cnt > 1, (tot2 / np.maximum(cnt, 1) - mean ** 2) / np.maximum(cnt - 1, 1), 0.0)
    norm = float(np.dot(eta.value.ravel(), mean))
    if norm > 0:
        mean = mean / norm
        var = var / norm ** 2
    hist.value = mean.reshape(hist.shape)
    hist.variance = var.reshape(hist.shape)
    hist.normalization = "pointwise"
    return hist


def power_iteration_k(model: MaterialModel, domain, source: GenerationCensus, n_inactive: int = 20,
                      n_active: int = 100, population_target: int = 10_000, rng=None,
                      bins=(10, 1, 1), phi_lag: int = 10, cap=nbp.POPULATION_CAP):
    """Census power iteration for k.

    Each cycle moves the source to its next fission generation; the cycle
    estimate is offspring / source size, after which the offspring are
    resampled uniformly with replacement back to ``population_target``.
    Returns ``(EigenEstimate, phi, eta)`` where ``eta`` is the stationary
    source distribution and ``phi`` the mean number of descendants
    ``phi_lag`` cycles later, both binned on ``bins``.
    """
    if population_target < 100:
        raise ValueError("population_target must be >= 100")
    if n_active < 1:
        raise ValueError("n_active must be >= 1")
    gen = as_generator(rng)
    run = _run_cycles(model, source, n_inactive + n_active, 1, population_target, gen,
                      keep_sources=True, cap=cap)
    return _finish_power(model, run, n_inactive, n_active, bins, phi_lag, "census-ratio", 1)


def _finish_power(model, run, n_inactive, n_active, bins, phi_lag, method, L):
    eta = PhaseHistogram.grid(model, bins)
    phi = PhaseHistogram.grid(model, bins, normalization="pointwise")
    extras = {"cycle_k": run.k, "L": L}
    if run.extinct_at is not None:
        extras["extinct_cycle"] = run.extinct_at
        est = EigenEstimate(0.0, 0.0, max(1, len(run.k) - n_inactive), n_inactive, method,
                            extinct=True, extras=extras)
        return est, phi, eta
    active = run.k[n_inactive:]
    mean, se = batch_means(active)
    extras["lag1"] = lag1_autocorrelation(active)
    est = EigenEstimate(mean, se, active.size, n_inactive, method, extras=extras)
    if run.sources:
        src = run.sources[n_inactive:]
        _tally_eta(eta, src)
        _tally_phi(phi, src, run.ancestry[n_inactive:], phi_lag, eta)
    return est, phi, eta


def superhistory_k(model: MaterialModel, domain, source: GenerationCensus, L: int = 10,
                   cycles: int = 50, population_target: int = 10_000, rng=None,
                   n_inactive: int = 2, cap=nbp.POPULATION_CAP) -> EigenEstimate:
    """Superhistory powering: ``L`` unnormalised generations per cycle.

    The cycle estimate is ``(generation-L count / source size) ** (1 / L)``.
    With ``L = 1`` this is exactly the census power iteration.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    gen = as_generator(rng)
    run = _run_cycles(model, source, n_inactive + cycles, L, population_target, gen, cap=cap)
    est, _, _ = _finish_power(model, run, n_inactive, cycles, (1, 1, 1), 1, "superhistory", L)
    return est


def collision_c_estimate(model: MaterialModel, domain, source: GenerationCensus, cycles: int = 100,
                         population_target: int = 10_000, rng=None, n_inactive: int = 20,
                         cap=nbp.POPULATION_CAP) -> EigenEstimate:
    """Power iteration over collision generations: ``c = output / input`` per collision."""
    gen = as_generator(rng)
    census = source if source.size == population_target else _resample(source, population_target, gen)[0]
    ks = []
    extinct = None
    for cyc in range(n_inactive + cycles):
        nxt = next_collision_generation(model, None, census, gen, cap)
        ks.append(nxt.size / census.size)
        if nxt.size == 0:
            extinct = cyc
            break
        census, _ = _resample(nxt, population_target, gen)
    ks = np.array(ks)
    extras = {"cycle_c": ks}
    if extinct is not None:
        extras["extinct_cycle"] = extinct
        return EigenEstimate(0.0, 0.0, max(1, ks.size - n_inactive), n_inactive, "collision",
                             extinct=True, extras=extras)
    active = ks[n_inactive:]
    mean, se = batch_means(active)
    extras["lag1"] = lag1_autocorrelation(active)
    return EigenEstimate(mean, se, active.size, n_inactive, "collision", extras=extras)


# ---------------------------------------------------------------- walk-based growth rates

def log_growth_k(model: MaterialModel, domain, start, n_max: int = 10, histories: int = 100_000,
                 rng=None, window=None) -> EigenEstimate:
    """``exp`` of the least-squares slope of ``log Psi_n[1](start)`` against ``n``.

    ``window=(lo, hi)`` selects the generations used; the default is the
    upper half ``ceil(n_max / 2) .. n_max``.
    """
    if n_max < 3:
        raise ValueError("n_max must be >= 3")
    lo, hi = window if window is not None else (int(np.ceil(n_max / 2)), n_max)
    w = psi_n_curve(model, start, n_max, histories, rng)
    slope, se, n, y = _log_slope(np.arange(n_max + 1, dtype=float), w, lo, hi)
    k = float(np.exp(slope))
    return EigenEstimate(k, k * se, int(n.size), int(lo), "log-growth",
                         extras={"log_psi": y, "generations": n, "slope": slope,
                                 "histories": histories})


def lambda_time_estimate(model: MaterialModel, domain, start, t_max: float = 20.0,
                         histories: int = 100_000, rng=None, n_times: int = 21,
                         window=None) -> EigenEstimate:
    """Slope of ``log psi_t[1](start)`` on a tail window (default ``[t_max/2, t_max]``)."""
    if not t_max > 0:
        raise ValueError("t_max must be > 0")
    lo, hi = window if window is not None else (0.5 * t_max, t_max)
    times = np.linspace(lo, hi, n_times)
    w, _, _ = psi_t_weights(model, start, times, histories, rng)
    slope, se, t, y = _log_slope(times, w, lo, hi)
    return EigenEstimate(slope, se, int(t.size), 0, "time-lambda",
                         extras={"log_psi": y, "times": t, "histories": histories})


# ---------------------------------------------------------------- eigenfunctions

def _check_k(k):
    if not (k is not None and np.isfinite(k) and k > 0):
        raise ValueError("a positive k estimate is required")


def eigenfunction_pairing(model: MaterialModel, domain, start_grid, g_list, n_max: int,
                          histories: int, rng=None, k: float | None = None, n_skip: int = 0,
                          randomize_direction: bool = False, cap=nbp.POPULATION_CAP) -> PairingResult:
    """Cesaro averages ``(1/n) sum_m k^-m <X_m, g>`` from each start point.

    Rows are proportional to ``phi(start)`` and columns to ``<phi~, g>``.
    Generations ``1..n_skip`` are left out of the average to shorten the
    transient.  With ``randomize_direction`` each history starts with an
    isotropic direction at the start point's speed.
    """
    _check_k(k)
    if n_max <= n_skip:
        raise ValueError("n_max must exceed n_skip")
    gen = as_generator(rng)
    starts = list(start_grid)
    na = len(starts)
    pos = np.repeat(np.array([p.r for p in starts]), histories, axis=0)
    vel = np.repeat(np.array([p.v for p in starts]), histories, axis=0)
    if randomize_direction:
        from . import _kernels as K
        from .transport import stream_base
        speeds = np.linalg.norm(vel, axis=1)
        vel = K.isotropic_dirs(K.derive_keys(stream_base(gen), speeds.size), speeds)
    for p in starts:
        model.locate(p)
    census = GenerationCensus.from_arrays(pos, vel, gen)
    n_roots = census.size
    acc = np.zeros((len(g_list), n_roots))
    for m in range(1, n_max + 1):
        census = next_fission_generation(model, None, census, gen, cap)
        if m > n_skip:
            for j, g in enumerate(g_list):
                acc[j] += census.counts_by_root(n_roots, g) * k ** (-m)
    acc /= (n_max - n_skip)
    per = acc.reshape(len(g_list), na, histories)
    M = per.mean(axis=2).T
    S = (per.std(axis=2, ddof=1) / np.sqrt(histories)).T
    cov = np.array([np.atleast_2d(np.cov(per[:, a, :])) / histories for a in range(na)])
    return PairingResult(M, S, starts, n_max, extras={"n_skip": n_skip, "k": k}, row_cov=cov)


def martingale_diagnostic(model: MaterialModel, domain, source: GenerationCensus, k_est: float,
                          phi_hist=None, n_max: int = 5, replicates: int = 1000, rng=None,
                          cap=nbp.POPULATION_CAP) -> MartingaleTrace:
    """``W_n = k^-n <phi, X_n> / <phi, X_0>`` for independent replicates of ``source``."""
    _check_k(k_est)
    gen = as_generator(rng)
    phi = phi_hist if phi_hist is not None else (lambda pos, vel: np.ones(len(pos)))
    n0 = source.size
    idx = np.tile(np.arange(n0), replicates)
    census = source.take(idx)
    census.root = np.repeat(np.arange(replicates), n0)
    census = census.rekeyed(gen)
    base = census.counts_by_root(replicates, phi)
    if np.any(base <= 0):
        raise ValueError("phi vanishes on the source")
    W = np.zeros((replicates, n_max + 1))
    W[:, 0] = 1.0
    for n in range(1, n_max + 1):
        census = next_fission_generation(model, None, census, gen, cap)
        W[:, n] = census.counts_by_root(replicates, phi) / base * k_est ** (-n)
    return MartingaleTrace(W, k_est, phi_hist)


def convergence_diagnostic(model: MaterialModel, source_factory, n_inactive: int = 20,
                           n_active: int = 20, population: int = 10_000, replicates: int = 32,
                           rng=None) -> dict:
    """Average ``e_n = |k_cycle(n) - k_final|`` over replicate power iterations.

    ``source_factory(gen)`` builds the starting census of each replicate.
    An exponential ``A exp(-b n) + C`` is fitted to the inactive window.
    """
    gen = as_generator(rng)
    errs = []
    for _ in range(replicates):
        src = source_factory(gen)
        run = _run_cycles(model, src, n_inactive + n_active, 1, population, gen)
        if run.extinct_at is not None:
            raise ExtinctionError("a replicate went extinct")
        k_final = run.k[n_inactive:].mean()
        errs.append(np.abs(run.k[:n_inactive] - k_final))
    e = np.mean(errs, axis=0)
    n = np.arange(1, n_inactive + 1, dtype=float)

    def model_fn(x, a, b, c):
        return a * np.exp(-b * x) + c

    p0 = (max(e[0] - e[-1], 1e-6), 0.3, max(e[-1], 0.0))
    try:
        params, _ = curve_fit(model_fn, n, e, p0=p0, maxfev=20000)
    except RuntimeError:
        params = np.array([np.nan, np.nan, np.nan])
    fit = model_fn(n, *params)
    ss_res = float(np.sum((e - fit) ** 2))
    ss_tot = float(np.sum((e - e.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")
    return {"e": e, "n": n, "params": params, "r2": r2,
            "nonincreasing_fraction": float(np.mean(np.diff(e) <= 0)),
            "rate": float(params[1])}


# ---------------------------------------------------------------- run records

def write_records(path, records, append=False) -> Path:
    """JSON lines, one per estimate (``EigenEstimate`` or plain dict)."""
    path = Path(path)
    with path.open("a" if append else "w") as fh:
        for r in records:
            d = r.as_record() if hasattr(r, "as_record") else r
            fh.write(json.dumps(d, sort_keys=True, default=_json_default) + "\n")
    return path


def read_records(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(type(o))


def write_cycles(path, values, name="k") -> Path:
    v = np.asarray(values, float)
    np.savetxt(path, np.column_stack([np.arange(1, v.size + 1), v]), delimiter=",",
               header=f"cycle,{name}", comments="", fmt=["%d", "%.17g"])
    return Path(path)


def start_point(model: MaterialModel, r, direction=(1.0, 0.0, 0.0)) -> PhasePoint:
    d = np.asarray(direction, float)
    return PhasePoint(r, d / np.linalg.norm(d) * model.velocities.v_max)
