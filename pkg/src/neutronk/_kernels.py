"""Compiled particle kernels.

Everything stochastic in the package funnels through this module.  Random
numbers come from a counter-based generator: draw ``c`` of the stream with
key ``k`` is ``mix64(k + (c + 1) * GOLDEN)`` (SplitMix64 output function), so
a particle's path depends only on its key and never on which thread ran it.
"""
import math

import numpy as np
from numba import njit, prange

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0

# flight / advance status codes
EVENT = 0
EXITED = 1
TIME_LIMIT = 2

# advance() outcome codes
OUT_EXITED = 0
OUT_FISSION = 1
OUT_SCATTER = 2
OUT_TIME = 3

MODE_FISSION = 0
MODE_COLLISION = 1

KERNEL_SCATTER = 0
KERNEL_FISSION = 1


@njit(cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def u01(key, ctr):
    """Uniform on the open interval (0, 1) for draw ``ctr`` of stream ``key``."""
    x = mix64(key + (ctr + _ONE) * GOLDEN)
    return (float(x >> _S11) + 0.5) * _INV53


@njit(cache=True)
def child_key(key, j):
    return mix64(key ^ mix64(np.uint64(j) + _ONE + GOLDEN))


@njit(cache=True)
def derive_keys(base, n):
    out = np.empty(n, dtype=np.uint64)
    for i in range(n):
        out[i] = mix64(base + np.uint64(i) * GOLDEN)
    return out


# ---------------------------------------------------------------- geometry

@njit(cache=True)
def exit_time(dom_kind, dom_par, x, y, z, vx, vy, vz):
    if dom_kind == 0:
        t = np.inf
        if vx > 0.0:
            t = min(t, (dom_par[3] - x) / vx)
        elif vx < 0.0:
            t = min(t, (dom_par[0] - x) / vx)
        if vy > 0.0:
            t = min(t, (dom_par[4] - y) / vy)
        elif vy < 0.0:
            t = min(t, (dom_par[1] - y) / vy)
        if vz > 0.0:
            t = min(t, (dom_par[5] - z) / vz)
        elif vz < 0.0:
            t = min(t, (dom_par[2] - z) / vz)
        return max(t, 0.0)
    dx = x - dom_par[0]
    dy = y - dom_par[1]
    dz = z - dom_par[2]
    a = vx * vx + vy * vy + vz * vz
    b = vx * dx + vy * dy + vz * dz
    c = dx * dx + dy * dy + dz * dz - dom_par[3] * dom_par[3]
    disc = b * b - a * c
    if disc <= 0.0 or a == 0.0:
        return 0.0
    return max((-b + math.sqrt(disc)) / a, 0.0)


@njit(cache=True)
def _axis_clip(lo, hi, p, v, t0, t1):
    if v != 0.0:
        ta = (lo - p) / v
        tb = (hi - p) / v
        if ta > tb:
            ta, tb = tb, ta
        return max(t0, ta), min(t1, tb)
    if p >= lo and p < hi:
        return t0, t1
    return np.inf, -np.inf


@njit(cache=True)
def ray_box(lo, hi, x, y, z, vx, vy, vz):
    """Parameter interval of the ray inside the half-open box [lo, hi)."""
    t0, t1 = _axis_clip(lo[0], hi[0], x, vx, -np.inf, np.inf)
    t0, t1 = _axis_clip(lo[1], hi[1], y, vy, t0, t1)
    t0, t1 = _axis_clip(lo[2], hi[2], z, vz, t0, t1)
    return t0, t1


@njit(cache=True)
def find_cell(T, x, y, z):
    for c in range(T.cell_lo.shape[0]):
        lo = T.cell_lo[c]
        hi = T.cell_hi[c]
        if lo[0] <= x < hi[0] and lo[1] <= y < hi[1] and lo[2] <= z < hi[2]:
            return c
    # upper faces of the bounding cells are closed
    for c in range(T.cell_lo.shape[0]):
        lo = T.cell_lo[c]
        hi = T.cell_hi[c]
        if lo[0] <= x <= hi[0] and lo[1] <= y <= hi[1] and lo[2] <= z <= hi[2]:
            return c
    return -1


@njit(cache=True)
def band_of(edges, s):
    nb = edges.shape[0] - 1
    if nb <= 1:
        return 0
    lo = 0
    hi = nb
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if s >= edges[mid]:
            lo = mid
        else:
            hi = mid
    return lo


@njit(cache=True)
def trace(T, x, y, z, vx, vy, vz, band, rate, tau, tlim, aux):
    """Run an exponential clock with piecewise-constant ``rate`` along a ray.

    The clock fires when the accumulated optical depth reaches ``tau``.
    Returns ``(status, t, cell, depth_used, aux_integral)`` where ``aux`` is a
    second per-cell table integrated exactly over the travelled interval.
    """
    speed = math.sqrt(vx * vx + vy * vy + vz * vz)
    eps = T.eps_len / speed
    texit = exit_time(T.dom_kind, T.dom_par, x, y, z, vx, vy, vz)
    if texit <= eps:
        return EXITED, 0.0, -1, 0.0, 0.0
    tend = min(texit, tlim)
    ncell = T.cell_lo.shape[0]
    t = 0.0
    acc = 0.0
    auxacc = 0.0
    last = -1
    while t < tend:
        best = -1
        best_out = -np.inf
        next_in = np.inf
        next_c = -1
        for c in range(ncell):
            t0, t1 = ray_box(T.cell_lo[c], T.cell_hi[c], x, y, z, vx, vy, vz)
            if t1 <= t0 or t1 <= t:
                continue
            if t0 <= t + eps:
                if t1 > best_out:
                    best_out = t1
                    best = c
            elif t0 < next_in:
                next_in = t0
                next_c = c
        if best < 0:
            if next_c < 0:
                break
            # gap outside every cell: nothing happens there
            t = next_in
            continue
        seg_end = min(best_out, tend)
        seg = seg_end - t
        if seg <= 0.0:
            break
        r = rate[best, band]
        a = aux[best, band]
        d = r * seg
        if acc + d >= tau and r > 0.0:
            te = t + (tau - acc) / r
            auxacc += a * (te - t)
            if te > texit - eps:
                return EXITED, texit, best, tau, auxacc
            return EVENT, te, best, tau, auxacc
        acc += d
        auxacc += a * seg
        t = seg_end
        last = best
    if tlim < texit:
        return TIME_LIMIT, tlim, last, acc, auxacc
    return EXITED, texit, last, acc, auxacc


# ---------------------------------------------------------------- sampling

@njit(cache=True)
def sample_velocity(T, which, c, band, key, ctr):
    start = T.kstart[which, c, band]
    cnt = T.kcount[which, c, band]
    u = u01(key, ctr)
    ctr += _ONE
    j = start
    while j < start + cnt - 1 and u > T.kcdf[j]:
        j += 1
    lo = T.klo[j]
    hi = T.khi[j]
    u = u01(key, ctr)
    ctr += _ONE
    if T.kkind[j] == 0:
        s = lo + u * (hi - lo)
    else:
        s = (lo ** 3 + u * (hi ** 3 - lo ** 3)) ** (1.0 / 3.0)
    s = min(max(s, T.vmin), T.vmax)
    mu = 2.0 * u01(key, ctr) - 1.0
    ctr += _ONE
    ph = 2.0 * math.pi * u01(key, ctr)
    ctr += _ONE
    st = math.sqrt(max(0.0, 1.0 - mu * mu))
    return s * st * math.cos(ph), s * st * math.sin(ph), s * mu, ctr


@njit(cache=True)
def sample_offspring(T, c, band, key, ctr):
    u = u01(key, ctr)
    cdf = T.off_cdf[c, band]
    n = 0
    while n < cdf.shape[0] - 1 and u > cdf[n]:
        n += 1
    return n, ctr + _ONE


@njit(cache=True)
def isotropic_dirs(keys, speeds):
    n = keys.shape[0]
    out = np.empty((n, 3))
    for i in range(n):
        mu = 2.0 * u01(keys[i], np.uint64(0)) - 1.0
        ph = 2.0 * math.pi * u01(keys[i], np.uint64(1))
        st = math.sqrt(max(0.0, 1.0 - mu * mu))
        out[i, 0] = speeds[i] * st * math.cos(ph)
        out[i, 1] = speeds[i] * st * math.sin(ph)
        out[i, 2] = speeds[i] * mu
    return out


@njit(parallel=True, cache=True)
def sample_velocities(T, which, cells, bands, keys):
    n = keys.shape[0]
    out = np.empty((n, 3))
    for i in prange(n):
        vx, vy, vz, _ = sample_velocity(T, which, cells[i], bands[i], keys[i], np.uint64(0))
        out[i, 0] = vx
        out[i, 1] = vy
        out[i, 2] = vz
    return out


@njit(parallel=True, cache=True)
def flights(T, pos, vel, keys, rate, aux, tlim):
    """One flight per row: returns status, time and aux integral."""
    n = pos.shape[0]
    status = np.empty(n, dtype=np.int64)
    times = np.empty(n)
    auxint = np.empty(n)
    for i in prange(n):
        x, y, z = pos[i, 0], pos[i, 1], pos[i, 2]
        vx, vy, vz = vel[i, 0], vel[i, 1], vel[i, 2]
        band = band_of(T.band_edges, math.sqrt(vx * vx + vy * vy + vz * vz))
        tau = -math.log(u01(keys[i], np.uint64(0)))
        st, t, _, _, ai = trace(T, x, y, z, vx, vy, vz, band, rate, tau, tlim[i], aux)
        status[i] = st
        times[i] = t
        auxint[i] = ai
    return status, times, auxint


# ---------------------------------------------------------------- branching process

@njit(parallel=True, cache=True)
def advance(T, pos, vel, keys, ctrs, tlim, mode):
    """Move each neutron until its first fission (mode 0) or first collision
    (mode 1), leakage, or its time budget ``tlim`` runs out.

    Children are written into fixed slots ``[i, 0:nchild[i]]``.
    """
    n = pos.shape[0]
    kmax = max(1, T.n_max)
    total = T.sig_s + T.sig_f
    zero = np.zeros_like(total)
    outcome = np.empty(n, dtype=np.int64)
    elapsed = np.empty(n)
    end_pos = np.empty((n, 3))
    end_vel = np.empty((n, 3))
    end_ctr = np.empty(n, dtype=np.uint64)
    nchild = np.zeros(n, dtype=np.int64)
    child_vel = np.empty((n, kmax, 3))
    ckeys = np.empty((n, kmax), dtype=np.uint64)
    child_ctr = np.zeros((n, kmax), dtype=np.uint64)
    for i in prange(n):
        key = keys[i]
        ctr = ctrs[i]
        x, y, z = pos[i, 0], pos[i, 1], pos[i, 2]
        vx, vy, vz = vel[i, 0], vel[i, 1], vel[i, 2]
        budget = tlim[i]
        clock = 0.0
        band = band_of(T.band_edges, math.sqrt(vx * vx + vy * vy + vz * vz))
        while True:
            tau = -math.log(u01(key, ctr))
            ctr += _ONE
            st, t, c, _, _ = trace(T, x, y, z, vx, vy, vz, band, total, tau, budget - clock, zero)
            x += vx * t
            y += vy * t
            z += vz * t
            clock += t
            if st == EXITED:
                outcome[i] = OUT_EXITED
                break
            if st == TIME_LIMIT:
                outcome[i] = OUT_TIME
                break
            p_scatter = T.sig_s[c, band] / total[c, band]
            u = u01(key, ctr)
            ctr += _ONE
            if u < p_scatter:
                vx, vy, vz, ctr = sample_velocity(T, KERNEL_SCATTER, c, band, key, ctr)
                band = band_of(T.band_edges, math.sqrt(vx * vx + vy * vy + vz * vz))
                if mode == MODE_COLLISION:
                    outcome[i] = OUT_SCATTER
                    nchild[i] = 1
                    child_vel[i, 0, 0] = vx
                    child_vel[i, 0, 1] = vy
                    child_vel[i, 0, 2] = vz
                    ckeys[i, 0] = key
                    child_ctr[i, 0] = ctr
                    break
                continue
            outcome[i] = OUT_FISSION
            nk, ctr = sample_offspring(T, c, band, key, ctr)
            nchild[i] = nk
            for j in range(nk):
                ck = child_key(key, j)
                cvx, cvy, cvz, cctr = sample_velocity(T, KERNEL_FISSION, c, band, ck, np.uint64(0))
                child_vel[i, j, 0] = cvx
                child_vel[i, j, 1] = cvy
                child_vel[i, j, 2] = cvz
                ckeys[i, j] = ck
                child_ctr[i, j] = cctr
            break
        elapsed[i] = clock
        end_pos[i, 0] = x
        end_pos[i, 1] = y
        end_pos[i, 2] = z
        end_vel[i, 0] = vx
        end_vel[i, 1] = vy
        end_vel[i, 2] = vz
        end_ctr[i] = ctr
    return outcome, elapsed, end_pos, end_vel, end_ctr, nchild, child_vel, ckeys, child_ctr


# ---------------------------------------------------------------- neutron random walk

@njit(cache=True)
def _nrw_scatter(T, c, band, key, ctr, generational):
    """Coin plus velocity draw; returns (fission_type, vx, vy, vz, ctr).

    The alpha-pi coin is fission-type with probability sigma_f m / alpha.
    The generational coin (``generational=True``) uses sigma_f / (sigma_s + sigma_f),
    so fission-type events arrive at the branching process's fission rate.
    """
    if generational:
        a = T.sig_s[c, band] + T.sig_f[c, band]
        pf = T.sig_f[c, band] / a
    else:
        a = T.sig_s[c, band] + T.sig_f[c, band] * T.yield_m[c, band]
        pf = T.sig_f[c, band] * T.yield_m[c, band] / a
    u = u01(key, ctr)
    ctr += _ONE
    if u < pf:
        vx, vy, vz, ctr = sample_velocity(T, KERNEL_FISSION, c, band, key, ctr)
        return True, vx, vy, vz, ctr
    vx, vy, vz, ctr = sample_velocity(T, KERNEL_SCATTER, c, band, key, ctr)
    return False, vx, vy, vz, ctr


@njit(parallel=True, cache=True)
def nrw_scatters(T, cells, bands, keys, generational):
    n = keys.shape[0]
    ftype = np.empty(n, dtype=np.bool_)
    vel = np.empty((n, 3))
    for i in prange(n):
        f, vx, vy, vz, _ = _nrw_scatter(T, cells[i], bands[i], keys[i], np.uint64(0), generational)
        ftype[i] = f
        vel[i, 0] = vx
        vel[i, 1] = vy
        vel[i, 2] = vz
    return ftype, vel


WALK_GENERATIONAL = 0
WALK_ALPHA = 1


def walk_tables(T, walk):
    """Flight rate and log-weight rate tables for the generation-indexed walks."""
    if walk == WALK_ALPHA:
        return T.sig_s + T.sig_f * T.yield_m, T.sig_f * (T.yield_m - 1.0)
    return T.sig_s + T.sig_f, np.zeros_like(T.sig_s)


@njit(parallel=True, cache=True)
def nrw_generations(T, pos, vel, keys, n_gen, dagger, walk, rate, aux):
    """Walk up to its ``n_gen``-th fission-type scatter.

    ``walk == WALK_GENERATIONAL``: flights at rate sigma_s + sigma_f with the
    generational coin; the weight is the product of yields ``m`` over the
    fission-type events (with ``dagger``, a survival indicator under extra
    killing with probability ``1 - m / N_max`` instead).
    ``walk == WALK_ALPHA``: the alpha-pi walk, weighted by ``exp(int beta)``
    up to the event, which has the same expectation.
    ``rate`` and ``aux`` come from :func:`walk_tables`.

    ``weight[h, j]`` is the weight on reaching the ``j``-th fission-type
    event inside the domain, else zero.
    """
    n = pos.shape[0]
    generational = walk == WALK_GENERATIONAL
    weight = np.zeros((n, n_gen + 1))
    end_pos = np.empty((n, 3))
    end_vel = np.empty((n, 3))
    clock_out = np.empty(n)
    count = np.empty(n, dtype=np.int64)
    for i in prange(n):
        key = keys[i]
        ctr = np.uint64(0)
        x, y, z = pos[i, 0], pos[i, 1], pos[i, 2]
        vx, vy, vz = vel[i, 0], vel[i, 1], vel[i, 2]
        band = band_of(T.band_edges, math.sqrt(vx * vx + vy * vy + vz * vz))
        w = 1.0
        logw = 0.0
        weight[i, 0] = 1.0
        gen = 0
        clock = 0.0
        while gen < n_gen:
            tau = -math.log(u01(key, ctr))
            ctr += _ONE
            st, t, c, _, bint = trace(T, x, y, z, vx, vy, vz, band, rate, tau, np.inf, aux)
            if st != EVENT:
                break
            x += vx * t
            y += vy * t
            z += vz * t
            clock += t
            logw += bint
            m = T.yield_m[c, band]
            ftype, vx, vy, vz, ctr = _nrw_scatter(T, c, band, key, ctr, generational)
            band = band_of(T.band_edges, math.sqrt(vx * vx + vy * vy + vz * vz))
            if ftype:
                killed = False
                if dagger:
                    killed = u01(key, ctr) >= m / T.n_max
                    ctr += _ONE
                if killed:
                    break
                gen += 1
                if not dagger:
                    w = w * m if generational else math.exp(logw)
                weight[i, gen] = w
        end_pos[i, 0] = x
        end_pos[i, 1] = y
        end_pos[i, 2] = z
        end_vel[i, 0] = vx
        end_vel[i, 1] = vy
        end_vel[i, 2] = vz
        clock_out[i] = clock
        count[i] = gen
    return weight, end_pos, end_vel, clock_out, count


@njit(parallel=True, cache=True)
def nrw_times(T, pos, vel, keys, times):
    """Alpha-pi walk observed at the sorted ``times``.

    ``weight[h, k] = exp(int_0^t beta) 1{t < exit}`` at ``t = times[k]``.
    """
    n = pos.shape[0]
    nt = times.shape[0]
    alpha = T.sig_s + T.sig_f * T.yield_m
    beta = T.sig_f * (T.yield_m - 1.0)
    weight = np.zeros((n, nt))
    end_pos = np.empty((n, 3))
    end_vel = np.empty((n, 3))
    for i in prange(n):
        key = keys[i]
        ctr = np.uint64(0)
        x, y, z = pos[i, 0], pos[i, 1], pos[i, 2]
        vx, vy, vz = vel[i, 0], vel[i, 1], vel[i, 2]
        band = band_of(T.band_edges, math.sqrt(vx * vx + vy * vy + vz * vz))
        clock = 0.0
        logw = 0.0
        k = 0
        while k < nt and times[k] <= 0.0:
            weight[i, k] = 1.0
            k += 1
        tau = -math.log(u01(key, ctr))
        ctr += _ONE
        alive = True
        while k < nt:
            st, t, c, used, bint = trace(T, x, y, z, vx, vy, vz, band, alpha, tau,
                                         times[k] - clock, beta)
            x += vx * t
            y += vy * t
            z += vz * t
            clock += t
            logw += bint
            if st == EXITED:
                alive = False
                break
            if st == TIME_LIMIT:
                # clock is memoryless but keep the same realisation
                tau -= used
                weight[i, k] = math.exp(logw)
                k += 1
                while k < nt and times[k] <= clock:
                    weight[i, k] = math.exp(logw)
                    k += 1
                continue
            _, vx, vy, vz, ctr = _nrw_scatter(T, c, band, key, ctr, False)
            band = band_of(T.band_edges, math.sqrt(vx * vx + vy * vy + vz * vz))
            tau = -math.log(u01(key, ctr))
            ctr += _ONE
        if not alive:
            for kk in range(k, nt):
                weight[i, kk] = 0.0
        end_pos[i, 0] = x
        end_pos[i, 1] = y
        end_pos[i, 2] = z
        end_vel[i, 0] = vx
        end_vel[i, 1] = vy
        end_vel[i, 2] = vz
    return weight, end_pos, end_vel
