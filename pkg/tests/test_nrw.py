import numpy as np
import pytest

from conftest import within
from neutronk import models, nbp, nrw
from neutronk.phase import PhasePoint
from neutronk.results import combined_sigma, mean_estimate

CENTER = (5e3, 5e3, 5e3)


def coin_freq(model, generational=False, n=1_000_000, seed=0):
    cells = np.zeros(n, np.int64)
    out = nrw.nrw_scatters(model, cells, cells, np.random.default_rng(seed), generational)
    return np.mean([t == "fission-type" for _, t in out])


def test_coin_probability():
    m = models.homogeneous_box(1.0, 1.0, (0, 0, 1))
    f = coin_freq(m)
    assert abs(f - 2 / 3) < 3 * np.sqrt(2 / 9 / 1e6)
    # the generational walk tosses at the branching process's own rates
    f = coin_freq(m, generational=True)
    assert abs(f - 1 / 2) < 3 * np.sqrt(1 / 4 / 1e6)


def test_degenerate_coins():
    assert coin_freq(models.homogeneous_box(1.0, 0.0), n=10_000) == 0.0
    assert coin_freq(models.homogeneous_box(0.0, 1.0), n=10_000) == 1.0
    with pytest.raises(ValueError, match="alpha = 0"):
        nrw.nrw_scatter(models.homogeneous_box(0.0, 0.0), PhasePoint((0.5, 0.5, 0.5), (1, 0, 0)))


def test_scatter_returns_velocity_in_set(hetero, hetero_start):
    v, kind = nrw.nrw_scatter(hetero, hetero_start, 1)
    assert kind in ("fission-type", "scatter-type")
    assert 1.0 <= np.linalg.norm(v) <= 2.0


def test_run_to_generation_zero(hetero, hetero_start):
    s = nrw.run_to_generation(hetero, hetero.domain, hetero_start, 0, 1)
    assert s.alive and s.log_weight == 0.0 and s.fission_count == 0
    np.testing.assert_array_equal(s.point.r, hetero_start.r)


def test_no_leakage_weight_is_power_of_m():
    m = models.no_leakage_box(m=2.0)
    p = PhasePoint(CENTER, (1, 0, 0))
    for n in (1, 3, 6):
        s = nrw.run_to_generation(m, m.domain, p, n, n)
        assert s.alive and s.fission_count == n
        assert s.log_weight == pytest.approx(n * np.log(2.0), abs=1e-12)


def test_alive_probability_matches_census_mass():
    m = models.slab([(0.6, 0.4, 2.0)], [0.0, 1.0])
    p = PhasePoint((0.5, 0.0, 0.0), (1.0, 0.0, 0.0))
    n = 1_000_000
    w = nrw.walk_generations(m, p, 1, n, np.random.default_rng(5))[0][:, 1]
    alive = np.mean(w > 0)
    se_a = np.sqrt(alive * (1 - alive) / n)
    x1 = nbp.next_fission_generation(m, None, nbp.GenerationCensus.point_source(p, n, 6), 7)
    counts = x1.counts_by_root(n) / 2.0
    assert abs(alive - counts.mean()) <= 3 * np.hypot(se_a, counts.std() / np.sqrt(n))


def test_psi_n_zero_is_exact(hetero, hetero_start):
    g = lambda pos, vel: pos[:, 0] ** 2
    e = nrw.psi_n_many_to_one(hetero, hetero.domain, hetero_start, 0, g, 100, 1)
    assert e.value == pytest.approx(2.25) and e.std_error == 0.0


def test_psi_n_no_leakage_limit():
    m = models.no_leakage_box(m=2.5)
    p = PhasePoint(CENTER, (0, 1, 0))
    for n in (1, 2, 3):
        e = nrw.psi_n_many_to_one(m, m.domain, p, n, None, 2000, n)
        assert within(e, 2.5 ** n, floor=1e-9)


@pytest.mark.parametrize("walk", ["generational", "alpha"])
def test_psi_n_matches_census_for_three_functions(hetero, hetero_start, walk):
    gs = [None, lambda pos, vel: pos[:, 0], lambda pos, vel: (pos[:, 0] < 1.0).astype(float)]
    n_roots = 100_000
    gen = np.random.default_rng(11)
    cens = nbp.fission_generations(hetero, nbp.GenerationCensus.point_source(hetero_start, n_roots, gen),
                                   3, gen)
    for n in (1, 2, 3):
        for g in gs:
            c = cens[n].counts_by_root(n_roots, g)
            e = nrw.psi_n_many_to_one(hetero, hetero.domain, hetero_start, n, g, 100_000, gen, walk=walk)
            assert abs(e.value - c.mean()) <= 3 * np.hypot(e.std_error, c.std() / np.sqrt(n_roots))


def test_weight_never_exceeds_bound(hetero, hetero_start):
    w = nrw.psi_n_curve(hetero, hetero_start, 6, 20_000, 3)
    assert np.all(w <= 3.0 ** np.arange(7) + 1e-12)


def test_semigroup_law_with_tabulated_inner_value():
    m = models.standard_slab()
    gen = np.random.default_rng(21)
    x_edges = np.linspace(0.0, 4.0, 41)
    mu_edges = np.linspace(-1.0, 1.0, 21)
    nx, nm = x_edges.size - 1, mu_edges.size - 1
    per_bin = 4000
    # tabulate Psi_1[1] at points spread uniformly through each (x, mu) bin
    ix, im = np.meshgrid(np.arange(nx), np.arange(nm), indexing="ij")
    ix, im = np.repeat(ix.ravel(), per_bin), np.repeat(im.ravel(), per_bin)
    x = x_edges[ix] + gen.random(ix.size) * np.diff(x_edges)[ix]
    mu = mu_edges[im] + gen.random(im.size) * np.diff(mu_edges)[im]
    phi = 2 * np.pi * gen.random(ix.size)
    st = np.sqrt(1 - mu ** 2)
    pos = np.column_stack([x, np.zeros_like(x), np.zeros_like(x)])
    vel = np.column_stack([mu, st * np.cos(phi), st * np.sin(phi)])
    w = nrw.walk_generations(m, (pos, vel), 1, ix.size, gen)[0][:, 1].reshape(nx * nm, per_bin)
    table, table_se = w.mean(axis=1), w.std(axis=1, ddof=1) / np.sqrt(per_bin)

    def bin_of(p, v):
        i = np.clip(np.searchsorted(x_edges, p[:, 0], "right") - 1, 0, nx - 1)
        j = np.clip(np.searchsorted(mu_edges, v[:, 0], "right") - 1, 0, nm - 1)
        return i * nm + j

    start = PhasePoint((1.0, 0.0, 0.0), (0.6, 0.8, 0.0))
    h = 400_000
    w1, end_pos, end_vel, _, count = nrw.walk_generations(m, start, 1, h, gen)
    b = bin_of(end_pos, end_vel)
    nested = w1[:, 1] * table[b]
    # table noise is shared by all outer histories that land in a bin
    usage = np.bincount(b, weights=w1[:, 1], minlength=table.size) / h
    sigma_nested = np.hypot(nested.std() / np.sqrt(h), np.sqrt(np.sum((usage * table_se) ** 2)))
    direct = nrw.psi_n_many_to_one(m, m.domain, start, 2, None, h, gen)
    assert abs(nested.mean() - direct.value) <= 3 * np.hypot(sigma_nested, direct.std_error)


def test_dagger_trivial_cases():
    m = models.no_leakage_box(m=3.0)  # m = N_max: no extra killing
    p = PhasePoint(CENTER, (1, 0, 0))
    assert nrw.psi_dagger_survival(m, m.domain, p, 0, 10).value == 1.0
    for n in (1, 4):
        assert nrw.psi_dagger_survival(m, m.domain, p, n, 1000, n).value == 1.0


def test_dagger_identity(hetero, hetero_start):
    gen = np.random.default_rng(8)
    for n in (1, 2, 3):
        d = nrw.psi_dagger_survival(hetero, hetero.domain, hetero_start, n, 200_000, gen)
        e = nrw.psi_n_many_to_one(hetero, hetero.domain, hetero_start, n, None, 200_000, gen)
        scale = 3.0 ** n
        assert abs(scale * d.value - e.value) <= 3 * np.hypot(scale * d.std_error, e.std_error)


def test_dagger_is_sub_markov_and_decays():
    m = models.standard_slab()
    p = PhasePoint((2.0, 0.0, 0.0), (1.0, 0.0, 0.0))
    w = nrw.psi_n_curve(m, p, 9, 400_000, 4, dagger=True)
    surv = w.mean(axis=0)
    assert np.all((surv >= 0) & (surv <= 1))
    assert np.all(np.diff(surv) <= 0)
    # conditional one-step survival settles to a constant (the rate N_max^-1 k)
    alive = (w > 0).sum(axis=0)
    ratio = alive[1:] / alive[:-1]
    se = np.sqrt(ratio * (1 - ratio) / alive[:-1])
    for a in range(4, 9):
        for b in range(a + 1, 9):
            assert abs(ratio[a] - ratio[b]) <= 3 * np.hypot(se[a], se[b])


def test_psi_t_zero_is_exact(hetero, hetero_start):
    e = nrw.psi_t_many_to_one(hetero, hetero.domain, hetero_start, 0.0, lambda p, v: v[:, 0], 10, 1)
    assert e.value == pytest.approx(1.2) and e.std_error == 0.0


def test_psi_t_no_leakage_growth():
    m = models.no_leakage_box(sigma_s=1.0, sigma_f=0.5, m=2.0)
    p = PhasePoint(CENTER, (1, 0, 0))
    for t in (0.5, 2.0):
        e = nrw.psi_t_many_to_one(m, m.domain, p, t, None, 1000, 3)
        # beta is constant, so every surviving history carries exactly exp(beta t)
        assert e.value == pytest.approx(np.exp(0.5 * t), rel=1e-12)


def test_psi_t_matches_time_snapshot_when_beta_zero():
    m = models.slab([(0.5, 0.5, 1.0), (0.9, 0.3, 1.0)], [0.0, 1.0, 2.5])
    p = PhasePoint((0.8, 0.0, 0.0), (0.0, 1.0, 0.0))
    n = 200_000
    gen = np.random.default_rng(13)
    snap = nbp.simulate_time(m, m.domain, nbp.GenerationCensus.point_source(p, n, gen), 1.5, gen)
    counts = snap.counts_by_root(n)
    e = nrw.psi_t_many_to_one(m, m.domain, p, 1.5, None, n, gen)
    assert abs(e.value - counts.mean()) <= 3 * np.hypot(e.std_error, counts.std() / np.sqrt(n))


def test_psi_t_matches_time_snapshot_mean(hetero, hetero_start):
    n = 100_000
    gen = np.random.default_rng(17)
    snap = nbp.simulate_time(hetero, None, nbp.GenerationCensus.point_source(hetero_start, n, gen), 1.0, gen)
    counts = snap.counts_by_root(n)
    e = nrw.psi_t_many_to_one(hetero, None, hetero_start, 1.0, None, n, gen)
    assert abs(e.value - counts.mean()) <= 3 * combined_sigma(e, mean_estimate(counts))


def test_seed_determinism(hetero, hetero_start):
    a = nrw.psi_n_curve(hetero, hetero_start, 4, 5000, 42)
    b = nrw.psi_n_curve(hetero, hetero_start, 4, 5000, 42)
    np.testing.assert_array_equal(a, b)


def test_bad_arguments(hetero, hetero_start):
    with pytest.raises(ValueError):
        nrw.walk_generations(hetero, hetero_start, 1, 0)
    with pytest.raises(ValueError):
        nrw.walk_generations(hetero, hetero_start, 1, 10, dagger=True, walk="alpha")
    with pytest.raises(ValueError):
        nrw.psi_t_many_to_one(hetero, None, hetero_start, -1.0)
