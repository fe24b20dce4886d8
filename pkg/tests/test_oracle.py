import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import expn

from neutronk import models
from neutronk.errors import ConfigError, ConvergenceError
from neutronk.oracle import (DiscreteTransport, SlabConfig, assemble, double_gauss, power_iterate,
                             slab_from_model, tune_to_k)

STANDARD = slab_from_model(models.standard_slab())


def test_double_gauss_weights():
    for n in (2, 8, 16, 64):
        mu, w = double_gauss(n)
        assert w.sum() == pytest.approx(2.0, abs=1e-14)
        assert np.all(mu[n // 2:] > 0) and np.allclose(mu, -mu[::-1])
    with pytest.raises(ValueError):
        double_gauss(5)


def test_matrix_is_nonnegative():
    op = assemble(STANDARD, 100, 16)
    assert np.all(op.matrix >= 0)


def test_pure_absorber_matches_closed_form():
    sig, a = 1.0, 2.0
    op = assemble(SlabConfig((0.0, a), (sig,), (0.0,), (1.0,)), 200, 256)
    x = op.x_edges
    # cell-averaged uncollided flux from a unit uniform isotropic source
    avg = (1 / (2 * sig)) * (2 - (expn(3, sig * x[:-1]) - expn(3, sig * x[1:])) / (sig * op.dx)
                             - (expn(3, sig * (a - x[1:])) - expn(3, sig * (a - x[:-1]))) / (sig * op.dx))
    np.testing.assert_allclose(op.response @ op.dx / op.dx, avg, atol=1e-6)


def test_symmetric_slab_commutes_with_reflection():
    assert STANDARD.symmetric
    op = assemble(STANDARD, 120, 16)
    x = np.random.default_rng(0).random(op.n_x)
    lhs = op.apply(x[::-1])
    rhs = op.apply(x)[::-1]
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(x)


def test_grid_and_quadrature_refinement():
    k = {n: power_iterate(assemble(STANDARD, n, 16)).k for n in (100, 200)}
    assert abs(k[100] - k[200]) / k[200] < 2e-3
    k8 = power_iterate(assemble(STANDARD, 200, 8)).k
    assert abs(k8 - k[200]) / k[200] < 1e-3


def test_diagonal_matrix():
    res = power_iterate(np.diag([2.0, 1.0]))
    assert res.k == pytest.approx(2.0)
    np.testing.assert_allclose(res.phi, [1.0, 0.0], atol=1e-6)


def test_no_leakage_limit():
    thick = SlabConfig((0.0, 400.0), (2.0,), (1.0,), (2.5,))
    assert abs(power_iterate(assemble(thick, 400, 16)).k - 2.5) / 2.5 < 0.01
    closed = SlabConfig((0.0, 3.0), (2.0,), (1.0,), (2.5,), "reflective", "reflective")
    assert power_iterate(assemble(closed, 60, 8)).k == pytest.approx(2.5, rel=1e-8)


def test_rayleigh_and_positivity():
    op = assemble(STANDARD, 200, 16)
    res = power_iterate(op)
    assert abs(res.rayleigh(op.matrix) - res.k) <= 1e-8 * res.k
    assert np.all(res.phi > 0) and np.all(res.phi_tilde > 0)
    assert res.phi_tilde.sum() == pytest.approx(1.0)
    assert res.phi.max() == pytest.approx(1.0)
    # symmetric slab: both eigenvectors are symmetric
    np.testing.assert_allclose(res.phi, res.phi[::-1], rtol=1e-6)


def test_tune_to_critical():
    tr = tune_to_k(models.standard_slab(), 1.0, tol=1e-3)
    assert 0.999 <= tr.k <= 1.001
    # the rescaled model reproduces the tuned k
    again = power_iterate(assemble(slab_from_model(tr.model), 200, 16)).k
    assert again == pytest.approx(tr.k, rel=1e-9)


def test_tune_to_current_k_is_identity():
    k0 = power_iterate(assemble(STANDARD, 200, 16)).k
    tr = tune_to_k(STANDARD, k0, tol=1e-3)
    assert abs(tr.scale - 1.0) <= 1e-3


def test_tune_scales_linearly_without_leakage():
    thick = SlabConfig((0.0, 400.0), (2.0,), (1.0,), (2.5,))
    k0 = power_iterate(assemble(thick, 400, 16)).k
    tr = tune_to_k(thick, 0.5, tol=1e-4, n_x=400)
    assert tr.scale == pytest.approx(0.5 / k0, rel=1e-3)
    assert tr.scale == pytest.approx(0.5 / 2.5, rel=0.01)


def test_tune_unreachable():
    with pytest.raises(ValueError, match="unreachable"):
        tune_to_k(STANDARD, 10.0, bracket=(0.0, 1.0))


def test_power_iterate_max_iter():
    with pytest.raises(ConvergenceError):
        power_iterate(np.array([[1.0, 0.0], [0.0, 0.999999]]), tol=1e-15, max_iter=5)


def test_inner_iteration_failure_reported():
    closed = SlabConfig((0.0, 1.0), (1.0,), (1.0,), (0.5,), "reflective", "reflective")
    with pytest.raises(ConvergenceError, match="scattering ratio"):
        DiscreteTransport(closed, 10, 4, max_inner=50).response


def test_slab_from_model_checks():
    with pytest.raises(ConfigError):
        slab_from_model(models.heterogeneous_box())
    with pytest.raises(ConfigError):
        slab_from_model(models.sphere_model())


def test_csv_dump(tmp_path):
    op = assemble(STANDARD, 40, 8)
    path = power_iterate(op).to_csv(tmp_path / "o.csv")
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (40, 4)


@settings(max_examples=15, deadline=None)
@given(widths=st.lists(st.floats(0.2, 2.0), min_size=1, max_size=3),
       c=st.floats(0.0, 0.9), f=st.floats(0.05, 1.0))
def test_random_slabs_positive(widths, c, f):
    n = len(widths)
    edges = tuple(np.concatenate([[0.0], np.cumsum(widths)]))
    slab = SlabConfig(edges, (1.0,) * n, (c,) * n, (f,) * n)
    op = assemble(slab, 30, 8)
    assert np.all(op.matrix >= 0)
    res = power_iterate(op)
    assert np.all(res.phi > 0) and np.all(res.phi_tilde > 0)
    assert abs(res.rayleigh(op.matrix) - res.k) <= 1e-8 * res.k


@settings(max_examples=15, deadline=None)
@given(widths=st.lists(st.floats(0.2, 2.0), min_size=1, max_size=3),
       sig=st.lists(st.floats(0.5, 2.0), min_size=3, max_size=3))
def test_mirrored_slabs_commute(widths, sig):
    w = widths + widths[::-1]
    s = sig[:len(widths)]
    s = s + s[::-1]
    edges = tuple(np.concatenate([[0.0], np.cumsum(w)]))
    slab = SlabConfig(edges, tuple(s), tuple(0.5 * v for v in s), tuple(0.3 * v for v in s))
    op = assemble(slab, 40, 8)
    x = np.arange(op.n_x, dtype=float)
    assert np.linalg.norm(op.apply(x[::-1]) - op.apply(x)[::-1]) <= 1e-10 * np.linalg.norm(x)
