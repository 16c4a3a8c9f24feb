import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.polynomial import legendre as npleg

from kooplyap.basis import (Basis1D, bspline_eval, gram_matrix, legendre_eval,
                            make_orthonormal, onb_eval, project,
                            shift_to_equilibrium, tensor_basis, whiten_gram)
from kooplyap.model import WeightFunction
from kooplyap.quadrature import composite_rule, gauss_legendre, tensor_grid


def unit_grid(n=16, dim=1, w=None):
    w = w or WeightFunction.constant(1.0)
    return tensor_grid([gauss_legendre(n, -1.0, 1.0)] * dim, w)


@pytest.mark.parametrize("k", range(8))
def test_legendre_matches_numpy(k):
    for x in np.linspace(-1.0, 1.0, 31):
        val, der = legendre_eval(k, x)
        assert abs(val - npleg.legval(x, np.eye(8)[k])) <= 1e-14
        ref_der = npleg.legval(x, npleg.legder(np.eye(8)[k]))
        assert abs(der - ref_der) <= 1e-12


def test_bspline_partition_of_unity():
    b = Basis1D.bspline([0.0, 0.3, 1.0, 2.0], degree=3)
    for x in np.linspace(0.0, 2.0, 57):
        total = sum(bspline_eval(b, i, x)[0] for i in range(b.count))
        assert abs(total - 1.0) <= 1e-13


def test_bspline_validation():
    with pytest.raises(ValueError):
        Basis1D.bspline([0.0], degree=2)
    with pytest.raises(ValueError):
        Basis1D.bspline([0.0, 1.0], degree=0)


def test_tensor_basis_count():
    tb = tensor_basis([Basis1D.legendre(3), Basis1D.legendre(2)])
    assert tb.dim == 2 and tb.count == 12


def test_shift_vanishes_at_equilibrium():
    tb = tensor_basis([Basis1D.legendre(4), Basis1D.legendre(4)])
    shifted = shift_to_equilibrium(tb, np.array([0.2, -0.1]))
    assert shifted.count == tb.count - 1
    from kooplyap.basis import _eval_points
    vals, _ = _eval_points(shifted, np.array([[0.2, -0.1]]))
    assert np.max(np.abs(vals)) < 1e-13


def test_gram_matrix_low_order():
    # {1, x} against the unit-mass measure on [-1,1]: diag(1, 1/3)
    grid = unit_grid(8)
    tb = tensor_basis([Basis1D.legendre(1)])
    g = gram_matrix(tb, grid)
    assert np.allclose(g, [[1.0, 0.0], [0.0, 1.0 / 3.0]], atol=1e-14)


def test_whiten_gram_identity_and_drop():
    grid = unit_grid(10)
    tb = tensor_basis([Basis1D.legendre(3)])
    g = gram_matrix(tb, grid)
    wmat, kept = whiten_gram(g)
    assert np.allclose(wmat.T @ g @ wmat, np.eye(wmat.shape[1]), atol=1e-12)
    # a duplicated function makes the gram rank deficient; one column drops
    g2 = np.zeros((5, 5))
    g2[:4, :4] = g
    g2[4, :4] = g[0, :]
    g2[:4, 4] = g[:, 0]
    g2[4, 4] = g[0, 0]
    w2, kept2 = whiten_gram(g2)
    assert w2.shape[1] == 4


def test_orthonormality_on_grid():
    w = WeightFunction.inverse_norm((0.0, 0.0))
    grid = tensor_grid([gauss_legendre(12, -1.0, 1.0)] * 2, w)
    tb = shift_to_equilibrium(
        tensor_basis([Basis1D.legendre(5)] * 2), np.zeros(2))
    onb = make_orthonormal(tb, grid)
    vals = onb.table.values
    gram = vals.T @ (grid.ip_weights[:, None] * vals)
    assert np.max(np.abs(gram - np.eye(onb.rank))) <= 1e-9


def test_onb_eval_consistency_and_gradients():
    grid = unit_grid(10, dim=2)
    tb = tensor_basis([Basis1D.legendre(3)] * 2)
    onb = make_orthonormal(tb, grid)
    vals, grads = onb_eval(onb, grid.points)
    assert np.allclose(vals, onb.table.values, atol=1e-13)
    for a in range(2):
        assert np.allclose(grads[:, a, :], onb.table.gradients[a], atol=1e-13)
    # finite-difference check off the grid
    pts = np.array([[0.31, -0.42], [-0.77, 0.13]])
    vals, grads = onb_eval(onb, pts)
    h = 1e-6
    for a in range(2):
        e = np.zeros(2)
        e[a] = h
        vp, _ = onb_eval(onb, pts + e)
        vm, _ = onb_eval(onb, pts - e)
        fd = (vp - vm) / (2 * h)
        denom = max(np.abs(fd).max(), 1.0)
        assert np.max(np.abs(grads[:, a, :] - fd)) / denom <= 1e-6


def test_bspline_gradients_match_fd():
    b = Basis1D.bspline([-1.0, -0.2, 0.4, 1.0], degree=3)
    grid = tensor_grid([composite_rule([-1.0, -0.2, 0.4, 1.0], 5)],
                       WeightFunction.constant(1.0))
    onb = make_orthonormal(tensor_basis([b]), grid)
    pts = np.array([[-0.5], [0.1], [0.7]])
    vals, grads = onb_eval(onb, pts)
    h = 1e-6
    vp, _ = onb_eval(onb, pts + h)
    vm, _ = onb_eval(onb, pts - h)
    fd = (vp - vm) / (2 * h)
    assert np.max(np.abs(grads[:, 0, :] - fd)) <= 1e-5 * max(np.abs(fd).max(), 1.0)


def test_project_recovers_coordinates():
    grid = unit_grid(10, dim=2)
    tb = tensor_basis([Basis1D.legendre(2)] * 2)
    onb = make_orthonormal(tb, grid)
    samples = grid.points[:, 0] * grid.points[:, 1]
    coeffs = project(samples, onb)
    recon = onb.table.values @ coeffs
    assert np.allclose(recon, samples, atol=1e-12)
