import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kooplyap.model import (BoxDomain, NuclearCost, PolynomialMap,
                            WeightFunction, builtin_system,
                            constant_poly_matrix, eval_poly_matrix, g_eval,
                            g_eval_many, poly_eval, poly_eval_many,
                            poly_jacobian, port_hamiltonian_parts,
                            quadratic_cost, weight_eval, weight_eval_many)


def test_poly_eval_basics():
    # p(x, y) = (3 x^2 y - y, x + 1)
    p = PolynomialMap.from_terms(2, [
        [(3.0, (2, 1)), (-1.0, (0, 1))],
        [(1.0, (1, 0)), (1.0, (0, 0))],
    ])
    assert p.dim_in == 2 and p.dim_out == 2
    x = np.array([2.0, 0.5])
    assert np.allclose(poly_eval(p, x), [3 * 4 * 0.5 - 0.5, 3.0])
    pts = np.array([[2.0, 0.5], [0.0, 1.0], [-1.0, 2.0]])
    many = poly_eval_many(p, pts)
    assert many.shape == (3, 2)
    for i in range(3):
        assert np.allclose(many[i], poly_eval(p, pts[i]))


def test_poly_linear_constructor():
    a = np.array([[-2.0, 1.0], [-1.0, -3.0]])
    p = PolynomialMap.linear(a)
    assert np.allclose(poly_eval_many(p, np.eye(2)).T, a)
    assert np.allclose(poly_jacobian(p, np.array([0.3, -0.7])), a)


@given(st.integers(0, 2 ** 32 - 1))
def test_poly_jacobian_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    p = PolynomialMap.from_terms(2, [
        [(rng.uniform(-2, 2), (2, 1)), (rng.uniform(-2, 2), (1, 0))],
        [(rng.uniform(-2, 2), (0, 3)), (rng.uniform(-2, 2), (1, 1))],
    ])
    x = rng.uniform(-1, 1, 2)
    jac = poly_jacobian(p, x)
    h = 1e-6
    for a in range(2):
        e = np.zeros(2)
        e[a] = h
        fd = (np.asarray(poly_eval(p, x + e)) - poly_eval(p, x - e)) / (2 * h)
        assert np.allclose(jac[:, a], fd, atol=1e-7, rtol=1e-6)


def test_from_terms_validation():
    with pytest.raises(ValueError):
        PolynomialMap.from_terms(2, [[(1.0, (1,))]])  # exponent arity
    with pytest.raises(ValueError):
        PolynomialMap.from_terms(1, [[(1.0, (-1,))]])  # negative exponent


def test_quadratic_cost():
    cost = quadratic_cost(3)
    assert len(cost.observables) == 3
    x = np.array([1.0, -2.0, 0.5])
    assert abs(g_eval(cost, x) - (x ** 2).sum()) < 1e-14
    pts = np.array([[1.0, 0.0, 0.0], [1.0, 2.0, 3.0]])
    assert np.allclose(g_eval_many(cost, pts), (pts ** 2).sum(axis=1))


def test_nuclear_cost_rejects_vector_observables():
    vec = PolynomialMap.from_terms(2, [[(1.0, (1, 0))], [(1.0, (0, 1))]])
    with pytest.raises(ValueError):
        NuclearCost((vec,))


def test_weight_constant():
    w = WeightFunction.constant(2.0)
    vals, grads = weight_eval_many(w, np.zeros((4, 3)))
    assert np.allclose(vals, 2.0) and np.allclose(grads, 0.0)
    with pytest.raises(ValueError):
        WeightFunction.constant(0.0)


def test_weight_inverse_norm():
    w = WeightFunction.inverse_norm((1.0, 0.0))
    val, grad = weight_eval(w, np.array([3.0, 0.0]))
    assert abs(val - 0.5) < 1e-14
    assert np.allclose(grad, [-0.25, 0.0])
    assert w.singular_points == ((1.0, 0.0),)
    with pytest.raises(ValueError):
        weight_eval(w, np.array([1.0, 0.0]))


def test_weight_hamiltonian():
    h = PolynomialMap.from_terms(2, [[(0.5, (2, 0)), (0.5, (0, 2))]])
    w = WeightFunction.from_hamiltonian(h, ((0.0, 0.0),))
    x = np.array([1.0, 1.0])
    val, grad = weight_eval(w, x)
    assert abs(val - 1.0) < 1e-14  # H = 1 there
    # grad of H^(-1/2) = -H^(-3/2)/2 * grad H
    assert np.allclose(grad, -0.5 * x)
    with pytest.raises(ValueError):
        weight_eval(w, np.zeros(2))  # H = 0: not positive


def test_box_domain():
    dom = BoxDomain(lower=(-1.0, -2.0), upper=(1.0, 2.0))
    assert dom.equilibrium == (0.0, 0.0)
    assert dom.dim == 2 and abs(dom.volume - 8.0) < 1e-14
    assert dom.contains([0.5, 1.9])
    assert not dom.contains([0.5, 2.1])
    assert dom.contains([0.5, 2.1], overshoot=0.2)
    with pytest.raises(ValueError):
        BoxDomain(lower=(0.0,), upper=(0.0,))
    with pytest.raises(ValueError):
        BoxDomain(lower=(-1.0,), upper=(1.0,), equilibrium=(1.5,))


def test_builtin_linear2d():
    f, cost, w, dom = builtin_system("linear2d")
    assert np.allclose(poly_eval_many(f, np.eye(2)).T,
                       [[-2.0, 1.0], [-1.0, -3.0]])
    assert len(cost.observables) == 2
    assert w.kind == "inverse_norm"
    assert dom.lower == (-1.0, -1.0) and dom.upper == (1.0, 1.0)
    with pytest.raises(ValueError):
        builtin_system("linear2d", {"mu": 1.0})


def test_builtin_vdp():
    f, cost, w, dom = builtin_system("vdp_modified")
    jac = poly_jacobian(f, np.zeros(2))
    assert np.allclose(jac, [[0.0, 1.0], [-1.0, -0.2]])
    assert dom.lower == (-3.0, -3.0)
    # parameter guards protect the standing hypotheses
    with pytest.raises(ValueError):
        builtin_system("vdp_modified", {"eta": 1.0, "mu": 2.0})
    with pytest.raises(ValueError):
        builtin_system("vdp_modified", {"alpha": 0.0})
    with pytest.raises(ValueError):
        builtin_system("nope")


def test_builtin_port_hamiltonian_consistency():
    f, cost, w, dom = builtin_system("port_hamiltonian_demo", {"r": 0.5})
    h, j, r = port_hamiltonian_parts(0.5)
    x = np.array([0.4, -0.3])
    gh = poly_jacobian(h, x)[0]
    rhs = (eval_poly_matrix(j, x) - eval_poly_matrix(r, x)) @ gh
    assert np.allclose(poly_eval(f, x), rhs)
    assert w.kind == "hamiltonian"


def test_poly_matrix_helpers():
    m = constant_poly_matrix(np.array([[1.0, 2.0], [3.0, 4.0]]), 2)
    got = eval_poly_matrix(m, np.array([0.7, -0.1]))
    assert np.allclose(got, [[1.0, 2.0], [3.0, 4.0]])
