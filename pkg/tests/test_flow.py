import numpy as np
import pytest
from scipy.linalg import expm

from kooplyap.flow import (DomainExitWarning, IntegratorConfig,
                           NonDecayingCostError, check_decay_bound,
                           check_linearization, check_port_hamiltonian,
                           check_tangent, cost_oracle, estimate_omega0,
                           integrate_flow, omega0_scan_grid)
from kooplyap.linalg import solve_lyapunov
from kooplyap.model import (BoxDomain, NuclearCost, PolynomialMap,
                            WeightFunction, builtin_system,
                            port_hamiltonian_parts, quadratic_cost)


def decaying_1d():
    return PolynomialMap.from_terms(1, [[(-1.0, (1,))]])


def test_integrate_flow_linear_vs_expm():
    f, _, _, _ = builtin_system("linear2d")
    a = np.array([[-2.0, 1.0], [-1.0, -3.0]])
    z = np.array([0.8, -0.6])
    for t in (0.0, 0.3, 1.7):
        got = integrate_flow(f, z, t)
        assert np.allclose(got, expm(a * t) @ z, atol=1e-8)
    with pytest.raises(ValueError):
        integrate_flow(f, z, -1.0)


def test_integrate_flow_domain_warning():
    f = PolynomialMap.from_terms(1, [[(1.0, (1,))]])  # grows away from 0
    dom = BoxDomain(lower=(-1.0,), upper=(1.0,))
    with pytest.warns(DomainExitWarning):
        integrate_flow(f, np.array([0.5]), 2.0, domain=dom)


def test_cost_oracle_1d_half():
    # x' = -x, c = x: v(z) = z^2 / 2
    ci = cost_oracle(decaying_1d(), quadratic_cost(1), np.array([1.0]))
    assert abs(ci.value - 0.5) <= 1e-7
    assert ci.tail_bound <= 1e-8
    assert 0.0 < ci.horizon <= 200.0


def test_cost_oracle_linear2d_matches_lyapunov():
    f, cost, _, _ = builtin_system("linear2d")
    a = np.array([[-2.0, 1.0], [-1.0, -3.0]])
    x = solve_lyapunov(a.T, np.eye(2))
    rng = np.random.default_rng(3)
    for z in rng.uniform(-1.0, 1.0, size=(5, 2)):
        ci = cost_oracle(f, cost, z, tail_tol=1e-10)
        assert abs(ci.value - z @ x @ z) <= 1e-7


def test_cost_oracle_at_equilibrium():
    ci = cost_oracle(decaying_1d(), quadratic_cost(1), np.array([0.0]))
    assert ci.value <= 1e-12


def test_cost_oracle_raises_on_growth():
    f = PolynomialMap.from_terms(1, [[(1.0, (1,))]])
    cfg = IntegratorConfig(max_time=5.0)
    with pytest.raises(NonDecayingCostError) as exc:
        cost_oracle(f, quadratic_cost(1), np.array([1.0]), cfg=cfg)
    assert exc.value.horizon == 5.0
    assert exc.value.partial_value > 0.0


def test_check_tangent():
    f, _, _, dom = builtin_system("linear2d")
    rep = check_tangent(f, dom)
    assert rep.passed
    assert abs(rep.witness["max_boundary_flux"] + 1.0) <= 1e-12
    outward = PolynomialMap.from_terms(2, [[(1.0, (1, 0))], [(1.0, (0, 1))]])
    assert not check_tangent(outward, dom).passed
    with pytest.raises(ValueError):
        check_tangent(f, dom, n_per_face=1)


def test_omega0_anchors():
    f, _, w, dom = builtin_system("linear2d")
    grid = omega0_scan_grid(dom, w)
    assert abs(estimate_omega0(f, w, grid) + 2.0) <= 1e-9

    f1 = decaying_1d()
    w1 = WeightFunction.inverse_norm((0.0,))
    dom1 = BoxDomain(lower=(-1.0,), upper=(1.0,))
    grid1 = omega0_scan_grid(dom1, w1)
    assert abs(estimate_omega0(f1, w1, grid1) + 1.0) <= 1e-9


def test_omega0_scan_grid_drops_singular_points():
    w = WeightFunction.inverse_norm((0.0, 0.0))
    dom = BoxDomain(lower=(-1.0, -1.0), upper=(1.0, 1.0))
    pts = omega0_scan_grid(dom, w, n_per_dim=5)
    assert np.all(np.linalg.norm(pts, axis=1) > 0.0)
    # axis points and the boundary survive
    assert np.any((pts[:, 1] == 0.0) & (pts[:, 0] != 0.0))
    assert np.any(pts[:, 0] == 1.0)
    with pytest.raises(ValueError):
        estimate_omega0(decaying_1d(), w, np.empty((0, 2)))


def test_check_decay_bound():
    f, _, w, _ = builtin_system("linear2d")
    times = np.linspace(0.0, 5.0, 21)
    rep = check_decay_bound(f, w, np.array([0.7, -0.4]), times, -2.0)
    assert rep.passed
    assert rep.witness["max_violation"] <= 1e-6
    # overclaiming the decay rate must be caught
    rep_bad = check_decay_bound(f, w, np.array([0.7, -0.4]), times, -4.0)
    assert not rep_bad.passed
    with pytest.raises(ValueError):
        check_decay_bound(f, w, np.array([0.7, -0.4]), [-1.0, 2.0], -2.0)


def test_check_port_hamiltonian():
    h, j, r = port_hamiltonian_parts(0.5)
    _, _, w, dom = builtin_system("port_hamiltonian_demo", {"r": 0.5})
    pts = omega0_scan_grid(dom, w)
    rep = check_port_hamiltonian(h, j, r, pts)
    assert rep.passed
    assert rep.witness["omega0"] < 0.0
    assert rep.witness["max_skew_defect"] <= 1e-12
    # flipping the sign of the dissipation breaks it
    from kooplyap.model import constant_poly_matrix
    bad_r = constant_poly_matrix(-0.5 * np.eye(2), 2)
    assert not check_port_hamiltonian(h, j, bad_r, pts).passed


def test_check_linearization():
    f, _, _, _ = builtin_system("linear2d")
    rep = check_linearization(f)
    assert rep.passed
    assert abs(rep.witness["spectral_abscissa"] + 2.5) <= 1e-12

    fv, _, _, _ = builtin_system("vdp_modified")
    assert abs(check_linearization(fv).witness["spectral_abscissa"] + 0.1) <= 1e-9

    unstable = PolynomialMap.from_terms(1, [[(1.0, (1,))]])
    assert not check_linearization(unstable).passed
    shifted = PolynomialMap.from_terms(1, [[(1.0, (0,)), (-1.0, (1,))]])
    with pytest.raises(ValueError):
        check_linearization(shifted)  # f(0) != 0
