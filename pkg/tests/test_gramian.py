import numpy as np
import pytest
import scipy.special
from scipy.linalg import expm

from kooplyap.basis import (Basis1D, EvalTable, OrthonormalBasis,
                            make_orthonormal, shift_to_equilibrium,
                            tensor_basis)
from kooplyap.gramian import (LaguerreDecomposition, assemble_generator,
                              assemble_observation, decay_fit,
                              laguerre_coefficients, lyap_residual,
                              pde_residual, solve_gramian, sos_eval,
                              sos_eval_many, sum_of_squares,
                              _weighted_laguerre)
from kooplyap.model import (NuclearCost, PolynomialMap, WeightFunction,
                            builtin_system, quadratic_cost)
from kooplyap.quadrature import composite_rule, gauss_legendre, tensor_grid


def toy_pipeline(sign=-1.0):
    """x' = sign * x, c = x on [-1, 1] with constant weight, basis {x}."""
    f = PolynomialMap.from_terms(1, [[(sign, (1,))]])
    cost = quadratic_cost(1)
    grid = tensor_grid([gauss_legendre(8, -1.0, 1.0)],
                       WeightFunction.constant(1.0))
    basis = shift_to_equilibrium(tensor_basis([Basis1D.legendre(1)]),
                                 np.zeros(1))
    onb = make_orthonormal(basis, grid)
    gen = assemble_generator(f, onb)
    obs = assemble_observation(cost, onb)
    return f, cost, gen, obs


def linear2d_pipeline(degree=5, nodes=8):
    f, cost, w, dom = builtin_system("linear2d")
    grid = tensor_grid([gauss_legendre(nodes, -1.0, 1.0)] * 2, w)
    basis = shift_to_equilibrium(
        tensor_basis([Basis1D.legendre(degree)] * 2), dom.equilibrium)
    onb = make_orthonormal(basis, grid)
    gen = assemble_generator(f, onb)
    obs = assemble_observation(cost, onb)
    return f, cost, onb, gen, obs


def test_toy_anchors():
    # On the basis {x}: K = [-1], Chat = 1/sqrt(3), P = [1/6], v(z) = z^2/2.
    f, cost, gen, obs = toy_pipeline()
    assert abs(gen.k[0, 0] + 1.0) <= 1e-14
    assert abs(abs(obs.chat[0, 0]) - 1.0 / np.sqrt(3.0)) <= 1e-14
    assert obs.residuals[0] <= 1e-13
    sol = solve_gramian(gen, obs)
    assert abs(sol.phat[0, 0] - 1.0 / 6.0) <= 1e-14
    assert abs(sol.eigen.values[0] - 1.0 / 6.0) <= 1e-14
    assert sol.clamp_magnitude == 0.0
    assert abs(sol.generator_abscissa + 1.0) <= 1e-12
    assert lyap_residual(gen, obs, sol) <= 1e-14

    sos = sum_of_squares(sol)
    assert sos.n_terms == 1
    v, gv = sos_eval(sos, np.array([0.7]))
    assert abs(v - 0.49 / 2.0) <= 1e-13
    assert abs(gv[0] - 0.7) <= 1e-13
    v0, gv0 = sos_eval(sos, np.array([0.0]))
    assert v0 == 0.0 and abs(gv0[0]) <= 1e-15

    pts = np.linspace(-1.0, 1.0, 21)[:, None]
    res = pde_residual(sos, f, cost, pts)
    assert res.max_abs <= 1e-12 and res.rms <= res.max_abs


def test_gramian_rejects_unstable_generator():
    # x' = +x gives P = -1/6: solvable but not PSD, and the error should
    # point at the generator spectrum
    _, _, gen, obs = toy_pipeline(sign=+1.0)
    with pytest.raises(RuntimeError, match="abscissa"):
        solve_gramian(gen, obs)


def test_generator_dimension_guard():
    _, _, gen, obs = toy_pipeline()
    f2 = PolynomialMap.from_terms(2, [[(1.0, (1, 0))], [(1.0, (0, 1))]])
    with pytest.raises(ValueError):
        assemble_generator(f2, gen.basis)


def test_linear2d_eigenvalues_regression():
    _, _, onb, gen, obs = linear2d_pipeline()
    sol = solve_gramian(gen, obs)
    lam = sol.eigen.values
    # the two paper-scale eigenvalues; everything else is numerically zero
    assert abs(lam[0] - 1.2280416e-01) <= 1e-7
    assert abs(lam[1] - 8.4338697e-02) <= 1e-7
    assert lam[2] / lam[0] <= 1e-12
    assert lyap_residual(gen, obs, sol) <= 1e-12
    assert np.array_equal(sol.phat, sol.phat.T)
    assert np.all(sol.eigen.values >= 0.0)


def test_sum_of_squares_truncation():
    _, _, onb, gen, obs = linear2d_pipeline()
    sol = solve_gramian(gen, obs)
    full = sum_of_squares(sol)
    assert full.n_terms == 2
    lam2_rel = sol.eigen.values[1] / sol.eigen.values[0]
    dropped = sum_of_squares(sol, trunc_tol=lam2_rel * 1.01)
    assert dropped.n_terms == 1
    # the dropped mass bounds the pointwise difference on the grid
    pts = onb.grid.points
    v_full, _ = sos_eval_many(full, pts)
    v_drop, _ = sos_eval_many(dropped, pts)
    phi_sq = (onb.table.values ** 2).sum(axis=1).max()
    bound = sol.eigen.values[1] * phi_sq
    assert np.max(np.abs(v_full - v_drop)) <= bound * (1.0 + 1e-12)


def test_empty_sum_of_squares():
    _, _, onb, gen, obs = linear2d_pipeline()
    sol = solve_gramian(gen, obs)
    empty = sum_of_squares(sol, trunc_tol=2.0)
    assert empty.n_terms == 0
    vals, grads = sos_eval_many(empty, onb.grid.points[:5])
    assert np.all(vals == 0.0) and np.all(grads == 0.0)


def test_bilinear_form_matches_time_quadrature():
    """a^T P b must equal the time integral of the observed matrix flow,
    int_0^T (Chat e^(t K^T) a) . (Chat e^(t K^T) b) dt, up to the decayed
    tail.  This ties the algebraic solve back to the defining integral."""
    _, _, onb, gen, obs = linear2d_pipeline(degree=4, nodes=8)
    sol = solve_gramian(gen, obs)
    t_rule = composite_rule([0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0], 14)
    acc = np.zeros_like(sol.phat)
    for t, wt in zip(t_rule.nodes, t_rule.weights):
        s = obs.chat @ expm(gen.k.T * t)
        acc += wt * (s.T @ s)
    rel = np.linalg.norm(acc - sol.phat) / np.linalg.norm(sol.phat)
    assert rel <= 1e-6


def test_spectrum_invariant_under_basis_rotation(rng):
    """Rotating the orthonormal basis is a change of coordinates; the
    Gramian spectrum and the value function must not move."""
    f, cost, onb, gen, obs = linear2d_pipeline(degree=4, nodes=8)
    sol = solve_gramian(gen, obs)

    q, _ = np.linalg.qr(rng.standard_normal((onb.rank, onb.rank)))
    rotated = OrthonormalBasis(
        raw=onb.raw, whitener=onb.whitener @ q, grid=onb.grid,
        table=EvalTable(values=onb.table.values @ q,
                        gradients=tuple(g @ q for g in onb.table.gradients)))
    gen_r = assemble_generator(f, rotated)
    obs_r = assemble_observation(cost, rotated)
    sol_r = solve_gramian(gen_r, obs_r)

    lam, lam_r = sol.eigen.values, sol_r.eigen.values
    scale = lam[0]
    assert np.max(np.abs(lam - lam_r)) <= 1e-9 * scale
    pts = rng.uniform(-1.0, 1.0, size=(20, 2))
    v, _ = sos_eval_many(sum_of_squares(sol), pts)
    v_r, _ = sos_eval_many(sum_of_squares(sol_r), pts)
    assert np.max(np.abs(v - v_r)) <= 1e-9 * max(v.max(), 1.0)


def test_sos_gradient_matches_finite_differences(rng):
    _, _, onb, gen, obs = linear2d_pipeline()
    sos = sum_of_squares(solve_gramian(gen, obs))
    pts = rng.uniform(-0.9, 0.9, size=(10, 2))
    _, grads = sos_eval_many(sos, pts)
    h = 1e-6
    for a in range(2):
        e = np.zeros(2)
        e[a] = h
        vp, _ = sos_eval_many(sos, pts + e)
        vm, _ = sos_eval_many(sos, pts - e)
        fd = (vp - vm) / (2 * h)
        denom = np.maximum(np.abs(fd), 1.0)
        assert np.max(np.abs(grads[:, a] - fd) / denom) <= 1e-6


def test_decay_fit_polynomial_anchor():
    lam = np.arange(1, 61, dtype=float) ** -5.0
    m_hat, r2 = decay_fit(lam, 5)
    # tail sums of n^-5 fall like N^-4; finite-size bias stays small when
    # the window sits in the first half
    assert 4.0 <= m_hat <= 4.2
    assert r2 >= 0.999


def test_decay_fit_geometric_and_flat():
    lam = 2.0 ** -np.arange(60, dtype=float)
    m_hat, _ = decay_fit(lam, 5)
    assert m_hat >= 8.0  # super-polynomial: exponent keeps growing
    flat = np.ones(30)
    m_flat, _ = decay_fit(flat, 5)
    assert abs(m_flat) <= 0.5


def test_decay_fit_window_and_validation():
    lam = np.arange(1, 61, dtype=float) ** -3.0
    m_a, _ = decay_fit(lam, 5, 40)
    m_b, _ = decay_fit(lam, 5, 25)
    assert abs(m_a - 2.0) <= 0.35 and abs(m_b - 2.0) <= 0.35
    with pytest.raises(ValueError):
        decay_fit(np.array([1.0, 2.0, 1.0, 0.5, 0.2, 0.1, 0.05]), 1)
    with pytest.raises(ValueError):
        decay_fit(np.array([1.0, 0.5]), 5)
    with pytest.raises(ValueError):
        decay_fit(lam, 0)


def test_weighted_laguerre_matches_scipy():
    t = np.linspace(0.0, 40.0, 200)
    m = _weighted_laguerre(12, t)
    for n in range(12):
        ref = scipy.special.eval_laguerre(n, t) * np.exp(-0.5 * t)
        assert np.max(np.abs(m[n] - ref)) <= 1e-10


def test_laguerre_coefficients_toy():
    # x' = -x, c = x, z = 1: a_n = (2/3) (1/3)^n
    f = PolynomialMap.from_terms(1, [[(-1.0, (1,))]])
    c = PolynomialMap.from_terms(1, [[(1.0, (1,))]])
    dec = laguerre_coefficients(f, c, np.array([1.0]), 8)
    ref = (2.0 / 3.0) * (1.0 / 3.0) ** np.arange(8)
    assert np.max(np.abs(dec.coefficients - ref)) <= 1e-9
    assert dec.horizon > 0.0 and dec.n_cells >= 6
    with pytest.raises(ValueError):
        laguerre_coefficients(f, c, np.array([1.0]), 0)
    with pytest.raises(ValueError):
        laguerre_coefficients(f, c, np.array([1.0]), 61)


def test_observation_out_of_span_residual():
    # with only {x} in the basis, the observable x^2 is fully out of span
    f = PolynomialMap.from_terms(1, [[(-1.0, (1,))]])
    sq = PolynomialMap.from_terms(1, [[(1.0, (2,))]])
    cost = NuclearCost((sq,))
    grid = tensor_grid([gauss_legendre(8, -1.0, 1.0)],
                       WeightFunction.constant(1.0))
    onb = make_orthonormal(
        shift_to_equilibrium(tensor_basis([Basis1D.legendre(1)]), np.zeros(1)),
        grid)
    obs = assemble_observation(cost, onb)
    # ||x^2||^2 = <x^4> = 1/5 under the unit-mass measure, all unexplained
    assert abs(obs.residuals[0] - np.sqrt(1.0 / 5.0)) <= 1e-12
