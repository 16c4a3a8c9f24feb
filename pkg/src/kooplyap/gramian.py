"""Generator discretization, Gramian solve, and the sum-of-squares output.

The chain is: assemble the generator and observation matrices in an
orthonormal basis, solve K P + P K^T + C^T C = 0, eigendecompose P, and
read off the Lyapunov function v = sum_i lambda_i (phi^T v_i)^2 together
with its diagnostics (residuals, spectral decay, Laguerre coefficients).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from . import linalg
from .flow import IntegratorConfig, cost_oracle
from .model import NuclearCost, g_eval_many, poly_eval_many
from .quadrature import composite_rule


@dataclass(frozen=True)
class GeneratorMatrix:
    """K_jk = <phi_j, f . grad phi_k> in the discrete weighted inner product."""

    k: np.ndarray
    basis: object

    def spectral_abscissa(self):
        return linalg.spectral_abscissa(self.k)


@dataclass(frozen=True)
class ObservationMatrix:
    """Chat_ij = <c_i, phi_j>, plus each observable's out-of-span residual."""

    chat: np.ndarray
    residuals: np.ndarray
    basis: object


@dataclass(frozen=True)
class GramianSolution:
    phat: np.ndarray
    eigen: linalg.SymEig
    basis: object
    clamp_magnitude: float
    generator_abscissa: float


@dataclass(frozen=True)
class SumOfSquares:
    """v(x) = sum_i lambda_i (phi(x)^T v_i)^2 over the retained terms."""

    eigenvalues: np.ndarray
    vectors: np.ndarray
    basis: object

    @property
    def n_terms(self):
        return self.eigenvalues.size


@dataclass(frozen=True)
class ResidualStats:
    max_abs: float
    rms: float


@dataclass(frozen=True)
class LaguerreDecomposition:
    coefficients: np.ndarray
    horizon: float
    n_cells: int
    nodes_per_cell: int


def assemble_generator(f, onb):
    """Galerkin matrix of the generator phi -> f . grad phi."""
    grid = onb.grid
    if f.dim_in != grid.dim:
        raise ValueError("field and grid dimensions differ")
    fvals = poly_eval_many(f, grid.points)
    directional = np.zeros_like(onb.table.values)
    for a in range(grid.dim):
        directional += fvals[:, a:a + 1] * onb.table.gradients[a]
    k = onb.table.values.T @ (grid.ip_weights[:, None] * directional)
    return GeneratorMatrix(k=k, basis=onb)


def assemble_observation(g, onb):
    grid = onb.grid
    rows = []
    residuals = []
    for c in g.observables:
        cvals = poly_eval_many(c, grid.points)[:, 0]
        row = (grid.ip_weights * cvals) @ onb.table.values
        norm2 = float((grid.ip_weights * cvals) @ cvals)
        resid2 = max(norm2 - float(row @ row), 0.0)
        rows.append(row)
        residuals.append(np.sqrt(resid2))
    return ObservationMatrix(chat=np.array(rows), residuals=np.array(residuals),
                             basis=onb)


def solve_gramian(gen, obs):
    """Observability Gramian of (K, Chat) with a clamped eigendecomposition."""
    qs = obs.chat.T @ obs.chat
    form = linalg.real_schur(gen.k)
    abscissa = float(linalg.schur_eigenvalues(form.t).real.max())
    phat = linalg.solve_lyapunov(gen.k, qs, schur=form)
    eig = linalg.sym_eig(phat)
    lam_max = float(eig.values.max(initial=0.0))
    lam_min = float(eig.values.min(initial=0.0))
    if lam_min < -1e-10 * max(lam_max, 1e-300):
        raise RuntimeError(
            f"Gramian is not positive semidefinite (min eigenvalue {lam_min:.3e} "
            f"vs max {lam_max:.3e}); generator spectral abscissa is {abscissa:.3e}")
    clamp = max(0.0, -lam_min)
    eig = linalg.SymEig(values=np.maximum(eig.values, 0.0), vectors=eig.vectors)
    return GramianSolution(phat=phat, eigen=eig, basis=gen.basis,
                           clamp_magnitude=clamp, generator_abscissa=abscissa)


def sum_of_squares(sol, trunc_tol=1e-14):
    """Retain eigenpairs with lambda_i above trunc_tol * lambda_1."""
    lam = sol.eigen.values
    if lam.size == 0 or lam[0] <= 0.0:
        return SumOfSquares(eigenvalues=np.empty(0), vectors=np.empty((len(sol.phat), 0)),
                            basis=sol.basis)
    keep = lam > trunc_tol * lam[0]
    return SumOfSquares(eigenvalues=lam[keep].copy(),
                        vectors=sol.eigen.vectors[:, keep].copy(),
                        basis=sol.basis)


def sos_eval_many(sos, pts):
    """(values, gradients) of v at points of shape (m, dim)."""
    from .basis import onb_eval
    pts = np.asarray(pts, dtype=float)
    phi, dphi = onb_eval(sos.basis, pts)
    if sos.n_terms == 0:
        return np.zeros(pts.shape[0]), np.zeros_like(pts)
    b = sos.vectors * np.sqrt(sos.eigenvalues)[None, :]
    p = phi @ b
    vals = (p * p).sum(axis=1)
    grads = 2.0 * np.einsum("mak,mk->ma", dphi @ b, p)
    return vals, grads


def sos_eval(sos, x):
    vals, grads = sos_eval_many(sos, np.asarray(x, dtype=float)[None, :])
    return float(vals[0]), grads[0]


def lyap_residual(gen, obs, sol):
    """Relative Frobenius residual of K P + P K^T + Chat^T Chat = 0."""
    qs = obs.chat.T @ obs.chat
    r = gen.k @ sol.phat + sol.phat @ gen.k.T + qs
    return float(np.linalg.norm(r) / max(np.linalg.norm(qs), 1e-300))


def pde_residual(sos, f, g, points):
    """max and RMS of |grad v . f + g| over the given points."""
    pts = np.asarray(points, dtype=float)
    _, grads = sos_eval_many(sos, pts)
    fvals = poly_eval_many(f, pts)
    r = (grads * fvals).sum(axis=1) + g_eval_many(g, pts)
    return ResidualStats(max_abs=float(np.abs(r).max()),
                         rms=float(np.sqrt((r * r).mean())))


def decay_fit(eigenvalues, n_min, n_max=None):
    """Polynomial decay exponent of the eigenvalue tail sums.

    Fits log(sum_{n >= N} lambda_n) against log N for N = n_min.. and
    returns (m_hat, fit_quality), where m_hat is minus the slope.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    lam = lam[lam > 0.0]
    if np.any(np.diff(lam) > 0.0):
        raise ValueError("eigenvalues must be sorted descending")
    if n_min < 1:
        raise ValueError("need n_min >= 1")
    if lam.size < n_min + 5:
        raise ValueError(
            f"need at least n_min+5 = {n_min + 5} positive eigenvalues, have {lam.size}")
    if n_max is None:
        # The computed tail sums underestimate the true tails near the end
        # of a finite array; keeping N in the first half keeps that
        # truncation bias out of the regression.
        n_hi = max(lam.size // 2, n_min + 1)
    else:
        n_hi = min(n_max, lam.size)
    tails = np.cumsum(lam[::-1])[::-1]
    ns = np.arange(n_min, n_hi + 1)
    x = np.log(ns)
    y = np.log(tails[n_min - 1:n_hi])
    xm = x.mean()
    ym = y.mean()
    slope = ((x - xm) * (y - ym)).sum() / ((x - xm) ** 2).sum()
    fitted = ym + slope * (x - xm)
    ss_res = ((y - fitted) ** 2).sum()
    ss_tot = ((y - ym) ** 2).sum()
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0
    return float(-slope), float(r2)


def _weighted_laguerre(n_terms, t):
    """M_n(t) = exp(-t/2) L_n(t) for n < n_terms, by the stable recurrence."""
    m = np.empty((n_terms, t.size))
    e = np.exp(-0.5 * t)
    m[0] = e
    if n_terms > 1:
        m[1] = (1.0 - t) * e
    for n in range(1, n_terms - 1):
        m[n + 1] = ((2 * n + 1 - t) * m[n] - n * m[n - 1]) / (n + 1)
    return m


def laguerre_coefficients(f, c, z, n_terms, cfg=None, tail_tol=1e-8):
    """a_n = int_0^inf c(flow_t(z)) exp(-t/2) L_n(t) dt for n < n_terms.

    The horizon comes from the cost oracle run on c^2 at tolerance
    tail_tol^2: by Cauchy-Schwarz against the unit-norm weighted Laguerre
    functions, the neglected tail of every a_n is below tail_tol.  Time
    quadrature uses composite Gauss-Legendre on cells that shrink
    geometrically toward t = 0.
    """
    if n_terms < 1 or n_terms > 60:
        raise ValueError("n_terms must be in [1, 60]")
    cfg = cfg or IntegratorConfig()
    z = np.asarray(z, dtype=float)
    ci = cost_oracle(f, NuclearCost((c,)), z, cfg=cfg, tail_tol=tail_tol ** 2)
    horizon = ci.horizon
    n_cells = max(6, int(np.ceil(np.log2(max(horizon, 1.0) / 0.02))))
    breaks = [0.0] + [horizon * 2.0 ** (k - n_cells + 1)
                      for k in range(n_cells)]
    nodes_per_cell = 30
    rule = composite_rule(breaks, nodes_per_cell)
    sol = solve_ivp(lambda t, x: poly_eval_many(f, x[None, :])[0],
                    (0.0, horizon), z, method="RK45", rtol=cfg.rel_tol,
                    atol=cfg.abs_tol, max_step=cfg.max_step, t_eval=rule.nodes)
    if not sol.success:
        raise RuntimeError(f"flow integration failed: {sol.message}")
    cvals = poly_eval_many(c, sol.y.T)[:, 0]
    m = _weighted_laguerre(n_terms, rule.nodes)
    coeffs = m @ (rule.weights * cvals)
    return LaguerreDecomposition(coefficients=coeffs, horizon=horizon,
                                 n_cells=n_cells, nodes_per_cell=nodes_per_cell)
