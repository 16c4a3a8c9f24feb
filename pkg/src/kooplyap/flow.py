"""Numerical flow, the trajectory cost oracle, and hypothesis checkers.

The cost oracle is the reference route to the value function: it
integrates g along trajectories with a certified exponential tail, and
everything the Gramian pipeline produces is ultimately compared to it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import linalg
from .model import (eval_poly_matrix, g_eval_many, poly_eval, poly_eval_many,
                    poly_jacobian, weight_eval_many)


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = np.inf
    max_time: float = 200.0

    def __post_init__(self):
        if self.rel_tol <= 0.0 or self.abs_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if not self.max_time > 0.0:
            raise ValueError("max_time must be positive")


class DomainExitWarning(UserWarning):
    """A trajectory left the stated box; results past the exit are suspect."""


class NonDecayingCostError(RuntimeError):
    """The running cost would not certify a tail within max_time."""

    def __init__(self, msg, horizon, last_cost, decay_rate, partial_value):
        super().__init__(
            f"{msg} (horizon={horizon:.6g}, cost there={last_cost:.6g}, "
            f"fitted decay rate={decay_rate:.6g}, partial value={partial_value:.6g})")
        self.horizon = horizon
        self.last_cost = last_cost
        self.decay_rate = decay_rate
        self.partial_value = partial_value


@dataclass(frozen=True)
class CostIntegral:
    value: float
    horizon: float
    tail_bound: float


@dataclass(frozen=True)
class HypothesisReport:
    name: str
    passed: bool
    witness: dict[str, float] = field(default_factory=dict)


def _rhs(f):
    def rhs(t, x):
        return poly_eval_many(f, x[None, :])[0]
    return rhs


def integrate_flow(f, z, t, cfg=None, domain=None):
    """The flow map at time t >= 0 from z, by adaptive RK45."""
    cfg = cfg or IntegratorConfig()
    z = np.asarray(z, dtype=float)
    if t < 0.0:
        raise ValueError("backward flow is not supported")
    if t == 0.0:
        return z.copy()
    sol = solve_ivp(_rhs(f), (0.0, t), z, method="RK45",
                    rtol=cfg.rel_tol, atol=cfg.abs_tol, max_step=cfg.max_step)
    if not sol.success:
        raise RuntimeError(f"flow integration failed: {sol.message}")
    if not np.all(np.isfinite(sol.y)):
        raise RuntimeError("flow integration produced non-finite states")
    if domain is not None:
        for k in range(sol.y.shape[1]):
            if not domain.contains(sol.y[:, k], overshoot=1e-8):
                warnings.warn(
                    f"trajectory left the domain near t={sol.t[k]:.4g}",
                    DomainExitWarning)
                break
    return sol.y[:, -1]


def _tail_fit(ts, gs, horizon):
    """Exponential-decay rate of g over the trailing decade of samples."""
    mask = (ts >= 0.1 * horizon) & (gs > 0.0)
    if np.count_nonzero(mask) < 5:
        return None
    t_fit = ts[mask]
    logg = np.log(gs[mask])
    t_mean = t_fit.mean()
    denom = ((t_fit - t_mean) ** 2).sum()
    if denom == 0.0:
        return None
    rate = -((t_fit - t_mean) * (logg - logg.mean())).sum() / denom
    return rate


def cost_oracle(f, g, z, cfg=None, tail_tol=1e-8):
    """v(z) = integral of g along the trajectory from z, tail-extrapolated.

    The augmented system (x' = f, v' = g(x)) is integrated in growing
    chunks.  After each chunk the decay rate of g is fitted over the last
    decade of samples; once the implied tail g(T)/rate drops below
    tail_tol the integral is returned with the tail added on.
    """
    cfg = cfg or IntegratorConfig()
    z = np.asarray(z, dtype=float)
    d = z.shape[0]

    def rhs(t, u):
        x = u[:d][None, :]
        return np.concatenate([poly_eval_many(f, x)[0], g_eval_many(g, x)])

    state = np.concatenate([z, [0.0]])
    t_now = 0.0
    chunk = 1.0
    ts = [0.0]
    gs = [float(g_eval_many(g, z[None, :])[0])]
    while True:
        t_end = min(t_now + chunk, cfg.max_time)
        sol = solve_ivp(rhs, (t_now, t_end), state, method="RK45",
                        rtol=cfg.rel_tol, atol=cfg.abs_tol, max_step=cfg.max_step)
        if not sol.success:
            raise RuntimeError(f"cost integration failed: {sol.message}")
        ts.extend(sol.t[1:].tolist())
        gs.extend(g_eval_many(g, sol.y[:d, 1:].T).tolist())
        state = sol.y[:, -1]
        t_now = t_end
        value_so_far = state[d]
        g_now = gs[-1]
        if g_now <= tail_tol * 1e-6:
            # cost has numerically died out (e.g. started at the equilibrium)
            return CostIntegral(value=value_so_far + g_now, horizon=t_now,
                                tail_bound=g_now)
        rate = _tail_fit(np.asarray(ts), np.asarray(gs), t_now)
        if rate is not None and rate > 0.0:
            tail = g_now / rate
            if tail < tail_tol:
                return CostIntegral(value=value_so_far + tail, horizon=t_now,
                                    tail_bound=tail)
        if t_now >= cfg.max_time:
            raise NonDecayingCostError(
                "cost tail not certified within max_time", horizon=t_now,
                last_cost=g_now, decay_rate=rate if rate is not None else np.nan,
                partial_value=value_so_far)
        chunk = min(2.0 * chunk, cfg.max_time - t_now)


def _face_points(dom, axis, side, n_per_face):
    axes = [np.linspace(lo, up, n_per_face)
            for lo, up in zip(dom.lower, dom.upper)]
    axes[axis] = np.array([dom.lower[axis] if side < 0 else dom.upper[axis]])
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def check_tangent(f, dom, n_per_face=50, tol_boundary=1e-12):
    """Outward flux of f over a uniform grid of each box face.

    At edges and corners the outward normal is the sum of the normals of
    all active faces (the generators of the normal cone), so an outward
    field is flagged there too.
    """
    if n_per_face < 2:
        raise ValueError("need n_per_face >= 2")
    lo = np.asarray(dom.lower)
    up = np.asarray(dom.upper)
    worst = -np.inf
    for axis in range(dom.dim):
        for side in (-1, +1):
            pts = _face_points(dom, axis, side, n_per_face)
            fv = poly_eval_many(f, pts)
            worst = max(worst, float((side * fv[:, axis]).max()))
            # at edges and corners also test the summed normal of all
            # active faces (the extreme ray of the normal cone)
            normals = np.zeros_like(pts)
            normals[pts == up[None, :]] = 1.0
            normals[pts == lo[None, :]] = -1.0
            multi = np.abs(normals).sum(axis=1) > 1.0
            if np.any(multi):
                flux = (normals[multi] * fv[multi]).sum(axis=1)
                worst = max(worst, float(flux.max()))
    return HypothesisReport(
        name="tangent_condition",
        passed=worst <= tol_boundary,
        witness={"max_boundary_flux": worst})


def estimate_omega0(f, w, grid_pts):
    """Grid maximum of -f(x)^T grad w(x) / w(x), a lower bound on the esssup."""
    pts = np.asarray(grid_pts, dtype=float)
    if pts.size == 0:
        raise ValueError("empty grid")
    vals, grads = weight_eval_many(w, pts)
    fvals = poly_eval_many(f, pts)
    return float(np.max(-(fvals * grads).sum(axis=1) / vals))


def omega0_scan_grid(dom, w, n_per_dim=41):
    """Uniform scan grid for estimate_omega0.

    Odd counts put points on the coordinate axes through the equilibrium
    and the boundary is included; both matter because the extremum of the
    weight-decay quotient often sits there.  Points coinciding with
    singular points of the weight are dropped.
    """
    if n_per_dim % 2 == 0:
        n_per_dim += 1
    axes = [np.linspace(lo, up, n_per_dim)
            for lo, up in zip(dom.lower, dom.upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    keep = np.ones(pts.shape[0], dtype=bool)
    for s in w.singular_points:
        keep &= np.linalg.norm(pts - np.asarray(s), axis=1) > 1e-12
    return pts[keep]


def check_decay_bound(f, w, z, times, omega0, cfg=None):
    """Checks w(z) <= exp(t*omega0) * w(flow_t(z)) along one trajectory."""
    cfg = cfg or IntegratorConfig()
    z = np.asarray(z, dtype=float)
    times = np.asarray(sorted(times), dtype=float)
    if times.size == 0 or times[0] < 0.0:
        raise ValueError("times must be non-negative")
    sol = solve_ivp(_rhs(f), (0.0, float(times[-1])), z, method="RK45",
                    rtol=cfg.rel_tol, atol=cfg.abs_tol, max_step=cfg.max_step,
                    t_eval=times)
    if not sol.success:
        raise RuntimeError(f"flow integration failed: {sol.message}")
    w_z = weight_eval_many(w, z[None, :])[0][0]
    w_t = weight_eval_many(w, sol.y.T)[0]
    ratio = w_z / (np.exp(times * omega0) * w_t)
    worst = float((ratio - 1.0).max())
    return HypothesisReport(
        name="decay_bound",
        passed=worst <= 1e-6,
        witness={"max_violation": worst})


def check_port_hamiltonian(h, j, r, grid_pts, tol=1e-10):
    """Structure checks and the dissipation quotient for (H, J, R)."""
    pts = np.asarray(grid_pts, dtype=float)
    hvals = poly_eval_many(h, pts)[:, 0]
    if np.any(hvals <= 0.0):
        bad = pts[int(np.argmin(hvals))]
        raise ValueError(f"H must be positive on the grid, violated at {tuple(bad)}")
    skew_defect = 0.0
    sym_defect = 0.0
    min_r_eig = np.inf
    omega0 = -np.inf
    for q in range(pts.shape[0]):
        x = pts[q]
        jm = eval_poly_matrix(j, x)
        rm = eval_poly_matrix(r, x)
        skew_defect = max(skew_defect, float(np.abs(jm + jm.T).max()))
        sym_defect = max(sym_defect, float(np.abs(rm - rm.T).max()))
        rs = 0.5 * (rm + rm.T)
        min_r_eig = min(min_r_eig, float(linalg.sym_eig(rs).values.min()))
        gh = poly_jacobian(h, x)[0]
        omega0 = max(omega0, float(-(gh @ rs @ gh) / (2.0 * hvals[q])))
    scale = max(1.0, abs(omega0))
    passed = (omega0 < 0.0 and skew_defect <= tol and sym_defect <= tol
              and min_r_eig >= -tol * scale)
    return HypothesisReport(
        name="port_hamiltonian",
        passed=passed,
        witness={"omega0": omega0, "max_skew_defect": skew_defect,
                 "max_sym_defect": sym_defect, "min_R_eigenvalue": min_r_eig})


def check_linearization(f, x_eq=None):
    """Spectral abscissa of the Jacobian at the equilibrium."""
    x_eq = np.zeros(f.dim_in) if x_eq is None else np.asarray(x_eq, dtype=float)
    resid = float(np.max(np.abs(poly_eval(f, x_eq))))
    if resid > 1e-10:
        raise ValueError(f"f does not vanish at the stated equilibrium: |f| = {resid:.3g}")
    jac = poly_jacobian(f, x_eq)
    abscissa = linalg.spectral_abscissa(jac)
    return HypothesisReport(
        name="linearization",
        passed=abscissa < 0.0,
        witness={"spectral_abscissa": abscissa})
