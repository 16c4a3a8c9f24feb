"""Legendre and B-spline tensor bases, weighted Gram matrices, whitening.

The Galerkin space used downstream is the span of an orthonormalized
tensor basis.  When the weight is singular at the equilibrium the raw
basis must first be reduced to functions vanishing there, see
shift_to_equilibrium.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import linalg
from .quadrature import TensorGrid


@dataclass(frozen=True)
class Basis1D:
    """Univariate basis on an interval: Legendre up to a degree, or B-splines."""

    kind: str
    interval: tuple[float, float]
    max_degree: int = -1
    knots: np.ndarray | None = None
    degree: int = -1

    @staticmethod
    def legendre(max_degree, interval=(-1.0, 1.0)):
        if max_degree < 0:
            raise ValueError("need max_degree >= 0")
        a, b = float(interval[0]), float(interval[1])
        if not b > a:
            raise ValueError("need a < b")
        return Basis1D(kind="legendre", interval=(a, b), max_degree=int(max_degree))

    @staticmethod
    def bspline(breakpoints, degree):
        bk = np.asarray(breakpoints, dtype=float)
        if bk.size < 2 or np.any(np.diff(bk) <= 0.0):
            raise ValueError("breakpoints must be >= 2 and strictly increasing")
        if degree < 1:
            raise ValueError("need degree >= 1 for differentiable splines")
        # Clamped (open) knot vector: full multiplicity at both ends.
        knots = np.concatenate([[bk[0]] * degree, bk, [bk[-1]] * degree])
        knots.flags.writeable = False
        return Basis1D(kind="bspline", interval=(float(bk[0]), float(bk[-1])),
                       knots=knots, degree=int(degree))

    @property
    def count(self):
        if self.kind == "legendre":
            return self.max_degree + 1
        return len(self.knots) - self.degree - 1


def legendre_eval(k, x):
    """(P_k(x), P_k'(x)) on the reference interval [-1, 1]."""
    vals, ders = _legendre_all(k, np.asarray([x], dtype=float))
    return float(vals[0, k]), float(ders[0, k])


def _legendre_all(max_degree, x):
    """All (P_k(x), P_k'(x)) for k <= max_degree; x is a 1d array."""
    m = x.shape[0]
    vals = np.ones((m, max_degree + 1))
    ders = np.zeros((m, max_degree + 1))
    if max_degree >= 1:
        vals[:, 1] = x
        ders[:, 1] = 1.0
    for k in range(2, max_degree + 1):
        vals[:, k] = ((2 * k - 1) * x * vals[:, k - 1] - (k - 1) * vals[:, k - 2]) / k
        ders[:, k] = ders[:, k - 2] + (2 * k - 1) * vals[:, k - 1]
    return vals, ders


def bspline_eval(basis, i, x):
    """(B_i(x), B_i'(x)) for the i-th spline of a bspline Basis1D."""
    if basis.kind != "bspline":
        raise ValueError("bspline_eval needs a bspline basis")
    if not 0 <= i < basis.count:
        raise IndexError(f"spline index {i} out of range [0, {basis.count})")
    vals, ders = _bspline_all(basis, np.asarray([x], dtype=float))
    return float(vals[0, i]), float(ders[0, i])


def _bspline_all(basis, x):
    """All B-spline values and derivatives at the points x (1d array)."""
    t = basis.knots
    p = basis.degree
    m = x.shape[0]
    nspans = len(t) - 1
    # Degree-0 indicators; the query point is assigned to one span, with
    # points at or beyond the right end folded into the last real span.
    span = np.searchsorted(t, x, side="right") - 1
    span = np.clip(span, p, len(t) - p - 2)
    b = np.zeros((m, nspans))
    b[np.arange(m), span] = 1.0
    prev = b
    for d in range(1, p + 1):
        nf = nspans - d
        cur = np.zeros((m, nf))
        for i in range(nf):
            den1 = t[i + d] - t[i]
            den2 = t[i + d + 1] - t[i + 1]
            if den1 > 0.0:
                cur[:, i] += (x - t[i]) / den1 * prev[:, i]
            if den2 > 0.0:
                cur[:, i] += (t[i + d + 1] - x) / den2 * prev[:, i + 1]
        if d == p:
            ders = np.zeros((m, nf))
            for i in range(nf):
                den1 = t[i + p] - t[i]
                den2 = t[i + p + 1] - t[i + 1]
                if den1 > 0.0:
                    ders[:, i] += p / den1 * prev[:, i]
                if den2 > 0.0:
                    ders[:, i] -= p / den2 * prev[:, i + 1]
        prev = cur
    return prev, ders


def _eval1d(basis, x):
    """Values and x-derivatives of every basis function at the points x."""
    x = np.asarray(x, dtype=float)
    if basis.kind == "legendre":
        a, b = basis.interval
        xi = (2.0 * x - a - b) / (b - a)
        vals, ders = _legendre_all(basis.max_degree, xi)
        return vals, ders * (2.0 / (b - a))
    return _bspline_all(basis, x)


@dataclass(frozen=True)
class TensorBasis:
    """Product basis b_j(x) = prod_k factor_k[j_k](x_k), minus optional shifts.

    shifts are constants subtracted per retained function so that shifted
    functions vanish at the equilibrium; gradients are unaffected.
    """

    factors: tuple[Basis1D, ...]
    indices: tuple[tuple[int, ...], ...]
    shifts: np.ndarray | None = None
    equilibrium_vanishing: bool = False

    @property
    def dim(self):
        return len(self.factors)

    @property
    def count(self):
        return len(self.indices)


def tensor_basis(factors):
    """Full tensor-product index set over the given 1D factors."""
    factors = tuple(factors)
    idx = tuple(itertools.product(*(range(f.count) for f in factors)))
    return TensorBasis(factors=factors, indices=idx)


def shift_to_equilibrium(basis, x_eq):
    """Reduce to functions vanishing at x_eq.

    Every function is shifted by its value at x_eq and the function with
    the largest such value is dropped; for a basis containing constants
    this removes exactly the constant direction from the span.  The
    resulting span is {b in span : b(x_eq) = 0}.
    """
    if basis.equilibrium_vanishing:
        raise ValueError("basis is already equilibrium-vanishing")
    x_eq = np.asarray(x_eq, dtype=float)
    vals_at_eq = _eval_points(basis, x_eq[None, :])[0][0]
    drop = int(np.argmax(np.abs(vals_at_eq)))
    if np.abs(vals_at_eq[drop]) == 0.0:
        raise ValueError("no function takes a nonzero value at the equilibrium")
    keep = [j for j in range(basis.count) if j != drop]
    return TensorBasis(
        factors=basis.factors,
        indices=tuple(basis.indices[j] for j in keep),
        shifts=vals_at_eq[keep].copy(),
        equilibrium_vanishing=True)


@dataclass(frozen=True)
class EvalTable:
    """Basis values and per-axis partial derivatives at a fixed point set."""

    values: np.ndarray
    gradients: tuple[np.ndarray, ...]


def _axis_tables(basis, axis_points):
    return [_eval1d(f, pts) for f, pts in zip(basis.factors, axis_points)]


def _outer_rows(tabs):
    # tabs: per-axis (n_k, c_k) value tables -> (prod n_k, prod c_k) in C order.
    out = tabs[0]
    for nxt in tabs[1:]:
        out = (out[:, None, :, None] * nxt[None, :, None, :]).reshape(
            out.shape[0] * nxt.shape[0], out.shape[1] * nxt.shape[1])
    return out


def eval_table(basis, grid):
    """Tabulate the basis on a TensorGrid, exploiting the product structure."""
    if len(basis.factors) != grid.dim:
        raise ValueError("basis and grid dimensions differ")
    axes = _axis_tables(basis, grid.axis_nodes)
    counts = tuple(f.count for f in basis.factors)
    cols = np.ravel_multi_index(np.asarray(basis.indices).T, counts)
    values = _outer_rows([v for v, _ in axes])[:, cols]
    grads = []
    for k in range(basis.dim):
        tabs = [d if j == k else v for j, (v, d) in enumerate(axes)]
        grads.append(_outer_rows(tabs)[:, cols])
    if basis.shifts is not None:
        values = values - basis.shifts[None, :]
    return EvalTable(values=values, gradients=tuple(grads))


def _eval_points(basis, pts):
    """Values (m, count) and gradients (m, dim, count) at arbitrary points."""
    pts = np.asarray(pts, dtype=float)
    m = pts.shape[0]
    axes = [_eval1d(f, pts[:, k]) for k, f in enumerate(basis.factors)]
    n = basis.count
    values = np.ones((m, n))
    grads = np.ones((m, basis.dim, n))
    for j, idx in enumerate(basis.indices):
        for k, jk in enumerate(idx):
            vk = axes[k][0][:, jk]
            values[:, j] *= vk
            for a in range(basis.dim):
                grads[:, a, j] *= axes[k][1][:, jk] if a == k else vk
    if basis.shifts is not None:
        values = values - basis.shifts[None, :]
    return values, grads


def gram_matrix(basis, grid, table=None):
    """G_jk = <b_j, b_k> in the discrete weighted inner product of the grid."""
    if table is None:
        table = eval_table(basis, grid)
    v = table.values
    g = v.T @ (grid.ip_weights[:, None] * v)
    return 0.5 * (g + g.T)


def whiten_gram(g, drop_tol=1e-12):
    """Coefficient map W with W^T G W = I on the retained rank.

    Eigendirections with eigenvalue <= drop_tol * max eigenvalue are
    dropped; they correspond to functions the quadrature cannot tell apart.
    """
    eig = linalg.sym_eig(g)
    lam_max = eig.values[0] if eig.values.size else 0.0
    if lam_max <= 0.0:
        raise ValueError("Gram matrix has no positive eigenvalues")
    kept = eig.values > drop_tol * lam_max
    rank = int(np.count_nonzero(kept))
    w = eig.vectors[:, kept] / np.sqrt(eig.values[kept])[None, :]
    return w, rank


# The spec of this operation in terms of the Gram matrix alone.
orthonormalize = whiten_gram


@dataclass(frozen=True)
class OrthonormalBasis:
    """Whitened tensor basis with cached tables on its defining grid."""

    raw: TensorBasis
    whitener: np.ndarray
    grid: TensorGrid
    table: EvalTable

    @property
    def rank(self):
        return self.whitener.shape[1]

    @property
    def dim(self):
        return self.raw.dim


def make_orthonormal(basis, grid, drop_tol=1e-12):
    raw_table = eval_table(basis, grid)
    g = gram_matrix(basis, grid, table=raw_table)
    w, _ = whiten_gram(g, drop_tol=drop_tol)
    # One-shot whitening leaves an orthonormality defect of order
    # eps * cond(G), which is far too large for high-degree bases under
    # singular weights.  A second pass against the recomputed grid Gram
    # of the whitened functions brings it back to machine level.
    phi = raw_table.values @ w
    g2 = phi.T @ (grid.ip_weights[:, None] * phi)
    w2, _ = whiten_gram(0.5 * (g2 + g2.T), drop_tol=drop_tol)
    w = w @ w2
    table = EvalTable(values=phi @ w2,
                      gradients=tuple(d @ w for d in raw_table.gradients))
    return OrthonormalBasis(raw=basis, whitener=w, grid=grid, table=table)


def onb_eval(onb, pts):
    """Orthonormal-basis values (m, rank) and gradients (m, dim, rank)."""
    values, grads = _eval_points(onb.raw, pts)
    return values @ onb.whitener, grads @ onb.whitener


def project(samples, onb):
    """Coefficients <samples, phi_j> in the discrete weighted inner product."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape != (onb.grid.size,):
        raise ValueError(
            f"samples must be given at the {onb.grid.size} grid points")
    return (onb.grid.ip_weights * samples) @ onb.table.values
