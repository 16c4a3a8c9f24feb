"""Gauss-Legendre rules, composite rules, and weighted tensor grids.

A TensorGrid carries the volume weights and cached w^2 values that define
the discrete weighted inner product used everywhere downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import weight_eval_many


@dataclass(frozen=True)
class Rule1D:
    """Quadrature rule on [a, b]: positive weights summing to b - a."""

    a: float
    b: float
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        n = self.nodes
        if n.size == 0 or np.any(np.diff(n) <= 0.0):
            raise ValueError("nodes must be non-empty and strictly increasing")
        if n[0] <= self.a or n[-1] >= self.b:
            raise ValueError("nodes must lie strictly inside (a, b)")
        if np.any(self.weights <= 0.0):
            raise ValueError("weights must be positive")
        self.nodes.flags.writeable = False
        self.weights.flags.writeable = False


def _legendre_pair(n, x):
    # P_n(x) and P_n'(x) by the three-term recurrence; x may be an array.
    p0 = np.ones_like(x)
    if n == 0:
        return p0, np.zeros_like(x)
    p1 = x.copy()
    for k in range(1, n):
        p0, p1 = p1, ((2 * k + 1) * x * p1 - k * p0) / (k + 1)
    dp = n * (x * p1 - p0) / (x * x - 1.0)
    return p1, dp


def gauss_legendre(n, a=-1.0, b=1.0):
    """n-point Gauss-Legendre rule on [a, b]."""
    if n < 1:
        raise ValueError("need n >= 1")
    if not b > a:
        raise ValueError("need a < b")
    half = n // 2
    if half:
        # Positive roots only, by Newton from Chebyshev points; the rest
        # follow by symmetry so the rule is symmetric to the last bit.
        k = np.arange(half)
        x = np.cos(np.pi * (k + 0.5) / n)
        for _ in range(100):
            p, dp = _legendre_pair(n, x)
            dx = p / dp
            x -= dx
            if np.max(np.abs(dx)) < 1e-15:
                break
        else:
            raise RuntimeError(f"Legendre root Newton iteration stalled at n={n}")
        _, dp = _legendre_pair(n, x)
        wpos = 2.0 / ((1.0 - x * x) * dp * dp)
    else:
        x = np.empty(0)
        wpos = np.empty(0)
    if n % 2:
        _, dp0 = _legendre_pair(n, np.zeros(1))
        nodes = np.concatenate([-x, [0.0], x[::-1]])
        weights = np.concatenate([wpos, 2.0 / (dp0 * dp0), wpos[::-1]])
    else:
        nodes = np.concatenate([-x, x[::-1]])
        weights = np.concatenate([wpos, wpos[::-1]])
    mid = 0.5 * (a + b)
    hw = 0.5 * (b - a)
    return Rule1D(a=float(a), b=float(b), nodes=mid + hw * nodes, weights=hw * weights)


def composite_rule(breakpoints, n_per_cell):
    """Concatenated Gauss-Legendre rules over consecutive breakpoint cells."""
    bk = np.asarray(breakpoints, dtype=float)
    if bk.size < 2:
        raise ValueError("need at least two breakpoints")
    if np.any(np.diff(bk) <= 0.0):
        raise ValueError("breakpoints must be strictly increasing")
    if n_per_cell < 1:
        raise ValueError("need n_per_cell >= 1")
    nodes = []
    weights = []
    for lo, hi in zip(bk[:-1], bk[1:]):
        cell = gauss_legendre(n_per_cell, lo, hi)
        nodes.append(cell.nodes)
        weights.append(cell.weights)
    return Rule1D(a=float(bk[0]), b=float(bk[-1]),
                  nodes=np.concatenate(nodes), weights=np.concatenate(weights))


@dataclass(frozen=True)
class TensorGrid:
    """Cartesian product of 1D rules with cached w^2 factors.

    points are in C order over the axis nodes: the last axis varies
    fastest, matching ``axis_nodes`` raveling.

    ip_weights are the inner-product weights ω_q w²(x_q) / Σ ω, i.e. the
    volume weights are normalized to unit total mass.  Working against the
    normalized measure keeps Gramian eigenvalues comparable across domain
    sizes; every discrete inner product downstream uses these weights.
    """

    points: np.ndarray
    vol_weights: np.ndarray
    w2_factors: np.ndarray
    ip_weights: np.ndarray
    axis_nodes: tuple[np.ndarray, ...]

    def __post_init__(self):
        for arr in (self.points, self.vol_weights, self.w2_factors, self.ip_weights):
            arr.flags.writeable = False

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def shape(self):
        return tuple(ax.size for ax in self.axis_nodes)

    @property
    def size(self):
        return self.points.shape[0]


def tensor_grid(rules, w):
    """Tensorize per-dimension rules and cache w^2 at the nodes."""
    rules = tuple(rules)
    if not rules:
        raise ValueError("need at least one rule")
    axis_nodes = tuple(r.nodes for r in rules)
    mesh = np.meshgrid(*axis_nodes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    wmesh = np.meshgrid(*(r.weights for r in rules), indexing="ij")
    vol = np.ones(points.shape[0])
    for m in wmesh:
        vol = vol * m.ravel()
    scale = max(max(r.b - r.a for r in rules), 1.0)
    for s in w.singular_points:
        d = np.linalg.norm(points - np.asarray(s), axis=1)
        q = int(np.argmin(d))
        if d[q] <= 1e-9 * scale:
            node = tuple(float(v) for v in points[q])
            raise ValueError(
                f"quadrature node {node} coincides with a singular point of "
                f"the weight at {s}; use even node counts or shifted cells")
    vals, _ = weight_eval_many(w, points)
    w2 = vals * vals
    return TensorGrid(points=points, vol_weights=vol, w2_factors=w2,
                      ip_weights=vol * w2 / vol.sum(), axis_nodes=axis_nodes)


def grid_quadrature(grid, samples):
    """Plain volume integral of sampled values (no weight factor)."""
    return float(np.dot(grid.vol_weights, samples))


def dump_grid_csv(grid, path):
    with open(path, "w") as fh:
        d = grid.dim
        cols = [f"x{i + 1}" for i in range(d)] + ["vol_weight", "w2"]
        fh.write(",".join(cols) + "\n")
        for q in range(grid.size):
            row = [repr(float(v)) for v in grid.points[q]]
            row.append(repr(float(grid.vol_weights[q])))
            row.append(repr(float(grid.w2_factors[q])))
            fh.write(",".join(row) + "\n")
