"""Problem data: polynomial maps, nuclear costs, weights, box domains.

Polynomials are kept as explicit term lists (coefficient, multi-index) and
evaluated by per-term power products, so evaluation and formal
differentiation are exact in the coefficients.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class MultiIndex:
    """Exponent tuple of a monomial x^alpha."""

    exponents: tuple[int, ...]

    def __post_init__(self):
        if not all(isinstance(e, int) and e >= 0 for e in self.exponents):
            raise ValueError(f"exponents must be non-negative integers: {self.exponents}")

    @property
    def degree(self):
        return sum(self.exponents)


@dataclass(frozen=True)
class PolynomialMap:
    """Vector-valued polynomial: components[i] is a tuple of (coeff, MultiIndex)."""

    dim_in: int
    components: tuple[tuple[tuple[float, MultiIndex], ...], ...]

    def __post_init__(self):
        for terms in self.components:
            for _, mi in terms:
                if len(mi.exponents) != self.dim_in:
                    raise ValueError(
                        f"multi-index {mi.exponents} does not match dim_in={self.dim_in}")

    @property
    def dim_out(self):
        return len(self.components)

    @staticmethod
    def from_terms(dim_in, term_lists):
        """Build from [[(coeff, exponent_tuple), ...], ...]."""
        comps = tuple(
            tuple((float(c), MultiIndex(tuple(int(e) for e in ex))) for c, ex in terms)
            for terms in term_lists)
        return PolynomialMap(dim_in=dim_in, components=comps)

    @staticmethod
    def linear(a):
        """The map x -> A x."""
        a = np.asarray(a, dtype=float)
        n_out, n_in = a.shape
        term_lists = []
        for i in range(n_out):
            terms = []
            for j in range(n_in):
                if a[i, j] != 0.0:
                    ex = [0] * n_in
                    ex[j] = 1
                    terms.append((a[i, j], tuple(ex)))
            term_lists.append(terms)
        return PolynomialMap.from_terms(n_in, term_lists)


@functools.lru_cache(maxsize=256)
def _component_arrays(p):
    # per-component (coeffs, exponents) arrays; cached because flow
    # integration calls the same map hundreds of thousands of times
    out = []
    for terms in p.components:
        coeffs = np.array([c for c, _ in terms], dtype=float)
        expo = np.array([mi.exponents for _, mi in terms],
                        dtype=int).reshape(len(terms), p.dim_in)
        out.append((coeffs, expo))
    return out


def poly_eval(p, x):
    """Evaluate p at a single point; returns shape (dim_out,)."""
    return poly_eval_many(p, np.asarray(x, dtype=float)[None, :])[0]


def poly_eval_many(p, pts):
    """Evaluate p at points of shape (m, dim_in); returns (m, dim_out)."""
    pts = np.asarray(pts, dtype=float)
    m = pts.shape[0]
    out = np.zeros((m, p.dim_out))
    for i, (coeffs, expo) in enumerate(_component_arrays(p)):
        if coeffs.size == 0:
            continue
        mono = np.prod(pts[:, None, :] ** expo[None, :, :], axis=2)
        out[:, i] = mono @ coeffs
    return out


def poly_jacobian(p, x):
    """Jacobian dp/dx at a point by formal term differentiation; (dim_out, dim_in)."""
    x = np.asarray(x, dtype=float)
    jac = np.zeros((p.dim_out, p.dim_in))
    for i, terms in enumerate(p.components):
        for c, mi in terms:
            ex = mi.exponents
            for j in range(p.dim_in):
                if ex[j] == 0:
                    continue
                val = c * ex[j]
                for k in range(p.dim_in):
                    e = ex[k] - 1 if k == j else ex[k]
                    if e:
                        val *= x[k] ** e
                jac[i, j] += val
    return jac


@dataclass(frozen=True)
class NuclearCost:
    """Cost g(x) = sum_i c_i(x)^2 for scalar polynomial observables c_i."""

    observables: tuple[PolynomialMap, ...]

    def __post_init__(self):
        for c in self.observables:
            if c.dim_out != 1:
                raise ValueError("each observable must be scalar valued")


def quadratic_cost(dim):
    """The coordinate observables c_i(x) = x_i, i.e. g(x) = ||x||^2."""
    obs = []
    for i in range(dim):
        ex = [0] * dim
        ex[i] = 1
        obs.append(PolynomialMap.from_terms(dim, [[(1.0, tuple(ex))]]))
    return NuclearCost(observables=tuple(obs))


def g_eval_many(cost, pts):
    """g(x) = sum of squared observables; returns (m,)."""
    pts = np.asarray(pts, dtype=float)
    total = np.zeros(pts.shape[0])
    for c in cost.observables:
        total += poly_eval_many(c, pts)[:, 0] ** 2
    return total


def g_eval(cost, x):
    return float(g_eval_many(cost, np.asarray(x, dtype=float)[None, :])[0])


@dataclass(frozen=True)
class WeightFunction:
    """Positive weight w on the domain; gradients are available analytically.

    kinds: ``constant`` (value c), ``inverse_norm`` (1/||x - center||),
    ``hamiltonian`` (H^{-1/2} for a polynomial H > 0 away from x_eq).
    """

    kind: str
    value: float = 1.0
    center: tuple[float, ...] | None = None
    hamiltonian: PolynomialMap | None = None
    singular_points: tuple[tuple[float, ...], ...] = field(default=())

    @staticmethod
    def constant(value=1.0):
        if value <= 0.0:
            raise ValueError("constant weight must be positive")
        return WeightFunction(kind="constant", value=float(value))

    @staticmethod
    def inverse_norm(center):
        center = tuple(float(c) for c in center)
        return WeightFunction(kind="inverse_norm", center=center,
                              singular_points=(center,))

    @staticmethod
    def from_hamiltonian(h, singular_points):
        if h.dim_out != 1:
            raise ValueError("hamiltonian must be scalar valued")
        pts = tuple(tuple(float(c) for c in p) for p in singular_points)
        return WeightFunction(kind="hamiltonian", hamiltonian=h, singular_points=pts)


def weight_eval(w, x):
    """Returns (w(x), grad w(x)); raises at singular points."""
    vals, grads = weight_eval_many(w, np.asarray(x, dtype=float)[None, :])
    return float(vals[0]), grads[0]


def weight_eval_many(w, pts):
    """Vectorized weight evaluation; returns (values (m,), gradients (m, d))."""
    pts = np.asarray(pts, dtype=float)
    m, d = pts.shape
    if w.kind == "constant":
        return np.full(m, w.value), np.zeros((m, d))
    if w.kind == "inverse_norm":
        diff = pts - np.asarray(w.center)
        r = np.sqrt((diff * diff).sum(axis=1))
        if np.any(r == 0.0):
            raise ValueError("inverse-norm weight evaluated at its singular point")
        vals = 1.0 / r
        grads = -diff / r[:, None] ** 3
        return vals, grads
    if w.kind == "hamiltonian":
        h = poly_eval_many(w.hamiltonian, pts)[:, 0]
        if np.any(h <= 0.0):
            bad = pts[int(np.argmin(h))]
            raise ValueError(f"hamiltonian weight needs H > 0, violated at {bad}")
        vals = h ** -0.5
        grads = np.empty((m, d))
        for q in range(m):
            grads[q] = -0.5 * h[q] ** -1.5 * poly_jacobian(w.hamiltonian, pts[q])[0]
        return vals, grads
    raise ValueError(f"unknown weight kind {w.kind!r}")


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box with a marked interior equilibrium."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    equilibrium: tuple[float, ...] | None = None

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        up = tuple(float(v) for v in self.upper)
        if len(lo) != len(up) or not lo:
            raise ValueError("lower/upper must be equal-length, non-empty")
        if any(l >= u for l, u in zip(lo, up)):
            raise ValueError("need lower < upper in every coordinate")
        eq = self.equilibrium
        eq = tuple(0.0 for _ in lo) if eq is None else tuple(float(v) for v in eq)
        if any(not (l < e < u) for l, e, u in zip(lo, eq, up)):
            raise ValueError("equilibrium must lie strictly inside the box")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)
        object.__setattr__(self, "equilibrium", eq)

    @property
    def dim(self):
        return len(self.lower)

    @property
    def volume(self):
        return float(np.prod(np.asarray(self.upper) - np.asarray(self.lower)))

    def contains(self, x, overshoot=0.0):
        x = np.asarray(x, dtype=float)
        lo = np.asarray(self.lower) - overshoot
        up = np.asarray(self.upper) + overshoot
        return bool(np.all(x >= lo) and np.all(x <= up))


# Constant matrices wrapped as PolynomialMap entries, for structure checks
# that accept polynomial J(x), R(x).
def constant_poly_matrix(a, dim_in):
    a = np.asarray(a, dtype=float)
    zero_ex = tuple([0] * dim_in)
    return tuple(
        tuple(PolynomialMap.from_terms(dim_in, [[(a[i, j], zero_ex)]])
              for j in range(a.shape[1]))
        for i in range(a.shape[0]))


def eval_poly_matrix(m, x):
    """Evaluate a matrix of scalar PolynomialMaps at a point."""
    return np.array([[poly_eval(entry, x)[0] for entry in row] for row in m])


LINEAR2D_MATRIX = np.array([[-2.0, 1.0], [-1.0, -3.0]])


def _vdp_field(mu, eta, alpha):
    # x1' = x2 - alpha x1^3
    # x2' = -mu (x1^2 - 1) x2 - x1 - eta x2
    return PolynomialMap.from_terms(2, [
        [(1.0, (0, 1)), (-alpha, (3, 0))],
        [(-mu, (2, 1)), (mu - eta, (0, 1)), (-1.0, (1, 0))],
    ])


def _check_params(name, params, allowed):
    unknown = sorted(set(params) - set(allowed))
    if unknown:
        raise ValueError(f"unknown parameters for {name}: {', '.join(unknown)}")


def builtin_system(name, params=None):
    """Named example problems.

    Returns (field, cost, weight, domain).  Raises on unknown names and on
    parameter values that break the construction's standing hypotheses.
    """
    params = dict(params or {})
    if name == "linear2d":
        _check_params(name, params, ())
        f = PolynomialMap.linear(LINEAR2D_MATRIX)
        domain = BoxDomain(lower=(-1.0, -1.0), upper=(1.0, 1.0))
        return f, quadratic_cost(2), WeightFunction.inverse_norm((0.0, 0.0)), domain
    if name == "vdp_modified":
        _check_params(name, params, ("mu", "eta", "alpha"))
        mu = float(params.get("mu", 2.0))
        eta = float(params.get("eta", 2.2))
        alpha = float(params.get("alpha", 0.15))
        if alpha <= 0.0:
            raise ValueError("vdp_modified needs alpha > 0 (cubic confinement term)")
        if eta <= mu:
            raise ValueError(
                "vdp_modified needs eta > mu: the linearization at the origin "
                f"is not Hurwitz for eta = {eta}, mu = {mu}")
        f = _vdp_field(mu, eta, alpha)
        domain = BoxDomain(lower=(-3.0, -3.0), upper=(3.0, 3.0))
        return f, quadratic_cost(2), WeightFunction.inverse_norm((0.0, 0.0)), domain
    if name == "port_hamiltonian_demo":
        _check_params(name, params, ("r",))
        r = float(params.get("r", 1.0))
        if r <= 0.0:
            raise ValueError("port_hamiltonian_demo needs r > 0 (dissipation)")
        h, j, rr = port_hamiltonian_parts(r)
        a = eval_poly_matrix(j, (0.0, 0.0)) - eval_poly_matrix(rr, (0.0, 0.0))
        f = PolynomialMap.linear(a)  # (J - R) grad H with H = ||x||^2 / 2
        domain = BoxDomain(lower=(-1.0, -1.0), upper=(1.0, 1.0))
        w = WeightFunction.from_hamiltonian(_half_norm_squared(), ((0.0, 0.0),))
        return f, quadratic_cost(2), w, domain
    raise ValueError(f"unknown builtin system {name!r}")


def _half_norm_squared():
    return PolynomialMap.from_terms(2, [[(0.5, (2, 0)), (0.5, (0, 2))]])


def port_hamiltonian_parts(r=1.0):
    """(H, J, R) for the demo system: H = ||x||^2/2, canonical J, R = r I."""
    h = _half_norm_squared()
    j = constant_poly_matrix(np.array([[0.0, 1.0], [-1.0, 0.0]]), 2)
    rr = constant_poly_matrix(r * np.eye(2), 2)
    return h, j, rr
