"""Dense linear algebra kernels.

Symmetric eigendecomposition (cyclic Jacobi), real Schur form (Householder
reduction plus Francis double-shift QR), a Lyapunov solver in Schur
coordinates, a Kronecker-system Lyapunov solver used as an independent
cross-check, and a blocked LU with partial pivoting that backs it.

All matrices are plain float64 ndarrays.  The two Lyapunov routes share no
factorization code on purpose: agreement between them is a meaningful check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_EPS = np.finfo(float).eps


class ConvergenceError(RuntimeError):
    """An iterative kernel exceeded its sweep budget."""


class SingularMatrixError(RuntimeError):
    """Exact zero pivot during elimination."""


class SingularSylvesterError(RuntimeError):
    """The Lyapunov operator K P + P K^T is singular for the given K."""


@dataclass(frozen=True)
class SchurForm:
    """Real Schur factorization A = Q T Q^T with T quasi upper triangular."""

    q: np.ndarray
    t: np.ndarray


@dataclass(frozen=True)
class SymEig:
    """Eigendecomposition S = V diag(values) V^T, values descending."""

    values: np.ndarray
    vectors: np.ndarray


def _house(x):
    """Householder vector v (v[0] = 1) and beta with (I - beta v v^T) x = ||x|| e1."""
    x = np.asarray(x, dtype=float)
    sigma = float(x[1:] @ x[1:])
    v = x.copy()
    v[0] = 1.0
    if sigma == 0.0:
        return v, 0.0
    mu = np.sqrt(x[0] * x[0] + sigma)
    if x[0] <= 0.0:
        v0 = x[0] - mu
    else:
        v0 = -sigma / (x[0] + mu)
    beta = 2.0 * v0 * v0 / (sigma + v0 * v0)
    v[1:] = x[1:] / v0
    return v, beta


def hessenberg(a):
    """Reduce A to upper Hessenberg form H = Q^T A Q.  Returns (H, Q)."""
    h = np.array(a, dtype=float)
    n = h.shape[0]
    q = np.eye(n)
    for k in range(n - 2):
        v, beta = _house(h[k + 1:, k])
        if beta != 0.0:
            w = beta * (v @ h[k + 1:, k:])
            h[k + 1:, k:] -= np.outer(v, w)
            w = beta * (h[:, k + 1:] @ v)
            h[:, k + 1:] -= np.outer(w, v)
            w = beta * (q[:, k + 1:] @ v)
            q[:, k + 1:] -= np.outer(w, v)
        h[k + 2:, k] = 0.0
    return h, q


def _apply_rotation(h, q, k, c, s, hi):
    """Apply the 2x2 rotation G = [[c, s], [-s, c]] in the (k, k+1) plane."""
    rows = h[k:k + 2, :].copy()
    h[k, :] = c * rows[0] - s * rows[1]
    h[k + 1, :] = s * rows[0] + c * rows[1]
    cols = h[:, k:k + 2].copy()
    h[:, k] = c * cols[:, 0] - s * cols[:, 1]
    h[:, k + 1] = s * cols[:, 0] + c * cols[:, 1]
    vq = q[:, k:k + 2].copy()
    q[:, k] = c * vq[:, 0] - s * vq[:, 1]
    q[:, k + 1] = s * vq[:, 0] + c * vq[:, 1]


def _split_real_2x2(h, q, k):
    """Triangularize the 2x2 diagonal block at (k, k) if its eigenvalues are real."""
    a, b = h[k, k], h[k, k + 1]
    c, d = h[k + 1, k], h[k + 1, k + 1]
    if c == 0.0:
        return
    disc = 0.25 * (a - d) ** 2 + b * c
    if disc < 0.0:
        return
    sq = np.sqrt(disc)
    mid = 0.5 * (a + d)
    lam = mid + sq if mid >= 0.0 else mid - sq
    # eigenvector of [[a, b], [c, d]] for lam; take the better conditioned form
    v1 = np.array([b, lam - a])
    v2 = np.array([lam - d, c])
    v = v1 if np.hypot(*v1) >= np.hypot(*v2) else v2
    nv = np.hypot(*v)
    if nv == 0.0:
        v = np.array([1.0, 0.0])
        nv = 1.0
    cth, sth = v[0] / nv, v[1] / nv
    # G = [[c, s], [-s, c]] with s = -sth puts v in the first column of G,
    # so G^T M G has a zero (2,1) entry
    _apply_rotation(h, q, k, cth, -sth, None)
    h[k + 1, k] = 0.0


def _francis_step(h, q, lo, hi, shift_s, shift_t):
    """One implicit double-shift QR sweep on the active block [lo, hi]."""
    n = h.shape[0]
    x = h[lo, lo] * h[lo, lo] + h[lo, lo + 1] * h[lo + 1, lo] - shift_s * h[lo, lo] + shift_t
    y = h[lo + 1, lo] * (h[lo, lo] + h[lo + 1, lo + 1] - shift_s)
    z = h[lo + 2, lo + 1] * h[lo + 1, lo]
    for k in range(lo - 1, hi - 2):
        v, beta = _house(np.array([x, y, z]))
        if beta != 0.0:
            qcol = max(lo, k)
            blk = h[k + 1:k + 4, qcol:]
            blk -= np.outer(beta * v, v @ blk)
            r = min(k + 4, hi)
            blk = h[:r + 1, k + 1:k + 4]
            blk -= np.outer(blk @ v, beta * v)
            blk = q[:, k + 1:k + 4]
            blk -= np.outer(blk @ v, beta * v)
        if k >= lo:
            # The reflector annihilated these bulge entries by construction.
            # Store exact zeros: roundoff dust left here would later be
            # rotated back into the subdiagonal by full-row 2x2 rotations,
            # silently breaking the quasi-triangular structure.
            h[k + 2, k] = 0.0
            h[k + 3, k] = 0.0
        x = h[k + 2, k + 1]
        y = h[k + 3, k + 1]
        if k < hi - 3:
            z = h[k + 4, k + 1]
    v, beta = _house(np.array([x, y]))
    if beta != 0.0:
        blk = h[hi - 1:hi + 1, hi - 2:]
        blk -= np.outer(beta * v, v @ blk)
        blk = h[:hi + 1, hi - 1:hi + 1]
        blk -= np.outer(blk @ v, beta * v)
        blk = q[:, hi - 1:hi + 1]
        blk -= np.outer(blk @ v, beta * v)
    if hi - 2 >= lo:
        h[hi, hi - 2] = 0.0


def real_schur(a, max_iter_factor=40):
    """Real Schur form of a square matrix.

    Parameters
    ----------
    a : (n, n) ndarray
    max_iter_factor : iteration budget per eigenvalue before giving up.

    Returns
    -------
    SchurForm with ``q @ t @ q.T`` reconstructing ``a``; 2x2 diagonal blocks
    of ``t`` carry complex conjugate eigenvalue pairs only (real pairs are
    split into 1x1 blocks).
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("real_schur expects a square matrix")
    n = a.shape[0]
    if n == 0:
        return SchurForm(q=np.eye(0), t=np.zeros((0, 0)))
    if n == 1:
        return SchurForm(q=np.eye(1), t=a.copy())
    h, q = hessenberg(a)
    budget = max_iter_factor * n
    used = 0
    hi = n - 1
    stagnation = 0
    while hi > 0:
        # deflation scan: largest lo with a negligible subdiagonal entry
        lo = hi
        while lo > 0:
            hsub = abs(h[lo, lo - 1])
            tol = _EPS * (abs(h[lo - 1, lo - 1]) + abs(h[lo, lo]))
            if tol == 0.0:
                tol = _EPS * np.linalg.norm(h, "fro")
            if hsub <= tol:
                h[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            hi -= 1
            stagnation = 0
            continue
        if lo == hi - 1:
            _split_real_2x2(h, q, lo)
            hi -= 2
            stagnation = 0
            continue
        stagnation += 1
        used += 1
        if used > budget:
            raise ConvergenceError(
                f"Schur iteration did not converge within {budget} sweeps")
        if stagnation % 10 == 0:
            # exceptional shift to break symmetry-induced cycles
            sigma = h[hi, hi] + 0.75 * abs(h[hi, hi - 1])
            s, t = 2.0 * sigma, sigma * sigma
        else:
            s = h[hi - 1, hi - 1] + h[hi, hi]
            t = h[hi - 1, hi - 1] * h[hi, hi] - h[hi - 1, hi] * h[hi, hi - 1]
        _francis_step(h, q, lo, hi, s, t)
    # clean roundoff dust below the first subdiagonal and split real 2x2 blocks
    if n > 2:
        h[np.tril_indices(n, -2)] = 0.0
    for k in range(n - 1):
        if abs(h[k + 1, k]) <= _EPS * (abs(h[k, k]) + abs(h[k + 1, k + 1])):
            h[k + 1, k] = 0.0
    for k in range(n - 1):
        if h[k + 1, k] != 0.0:
            _split_real_2x2(h, q, k)
    sub = h[np.arange(1, n), np.arange(n - 1)] != 0.0
    if np.any(sub[1:] & sub[:-1]):
        raise ConvergenceError(
            "Schur iteration left an unreduced block larger than 2x2")
    return SchurForm(q=q, t=h)


def schur_eigenvalues(t):
    """Eigenvalues of a quasi upper triangular matrix, complex array."""
    t = np.asarray(t, dtype=float)
    n = t.shape[0]
    out = np.empty(n, dtype=complex)
    k = 0
    while k < n:
        if k < n - 1 and t[k + 1, k] != 0.0:
            a, b = t[k, k], t[k, k + 1]
            c, d = t[k + 1, k], t[k + 1, k + 1]
            mid = 0.5 * (a + d)
            disc = 0.25 * (a - d) ** 2 + b * c
            if disc < 0.0:
                im = np.sqrt(-disc)
                out[k] = mid + 1j * im
                out[k + 1] = mid - 1j * im
            else:
                sq = np.sqrt(disc)
                out[k] = mid + sq
                out[k + 1] = mid - sq
            k += 2
        else:
            out[k] = t[k, k]
            k += 1
    return out


def spectral_abscissa(a):
    """max Re(lambda) of a square matrix, via the real Schur form."""
    form = real_schur(a)
    return float(schur_eigenvalues(form.t).real.max())


def sym_eig(s, tol=1e-14, max_sweeps=40):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    The input must satisfy ``||S - S^T|| <= 1e-10 * scale``; it is then
    symmetrized exactly before iterating.  Eigenvalues come out in
    descending order.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError("sym_eig expects a square matrix")
    n = s.shape[0]
    scale = np.linalg.norm(s, "fro")
    if scale > 0.0 and np.linalg.norm(s - s.T, "fro") > 1e-10 * scale:
        raise ValueError("sym_eig input is not symmetric")
    a = 0.5 * (s + s.T)
    v = np.eye(n)
    if n == 1 or scale == 0.0:
        return _sorted_symeig(np.diag(a).copy(), v)
    skip = tol * scale / n
    for _ in range(max_sweeps):
        # Off-diagonal norm must be summed directly: forming it as
        # ||A||^2 - ||diag||^2 cancels catastrophically once the matrix is
        # nearly diagonal and reports 0 while real mass remains.
        offm = a.copy()
        np.fill_diagonal(offm, 0.0)
        off = np.linalg.norm(offm, "fro")
        if off <= tol * scale:
            break
        rotated = False
        for p in range(n - 1):
            row_p = a[p]
            for qq in range(p + 1, n):
                apq = row_p[qq]
                if abs(apq) <= skip:
                    continue
                rotated = True
                app = a[p, p]
                aqq = a[qq, qq]
                theta = 0.5 * (aqq - app) / apq
                t = 1.0 / (abs(theta) + np.sqrt(1.0 + theta * theta))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(1.0 + t * t)
                sn = t * c
                rp = c * a[p, :] - sn * a[qq, :]
                rq = sn * a[p, :] + c * a[qq, :]
                a[p, :] = rp
                a[qq, :] = rq
                cp = c * a[:, p] - sn * a[:, qq]
                cq = sn * a[:, p] + c * a[:, qq]
                a[:, p] = cp
                a[:, qq] = cq
                a[p, p] = app - t * apq
                a[qq, qq] = aqq + t * apq
                a[p, qq] = 0.0
                a[qq, p] = 0.0
                vp = c * v[:, p] - sn * v[:, qq]
                vq = sn * v[:, p] + c * v[:, qq]
                v[:, p] = vp
                v[:, qq] = vq
        if not rotated:
            break
    else:
        raise ConvergenceError(f"Jacobi sweep budget ({max_sweeps}) exhausted")
    return _sorted_symeig(np.diag(a).copy(), v)


def _sorted_symeig(values, vectors):
    order = np.argsort(-values, kind="stable")
    values = values[order]
    vectors = vectors[:, order]
    # deterministic sign: largest-magnitude component positive
    for j in range(vectors.shape[1]):
        k = int(np.argmax(np.abs(vectors[:, j])))
        if vectors[k, j] < 0.0:
            vectors[:, j] = -vectors[:, j]
    return SymEig(values=values, vectors=vectors)


def lu_factor(a):
    """Blocked LU with partial pivoting: returns (LU packed, pivot rows)."""
    lu = np.array(a, dtype=float)
    n = lu.shape[0]
    if lu.ndim != 2 or lu.shape[1] != n:
        raise ValueError("lu_factor expects a square matrix")
    ipiv = np.arange(n)
    nb = 64
    for k0 in range(0, n, nb):
        k1 = min(k0 + nb, n)
        for k in range(k0, k1):
            p = k + int(np.argmax(np.abs(lu[k:, k])))
            if lu[p, k] == 0.0:
                raise SingularMatrixError(f"zero pivot in column {k}")
            if p != k:
                lu[[k, p], :] = lu[[p, k], :]
                ipiv[k] = p
            lu[k + 1:, k] /= lu[k, k]
            if k + 1 < k1:
                lu[k + 1:, k + 1:k1] -= np.outer(lu[k + 1:, k], lu[k, k + 1:k1])
        if k1 < n:
            for i in range(k0 + 1, k1):
                lu[i, k1:] -= lu[i, k0:i] @ lu[k0:i, k1:]
            lu[k1:, k1:] -= lu[k1:, k0:k1] @ lu[k0:k1, k1:]
    return lu, ipiv


def lu_solve(lu, ipiv, b):
    """Solve A x = b given lu_factor output.  b may be a vector or matrix."""
    x = np.array(b, dtype=float)
    vec = x.ndim == 1
    if vec:
        x = x[:, None]
    n = lu.shape[0]
    for k in range(n):
        p = ipiv[k]
        if p != k:
            x[[k, p], :] = x[[p, k], :]
    for i in range(1, n):
        x[i, :] -= lu[i, :i] @ x[:i, :]
    for i in range(n - 1, -1, -1):
        if i + 1 < n:
            x[i, :] -= lu[i, i + 1:] @ x[i + 1:, :]
        x[i, :] /= lu[i, i]
    return x[:, 0] if vec else x


def solve_linear(a, b):
    """Dense solve via the in-repo LU."""
    lu, ipiv = lu_factor(a)
    return lu_solve(lu, ipiv, b)


def _lyap_quasi_triangular(t, c):
    """Solve T Y + Y T^T + C = 0 for quasi upper triangular T."""
    n = t.shape[0]
    # block boundaries from the subdiagonal pattern
    starts = []
    k = 0
    while k < n:
        starts.append(k)
        if k < n - 1 and t[k + 1, k] != 0.0:
            k += 2
        else:
            k += 1
    starts.append(n)
    nb = len(starts) - 1
    y = np.zeros((n, n))
    # T Y couples block rows below i, Y T^T couples block columns right of j,
    # so sweep from the bottom-right corner
    for bi in range(nb - 1, -1, -1):
        i0, i1 = starts[bi], starts[bi + 1]
        for bj in range(nb - 1, -1, -1):
            j0, j1 = starts[bj], starts[bj + 1]
            rhs = -c[i0:i1, j0:j1].copy()
            if i1 < n:
                rhs -= t[i0:i1, i1:] @ y[i1:, j0:j1]
            if j1 < n:
                rhs -= y[i0:i1, j1:] @ t[j0:j1, j1:].T
            tii = t[i0:i1, i0:i1]
            tjj = t[j0:j1, j0:j1]
            p, q = i1 - i0, j1 - j0
            if p == 1 and q == 1:
                y[i0, j0] = rhs[0, 0] / (tii[0, 0] + tjj[0, 0])
            else:
                m = np.kron(np.eye(q), tii) + np.kron(tjj, np.eye(p))
                sol = solve_linear(m, rhs.ravel(order="F"))
                y[i0:i1, j0:j1] = sol.reshape(p, q, order="F")
    return y


def _check_sylvester_spectrum(k, eigs):
    scale = np.linalg.norm(k, "fro")
    if scale == 0.0:
        raise SingularSylvesterError(
            "zero generator matrix: every eigenvalue pair sums to zero")
    sums = np.abs(eigs[:, None] + eigs[None, :])
    i, j = np.unravel_index(int(np.argmin(sums)), sums.shape)
    if sums[i, j] <= 1e-10 * scale:
        raise SingularSylvesterError(
            f"eigenvalue pair lambda_{i} = {eigs[i]:.6g} and lambda_{j} = "
            f"{eigs[j]:.6g} sums to ~0, so the Lyapunov operator is singular; "
            "if the basis contains (near-)constant functions, enable the "
            "equilibrium-vanishing reduction")


def solve_lyapunov(k, qs, schur=None):
    """Solve K P + P K^T + Q = 0 by Schur reduction and back substitution.

    Raises SingularSylvesterError when some eigenvalue pair of K sums to
    (numerically) zero; the caller sees the offending pair in the message.
    A precomputed Schur form of K can be passed to avoid refactoring.
    """
    k = np.asarray(k, dtype=float)
    qs = np.asarray(qs, dtype=float)
    if k.shape[0] != k.shape[1] or k.shape != qs.shape:
        raise ValueError("solve_lyapunov expects square K and Q of equal size")
    form = schur if schur is not None else real_schur(k)
    eigs = schur_eigenvalues(form.t)
    _check_sylvester_spectrum(k, eigs)
    c = form.q.T @ qs @ form.q
    y = _lyap_quasi_triangular(form.t, c)
    p = form.q @ y @ form.q.T
    return 0.5 * (p + p.T)


def solve_lyapunov_kron(k, qs, max_size=200):
    """Solve the same equation through the n^2 x n^2 Kronecker system.

    Independent of :func:`solve_lyapunov` (dense LU instead of Schur); meant
    as a cross-check oracle for moderate n.
    """
    k = np.asarray(k, dtype=float)
    qs = np.asarray(qs, dtype=float)
    n = k.shape[0]
    if n > max_size:
        raise ValueError(f"Kronecker route limited to n <= {max_size}, got {n}")
    if k.shape != (n, n) or qs.shape != (n, n):
        raise ValueError("solve_lyapunov_kron expects square K and Q of equal size")
    m = np.kron(np.eye(n), k) + np.kron(k, np.eye(n))
    try:
        sol = solve_linear(m, -qs.ravel(order="F"))
    except SingularMatrixError as exc:
        raise SingularSylvesterError(f"singular Kronecker system: {exc}") from exc
    p = sol.reshape(n, n, order="F")
    return 0.5 * (p + p.T)


def save_matrix(path, a):
    """Write a matrix as 'rows cols' header plus one whitespace row per line."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{a.shape[0]} {a.shape[1]}\n")
        for row in a:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def load_matrix(path):
    """Inverse of :func:`save_matrix`."""
    with open(path, "r", encoding="ascii") as fh:
        first = fh.readline().split()
        if len(first) != 2:
            raise ValueError("matrix file must start with 'rows cols'")
        rows, cols = int(first[0]), int(first[1])
        data = np.loadtxt(fh, ndmin=2)
    if data.shape != (rows, cols):
        raise ValueError(
            f"matrix file header says {rows}x{cols}, body is {data.shape}")
    return data
