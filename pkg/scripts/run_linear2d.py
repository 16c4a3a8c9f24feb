"""Linear example end to end: eigenvalues, value-function error, residuals.

The closed form is v(z) = z^T X z with A^T X + X A + I = 0, so everything
here can be checked against a 2x2 Lyapunov solve.  Runs in a few seconds.
"""

import argparse
import time

import numpy as np

from kooplyap.basis import (Basis1D, make_orthonormal, shift_to_equilibrium,
                            tensor_basis)
from kooplyap.gramian import (assemble_generator, assemble_observation,
                              lyap_residual, pde_residual, solve_gramian,
                              sos_eval_many, sum_of_squares)
from kooplyap.linalg import solve_lyapunov
from kooplyap.model import builtin_system
from kooplyap.quadrature import gauss_legendre, tensor_grid


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--degree", type=int, default=11)
    ap.add_argument("--nodes", type=int, default=12)
    args = ap.parse_args()

    t0 = time.time()
    f, cost, w, dom = builtin_system("linear2d")
    rules = [gauss_legendre(args.nodes, dom.lower[k], dom.upper[k])
             for k in range(2)]
    grid = tensor_grid(rules, w)
    basis = shift_to_equilibrium(
        tensor_basis([Basis1D.legendre(args.degree,
                                       (dom.lower[k], dom.upper[k]))
                      for k in range(2)]),
        dom.equilibrium)
    onb = make_orthonormal(basis, grid)
    gen = assemble_generator(f, onb)
    obs = assemble_observation(cost, onb)
    sol = solve_gramian(gen, obs)
    sos = sum_of_squares(sol)
    print(f"rank={onb.rank} retained={sos.n_terms} "
          f"abscissa={sol.generator_abscissa:.3f} "
          f"lyap_resid={lyap_residual(gen, obs, sol):.2e} "
          f"[{time.time() - t0:.1f}s]")

    lam = sol.eigen.values
    print("eigenvalues:", " ".join(f"{v:.8e}" for v in lam[:4]),
          f"... ratio lam3/lam1 = {lam[2] / lam[0]:.2e}")

    # closed form via the matrix Lyapunov equation; the field is linear,
    # so its matrix is just f applied to the coordinate directions
    from kooplyap.model import poly_eval_many
    a = poly_eval_many(f, np.eye(2)).T
    x = solve_lyapunov(a.T, np.eye(2))
    xs = np.linspace(-1.0, 1.0, 50)
    pts = np.stack(np.meshgrid(xs, xs, indexing="ij"), -1).reshape(-1, 2)
    vals, _ = sos_eval_many(sos, pts)
    ref = np.einsum("mi,ij,mj->m", pts, x, pts)
    err = np.abs(vals - ref)
    print(f"max |v - z^T X z| on 50x50 grid: {err.max():.2e}")
    inner = (np.abs(pts).max(axis=1) <= 0.9) & (np.linalg.norm(pts, axis=1) > 0.1)
    print(f"  interior ([-0.9,0.9]^2 minus 0.1-ball): {err[inner].max():.2e}")

    res = pde_residual(sos, f, cost, pts)
    print(f"pde residual on the grid: max={res.max_abs:.2e} rms={res.rms:.2e}")


if __name__ == "__main__":
    main()
