"""Command line driver.

Subcommands: check (standing hypotheses), solve (Gramian pipeline plus CSV
emission), oracle (trajectory-integrated values), compare (solve vs oracle),
laguerre (trajectory Laguerre coefficients).  One config file drives all of
them so reference points and discretization never drift apart.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from .basis import make_orthonormal, shift_to_equilibrium
from .config import (ConfigError, build_model, build_raw_basis, build_rules,
                     config_hash, load_config)
from .flow import (HypothesisReport, IntegratorConfig, check_linearization,
                   check_port_hamiltonian, check_tangent, estimate_omega0,
                   omega0_scan_grid, cost_oracle)
from .gramian import (assemble_generator, assemble_observation, decay_fit,
                      laguerre_coefficients, lyap_residual, pde_residual,
                      solve_gramian, sos_eval_many, sum_of_squares)
from .model import NuclearCost, port_hamiltonian_parts
from .quadrature import tensor_grid


class StageError(RuntimeError):
    pass


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(f"stage {name!r} failed: {exc}") from exc


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_csv(path, chash, columns, rows):
    lines = [f"# config_hash={chash}", ",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _integrator(cfg):
    return IntegratorConfig(rel_tol=cfg.tol("rel_tol"),
                            abs_tol=cfg.tol("abs_tol"),
                            max_time=cfg.tol("max_time"))


def _sample_points(cfg, dom, seed):
    if cfg.sample_points is not None:
        return np.asarray(cfg.sample_points, dtype=float)
    rng = np.random.default_rng(seed)
    lo = np.asarray(dom.lower)
    up = np.asarray(dom.upper)
    return lo + (up - lo) * rng.random((cfg.sample_count, dom.dim))


def _solve_pipeline(cfg):
    f, cost, w, dom = _stage("model", build_model, cfg)
    rules = _stage("quadrature", build_rules, cfg)
    grid = _stage("quadrature", tensor_grid, rules, w)
    raw = _stage("basis", build_raw_basis, cfg)
    raw = _stage("basis", shift_to_equilibrium, raw,
                 np.asarray(dom.equilibrium))
    onb = _stage("basis", make_orthonormal, raw, grid,
                 drop_tol=cfg.tol("drop_tol"))
    gen = _stage("generator", assemble_generator, f, onb)
    obs = _stage("observation", assemble_observation, cost, onb)
    sol = _stage("gramian", solve_gramian, gen, obs)
    sos = _stage("gramian", sum_of_squares, sol, trunc_tol=cfg.tol("trunc_tol"))
    return f, cost, w, dom, onb, gen, obs, sol, sos


def _report_lines_common(command, cfg, chash, seed):
    name = cfg.system_name or f"explicit dim={cfg.dim}"
    return [f"run: {command}",
            f"config_hash: {chash}",
            f"seed: {seed}",
            f"system: {name}",
            f"basis: {cfg.basis_kind} degree={cfg.degree}",
            f"quadrature_nodes: {','.join(str(n) for n in cfg.quad_nodes)}"]


def cmd_check(cfg, out_dir, seed, chash):
    f, cost, w, dom = _stage("model", build_model, cfg)
    reports = []
    reports.append(_stage("tangent", check_tangent, f, dom))
    reports.append(_stage("linearization", check_linearization, f,
                          np.asarray(dom.equilibrium)))
    pts = _stage("omega0", omega0_scan_grid, dom, w)
    omega0 = _stage("omega0", estimate_omega0, f, w, pts)
    reports.append(HypothesisReport(name="weight_decay_rate",
                                    passed=bool(omega0 <= 0.0),
                                    witness={"omega0": float(omega0)}))
    if cfg.system_name == "port_hamiltonian_demo":
        params = dict(cfg.system_params)
        h, j, r = port_hamiltonian_parts(params.get("r", 1.0))
        reports.append(_stage("port_hamiltonian", check_port_hamiltonian,
                              h, j, r, pts))
    lines = _report_lines_common("check", cfg, chash, seed)
    for rep in reports:
        status = "PASS" if rep.passed else "FAIL"
        witness = " ".join(f"{k}={_fmt(v)}" for k, v in sorted(rep.witness.items()))
        lines.append(f"hypothesis {rep.name}: {status} {witness}".rstrip())
    passed = all(r.passed for r in reports)
    lines.append(f"status: {'PASS' if passed else 'FAIL'}")
    return lines, passed


def cmd_solve(cfg, out_dir, seed, chash):
    t0 = time.time()
    f, cost, w, dom, onb, gen, obs, sol, sos = _solve_pipeline(cfg)
    t1 = time.time()
    lam = sol.eigen.values
    _write_csv(os.path.join(out_dir, "eigenvalues.csv"), chash,
               ["index", "lambda"],
               [(i + 1, lam[i]) for i in range(lam.size)])
    coords = [f"x{k + 1}" for k in range(dom.dim)]
    pts = onb.grid.points
    for i in range(sos.n_terms):
        p = np.sqrt(sos.eigenvalues[i]) * (onb.table.values @ sos.vectors[:, i])
        _write_csv(os.path.join(out_dir, f"eigenfunctions_{i + 1}.csv"), chash,
                   coords + ["p"],
                   [tuple(pts[q]) + (p[q],) for q in range(pts.shape[0])])
    vals, grads = sos_eval_many(sos, pts)
    _write_csv(os.path.join(out_dir, "value.csv"), chash,
               coords + ["v"] + [f"dv_dx{k + 1}" for k in range(dom.dim)],
               [tuple(pts[q]) + (vals[q],) + tuple(grads[q])
                for q in range(pts.shape[0])])
    sample = _sample_points(cfg, dom, seed)
    res = _stage("residual", pde_residual, sos, f, cost, sample)
    lres = _stage("residual", lyap_residual, gen, obs, sol)
    lines = _report_lines_common("solve", cfg, chash, seed)
    lines.append(f"basis_rank: {onb.rank}")
    lines.append(f"generator_abscissa: {_fmt(sol.generator_abscissa)}")
    lines.append(f"eigenvalue_clamp: {_fmt(sol.clamp_magnitude)}")
    lines.append(f"retained_terms: {sos.n_terms}")
    head = " ".join(_fmt(v) for v in lam[:10])
    lines.append(f"eigenvalues_head: {head}")
    for i, r in enumerate(obs.residuals):
        lines.append(f"observable_{i + 1}_in_span_residual: {_fmt(r)}")
    lines.append(f"lyapunov_residual: {_fmt(lres)}")
    lines.append(f"pde_residual_max: {_fmt(res.max_abs)}")
    lines.append(f"pde_residual_rms: {_fmt(res.rms)}")
    try:
        m_hat, r2 = decay_fit(lam, 5)
        lines.append(f"decay_m_hat: {_fmt(m_hat)}")
        lines.append(f"decay_fit_quality: {_fmt(r2)}")
    except ValueError:
        lines.append("decay_m_hat: not-enough-eigenvalues")
    lines.append(f"time_solve_s: {t1 - t0:.3f}")
    lines.append("status: PASS")
    return lines, True


def _run_oracle(cfg, f, cost, pts):
    integ = _integrator(cfg)
    tail_tol = cfg.tol("tail_tol")
    out = []
    for z in pts:
        ci = _stage("oracle", cost_oracle, f, cost, z, cfg=integ,
                    tail_tol=tail_tol)
        out.append(ci)
    return out


def cmd_oracle(cfg, out_dir, seed, chash):
    f, cost, w, dom = _stage("model", build_model, cfg)
    pts = _sample_points(cfg, dom, seed)
    t0 = time.time()
    results = _run_oracle(cfg, f, cost, pts)
    t1 = time.time()
    coords = [f"x{k + 1}" for k in range(dom.dim)]
    _write_csv(os.path.join(out_dir, "oracle.csv"), chash,
               coords + ["value", "horizon", "tail_bound"],
               [tuple(pts[i]) + (r.value, r.horizon, r.tail_bound)
                for i, r in enumerate(results)])
    lines = _report_lines_common("oracle", cfg, chash, seed)
    lines.append(f"points: {len(results)}")
    vals = np.array([r.value for r in results])
    lines.append(f"value_min: {_fmt(vals.min())}")
    lines.append(f"value_max: {_fmt(vals.max())}")
    lines.append(f"max_horizon: {_fmt(max(r.horizon for r in results))}")
    lines.append(f"time_oracle_s: {t1 - t0:.3f}")
    lines.append("status: PASS")
    return lines, True


def cmd_compare(cfg, out_dir, seed, chash):
    f, cost, w, dom, onb, gen, obs, sol, sos = _solve_pipeline(cfg)
    pts = _sample_points(cfg, dom, seed)
    vals, _ = sos_eval_many(sos, pts)
    results = _run_oracle(cfg, f, cost, pts)
    ref = np.array([r.value for r in results])
    err = np.abs(vals - ref)
    coords = [f"x{k + 1}" for k in range(dom.dim)]
    _write_csv(os.path.join(out_dir, "compare.csv"), chash,
               coords + ["v_sos", "v_oracle", "abs_err"],
               [tuple(pts[i]) + (vals[i], ref[i], err[i])
                for i in range(pts.shape[0])])
    lines = _report_lines_common("compare", cfg, chash, seed)
    lines.append(f"points: {pts.shape[0]}")
    lines.append(f"max_abs_err: {_fmt(err.max())}")
    lines.append(f"rms_err: {_fmt(float(np.sqrt((err ** 2).mean())))}")
    lines.append(f"max_rel_err: {_fmt(float((err / np.maximum(np.abs(ref), 1e-300)).max()))}")
    lines.append("status: PASS")
    return lines, True


def cmd_laguerre(cfg, out_dir, seed, chash):
    f, cost, w, dom = _stage("model", build_model, cfg)
    if cfg.laguerre_point is None:
        raise StageError("stage 'laguerre' failed: laguerre.point is required "
                         "for the laguerre command")
    if cfg.laguerre_observable > len(cost.observables):
        raise StageError(
            f"stage 'laguerre' failed: laguerre.observable="
            f"{cfg.laguerre_observable} but the cost has "
            f"{len(cost.observables)} observables")
    c = cost.observables[cfg.laguerre_observable - 1]
    z = np.asarray(cfg.laguerre_point)
    integ = _integrator(cfg)
    tail_tol = cfg.tol("tail_tol")
    dec = _stage("laguerre", laguerre_coefficients, f, c, z,
                 cfg.laguerre_n_terms, cfg=integ, tail_tol=tail_tol)
    ci = _stage("oracle", cost_oracle, f, NuclearCost((c,)), z, cfg=integ,
                tail_tol=tail_tol)
    _write_csv(os.path.join(out_dir, "laguerre.csv"), chash,
               ["n", "a_n"],
               [(n, dec.coefficients[n]) for n in range(dec.coefficients.size)])
    partial = float((dec.coefficients ** 2).sum())
    lines = _report_lines_common("laguerre", cfg, chash, seed)
    lines.append(f"n_terms: {dec.coefficients.size}")
    lines.append(f"horizon: {_fmt(dec.horizon)}")
    lines.append(f"parseval_partial_sum: {_fmt(partial)}")
    lines.append(f"cost_oracle_value: {_fmt(ci.value)}")
    lines.append(f"parseval_defect: {_fmt(ci.value - partial)}")
    lines.append("status: PASS")
    return lines, True


_COMMANDS = {
    "check": cmd_check,
    "solve": cmd_solve,
    "oracle": cmd_oracle,
    "compare": cmd_compare,
    "laguerre": cmd_laguerre,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse exits with 2 on usage errors, but exit code 2 is
        # reserved for hypothesis failures; remap to 1.
        self.print_usage(sys.stderr)
        raise SystemExit(1)


def _build_parser():
    parser = _Parser(prog="lyap",
                     description="Lyapunov functions from Gramian "
                                 "eigendecompositions of the flow generator")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="TOML problem file")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for sample-point generation")
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.seed < 0 or args.seed > 2 ** 64 - 1:
        print("error: seed must fit in 64 bits", file=sys.stderr)
        return 1
    try:
        cfg = load_config(args.config)
        out_dir = args.out or cfg.output_dir or "."
        os.makedirs(out_dir, exist_ok=True)
        chash = config_hash(cfg, args.seed)
        lines, passed = _COMMANDS[args.command](cfg, out_dir, args.seed, chash)
        report_path = os.path.join(out_dir, "report.txt")
        with open(report_path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        print("\n".join(lines))
        return 0 if passed else 2
    except (ConfigError, StageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
