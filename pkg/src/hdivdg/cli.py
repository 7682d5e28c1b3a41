"""Command line driver.

Examples
--------
::

    hdivdg poisson --mesh cartesian:4 --p 2 --eta 10 --precond sub --report cond
    hdivdg stokes --mesh cartesian:8 --p 3 --eta 1 --precond aux
    hdivdg verify-lemmas --pmax 8
    hdivdg table --id 1
"""
import argparse
import csv
import io
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import polylib
from .mesh import MeshError, cartesian_mesh, load_mesh, parallelogram_star_mesh, skewed_mesh
from .precond import PRECONDITIONERS
from .solvers import DENSE_CAP, SolverError, cond_estimate, pcg

CSV_COLUMNS = (
    "case",
    "mesh",
    "n_or_level",
    "p",
    "eta",
    "precond",
    "dofs",
    "iters",
    "converged",
    "time_s",
    "lambda_min",
    "lambda_max",
    "cond_est",
)
PMAX_CAP = 16
LEMMA_RTOL = 1e-8


class InputError(ValueError):
    pass


def parse_mesh(spec):
    """Build a mesh from ``cartesian:N``, ``star:L``, ``skewed:N:S`` or
    ``file:PATH``.  Returns ``(mesh, n_or_level)``."""
    kind, _, rest = spec.partition(":")
    try:
        if kind == "cartesian":
            n = int(rest)
            if n < 1:
                raise InputError("cartesian mesh needs N >= 1")
            return cartesian_mesh(n), n
        if kind == "star":
            level = int(rest)
            if level < 0:
                raise InputError("star mesh needs L >= 0")
            return parallelogram_star_mesh(level), level
        if kind == "skewed":
            n, s = rest.split(":")
            return skewed_mesh(int(n), float(s)), int(n)
        if kind == "file":
            if not rest:
                raise InputError("file mesh needs a path")
            return load_mesh(rest), ""
    except (ValueError, MeshError, OSError) as err:
        if isinstance(err, InputError):
            raise
        raise InputError(f"bad mesh spec {spec!r}: {err}") from None
    raise InputError(f"unknown mesh kind {kind!r}; use cartesian:N, star:L, skewed:N:S or file:PATH")


def rt_dof_count(mesh, p):
    return mesh.nf * p + mesh.ne * 2 * p * (p - 1)


def _fmt(x):
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def write_rows(rows, out=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in CSV_COLUMNS])
    text = buf.getvalue()
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump(path, vec):
    np.savetxt(path, np.asarray(vec, float), fmt="%.17g")


def _workers():
    try:
        k = int(os.environ.get("HDIV_THREADS", "0"))
    except ValueError:
        raise InputError("HDIV_THREADS must be an integer") from None
    return k if k > 0 else (os.cpu_count() or 1)


# -- subcommands -----------------------------------------------------------------


def _validate_common(args):
    if args.precond not in PRECONDITIONERS:
        raise InputError(f"unknown preconditioner {args.precond!r}; valid choices: {', '.join(PRECONDITIONERS)}")
    if args.p < 2:
        raise InputError("p must be at least 2")
    if not args.eta > 0:
        raise InputError("eta must be positive")
    if not args.tol > 0:
        raise InputError("tol must be positive")
    if args.maxit < 1:
        raise InputError("maxit must be positive")


def cmd_poisson(args):
    from .assembly import write_matrix_market
    from .tables import PoissonProblem

    _validate_common(args)
    mesh, size = parse_mesh(args.mesh)
    ndofs = rt_dof_count(mesh, args.p)
    if args.report in ("cond", "both") and ndofs > DENSE_CAP and not args.lanczos:
        raise InputError(
            f"{ndofs} unknowns exceeds the dense eigensolver cap of {DENSE_CAP}; "
            "pass --lanczos for an iterative estimate or use --report iters"
        )
    prob = PoissonProblem.build(mesh, args.p, args.eta)
    if args.matrix_out:
        write_matrix_market(prob.A, args.matrix_out, symmetric=True)
    row = dict(case="poisson", mesh=args.mesh, n_or_level=size, p=args.p, eta=args.eta, precond=args.precond, dofs=ndofs)
    t0 = time.perf_counter()
    B = None if args.precond == "none" else prob.preconditioner(args.precond)
    status = 0
    if args.report in ("iters", "both"):
        x, rep = pcg(prob.A, prob.b, B, tol=args.tol, maxit=args.maxit)
        row.update(iters=rep.iterations, converged=rep.converged)
        row.update(lambda_min=rep.lambda_min_est, lambda_max=rep.lambda_max_est, cond_est=rep.cond_est)
        if args.dump:
            _dump(args.dump, x)
        if not rep.converged:
            print(f"PCG did not converge in {rep.iterations} iterations", file=sys.stderr)
            status = 2
    if args.report in ("cond", "both"):
        lo, hi, c = cond_estimate(prob.A, B, lanczos=args.lanczos)
        row.update(lambda_min=lo, lambda_max=hi, cond_est=c)
    row["time_s"] = time.perf_counter() - t0
    write_rows([row], args.out)
    return status


def cmd_stokes(args):
    from .stokes import assemble_stokes, cavity_lid, solve_stokes

    _validate_common(args)
    if args.report != "iters":
        raise InputError("the Stokes system is indefinite; only --report iters is available")
    mesh, size = parse_mesh(args.mesh)
    t0 = time.perf_counter()
    sys_ = assemble_stokes(mesh, args.p, args.eta, u_D=cavity_lid)
    res = solve_stokes(sys_, args.precond, tol=args.tol, maxit=args.maxit)
    rep = res.report
    row = dict(
        case="stokes",
        mesh=args.mesh,
        n_or_level=size,
        p=args.p,
        eta=args.eta,
        precond=args.precond,
        dofs=sys_.ndofs,
        iters=rep.iterations,
        converged=rep.converged,
        time_s=time.perf_counter() - t0,
    )
    if args.dump:
        _dump(args.dump, np.concatenate([res.u, res.p]))
    if args.samples:
        _write_samples(args.samples, sys_, res)
    print(f"max|div u|/max|u| = {res.div_residual:.3e}", file=sys.stderr)
    write_rows([row], args.out)
    if not rep.converged:
        print(f"MINRES stopped without converging ({rep.status}) after {rep.iterations} iterations", file=sys.stderr)
        return 2
    return 0


def _write_samples(path, sys_, res):
    """Velocity and pressure at the element centres as CSV."""
    c = np.array([[0.5, 0.5]])
    u = sys_.velocity.evaluate(res.u, c)[:, 0, :]
    pv, _, _ = sys_.pressure.physical_basis(c, gradients=False)
    p = np.einsum("el,el->e", pv[:, 0, :, 0], res.p[sys_.pressure.elem_dofs])
    x = sys_.velocity.mesh.map_points(c)[:, 0, :]
    np.savetxt(path, np.column_stack([x, u, p]), delimiter=",", header="x,y,u1,u2,p", comments="", fmt="%.12g")


def verify_lemmas(pmax):
    """Return ``(lines, failures)`` comparing the closed-form constants with
    dense generalized eigenvalues for ``p = 2..pmax``."""
    lines, failures = [], []

    def check(name, p, bound, achieved, equal):
        dev = (achieved - bound) / bound
        ok = abs(dev) < LEMMA_RTOL if equal else dev < LEMMA_RTOL
        rel = "=" if equal else "<="
        lines.append(f"p={p:2d} {name:<26} achieved {achieved:.12g} {rel} {bound:.12g}  {'ok' if ok else 'FAIL'}")
        if not ok:
            failures.append((name, p))

    for p in range(2, pmax + 1):
        mu, lam = polylib.interp_stability_eigs(p)
        check("l2 stability", p, polylib.l2_stability_bound(p), mu, True)
        check("h1 stability", p, 1.0, lam, False)
        bound, achieved = polylib.interp_error_constant_check(p)
        check("interpolation error", p, bound, achieved, True)
        l2_closed, h1_closed = polylib.chi_norms(p)
        l2_num, h1_num = _chi_norms_quadrature(p)
        check("chi l2 norm", p, l2_closed, l2_num, True)
        check("chi h1 seminorm", p, h1_closed, h1_num, True)
        tmu, tlam = polylib.tensor_stability_eigs(p)
        check("tensor l2 stability", p, polylib.l2_stability_bound(p) ** 2, tmu, True)
        check("tensor h1 stability", p, polylib.l2_stability_bound(p), tlam, False)
    return lines, failures


def _chi_norms_quadrature(p):
    x, w = polylib.gauss_legendre(p + 2)
    return float(w @ polylib.chi_eval(p, x) ** 2), float(w @ polylib.chi_derivative(p, x) ** 2)


def cmd_verify(args):
    if not 2 <= args.pmax <= PMAX_CAP:
        raise InputError(f"pmax must lie in [2, {PMAX_CAP}]")
    lines, failures = verify_lemmas(args.pmax)
    print("\n".join(lines))
    for name, p in failures:
        print(f"deviation in {name} at p={p}", file=sys.stderr)
    return 2 if failures else 0


def cmd_table(args):
    from . import tables

    rows, report, ok = [], [], True
    n_workers = _workers()
    if args.id == 1:
        keys = list(tables.COND_REFERENCE)

        def job(key):
            eta, p, n = key
            prob = tables.PoissonProblem.build(cartesian_mesh(n), p, eta)
            out = []
            for kind in ("none",) + tables.PRECONDS:
                t0 = time.perf_counter()
                B = None if kind == "none" else prob.preconditioner(kind)
                lo, hi, c = cond_estimate(prob.A, B)
                out.append(
                    dict(case="table1", mesh=f"cartesian:{n}", n_or_level=n, p=p, eta=eta, precond=kind,
                         dofs=prob.ndofs, time_s=time.perf_counter() - t0, lambda_min=lo, lambda_max=hi, cond_est=c)
                )
            return out

        for key, out in zip(keys, _map(job, keys, n_workers)):
            ref = dict(zip(("none",) + tables.PRECONDS, tables.COND_REFERENCE[key]))
            for r in out:
                rel = abs(r["cond_est"] - ref[r["precond"]]) / ref[r["precond"]]
                good = rel <= tables.COND_TOLERANCE[r["precond"]]
                ok &= good
                report.append(f"eta={key[0]:g} p={key[1]} n={key[2]:2d} {r['precond']:<4} computed {r['cond_est']:.4g} reference {ref[r['precond']]:.4g} {'pass' if good else 'FAIL'}")
            rows += out
    elif args.id == 2:
        keys = [(p, eta, n) for p in (2, 3, 4, 5) for eta in (1.0, 100.0) for n in (4, 8, 16, 32)]

        def job(key):
            p, eta, n = key
            prob = tables.PoissonProblem.build(cartesian_mesh(n), p, eta)
            out = []
            for kind in tables.PRECONDS:
                _, rep = prob.solve(kind)
                out.append(
                    dict(case="table2", mesh=f"cartesian:{n}", n_or_level=n, p=p, eta=eta, precond=kind,
                         dofs=prob.ndofs, iters=rep.iterations, converged=rep.converged, time_s=rep.time_s,
                         lambda_min=rep.lambda_min_est, lambda_max=rep.lambda_max_est, cond_est=rep.cond_est)
                )
            return out

        counts = {}
        for key, out in zip(keys, _map(job, keys, n_workers)):
            ref = dict(zip(tables.PRECONDS, tables.CG_REFERENCE[key]))
            counts[key] = {r["precond"]: r["iters"] for r in out}
            for r in out:
                good = r["converged"] and r["iters"] <= ref[r["precond"]] * (1 + tables.CG_SLACK)
                ok &= good
                report.append(f"p={key[0]} eta={key[1]:g} n={key[2]:2d} {r['precond']} computed {r['iters']} reference {ref[r['precond']]} {'pass' if good else 'FAIL'}")
            rows += out
        for p, eta, kind, ratio, good in tables.cg_growth(counts):
            ok &= good
            report.append(f"p={p} eta={eta:g} {kind} growth n=8->32 {ratio:.2f} {'pass' if good else 'FAIL'}")
    else:
        from .stokes import assemble_stokes, cavity_lid, solve_stokes

        keys = [(p, eta, n) for p in (2, 3, 4) for eta in (1.0, 100.0) for n in (4, 8, 16)]

        def job(key):
            p, eta, n = key
            sys_ = assemble_stokes(cartesian_mesh(n), p, eta, u_D=cavity_lid)
            out = []
            for kind in tables.PRECONDS:
                t0 = time.perf_counter()
                res = solve_stokes(sys_, kind)
                out.append(
                    dict(case="table5", mesh=f"cartesian:{n}", n_or_level=n, p=p, eta=eta, precond=kind,
                         dofs=sys_.ndofs, iters=res.report.iterations, converged=res.report.converged,
                         time_s=time.perf_counter() - t0)
                )
            return out

        for key, out in zip(keys, _map(job, keys, n_workers)):
            ref = dict(zip(tables.PRECONDS, tables.MINRES_REFERENCE[key]))
            for r in out:
                good = r["converged"] and abs(r["iters"] - ref[r["precond"]]) <= tables.MINRES_BAND * ref[r["precond"]]
                ok &= good
                report.append(f"p={key[0]} eta={key[1]:g} n={key[2]:2d} {r['precond']} computed {r['iters']} reference {ref[r['precond']]} {'pass' if good else 'FAIL'}")
            rows += out
    print("\n".join(report), file=sys.stderr)
    write_rows(rows, args.out)
    return 0 if ok else 2


def _map(fn, items, workers):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# -- entry point -----------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="hdivdg", description="H(div) interior penalty solvers and preconditioners")
    sub = ap.add_subparsers(dest="problem", required=True)

    def solver_flags(sp, report_default):
        sp.add_argument("--mesh", default="cartesian:4", help="cartesian:N | star:L | skewed:N:S | file:PATH")
        sp.add_argument("--p", type=int, default=2)
        sp.add_argument("--eta", type=float, default=10.0)
        sp.add_argument("--precond", default="sub", help="none | sub | fic | aux")
        sp.add_argument("--tol", type=float, default=1e-12)
        sp.add_argument("--maxit", type=int, default=5000)
        sp.add_argument("--report", choices=("iters", "cond", "both"), default=report_default)
        sp.add_argument("--out", help="CSV output path (default: standard output)")
        sp.add_argument("--dump", help="write the solution DOF vector, one float per line")
        sp.add_argument("--lanczos", action="store_true", help="Lanczos condition estimates above the dense cap")

    ps = sub.add_parser("poisson", help="vector Laplacian with PCG")
    solver_flags(ps, "iters")
    ps.add_argument("--matrix-out", help="write the system matrix in Matrix Market format")
    st = sub.add_parser("stokes", help="lid driven cavity with MINRES")
    solver_flags(st, "iters")
    st.add_argument("--samples", help="write x,y,u1,u2,p at element centres as CSV")
    vl = sub.add_parser("verify-lemmas", help="check the one-dimensional interpolation constants")
    vl.add_argument("--pmax", type=int, default=8)
    tb = sub.add_parser("table", help="run a reference sweep and compare")
    tb.add_argument("--id", type=int, choices=(1, 2, 5), required=True)
    tb.add_argument("--out", help="CSV output path (default: standard output)")
    return ap


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    handlers = {"poisson": cmd_poisson, "stokes": cmd_stokes, "verify-lemmas": cmd_verify, "table": cmd_table}
    try:
        return handlers[args.problem](args)
    except InputError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except SolverError as err:
        print(f"solver error: {err}", file=sys.stderr)
        return 2
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
