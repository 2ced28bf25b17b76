"""Command line: ``mixhess run|sweep|lemmas``.

Exit status: 0 success, 1 usage or configuration error, 2 solver failure,
3 audit failure.
"""
import argparse
import configparser
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import exprs, verify
from .grid import (DomainSpec, GridError, build_grid, gradients, hessians)
from .solver import (EpsSchedule, NewtonSettings, Problem, ProblemError, SolverError,
                     continuation, residual)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_AUDIT = 0, 1, 2, 3

SOLUTION_COLUMNS = ("node", "i", "j", "x", "y", "role", "v", "ux", "uy", "grad_norm",
                    "hxx", "hyy", "hxy", "lam1", "lam2")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    domain: DomainSpec
    k: int
    alpha: list
    phi: str
    h: float
    min_across: int = 16
    schedule: EpsSchedule = field(default_factory=EpsSchedule)
    audit: bool = True
    out: Path = Path("out")
    reference_u: str = None
    reference_c: float = 0.0
    boundary_samples: int = 2048


def _number(text, what):
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{what}: cannot read {text!r} as a number") from None


def _get(cp, section, key, conv, default=None, what=None):
    what = what or f"[{section}] {key}"
    if not cp.has_option(section, key):
        if default is None:
            raise ConfigError(f"{what} is required")
        return default
    raw = cp.get(section, key)
    try:
        return conv(raw, what)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{what}: {exc}") from None


def _integer(text, what):
    v = _number(text, what)
    if v != int(v):
        raise ConfigError(f"{what}: expected an integer, got {text!r}")
    return int(v)


def _boolean(text, what):
    t = text.strip().lower()
    if t in ("1", "yes", "true", "on"):
        return True
    if t in ("0", "no", "false", "off"):
        return False
    raise ConfigError(f"{what}: expected a boolean, got {text!r}")


def _parse_domain(cp):
    if not cp.has_section("domain"):
        raise ConfigError("missing [domain] section")
    kind = cp.get("domain", "kind", fallback="disk").strip()
    center = cp.get("domain", "center", fallback="0, 0").split(",")
    if len(center) != 2:
        raise ConfigError("[domain] center must be 'x, y'")
    center = tuple(_number(c, "[domain] center") for c in center)
    try:
        if kind == "disk":
            return DomainSpec.disk(_get(cp, "domain", "radius", _number, 1.0), center)
        if kind == "ellipse":
            return DomainSpec.ellipse(_get(cp, "domain", "a", _number),
                                      _get(cp, "domain", "b", _number), center)
        if kind == "superellipse":
            return DomainSpec.superellipse(_get(cp, "domain", "a", _number),
                                           _get(cp, "domain", "b", _number),
                                           _get(cp, "domain", "p", _number), center)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[domain]: {exc}") from None
    raise ConfigError(f"[domain] kind {kind!r} is not disk, ellipse or superellipse")


def load_config(path, out=None, audit=None):
    """Read an INI run configuration into a :class:`RunConfig`."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None

    domain = _parse_domain(cp)
    if not cp.has_section("problem"):
        raise ConfigError("missing [problem] section")
    k = _get(cp, "problem", "k", _integer)
    if k < 2:
        raise ConfigError(f"k={k}: the equation needs k >= 2")
    if k > 2:
        raise ConfigError(f"k={k}: the planar solver supports only k = 2")
    alpha = []
    for l in range(k):
        if not cp.has_option("problem", f"alpha_{l}"):
            raise ConfigError(f"[problem] alpha_{l} is required for k={k}")
        alpha.append(cp.get("problem", f"alpha_{l}"))
    extra = [o for o in cp.options("problem") if o.startswith("alpha_") and o not in
             {f"alpha_{l}" for l in range(k)}]
    if extra:
        raise ConfigError(f"[problem] has unexpected entries {extra} for k={k}")
    phi = cp.get("problem", "phi", fallback=None)
    if phi is None:
        raise ConfigError("[problem] phi is required")

    h = _get(cp, "grid", "h", _number)
    min_across = _get(cp, "grid", "min_across", _integer, 16)

    newton = NewtonSettings(
        max_iter=_get(cp, "newton", "max_iter", _integer, 50),
        tol_res=_get(cp, "newton", "tol_res", _number, 1e-9),
        tol_step=_get(cp, "newton", "tol_step", _number, 1e-14),
        tau_safety=_get(cp, "newton", "tau_safety", _number, 1e-12),
        min_damping=_get(cp, "newton", "min_damping", _number, 2.0 ** -20),
        lin_tol=_get(cp, "newton", "lin_tol", _number, 1e-12),
    )
    try:
        schedule = EpsSchedule(
            eps0=_get(cp, "continuation", "eps0", _number, 0.1),
            ratio=_get(cp, "continuation", "ratio", _number, 0.5),
            eps_min=_get(cp, "continuation", "eps_min", _number, 1e-4),
            newton=newton)
    except ValueError as exc:
        raise ConfigError(f"[continuation]: {exc}") from None

    cfg = RunConfig(
        domain=domain, k=k, alpha=alpha, phi=phi, h=h, min_across=min_across,
        schedule=schedule,
        audit=_get(cp, "audit", "enabled", _boolean, True),
        out=Path(cp.get("output", "dir", fallback="out")),
        reference_u=cp.get("reference", "u", fallback=None),
        reference_c=_get(cp, "reference", "c", _number, 0.0),
    )
    if out is not None:
        cfg.out = Path(out)
    if audit is not None:
        cfg.audit = audit
    return cfg


def build_problem(cfg):
    """Grid plus discretized coefficients; validates expressions and positivity."""
    try:
        grid = build_grid(cfg.domain, cfg.h, cfg.min_across)
    except GridError as exc:
        raise ConfigError(f"[grid]: {exc}") from None
    funcs = []
    for l, src in enumerate(cfg.alpha):
        try:
            f = exprs.compile_expr(src)
            low, where = exprs.positivity_scan(f.tree, grid, cfg.boundary_samples)
        except (exprs.ExprSyntaxError, exprs.ExprDomainError) as exc:
            raise ConfigError(f"alpha_{l}: {exc}") from None
        if not low > 0:
            raise ConfigError(f"alpha_{l} = {src!r} is not positive: min {low!r} "
                              f"at ({where[0]!r}, {where[1]!r})")
        funcs.append(f)
    try:
        phi = exprs.compile_expr(cfg.phi)
        problem = Problem.from_functions(grid, funcs, phi, cfg.boundary_samples)
    except (exprs.ExprSyntaxError, exprs.ExprDomainError) as exc:
        raise ConfigError(f"phi: {exc}") from None
    except ProblemError as exc:
        raise ConfigError(str(exc)) from None
    return problem


@dataclass
class RunResult:
    problem: Problem
    limit: object
    report: object
    error: float = None
    c_error: float = None


def solve_config(cfg):
    problem = build_problem(cfg)
    limit = continuation(problem, cfg.schedule)
    report = None
    if cfg.audit:
        report = verify.path_audit(limit.records, problem, cfg.schedule.eps0)
    res = RunResult(problem=problem, limit=limit, report=report)
    if cfg.reference_u is not None:
        g = problem.grid
        try:
            us = exprs.evaluate(exprs.parse(cfg.reference_u), g.x, g.y)
        except (exprs.ExprSyntaxError, exprs.ExprDomainError) as exc:
            raise ConfigError(f"[reference] u: {exc}") from None
        us = np.broadcast_to(us, g.x.shape)
        res.error = float(np.abs(limit.v - (us - us.mean())).max())
        res.c_error = float(abs(limit.c - cfg.reference_c))
    return res


# ---------------------------------------------------------------- outputs

def _fmt(v):
    return repr(float(v))


def write_solution(path, grid, v):
    ux, uy = gradients(grid, v)
    hxx, hyy, hxy = hessians(grid, v)
    mid, rad = 0.5 * (hxx + hyy), np.hypot(0.5 * (hxx - hyy), hxy)
    row_of = {int(n): r for r, n in enumerate(grid.interior)}
    ii, jj = np.nonzero(grid.ids >= 0)
    order = np.argsort(grid.ids[ii, jj])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        ny, nx = grid.shape
        fh.write(f"# nx={nx} ny={ny} h={grid.h!r} x0={grid.x0!r} y0={grid.y0!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SOLUTION_COLUMNS)
        for node in range(grid.n):
            j, i = int(ii[order[node]]), int(jj[order[node]])
            r = row_of.get(node)
            if r is None:
                tail = ["nan"] * 8
                role = "band"
            else:
                tail = [_fmt(ux[r]), _fmt(uy[r]), _fmt(math.hypot(ux[r], uy[r])),
                        _fmt(hxx[r]), _fmt(hyy[r]), _fmt(hxy[r]),
                        _fmt(mid[r] + rad[r]), _fmt(mid[r] - rad[r])]
                role = "interior"
            w.writerow([node, i, j, _fmt(grid.x[node]), _fmt(grid.y[node]), role,
                        _fmt(v[node])] + tail)


def read_solution(path):
    """Columns of ``solution.csv`` plus the gridded field.

    Returns a dict of 1-D arrays keyed by column name, the grid geometry
    (``nx``, ``ny``, ``h``, ``x0``, ``y0``) and ``"v_grid"``: a 2-D array
    indexed ``[j, i]`` with NaN where no unknown lives.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        meta = fh.readline()
        rows = list(csv.reader(fh))
    if not meta.startswith("#"):
        raise ValueError(f"{path}: missing grid header line")
    out = {}
    for item in meta[1:].split():
        key, val = item.split("=")
        out[key] = int(val) if key in ("nx", "ny") else float(val)
    header, body = rows[0], rows[1:]
    for c, name in enumerate(header):
        col = [r[c] for r in body]
        if name in ("node", "i", "j"):
            out[name] = np.array([int(x) for x in col], dtype=np.int64)
        elif name == "role":
            out[name] = np.array(col)
        else:
            out[name] = np.array([float(x) for x in col])
    grid_v = np.full((out["ny"], out["nx"]), np.nan)
    grid_v[out["j"], out["i"]] = out["v"]
    out["v_grid"] = grid_v
    return out


def write_matrix(path, values):
    """Gnuplot ``matrix`` text: one grid row per line, NaN outside the domain."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in values:
            fh.write(" ".join(_fmt(v) for v in row) + "\n")


def _gridded(grid, per_node):
    out = np.full(grid.shape, np.nan)
    mask = grid.ids >= 0
    out[mask] = np.asarray(per_node)[grid.ids[mask]]
    return out


def write_outputs(cfg, res):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    lim, problem = res.limit, res.problem
    grid = problem.grid
    write_solution(out / "solution.csv", grid, lim.v)

    last = lim.records[-1]
    F_int, F_bnd, _ = residual(problem, last.state, last.eps)
    res_node = np.full(grid.n, np.nan)
    res_node[grid.interior] = F_int
    res_node[grid.band] = F_bnd
    hxx, hyy, hxy = hessians(grid, last.state.w)
    margin = np.full(grid.n, np.nan)
    margin[grid.interior] = np.minimum(hxx + hyy, hxx * hyy - hxy * hxy)
    write_matrix(out / "u.dat", _gridded(grid, last.state.u))
    write_matrix(out / "residual.dat", _gridded(grid, res_node))
    write_matrix(out / "margin.dat", _gridded(grid, margin))

    path = {
        "c": lim.c,
        "cauchy": lim.cauchy,
        "h": grid.h,
        "unknowns": grid.n,
        "interior": int(len(grid.interior)),
        "band": int(len(grid.band)),
        "records": [
            {
                "eps": r.eps,
                "c_est": r.c_est,
                "iterations": r.newton.iterations,
                "residuals": [float(x) for x in r.newton.residuals],
                "dampings": [float(x) for x in r.newton.dampings],
                "linear_residuals": [float(x) for x in r.newton.linear_residuals],
                "res_interior": r.newton.res_interior,
                "res_boundary": r.newton.res_boundary,
                "sup_grad": r.sup_grad,
                "sup_hess": r.sup_hess,
                "sup_eps_u": r.sup_eps_u,
            }
            for r in lim.records
        ],
    }
    with open(out / "path.json", "w", encoding="utf-8") as fh:
        json.dump(path, fh, indent=1, sort_keys=True)
        fh.write("\n")

    with open(out / "audit.txt", "w", encoding="utf-8") as fh:
        fh.write(res.report.to_text() if res.report is not None else "audits disabled\n")

    if res.error is not None:
        with open(out / "convergence.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("h", "linf_error", "c_error"))
            w.writerow((_fmt(grid.h), _fmt(res.error), _fmt(res.c_error)))


# ---------------------------------------------------------------- commands

def cmd_run(args):
    cfg = load_config(args.config, out=args.out, audit=False if args.no_audit else None)
    res = solve_config(cfg)
    write_outputs(cfg, res)
    print(f"c = {res.limit.c!r}")
    if res.error is not None:
        print(f"linf error = {res.error!r}, c error = {res.c_error!r}")
    if res.report is not None:
        print(f"audit: {'PASS' if res.report.ok else 'FAIL'} ({cfg.out / 'audit.txt'})")
        if not res.report.ok:
            for e in res.report.failed:
                print("  " + e.line(), file=sys.stderr)
            return EXIT_AUDIT
    return EXIT_OK


def observed_orders(params, errors):
    """log(e_i / e_{i+1}) / log(p_i / p_{i+1}); NaN where undefined."""
    orders = [math.nan]
    for (p1, e1), (p2, e2) in zip(zip(params, errors), zip(params[1:], errors[1:])):
        if e1 > 0 and e2 > 0 and p1 != p2:
            orders.append(math.log(e1 / e2) / math.log(p1 / p2))
        else:
            orders.append(math.nan)
    return orders


def cmd_sweep(args):
    base = load_config(args.config, out=args.out, audit=False if args.no_audit else None)
    values = [_number(v, "--values") for v in args.values]
    rows, failed_audit = [], False
    for v in values:
        if args.param == "h":
            cfg = replace(base, h=v)
        else:
            sched = base.schedule
            try:
                cfg = replace(base, schedule=EpsSchedule(sched.eps0, sched.ratio, v, sched.newton))
            except ValueError as exc:
                raise ConfigError(f"--values: {exc}") from None
        cfg.out = Path(base.out) / f"{args.param}={v!r}"
        res = solve_config(cfg)
        write_outputs(cfg, res)
        failed_audit |= res.report is not None and not res.report.ok
        rows.append((v, res))

    table = Path(base.out) / f"sweep_{args.param}.csv"
    table.parent.mkdir(parents=True, exist_ok=True)
    with open(table, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if args.param == "h":
            have_ref = rows[0][1].error is not None
            errs = [r.error if have_ref else math.nan for _, r in rows]
            cerr = [r.c_error if have_ref else math.nan for _, r in rows]
            orders = observed_orders(values, errs)
            w.writerow(("h", "c", "linf_error", "c_error", "order"))
            print(f"{'h':>12} {'c':>14} {'linf_error':>12} {'c_error':>12} {'order':>7}")
            for (v, r), e, ce, o in zip(rows, errs, cerr, orders):
                w.writerow((_fmt(v), _fmt(r.limit.c), _fmt(e), _fmt(ce), _fmt(o)))
                print(f"{v:12.6g} {r.limit.c:14.6e} {e:12.4e} {ce:12.4e} {o:7.3f}")
        else:
            w.writerow(("eps_min", "c", "c_est_last", "delta_c"))
            print(f"{'eps_min':>12} {'c':>16} {'c_est_last':>16} {'delta_c':>12}")
            prev = None
            for v, r in rows:
                dc = math.nan if prev is None else abs(r.limit.c - prev)
                prev = r.limit.c
                last = r.limit.records[-1].c_est
                w.writerow((_fmt(v), _fmt(r.limit.c), _fmt(last), _fmt(dc)))
                print(f"{v:12.6g} {r.limit.c:16.9e} {last:16.9e} {dc:12.4e}")
    return EXIT_AUDIT if failed_audit else EXIT_OK


def cmd_lemmas(args):
    margins = verify.property_sweep(seed=args.seed, samples=args.samples)
    bad = False
    for name in sorted(margins):
        ok = margins[name] >= 0
        bad |= not ok
        print(f"{name:32s} {'PASS' if ok else 'FAIL'}  worst margin {margins[name]:.3e}")
    return EXIT_AUDIT if bad else EXIT_OK


def make_parser():
    p = argparse.ArgumentParser(prog="mixhess", description="Planar mixed Hessian Neumann solver")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config")
        sp.add_argument("--out", default=None, help="output directory (overrides config)")
        sp.add_argument("--no-audit", action="store_true")

    r = sub.add_parser("run", help="solve one configuration")
    common(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="repeat a run over a parameter")
    common(s)
    s.add_argument("--param", choices=("h", "eps_min"), required=True)
    s.add_argument("--values", nargs="+", required=True)
    s.set_defaults(func=cmd_sweep)

    m = sub.add_parser("lemmas", help="sampled operator property checks")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--samples", type=int, default=1000)
    m.set_defaults(func=cmd_lemmas)
    return p


def main(argv=None):
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
