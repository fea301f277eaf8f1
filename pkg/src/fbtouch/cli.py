"""``fbtouch <catalog|solve|blowup|phi|tangency|checks> --config PATH --out DIR``

Exit codes: 0 pass, 1 usage or config error, 2 verification failure,
3 non-convergence.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from . import blowup, catalog, monotonicity, tangency
from ._sor import InnerDivergence
from .grid import Grid, GridError, ProblemClass, ScalarField, decompose_regions, read_field, write_field, write_regions_csv
from .solver import (Pinch, ProblemSpec, Wedge, boundary_values, extract_free_boundary, origin_on_gamma,
                     solve, verify_membership)

log = logging.getLogger("fbtouch")

EXIT_OK, EXIT_CONFIG, EXIT_FAIL, EXIT_NONCONV = 0, 1, 2, 3
COMMANDS = ("catalog", "solve", "blowup", "phi", "tangency", "checks")
DATA_KINDS = catalog.KINDS + ("wedge", "pinch", "zero")


class ConfigError(ValueError):
    pass


class NotConverged(RuntimeError):
    pass


def _number(s: str) -> float:
    return float(Fraction(s.strip()))


def _integer(s: str) -> int:
    return int(s.strip())


def _vector(s: str) -> tuple:
    return tuple(_number(p) for p in s.split(",") if p.strip())


def _flag(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _text(s: str) -> str:
    return s.strip()


SCHEMA = {
    "h": (_number, 1.0 / 128),
    "eps_g": (_number, None),
    "theta": (_number, 1.0),
    "tol": (_number, None),
    "max_outer": (_integer, 200),
    "max_inner": (_integer, 50000),
    "M": (_number, None),
    "source": (_text, "solve"),
    "field": (_text, None),
    "require_contact": (_flag, False),
    "boundary.kind": (_text, None),
    "boundary.a": (_number, 0.0),
    "boundary.alpha": (_number, None),
    "boundary.b": (_number, 0.0),
    "boundary.c": (_number, None),
    "catalog.residual_tol": (_number, 1e-3),
    "catalog.noise": (_number, 1e-4),
    "blowup.j_max": (_integer, 5),
    "blowup.h_target": (_number, 1.0 / 8),
    "phi.direction": (_vector, (0.0, 1.0)),
    "phi.center": (_vector, (0.0, 0.0)),
    "phi.radii": (_vector, tuple(k / 10 for k in range(1, 10))),
    "phi.slack": (_number, None),
    "tangency.synthetic": (_text, None),
    "tangency.radii": (_vector, (0.5, 0.25, 0.125, 0.0625)),
    "tangency.eps": (_number, 0.5),
    "tangency.rho": (_number, 0.25),
    "checks.C0": (_number, 10.0),
    "checks.margin_tol": (_number, None),
    "checks.c_neg": (_number, None),
}


def parse_config(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    cfg = {k: d for k, (_, d) in SCHEMA.items()}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value': {raw.strip()!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            cfg[key] = SCHEMA[key][0](value)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    if cfg["source"] not in ("solve", "sample", "file"):
        raise ConfigError(f"source must be solve, sample or file, not {cfg['source']!r}")
    kind = cfg["boundary.kind"]
    if kind is not None and kind not in DATA_KINDS:
        raise ConfigError(f"unknown boundary.kind {kind!r}")
    return cfg


# --- inputs ------------------------------------------------------------------------

def make_grid(cfg) -> Grid:
    try:
        return Grid.from_h(cfg["h"])
    except GridError as exc:
        raise ConfigError(str(exc)) from None


def boundary_data(cfg):
    kind = cfg["boundary.kind"]
    if kind is None:
        raise ConfigError("boundary.kind is required")
    a, b = cfg["boundary.a"], cfg["boundary.b"]
    alpha, c = cfg["boundary.alpha"], cfg["boundary.c"]
    try:
        if kind == "wedge":
            return Wedge(0.0 if c is None else c, b)
        if kind == "pinch":
            return Pinch(k=4.0 if c is None else c, alpha=0.515 if alpha is None else alpha)
        if kind == "zero":
            return catalog.GlobalSolution("OneSidedPositive", b=catalog.KNOT_MAX)
        return catalog.GlobalSolution(kind, a=a, alpha=0.0 if alpha is None else alpha, b=b)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def make_spec(cfg) -> ProblemSpec:
    try:
        return ProblemSpec(make_grid(cfg), boundary_data(cfg), eps_g=cfg["eps_g"], theta=cfg["theta"],
                           tol=cfg["tol"], max_outer=cfg["max_outer"], max_inner=cfg["max_inner"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


@dataclass
class Input:
    field: ScalarField
    report: object = None   # SolveReport when solved here


def load_input(cfg) -> Input:
    src = cfg["source"]
    if src == "file":
        if not cfg["field"]:
            raise ConfigError("source = file needs a field path")
        try:
            return Input(read_field(cfg["field"]))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read field: {exc}") from None
    if src == "sample":
        data = boundary_data(cfg)
        return Input(ScalarField.from_function(make_grid(cfg), lambda X: _sample(data, X)))
    report = solve(make_spec(cfg))
    if not report.converged:
        raise NotConverged(f"solver did not converge in {report.outer_iters} outer iterations")
    return Input(report.field, report)


def _sample(data, X):
    if isinstance(data, catalog.GlobalSolution):
        return catalog.evaluate(data, X)
    return data(X)


def eps_of(cfg, grid: Grid) -> float:
    return cfg["eps_g"] if cfg["eps_g"] is not None else grid.h


# --- output helpers ------------------------------------------------------------------

def fmt(v) -> str:
    return format(float(v), ".17g")


def write_rows(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else fmt(v) for v in row) + "\n")


def write_gnuplot(out_dir):
    """Whitespace-separated twin ``.dat`` of every CSV, header as a comment."""
    for name in sorted(os.listdir(out_dir)):
        if not name.endswith(".csv"):
            continue
        with open(os.path.join(out_dir, name)) as fh:
            lines = fh.read().splitlines()
        if not lines:
            continue
        with open(os.path.join(out_dir, name[:-4] + ".dat"), "w") as fh:
            fh.write("# " + lines[0].replace(",", " ") + "\n")
            for line in lines[1:]:
                fh.write(line.replace(",", " ") + "\n")


def write_manifest(out_dir, command, config_path, seed, config_text):
    stamp = os.environ.get("SOURCE_DATE_EPOCH")
    when = int(stamp) if stamp is not None else int(time.time())
    with open(os.path.join(out_dir, "manifest.txt"), "w") as fh:
        fh.write(f"subcommand = {command}\n")
        fh.write(f"config = {os.path.basename(config_path)}\n")
        fh.write(f"out = {os.path.basename(os.path.normpath(out_dir))}\n")
        fh.write(f"seed = {seed}\n")
        fh.write(f"timestamp = {time.strftime('%Y-%m-%dT%H:%M:%SZ', time.gmtime(when))}\n")
    with open(os.path.join(out_dir, "config.txt"), "w") as fh:
        fh.write(config_text)


# --- subcommands ---------------------------------------------------------------------

def default_members() -> list:
    G = catalog.GlobalSolution
    return [
        G("HalfSpacePoly", a=0.4, alpha=0.1),
        G("HalfSpacePoly", a=-0.3, alpha=0.2),
        G("OneSidedPositive", b=0.25),
        G("OneSidedPositive", b=0.5),
        G("OneSidedNegative", a=0.25),
        G("OneSidedNegative", a=0.5),
        G("TwoSided", a=0.25, b=0.5),
        G("TwoSided", a=0.125, b=0.75),
    ]


def _params_close(g1, g2, tol) -> bool:
    return g1.kind == g2.kind and all(abs(getattr(g1, k) - getattr(g2, k)) <= tol
                                      for k in ("a", "alpha", "b"))


def cmd_catalog(cfg, out, seed) -> int:
    grid = make_grid(cfg)
    tol = cfg["catalog.residual_tol"]
    rows, ok_all = [], True
    for g in default_members():
        f = catalog.sample(g, grid)
        res = catalog.residual_check(f)
        fit, _ = catalog.classify(f)
        ok = _params_close(fit, g, 1e-6)
        passed = res <= tol and ok
        ok_all &= passed
        rows.append([g.kind, g.a, g.alpha, g.b, g.rotation, res, str(int(ok))])
        if not passed:
            log.warning("%s: residual %.3e, round trip %s", g.to_record(), res, ok)
    # classification under noise
    rng = np.random.default_rng(seed)
    g = catalog.GlobalSolution("TwoSided", a=0.2, b=0.5)
    f = catalog.sample(g, grid)
    amp = cfg["catalog.noise"]
    f = f + np.where(grid.active, rng.uniform(-amp, amp, grid.shape), 0.0)
    fit, rms = catalog.classify(f)
    ok = fit.kind == g.kind and abs(fit.a - g.a) <= 1e-3 and abs(fit.b - g.b) <= 1e-3 and rms <= 2 * amp
    ok_all &= ok
    rows.append(["TwoSided+noise", fit.a, fit.alpha, fit.b, fit.rotation, rms, str(int(ok))])
    write_rows(os.path.join(out, "catalog_report.csv"),
               ["kind", "a", "alpha", "b", "rotation", "residual", "classify_roundtrip_ok"], rows)
    return EXIT_OK if ok_all else EXIT_FAIL


def cmd_solve(cfg, out, seed) -> int:
    spec = make_spec(cfg)
    report = solve(spec)
    grid = spec.grid
    write_field(os.path.join(out, "field.txt"), report.field)
    write_regions_csv(os.path.join(out, "regions.csv"), report.regions)
    write_rows(os.path.join(out, "report.csv"), ["iter", "mask_changes", "residual"],
               [[str(k + 1), str(c), r] for k, (c, r) in enumerate(zip(report.mask_changes, report.residuals))])
    fb = extract_free_boundary(report)
    write_rows(os.path.join(out, "fb_points.csv"), ["x1", "x2"], fb.tolist())
    if not report.converged:
        log.error("not converged after %d outer iterations", report.outer_iters)
        return EXIT_NONCONV
    data = boundary_values(spec.boundary_data, grid)
    fixed = grid.active & ~grid.interior
    M = cfg["M"] if cfg["M"] is not None else max(float(np.max(np.abs(data[fixed]))), 1e-300)
    cls = ProblemClass(r=1.0, M=M, requires_origin_on_gamma=cfg["require_contact"])
    verdict = verify_membership(report.field, cls, spec.eps_g, report.regions)
    write_rows(os.path.join(out, "membership.csv"), ["item", "passed", "value"],
               [[k, str(int(ok)), v] for k, (ok, v) in verdict.items.items()])
    if not verdict.passed:
        log.error("membership failed: %s", ", ".join(verdict.failed()))
        return EXIT_FAIL
    return EXIT_OK


def cmd_blowup(cfg, out, seed) -> int:
    inp = load_input(cfg)
    f = inp.field
    regions = inp.report.regions if inp.report is not None else decompose_regions(f, eps_of(cfg, f.grid))
    if not origin_on_gamma(regions):
        raise tangency.HypothesisError("origin is not a free boundary point; blow-up needs 0 in the free boundary")
    try:
        target = Grid.from_h(cfg["blowup.h_target"])
    except GridError as exc:
        raise ConfigError(str(exc)) from None
    rows, dist, inc = [], [], []
    prev = None
    for j in range(1, cfg["blowup.j_max"] + 1):
        r = 2.0 ** -j
        ur = blowup.rescale(f, np.zeros(f.grid.n), r, target)
        g, _ = catalog.classify(ur)
        d = catalog.sup_distance(ur, g)
        c = float(np.max(np.abs(ur.values - prev.values)[target.active])) if prev is not None else float("nan")
        dist.append(d)
        if prev is not None:
            inc.append(c)
        rows.append([str(j), r, g.kind, g.a, g.alpha, g.b, d, c])
        prev = ur
    write_rows(os.path.join(out, "blowup.csv"),
               ["j", "r", "kind", "a", "alpha", "b", "catalog_distance", "cauchy_increment"], rows)
    ok = nonincreasing(dist[1:]) and nonincreasing(inc[1:])
    return EXIT_OK if ok else EXIT_FAIL


def nonincreasing(seq, atol: float = 1e-12) -> bool:
    return all(b <= a + atol for a, b in zip(seq, seq[1:]))


def cmd_phi(cfg, out, seed) -> int:
    f = load_input(cfg).field
    try:
        h1, h2 = monotonicity.split_directional(f, cfg["phi.direction"])
        scan = monotonicity.phi(h1, h2, cfg["phi.center"], cfg["phi.radii"], eps_of(cfg, f.grid))
    except (ValueError, GridError) as exc:
        raise ConfigError(str(exc)) from None
    monotonicity.write_scan_csv(os.path.join(out, "phi_scan.csv"), scan)
    verdict = monotonicity.monotone_verdict(scan, cfg["phi.slack"])
    with open(os.path.join(out, "phi_verdict.txt"), "w") as fh:
        fh.write(str(verdict) + "\n")
    return EXIT_OK if verdict.monotone else EXIT_FAIL


def cmd_tangency(cfg, out, seed) -> int:
    syn = cfg["tangency.synthetic"]
    h = cfg["h"]
    if syn is not None:
        if syn == "ray":
            pts = tangency.ray_points(h)
        elif syn == "parabola":
            pts = tangency.parabola_points(h)
        else:
            raise ConfigError(f"unknown tangency.synthetic {syn!r}")
    else:
        inp = load_input(cfg)
        if inp.report is None:
            raise ConfigError("tangency needs source = solve or tangency.synthetic")
        pts = extract_free_boundary(inp.report)
        h = inp.field.grid.h
    write_rows(os.path.join(out, "fb_points.csv"), ["x1", "x2"], np.asarray(pts).tolist())
    report = tangency.analyse(pts, cfg["tangency.radii"], h)
    tangency.write_csvs(report, out)
    cone_ok = tangency.cone_exclusion(pts, cfg["tangency.eps"], cfg["tangency.rho"], h)
    trend_ok = report.trend()
    write_rows(os.path.join(out, "tangency_verdicts.csv"), ["check", "passed"],
               [["cone_exclusion", str(int(cone_ok))], ["tangential_trend", str(int(trend_ok))]])
    return EXIT_OK if cone_ok and trend_ok else EXIT_FAIL


def cmd_checks(cfg, out, seed) -> int:
    inp = load_input(cfg)
    f = inp.field
    g = f.grid
    regions = inp.report.regions if inp.report is not None else decompose_regions(f, eps_of(cfg, g))
    radii = blowup.dyadic_radii(g.h)
    margin_tol = cfg["checks.margin_tol"] if cfg["checks.margin_tol"] is not None else g.h
    nd = blowup.nondegeneracy_check(f, regions, radii, c_neg=cfg["checks.c_neg"])
    nd.write_csv(os.path.join(out, "nondegeneracy.csv"))
    pg = blowup.MarginReport()
    for r in radii:
        pg.rows.extend(blowup.patch_growth_check(f, regions, r).rows)
    pg.write_csv(os.path.join(out, "patch_growth.csv"))
    M = cfg["M"] if cfg["M"] is not None else f.sup_abs()
    worst = None
    for k in np.argwhere(regions.gamma):
        z = g.coord(tuple(k))
        if np.linalg.norm(z) + 0.5 > 1.0 + 1e-12:
            continue
        rep = blowup.dyadic_growth(f, z, M=M, C0=cfg["checks.C0"])
        if worst is None or (len(rep.violations), rep.C0_fit) > (len(worst.violations), worst.C0_fit):
            worst = rep
    if worst is not None:
        worst.write_csv(os.path.join(out, "dyadic_growth.csv"))
    qg, _ = blowup.quadratic_growth_check(f, regions, M=M if M > 0 else None)
    H = blowup.hessian_bound_check(f) if g.h <= 1.0 / 64 else float("nan")
    nd_min = nd.min_margin
    items = [
        ("nondegeneracy_min_margin", nd_min is None or nd_min >= -margin_tol, nd_min if nd_min is not None else 0.0),
        ("patch_growth_violations", not pg.violations(), float(len(pg.violations()))),
        ("dyadic_C0_fit", worst is None or (worst.C0_fit <= cfg["checks.C0"] and not worst.violations),
         worst.C0_fit if worst is not None else 0.0),
        ("quadratic_growth_C", True, qg),
        ("hessian_max", True, H),
        ("free_boundary_fraction", True, blowup.fb_measure_estimate(regions)),
    ]
    write_rows(os.path.join(out, "checks.csv"), ["check", "passed", "value"],
               [[k, str(int(ok)), v] for k, ok, v in items])
    return EXIT_OK if all(ok for _, ok, _ in items) else EXIT_FAIL


HANDLERS = {
    "catalog": cmd_catalog,
    "solve": cmd_solve,
    "blowup": cmd_blowup,
    "phi": cmd_phi,
    "tangency": cmd_tangency,
    "checks": cmd_checks,
}


def _apply_threads():
    raw = os.environ.get("FBTOUCH_THREADS", "0").strip() or "0"
    n = int(raw)
    if n > 0:
        import numba
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def main(argv: Optional[list] = None) -> int:
    parser = argparse.ArgumentParser(prog="fbtouch", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--gnuplot", action="store_true")
    parser.add_argument("-v", "--verbose", action="store_true")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _apply_threads()
        with open(args.config) as fh:
            text = fh.read()
        cfg = parse_config(text)
        os.makedirs(args.out, exist_ok=True)
        write_manifest(args.out, args.command, args.config, args.seed, text)
        code = HANDLERS[args.command](cfg, args.out, args.seed)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"fbtouch: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NotConverged, InnerDivergence) as exc:
        print(f"fbtouch: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    if args.gnuplot:
        write_gnuplot(args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
