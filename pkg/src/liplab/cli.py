"""Command-line harness: ``liplab <subcommand> [--config PATH] [--out DIR] [--seed N] [--quiet]``.

Subcommands
-----------
approximate  run the approximation pipeline; writes ``certificate.json`` and
             ``certificate.csv`` (columns n, point, in_K, f_n, f, error, bound,
             error_ok, slope, slope_ref, slope_slack, slope_ok, range_ok).
mapop        partition operators on random instances plus the identity and
             single-cell cases; writes ``mapop.json``, ``mapop.csv`` and the
             first instance's ``operator.json``.
sobolev      energy density for each configured ``p``; writes
             ``sobolev_p<p>.json`` / ``.csv`` (columns n, lp_distance, energy,
             oracle, slack, pass, then per-row extras).
bv           total-variation density of an interval or polygon indicator;
             writes ``bv.json`` / ``bv.csv``.
verify       all invariant suites; prints a per-suite table, writes ``verify.json``.

Exit codes: 0 every check passed, 1 some certificate row or check failed
(the offending rows are printed), 2 the configuration could not be parsed.
CSV files use '.' decimals, 17 significant digits and LF line endings, and
every output file is written to a temporary name and renamed into place.
The environment variable LIPLAB_THREADS caps worker threads.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import fields as fam
from .config import ConfigError, ExperimentConfig, default_config, load_config
from .map_operator import BoundedSeq, abs_diff_le, net_amplification_certificate, partition_for_diameter
from .pipeline import Pipeline, _fmt, _jsonable, thread_cap
from .sobolev_bv import (
    anisotropic_perimeter,
    boundary_integral,
    bv_density_check,
    exhaustion_from_measure,
    jump_oracle,
    sobolev_density_check,
)
from .verify import random_mapop_instance, random_net_instance, run_suites

__all__ = ["main", "cmd_approximate", "cmd_mapop", "cmd_sobolev", "cmd_bv", "cmd_verify"]

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def write_atomic(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json(obj):
    return json.dumps(_jsonable(obj), indent=1, sort_keys=True) + "\n"


class _Log:
    def __init__(self, quiet):
        self.quiet = quiet

    def __call__(self, *a):
        if not self.quiet:
            print(*a)


# -- approximate ---------------------------------------------------------------


def cmd_approximate(cfg, out, log=print):
    space = cfg.build_space()
    f = cfg.build_function(space)
    if f.lip is None:
        raise ConfigError(f"function family {cfg.function['family']!r} is not Lipschitz; use the bv subcommand")
    E = cfg.build_exhaustion(space)
    try:
        pipe = Pipeline(space, f, E, cfg.eps, cfg.N, cfg.mode, seed=cfg.seed,
                        sample_points=E.union[: cfg.sample_points])
    except ValueError as e:
        raise ConfigError(str(e)) from None
    _, cert = pipe.run(thread_cap())
    write_atomic(out / "certificate.json", cert.to_json() + "\n")
    write_atomic(out / "certificate.csv", cert.to_csv())
    worst = max(r["error"] / r["bound"] for r in cert.rows if r["in_K"]) if any(r["in_K"] for r in cert.rows) else 0.0
    log(f"approximate: {len(cert.rows)} rows over n=1..{cfg.N}, worst error/bound {worst:.4g}, "
        f"{'PASS' if cert.passed else 'FAIL'}")
    if not cert.passed:
        for line in cert.failures()[:20]:
            print(f"  {line}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


# -- mapop ---------------------------------------------------------------------


def _mapop_cases(cfg, rng):
    m = cfg.mapop
    eps = float(m.get("eps", 0.1))
    cases = []
    # identity: pairwise distinct values spaced far beyond eps
    size = int(min(m.get("max_labels", 10_000), 1000))
    vals = rng.permutation(size).astype(float) * 3 * eps
    cases.append(("identity", [BoundedSeq(tuple(range(size)), vals)], eps, None))
    cases.append(("single-cell", [BoundedSeq(tuple(range(size)), np.full(size, 0.25 * eps))], eps, None))
    for i in range(int(m.get("instances", 200))):
        vecs, e = random_mapop_instance(rng, int(m.get("max_vectors", 5)), int(m.get("max_labels", 10_000)))
        cases.append((f"random-{i}", vecs, e, None))
    for i in range(int(m.get("instances", 200))):
        K, F = random_net_instance(rng, eps, max_labels=min(2000, int(m.get("max_labels", 2000))))
        cases.append((f"net-{i}", F, eps, K))
    return cases


def cmd_mapop(cfg, out, log=print):
    rng = np.random.default_rng(cfg.seed)
    rows, first = [], None
    for name, vecs, eps, K in _mapop_cases(cfg, rng):
        op = partition_for_diameter(vecs, eps)
        if first is None:
            first = op
        A = np.vstack([v.values for v in vecs])
        P = op.apply_values(A)
        err = float(np.abs(P - A).max())
        row = {"case": name, "labels": A.shape[1], "vectors": len(vecs), "eps": eps, "rank": op.rank,
               "max_error": err, "ratio": err / eps, "premise": True,
               "pass": bool(np.all(abs_diff_le(P, A, eps)))}
        if K is not None:
            cert = net_amplification_certificate(K, vecs, op, eps, strict=False)
            row.update(ratio=cert.worst_ratio, premise=cert.net_ok and cert.base_ok,
                       max_error=float(cert.errors.max()))
            row["pass"] = cert.passed
        if name == "identity":
            row["pass"] = row["pass"] and op.rank == A.shape[1]
        if name == "single-cell":
            row["pass"] = row["pass"] and op.rank == 1
        rows.append(row)
    cols = ["case", "labels", "vectors", "eps", "rank", "max_error", "ratio", "premise", "pass"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([r[c] if isinstance(r[c], str) else _fmt(r[c]) for c in cols])
    ok = all(r["pass"] for r in rows)
    worst = max(r["ratio"] for r in rows if r["case"].startswith("net-")) if any(
        r["case"].startswith("net-") for r in rows) else 0.0
    write_atomic(out / "mapop.csv", buf.getvalue())
    write_atomic(out / "mapop.json", _json({"seed": cfg.seed, "passed": ok, "worst_net_ratio": worst, "cases": rows}))
    write_atomic(out / "operator.json", first.to_json() + "\n")
    log(f"mapop: {len(rows)} cases, worst amplification ratio {worst:.4g}, {'PASS' if ok else 'FAIL'}")
    for r in rows:
        if not r["pass"]:
            print(f"  case {r['case']}: rank {r['rank']}, ratio {r['ratio']:.6g}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAIL


# -- sobolev / bv --------------------------------------------------------------


def _report_failures(rep, label):
    bad = [k for k, ok in rep.checks.items() if not ok]
    if bad:
        print(f"  {label}: failed {', '.join(bad)}", file=sys.stderr)
        for r in rep.final_window():
            print(f"    n={r['n']} energy={r['energy']:.6g} oracle={r['oracle']:.6g} "
                  f"lp_distance={r['lp_distance']:.3g}", file=sys.stderr)


def cmd_sobolev(cfg, out, log=print):
    space = cfg.build_space()
    f = cfg.build_function(space)
    mu = cfg.build_measure()
    if mu is None:
        raise ConfigError("the sobolev subcommand needs a measure")
    if f.lip is None or not f.has_gradient:
        raise ConfigError("the sobolev subcommand needs a Lipschitz family with an analytic gradient")
    tol = cfg.tolerances
    pipe = Pipeline(space, f, exhaustion_from_measure(mu, cfg.N, cfg.seed), cfg.eps, cfg.N, cfg.mode, seed=cfg.seed)
    code = EXIT_OK
    for p in cfg.p:
        rep = sobolev_density_check(f, mu, p, pipeline=pipe, space=space, tol=tol.get("energy", 0.02),
                                    lp_tol=tol.get("lp", 0.01), slope_tol=tol.get("slope", 0.15))
        tag = f"{p:g}".replace(".", "_")
        write_atomic(out / f"sobolev_p{tag}.json", rep.to_json() + "\n")
        write_atomic(out / f"sobolev_p{tag}.csv", rep.to_csv())
        fin = rep.final
        log(f"sobolev p={p:g}: energy {fin['energy']:.6g} vs oracle {rep.oracle:.6g}, "
            f"L^p distance {fin['lp_distance']:.3g}, {'PASS' if rep.passed else 'FAIL'}")
        if not rep.passed:
            _report_failures(rep, f"p={p:g}")
            code = EXIT_FAIL
    return code


def _bv_setup(cfg, space, mu):
    """Indicator, ramp family and oracle for the configured BV function."""
    d = dict(cfg.function)
    family = d.pop("family")
    bv = cfg.bv
    w0, wmin = float(bv.get("w0", 0.64)), float(bv.get("w_min", 0.02))
    width = lambda m: max(wmin, w0 / 2 ** (m - 1))
    dens = mu.density
    if family == "indicator":
        if space.dim != 1:
            raise ConfigError("interval indicators need a one-dimensional space")
        a, b = float(d["a"]), float(d["b"])
        lo, hi = float(mu.points.min()), float(mu.points.max())
        # jumps on or beyond the edge of the domain carry no variation inside it
        a_eff = -math.inf if a <= lo else a
        b_eff = math.inf if b >= hi else b
        unit = float(space.dual_norm(np.ones(1)))
        jumps = [(x, unit) for x in (a_eff, b_eff) if math.isfinite(x)]
        total, integrate = jump_oracle(jumps, dens)
        f = fam.interval_indicator(space, a, b)
        return f, (lambda m: fam.interval_ramp(space, a_eff, b_eff, width(m))), total, integrate
    if family == "polygon":
        verts = np.asarray(d["vertices"], dtype=float)
        total = anisotropic_perimeter(space, verts, dens)
        integrate = lambda phi: boundary_integral(space, verts, phi, dens)
        f = fam.polygon_indicator(space, verts)
        return f, (lambda m: fam.polygon_ramp(space, verts, width(m))), total, integrate
    raise ConfigError("the bv subcommand supports the 'indicator' and 'polygon' families")


def cmd_bv(cfg, out, log=print):
    space = cfg.build_space()
    mu = cfg.build_measure()
    if mu is None:
        raise ConfigError("the bv subcommand needs a measure")
    try:
        f, ramp, total, integrate = _bv_setup(cfg, space, mu)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"bad bv function descriptor: {e}") from None
    tol = cfg.tolerances
    rep = bv_density_check(f, mu, ramp, total, integrate, space=space, M=int(cfg.bv.get("M", 8)),
                           N=int(cfg.bv.get("N", 16)), eps=cfg.eps, mode=cfg.mode, seed=cfg.seed,
                           tol=tol.get("energy", 0.02), weak_tol=tol.get("weak", 0.05),
                           l1_tol=tol.get("l1", 0.05))
    write_atomic(out / "bv.json", rep.to_json() + "\n")
    write_atomic(out / "bv.csv", rep.to_csv())
    fin = rep.final
    log(f"bv: energy {fin['energy']:.6g} vs oracle {total:.6g}, panel discrepancy "
        f"{fin['discrepancy']:.3g}, {'PASS' if rep.passed else 'FAIL'}")
    if not rep.passed:
        _report_failures(rep, "bv")
        return EXIT_FAIL
    return EXIT_OK


# -- verify --------------------------------------------------------------------


def cmd_verify(cfg, out, log=print):
    results = run_suites(cfg.seed, _suite_sizes(cfg))
    lines = [f"{'suite':<14} {'checked':>8} {'seconds':>8}  result"]
    for r in results:
        lines.append(f"{r.name:<14} {r.checked:>8} {r.seconds:>8.2f}  {'PASS' if r.passed else 'FAIL'}")
    ok = all(r.passed for r in results)
    write_atomic(out / "verify.json", _json({
        "seed": cfg.seed, "passed": ok,
        "suites": [{"name": r.name, "checked": r.checked, "passed": r.passed, "failures": r.failures}
                   for r in results],
    }))
    log("\n".join(lines))
    for r in results:
        for msg in r.failures:
            print(f"  {r.name}: {msg}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAIL


def _suite_sizes(cfg):
    # mapop sizes drive the operator suites, verify sizes the others
    return {
        "instances": int(cfg.verify.get("instances", 20)),
        "pairs": int(cfg.verify.get("pairs", 2000)),
        "max_vectors": int(cfg.mapop.get("max_vectors", 5)),
        "max_labels": int(cfg.mapop.get("max_labels", 10_000)),
        "eps": float(cfg.mapop.get("eps", 0.1)),
        "mapop_instances": int(cfg.mapop.get("instances", 200)),
    }


HELP = {
    "approximate": "run the approximation pipeline and write its certificate",
    "mapop": "build partition operators and check the amplification bound",
    "sobolev": "check Sobolev energy density for each configured p",
    "bv": "check total-variation density of an indicator",
    "verify": "run every invariant suite",
}

COMMANDS = {
    "approximate": cmd_approximate,
    "mapop": cmd_mapop,
    "sobolev": cmd_sobolev,
    "bv": cmd_bv,
    "verify": cmd_verify,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="liplab", description="Certified smooth cylindrical approximation experiments.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config (defaults are used when omitted)")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--seed", help="unsigned 64-bit seed (overrides the config)")
    common.add_argument("--quiet", action="store_true", help="suppress the summary on stdout")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=HELP[name])
    return ap


def _load(args):
    cfg = load_config(args.config) if args.config else default_config()
    if args.seed is not None:
        d = cfg.to_dict()
        d["seed"] = args.seed
        cfg = ExperimentConfig.from_dict(d, cfg.base_dir)
    return cfg


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    log = _Log(args.quiet)
    try:
        cfg = _load(args)
        out = Path(args.out or cfg.out)
        return COMMANDS[args.command](cfg, out, log)
    except ConfigError as e:
        print(f"liplab: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

