"""Command-line entry point.

Exit codes: 0 when every check passes, 1 when any check fails, 2 on a
configuration, input or runtime error.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
import warnings

import numpy as np

from .config import RunConfig, load_config, parse_floats
from .errors import ConfigError, ParseError, PshSymError
from .inequalities import mt_check, truncated_log_mt_closed_form
from .model_measure import MCConfig, ModelGeometry, ball_volume, sample_cloud, sublevel_volume
from .profile import (convexity_report, energy, exp_profile, read_profile_csv, standard_grid,
                      truncated_log_profile, write_profile_csv)
from .report import INEQUALITY_HEADER, inequality_rows, make_report, write_csv, write_json
from .symmetrization import (distribution, energy_stderr, symmetrize, verify_equidistribution,
                             write_distribution_csv)
from .toric import ToricTestFunction, load_corpus

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2
PLOT_KINDS = ("sigma", "profiles", "geodesic", "mt")


def _mc(cfg: RunConfig) -> MCConfig:
    return MCConfig(cfg.samples, cfg.seed, cfg.shards)


def _grid(cfg: RunConfig):
    return standard_grid(cfg.grid_tmin, cfg.grid_points)


def _out(args, name):
    return os.path.join(args.out, name) if args.out else None


def _emit(args, name, report):
    path = _out(args, name)
    if path:
        write_json(report, path)


def load_function(path: str, n: int, index: int = 0) -> ToricTestFunction:
    """A toric function from JSON (single record or list) or a radial profile CSV."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read function spec {path}: {exc}") from exc
    if path.endswith(".csv"):
        prof = read_profile_csv(io.StringIO(text))
        return ToricTestFunction.radial(prof, n + 1, label=os.path.basename(path))
    funcs = load_corpus(text)
    if not 0 <= index < len(funcs):
        raise ParseError(f"function index {index} out of range (file holds {len(funcs)})")
    u = funcs[index]
    if u.dim != n + 1:
        raise ConfigError(f"function has dimension {u.dim} but n = {n} needs {n + 1}")
    return u


def read_profile(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return read_profile_csv(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read profile {path}: {exc}") from exc


# subcommands --------------------------------------------------------------------------------

def cmd_volume(cfg: RunConfig, args) -> int:
    rows = []
    k = cfg.tol("mc_sigmas")
    print(f"{'l':>6} {'closed form':>14} {'monte carlo':>14} {'stderr':>10}  ok")
    for l in cfg.l_values:
        geom = ModelGeometry(cfg.n, l)
        u = ToricTestFunction(dim=cfg.n + 1, log_A=[1.0], log_b=[0.0], label="log_phi")
        mc = _mc(cfg)
        est = sublevel_volume(u, -1e-12, geom, mc, cloud=sample_cloud(geom, mc, proposal_l=0.5 * l, stream=12))
        exact = ball_volume(geom)
        ok = abs(est.value - exact) <= k * est.stderr
        rows.append({"l": l, "closed_form": exact, "monte_carlo": est.value, "stderr": est.stderr, "passed": ok})
        print(f"{l:6g} {exact:14.8f} {est.value:14.8f} {est.stderr:10.2e}  {'yes' if ok else 'NO'}")
    passed = all(r["passed"] for r in rows)
    _emit(args, "volume.json", make_report("volume", cfg.echo(), {"passed": passed, "cases": rows}))
    return EXIT_OK if passed else EXIT_FAIL


def cmd_symmetrize(cfg: RunConfig, args) -> int:
    u = load_function(args.function, cfg.n, args.index)
    grid = _grid(cfg)
    rows = []
    for l in cfg.l_values:
        geom = ModelGeometry(cfg.n, l)
        cloud = sample_cloud(geom, _mc(cfg))
        d = distribution(u, geom, cloud=cloud)
        if d.min_u >= 0:
            raise ConfigError("function is non-negative on the ball; nothing to symmetrize")
        f = symmetrize(d, geom, grid=grid)
        conv = convexity_report(f, f.meta["convexity_eps"])
        eq = verify_equidistribution(u, f, geom, dist=d)
        E_hat = energy(f, geom).value
        row = {"l": l, "min_u": d.min_u, "E_hat": E_hat, "E_hat_stderr": energy_stderr(f, geom),
               "convexity": conv, "equidistribution": eq, "passed": bool(conv["passed"] and eq["passed"])}
        rows.append(row)
        print(f"l={l:g}: min u = {d.min_u:.6g}, E(u hat) = {E_hat:.6g} +- {row['E_hat_stderr']:.2g}, "
              f"convex: {conv['passed']}, equidistributed: {eq['passed']}")
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            with open(os.path.join(args.out, f"profile_l{l:g}.csv"), "w", encoding="utf-8") as fh:
                write_profile_csv(f, fh)
            with open(os.path.join(args.out, f"sigma_l{l:g}.csv"), "w", encoding="utf-8") as fh:
                write_distribution_csv(d, fh)
    passed = all(r["passed"] for r in rows)
    _emit(args, "symmetrize.json", make_report("symmetrize", cfg.echo(),
                                               {"function": u.label, "passed": passed, "cases": rows}))
    return EXIT_OK if passed else EXIT_FAIL


def cmd_energy(cfg: RunConfig, args) -> int:
    from .ma_oracle import energy_pl_2d, energy_quadrature

    u = load_function(args.function, cfg.n, args.index)
    geom = ModelGeometry(cfg.n, 1.0)
    body = {"function": u.label}
    passed = True
    if u.radials and not u.is_piecewise:
        prof = u.radials[0][0]
        body["profile_energy"] = energy(prof, geom).value
    if "profile_energy" in body and not hasattr(u.radials[0][0], "df"):
        # piecewise-linear radial input: the energy is the 1D integral itself
        print(f"E(u) = int (f')^(n+2) dt = {body['profile_energy']:.10g}")
    elif cfg.n == 1 and u.is_piecewise:
        pe = energy_pl_2d(u, geom, compare=True, tol=cfg.tol("oracle_agreement"))
        body.update(exact=pe.value, atomic=pe.atomic, kink=pe.kink, quadrature=pe.quadrature.value,
                    relative_gap=pe.relative_gap, atoms=len(pe.atoms))
        print(f"E(u) = {pe.value:.10g} (atoms {pe.atomic:.6g}, kinks {pe.kink:.6g}); "
              f"mollified quadrature {pe.quadrature.value:.10g}, gap {pe.relative_gap:.2e}")
    else:
        q = energy_quadrature(u, geom)
        body.update(quadrature=q.value, quadrature_error=q.error, by_eps=q.by_eps)
        print(f"E(u) = {q.value:.10g} +- {q.error:.2g} (mollified quadrature)")
        if "profile_energy" in body:
            rel = abs(q.value - body["profile_energy"]) / max(body["profile_energy"], 1e-300)
            body["relative_gap"] = rel
            passed = rel <= cfg.tol("energy_identity_mollified")
            print(f"int (f')^(n+2) dt = {body['profile_energy']:.10g}, relative gap {rel:.2e}")
    body["passed"] = passed
    _emit(args, "energy.json", make_report("energy", cfg.echo(), body))
    return EXIT_OK if passed else EXIT_FAIL


def cmd_mt(cfg: RunConfig, args) -> int:
    from .suite import moser_constant

    C, cal = moser_constant(cfg, cfg.n)
    results = []
    if args.function:
        u = load_function(args.function, cfg.n, args.index)
        for l in cfg.l_values:
            geom = ModelGeometry(cfg.n, l)
            results.append(mt_check(u, geom, C, mc=_mc(cfg)))
    else:
        for l in cfg.l_values:
            geom = ModelGeometry(cfg.n, l)
            for a in (0.1, 1.0, 10.0, 50.0):
                results.append(truncated_log_mt_closed_form(a, geom, C))
    print(f"C = {C:.6g} (calibrated sup {cal.C_est:.6g})")
    for r in results:
        tag = ", ".join(f"{k}={r.extra[k]:g}" for k in ("a", "l") if k in r.extra)
        print(f"{r.name} [{tag}]: {r.lhs:.6g} <= {r.rhs:.6g}  margin {r.margin:.4g}  "
              f"{'pass' if r.passed else 'FAIL'}")
    passed = all(r.passed for r in results)
    _emit(args, "mt.json", make_report("mt", cfg.echo(), {"C": C, "passed": passed, "inequalities": results}))
    if args.out:
        write_csv(os.path.join(args.out, "mt.csv"), INEQUALITY_HEADER, inequality_rows(results))
    return EXIT_OK if passed else EXIT_FAIL


def _geodesic_rows(f0, f1, geom, points):
    from .suite import geodesic_curve

    s = np.linspace(0.0, 1.0, points)
    E, line = geodesic_curve(f0, f1, geom, s)
    return s, E, line


def cmd_geodesic(cfg: RunConfig, args) -> int:
    grid = _grid(cfg)
    f0 = read_profile(args.profiles[0]) if args.profiles else truncated_log_profile(1.0, 1.0, grid)
    f1 = read_profile(args.profiles[1]) if args.profiles else exp_profile().on_grid(grid)
    geom = ModelGeometry(cfg.n, 1.0)
    s, E, line = _geodesic_rows(f0, f1, geom, args.points)
    dev = float(np.max(np.abs(E - line)))
    rel = dev / max(abs(E[0]), abs(E[-1]), 1e-300)
    passed = rel <= cfg.tol("geodesic_affine")
    for si, e, a in zip(s, E, line):
        print(f"s={si:.3f}  E={e:.10g}  affine={a:.10g}  residual={e - a:.2e}")
    if args.out:
        write_csv(os.path.join(args.out, "geodesic.csv"), ("s", "E", "affine", "residual"),
                  zip(s, E, line, E - line))
    _emit(args, "geodesic.json", make_report("geodesic", cfg.echo(), {
        "s": s, "energy": E, "max_relative_deviation": rel, "passed": passed}))
    return EXIT_OK if passed else EXIT_FAIL


def cmd_suite(cfg: RunConfig, args) -> int:
    from .suite import suite_report, summary_lines

    report, timing = suite_report(cfg, check_reproducibility=not args.skip_reproducibility)
    for line in summary_lines(report):
        print(line)
    if args.out:
        write_json(report, os.path.join(args.out, "report.json"))
        with open(os.path.join(args.out, "timing.json"), "w", encoding="utf-8") as fh:
            json.dump({k: round(v, 3) for k, v in sorted(timing.items())}, fh, indent=1)
            fh.write("\n")
        write_csv(os.path.join(args.out, "inequalities.csv"), INEQUALITY_HEADER,
                  ((r["name"], r["extra"].get("l", ""), r["extra"].get("n", ""), r["lhs"], r["rhs"], r["margin"],
                    r["passed"]) for r in report["inequalities"]))
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_plotdata(cfg: RunConfig, args) -> int:
    from .suite import corpus_for

    kinds = [k for k in (s.strip() for s in args.select.split(",")) if k]
    bad = [k for k in kinds if k not in PLOT_KINDS]
    if bad:
        raise ConfigError(f"unknown plot data selection {bad}; choose from {list(PLOT_KINDS)}")
    if not kinds:
        warnings.warn("NO_OUTPUT: empty selection, nothing written", RuntimeWarning, stacklevel=1)
        return EXIT_OK
    if not args.out:
        raise ConfigError("plotdata needs --out DIR")
    os.makedirs(args.out, exist_ok=True)
    written = []
    if "sigma" in kinds or "profiles" in kinds:
        corpus = corpus_for(cfg)[: min(cfg.corpus_size, 3)]
        for l in cfg.corpus_l_values:
            geom = ModelGeometry(1, l)
            cloud = sample_cloud(geom, _mc(cfg))
            for i, u in enumerate(corpus):
                d = distribution(u, geom, cloud=cloud)
                if "sigma" in kinds:
                    path = os.path.join(args.out, f"sigma_{i}_l{l:g}.csv")
                    with open(path, "w", encoding="utf-8") as fh:
                        write_distribution_csv(d, fh)
                    written.append(path)
                if "profiles" in kinds:
                    f = symmetrize(d, geom, grid=_grid(cfg))
                    path = os.path.join(args.out, f"profile_{i}_l{l:g}.csv")
                    with open(path, "w", encoding="utf-8") as fh:
                        write_profile_csv(f, fh)
                    written.append(path)
    if "geodesic" in kinds:
        grid = _grid(cfg)
        s, E, line = _geodesic_rows(truncated_log_profile(1.0, 1.0, grid), exp_profile().on_grid(grid),
                                    ModelGeometry(1, 1.0), 11)
        path = os.path.join(args.out, "geodesic.csv")
        write_csv(path, ("s", "E", "affine", "residual"), zip(s, E, line, E - line))
        written.append(path)
    if "mt" in kinds:
        from .suite import moser_constant

        C, _ = moser_constant(cfg)
        rows = []
        for l in cfg.l_values:
            geom = ModelGeometry(1, l)
            for a in np.geomspace(0.01, 100.0, 41):
                r = truncated_log_mt_closed_form(float(a), geom, C)
                rows.append((l, float(a), r.lhs, r.rhs, r.margin))
        path = os.path.join(args.out, "mt_margins.csv")
        write_csv(path, ("l", "a", "lhs", "rhs", "margin"), rows)
        written.append(path)
    for p in written:
        print(p)
    return EXIT_OK


COMMANDS = {
    "volume": cmd_volume,
    "symmetrize": cmd_symmetrize,
    "energy": cmd_energy,
    "mt": cmd_mt,
    "geodesic": cmd_geodesic,
    "suite": cmd_suite,
    "plotdata": cmd_plotdata,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key = value configuration file")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--samples", type=int, help="Monte-Carlo sample count")
    common.add_argument("--l", dest="l_values", metavar="VALUES", help="comma-separated homogeneity values")
    common.add_argument("--n", type=int, help="fibre dimension n (ambient C^{n+1})")
    common.add_argument("--out", metavar="DIR", help="directory for JSON reports and CSV tables")
    parser = argparse.ArgumentParser(prog="pshsym", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("volume", parents=[common], help="closed-form ball volume against Monte-Carlo")
    for name, text in (("symmetrize", "distribution function and symmetrized profile"),
                       ("energy", "Monge-Ampere energy from both oracles")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("function", help="toric function JSON or radial profile CSV")
        p.add_argument("--index", type=int, default=0, help="record index in a JSON list")
    p = sub.add_parser("mt", parents=[common], help="Moser-Trudinger checks")
    p.add_argument("function", nargs="?", help="toric function JSON or profile CSV (default: closed-form family)")
    p.add_argument("--index", type=int, default=0)
    p = sub.add_parser("geodesic", parents=[common], help="energy along a radial geodesic")
    p.add_argument("profiles", nargs="*", metavar="PROFILE", help="two profile CSVs (default: max(t,-1), e^t-1)")
    p.add_argument("--points", type=int, default=11, help="number of s values")
    p = sub.add_parser("suite", parents=[common], help="run the acceptance suite")
    p.add_argument("--skip-reproducibility", action="store_true", help="do not rerun the reduced suite twice")
    p = sub.add_parser("plotdata", parents=[common], help="CSV bundles for plotting")
    p.add_argument("--select", default=",".join(PLOT_KINDS), help=f"comma-separated subset of {PLOT_KINDS}")
    return parser


def config_from_args(args) -> RunConfig:
    l_values = parse_floats(args.l_values) if args.l_values is not None else None
    return load_config(args.config, n=args.n, seed=args.seed, samples=args.samples, l_values=l_values)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "geodesic" and args.profiles and len(args.profiles) != 2:
            raise ConfigError("geodesic takes exactly two profile CSVs")
        if getattr(args, "points", 3) < 3:
            raise ConfigError("--points must be >= 3")
        cfg = config_from_args(args)
        return COMMANDS[args.command](cfg, args)
    except PshSymError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, FloatingPointError, MemoryError) as exc:
        print(f"RUNTIME_ERROR: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
