"""Acceptance suite: independent jobs, a worker pool, ordered report assembly.

Jobs return plain dictionaries (and :class:`InequalityResult` lists) so the
report does not depend on scheduling. Wall-clock timings are kept apart from
the report, which must be byte-identical across runs with the same config.
"""

from __future__ import annotations

import functools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .config import RunConfig
from .errors import InconsistentOraclesError, PshSymError
from .inequalities import (SCALES, calibrate_moser, moser_check, moser_functional, mt_radial, mt_toric,
                           random_normalized_profiles, scaled_moser_check, scaled_profile, strong_mt_check,
                           truncated_log_mt_closed_form)
from .ma_oracle import energy_pl_2d, energy_quadrature
from .model_measure import MCConfig, ModelGeometry, sample_cloud, sublevel_volume
from .profile import (convexity_report, energy, exp_profile, softmax_truncated_log, standard_grid,
                      truncated_log_profile)
from .report import dumps, make_report
from .symmetrization import (convexity_tolerance, distribution, energy_stderr, log_concavity_check,
                             strict_monotonicity_check, symmetrize, verify_equidistribution)
from .toric import ToricTestFunction, random_corpus
from .variation import (BivariateSample, affine_deviation, concavity_defect, energy_along, geodesic_family,
                        inverse_in_t, random_concave_sample, subgeodesic_max, symmetrized_subgeodesic_check)

TITLES = {
    1: "ball volume",
    2: "radial fixed point",
    3: "energy identity",
    4: "energy decreases under symmetrization",
    5: "profile convexity and log-concavity of sigma",
    6: "strict monotonicity of sigma",
    7: "convexity of the inverse in t",
    8: "geodesic affineness and subgeodesic concavity",
    9: "symmetrized subgeodesics",
    10: "Moser inequality",
    11: "Moser-Trudinger inequality",
    12: "reproducibility",
}


def _mc(cfg: RunConfig) -> MCConfig:
    return MCConfig(cfg.samples, cfg.seed, cfg.shards)


def _grid(cfg: RunConfig):
    return standard_grid(cfg.grid_tmin, cfg.grid_points)


@functools.lru_cache(maxsize=4)
def _cloud(n, l, samples, seed, shards, proposal_l=None, stream=0):
    return sample_cloud(ModelGeometry(n, l), MCConfig(samples, seed, shards), proposal_l, stream)


def cloud_for(cfg: RunConfig, geom: ModelGeometry, proposal_l=None, stream=0):
    return _cloud(geom.n, geom.l, cfg.samples, cfg.seed, cfg.shards, proposal_l, stream)


def corpus_for(cfg: RunConfig) -> list:
    return random_corpus(cfg.corpus_size, ModelGeometry(1, 1.0), cfg.seed)


def moser_constant(cfg: RunConfig, n: int = 1):
    cal = calibrate_moser(ModelGeometry(n, 1.0))
    C = cal.C if cfg.moser_C_override is None else cfg.moser_C_override
    return C, cal


# criterion 1 ---------------------------------------------------------------------------------

def job_ball_volume(cfg: RunConfig) -> dict:
    """``|{u < t}|`` at ``t -> 0-`` for ``u = log Phi``, standard and tempered proposals."""
    k = cfg.tol("mc_sigmas")
    rows = []
    for n in (1, 2):
        u = ToricTestFunction(dim=n + 1, log_A=[1.0], log_b=[0.0], label="log_phi")
        for l in cfg.l_values:
            if l > n + 1:
                continue
            geom = ModelGeometry(n, l)
            exact = geom.ball_mass
            mc = _mc(cfg)
            std = sublevel_volume(u, -1e-12, geom, mc, cloud=sample_cloud(geom, mc, stream=11))
            tmp = sublevel_volume(u, -1e-12, geom, mc,
                                  cloud=sample_cloud(geom, mc, proposal_l=0.5 * l, stream=12))
            ok_std = abs(std.value - exact) <= max(k * std.stderr, 1e-12 * exact)
            ok_tmp = abs(tmp.value - exact) <= k * tmp.stderr
            rel = tmp.stderr / exact
            rows.append({
                "n": n, "l": l, "exact": exact,
                "standard": std.value, "standard_stderr": std.stderr,
                "tempered": tmp.value, "tempered_stderr": tmp.stderr, "relative_stderr": rel,
                "passed": bool(ok_std and ok_tmp and rel < cfg.tol("volume_relative_stderr")),
            })
    return {"passed": all(r["passed"] for r in rows), "cases": rows}


# criterion 2 ---------------------------------------------------------------------------------

def _radial_cases(grid):
    cases = [(f"truncated_log(a={a})", truncated_log_profile(a, 1.0, grid), lambda t, a=a: (t > -a) * 1.0, a)
             for a in (0.5, 1.0, 2.0, 4.0)]
    ep = exp_profile()
    cases.append(("exp", ep.on_grid(grid), ep.df, None))
    return cases


def job_radial_fixed_point(cfg: RunConfig) -> dict:
    geom = ModelGeometry(1, 1.0)
    grid = _grid(cfg)
    h = float(np.max(np.diff(grid)))
    k = cfg.tol("mc_sigmas")
    cloud = cloud_for(cfg, geom)
    rows = []
    for name, prof, dprof, a in _radial_cases(grid):
        u = ToricTestFunction.radial(prof, geom.dim, label=name)
        d = distribution(u, geom, cloud=cloud)
        f = symmetrize(d, geom, grid=grid)
        err = float(np.max(np.abs(f(grid) - prof(grid))))
        # propagate sigma noise through tau = log(l sigma / vol) / l at the nodes
        node_t, node_s = f.meta["nodes_t"][1:-1], f.meta["nodes_s"][1:-1]
        sig, se = d.sigma_at(node_s)
        dtau = np.asarray(se) / (geom.l * np.maximum(np.asarray(sig), 1e-300))
        slope = np.asarray(dprof(np.clip(node_t, grid[0], 0.0)), dtype=np.float64)
        propagated = float(np.max(slope * dtau)) if node_t.size else 0.0
        max_slope = float(np.max(np.abs(prof.slopes)))
        bound = h * max_slope + k * propagated
        E_exact = a if a is not None else 1.0 / (geom.n + 2)
        E_hat = energy(f, geom).value
        rel = abs(E_hat - E_exact) / E_exact
        rows.append({
            "profile": name, "sup_error": err, "bound": bound, "propagated_stderr": propagated,
            "energy": E_hat, "energy_exact": E_exact, "energy_relative_error": rel,
            "energy_stderr": energy_stderr(f, geom),
            "passed": bool(err <= bound and rel <= cfg.tol("radial_energy")),
        })
    return {"passed": all(r["passed"] for r in rows), "cases": rows}


# criterion 3 ---------------------------------------------------------------------------------

def job_energy_identity(cfg: RunConfig) -> dict:
    rows = []
    fine = standard_grid(cfg.grid_tmin, 200_001)
    for n in (1, 2):
        geom = ModelGeometry(n, 1.0)
        q = energy_quadrature(ToricTestFunction.radial(exp_profile(), n + 1, label="exp"), geom)
        exact = 1.0 / (n + 2)
        rel = abs(q.value - exact) / exact
        rows.append({"n": n, "profile": "exp", "quadrature": q.value, "exact": exact, "relative_error": rel,
                     "passed": bool(rel <= cfg.tol("energy_identity_smooth"))})
        for a in (0.5, 1.0, 2.0):
            # the extrapolated mollification of max(log Phi, -a): exact value a
            u = ToricTestFunction(dim=n + 1, aff_a=[[0.0] * (n + 1)], aff_b=[-a], log_A=[1.0], log_b=[0.0],
                                  label=f"truncated_log(a={a})")
            q = energy_quadrature(u, geom)
            rel = abs(q.value - a) / a
            rows.append({"n": n, "profile": f"mollified_truncated_log(a={a})", "quadrature": q.value,
                         "exact": a, "relative_error": rel,
                         "passed": bool(rel <= cfg.tol("energy_identity_mollified"))})
            # a fixed smooth mollification against its own 1D energy
            sp = softmax_truncated_log(a, 0.05)
            q = energy_quadrature(ToricTestFunction.radial(sp, n + 1, label=sp.name), geom)
            ref = energy(sp.on_grid(fine), geom, check_tail=False).value
            rel = abs(q.value - ref) / ref
            rows.append({"n": n, "profile": f"softmax_truncated_log(a={a},eps=0.05)", "quadrature": q.value,
                         "exact": ref, "relative_error": rel,
                         "passed": bool(rel <= cfg.tol("energy_identity_mollified"))})
    return {"passed": all(r["passed"] for r in rows), "cases": rows}


# criteria 4, 5, 6, 11 (per corpus item) -------------------------------------------------------

def job_corpus_item(cfg: RunConfig, index: int, u: ToricTestFunction, C: float) -> dict:
    geom1 = ModelGeometry(1, 1.0)
    k = cfg.tol("mc_sigmas")
    rec = {"index": index, "label": u.label}
    try:
        pe = energy_pl_2d(u, geom1, compare=True, tol=cfg.tol("oracle_agreement"))
        rec.update(oracle_consistent=True)
    except InconsistentOraclesError as exc:
        pe = energy_pl_2d(u, geom1, compare=False)
        rec.update(oracle_consistent=False, oracle_error=str(exc))
    E_u = pe.value
    rec.update(E_u=E_u, E_quadrature=pe.quadrature.value if pe.quadrature else None,
               oracle_relative_gap=pe.relative_gap, atomic=pe.atomic, kink=pe.kink)
    per_l = []
    ls = sorted(set(cfg.corpus_l_values) | set(l for l in cfg.l_values if l <= 2))
    ineq = []
    for l in ls:
        geom = ModelGeometry(1, l)
        cloud = cloud_for(cfg, geom)
        d = distribution(u, geom, cloud=cloud)
        f = symmetrize(d, geom, grid=_grid(cfg))
        E_hat = energy(f, geom).value
        item = {"l": l, "E_hat": E_hat, "E_hat_stderr": energy_stderr(f, geom), "min_u": d.min_u}
        if l in cfg.corpus_l_values:
            tol = cfg.tol("energy_monotonicity")
            item["energy_margin"] = E_u * (1 + tol) - E_hat
            item["energy_passed"] = bool(E_hat <= E_u * (1 + tol))
            family = cfg.corpus_size * len(cfg.corpus_l_values)
            item["convexity"] = convexity_report(f, convexity_tolerance(f, k, family))
            item["log_concavity"] = log_concavity_check(d, k, family=family)
            item["monotonicity"] = strict_monotonicity_check(d, k)
        if l in cfg.l_values:
            res = mt_toric(u, geom, C, E_u, _mc(cfg), cloud=cloud, symmetrized=f)
            eq = res.extra["equidistribution_z"]
            res.extra["equidistribution_passed"] = bool(eq <= k)
            item["mt"] = res.to_dict()
            item["equidistribution"] = verify_equidistribution(u, f, geom, dist=d)
            strong = strong_mt_check(f, geom, C)
            item["strong_mt"] = strong.to_dict()
            ineq.extend([res, strong])
        per_l.append(item)
    rec["per_l"] = per_l
    return {"record": rec, "inequalities": ineq}


def _corpus_criteria(cfg: RunConfig, records: list) -> dict:
    c4, c5, c6, c11 = [], [], [], []
    for rec in records:
        for it in rec["per_l"]:
            tag = {"index": rec["index"], "l": it["l"]}
            if "energy_passed" in it:
                c4.append({**tag, "E_u": rec["E_u"], "E_hat": it["E_hat"], "E_hat_stderr": it["E_hat_stderr"],
                           "margin": it["energy_margin"], "oracle_relative_gap": rec["oracle_relative_gap"],
                           "passed": bool(it["energy_passed"] and rec["oracle_consistent"])})
                lc = it["log_concavity"]
                c5.append({**tag, "convexity_worst_margin": it["convexity"]["worst_margin"],
                           "convexity_passed": it["convexity"]["passed"],
                           "log_concavity_min_z": lc["min_z"], "log_concavity_threshold_z": lc["threshold_z"],
                           "log_concavity_passed_pointwise": lc["passed_pointwise"],
                           "passed": bool(it["convexity"]["passed"] and lc["passed"])})
                mo = it["monotonicity"]
                c6.append({**tag, "min_increment_stderr": mo.get("min_increment_stderr"),
                           "zero_increments": mo.get("zero_increments"), "passed": mo["passed"]})
            if "mt" in it:
                mt = it["mt"]
                c11.append({**tag, "lhs": mt["lhs"], "rhs": mt["rhs"], "margin": mt["margin"],
                            "equidistribution_z": mt["extra"]["equidistribution_z"],
                            "sublevel_discrepancy_z": it["equidistribution"]["max_discrepancy_stderr"],
                            "strong_mt_margin": it["strong_mt"]["margin"],
                            "passed": bool(mt["passed"] and mt["extra"]["equidistribution_passed"]
                                           and it["strong_mt"]["passed"])})
    return {4: c4, 5: c5, 6: c6, 11: c11}


# criterion 7 ---------------------------------------------------------------------------------

def job_inverse_convexity(cfg: RunConfig) -> dict:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, 7])))
    worst = math.inf
    fails = 0
    for _ in range(100):
        rep = inverse_in_t(random_concave_sample(rng)).report
        worst = min(worst, rep["min_defect"] + 1e-6 + rep["interpolation_bound"])
        fails += not rep["passed"]
    s = np.linspace(0, 1, 21)
    t = np.linspace(-2, 2, 201)
    examples = []
    for name, a, k in (("t + s", lambda S, T: T + S, lambda S, X: X - S),
                       ("t - s^2", lambda S, T: T - S**2, lambda S, X: X + S**2)):
        inv = inverse_in_t(BivariateSample.from_function(a, s, t))
        S, X = np.meshgrid(inv.s_grid, inv.x_grid, indexing="ij")
        err = float(np.max(np.abs(inv.values - k(S, X))))
        examples.append({"a": name, "max_error": err, "convexity_defect": inv.report["min_defect"],
                         "passed": bool(err <= 1e-12 and inv.report["passed"])})
    return {"passed": bool(fails == 0 and all(e["passed"] for e in examples)),
            "samples": 100, "failures": fails, "worst_margin": worst, "examples": examples}


# criterion 8 ---------------------------------------------------------------------------------

def geodesic_pairs(cfg: RunConfig) -> list:
    grid = _grid(cfg)
    geom = ModelGeometry(1, 1.0)
    T = {a: truncated_log_profile(a, 1.0, grid) for a in (0.5, 1.0, 2.0, 4.0)}
    ex = exp_profile().on_grid(grid)
    r = random_normalized_profiles(4, geom, seed=cfg.seed)
    named = {**{f"T{a}": p for a, p in T.items()}, "exp": ex, **{f"r{i}": p for i, p in enumerate(r)}}
    keys = [("T0.5", "T1.0"), ("T1.0", "T4.0"), ("T2.0", "exp"), ("exp", "T0.5"), ("r0", "r1"),
            ("r2", "r3"), ("r0", "T1.0"), ("r1", "exp"), ("T4.0", "r3"), ("r2", "T2.0")]
    return [(a, b, named[a], named[b]) for a, b in keys]


def geodesic_curve(f0, f1, geom, s_grid):
    E = energy_along(geodesic_family(f0, f1, s_grid), geom)
    line = (1 - s_grid) * E[0] + s_grid * E[-1]
    return E, line


def job_geodesics(cfg: RunConfig) -> dict:
    geom = ModelGeometry(1, 1.0)
    s = np.linspace(0, 1, 11)
    rows = []
    for a, b, f0, f1 in geodesic_pairs(cfg):
        E, _ = geodesic_curve(f0, f1, geom, s)
        dev = affine_deviation(s, E)
        rel = dev / max(abs(E[0]), abs(E[-1]))
        Es = np.array([energy(subgeodesic_max(f0, f1, si, 0.5), geom, check_tail=False).value for si in s])
        cd = concavity_defect(s, Es)
        rows.append({"pair": f"{a}|{b}", "affine_relative_deviation": rel, "subgeodesic_concavity_defect": cd,
                     "subgeodesic_energies": Es,
                     "passed": bool(rel <= cfg.tol("geodesic_affine") and cd >= -cfg.tol("subgeodesic_concave"))})
    return {"passed": all(r["passed"] for r in rows), "pairs": rows}


# criterion 9 ---------------------------------------------------------------------------------

def job_subgeodesic_pair(cfg: RunConfig, i: int, u0, u1) -> dict:
    geom = ModelGeometry(1, 1.0)
    rep = symmetrized_subgeodesic_check(u0, u1, geom, np.linspace(0, 1, 5), _mc(cfg), t_levels=16,
                                        k=cfg.tol("mc_sigmas"))
    rep.pop("levels")
    rep["pair"] = [u0.label, u1.label]
    return rep


# criterion 10 --------------------------------------------------------------------------------

def job_moser(cfg: RunConfig) -> dict:
    geom = ModelGeometry(1, 1.0)
    C, cal = moser_constant(cfg)
    family = random_normalized_profiles(200, geom, seed=cfg.seed + 1)
    plain = [moser_check(w, geom, C) for w in family]
    tl = truncated_log_profile(1.0, 1.0, _grid(cfg))
    scaled = [scaled_moser_check(w, k, geom, C) for w in [tl] + family for k in SCALES]
    ident = []
    for w in family[:10]:
        for k in SCALES:
            lhs = k * moser_functional(w, k, geom)
            rhs = moser_functional(scaled_profile(w, k, geom), 1.0, geom)
            ident.append(abs(lhs - rhs) / rhs)
    return {
        "passed": bool(all(r.passed for r in plain + scaled) and max(ident) <= 1e-6),
        "C": C, "C_est": cal.C_est, "calibration_argmax": cal.argmax, "calibration_family_size": cal.family_size,
        "moser_min_margin": min(r.margin for r in plain),
        "scaled_min_margin": min(r.margin * r.extra["k"] for r in scaled),
        "max_k_times_lhs": max(r.extra["k_times_lhs"] for r in scaled),
        "scaling_identity_max_relative_error": max(ident),
        "inequalities": plain + scaled,
    }


# criterion 11 (closed form part) ------------------------------------------------------------

def job_mt_closed_form(cfg: RunConfig) -> dict:
    geom = ModelGeometry(1, 1.0)
    C, _ = moser_constant(cfg)
    rows, ineq = [], []
    for a in (0.1, 1.0, 10.0, 50.0):
        res = truncated_log_mt_closed_form(a, geom, C)
        grid = standard_grid(min(cfg.grid_tmin, -1.5 * a), cfg.grid_points)
        fib = mt_radial(truncated_log_profile(a, 1.0, grid), geom, C)
        agree = abs(fib.lhs - res.lhs) <= 1e-9 * max(1.0, abs(res.lhs))
        rows.append({"a": a, "lhs": res.lhs, "log_1_plus_a": math.log1p(a), "rhs": res.rhs, "margin": res.margin,
                     "fiber_lhs": fib.lhs, "passed": bool(res.passed and agree
                                                          and abs(res.lhs - math.log1p(a)) <= 1e-12)})
        ineq.append(res)
    return {"passed": all(r["passed"] for r in rows), "cases": rows, "inequalities": ineq}


# scheduling --------------------------------------------------------------------------------

def _call(job):
    fn, args = job
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


def run_jobs(jobs, workers: int = 1):
    """Results in submission order, sequential or on a process pool."""
    if workers <= 1:
        return [_call(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, jobs))


def run_criteria(cfg: RunConfig):
    """Criteria 1-11: ``(criteria, corpus_records, inequalities, timing)``."""
    corpus = corpus_for(cfg)
    C, _ = moser_constant(cfg)
    pairs = [(corpus[2 * i], corpus[2 * i + 1]) for i in range(min(cfg.subgeodesic_pairs, len(corpus) // 2))]
    jobs = [("ball_volume", (job_ball_volume, (cfg,))),
            ("radial_fixed_point", (job_radial_fixed_point, (cfg,))),
            ("energy_identity", (job_energy_identity, (cfg,))),
            ("inverse_convexity", (job_inverse_convexity, (cfg,))),
            ("geodesics", (job_geodesics, (cfg,))),
            ("moser", (job_moser, (cfg,))),
            ("mt_closed_form", (job_mt_closed_form, (cfg,)))]
    jobs += [(f"corpus[{i}]", (job_corpus_item, (cfg, i, u, C))) for i, u in enumerate(corpus)]
    jobs += [(f"subgeodesic_pair[{i}]", (job_subgeodesic_pair, (cfg, i, a, b))) for i, (a, b) in enumerate(pairs)]
    results = run_jobs([j for _, j in jobs], cfg.workers)
    timing = {name: dt for (name, _), (_, dt) in zip(jobs, results)}
    out = {name: r for (name, _), (r, _) in zip(jobs, results)}

    records = [out[f"corpus[{i}]"]["record"] for i in range(len(corpus))]
    per = _corpus_criteria(cfg, records)
    inequalities = list(out["moser"].pop("inequalities")) + list(out["mt_closed_form"]["inequalities"])
    for i in range(len(corpus)):
        inequalities.extend(out[f"corpus[{i}]"]["inequalities"])
    sub = [out[f"subgeodesic_pair[{i}]"] for i in range(len(pairs))]
    mt_cf = dict(out["mt_closed_form"])
    mt_cf.pop("inequalities")
    criteria = {
        1: out["ball_volume"],
        2: out["radial_fixed_point"],
        3: out["energy_identity"],
        4: {"passed": all(r["passed"] for r in per[4]), "items": per[4]},
        5: {"passed": all(r["passed"] for r in per[5]), "items": per[5],
            "pointwise_log_concavity_passes": sum(r["log_concavity_passed_pointwise"] for r in per[5])},
        6: {"passed": all(r["passed"] for r in per[6]), "items": per[6]},
        7: out["inverse_convexity"],
        8: out["geodesics"],
        9: {"passed": all(r["passed"] for r in sub), "pairs": sub},
        10: out["moser"],
        11: {"passed": bool(mt_cf["passed"] and all(r["passed"] for r in per[11])),
             "closed_form": mt_cf["cases"], "corpus": per[11]},
    }
    return criteria, records, inequalities, timing


def reproducibility_config(cfg: RunConfig) -> RunConfig:
    return replace(cfg, samples=min(cfg.samples, 20_000), corpus_size=min(cfg.corpus_size, 2),
                   subgeodesic_pairs=1)


def suite_report(cfg: RunConfig, check_reproducibility: bool = True):
    """Full report and the separate timing table."""
    t0 = time.perf_counter()
    criteria, records, inequalities, timing = run_criteria(cfg)
    if check_reproducibility:
        small = reproducibility_config(cfg)
        a = dumps(suite_report(small, False)[0])
        _cloud.cache_clear()
        b = dumps(suite_report(small, False)[0])
        criteria[12] = {"passed": a == b, "bytes": len(a), "config": small.echo(),
                        "note": "reduced-scale suite run twice in one process, caches cleared in between"}
    listing = [{"id": k, "title": TITLES[k], "passed": bool(v["passed"]), "detail": v}
               for k, v in sorted(criteria.items())]
    body = {
        "criteria": listing,
        "passed": all(c["passed"] for c in listing),
        "corpus": records,
        "inequalities": inequalities,
    }
    timing["total"] = time.perf_counter() - t0
    return make_report("suite", cfg.echo(), body), timing


def summary_lines(report: dict) -> list:
    return [f"[{'PASS' if c['passed'] else 'FAIL'}] criterion {c['id']:2d}: {c['title']}" for c in report["criteria"]]


__all__ = ["suite_report", "run_criteria", "summary_lines", "TITLES", "PshSymError"]
