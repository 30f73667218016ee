"""Battery runners shared by the command line and the acceptance suite.

Each runner takes a parsed :class:`ExperimentConfig`, writes its CSV into an
output directory and returns a :class:`BatteryResult`.
"""
from __future__ import annotations

import csv
import dataclasses
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import markov
from .coefficients import (check_dissipativity, dissipativity_constants, make_drift, make_noise,
                           validate_noise_family, validate_osgood)
from .config import ExperimentConfig
from .martingale import (CylTestFunction, WeightFunction, bonferroni_threshold, generator_values, martingale_test,
                         quadratic_variation_test, write_battery_csv)
from .models import build_cache, initial_state, ou_model
from .regularizer import build_levels, coupled_uniqueness_experiment, eval_phi, level_table, write_levels_csv, \
    write_uniqueness_csv
from .simulate import Model, run_ensemble, stream, write_ensemble_csv, write_observables_csv

__all__ = ["BatteryResult", "build_model", "RUNNERS", "run_battery"]

QV_TOL = 0.05
EXPORT_PATHS = 16
TRIG_STAGE = (2**31 - 2,)


@dataclass
class BatteryResult:
    name: str
    passed: bool
    files: list[str] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def status(self) -> str:
        if self.error:
            return "error"
        return "pass" if self.passed else "fail"


def build_model(cfg: ExperimentConfig) -> Model:
    m = cfg.model
    if m["kind"] == "ou":
        q = m["noise_amplitudes"]
        diff = m["diffusion_params"][0] if m["diffusion_params"] else 0.01
        return ou_model(m["n"], m["length"], m["bc"], diff, q=q)
    cache = build_cache(m["n"], m["length"], m["bc"], m["diffusion"], m["diffusion_params"])
    F = make_drift(cache.grid, m["drift"])
    G = make_noise(m["noise"], cache.grid, m["K"], cache=cache, c=m["noise_c"], decay=m["noise_decay"],
                   cap=m["noise_cap"], basis=m["noise_basis"], amplitudes=m["noise_amplitudes"],
                   table_r=m["table_r"], table_g=m["table_g"], alpha=m["alpha"], beta=m["beta"],
                   exponent=m["noise_exponent"])
    if m["tail_bound"] is not None:
        G = dataclasses.replace(G, tail_bound=m["tail_bound"])
    return Model(cache, F, G)


def _x0(cfg, model):
    return initial_state(model.grid, cfg.run["initial"], cfg.run["initial_amplitude"])


def _f(x):
    return repr(float(x))


def _sample_text(sample) -> str:
    if not sample:
        return ""
    return " ".join(f"{k}={float(v):.6g}" for k, v in sample.items())


# ---------------------------------------------------------------------------


def run_validate(cfg: ExperimentConfig, model: Model, out: str) -> BatteryResult:
    cert = validate_noise_family(model.G, R=cfg.tests["validate_radius"])
    rows = [(c.name, c.passed, c.worst_margin, c.detail or _sample_text(c.worst_sample)) for c in cert.checks]
    F = model.F
    if F.strict:
        b = F.eps_lead * 2.0 ** -F.degree
        a = dissipativity_constants(F, b)
        rep = check_dissipativity(F, a, b, samples=10_000, rng_seed=cfg.seed)
        rows.append(("dissipativity", rep.violations == 0, rep.worst_margin, f"a={a:.6g} b={b:.6g}"))
    path = os.path.join(out, "validate.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["check", "pass", "worst_margin", "detail"])
        for name, ok, margin, detail in rows:
            w.writerow([name, int(ok), _f(margin) if math.isfinite(margin) else repr(float(margin)), detail])
    failed = [r[0] for r in rows if not r[1]]
    return BatteryResult("validate", not failed, [path], {"failed": failed})


def run_simulate(cfg: ExperimentConfig, model: Model, out: str) -> BatteryResult:
    r = cfg.run
    ens = run_ensemble(model, _x0(cfg, model), r["T"], r["dt"], r["stop_level"], r["paths"], r["seed"],
                       stride=r["stride"])
    head = dataclasses.replace(ens, states=ens.states[:EXPORT_PATHS], stop_index=ens.stop_index[:EXPORT_PATHS],
                               blown=ens.blown[:EXPORT_PATHS], path_indices=ens.path_indices[:EXPORT_PATHS])
    p1 = os.path.join(out, "simulate_paths.csv")
    write_ensemble_csv(head, p1)
    picks = np.unique(np.linspace(0, len(ens.times) - 1, 11).round().astype(int))
    w = model.grid.weights
    rows = []
    for p in range(ens.paths):
        for i in picks:
            u = ens.states[p, i]
            t = ens.times[i]
            rows.append((ens.path_indices[p], t, "sup_norm", np.abs(u).max()))
            rows.append((ens.path_indices[p], t, "l2_norm", math.sqrt(float(np.sum(w * u * u)))))
    p2 = os.path.join(out, "simulate_observables.csv")
    write_observables_csv(rows, p2)
    blown = int(ens.blown.sum())
    stopped = int(np.sum(ens.stop_index >= 0))
    return BatteryResult("simulate", blown == 0, [p1, p2], {"blown": blown, "stopped": stopped})


def martingale_battery(model: Model, ens, windows, kinds, modes, weights, seed, threshold=3.0,
                       generator_model: Model | None = None):
    """Statistics for every (test function, window, weight); the Bonferroni threshold covers all of them."""
    gm = model if generator_model is None else generator_model
    grid = model.grid
    vecs = model.cache.eigvecs
    fs = []
    for k in range(min(modes, grid.n)):
        if "linear" in kinds:
            fs.append(CylTestFunction.linear(grid, vecs[:, k], label=f"linear_v{k + 1}"))
        if "square" in kinds:
            fs.append(CylTestFunction.square(grid, vecs[:, k], label=f"square_v{k + 1}"))
    if "trigonometric" in kinds:
        rng = stream(seed, TRIG_STAGE)
        fs.append(CylTestFunction.trigonometric(grid, vecs[:, : min(2, grid.n)].T, rng, label="trig_v1v2"))
    pairs = list(zip(windows[::2], windows[1::2]))
    specs = []
    for kind in weights:
        if kind == "one":
            specs.append(("one", lambda s: ()))
        else:
            wf = WeightFunction(kind, vecs[:, 0], grid)
            specs.append((kind, lambda s, wf=wf: ((s, wf),)))
    total = len(fs) * len(pairs) * len(specs)
    thr = bonferroni_threshold(total, threshold)
    out = []
    for f in fs:
        lf = generator_values(gm, f, ens)
        for s, t in pairs:
            for wname, spec in specs:
                st = martingale_test(gm, f, ens, s, t, spec(s), threshold=thr, lf=lf)
                st.label = f"{f.label}_{wname}"
                out.append(st)
    return out, thr


def run_martingale(cfg: ExperimentConfig, model: Model, out: str) -> BatteryResult:
    r, t = cfg.run, cfg.tests
    ens = run_ensemble(model, _x0(cfg, model), r["T"], r["dt"], r["stop_level"], r["paths"], r["seed"])
    stats_list, thr = martingale_battery(model, ens, t["windows"], t["test_functions"], t["modes"], t["weights"],
                                         r["seed"], t["threshold"])
    qv = quadratic_variation_test(model, model.cache.eigvecs[:, 0], ens, r["T"])
    path = os.path.join(out, "martingale.csv")
    write_battery_csv(stats_list, path)
    qpath = os.path.join(out, "martingale_qv.csv")
    with open(qpath, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["functional", "t", "realized", "predicted", "rel_err", "pass"])
        w.writerow(["v1", _f(r["T"]), _f(qv.realized), _f(qv.predicted), _f(qv.rel_err), int(qv.rel_err <= QV_TOL)])
    ok = all(s.passed for s in stats_list) and qv.rel_err <= QV_TOL
    return BatteryResult("martingale", ok, [path, qpath],
                         {"tests": len(stats_list), "threshold": thr, "qv_rel_err": qv.rel_err})


def _bounded_observable(model):
    w = model.grid.weights
    L = model.grid.length
    return lambda U: np.tanh(np.atleast_2d(U) @ w / L)


def run_markov(cfg: ExperimentConfig, model: Model, out: str) -> BatteryResult:
    r, t = cfg.run, cfg.tests
    x = _x0(cfg, model)
    f = _bounded_observable(model)
    s, tt, P, seed, dt = t["markov_s"], t["markov_t"], r["paths"], r["seed"], r["dt"]
    mid = cfg.model["kind"]
    hitting = math.isfinite(t["restart_level"])
    ks_tests = 2 if hitting else 1
    thr = bonferroni_threshold(1 + ks_tests, t["threshold"])
    rows = []
    ck = markov.chapman_kolmogorov_test(model, x, f, s, tt, P, seed, dt=dt)
    rows.append(markov.BatteryRow("chapman_kolmogorov", mid, s, tt, ck.z, thr, ck.passed(thr)))
    alpha = 0.01 / ks_tests
    rs = markov.restart_markov_test(model, x, f, s, tt, P, seed, dt=dt, tests=ks_tests)
    rows.append(markov.BatteryRow("restart_fixed_time", mid, s, tt, rs.p_value, alpha, rs.passed))
    if hitting:
        rh = markov.restart_markov_test(model, x, f, s, tt, P, seed, dt=dt, restart_level=t["restart_level"],
                                        tests=ks_tests)
        rows.append(markov.BatteryRow("restart_hitting_time", mid, s, tt, rh.p_value, alpha, rh.passed))
    fe = markov.feller_test(model, x, t["feller_deltas"], f, s + tt, P, seed, dt=dt)
    for i, (d, g) in enumerate(zip(fe.deltas, fe.gaps)):
        last = i == len(fe.gaps) - 1
        bound = 3.0 * fe.base_se if last else math.inf
        if i:
            bound = min(bound, fe.gaps[i - 1] + 3.0 * max(fe.paired_se[i - 1], fe.paired_se[i]))
        rows.append(markov.BatteryRow(f"feller_delta_{d:g}", mid, 0.0, s + tt, g, bound, g <= bound))
    T = r["T"]
    ens = run_ensemble(model, x, T, dt, r["stop_level"], P, seed, stride=r["stride"])
    cc = markov.compact_containment(ens, T, t["containment_quantile"])
    rows.append(markov.BatteryRow(f"containment_q{t['containment_quantile']:g}", mid, 0.0, T, cc.R, math.inf,
                                  bool(math.isfinite(cc.R))))
    path = os.path.join(out, "markov.csv")
    markov.write_markov_csv(rows, path)
    return BatteryResult("markov", all(rw.passed for rw in rows), [path], {"rows": len(rows)})


def run_uniqueness(cfg: ExperimentConfig, model: Model, out: str) -> BatteryResult:
    r, t = cfg.run, cfg.tests
    rep = coupled_uniqueness_experiment(model, _x0(cfg, model), t["uniqueness_deltas"], r["T"], r["dt"],
                                        r["paths"], r["seed"], halvings=t["halvings"], stop_level=r["stop_level"])
    path = os.path.join(out, "uniqueness.csv")
    write_uniqueness_csv(rep, path)
    zero_ok = all(row.mean_sup_diff == 0.0 for row in rep.series("delta") if row.delta == 0)
    ok = zero_ok and rep.delta_nonincreasing and rep.mesh_nonincreasing
    return BatteryResult("uniqueness", ok, [path], {"delta_nonincreasing": rep.delta_nonincreasing,
                                                     "mesh_nonincreasing": rep.mesh_nonincreasing})


def modulus_from_config(cfg: ExperimentConfig, model: Model | None = None):
    kind, e = cfg.tests["modulus"], cfg.tests["modulus_exponent"]
    if kind == "sqrt":
        return np.sqrt
    if kind == "linear":
        return lambda r: np.asarray(r, dtype=float)
    if kind == "power":
        return lambda r: np.abs(np.asarray(r, dtype=float)) ** e
    G = model.G
    return lambda r: np.asarray(G.h(np.asarray(r, dtype=float)), dtype=float)


def regularizer_checks(fam, samples: int = 10_000, tol: float = 1e-8):
    """Largest violation of each family identity on ``samples`` points per level."""
    worst = {"int_check": 0.0, "upper": 0.0, "lower": 0.0, "support": 0.0, "cap": 0.0, "psi_mass": 0.0}
    for n, a_n, check, _ in level_table(fam):
        worst["int_check"] = max(worst["int_check"], abs(check))
        hi = fam.a_seq[n - 1]
        r = np.concatenate([np.linspace(-1.5 * hi, 1.5 * hi, samples // 2),
                            np.geomspace(a_n * 1e-3, 1.5 * hi, samples - samples // 2)])
        v, _, d2 = eval_phi(fam, n, r)
        ar = np.abs(r)
        worst["upper"] = max(worst["upper"], float(np.max(v - ar)))
        worst["lower"] = max(worst["lower"], float(np.max(ar - hi - v)))
        worst["support"] = max(worst["support"], float(np.max(np.abs(v[ar <= a_n]), initial=0.0)))
        inside = (ar > a_n) & (ar < hi)
        cap = 2.0 / (n * fam.h_fn(ar[inside]) ** 2)
        worst["cap"] = max(worst["cap"], float(np.max(d2[inside] - cap, initial=0.0)))
        worst["psi_mass"] = max(worst["psi_mass"], abs(float(fam.Psi(n, hi)) - 1.0))
    ok = all(v <= tol for v in worst.values())
    return ok, worst


def run_regularizer(cfg: ExperimentConfig, model: Model, out: str) -> BatteryResult:
    h = modulus_from_config(cfg, model)
    rep = validate_osgood(lambda r: float(h(r)))
    path = os.path.join(out, "regularizer.csv")
    if not rep.diverges:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "a_n", "int_check", "phi_sup_gap"])
        return BatteryResult("regularizer", False, [path], {"osgood": rep.classification})
    fam = build_levels(h, cfg.tests["regularizer_levels"], check_osgood=False)
    write_levels_csv(fam, path)
    ok, worst = regularizer_checks(fam)
    return BatteryResult("regularizer", ok, [path], {"osgood": rep.classification,
                                                      **{k: float(v) for k, v in worst.items()}})


RUNNERS = {
    "validate": run_validate,
    "simulate": run_simulate,
    "martingale": run_martingale,
    "uniqueness": run_uniqueness,
    "markov": run_markov,
    "regularizer": run_regularizer,
}


def run_battery(name: str, cfg: ExperimentConfig, out: str, model: Model | None = None) -> BatteryResult:
    try:
        if model is None:
            model = build_model(cfg)
        return RUNNERS[name](cfg, model, out)
    except Exception as exc:  # reported per battery, never swallowed silently
        return BatteryResult(name, False, error=f"{type(exc).__name__}: {exc}")
