"""Replica orchestration: parallel ensemble runs, merging, file emission, analysis.

A run executes n_replicas independent trajectories per lattice size. Replica
`rid` draws everything (initial state and dynamics) from the stream keyed by
(master seed, rid), so results are independent of how replicas are split over
worker processes; worker outputs are contiguous replica blocks that merge
deterministically.
"""

from __future__ import annotations

import math
import multiprocessing
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import diagnostics, gibbs
from .config import ConfigError, ExperimentConfig
from .engine import (EventBudgetExceeded, SpanIntegrals, Trajectory, replica_rng)
from .estimators import (EnsembleAccumulator, TimeAverageAccumulator,
                         circular_window_mean)
from .processes import (MacroProfile, ProcessSpec, arrhenius_process,
                        exclusion_process, sample_equilibrium_curvature,
                        sample_initial, zero_range_process)
from .reporting import read_csv, read_manifest, write_csv, write_manifest
from .zr import ZeroRangeFamily, g_linear, g_root4

ENV_THREADS = "LEKMC_THREADS"
TAVG_NAMES = ("w", "w2", "rate")


def resolve_threads(threads=None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get(ENV_THREADS)
    if env:
        return max(1, int(env))
    return multiprocessing.cpu_count()


def build_process(cfg: ExperimentConfig) -> ProcessSpec:
    if cfg.process == "arrhenius_crystal":
        return arrhenius_process(cfg.k, cfg.alpha, cfg.beta)
    if cfg.process == "zero_range":
        return zero_range_process(cfg.alpha, cfg.beta, cfg.rate_override)
    return exclusion_process(cfg.alpha, cfg.beta)


def initial_state(cfg: ExperimentConfig, proc: ProcessSpec, n_sites: int,
                  rng: np.random.Generator) -> np.ndarray:
    if cfg.init == "equilibrium":
        return sample_equilibrium_curvature(n_sites, cfg.k, rng)
    if cfg.init.startswith("poisson:"):
        mean = float(cfg.init.split(":", 1)[1])
        return rng.poisson(mean, n_sites).astype(np.int64)
    return sample_initial(proc, MacroProfile.parse(cfg.profile), n_sites, rng)


def observable_set(cfg: ExperimentConfig, proc: ProcessSpec) -> dict:
    available = proc.observables()
    if not cfg.observables:
        return available
    missing = [o for o in cfg.observables if o not in available]
    if missing:
        raise ConfigError(f"unknown observables for {proc.kind}: {missing}")
    picked = {name: available[name] for name in cfg.observables}
    picked.setdefault(proc.base_observable, available[proc.base_observable])
    return picked


def epsilons_for(cfg: ExperimentConfig, n_sites: int) -> tuple:
    eps = tuple(e for e in cfg.epsilon_grid if 2.0 * n_sites * e >= 8.0)
    if not eps:
        raise ConfigError(f"no epsilon in the grid gives a window of >= 8 sites at N={n_sites}")
    return eps


def lags_for(n_sites: int) -> tuple:
    return tuple(l for l in range(2, 10) if l < n_sites // 2)


@dataclass
class RunResult:
    """Merged statistics for one lattice size."""

    n_sites: int
    times: tuple
    ens: list                 # EnsembleAccumulator per recording time
    tavg: list                # TimeAverageAccumulator per time (empty if delta == 0)
    tavg_half: list
    hist_lo: int
    hist: np.ndarray          # (values, sites) counts at the final time
    events: int
    wall_seconds: float
    budget_exceeded: bool
    frozen_replicas: int


def run_chunk(cfg: ExperimentConfig, n_sites: int, lo: int, hi: int):
    """Run replicas [lo, hi) and return their accumulators (one block each)."""
    proc = build_process(cfg)
    obs = observable_set(cfg, proc)
    eps = epsilons_for(cfg, n_sites)
    lags = lags_for(n_sites)
    want_tavg = cfg.delta > 0 and proc.kind == "arrhenius_crystal"
    n_times = len(cfg.t_list)
    ens = [EnsembleAccumulator(n_sites, obs, lags, eps) for _ in range(n_times)]
    tavg = [TimeAverageAccumulator(n_sites, TAVG_NAMES) for _ in range(n_times)] if want_tavg else []
    tavg_half = [TimeAverageAccumulator(n_sites, TAVG_NAMES) for _ in range(n_times)] if want_tavg else []
    hist_range = cfg.hist_range
    hist = np.zeros((2 * hist_range + 1, n_sites), dtype=np.int64)
    events = 0
    frozen = 0
    budget_hit = False

    for rid in range(lo, hi):
        rng = replica_rng(cfg.seed, rid)
        state = initial_state(cfg, proc, n_sites, rng)
        traj = Trajectory(proc, state, rng, budget=cfg.event_budget)
        scale = proc.time_scale(n_sites)
        try:
            for k, t in enumerate(cfg.t_list):
                if want_tavg:
                    t_lo, t_mid = t - cfg.delta, t - cfg.delta / 2.0
                    traj.run_until(t_lo)
                    span_a = SpanIntegrals.empty(n_sites, t_lo * scale, t_mid * scale)
                    traj.run_until(t_mid, integrals=span_a)
                    span_b = SpanIntegrals.empty(n_sites, t_mid * scale, t * scale)
                    traj.run_until(t, integrals=span_b)
                    full = span_a.add(span_b)
                    norm = scale * cfg.delta
                    tavg[k].add(rid, {n: a / norm for n, a in full.as_dict().items()})
                    tavg_half[k].add(rid, {n: a / (norm / 2.0) for n, a in span_b.as_dict().items()})
                else:
                    traj.run_until(t)
                ens[k].add(rid, traj.state.copy())
        except EventBudgetExceeded:
            budget_hit = True
            break
        vals = traj.state
        if vals.min() < -hist_range or vals.max() > hist_range:
            raise ConfigError(
                f"state value outside histogram range +-{hist_range}; raise hist_range")
        np.add.at(hist, (vals + hist_range, np.arange(n_sites)), 1)
        events += traj.event_count
        if proc.is_frozen(traj.state):
            frozen += 1
    return ens, tavg, tavg_half, hist, events, frozen, budget_hit


def _merge_chunks(cfg, n_sites, parts, wall) -> RunResult:
    n_times = len(cfg.t_list)
    ens = [EnsembleAccumulator.merge([p[0][k] for p in parts]) for k in range(n_times)]
    want_tavg = bool(parts[0][1])
    tavg = [TimeAverageAccumulator.merge([p[1][k] for p in parts]) for k in range(n_times)] if want_tavg else []
    tavg_half = [TimeAverageAccumulator.merge([p[2][k] for p in parts]) for k in range(n_times)] if want_tavg else []
    hist = sum(p[3] for p in parts)
    events = sum(p[4] for p in parts)
    frozen = sum(p[5] for p in parts)
    budget = any(p[6] for p in parts)
    return RunResult(n_sites, cfg.t_list, ens, tavg, tavg_half,
                     -cfg.hist_range, hist, events, wall, budget, frozen)


def chunk_bounds(n_replicas: int) -> list:
    """Fixed replica-chunk decomposition, independent of the worker count.

    Keeping the chunking a function of n_replicas alone makes the folded
    sums bit-identical no matter how many workers execute the chunks.
    """
    n_chunks = min(16, n_replicas)
    bounds = np.linspace(0, n_replicas, n_chunks + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds, bounds[1:]) if b > a]


def run_single_n(cfg: ExperimentConfig, n_sites: int, threads=None) -> RunResult:
    threads = resolve_threads(threads)
    t0 = time.time()
    chunks = chunk_bounds(cfg.n_replicas)
    if threads <= 1 or len(chunks) == 1:
        parts = [run_chunk(cfg, n_sites, a, b) for a, b in chunks]
    else:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=threads, mp_context=ctx) as pool:
            futures = [pool.submit(run_chunk, cfg, n_sites, a, b) for a, b in chunks]
            parts = [f.result() for f in futures]
    return _merge_chunks(cfg, n_sites, parts, time.time() - t0)


def run_ladder(cfg: ExperimentConfig, threads=None) -> dict:
    return {n: run_single_n(cfg, n, threads) for n in cfg.n_ladder}


# ---------------------------------------------------------------------------
# flattened per-site views, shared by the file writer and the analysis stage

@dataclass
class SiteData:
    """Per-N tables the diagnostics consume, source-agnostic (memory or CSV)."""

    n_sites: int
    times: tuple
    mean: dict          # (t_index, obs) -> (N,)
    stderr: dict        # (t_index, obs) -> (N,)
    tavg: dict          # obs -> (N,) at final time
    tavg_se: dict
    tavg_half: dict
    win_mean: dict      # (t_index, eps) -> (N,)
    win_var: dict       # (t_index, eps) -> (N,)
    corr_max: dict      # t_index -> (N,)
    hist_lo: int
    hist: np.ndarray | None


def site_data_from_result(res: RunResult) -> SiteData:
    mean, stderr, win_mean, win_var, corr = {}, {}, {}, {}, {}
    nan = np.full(res.n_sites, np.nan)
    for k, acc in enumerate(res.ens):
        if acc.n == 0:
            continue  # budget ran out before this recording time
        partial = acc.n < 2
        for name in acc.observables:
            mean[(k, name)] = acc.mean(name)
            stderr[(k, name)] = nan.copy() if partial else acc.std_error(name)
        for eps in acc.epsilons:
            win_mean[(k, eps)] = acc.window_mean(eps)
            win_var[(k, eps)] = nan.copy() if partial else acc.window_var(eps)
        corr[k] = nan.copy() if partial else acc.correlation_max_profile()
    tavg, tavg_se, tavg_half = {}, {}, {}
    if res.tavg:
        last = len(res.times) - 1
        for name in TAVG_NAMES:
            tavg[name] = res.tavg[last].mean(name)
            tavg_se[name] = res.tavg[last].std_error(name)
            tavg_half[name] = res.tavg_half[last].mean(name)
    return SiteData(res.n_sites, res.times, mean, stderr, tavg, tavg_se, tavg_half,
                    win_mean, win_var, corr, res.hist_lo, res.hist)


# ---------------------------------------------------------------------------
# simulate -> files

def _sites_rows(data: SiteData):
    n = data.n_sites
    last = len(data.times) - 1
    names = sorted({obs for (_, obs) in data.mean})
    for k, t in enumerate(data.times):
        for obs in names:
            if (k, obs) not in data.mean:
                continue
            m = data.mean[(k, obs)]
            se = data.stderr[(k, obs)]
            ta = data.tavg.get(obs) if k == last else None
            tase = data.tavg_se.get(obs) if k == last else None
            tah = data.tavg_half.get(obs) if k == last else None
            for i in range(n):
                yield (t, obs, i, i / n, m[i], se[i],
                       None if ta is None else ta[i],
                       None if tase is None else tase[i],
                       None if tah is None else tah[i])


def _window_rows(data: SiteData):
    n = data.n_sites
    for (k, eps) in sorted(data.win_mean):
        wm, wv = data.win_mean[(k, eps)], data.win_var[(k, eps)]
        for i in range(n):
            yield (data.times[k], eps, i, i / n, wm[i], wv[i])


def _hist_rows(data: SiteData):
    vals, sites = np.nonzero(data.hist)
    for v, s in zip(vals, sites):
        yield (int(s), int(v) + data.hist_lo, int(data.hist[v, s]))


def _corr_rows(data: SiteData):
    n = data.n_sites
    for k in sorted(data.corr_max):
        prof = data.corr_max[k]
        for i in range(n):
            yield (data.times[k], i, i / n, prof[i])


SITE_HEADER = ("t", "observable", "site", "x", "mean", "std_err",
               "tavg_mean", "tavg_std_err", "tavg_half_mean")
WINDOW_HEADER = ("t", "epsilon", "site", "x", "win_mean", "win_var")
HIST_HEADER = ("site", "value", "count")
CORR_HEADER = ("t", "site", "x", "corr_max")


def simulate_to_dir(cfg: ExperimentConfig, out_dir, threads=None) -> dict:
    """Run the ladder and write per-N CSVs plus a manifest; returns the results."""
    os.makedirs(out_dir, exist_ok=True)
    h = cfg.hash()
    results = run_ladder(cfg, threads)
    files = []
    per_n = {}
    for n, res in results.items():
        data = site_data_from_result(res)
        names = {
            "sites": f"N{n}_sites.csv", "windows": f"N{n}_windows.csv",
            "hist": f"N{n}_hist.csv", "corr": f"N{n}_corr.csv",
        }
        write_csv(os.path.join(out_dir, names["sites"]), SITE_HEADER, _sites_rows(data), h)
        write_csv(os.path.join(out_dir, names["windows"]), WINDOW_HEADER, _window_rows(data), h)
        write_csv(os.path.join(out_dir, names["hist"]), HIST_HEADER, _hist_rows(data), h)
        write_csv(os.path.join(out_dir, names["corr"]), CORR_HEADER, _corr_rows(data), h)
        files.extend(names.values())
        per_n[str(n)] = {
            "events": res.events, "wall_seconds": res.wall_seconds,
            "budget_exceeded": res.budget_exceeded, "frozen_replicas": res.frozen_replicas,
            "replicas": res.ens[0].n,
        }
    write_manifest(os.path.join(out_dir, "manifest.json"), cfg.canonical_text(), h, {
        "files": sorted(files),
        "per_n": per_n,
        "seed_scheme": {"master_seed": cfg.seed,
                        "stream": "pcg64 keyed by [master_seed, replica_id]"},
        "budget_exceeded": any(v["budget_exceeded"] for v in per_n.values()),
    })
    return results


# ---------------------------------------------------------------------------
# files -> SiteData (for the diagnose stage)

def _column(header, name):
    return header.index(name)


def site_data_from_dir(cfg: ExperimentConfig, in_dir, n_sites: int) -> SiteData:
    h = cfg.hash()

    def load(name):
        got_hash, header, rows = read_csv(os.path.join(in_dir, name))
        if got_hash != h:
            raise ConfigError(
                f"{name} was produced under config {got_hash}, expected {h}; "
                "refusing to aggregate across configurations")
        return header, rows

    header, rows = load(f"N{n_sites}_sites.csv")
    idx = {k: _column(header, k) for k in SITE_HEADER}
    times = sorted({float(r[idx["t"]]) for r in rows})
    t_index = {t: k for k, t in enumerate(times)}
    mean, stderr, tavg, tavg_se, tavg_half = {}, {}, {}, {}, {}
    for r in rows:
        k = t_index[float(r[idx["t"]])]
        obs = r[idx["observable"]]
        i = int(r[idx["site"]])
        mean.setdefault((k, obs), np.zeros(n_sites))[i] = float(r[idx["mean"]])
        stderr.setdefault((k, obs), np.zeros(n_sites))[i] = float(r[idx["std_err"]])
        if r[idx["tavg_mean"]]:
            tavg.setdefault(obs, np.zeros(n_sites))[i] = float(r[idx["tavg_mean"]])
            tavg_se.setdefault(obs, np.zeros(n_sites))[i] = float(r[idx["tavg_std_err"]])
            tavg_half.setdefault(obs, np.zeros(n_sites))[i] = float(r[idx["tavg_half_mean"]])

    header, rows = load(f"N{n_sites}_windows.csv")
    widx = {k: _column(header, k) for k in WINDOW_HEADER}
    win_mean, win_var = {}, {}
    for r in rows:
        key = (t_index[float(r[widx["t"]])], float(r[widx["epsilon"]]))
        i = int(r[widx["site"]])
        win_mean.setdefault(key, np.zeros(n_sites))[i] = float(r[widx["win_mean"]])
        win_var.setdefault(key, np.zeros(n_sites))[i] = float(r[widx["win_var"]])

    header, rows = load(f"N{n_sites}_corr.csv")
    cidx = {k: _column(header, k) for k in CORR_HEADER}
    corr = {}
    for r in rows:
        k = t_index[float(r[cidx["t"]])]
        corr.setdefault(k, np.zeros(n_sites))[int(r[cidx["site"]])] = float(r[cidx["corr_max"]])

    header, rows = load(f"N{n_sites}_hist.csv")
    hidx = {k: _column(header, k) for k in HIST_HEADER}
    lo = -cfg.hist_range
    hist = np.zeros((2 * cfg.hist_range + 1, n_sites), dtype=np.int64)
    for r in rows:
        hist[int(r[hidx["value"]]) - lo, int(r[hidx["site"]])] = int(r[hidx["count"]])

    return SiteData(n_sites, tuple(times), mean, stderr, tavg, tavg_se, tavg_half,
                    win_mean, win_var, corr, lo, hist)


# ---------------------------------------------------------------------------
# diagnostics over a ladder of SiteData

def active_region(rate_profile: np.ndarray, threshold: float = 0.7) -> np.ndarray:
    """Boolean mask of the most-active sites: rate within `threshold` of the peak.

    Local equilibration is fastest where the rates are largest, so parameter
    estimates and smoothness statements are read off in this region.
    """
    return rate_profile >= threshold * rate_profile.max()


@dataclass
class LadderDiagnostics:
    check_v: diagnostics.VarianceDecayReport
    eps_selected: dict
    check_e: diagnostics.ProfileConvergence
    check_ef: dict                      # obs -> EfReport
    dispersion: dict                    # obs -> DispersionReport at largest N
    omega: dict                         # N -> OmegaEstimate (crystal only)
    omega_distance: dict                # N -> rms |omega1 - omega2| on active region
    equidistribution: object | None
    property_kl: np.ndarray | None      # per-site KL at largest N
    mesoscopic: object | None
    verdicts: list                      # (name, bool | None, detail)


def _final(data: SiteData):
    return len(data.times) - 1


def analyze_ladder(cfg: ExperimentConfig, ladder: dict) -> LadderDiagnostics:
    """Run every applicable check over per-N SiteData tables."""
    proc = build_process(cfg)
    base = proc.base_observable
    sizes = sorted(ladder)
    verdicts = []

    # (V): window variance decay with N at fixed epsilon
    entries = []
    for n in sizes:
        data = ladder[n]
        k = _final(data)
        for (kk, eps) in data.win_var:
            if kk == k:
                entries.append((n, eps, data.win_var[(kk, eps)]))
    check_v = diagnostics.variance_decay(entries)
    verdicts.append(("variance_decay", check_v.verdict,
                     f"per-eps decay {check_v.per_eps_decreasing}"))

    # window-width selection per N, then (E) along the ladder
    eps_selected = {}
    profiles = []
    for n in sizes:
        data = ladder[n]
        k = _final(data)
        candidates = sorted({e for (_, e) in data.win_mean})
        try:
            sel = diagnostics.select_epsilon(n, data.mean[(k, base)],
                                             data.stderr[(k, base)], candidates)
            eps_selected[n] = sel.epsilon
        except diagnostics.SelectionError as exc:
            # keep the pipeline going on poor data: use the narrowest window
            eps_selected[n] = candidates[0]
            verdicts.append((f"epsilon_selection[N={n}]", False, str(exc)))
        profiles.append((n, data.win_mean[(k, eps_selected[n])]))
    check_e = diagnostics.profile_convergence(profiles) if len(profiles) >= 2 else None
    if check_e is not None:
        verdicts.append(("profile_convergence", check_e.verdict,
                         f"sup distances {['%.4g' % d for d in check_e.distances]}"))

    # (Ef): window scatter against the predicted curves. Windows whose
    # observable estimate carries a relative standard error beyond 50% are
    # unresolved (deep-frozen regions) and excluded from the distance.
    check_ef = {}
    for obs, curve in _reference_curves(cfg, proc):
        groups = {}
        for n in sizes:
            data = ladder[n]
            k = _final(data)
            eps = eps_selected[n]
            wbar = data.win_mean[(k, eps)]
            use_tavg = obs == "rate" and bool(data.tavg)
            fprof = data.tavg[obs] if use_tavg else data.mean[(k, obs)]
            fse = data.tavg_se[obs] if use_tavg else data.stderr[(k, obs)]
            L = 2 * math.ceil(n * eps) - 1
            fbar = circular_window_mean(fprof, L)
            sebar = circular_window_mean(fse, L) / math.sqrt(L)
            ok = sebar < 0.5 * np.abs(fbar)
            groups[n] = np.column_stack([wbar[ok], fbar[ok]])
        check_ef[obs] = diagnostics.ef_report(groups, curve)
        verdicts.append((f"ef_curve[{obs}]", check_ef[obs].verdict_decreasing,
                         f"rms {[f'{n}:{v:.4g}' for n, v in sorted(check_ef[obs].rms_by_group.items())]}"))

    # pointwise dispersion at the largest N
    n_big = sizes[-1]
    data = ladder[n_big]
    k = _final(data)
    dispersion = {}
    disp_obs = "w2" if base == "w" else "root4"
    if (k, disp_obs) in data.mean:
        dispersion[disp_obs] = diagnostics.pointwise_dispersion(
            data.mean[(k, base)], data.mean[(k, disp_obs)], data.stderr[(k, disp_obs)])
        verdicts.append((f"pointwise_dispersion[{disp_obs}]", None,
                         f"spread/noise = {dispersion[disp_obs].statistic:.3g}"))

    omega, omega_distance, equi, prop_kl, meso = {}, {}, None, None, None
    if proc.kind == "arrhenius_crystal" and ladder[n_big].tavg:
        for n in sizes:
            d = ladder[n]
            if not d.tavg:
                continue
            est = diagnostics.estimate_omega(d.tavg["w"], d.tavg["rate"], cfg.k)
            omega[n] = est
            mask = active_region(d.tavg["rate"]) & est.rate_valid
            if mask.any():
                diff = est.omega_cumsum[mask] - est.omega_rate[mask]
                omega_distance[n] = float(np.sqrt(np.mean(diff ** 2)))
        if omega_distance:
            seq = [omega_distance[n] for n in sorted(omega_distance)]
            verdicts.append(("omega_estimators_converge",
                             all(b < a for a, b in zip(seq, seq[1:])) if len(seq) > 1 else None,
                             f"rms|diff| {[f'{x:.4g}' for x in seq]}"))
        est = omega.get(n_big)
        if est is not None:
            mask = active_region(ladder[n_big].tavg["rate"])
            pts = np.mod(est.lambda_hat[mask], 1.0)
            if pts.size >= 8:
                equi = diagnostics.lambda_equidistribution(pts)
                verdicts.append(("lambda_equidistribution", equi.verdict,
                                 f"D*={equi.discrepancy:.4g} over {equi.n_points} sites"))
            if ladder[n_big].hist is not None:
                prop_kl = diagnostics.property_kl_profile(
                    ladder[n_big].hist_lo, ladder[n_big].hist,
                    est.omega_cumsum, est.lambda_hat, cfg.k)
                verdicts.append(("site_law_kl", None,
                                 f"median KL {np.median(prop_kl):.4g}, max {prop_kl.max():.4g}"))
            radius = max(2, n_big // 256)
            meso = diagnostics.integer_window_smoothing(
                ladder[n_big].mean[(k, "w")], est.omega_rate, radius)
            verdicts.append(("integer_window_smoothing",
                             None if meso.skipped else meso.verdict,
                             meso.reason if meso.skipped else
                             f"integer {meso.metric_integer:.4g} vs generic {meso.metric_reference:.4g}"))

    return LadderDiagnostics(check_v, eps_selected, check_e, check_ef, dispersion,
                             omega, omega_distance, equi, prop_kl, meso, verdicts)


def _reference_curves(cfg: ExperimentConfig, proc: ProcessSpec):
    """(observable, ReferenceCurve) pairs appropriate for the process."""
    if proc.kind == "arrhenius_crystal":
        K = cfg.k
        yield "rate", diagnostics.ReferenceCurve(lambda w: math.exp(-2.0 * K * w), -4.0, 4.0)
        yield "w2", diagnostics.ReferenceCurve(
            lambda w: gibbs.f_hat(K, w, lambda v: v ** 2), -4.0, 4.0, step=0.1)
    elif proc.kind == "zero_range":
        fam = ZeroRangeFamily(g_linear if cfg.rate_override == "linear" else g_root4)
        yield "root4", diagnostics.ReferenceCurve(
            lambda v: fam.expect(max(v, 0.0), lambda n: n ** 0.25), 0.0, 8.0, step=0.1)
        yield "rate", diagnostics.ReferenceCurve(
            lambda v: fam.phi_from_mean(max(v, 0.0)), 0.0, 8.0, step=0.1)


def diagnose_dir(cfg: ExperimentConfig, run_dir, out_dir) -> LadderDiagnostics:
    """Recompute all checks from a simulate output directory; write report CSVs."""
    manifest = read_manifest(os.path.join(run_dir, "manifest.json"))
    if manifest.get("config_hash") != cfg.hash():
        raise ConfigError("run directory was produced under a different configuration")
    ladder = {n: site_data_from_dir(cfg, run_dir, n) for n in cfg.n_ladder}
    diag = analyze_ladder(cfg, ladder)
    os.makedirs(out_dir, exist_ok=True)
    h = cfg.hash()
    write_csv(os.path.join(out_dir, "check_v.csv"),
              ("n_sites", "epsilon", "window_sites", "max_window_var"),
              diag.check_v.rows, h)
    if diag.check_e is not None:
        write_csv(os.path.join(out_dir, "check_e.csv"),
                  ("step", "sup_distance"),
                  list(enumerate(diag.check_e.distances)), h)
    ef_rows = [(obs, n, rms) for obs, rep in diag.check_ef.items()
               for n, rms in sorted(rep.rms_by_group.items())]
    write_csv(os.path.join(out_dir, "check_ef.csv"),
              ("observable", "n_sites", "rms"), ef_rows, h)
    if diag.property_kl is not None:
        write_csv(os.path.join(out_dir, "site_law_kl.csv"),
                  ("site", "kl"), list(enumerate(diag.property_kl)), h)
    if diag.equidistribution is not None:
        write_csv(os.path.join(out_dir, "equidistribution.csv"),
                  ("cutoff", "bound", "bound_shape", "ok"),
                  diag.equidistribution.rows, h)
    with open(os.path.join(out_dir, "verdicts.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"# config_hash={h}\n")
        for name, verdict, detail in diag.verdicts:
            status = "PASS" if verdict else ("FAIL" if verdict is not None else "INFO")
            fh.write(f"{status} {name}: {detail}\n")
    return diag


# ---------------------------------------------------------------------------
# analytics tables (closed-form curves, no simulation)

def analytics_tables(family: str, K: float, grid: np.ndarray) -> dict:
    """Deterministic reference tables, keyed by output file stem."""
    if family == "gibbs":
        return {
            "u_d": (("lam", "u_d"), gibbs.u_d_table(K, grid)),
            "lambda_d": (("u", "lambda_d"), gibbs.lambda_d_table(K, grid)),
            "f_hat_rate": (("omega", "f_hat"),
                           np.column_stack([grid, np.exp(-2.0 * K * grid)])),
            "f_hat_square": (("omega", "f_hat"),
                             gibbs.f_hat_table(K, grid, lambda v: v ** 2)),
        }
    if family == "zero_range":
        fam = ZeroRangeFamily()
        nonneg = grid[grid >= 0]
        return {
            "f_hat_identity": (("v", "f_hat"), fam.f_hat_table(nonneg, lambda n: n)),
            "f_hat_root4": (("v", "f_hat"), fam.f_hat_table(nonneg, lambda n: n ** 0.25)),
            "f_hat_rate": (("v", "f_hat"),
                           np.column_stack([nonneg, [fam.phi_from_mean(v) for v in nonneg]])),
        }
    raise ConfigError(f"unknown analytics family {family!r}")
