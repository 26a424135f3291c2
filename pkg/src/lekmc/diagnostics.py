"""Verification pipeline for window-averaged convergence of lattice ensembles.

The checks operate on plain arrays produced by the estimators: per-site mean
profiles with standard errors, window-average variances at several widths,
path-time-averaged rate profiles, and per-site sample histograms. Everything
here is deterministic given its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import gibbs
from .estimators import (EmpiricalPMF, circular_window_mean, kl_divergence,
                         window_site_count)


class SelectionError(RuntimeError):
    """No candidate window width passed both the smoothness and bias gates."""


# ---------------------------------------------------------------------------
# roughness

def roughness_metric(values: np.ndarray, x: float, radius: int) -> float:
    """max |v_{i+1} - v_i| over the sites i with |i - N x| <= radius (periodic)."""
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    c = int(round(x * n))
    idx = [(c + k) % n for k in range(-radius, radius + 1)]
    return max(abs(values[(i + 1) % n] - values[i]) for i in idx)


def max_adjacent_diff(values: np.ndarray, periodic: bool = True) -> float:
    """Largest absolute difference between neighboring entries."""
    values = np.asarray(values, dtype=np.float64)
    d = np.abs(np.diff(values))
    best = float(d.max()) if d.size else 0.0
    if periodic:
        best = max(best, abs(float(values[0] - values[-1])))
    return best


# ---------------------------------------------------------------------------
# window-variance decay (limit V)

@dataclass
class VarianceDecayReport:
    rows: list  # (n_sites, epsilon, window_sites, max_window_var)
    per_eps_decreasing: dict
    verdict: bool


def variance_decay(entries: Sequence[tuple[int, float, np.ndarray]]) -> VarianceDecayReport:
    """Tabulate max-over-x window variance per (N, eps); verdict: decay with window size.

    entries: (n_sites, epsilon, per-center window variance profile). For each
    epsilon the window holds ~2 N eps sites, so growing N at fixed epsilon
    must shrink the variance of the window average.
    """
    rows = []
    for n_sites, eps, prof in entries:
        rows.append((n_sites, eps, window_site_count(n_sites, eps), float(np.max(prof))))
    rows.sort(key=lambda r: (r[1], r[0]))
    per_eps = {}
    for n_sites, eps, _, mv in rows:
        per_eps.setdefault(eps, []).append((n_sites, mv))
    decreasing = {}
    for eps, seq in per_eps.items():
        vals = [mv for _, mv in sorted(seq)]
        decreasing[eps] = all(b < a for a, b in zip(vals, vals[1:])) if len(vals) > 1 else True
    return VarianceDecayReport(rows, decreasing, all(decreasing.values()))


# ---------------------------------------------------------------------------
# window-width selection (bias versus roughness)

@dataclass
class EpsilonSelection:
    epsilon: float
    theta_s: float
    theta_b: float
    rows: list  # (eps, roughness, bias_proxy, qualifies)


def select_epsilon(n_sites: int, site_means: np.ndarray, site_std_errors: np.ndarray,
                   candidates: Sequence[float]) -> EpsilonSelection:
    """Smallest window width whose averaged profile is smooth and nearly unbiased.

    Smoothness gate: the windowed profile's adjacent-difference sup is below
    theta_s = 5 x median site-level standard error. Bias gate: halving the
    window moves the profile (sup norm) by less than theta_b = theta_s.
    Candidates are scanned in increasing order, so ties break to smaller eps.
    """
    theta_s = 5.0 * float(np.median(site_std_errors))
    theta_b = theta_s
    rows = []
    chosen = None
    for eps in sorted(candidates):
        prof = circular_window_mean(site_means, window_site_count(n_sites, eps))
        if 2.0 * n_sites * (eps / 2.0) >= 1.0:
            prof_half = circular_window_mean(site_means, window_site_count(n_sites, eps / 2.0))
        else:
            prof_half = np.asarray(site_means, dtype=np.float64)
        rough = max_adjacent_diff(prof)
        bias = float(np.max(np.abs(prof - prof_half)))
        ok = rough < theta_s and bias < theta_b
        rows.append((eps, rough, bias, ok))
        if ok and chosen is None:
            chosen = eps
    if chosen is None:
        table = "; ".join(f"eps={e:g}: rough={r:.3g}, bias={b:.3g}" for e, r, b, _ in rows)
        raise SelectionError(
            f"no candidate window width passed (theta_s={theta_s:.3g}): {table}")
    return EpsilonSelection(chosen, theta_s, theta_b, rows)


# ---------------------------------------------------------------------------
# profile convergence along the ladder (limit E)

@dataclass
class ProfileConvergence:
    distances: list  # sup distance between successive resampled profiles
    verdict: bool


def profile_convergence(profiles: Sequence[tuple[int, np.ndarray]],
                        grid: int = 512) -> ProfileConvergence:
    """Sup-norm Cauchy distances between successive window-mean profiles.

    Profiles live on their own site grids; each is resampled to a common
    periodic grid by piecewise-linear interpolation.
    """
    if len(profiles) < 2:
        raise ValueError("need at least two ladder points")
    xs = np.arange(grid) / grid
    resampled = []
    for n_sites, prof in profiles:
        x_own = np.arange(n_sites + 1) / n_sites
        y_own = np.concatenate([prof, prof[:1]])  # close the ring
        resampled.append(np.interp(xs, x_own, y_own))
    distances = [float(np.max(np.abs(b - a)))
                 for a, b in zip(resampled, resampled[1:])]
    verdict = all(d2 <= d1 * (1.0 + 1e-9) for d1, d2 in zip(distances, distances[1:]))
    return ProfileConvergence(distances, verdict)


# ---------------------------------------------------------------------------
# scatter against the predicted observable curve (limit Ef)

class ReferenceCurve:
    """Piecewise-linear table of omega -> predicted window observable.

    The grid auto-extends when asked for values outside its current range.
    """

    def __init__(self, fn: Callable[[float], float], lo: float, hi: float,
                 step: float = 0.05):
        if hi <= lo:
            raise ValueError("empty curve range")
        self.fn = fn
        self.step = step
        self.grid = np.arange(lo, hi + step / 2, step)
        self.values = np.array([fn(w) for w in self.grid])

    def _extend(self, lo: float, hi: float):
        while self.grid[0] > lo:
            new = np.arange(self.grid[0] - 32 * self.step, self.grid[0] - self.step / 2, self.step)
            self.grid = np.concatenate([new, self.grid])
            self.values = np.concatenate([[self.fn(w) for w in new], self.values])
        while self.grid[-1] < hi:
            new = np.arange(self.grid[-1] + self.step, hi + 32 * self.step, self.step)
            self.grid = np.concatenate([self.grid, new])
            self.values = np.concatenate([self.values, [self.fn(w) for w in new]])

    def value(self, omega):
        omega = np.atleast_1d(np.asarray(omega, dtype=np.float64))
        if omega.min() < self.grid[0] or omega.max() > self.grid[-1]:
            self._extend(float(omega.min()), float(omega.max()))
        return np.interp(omega, self.grid, self.values)


@dataclass
class EfReport:
    rms_by_group: dict
    verdict_decreasing: bool


def scatter_curve_rms(points: np.ndarray, curve: ReferenceCurve) -> float:
    """RMS vertical distance of (mean, observable) points to the reference curve."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2 or points.shape[0] == 0:
        raise ValueError("points must be a nonempty (m, 2) array")
    resid = points[:, 1] - curve.value(points[:, 0])
    return float(np.sqrt(np.mean(resid ** 2)))


def ef_report(groups: dict, curve: ReferenceCurve) -> EfReport:
    """RMS per ladder group (keyed by N); verdict: RMS decreasing along the ladder."""
    rms = {n: scatter_curve_rms(pts, curve) for n, pts in groups.items()}
    ordered = [rms[n] for n in sorted(rms)]
    verdict = all(b < a for a, b in zip(ordered, ordered[1:]))
    return EfReport(rms, verdict)


# ---------------------------------------------------------------------------
# pointwise dispersion (the negative check: no single-site observable map)

@dataclass
class DispersionReport:
    statistic: float  # median over bins of (within-bin spread / noise)
    rows: list        # (bin_center, n_points, spread, noise)


def pointwise_dispersion(site_means: np.ndarray, site_obs: np.ndarray,
                         obs_std_errors: np.ndarray, n_bins: int = 24) -> DispersionReport:
    """Within-bin spread of per-site observable means, relative to their noise.

    Bins sites by their mean value. If a single function mapped site means to
    observable means, the spread inside a narrow bin would be at the noise
    level; a spread far above noise is the signature that no such function
    exists.
    """
    site_means = np.asarray(site_means, dtype=np.float64)
    site_obs = np.asarray(site_obs, dtype=np.float64)
    lo, hi = site_means.min(), site_means.max()
    if hi <= lo:
        edges = np.array([lo - 0.5, hi + 0.5])
    else:
        edges = np.linspace(lo, hi + 1e-12 * max(1.0, abs(hi)), n_bins + 1)
    which = np.clip(np.digitize(site_means, edges) - 1, 0, len(edges) - 2)
    rows = []
    ratios = []
    for b in range(len(edges) - 1):
        sel = which == b
        m = int(sel.sum())
        if m == 0:
            continue
        spread = float(np.std(site_obs[sel], ddof=1)) if m > 1 else 0.0
        noise = float(np.sqrt(np.mean(obs_std_errors[sel] ** 2)))
        rows.append((float(0.5 * (edges[b] + edges[b + 1])), m, spread, noise))
        if noise > 0:
            ratios.append(spread / noise)
        elif spread > 0:
            ratios.append(math.inf)
        else:
            ratios.append(0.0)
    return DispersionReport(float(np.median(ratios)) if ratios else 0.0, rows)


# ---------------------------------------------------------------------------
# local parameter estimators for the curvature ensemble

@dataclass
class OmegaEstimate:
    omega_cumsum: np.ndarray      # from the inverse moment map of integrated means
    omega_rate: np.ndarray        # from the time-averaged rate profile (nan where invalid)
    lambda_hat: np.ndarray
    rate_valid: np.ndarray
    rough_cumsum: np.ndarray      # N |omega_{i+1} - omega_i|
    rough_rate: np.ndarray


def estimate_omega(w_tavg: np.ndarray, rate_tavg: np.ndarray, K: float) -> OmegaEstimate:
    """Two per-site estimates of the local location-increment parameter.

    The first integrates the time-averaged curvature means into a zero-sum
    slope-mean profile, maps it through the inverse moment map, and takes
    differences. The second reads the parameter off the time-averaged rate
    profile, exp(-2 K omega). Sites with a nonpositive rate estimate are
    flagged invalid and excluded from the rate-based estimate.
    """
    w_tavg = np.asarray(w_tavg, dtype=np.float64)
    n = w_tavg.size
    z = np.cumsum(w_tavg)
    z -= z.mean()
    lam = np.array([gibbs.lambda_d(K, u) for u in z])
    omega1 = lam - np.roll(lam, 1)
    rate_tavg = np.asarray(rate_tavg, dtype=np.float64)
    valid = rate_tavg > 0.0
    omega2 = np.full(n, np.nan)
    omega2[valid] = -np.log(rate_tavg[valid]) / (2.0 * K)
    rough1 = n * np.abs(np.roll(omega1, -1) - omega1)
    rough2 = n * np.abs(np.roll(omega2, -1) - omega2)
    return OmegaEstimate(omega1, omega2, lam, valid, rough1, rough2)


def property_kl_profile(hist_lo: int, hist_counts: np.ndarray,
                        omega_hat: np.ndarray, lambda_hat: np.ndarray,
                        K: float) -> np.ndarray:
    """Per-site divergence between sampled values and the fitted two-parameter law.

    hist_counts has one row per support value and one column per site.
    """
    n_vals, n_sites = hist_counts.shape
    out = np.empty(n_sites)
    for i in range(n_sites):
        pmf = EmpiricalPMF.from_counts(hist_lo, hist_counts[:, i])
        q = lambda m, i=i: gibbs.mu_pmf_at(K, float(omega_hat[i]), float(lambda_hat[i]), m)
        out[i] = kl_divergence(pmf, q)
    return out


# ---------------------------------------------------------------------------
# equidistribution of location parameters mod 1

def star_discrepancy(points: np.ndarray) -> float:
    """Exact star discrepancy of points in [0, 1], by the sorted-points formula."""
    x = np.sort(np.asarray(points, dtype=np.float64))
    if x.size == 0:
        raise ValueError("need at least one point")
    if x[0] < 0.0 or x[-1] > 1.0:
        raise ValueError("points must lie in [0, 1]")
    n = x.size
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - x), np.max(x - (i - 1) / n)))


def erdos_turan_bound(points: np.ndarray, cutoff: int, constant: float = 1.0) -> float:
    """Fourier-sum bound on the discrepancy: C (1/n + sum_{m<=n} |phat(m)| / m)."""
    x = np.asarray(points, dtype=np.float64)
    ms = np.arange(1, cutoff + 1)
    coeff = np.abs(np.exp(2j * np.pi * np.outer(ms, x)).mean(axis=1))
    return float(constant * (1.0 / cutoff + np.sum(coeff / ms)))


@dataclass
class EquidistributionReport:
    n_points: int
    discrepancy: float
    rows: list  # (cutoff, bound, bound_shape_without_constant, ok)
    verdict: bool


def lambda_equidistribution(points: np.ndarray, cutoffs=(10, 100, 1000),
                            constant: float = 1.0) -> EquidistributionReport:
    """Exact discrepancy of the points against their Fourier-sum bounds.

    Points are reduced mod 1. Requires at least 8 points so the discrepancy
    is meaningful.
    """
    pts = np.mod(np.asarray(points, dtype=np.float64), 1.0)
    if pts.size < 8:
        raise ValueError(f"need at least 8 points, got {pts.size}")
    d = star_discrepancy(pts)
    rows = []
    for c in cutoffs:
        shape = erdos_turan_bound(pts, c, constant=1.0)
        bound = constant * shape
        rows.append((c, bound, shape, d <= bound))
    return EquidistributionReport(pts.size, d, rows, all(r[3] for r in rows))


# ---------------------------------------------------------------------------
# mesoscopic smoothing where the local parameter is an integer

@dataclass
class IntegerSmoothingReport:
    skipped: bool
    reason: str
    metric_integer: float
    metric_reference: float
    verdict: bool | None


def integer_window_smoothing(mean_profile: np.ndarray, omega_hat: np.ndarray,
                             radius: int, integer_tol: float = 0.15) -> IntegerSmoothingReport:
    """Compare adjacent-difference roughness of the mean profile at integer
    versus generic values of the local parameter.

    Windows of half-width `radius` whose parameter sits within integer_tol of
    an integer should show a much smaller mean-profile roughness than windows
    where the parameter mod 1 is far from both 0 and 1/2. Returns a skipped
    report when no integer-parameter window exists.
    """
    mean_profile = np.asarray(mean_profile, dtype=np.float64)
    omega_hat = np.asarray(omega_hat, dtype=np.float64)
    n = mean_profile.size
    frac = np.abs(omega_hat - np.round(omega_hat))
    dist_half = np.abs(np.mod(omega_hat, 1.0) - 0.5)
    integer_centers = []
    generic_centers = []
    for c in range(n):
        win = [(c + k) % n for k in range(-radius, radius + 1)]
        f = frac[win]
        if not np.all(np.isfinite(omega_hat[win])):
            continue
        if np.all(f < integer_tol):
            integer_centers.append(c)
        elif np.mean(f) > 0.2 and np.mean(dist_half[win]) > 0.2:
            generic_centers.append(c)
    if not integer_centers:
        return IntegerSmoothingReport(True, "no window with near-integer parameter",
                                      math.nan, math.nan, None)
    if not generic_centers:
        return IntegerSmoothingReport(True, "no window with generic parameter",
                                      math.nan, math.nan, None)
    m_int = min(roughness_metric(mean_profile, c / n, radius) for c in integer_centers)
    m_gen = float(np.median([roughness_metric(mean_profile, c / n, radius)
                             for c in generic_centers]))
    return IntegerSmoothingReport(False, "", m_int, m_gen, m_int < m_gen)
