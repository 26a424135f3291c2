"""Closed-form analytics for integer-supported Gaussian measure families.

The building block is the lattice Gaussian rho[K, lam](n) = exp(-K(n-lam)^2) / Z_K(lam)
on the integers, the equilibrium single-slope law. From it we build:

  * the moment map u_d(lam) = mean of rho[K, lam] and its inverse lambda_d,
    which differ from the identity by one-periodic oscillations u_o, lambda_o;
  * the two-parameter family mu[K, omega, lam]: the law of the difference of
    two independent lattice Gaussians with locations lam and lam - omega
    (the single-site curvature law under a local Gibbs slope state);
  * the location-averaged family mu_avg[K, omega], the integral of
    mu[K, omega, lam] over lam in [0, 1), which is mean-parameterized and
    supplies the reference curve omega -> f_hat(omega) for window-averaged
    observables.

Tail cutoffs are chosen so truncated sums carry relative error below 1e-18;
K below 0.5 is rejected because the sums then widen beyond the tuned windows.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

MIN_K = 0.5
_TAIL_LOG = 45.0  # exp(-45) ~ 2.9e-20 per-term cutoff


class ValidationError(ValueError):
    """Inputs outside the supported domain of the analytic formulas."""


class NumericalError(RuntimeError):
    """An internal numerical assumption failed (should not happen in the tuned regime)."""


def _check_k(K: float) -> float:
    K = float(K)
    if not K >= MIN_K:
        raise ValidationError(f"K must be >= {MIN_K}, got {K}")
    return K


def gaussian_radius(K: float, scale: float = 1.0) -> int:
    """Window radius M with exp(-(K/scale) M^2) below the tail cutoff."""
    return math.ceil(math.sqrt(scale * _TAIL_LOG / K)) + 2


# ---------------------------------------------------------------------------
# one-parameter lattice Gaussian rho[K, lam]

def dg_support(K: float, lam: float) -> np.ndarray:
    """Integer window carrying all but ~1e-18 of the mass of rho[K, lam]."""
    m = gaussian_radius(K)
    return np.arange(math.floor(lam) - m, math.ceil(lam) + m + 1)


def theta_z(K: float, lam: float) -> float:
    """Normalizer Z_K(lam) = sum_m exp(-K (m - lam)^2); one-periodic and even in lam."""
    _check_k(K)
    ns = dg_support(K, lam)
    return float(np.exp(-K * (ns - lam) ** 2).sum())


def dg_pmf(K: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Support window and probabilities of the lattice Gaussian rho[K, lam]."""
    _check_k(K)
    ns = dg_support(K, lam)
    weights = np.exp(-K * (ns - lam) ** 2)
    return ns, weights / weights.sum()


def dg_log_pmf(K: float, lam: float, n: int) -> float:
    _check_k(K)
    return -K * (n - lam) ** 2 - math.log(theta_z(K, lam))


def u_d(K: float, lam: float) -> float:
    """First moment of rho[K, lam]; equals lam plus a one-periodic oscillation."""
    ns, p = dg_pmf(K, lam)
    return float(np.dot(ns, p))


def u_o(K: float, lam: float) -> float:
    """Oscillating part of the moment map: u_d - identity. One-periodic, odd about 1/2."""
    return u_d(K, lam) - lam


def lambda_d(K: float, u: float, tol: float = 1e-14, max_iter: int = 200) -> float:
    """Inverse of the moment map: the unique lam with u_d(lam) = u.

    Bisection on [u-1, u+1]. The moment map is strictly increasing but its
    derivative nearly vanishes on plateaus at large K, so bisection is used
    for unconditional robustness.
    """
    _check_k(K)
    lo, hi = u - 1.0, u + 1.0
    flo, fhi = u_d(K, lo) - u, u_d(K, hi) - u
    if flo > 0.0 or fhi < 0.0:
        raise NumericalError(
            f"bracket [{lo}, {hi}] does not enclose a root of u_d - {u} (K={K})"
        )
    width_floor = max(tol, 8.0 * np.spacing(max(abs(lo), abs(hi))))
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if u_d(K, mid) < u:
            lo = mid
        else:
            hi = mid
        if hi - lo <= width_floor:
            break
    return 0.5 * (lo + hi)


def lambda_o(K: float, u: float) -> float:
    """Oscillating part of the inverse moment map: lambda_d - identity."""
    return lambda_d(K, u) - u


def exp_moment(K: float, lam: float, c: float) -> float:
    """E[exp(c K Z)] for Z ~ rho[K, lam].

    Closed form exp(c K lam + c^2 K / 4) * Z_K(lam + c/2) / Z_K(lam). For even
    integer c the normalizer ratio is exactly 1 by periodicity.
    """
    _check_k(K)
    log_prefactor = c * K * lam + c * c * K / 4.0
    log_ratio = math.log(theta_z(K, lam + c / 2.0)) - math.log(theta_z(K, lam))
    total = log_prefactor + log_ratio
    if total > 700.0:
        raise OverflowError(
            f"exp moment exponent {total:.1f} overflows float64 (c={c}, lam={lam}, K={K})"
        )
    return math.exp(total)


# ---------------------------------------------------------------------------
# two-parameter difference family mu[K, omega, lam]

def mu_support(K: float, omega: float, pad: int = 0) -> np.ndarray:
    """Integer window carrying all but ~1e-18 of the mass of mu[K, omega, lam]."""
    m = gaussian_radius(K, scale=2.0) + pad
    return np.arange(math.floor(omega) - m, math.ceil(omega) + m + 1)


def _q_factor(K: float, omega: float, lam: float, ns: np.ndarray) -> np.ndarray:
    z2 = np.array([theta_z(2.0 * K, lam - 0.5 * (omega + n)) for n in ns])
    return z2 / (theta_z(K, lam - omega) * theta_z(K, lam))


def mu_pmf(K: float, omega: float, lam: float, pad: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Support window and probabilities of mu[K, omega, lam], closed form.

    The pmf factors as a Gaussian envelope exp(-K (n - omega)^2 / 2) times a
    strictly positive correction that depends on lam only through lam mod 1.
    """
    _check_k(K)
    ns = mu_support(K, omega, pad)
    probs = np.exp(-0.5 * K * (ns - omega) ** 2) * _q_factor(K, omega, lam, ns)
    return ns, probs


def mu_pmf_at(K: float, omega: float, lam: float, n: int) -> float:
    _check_k(K)
    q = _q_factor(K, omega, lam, np.array([n]))[0]
    return float(math.exp(-0.5 * K * (n - omega) ** 2) * q)


def mu_log_pmf(K: float, omega: float, lam: float, n: int) -> float:
    _check_k(K)
    q = _q_factor(K, omega, lam, np.array([n]))[0]
    return -0.5 * K * (n - omega) ** 2 + math.log(q)


def mu_pmf_conv(K: float, omega: float, lam: float, n: int) -> float:
    """Probability of n under mu[K, omega, lam] via the defining convolution.

    Direct sum over m of rho[K, lam-omega](m) * rho[K, lam](m+n); independent
    of the closed form and used to cross-check it.
    """
    _check_k(K)
    ms = np.arange(
        math.floor(min(lam - omega, lam + n)) - gaussian_radius(K),
        math.ceil(max(lam - omega, lam + n)) + gaussian_radius(K) + 1,
    )
    wa = np.exp(-K * (ms - (lam - omega)) ** 2)
    wb = np.exp(-K * (ms + n - lam) ** 2)
    return float(np.dot(wa, wb) / (theta_z(K, lam - omega) * theta_z(K, lam)))


def mu_mean(K: float, omega: float, lam: float) -> float:
    """First moment of mu[K, omega, lam]: u_d(lam) - u_d(lam - omega).

    Depends on both parameters, which is exactly why this family is not
    mean-parameterized.
    """
    return u_d(K, lam) - u_d(K, lam - omega)


def rate_expectation(K: float, omega: float) -> float:
    """Mean of the hop rate r(n) = exp(-2K - 2Kn) under mu[K, omega, lam].

    Equals exp(-2K omega) for every lam: the even-integer tilts in the rate
    make the normalizer ratios drop out.
    """
    _check_k(K)
    arg = -2.0 * K * omega
    if arg > 700.0:
        raise OverflowError(f"rate expectation exp({arg:.1f}) overflows float64")
    return math.exp(arg)


# ---------------------------------------------------------------------------
# location-averaged family mu_avg[K, omega]

DEFAULT_QUADRATURE_NODES = 64


def mu_avg_pmf(
    K: float, omega: float, n_nodes: int = DEFAULT_QUADRATURE_NODES, pad: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Average of mu[K, omega, lam] over lam in [0, 1), by the midpoint rule.

    The integrand is smooth and one-periodic in lam, so the uniform rule
    converges spectrally; n_nodes = 64 is far past convergence for K >= 0.5.
    """
    _check_k(K)
    ns = mu_support(K, omega, pad)
    envelope = np.exp(-0.5 * K * (ns - omega) ** 2)
    acc = np.zeros_like(envelope)
    for j in range(n_nodes):
        lam = (j + 0.5) / n_nodes
        acc += _q_factor(K, omega, lam, ns)
    return ns, envelope * acc / n_nodes


def mu_avg_mean(K: float, omega: float, n_nodes: int = DEFAULT_QUADRATURE_NODES) -> float:
    ns, p = mu_avg_pmf(K, omega, n_nodes)
    return float(np.dot(ns, p))


def f_hat(
    K: float,
    omega: float,
    f: Callable[[np.ndarray], np.ndarray],
    n_nodes: int = DEFAULT_QUADRATURE_NODES,
) -> float:
    """Expectation of the observable f under mu_avg[K, omega].

    This is the predicted window-averaged value of f as a function of the
    window-averaged mean. f must be summable against the Gaussian envelope;
    the window is widened until the sum stabilizes, and an observable that
    keeps growing faster than the envelope decays is rejected.
    """
    _check_k(K)
    prev = None
    for pad in (0, 6, 14, 30):
        ns, p = mu_avg_pmf(K, omega, n_nodes, pad=pad)
        vals = np.asarray(f(ns.astype(np.float64)), dtype=np.float64)
        if not np.all(np.isfinite(vals * p)):
            raise ValidationError("observable is not finite against the Gaussian window")
        total = float(np.dot(vals, p))
        edge = max(abs(vals[0] * p[0]), abs(vals[-1] * p[-1]))
        scale = max(abs(total), 1e-300)
        if edge <= 1e-13 * scale and prev is not None and abs(total - prev) <= 1e-12 * scale:
            return total
        prev = total
    raise ValidationError(
        "observable does not converge against the Gaussian window; "
        "it grows too fast for this family"
    )


# ---------------------------------------------------------------------------
# grids for table export

def u_d_table(K: float, lams: np.ndarray) -> np.ndarray:
    """Rows (lam, u_d(lam)) for CSV export."""
    lams = np.asarray(lams, dtype=np.float64)
    return np.column_stack([lams, [u_d(K, x) for x in lams]])


def lambda_d_table(K: float, us: np.ndarray) -> np.ndarray:
    """Rows (u, lambda_d(u)) for CSV export."""
    us = np.asarray(us, dtype=np.float64)
    return np.column_stack([us, [lambda_d(K, x) for x in us]])


def f_hat_table(
    K: float, omegas: np.ndarray, f: Callable[[np.ndarray], np.ndarray]
) -> np.ndarray:
    """Rows (omega, f_hat(omega)) for CSV export."""
    omegas = np.asarray(omegas, dtype=np.float64)
    return np.column_stack([omegas, [f_hat(K, w, f) for w in omegas]])
