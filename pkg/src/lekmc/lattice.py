"""Periodic-lattice configurations and transition algebra for surface jump processes.

A crystal surface on a ring of N sites can be described three ways: column
heights h, slopes z_i = h_{i+1} - h_i, or discrete curvatures
w_i = z_i - z_{i-1}. A single particle hop between neighboring columns is a
local stencil update in each view. The hop rate out of column i depends only
on the local curvature, r(w_i) = exp(-2K - 2K w_i), so the curvature chain is
autonomous and is treated as the source of truth; slope and height views are
derived on demand.

All functions here are pure: configurations are immutable and every transition
returns a fresh configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# exp() overflows float64 just above 709; anything past this is a setup error.
LOG_RATE_MAX = 700.0

CURVATURE_STENCIL_RIGHT = (-1, 3, -3, 1)   # hop i -> i+1, applied at sites i-1..i+2
CURVATURE_STENCIL_LEFT = (1, -3, 3, -1)    # hop i+1 -> i, applied at the same sites


class ConfigurationError(ValueError):
    """A state or parameter set violates a documented bound."""


def wrap(i: int, n: int) -> int:
    """Reduce a site index onto the ring of n sites."""
    return i % n


def _as_config_array(values) -> np.ndarray:
    arr = np.array(values, dtype=np.int64, copy=True)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("configuration must be a nonempty 1-d integer array")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class HeightConfig:
    """Column heights on the periodic lattice (negative = missing particles)."""

    h: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "h", _as_config_array(self.h))

    @property
    def n_sites(self) -> int:
        return self.h.size


@dataclass(frozen=True)
class SlopeConfig:
    """Height differences z_i = h_{i+1} - h_i; sums to zero on the ring."""

    z: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "z", _as_config_array(self.z))

    @property
    def n_sites(self) -> int:
        return self.z.size


@dataclass(frozen=True)
class CurvatureConfig:
    """Second height differences w_i = z_i - z_{i-1}; sums to zero on the ring."""

    w: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", _as_config_array(self.w))

    @property
    def n_sites(self) -> int:
        return self.w.size


@dataclass(frozen=True)
class SystemParams:
    """Inverse temperature K plus the time (alpha) and amplitude (beta) exponents."""

    K: float
    alpha: float = 4.0
    beta: float = 0.0

    def __post_init__(self):
        if not self.K > 0:
            raise ConfigurationError(f"K must be positive, got {self.K}")


def slope_of(height: HeightConfig) -> SlopeConfig:
    h = height.h
    return SlopeConfig(np.roll(h, -1) - h)


def curvature_of(cfg: SlopeConfig | HeightConfig) -> CurvatureConfig:
    if isinstance(cfg, HeightConfig):
        cfg = slope_of(cfg)
    z = cfg.z
    return CurvatureConfig(z - np.roll(z, 1))


def slope_from_curvature(curv: CurvatureConfig, z0: int = 0) -> SlopeConfig:
    """Integrate curvatures once. Requires sum(w) == 0 so the ring closes."""
    w = curv.w
    if int(w.sum()) != 0:
        raise ConfigurationError("curvatures do not sum to zero; no periodic slope exists")
    z = np.empty_like(w)
    z[0] = z0
    np.cumsum(w[1:], out=z[1:])
    z[1:] += z0
    return SlopeConfig(z)


def height_from_slope(slope: SlopeConfig, h0: int = 0) -> HeightConfig:
    """Integrate slopes once. Requires sum(z) == 0 so the ring closes."""
    z = slope.z
    if int(z.sum()) != 0:
        raise ConfigurationError("slopes do not sum to zero; no periodic height exists")
    h = np.empty_like(z)
    h[0] = h0
    np.cumsum(z[:-1], out=h[1:])
    h[1:] += h0
    return HeightConfig(h)


def apply_height_jump(cfg: HeightConfig, i: int, j: int) -> HeightConfig:
    """Move one particle from column i to a neighboring column j = i +- 1 (mod N)."""
    n = cfg.n_sites
    i, j = wrap(i, n), wrap(j, n)
    if (j - i) % n not in (1, n - 1):
        raise ConfigurationError(f"sites {i} and {j} are not neighbors on a ring of {n}")
    h = cfg.h.copy()
    h[i] -= 1
    h[j] += 1
    return HeightConfig(h)


def apply_slope_jump(cfg: SlopeConfig, i: int, direction: str) -> SlopeConfig:
    """Slope view of a particle hop out of column i ('right': i -> i+1, 'left': i -> i-1)."""
    n = cfg.n_sites
    i = wrap(i, n)
    z = cfg.z.copy()
    if direction == "right":
        z[wrap(i - 1, n)] -= 1
        z[i] += 2
        z[wrap(i + 1, n)] -= 1
    elif direction == "left":
        z[wrap(i - 2, n)] += 1
        z[wrap(i - 1, n)] -= 2
        z[i] += 1
    else:
        raise ValueError(f"direction must be 'right' or 'left', got {direction!r}")
    return SlopeConfig(z)


def apply_curvature_jump(cfg: CurvatureConfig, i: int, direction: str) -> CurvatureConfig:
    """Apply the four-site curvature stencil anchored at i.

    'right' is the hop i -> i+1 and adds (-1, +3, -3, +1) at sites
    (i-1, i, i+1, i+2); 'left' is the reverse hop i+1 -> i and adds the
    negated stencil at the same sites.
    """
    n = cfg.n_sites
    i = wrap(i, n)
    if direction == "right":
        stencil = CURVATURE_STENCIL_RIGHT
    elif direction == "left":
        stencil = CURVATURE_STENCIL_LEFT
    else:
        raise ValueError(f"direction must be 'right' or 'left', got {direction!r}")
    w = cfg.w.copy()
    for off, dv in zip((-1, 0, 1, 2), stencil):
        w[wrap(i + off, n)] += dv
    return CurvatureConfig(w)


def arrhenius_log_rate(w_i: int, K: float) -> float:
    return -2.0 * K * (1.0 + w_i)


def arrhenius_rate(w_i: int, K: float) -> float:
    """Hop rate exp(-2K - 2K w_i); equal for the left and right hop out of site i."""
    log_r = arrhenius_log_rate(w_i, K)
    if log_r > LOG_RATE_MAX:
        raise ConfigurationError(
            f"log rate {log_r:.1f} exceeds bound {LOG_RATE_MAX}; "
            f"curvature {w_i} is outside the supported regime for K={K}"
        )
    return math.exp(log_r)


def rate_array(w: np.ndarray, K: float) -> np.ndarray:
    """Vectorized arrhenius_rate with the same overflow guard."""
    log_r = -2.0 * K * (1.0 + w.astype(np.float64))
    worst = log_r.max()
    if worst > LOG_RATE_MAX:
        raise ConfigurationError(
            f"log rate {worst:.1f} exceeds bound {LOG_RATE_MAX} at K={K}"
        )
    return np.exp(log_r)


def hamiltonian(z: SlopeConfig) -> int:
    """Surface energy: the sum of squared slopes."""
    return sum(int(v) * int(v) for v in z.z)


def generator_drift(w: CurvatureConfig, j: int, K: float) -> float:
    """Expected instantaneous drift of coordinate j under the curvature dynamics.

    Equals the fourth finite difference of the rate field,
    r(w_{j-2}) - 4 r(w_{j-1}) + 6 r(w_j) - 4 r(w_{j+1}) + r(w_{j+2}).
    """
    n = w.n_sites
    coeffs = (1.0, -4.0, 6.0, -4.0, 1.0)
    return sum(
        c * arrhenius_rate(int(w.w[wrap(j + off, n)]), K)
        for off, c in zip(range(-2, 3), coeffs)
    )


def conserved_quantities(z: SlopeConfig) -> tuple[int, int]:
    """Return (S0, S1) with S0 = sum z_k and S1 = sum k z_k, k counted from 1.

    S0 is exactly invariant under every hop. S1 is invariant for interior
    hops but shifts by +-N when a hop wraps around the ring, so it is only
    conserved modulo N on the torus.
    """
    s0 = int(z.z.sum())
    s1 = sum(k * int(v) for k, v in enumerate(z.z, start=1))
    return s0, s1


def gibbs_log_density(z: SlopeConfig, K: float) -> float:
    """Unnormalized log density of the product Gibbs measure, -K * H(z)."""
    return -K * hamiltonian(z)


def detailed_balance_residual(z: SlopeConfig, i: int, K: float) -> float:
    """Log-domain detailed balance defect for the hop i -> i+1 and its reverse.

    Zero (up to float rounding) for every slope configuration, which is what
    makes the Gibbs measure invariant.
    """
    n = z.n_sites
    i = wrap(i, n)
    w_i = int(z.z[i]) - int(z.z[wrap(i - 1, n)])
    z_new = apply_slope_jump(z, i, "right")
    # reverse move: particle hops from column i+1 back to column i
    w_rev = int(z_new.z[wrap(i + 1, n)]) - int(z_new.z[i])
    forward = arrhenius_log_rate(w_i, K) + gibbs_log_density(z, K)
    backward = arrhenius_log_rate(w_rev, K) + gibbs_log_density(z_new, K)
    return forward - backward
