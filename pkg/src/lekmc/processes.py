"""Concrete jump-process definitions and initial-condition samplers.

Three process kinds share the event-driven engine:

  * arrhenius_crystal: the curvature chain of a crystal surface, events
    (site, dir) both at rate exp(-2K - 2K w_site), four-site stencil effect;
  * zero_range: occupancies, a particle leaves site i at rate g(v_i) and
    lands on a uniformly chosen nearest neighbor;
  * simple_exclusion: hard-core occupancies in {0,1}, hop rate 1 to an empty
    neighbor. (Representative symmetric member of the hard-core family.)

Initial states are sampled from product measures tied to a macroscopic
profile: each site takes floor(N^beta v0(i/N)) plus a Bernoulli on the
fractional part, so the site mean equals N^beta v0(i/N) exactly.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from . import gibbs
from .lattice import ConfigurationError, SystemParams, rate_array
from .zr import g_linear, g_root4

DIR_RIGHT, DIR_LEFT = 0, 1
_DIR_NAMES = ("right", "left")

PROCESS_KINDS = ("arrhenius_crystal", "zero_range", "simple_exclusion")


def zero_range_rate(k: int) -> float:
    """Departure rate g(k) = k + k^(1/4) for k >= 1, with g(0) = 0."""
    if k < 0:
        raise ConfigurationError(f"occupancy must be nonnegative, got {k}")
    return g_root4(k)


def exclusion_rate(occ_i: int, occ_j: int) -> float:
    """Hop rate from i to j: 1 when i holds a particle and j is empty, else 0."""
    if occ_i not in (0, 1) or occ_j not in (0, 1):
        raise ConfigurationError("exclusion occupancies must be 0 or 1")
    return 1.0 if (occ_i == 1 and occ_j == 0) else 0.0


@dataclass(frozen=True)
class ProcessSpec:
    """A process kind plus its scaling parameters and observable views."""

    kind: str
    params: SystemParams
    rate_override: str | None = None  # "linear" switches zero_range to g(k) = k

    def __post_init__(self):
        if self.kind not in PROCESS_KINDS:
            raise ConfigurationError(f"unknown process kind {self.kind!r}")
        if self.rate_override not in (None, "linear"):
            raise ConfigurationError(f"unknown rate override {self.rate_override!r}")
        if self.rate_override and self.kind != "zero_range":
            raise ConfigurationError("rate_override applies to zero_range only")

    # -- rates ---------------------------------------------------------

    @property
    def g_kind(self) -> int:
        return 1 if self.rate_override == "linear" else 0

    def _g(self, k: int) -> float:
        return g_linear(k) if self.g_kind == 1 else g_root4(k)

    def site_rates(self, state: np.ndarray, s: int) -> tuple[float, float]:
        """(right, left) event rates at site s for the current state."""
        n = state.size
        if self.kind == "arrhenius_crystal":
            lr = -2.0 * self.params.K * (1.0 + state[s])
            if lr > 700.0:
                raise ConfigurationError(f"log rate {lr:.1f} out of range at site {s}")
            r = math.exp(lr)
            return r, r
        if self.kind == "zero_range":
            half = 0.5 * self._g(int(state[s]))
            return half, half
        occ = state
        right = exclusion_rate(int(occ[s]), int(occ[(s + 1) % n]))
        left = exclusion_rate(int(occ[s]), int(occ[(s - 1) % n]))
        return right, left

    def rate_leaves(self, state: np.ndarray) -> np.ndarray:
        """All 2N event weights, leaf 2s = right hop at s, leaf 2s+1 = left hop."""
        n = state.size
        leaves = np.empty(2 * n)
        for s in range(n):
            leaves[2 * s], leaves[2 * s + 1] = self.site_rates(state, s)
        return leaves

    def apply_event(self, state: np.ndarray, site: int, direction: int) -> tuple[int, ...]:
        """Mutate state by one event; return the sites whose rates must be refreshed."""
        n = state.size
        if self.kind == "arrhenius_crystal":
            if direction == DIR_RIGHT:
                lo = site - 1
                stencil = (-1, 3, -3, 1)
            else:
                lo = site - 2
                stencil = (1, -3, 3, -1)
            sites = tuple((lo + k) % n for k in range(4))
            for s, dv in zip(sites, stencil):
                state[s] += dv
            return sites
        dest = (site + 1) % n if direction == DIR_RIGHT else (site - 1) % n
        if self.kind == "zero_range":
            state[site] -= 1
            state[dest] += 1
            return (site, dest)
        state[site] = 0
        state[dest] = 1
        return tuple(
            (base + off) % n for off in (-1, 0, 1) for base in (site, dest)
        )

    # -- observables ----------------------------------------------------

    def observables(self) -> dict:
        """Vectorized per-site observables, keyed by the names used in reports."""
        if self.kind == "arrhenius_crystal":
            K = self.params.K
            return {
                "w": lambda v: v.astype(np.float64),
                "w2": lambda v: v.astype(np.float64) ** 2,
                "rate": lambda v: rate_array(v, K),
            }
        if self.kind == "zero_range":
            g = np.vectorize(self._g, otypes=[np.float64])
            return {
                "v": lambda v: v.astype(np.float64),
                "v2": lambda v: v.astype(np.float64) ** 2,
                "rate": lambda v: g(v),
                "root4": lambda v: v.astype(np.float64) ** 0.25,
            }
        return {"v": lambda v: v.astype(np.float64)}

    @property
    def base_observable(self) -> str:
        return "w" if self.kind == "arrhenius_crystal" else "v"

    def time_scale(self, n_sites: int) -> float:
        """Microscopic duration of one macroscopic time unit, N^alpha."""
        return float(n_sites) ** self.params.alpha

    def is_frozen(self, state: np.ndarray) -> bool:
        """True when no event can ever fire again from this state."""
        if self.kind == "arrhenius_crystal":
            return False  # curvature hop rates are strictly positive
        if self.kind == "zero_range":
            return int(state.sum()) == 0
        # exclusion on a ring moves unless the occupancies are constant
        return bool(state.min() == state.max())

    def validate_state(self, state: np.ndarray):
        n = state.size
        if self.kind == "arrhenius_crystal":
            if n < 4:
                raise ConfigurationError("curvature dynamics needs at least 4 sites")
            rate_array(state, self.params.K)  # overflow guard
            if int(state.sum()) != 0:
                raise ConfigurationError("curvatures must sum to zero on the ring")
        else:
            if n < 2:
                raise ConfigurationError("need at least 2 sites")
            if state.min() < 0:
                raise ConfigurationError("occupancies must be nonnegative")
            if self.kind == "simple_exclusion" and state.max() > 1:
                raise ConfigurationError("exclusion occupancies must be 0 or 1")


def arrhenius_process(K: float, alpha: float = 4.0, beta: float = 2.0) -> ProcessSpec:
    return ProcessSpec("arrhenius_crystal", SystemParams(K=K, alpha=alpha, beta=beta))


def zero_range_process(alpha: float = 2.0, beta: float = 0.0,
                       rate_override: str | None = None) -> ProcessSpec:
    # K is unused by the dynamics; kept positive for the shared parameter type
    return ProcessSpec("zero_range", SystemParams(K=1.0, alpha=alpha, beta=beta),
                       rate_override=rate_override)


def exclusion_process(alpha: float = 2.0, beta: float = 0.0) -> ProcessSpec:
    return ProcessSpec("simple_exclusion", SystemParams(K=1.0, alpha=alpha, beta=beta))


# ---------------------------------------------------------------------------
# macroscopic profiles

def _split_terms(text: str) -> list:
    """Split a profile expression on top-level +/- (not inside parentheses,
    not in exponents like 1e-3), keeping each sign with its term."""
    out = []
    cur = ""
    depth = 0
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch in "+-" and depth == 0 and cur and cur[-1] not in "eE":
            out.append(cur)
            cur = ch
        else:
            cur += ch
    if cur:
        out.append(cur)
    return out


_TERM_RE = re.compile(
    r"^\s*(?P<amp>[+-]?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)"
    r"(?:\s*\*\s*(?P<basis>sin2|sin|cos)\s*\(\s*(?P<freq>\d+)\s*x\s*"
    r"(?:(?P<psign>[+-])\s*(?P<phase>\d+(?:\.\d+)?))?\s*\))?\s*$"
)


@dataclass(frozen=True)
class ProfileTerm:
    amplitude: float
    frequency: int
    phase: float
    basis: str  # sin | cos | sin2

    def __call__(self, x):
        arg = 2.0 * np.pi * self.frequency * np.asarray(x, dtype=np.float64) + self.phase
        if self.basis == "sin":
            return self.amplitude * np.sin(arg)
        if self.basis == "cos":
            return self.amplitude * np.cos(arg)
        return self.amplitude * np.sin(arg) ** 2


@dataclass(frozen=True)
class MacroProfile:
    """Periodic profile on [0, 1): a sum of sin / cos / sin^2 terms."""

    terms: tuple
    description: str = ""

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        for term in self.terms:
            out = out + term(x)
        return out if out.ndim else float(out)

    @classmethod
    def parse(cls, text: str) -> "MacroProfile":
        """Parse e.g. '0.03*sin(1x) + 0.015*cos(2x)', '5*sin2(1x)', or '2.5'.

        Frequencies count full cycles over [0, 1); phases are radians.
        """
        terms = []
        for chunk in _split_terms(text.replace(" ", "")):
            if not chunk:
                continue
            m = _TERM_RE.match(chunk)
            if not m:
                raise ConfigurationError(f"cannot parse profile term {chunk!r}")
            amp = float(m.group("amp"))
            if m.group("basis") is None:
                terms.append(ProfileTerm(amp, 0, 0.0, "cos"))  # constant
                continue
            phase = float(m.group("phase") or 0.0)
            if m.group("psign") == "-":
                phase = -phase
            terms.append(ProfileTerm(amp, int(m.group("freq")), phase, m.group("basis")))
        if not terms:
            raise ConfigurationError(f"empty profile expression {text!r}")
        return cls(tuple(terms), description=text.strip())


# small-amplitude analytic height profiles used as default initial conditions
DEFAULT_IC1 = MacroProfile.parse("0.03*sin(1x) + 0.015*cos(2x)")
DEFAULT_IC2 = MacroProfile.parse("0.025*cos(1x) + 0.01*sin(3x)")

# zero-range demo profile
ZR_PROFILE = MacroProfile.parse("5*sin2(1x)")


@dataclass(frozen=True)
class InitSampler:
    """Floor-plus-Bernoulli product sampler associated with a profile.

    Site i gets floor(q_i) + Bernoulli(q_i - floor(q_i)) with
    q_i = N^beta * profile(i/N), so the site mean is exactly q_i.
    """

    profile: MacroProfile
    beta: float

    def target_values(self, n_sites: int) -> np.ndarray:
        x = np.arange(n_sites) / n_sites
        return float(n_sites) ** self.beta * self.profile(x)

    def sample_values(self, n_sites: int, rng: np.random.Generator) -> np.ndarray:
        q = self.target_values(n_sites)
        base = np.floor(q)
        frac = q - base
        return (base + (rng.random(n_sites) < frac)).astype(np.int64)


def sample_initial(process: ProcessSpec, profile: MacroProfile, n_sites: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Draw an initial state for the process from the profile's product measure.

    For the crystal the profile describes heights; slopes and curvatures are
    finite differences of the sampled integer heights. For occupancy processes
    the profile describes occupancies directly and must be nonnegative
    (and at most 1 for exclusion).
    """
    if n_sites < 4:
        raise ConfigurationError("need at least 4 sites")
    sampler = InitSampler(profile, process.params.beta)
    if process.kind == "arrhenius_crystal":
        h = sampler.sample_values(n_sites, rng)
        w = np.roll(h, -1) - 2 * h + np.roll(h, 1)
        process.validate_state(w)
        return w
    q = sampler.target_values(n_sites)
    if q.min() < 0:
        raise ConfigurationError("occupancy profile must be nonnegative")
    if process.kind == "simple_exclusion" and q.max() > 1:
        raise ConfigurationError("exclusion profile must stay within [0, 1]")
    v = sampler.sample_values(n_sites, rng)
    process.validate_state(v)
    return v


def sample_equilibrium_curvature(n_sites: int, K: float,
                                 rng: np.random.Generator) -> np.ndarray:
    """Curvatures induced by independent lattice-Gaussian slopes (global equilibrium)."""
    ns, p = gibbs.dg_pmf(K, 0.0)
    z = rng.choice(ns, size=n_sites, p=p)
    return (z - np.roll(z, 1)).astype(np.int64)


# default battery of test functions for the weak-association check
def _assoc_battery():
    return {
        "const": lambda x: np.ones_like(x),
        "sin_1": lambda x: np.sin(2 * np.pi * x),
        "cos_1": lambda x: np.cos(2 * np.pi * x),
        "sin_2": lambda x: np.sin(4 * np.pi * x),
        "cos_2": lambda x: np.cos(4 * np.pi * x),
    }


def weak_association_test(state: np.ndarray, profile: MacroProfile, beta: float,
                          test_fns: dict | None = None, delta: float = 0.05) -> dict:
    """Deviations |(1/N) sum phi(i/N) N^-beta v_i - integral(phi * v0)| per test phi.

    Returns {name: (deviation, deviation <= delta)}. The reference integrals
    are midpoint sums on a fine grid (spectrally accurate for these smooth
    periodic integrands).
    """
    if test_fns is None:
        test_fns = _assoc_battery()
    n = state.size
    x = np.arange(n) / n
    scaled = state.astype(np.float64) / float(n) ** beta
    fine = (np.arange(1 << 13) + 0.5) / (1 << 13)
    v0 = profile(fine)
    out = {}
    for name, phi in test_fns.items():
        empirical = float(np.mean(phi(x) * scaled))
        reference = float(np.mean(phi(fine) * v0))
        dev = abs(empirical - reference)
        out[name] = (dev, dev <= delta)
    return out
