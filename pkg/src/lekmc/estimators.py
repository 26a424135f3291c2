"""Mergeable statistics over replica ensembles.

Accumulators collect per-site sums across replicas: observable first and
second moments, lagged pair products of the base field (for cross-replica
correlations), window averages at registered window widths (for their
ensemble variance), and exact path-time averages. Workers accumulate
contiguous replica-id blocks; merging concatenates blocks and every query
folds them in ascending replica order, so the result is bit-identical no
matter how replicas were split across workers.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np


class InsufficientDataError(RuntimeError):
    """A statistic was requested from fewer replicas than it needs."""


def window_site_count(n_sites: int, epsilon: float) -> int:
    """Number of sites i with |i - c| < N*epsilon (strict), centered at c."""
    if 2.0 * n_sites * epsilon < 1.0:
        raise ValueError(f"window 2*N*eps = {2 * n_sites * epsilon:.3g} is empty")
    return 2 * math.ceil(n_sites * epsilon) - 1


def circular_window_mean(values: np.ndarray, length: int) -> np.ndarray:
    """Centered moving average of odd width `length` on the ring.

    A window at least as wide as the ring is the whole ring: every center
    then sees the exact global mean (each site counted once).
    """
    if length % 2 != 1 or length < 1:
        raise ValueError("window length must be odd and positive")
    if length >= values.size:
        return np.full(values.size, float(values.astype(np.float64).mean()))
    if length == 1:
        return values.astype(np.float64).copy()
    half = length // 2
    ext = np.concatenate([values[-half:], values, values[:half]]).astype(np.float64)
    csum = np.concatenate([[0.0], np.cumsum(ext)])
    return (csum[length:] - csum[:-length]) / length


@dataclass
class _Block:
    lo: int
    hi: int  # exclusive
    n: int
    sums: dict
    sumsqs: dict
    pair: np.ndarray | None
    win_sum: dict
    win_sumsq: dict


class EnsembleAccumulator:
    """Across-replica moments of per-site observables at one observation time."""

    def __init__(self, n_sites: int, observables: dict, lags=tuple(range(2, 10)),
                 epsilons=()):
        self.n_sites = n_sites
        self.observables = dict(observables)
        self.lags = tuple(lags)
        self.epsilons = tuple(epsilons)
        self._kernel = {
            eps: window_site_count(n_sites, eps) for eps in self.epsilons
        }
        self._blocks: list[_Block] = []
        self._totals_cache = None

    def _new_block(self, lo: int) -> _Block:
        zeros = lambda: np.zeros(self.n_sites)
        return _Block(
            lo=lo, hi=lo, n=0,
            sums={k: zeros() for k in self.observables},
            sumsqs={k: zeros() for k in self.observables},
            pair=np.zeros((len(self.lags), self.n_sites)) if self.lags else None,
            win_sum={eps: zeros() for eps in self.epsilons},
            win_sumsq={eps: zeros() for eps in self.epsilons},
        )

    def add(self, replica_id: int, values: np.ndarray):
        """Fold one replica's state (per-site integer values) into the sums."""
        if values.shape != (self.n_sites,):
            raise ValueError("state shape mismatch")
        blk = self._blocks[-1] if self._blocks and self._blocks[-1].hi == replica_id else None
        if blk is None:
            blk = self._new_block(replica_id)
            self._blocks.append(blk)
        base = values.astype(np.float64)
        for name, fn in self.observables.items():
            obs = fn(values)
            blk.sums[name] += obs
            blk.sumsqs[name] += obs * obs
        if blk.pair is not None:
            for j, lag in enumerate(self.lags):
                blk.pair[j] += base * np.roll(base, -lag)
        for eps, length in self._kernel.items():
            wm = circular_window_mean(base, length)
            blk.win_sum[eps] += wm
            blk.win_sumsq[eps] += wm * wm
        blk.hi = replica_id + 1
        blk.n += 1
        self._totals_cache = None

    # -- pickling: observable callables stay with the producing worker ----

    def __getstate__(self):
        state = self.__dict__.copy()
        state["observables"] = {k: None for k in self.observables}
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)

    # -- merging --------------------------------------------------------

    def extend(self, other: "EnsembleAccumulator"):
        if (other.n_sites != self.n_sites or tuple(other.observables) != tuple(self.observables)
                or other.lags != self.lags or other.epsilons != self.epsilons):
            raise ValueError("accumulator layouts differ; refusing to merge")
        self._blocks.extend(other._blocks)
        self._totals_cache = None
        return self

    @classmethod
    def merge(cls, accs) -> "EnsembleAccumulator":
        accs = list(accs)
        out = cls(accs[0].n_sites, accs[0].observables, accs[0].lags, accs[0].epsilons)
        for a in accs:
            out.extend(a)
        return out

    def _totals(self) -> _Block:
        if self._totals_cache is not None:
            return self._totals_cache
        blocks = sorted(self._blocks, key=lambda b: b.lo)
        for a, b in zip(blocks, blocks[1:]):
            if b.lo < a.hi:
                raise ValueError(f"replica ranges overlap: [{a.lo},{a.hi}) and [{b.lo},{b.hi})")
        tot = self._new_block(blocks[0].lo if blocks else 0)
        for b in blocks:
            tot.n += b.n
            for k in tot.sums:
                tot.sums[k] += b.sums[k]
                tot.sumsqs[k] += b.sumsqs[k]
            if tot.pair is not None:
                tot.pair += b.pair
            for eps in self.epsilons:
                tot.win_sum[eps] += b.win_sum[eps]
                tot.win_sumsq[eps] += b.win_sumsq[eps]
        self._totals_cache = tot
        return tot

    # -- queries ----------------------------------------------------------

    @property
    def n(self) -> int:
        return self._totals().n

    def _need(self, k: int):
        if self.n < k:
            raise InsufficientDataError(f"need at least {k} replicas, have {self.n}")

    def mean(self, name: str) -> np.ndarray:
        self._need(1)
        return self._totals().sums[name] / self.n

    def var(self, name: str) -> np.ndarray:
        """Unbiased across-replica variance per site."""
        self._need(2)
        t = self._totals()
        n = t.n
        v = (t.sumsqs[name] - t.sums[name] ** 2 / n) / (n - 1)
        return np.maximum(v, 0.0)

    def std_error(self, name: str) -> np.ndarray:
        return np.sqrt(self.var(name) / self.n)

    def expectation(self, site: int, name: str) -> tuple[float, float]:
        """(mean, standard error) of one observable at one site."""
        return float(self.mean(name)[site]), float(self.std_error(name)[site])

    def window_mean(self, eps: float) -> np.ndarray:
        self._need(1)
        return self._totals().win_sum[eps] / self.n

    def window_var(self, eps: float) -> np.ndarray:
        """Ensemble variance of the window average, per center site."""
        self._need(2)
        t = self._totals()
        n = t.n
        v = (t.win_sumsq[eps] - t.win_sum[eps] ** 2 / n) / (n - 1)
        return np.maximum(v, 0.0)

    def window_stats(self, x: float, eps: float) -> tuple[float, float]:
        """(mean, variance) of the window average centered nearest to x in [0,1)."""
        if eps not in self.epsilons:
            raise KeyError(f"window eps={eps} was not registered at accumulation time")
        c = int(round(x * self.n_sites)) % self.n_sites
        return float(self.window_mean(eps)[c]), float(self.window_var(eps)[c])

    def _base_name(self) -> str:
        # pair products are taken on the raw state; its moments live under the
        # identity observable, named 'w' for curvature runs and 'v' otherwise
        if "w" in self.observables:
            return "w"
        if "v" in self.observables:
            return "v"
        raise KeyError("no identity observable ('w' or 'v') registered")

    def correlations(self, site: int) -> dict:
        """Pearson correlation of base values at `site` with each registered lag."""
        self._need(2)
        t = self._totals()
        n = t.n
        name = self._base_name()
        means = self.mean(name)
        var = self.var(name) * (n - 1) / n  # biased, matching the pair moment
        out = {}
        for j, lag in enumerate(self.lags):
            partner = (site + lag) % self.n_sites
            cov = t.pair[j][site] / n - means[site] * means[partner]
            denom = math.sqrt(var[site] * var[partner])
            if denom <= 0.0 or not np.isfinite(denom):
                warnings.warn(
                    f"zero variance at site {site} or {partner}; correlation undefined")
                out[lag] = np.nan
            else:
                out[lag] = float(cov / denom)
        return out

    def correlation_max(self, site: int) -> float:
        """max over registered lags of |corr(base_site, base_site+lag)|; nan lags skipped."""
        vals = [abs(v) for v in self.correlations(site).values() if np.isfinite(v)]
        if not vals:
            return np.nan
        return max(vals)

    def correlation_max_profile(self) -> np.ndarray:
        """Vectorized max-|correlation| over lags for every site."""
        self._need(2)
        t = self._totals()
        n = t.n
        name = self._base_name()
        means = self.mean(name)
        var = self.var(name) * (n - 1) / n
        best = np.zeros(self.n_sites)
        for j, lag in enumerate(self.lags):
            cov = t.pair[j] / n - means * np.roll(means, -lag)
            denom = np.sqrt(var * np.roll(var, -lag))
            with np.errstate(invalid="ignore", divide="ignore"):
                corr = np.where(denom > 0, cov / denom, np.nan)
            best = np.fmax(best, np.abs(corr))
        return best


class TimeAverageAccumulator:
    """Across-replica statistics of per-replica path-time averages."""

    def __init__(self, n_sites: int, names):
        self.n_sites = n_sites
        self.names = tuple(names)
        self._blocks = []
        self._cache = None

    def add(self, replica_id: int, profiles: dict):
        """Fold one replica's normalized time-average profile per observable."""
        blk = self._blocks[-1] if self._blocks and self._blocks[-1][1] == replica_id else None
        if blk is None:
            blk = [replica_id, replica_id, 0,
                   {k: np.zeros(self.n_sites) for k in self.names},
                   {k: np.zeros(self.n_sites) for k in self.names}]
            self._blocks.append(blk)
        for k in self.names:
            p = profiles[k]
            blk[3][k] += p
            blk[4][k] += p * p
        blk[1] = replica_id + 1
        blk[2] += 1
        self._cache = None

    def extend(self, other: "TimeAverageAccumulator"):
        if other.n_sites != self.n_sites or other.names != self.names:
            raise ValueError("accumulator layouts differ; refusing to merge")
        self._blocks.extend(other._blocks)
        self._cache = None
        return self

    @classmethod
    def merge(cls, accs) -> "TimeAverageAccumulator":
        accs = list(accs)
        out = cls(accs[0].n_sites, accs[0].names)
        for a in accs:
            out.extend(a)
        return out

    def _totals(self):
        if self._cache is None:
            blocks = sorted(self._blocks, key=lambda b: b[0])
            n = 0
            sums = {k: np.zeros(self.n_sites) for k in self.names}
            sumsqs = {k: np.zeros(self.n_sites) for k in self.names}
            for b in blocks:
                n += b[2]
                for k in self.names:
                    sums[k] += b[3][k]
                    sumsqs[k] += b[4][k]
            self._cache = (n, sums, sumsqs)
        return self._cache

    @property
    def n(self) -> int:
        return self._totals()[0]

    def mean(self, name: str) -> np.ndarray:
        n, sums, _ = self._totals()
        if n < 1:
            raise InsufficientDataError("no replicas accumulated")
        return sums[name] / n

    def std_error(self, name: str) -> np.ndarray:
        n, sums, sumsqs = self._totals()
        if n < 2:
            raise InsufficientDataError("need at least 2 replicas for a standard error")
        v = np.maximum((sumsqs[name] - sums[name] ** 2 / n) / (n - 1), 0.0)
        return np.sqrt(v / n)

    def expectation(self, site: int, name: str) -> float:
        return float(self.mean(name)[site])


@dataclass(frozen=True)
class EmpiricalPMF:
    """Counts over a contiguous integer support window."""

    lo: int
    counts: np.ndarray

    @classmethod
    def from_samples(cls, values) -> "EmpiricalPMF":
        values = np.asarray(values, dtype=np.int64)
        if values.size == 0:
            raise InsufficientDataError("cannot build a pmf from zero samples")
        lo, hi = int(values.min()), int(values.max())
        counts = np.bincount(values - lo, minlength=hi - lo + 1)
        return cls(lo, counts)

    @classmethod
    def from_counts(cls, lo: int, counts) -> "EmpiricalPMF":
        counts = np.asarray(counts, dtype=np.int64)
        if counts.sum() == 0:
            raise InsufficientDataError("cannot build a pmf from zero samples")
        return cls(int(lo), counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.lo, self.lo + self.counts.size)

    @property
    def probs(self) -> np.ndarray:
        return self.counts / self.total


def kl_divergence(p: EmpiricalPMF, q) -> float:
    """Plug-in relative entropy sum p log(p/q) over the observed support.

    `q` maps an integer to its model probability (callable or mapping).
    Zero-count bins contribute nothing; a zero model probability under an
    observed value yields +inf with a diagnostic warning.
    """
    lookup = q if callable(q) else (lambda n: q.get(n, 0.0))
    total = p.total
    kl = 0.0
    for n, c in zip(p.support, p.counts):
        if c == 0:
            continue
        qn = float(lookup(int(n)))
        if qn <= 0.0:
            warnings.warn(f"model pmf vanishes at observed value {n}; divergence is infinite")

            return math.inf
        pn = c / total
        kl += pn * math.log(pn / qn)
    return max(kl, 0.0)


def kl_plugin_bias(q_probs: np.ndarray, n_samples: int) -> float:
    """First-order bias of the plug-in divergence: (effective support - 1) / (2n).

    Cells the sample cannot resolve (probability below 1/n) do not count
    toward the effective support.
    """
    m = int(np.sum(np.asarray(q_probs) >= 1.0 / n_samples))
    return max(m - 1, 0) / (2.0 * n_samples)
