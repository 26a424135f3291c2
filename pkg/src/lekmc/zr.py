"""Product-measure marginal family for zero-range processes.

For a rate function g with g(0) = 0, the invariant single-site laws are
nu[phi](n) = phi^n / (g(n)! Z(phi)) with g(n)! = g(1) g(2) ... g(n) and phi a
fugacity parameter. The mean map v(phi) is strictly increasing, so the family
can be re-indexed by its mean, which is the form used for observable
prediction curves v -> f_hat(v).

Weights are accumulated by the running ratio phi / g(n) to avoid factorial
overflow; the truncation cap adapts until the tail is negligible.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


class TruncationError(RuntimeError):
    """The series cap was reached before the tail became negligible."""


class DomainError(ValueError):
    """Requested value is outside the achievable range of the family."""


def g_root4(k: float) -> float:
    """Default zero-range rate: g(k) = k + k^(1/4). Linear growth, g(0) = 0."""
    return k + k ** 0.25


def g_linear(k: float) -> float:
    """Independent-particle rate g(k) = k; the family is then exactly Poisson."""
    return float(k)


class ZeroRangeFamily:
    """Fugacity-indexed single-site law family for a zero-range rate function."""

    def __init__(
        self,
        g: Callable[[int], float] = g_root4,
        tail_rtol: float = 1e-18,
        max_terms: int = 200_000,
    ):
        self.g = g
        self.tail_rtol = tail_rtol
        self.max_terms = max_terms
        if g(0) != 0.0:
            raise ValueError("zero-range rate must satisfy g(0) = 0")

    def weights(self, phi: float) -> np.ndarray:
        """Unnormalized weights phi^n / g(n)!, n = 0, 1, ..., adaptively truncated."""
        if phi < 0:
            raise DomainError(f"fugacity must be nonnegative, got {phi}")
        if phi == 0.0:
            return np.ones(1)
        out = [1.0]
        total = 1.0
        n = 0
        while True:
            n += 1
            if n > self.max_terms:
                raise TruncationError(
                    f"series for phi={phi} did not converge within {self.max_terms} terms; "
                    f"raise max_terms (suggested: {2 * self.max_terms})"
                )
            ratio = phi / self.g(n)
            term = out[-1] * ratio
            out.append(term)
            total += term
            # geometric tail once the ratio is safely below 1
            if n >= 8 * (1.0 + phi) and ratio < 0.5 and term < self.tail_rtol * total:
                break
        return np.array(out)

    def norm(self, phi: float) -> float:
        return float(self.weights(phi).sum())

    def pmf(self, phi: float) -> tuple[np.ndarray, np.ndarray]:
        """Support 0..n_max and probabilities of nu[phi]."""
        w = self.weights(phi)
        return np.arange(w.size), w / w.sum()

    def mean(self, phi: float) -> float:
        """First moment v(phi); strictly increasing in phi."""
        ns, p = self.pmf(phi)
        return float(np.dot(ns, p))

    def phi_from_mean(self, v: float, tol: float = 1e-12, max_iter: int = 200) -> float:
        """Invert the mean map by bisection with a doubling bracket."""
        if v < 0:
            raise DomainError(f"mean occupancy must be nonnegative, got {v}")
        if v == 0.0:
            return 0.0
        hi = max(1.0, 2.0 * v)
        for _ in range(80):
            if self.mean(hi) >= v:
                break
            hi *= 2.0
        else:
            raise DomainError(f"mean {v} is outside the achievable range")
        lo = 0.0
        for _ in range(max_iter):
            mid = 0.5 * (lo + hi)
            m = self.mean(mid)
            if abs(m - v) < tol:
                return mid
            if m < v:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def expect_phi(self, phi: float, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """Expectation of f under nu[phi]."""
        ns, p = self.pmf(phi)
        vals = np.asarray(f(ns.astype(np.float64)), dtype=np.float64)
        contrib = vals * p
        if not np.all(np.isfinite(contrib)):
            raise DomainError("observable is not finite against nu[phi]")
        total = float(contrib.sum())
        if abs(contrib[-1]) > 1e-12 * max(abs(total), 1e-300):
            raise DomainError("observable grows too fast to be summable against nu[phi]")
        return total

    def expect(self, v: float, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """Observable prediction curve: expectation of f at mean occupancy v."""
        return self.expect_phi(self.phi_from_mean(v), f)

    def f_hat_table(
        self, vs: np.ndarray, f: Callable[[np.ndarray], np.ndarray]
    ) -> np.ndarray:
        """Rows (v, f_hat(v)) for CSV export."""
        vs = np.asarray(vs, dtype=np.float64)
        return np.column_stack([vs, [self.expect(v, f) for v in vs]])
