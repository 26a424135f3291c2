"""Exact event-driven simulation of continuous-time lattice jump processes.

One Trajectory owns one replica: its integer state, a sum tree over the 2N
event weights, a seeded random stream, and the running microscopic clock.
step() advances a single event (waiting time exponential in the total rate,
event chosen proportional to its weight); run_until() advances the clock to a
macroscopic target time via the compiled bulk runner, optionally accumulating
exact per-site path integrals over the span it covers.

Determinism contract: a given (master seed, replica id, configuration) yields
a bit-identical event sequence and final state, whether the compiled or the
pure-Python loop executes the events and regardless of how replicas are
distributed over workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .processes import DIR_RIGHT, ProcessSpec
from .sumtree import SumTree

DEFAULT_EVENT_BUDGET = 10 ** 9


class FrozenStateError(RuntimeError):
    """All rates vanished; no further event can occur."""


class RateOverflowError(RuntimeError):
    """A jump rate left the representable range (configuration out of regime)."""


class EventBudgetExceeded(RuntimeError):
    """The per-replica event budget ran out before the target time."""

    def __init__(self, msg, t_micro, events):
        super().__init__(msg)
        self.t_micro = t_micro
        self.events = events


def replica_rng(master_seed: int, replica_id: int) -> np.random.Generator:
    """Independent reproducible stream for one replica, keyed by (seed, id)."""
    return np.random.default_rng([int(master_seed), int(replica_id)])


@dataclass
class SpanIntegrals:
    """Exact per-site path integrals of the curvature observables over one span.

    integral[name][i] accumulates f(state_i(s)) ds over the microscopic span;
    the integral of the constant 1 equals the span length by construction.
    """

    t_lo: float
    t_hi: float
    w: np.ndarray
    w2: np.ndarray
    rate: np.ndarray

    @classmethod
    def empty(cls, n_sites: int, t_lo: float, t_hi: float) -> "SpanIntegrals":
        z = lambda: np.zeros(n_sites)
        return cls(t_lo, t_hi, z(), z(), z())

    @property
    def length(self) -> float:
        return self.t_hi - self.t_lo

    def as_dict(self) -> dict:
        return {"w": self.w, "w2": self.w2, "rate": self.rate}

    def add(self, other: "SpanIntegrals") -> "SpanIntegrals":
        """Concatenate adjacent spans (integrals are additive over time)."""
        if not math.isclose(self.t_hi, other.t_lo, rel_tol=0, abs_tol=1e-9 * max(1.0, abs(self.t_hi))):
            raise ValueError("spans are not adjacent")
        return SpanIntegrals(self.t_lo, other.t_hi,
                             self.w + other.w, self.w2 + other.w2, self.rate + other.rate)


class Trajectory:
    def __init__(self, process: ProcessSpec, state: np.ndarray,
                 rng: np.random.Generator, budget: int = DEFAULT_EVENT_BUDGET):
        process.validate_state(np.asarray(state, dtype=np.int64))
        self.process = process
        self.state = np.array(state, dtype=np.int64, copy=True)
        self.rng = rng
        self.budget = int(budget)
        self.t_micro = 0.0
        self.event_count = 0
        self._tree: SumTree | None = None

    @property
    def n_sites(self) -> int:
        return self.state.size

    @property
    def t_macro(self) -> float:
        return self.t_micro / self.process.time_scale(self.n_sites)

    @property
    def tree(self) -> SumTree:
        if self._tree is None:
            self._tree = SumTree(self.process.rate_leaves(self.state))
        return self._tree

    def _invalidate_tree(self):
        self._tree = None

    # -- single-event op -------------------------------------------------

    def step(self) -> tuple[int, str, float]:
        """Advance one event; return (site, direction, waiting time)."""
        tree = self.tree
        total = tree.total
        if total <= 0.0:
            raise FrozenStateError("total rate is zero; state is frozen")
        if self.event_count >= self.budget:
            raise EventBudgetExceeded("event budget exhausted", self.t_micro, self.event_count)
        dt = -math.log(1.0 - self.rng.random()) / total
        leaf = tree.find(self.rng.random() * total)
        site, direction = leaf >> 1, leaf & 1
        self.t_micro += dt
        touched = self.process.apply_event(self.state, site, direction)
        for s in touched:
            right, left = self.process.site_rates(self.state, s)
            tree.set(2 * s, right)
            tree.set(2 * s + 1, left)
        self.event_count += 1
        return site, ("right" if direction == DIR_RIGHT else "left"), dt

    # -- bulk run ---------------------------------------------------------

    def run_until(self, t_macro: float, integrals: SpanIntegrals | None = None,
                  use_kernel: bool = True, resync_every: int = _kernels.DEFAULT_RESYNC_EVERY):
        """Advance the clock to N^alpha * t_macro, optionally integrating observables.

        When integrals is given it must span exactly [current time, target
        time]; each waiting interval contributes f(state) * dt to it. Raises
        EventBudgetExceeded with the progress made if the budget runs out.
        """
        t_target = t_macro * self.process.time_scale(self.n_sites)
        if t_target < self.t_micro - 1e-9 * max(1.0, abs(self.t_micro)):
            raise ValueError(f"target time {t_target} is before current time {self.t_micro}")
        if t_target <= self.t_micro:
            return self
        if integrals is not None:
            if integrals.t_lo != self.t_micro or integrals.t_hi != t_target:
                raise ValueError("integral span must match [current, target] microscopic times")
            if self.process.kind != "arrhenius_crystal":
                raise ValueError("path integrals are wired for the curvature process only")
        runner = self._run_kernel if (use_kernel and _kernels.HAVE_NUMBA) else self._run_python
        t, events, status = runner(t_target, integrals, resync_every)
        self.t_micro = t
        self.event_count += events
        self._invalidate_tree()
        if status == _kernels.STATUS_OVERFLOW:
            raise RateOverflowError(
                f"jump rate overflow at t_micro={t:.6g} after {self.event_count} events"
            )
        if status == _kernels.STATUS_BUDGET:
            raise EventBudgetExceeded(
                f"budget of {self.budget} events exhausted at t_micro={t:.6g}",
                t, self.event_count,
            )
        # STATUS_FROZEN is a clean halt: the state cannot change any more, so
        # the clock simply jumps to the horizon.
        return self

    def _run_kernel(self, t_target, integrals, resync_every):
        budget_left = self.budget - self.event_count
        kind = self.process.kind
        if kind == "arrhenius_crystal":
            if integrals is None:
                dummy = np.zeros(0)
                return _kernels.run_curvature(
                    self.state, self.process.params.K, self.t_micro, t_target,
                    self.rng, budget_left, resync_every, False, dummy, dummy, dummy)
            return _kernels.run_curvature(
                self.state, self.process.params.K, self.t_micro, t_target,
                self.rng, budget_left, resync_every, True,
                integrals.w, integrals.w2, integrals.rate)
        if kind == "zero_range":
            return _kernels.run_occupancy(
                self.state, self.process.g_kind, self.t_micro, t_target,
                self.rng, budget_left, resync_every)
        return _kernels.run_exclusion(
            self.state, self.t_micro, t_target, self.rng, budget_left, resync_every)

    def _run_python(self, t_target, integrals, resync_every):
        """Reference loop, draw for draw identical to the compiled runner."""
        state = self.state
        n = state.size
        proc = self.process
        rng = self.rng
        tree = SumTree(proc.rate_leaves(state))
        budget_left = self.budget - self.event_count
        t = self.t_micro
        events = 0
        since_resync = 0
        status = _kernels.STATUS_REACHED
        integrate = integrals is not None
        if integrate:
            last = np.full(n, t)

        def settle(sites, now):
            for s in sites:
                dts = now - last[s]
                wv = float(state[s])
                integrals.w[s] += dts * wv
                integrals.w2[s] += dts * wv * wv
                integrals.rate[s] += dts * tree.get(2 * s)
                last[s] = now

        while True:
            total = tree.total
            if total <= 0.0:
                t = t_target
                status = _kernels.STATUS_FROZEN
                break
            dt = -math.log(1.0 - rng.random()) / total
            if t + dt >= t_target:
                t = t_target
                break
            if events >= budget_left:
                status = _kernels.STATUS_BUDGET
                break
            t = t + dt
            leaf = tree.find(rng.random() * total)
            site, direction = leaf >> 1, leaf & 1
            if integrate:
                lo = site - 1 if direction == DIR_RIGHT else site - 2
                settle([(lo + k) % n for k in range(4)], t)
            touched = proc.apply_event(state, site, direction)
            try:
                for s in touched:
                    right, left = proc.site_rates(state, s)
                    tree.set(2 * s, right)
                    tree.set(2 * s + 1, left)
            except Exception:
                status = _kernels.STATUS_OVERFLOW
                break
            events += 1
            since_resync += 1
            if since_resync >= resync_every:
                tree.resync()
                since_resync = 0
        if integrate:
            settle(range(n), t)
        return t, events, status


def new_trajectory(process: ProcessSpec, state: np.ndarray, master_seed: int,
                   replica_id: int, budget: int = DEFAULT_EVENT_BUDGET) -> Trajectory:
    return Trajectory(process, state, replica_rng(master_seed, replica_id), budget)
