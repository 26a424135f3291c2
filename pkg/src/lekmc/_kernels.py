"""Compiled event loops for the jump processes.

Each runner advances one replica from t_start to t_end (microscopic time),
drawing exponential waiting times from the total rate and picking events by
prefix-sum descent over a binary sum tree. Only the rates touched by an event
are recomputed, with O(log N) tree updates per touched site.

Per event the stream is consumed in a fixed order (one uniform for the
waiting time, then one for the event choice), and internal tree nodes are
always recomputed as left + right, so a pure-Python replay of the same
algorithm reproduces results bit for bit. The curvature runner can also
accumulate exact per-site path integrals of (w, w^2, rate) over its time
span; sites are settled lazily, each waiting interval contributing
value * dt for the state that held during it.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap


STATUS_REACHED = 0
STATUS_BUDGET = 1
STATUS_FROZEN = 2
STATUS_OVERFLOW = 3

LOG_RATE_MAX = 700.0
DEFAULT_RESYNC_EVERY = 1 << 20


@njit(cache=True)
def _tree_build(tree, cap):
    for node in range(cap - 1, 0, -1):
        tree[node] = tree[2 * node] + tree[2 * node + 1]


@njit(cache=True)
def _tree_set(tree, cap, leaf, w):
    node = cap + leaf
    tree[node] = w
    node >>= 1
    while node >= 1:
        tree[node] = tree[2 * node] + tree[2 * node + 1]
        node >>= 1


@njit(cache=True)
def _tree_find(tree, cap, x):
    node = 1
    while node < cap:
        node *= 2
        if x >= tree[node]:
            x -= tree[node]
            node += 1
    leaf = node - cap
    while tree[cap + leaf] == 0.0 and leaf > 0:
        leaf -= 1
    return leaf


@njit(cache=True)
def run_curvature(w, K, t_start, t_end, rng, budget, resync_every,
                  integrate, acc_w, acc_w2, acc_r):
    """Arrhenius curvature chain: events (site, dir) both at rate exp(-2K-2K w_site)."""
    n = w.size
    cap = 1
    while cap < 2 * n:
        cap *= 2
    tree = np.zeros(2 * cap)
    for i in range(n):
        lr = -2.0 * K * (1.0 + w[i])
        if lr > LOG_RATE_MAX:
            return t_start, 0, STATUS_OVERFLOW
        r = math.exp(lr)
        tree[cap + 2 * i] = r
        tree[cap + 2 * i + 1] = r
    _tree_build(tree, cap)
    last = np.full(n, t_start)
    t = t_start
    events = 0
    since_resync = 0
    status = STATUS_REACHED
    while True:
        total = tree[1]
        if total <= 0.0:
            t = t_end
            status = STATUS_FROZEN
            break
        dt = -math.log(1.0 - rng.random()) / total
        if t + dt >= t_end:
            t = t_end
            break
        if events >= budget:
            status = STATUS_BUDGET
            break
        t = t + dt
        leaf = _tree_find(tree, cap, rng.random() * total)
        site = leaf >> 1
        if leaf & 1 == 0:
            lo = site - 1
        else:
            lo = site - 2
        if integrate:
            for k in range(4):
                s = (lo + k) % n
                dts = t - last[s]
                wv = float(w[s])
                acc_w[s] += dts * wv
                acc_w2[s] += dts * wv * wv
                acc_r[s] += dts * tree[cap + 2 * s]
                last[s] = t
        if leaf & 1 == 0:
            w[(site - 1) % n] += -1
            w[site] += 3
            w[(site + 1) % n] += -3
            w[(site + 2) % n] += 1
        else:
            w[(site - 2) % n] += 1
            w[(site - 1) % n] += -3
            w[site] += 3
            w[(site + 1) % n] += -1
        for k in range(4):
            s = (lo + k) % n
            lr = -2.0 * K * (1.0 + w[s])
            if lr > LOG_RATE_MAX:
                status = STATUS_OVERFLOW
                break
            r = math.exp(lr)
            _tree_set(tree, cap, 2 * s, r)
            _tree_set(tree, cap, 2 * s + 1, r)
        if status == STATUS_OVERFLOW:
            break
        events += 1
        since_resync += 1
        if since_resync >= resync_every:
            _tree_build(tree, cap)
            since_resync = 0
    if integrate:
        for s in range(n):
            dts = t - last[s]
            if dts > 0.0:
                wv = float(w[s])
                acc_w[s] += dts * wv
                acc_w2[s] += dts * wv * wv
                acc_r[s] += dts * tree[cap + 2 * s]
    return t, events, status


@njit(cache=True, inline="always")
def _zr_rate(k, g_kind):
    if k <= 0:
        return 0.0
    if g_kind == 1:
        return float(k)
    return k + k ** 0.25


@njit(cache=True)
def run_occupancy(v, g_kind, t_start, t_end, rng, budget, resync_every):
    """Zero-range chain: a particle leaves site i at rate g(v_i), to i-1 or i+1 evenly."""
    n = v.size
    cap = 1
    while cap < 2 * n:
        cap *= 2
    tree = np.zeros(2 * cap)
    for i in range(n):
        half = 0.5 * _zr_rate(v[i], g_kind)
        tree[cap + 2 * i] = half
        tree[cap + 2 * i + 1] = half
    _tree_build(tree, cap)
    t = t_start
    events = 0
    since_resync = 0
    status = STATUS_REACHED
    while True:
        total = tree[1]
        if total <= 0.0:
            t = t_end
            status = STATUS_FROZEN
            break
        dt = -math.log(1.0 - rng.random()) / total
        if t + dt >= t_end:
            t = t_end
            break
        if events >= budget:
            status = STATUS_BUDGET
            break
        t = t + dt
        leaf = _tree_find(tree, cap, rng.random() * total)
        site = leaf >> 1
        if leaf & 1 == 0:
            dest = (site + 1) % n
        else:
            dest = (site - 1) % n
        v[site] -= 1
        v[dest] += 1
        for s in (site, dest):
            half = 0.5 * _zr_rate(v[s], g_kind)
            _tree_set(tree, cap, 2 * s, half)
            _tree_set(tree, cap, 2 * s + 1, half)
        events += 1
        since_resync += 1
        if since_resync >= resync_every:
            _tree_build(tree, cap)
            since_resync = 0
    return t, events, status


@njit(cache=True)
def run_exclusion(v, t_start, t_end, rng, budget, resync_every):
    """Symmetric simple exclusion: a particle hops to an empty neighbor at rate 1."""
    n = v.size
    cap = 1
    while cap < 2 * n:
        cap *= 2
    tree = np.zeros(2 * cap)
    for i in range(n):
        if v[i] == 1 and v[(i + 1) % n] == 0:
            tree[cap + 2 * i] = 1.0
        if v[i] == 1 and v[(i - 1) % n] == 0:
            tree[cap + 2 * i + 1] = 1.0
    _tree_build(tree, cap)
    t = t_start
    events = 0
    since_resync = 0
    status = STATUS_REACHED
    while True:
        total = tree[1]
        if total <= 0.0:
            t = t_end
            status = STATUS_FROZEN
            break
        dt = -math.log(1.0 - rng.random()) / total
        if t + dt >= t_end:
            t = t_end
            break
        if events >= budget:
            status = STATUS_BUDGET
            break
        t = t + dt
        leaf = _tree_find(tree, cap, rng.random() * total)
        site = leaf >> 1
        if leaf & 1 == 0:
            dest = (site + 1) % n
        else:
            dest = (site - 1) % n
        v[site] = 0
        v[dest] = 1
        for off in (-1, 0, 1):
            for base in (site, dest):
                s = (base + off) % n
                right = 1.0 if v[s] == 1 and v[(s + 1) % n] == 0 else 0.0
                left = 1.0 if v[s] == 1 and v[(s - 1) % n] == 0 else 0.0
                _tree_set(tree, cap, 2 * s, right)
                _tree_set(tree, cap, 2 * s + 1, left)
        events += 1
        since_resync += 1
        if since_resync >= resync_every:
            _tree_build(tree, cap)
            since_resync = 0
    return t, events, status
