"""Hot numeric loops, each with a numba and a vectorized numpy backend.

The numba backend is used when numba imports cleanly, unless the
environment variable ``DIEBURST_DISABLE_NUMBA`` is set to a truthy value
("1", "true", "yes", "on"), in which case the pure-numpy implementations
run instead. Both backends implement identical semantics; see
``benchmarks/bench_kernels.py`` for a throughput comparison.

Kernels:

- ray_hits_box:    slab test of many rays against one box (forward hits)
- scan_triggers:   threshold/dead-time/hysteresis state machine on a trace
- superpose_bursts: sum of one-sided exponential decays on a sample grid

Exponential tails in ``superpose_bursts`` are truncated 50 recovery
constants after onset (relative weight exp(-50) ~ 2e-22).
"""

from __future__ import annotations

import math
import os

import numpy as np

BURST_TAIL_CUTOFF = 50.0

_TRUTHY = {"1", "true", "yes", "on"}


def numba_disabled_by_env() -> bool:
    return os.environ.get("DIEBURST_DISABLE_NUMBA", "").strip().lower() in _TRUTHY


def numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USE_NUMBA = numba_available() and not numba_disabled_by_env()


def active_backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# ray/box slab test


def ray_hits_box_numpy(origins, directions, box_min, box_max, forward_only=True):
    """Boolean mask of rays whose supporting line crosses the box.

    ``forward_only`` additionally requires the exit parameter to be >= 0,
    i.e. at least part of the crossing lies ahead of the origin.
    """
    o = np.ascontiguousarray(origins, dtype=np.float64)
    d = np.ascontiguousarray(directions, dtype=np.float64)
    b0 = np.asarray(box_min, dtype=np.float64)
    b1 = np.asarray(box_max, dtype=np.float64)
    safe = np.where(d != 0.0, d, 1.0)
    inv = 1.0 / safe
    t1 = (b0 - o) * inv
    t2 = (b1 - o) * inv
    lo = np.minimum(t1, t2)
    hi = np.maximum(t1, t2)
    par = d == 0.0
    inside = (o >= b0) & (o <= b1)
    lo = np.where(par, np.where(inside, -np.inf, np.inf), lo)
    hi = np.where(par, np.where(inside, np.inf, -np.inf), hi)
    t_lo = lo.max(axis=1)
    t_hi = hi.min(axis=1)
    hit = t_lo <= t_hi
    if forward_only:
        hit &= t_hi >= 0.0
    return hit


# ---------------------------------------------------------------------------
# trigger state machine
#
# Contract shared by both backends:
#   * a detection opens at the first sample with dist > high;
#   * a later sample with dist > high merges into the open detection when it
#     follows the previous above-threshold sample by at most
#     max(dead_samples, 1) samples, otherwise it opens a new detection;
#   * peak is the maximum of dist over [start, last_above];
#   * recovery is the first sample after last_above with dist < low
#     (-1 when the trace ends first).


def scan_triggers_numpy(dist, high, low, dead_samples):
    dist = np.ascontiguousarray(dist, dtype=np.float64)
    idx = np.flatnonzero(dist > high)
    if idx.size == 0:
        e_i = np.empty(0, dtype=np.int64)
        return e_i, e_i.copy(), e_i.copy(), np.empty(0, dtype=np.float64)
    gap = max(int(dead_samples), 1)
    split = np.flatnonzero(np.diff(idx) > gap)
    starts = idx[np.concatenate(([0], split + 1))].astype(np.int64)
    lasts = idx[np.concatenate((split, [idx.size - 1]))].astype(np.int64)
    n_det = starts.size
    peaks = np.empty(n_det, dtype=np.float64)
    for j in range(n_det):
        peaks[j] = dist[starts[j] : lasts[j] + 1].max()
    below = np.flatnonzero(dist < low)
    if below.size:
        pos = np.searchsorted(below, lasts + 1)
        recovered = np.where(pos < below.size, below[np.minimum(pos, below.size - 1)], -1)
    else:
        recovered = np.full(n_det, -1)
    return starts, lasts, recovered.astype(np.int64), peaks


# ---------------------------------------------------------------------------
# burst superposition


def superpose_bursts_numpy(n, dt, t0s, amps, taus):
    """Sum of amp*exp(-(t - t0)/tau) for samples t_k = k*dt with t_k >= t0."""
    shift = np.zeros(int(n), dtype=np.float64)
    n = int(n)
    t0s = np.atleast_1d(np.asarray(t0s, dtype=np.float64))
    amps = np.atleast_1d(np.asarray(amps, dtype=np.float64))
    taus = np.atleast_1d(np.asarray(taus, dtype=np.float64))
    t = np.arange(n, dtype=np.float64) * dt
    for t0, a, tau in zip(t0s, amps, taus):
        # relative fuzz: t0/dt may land a few ulps above an exact grid index
        i0 = int(math.ceil((t0 / dt) * (1.0 - 1e-12)))
        if i0 < 0:
            i0 = 0
        if i0 >= n:
            continue
        i1 = int(math.ceil((t0 + BURST_TAIL_CUTOFF * tau) / dt))
        if i1 > n:
            i1 = n
        shift[i0:i1] += a * np.exp(-(t[i0:i1] - t0) / tau)
    return shift


# ---------------------------------------------------------------------------
# numba variants (compiled lazily on first call)

if numba_available():
    from numba import njit

    @njit(cache=True)
    def _ray_hits_box_numba(origins, directions, box_min, box_max, forward_only):
        n = origins.shape[0]
        out = np.zeros(n, dtype=np.bool_)
        for i in range(n):
            t_lo = -np.inf
            t_hi = np.inf
            ok = True
            for k in range(3):
                d = directions[i, k]
                o = origins[i, k]
                if d == 0.0:
                    if o < box_min[k] or o > box_max[k]:
                        ok = False
                        break
                else:
                    inv = 1.0 / d
                    t1 = (box_min[k] - o) * inv
                    t2 = (box_max[k] - o) * inv
                    if t1 > t2:
                        t1, t2 = t2, t1
                    if t1 > t_lo:
                        t_lo = t1
                    if t2 < t_hi:
                        t_hi = t2
            if ok and t_lo <= t_hi and ((not forward_only) or t_hi >= 0.0):
                out[i] = True
        return out

    @njit(cache=True)
    def _scan_triggers_numba(dist, high, low, dead_samples):
        n = dist.size
        gap = dead_samples if dead_samples > 1 else 1
        count = 0
        last_above = -gap - 1
        for i in range(n):
            if dist[i] > high:
                if i - last_above > gap:
                    count += 1
                last_above = i
        starts = np.empty(count, dtype=np.int64)
        lasts = np.empty(count, dtype=np.int64)
        recovered = np.empty(count, dtype=np.int64)
        peaks = np.empty(count, dtype=np.float64)
        j = -1
        last_above = -gap - 1
        for i in range(n):
            if dist[i] > high:
                if i - last_above > gap:
                    j += 1
                    starts[j] = i
                last_above = i
                lasts[j] = i
        for j in range(count):
            m = dist[starts[j]]
            for i in range(starts[j] + 1, lasts[j] + 1):
                if dist[i] > m:
                    m = dist[i]
            peaks[j] = m
            rec = -1
            for i in range(lasts[j] + 1, n):
                if dist[i] < low:
                    rec = i
                    break
            recovered[j] = rec
        return starts, lasts, recovered, peaks

    @njit(cache=True)
    def _superpose_bursts_numba(n, dt, t0s, amps, taus, cutoff):
        shift = np.zeros(n, dtype=np.float64)
        for e in range(t0s.size):
            t0 = t0s[e]
            a = amps[e]
            tau = taus[e]
            i0 = int(math.ceil((t0 / dt) * (1.0 - 1e-12)))
            if i0 < 0:
                i0 = 0
            i1 = int(math.ceil((t0 + cutoff * tau) / dt))
            if i1 > n:
                i1 = n
            for i in range(i0, i1):
                shift[i] += a * math.exp(-(i * dt - t0) / tau)
        return shift

    def ray_hits_box_numba(origins, directions, box_min, box_max, forward_only=True):
        return _ray_hits_box_numba(
            np.ascontiguousarray(origins, dtype=np.float64),
            np.ascontiguousarray(directions, dtype=np.float64),
            np.ascontiguousarray(box_min, dtype=np.float64),
            np.ascontiguousarray(box_max, dtype=np.float64),
            bool(forward_only),
        )

    def scan_triggers_numba(dist, high, low, dead_samples):
        return _scan_triggers_numba(
            np.ascontiguousarray(dist, dtype=np.float64),
            float(high),
            float(low),
            int(dead_samples),
        )

    def superpose_bursts_numba(n, dt, t0s, amps, taus):
        return _superpose_bursts_numba(
            int(n),
            float(dt),
            np.atleast_1d(np.asarray(t0s, dtype=np.float64)),
            np.atleast_1d(np.asarray(amps, dtype=np.float64)),
            np.atleast_1d(np.asarray(taus, dtype=np.float64)),
            BURST_TAIL_CUTOFF,
        )


# ---------------------------------------------------------------------------
# dispatchers


def ray_hits_box(origins, directions, box_min, box_max, forward_only=True):
    if USE_NUMBA:
        return ray_hits_box_numba(origins, directions, box_min, box_max, forward_only)
    return ray_hits_box_numpy(origins, directions, box_min, box_max, forward_only)


def scan_triggers(dist, high, low, dead_samples):
    if USE_NUMBA:
        return scan_triggers_numba(dist, high, low, dead_samples)
    return scan_triggers_numpy(dist, high, low, dead_samples)


def superpose_bursts(n, dt, t0s, amps, taus):
    if USE_NUMBA:
        return superpose_bursts_numba(n, dt, t0s, amps, taus)
    return superpose_bursts_numpy(n, dt, t0s, amps, taus)


def warm_up():
    """Trigger JIT compilation of all kernels (no-op on the numpy backend)."""
    if not USE_NUMBA:
        return
    o = np.zeros((2, 3))
    d = np.tile(np.array([1.0, 0.0, 0.0]), (2, 1))
    ray_hits_box_numba(o, d, np.array([1.0, -1.0, -1.0]), np.array([2.0, 1.0, 1.0]))
    scan_triggers_numba(np.array([0.0, 2.0, 0.0]), 1.0, 0.5, 2)
    superpose_bursts_numba(4, 0.25, [0.5], [1.0], [1.0])
