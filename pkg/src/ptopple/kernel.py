"""Jitted stabilisation engine.

Arena layout: index ``i`` holds site ``i - (n + 1)``, so the arena covers
``[-n-1, n+1]`` and indices ``0`` and ``2n+2`` are tripwire cells that must
never topple.  Instruction bits follow :mod:`ptopple.rng` exactly.
"""

import numpy as np
from numba import njit

OK = 0
ARENA_OVERFLOW = 1
NO_TERMINATION = 2
ADJACENT_HOLES = 3
BAD_FINAL_STATE = 4
OBSERVABLE_MISMATCH = 5

POLICY_LEFTMOST = 0
POLICY_FIFO = 1
POLICY_RANDOM = 2

_U32 = np.uint64(0xFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_SITE_SALT = np.uint64(0xD1B54A32D192ED03)


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def site_keys(seed, n):
    size = 2 * n + 3
    keys = np.empty(size, dtype=np.uint64)
    base = mix64(seed ^ _SITE_SALT)
    for i in range(size):
        site = np.int64(i - (n + 1))
        keys[i] = mix64(base + np.uint64(site) * _GOLDEN)
    return keys


@njit(cache=True)
def instruction_bits(key, index, thr):
    """Return ``(send_left, send_right)`` for stack entry ``index`` under ``key``."""
    w = mix64(key + np.uint64(index + 1) * _GOLDEN)
    return (w >> np.uint64(32)) < thr, (w & _U32) < thr


@njit(cache=True)
def _topple_at(c, n, keys, counts, odo, thr, state):
    # state = [K, M, S]; returns ADJACENT_HOLES if a pair of toppled vacancies appears
    idx = odo[c]
    odo[c] = idx + 1
    state[0] += 1
    w = mix64(keys[c] + np.uint64(idx + 1) * _GOLDEN)
    v = c - (n + 1)
    left = (w >> np.uint64(32)) < thr
    right = (w & _U32) < thr
    if left:
        counts[c] -= 1
        counts[c - 1] += 1
        state[1] -= 1
        state[2] += 1 - 2 * v
    if right:
        counts[c] -= 1
        counts[c + 1] += 1
        state[1] += 1
        state[2] += 1 + 2 * v
    if counts[c] == 0:
        if (counts[c - 1] == 0 and odo[c - 1] > 0) or (counts[c + 1] == 0 and odo[c + 1] > 0):
            return ADJACENT_HOLES
    return OK


@njit(cache=True)
def stabilize_leftmost(n, seed, thr, cap, counts, odo, state):
    """Stabilise ``n`` particles at the origin, always toppling the leftmost unstable site.

    ``counts`` and ``odo`` are zeroed ``2n+3`` arrays filled in place; ``state``
    receives ``[K, M, S]`` accumulated incrementally.  Returns a status code.
    """
    size = 2 * n + 3
    keys = site_keys(seed, n)
    counts[n + 1] = n
    c = n + 1
    k = np.int64(0)
    m = np.int64(0)
    s = np.int64(0)
    status = OK
    while True:
        # sites left of the cursor are always stable, and a toppling at c can
        # only destabilise c - 1 to its left
        while c < size and counts[c] < 2:
            c += 1
        if c == size:
            break
        if c == 0 or c == size - 1:
            status = ARENA_OVERFLOW
            break
        if k >= cap:
            status = NO_TERMINATION
            break
        idx = odo[c]
        odo[c] = idx + 1
        k += 1
        w = mix64(keys[c] + np.uint64(idx + 1) * _GOLDEN)
        left = np.int64((w >> np.uint64(32)) < thr)
        right = np.int64((w & _U32) < thr)
        v = c - (n + 1)
        left_count = counts[c - 1] + left
        counts[c - 1] = left_count
        counts[c + 1] += right
        here = counts[c] - left - right
        counts[c] = here
        m += right - left
        s += left + right + 2 * v * (right - left)
        if here == 0:
            if (left_count == 0 and odo[c - 1] > 0) or (counts[c + 1] == 0 and odo[c + 1] > 0):
                status = ADJACENT_HOLES
                break
        if left_count >= 2:
            c -= 1
    state[0] = k
    state[1] = m
    state[2] = s
    return status


@njit(cache=True)
def stabilize_ordered(n, seed, thr, cap, policy, pseed, counts, odo, state):
    """Same contract as :func:`stabilize_leftmost` for FIFO and RANDOM orders."""
    size = 2 * n + 3
    keys = site_keys(seed, n)
    counts[n + 1] = n
    if n < 2:
        return OK
    # FIFO: ring buffer, each site queued at most once
    queue = np.empty(size, dtype=np.int64)
    queued = np.zeros(size, dtype=np.bool_)
    head = 0
    length = 0
    # RANDOM: unordered set with position index
    members = np.empty(size, dtype=np.int64)
    where = np.full(size, -1, dtype=np.int64)
    nmem = 0
    rstate = pseed

    if policy == POLICY_FIFO:
        queue[0] = n + 1
        queued[n + 1] = True
        length = 1
    else:
        members[0] = n + 1
        where[n + 1] = 0
        nmem = 1

    while True:
        if policy == POLICY_FIFO:
            if length == 0:
                return OK
            c = queue[head]
            head = (head + 1) % size
            length -= 1
            queued[c] = False
        else:
            if nmem == 0:
                return OK
            rstate = rstate + _GOLDEN
            r = mix64(rstate)
            c = members[np.int64(r % np.uint64(nmem))]
        if c == 0 or c == size - 1:
            return ARENA_OVERFLOW
        if state[0] >= cap:
            return NO_TERMINATION
        status = _topple_at(c, n, keys, counts, odo, thr, state)
        if status != OK:
            return status
        for d in (c - 1, c, c + 1):
            if policy == POLICY_FIFO:
                if counts[d] >= 2 and not queued[d]:
                    queue[(head + length) % size] = d
                    queued[d] = True
                    length += 1
            else:
                if counts[d] >= 2 and where[d] < 0:
                    members[nmem] = d
                    where[d] = nmem
                    nmem += 1
                elif counts[d] < 2 and where[d] >= 0:
                    j = where[d]
                    last = members[nmem - 1]
                    members[j] = last
                    where[last] = j
                    where[d] = -1
                    nmem -= 1


@njit(cache=True)
def final_observables(n, counts, out):
    """Fill ``out = [L, R, hole, has_hole, M, S, occupied]`` from a stable arena.

    Returns ``BAD_FINAL_STATE`` if the arena is not stable, holds more than one
    interior vacancy, or is empty.
    """
    size = 2 * n + 3
    lo = -1
    hi = -1
    occupied = 0
    m = 0
    s = 0
    for i in range(size):
        k = counts[i]
        if k > 1 or k < 0:
            return BAD_FINAL_STATE
        if k == 1:
            if lo < 0:
                lo = i
            hi = i
            occupied += 1
            v = i - (n + 1)
            m += v
            s += v * v
    if lo < 0:
        return BAD_FINAL_STATE
    holes = 0
    hole = 0
    for i in range(lo, hi + 1):
        if counts[i] == 0:
            holes += 1
            hole = i - (n + 1)
    if holes > 1:
        return BAD_FINAL_STATE
    out[0] = lo - (n + 1)
    out[1] = hi - (n + 1)
    out[2] = hole
    out[3] = holes
    out[4] = m
    out[5] = s
    out[6] = occupied
    return OK


@njit(cache=True)
def run_trials(n, seeds, thr, cap, policy, pseeds, result):
    """Stabilise one configuration per seed and write one row per trial.

    Row layout: ``[L, R, hole, has_hole, K, M, S, status]``.  Processing stops
    at the first trial with a non-OK status; its row carries the status and
    the index of that trial is returned (``-1`` when every trial succeeded).
    """
    size = 2 * n + 3
    counts = np.zeros(size, dtype=np.int64)
    odo = np.zeros(size, dtype=np.int64)
    state = np.zeros(3, dtype=np.int64)
    obs = np.zeros(7, dtype=np.int64)
    for t in range(seeds.shape[0]):
        counts[:] = 0
        odo[:] = 0
        state[:] = 0
        if policy == POLICY_LEFTMOST:
            status = stabilize_leftmost(n, seeds[t], thr, cap, counts, odo, state)
        else:
            status = stabilize_ordered(n, seeds[t], thr, cap, policy, pseeds[t], counts, odo, state)
        if status == OK:
            status = final_observables(n, counts, obs)
        if status == OK:
            width = obs[1] - obs[0]
            if obs[6] != n or (width != n - 1 + obs[3]):
                status = BAD_FINAL_STATE
            elif obs[4] != state[1] or obs[5] != state[2]:
                status = OBSERVABLE_MISMATCH
        result[t, 0] = obs[0]
        result[t, 1] = obs[1]
        result[t, 2] = obs[2]
        result[t, 3] = obs[3]
        result[t, 4] = state[0]
        result[t, 5] = obs[4]
        result[t, 6] = obs[5]
        result[t, 7] = status
        if status != OK:
            return t
    return -1
