# Compiled inner loops for walks on lazy (field-backed) and eager (grid) environments.
import numpy as np
from numba import njit, types
from numba.typed import Dict

from . import rng

OFFSET = 1 << 20
BITS = 21
LIMIT = OFFSET - 2

ERR_CAP = -1
ERR_RANGE = -2


@njit(cache=True, nogil=True)
def encode(x0, x1, x2):
    return (x0 + OFFSET) | ((x1 + OFFSET) << BITS) | ((x2 + OFFSET) << (2 * BITS))


@njit(cache=True, nogil=True)
def decode(code, out):
    mask = (1 << BITS) - 1
    out[0] = (code & mask) - OFFSET
    out[1] = ((code >> BITS) & mask) - OFFSET
    out[2] = ((code >> (2 * BITS)) & mask) - OFFSET


@njit(cache=True, nogil=True)
def _is_open(code, t, k0, k1, p, buf):
    decode(code, buf)
    return rng.uniform01(buf[0], buf[1], buf[2], t, k0, k1) < p


@njit(cache=True, nogil=True)
def resolve(code, d, t, k0, k1, p, sizes, labels, cap, buf):
    """|C(site)| from the field, growing and caching the whole cluster. -1: cap, -2: range."""
    if code in sizes:
        return sizes[code]
    if not _is_open(code, t, k0, k1, p, buf):
        return 0
    queue = np.empty(64, dtype=np.int64)
    queue[0] = code
    sizes[code] = -5
    head = 0
    tail = 1
    while head < tail:
        v = queue[head]
        head += 1
        decode(v, buf)
        for i in range(d):
            if buf[i] >= LIMIT or buf[i] <= -LIMIT:
                for j in range(tail):
                    sizes.pop(queue[j])
                return ERR_RANGE
        for i in range(d):
            step = 1 << (BITS * i)
            for s in (step, -step):
                w = v + s
                if w in sizes:
                    continue
                if _is_open(w, t, k0, k1, p, buf):
                    if tail == queue.size:
                        bigger = np.empty(2 * queue.size, dtype=np.int64)
                        bigger[:tail] = queue[:tail]
                        queue = bigger
                    queue[tail] = w
                    tail += 1
                    sizes[w] = -5
                    if tail > cap:
                        for j in range(tail):
                            sizes.pop(queue[j])
                        return ERR_CAP
    for j in range(tail):
        sizes[queue[j]] = tail
        labels[queue[j]] = code
    return tail


@njit(cache=True, nogil=True)
def lazy_walk(d, p, ek0, ek1, et, beta, wk0, wk1, wt, start, t_max, cap,
              positions, site_sizes, site_labels):
    """
    Walk on the field environment. Fills ``positions[:k+1]`` etc. and
    returns ``(k, err)`` where k is the last filled step.
    """
    sizes = Dict.empty(key_type=types.int64, value_type=types.int64)
    labels = Dict.empty(key_type=types.int64, value_type=types.int64)
    buf = np.zeros(3, dtype=np.int64)
    x = np.zeros(3, dtype=np.int64)
    for i in range(d):
        x[i] = start[i]
    code = encode(x[0], x[1], x[2])
    s = resolve(code, d, et, ek0, ek1, p, sizes, labels, cap, buf)
    if s < 0:
        return 0, s
    for i in range(d):
        positions[0, i] = x[i]
    site_sizes[0] = s
    site_labels[0] = labels[code] if s > 0 else -1
    nb = 2 * d
    ns = np.zeros(nb, dtype=np.int64)
    w = np.zeros(nb, dtype=np.float64)
    for t in range(t_max):
        smax = -1
        for j in range(nb):
            off = 1 << (BITS * (j // 2))
            c = code + off if j % 2 == 0 else code - off
            sj = resolve(c, d, et, ek0, ek1, p, sizes, labels, cap, buf)
            if sj < 0:
                return t, sj
            ns[j] = sj
            if sj > smax:
                smax = sj
        total = 0.0
        for j in range(nb):
            w[j] = np.exp(beta * (ns[j] - smax))
            total += w[j]
        u = rng.uniform01(t & 0xFFFFFFFF, t >> 32, 0, wt, wk0, wk1) * total
        pick = nb - 1
        acc = 0.0
        for j in range(nb):
            acc += w[j]
            if u < acc:
                pick = j
                break
        axis = pick // 2
        if pick % 2 == 0:
            x[axis] += 1
            code += 1 << (BITS * axis)
        else:
            x[axis] -= 1
            code -= 1 << (BITS * axis)
        for i in range(d):
            positions[t + 1, i] = x[i]
        site_sizes[t + 1] = ns[pick]
        site_labels[t + 1] = labels[code] if ns[pick] > 0 else -1
    return t_max, 0


@njit(cache=True, nogil=True)
def box_walk(size_flat, label_flat, shape, grid_origin, box_lo, box_hi, d, mode, beta,
             wk0, wk1, wt, start, t_max, stop_radius, positions, site_sizes, site_labels):
    """
    Walk of the box-restricted chain on a dense (flattened) cluster-size grid.

    mode 0: moves leaving the box become self-loops; mode 1: weights are
    renormalized over in-box neighbours. Stops early once the L-inf norm
    reaches ``stop_radius`` (if >= 0). Returns the last filled step.
    """
    x = np.zeros(3, dtype=np.int64)
    g = np.zeros(3, dtype=np.int64)
    for i in range(d):
        x[i] = start[i]
    nb = 2 * d
    ns = np.zeros(nb, dtype=np.int64)
    inside = np.zeros(nb, dtype=np.bool_)
    w = np.zeros(nb, dtype=np.float64)
    for t in range(t_max + 1):
        for i in range(d):
            g[i] = x[i] - grid_origin
            positions[t, i] = x[i]
        site_sizes[t] = size_flat[_flat(g, shape, d)]
        site_labels[t] = label_flat[_flat(g, shape, d)]
        r = 0
        for i in range(d):
            a = abs(x[i])
            if a > r:
                r = a
        if stop_radius >= 0 and r >= stop_radius:
            return t
        if t == t_max:
            return t
        smax = -1
        for j in range(nb):
            axis = j // 2
            sgn = 1 if j % 2 == 0 else -1
            g[axis] += sgn
            ns[j] = size_flat[_flat(g, shape, d)]
            g[axis] -= sgn
            y = x[axis] + sgn
            inside[j] = box_lo <= y <= box_hi
            if (mode == 0 or inside[j]) and ns[j] > smax:
                smax = ns[j]
        total = 0.0
        for j in range(nb):
            if mode == 1 and not inside[j]:
                w[j] = 0.0
            else:
                w[j] = np.exp(beta * (ns[j] - smax))
            total += w[j]
        u = rng.uniform01(t & 0xFFFFFFFF, t >> 32, 0, wt, wk0, wk1) * total
        pick = -1
        acc = 0.0
        for j in range(nb):
            if w[j] == 0.0:
                continue
            acc += w[j]
            pick = j
            if u < acc:
                break
        if pick >= 0 and inside[pick]:
            x[pick // 2] += 1 if pick % 2 == 0 else -1
    return t_max


@njit(cache=True, nogil=True)
def _flat(g, shape, d):
    f = 0
    for i in range(d):
        f = f * shape[i] + g[i]
    return f


@njit(cache=True, nogil=True)
def lazy_max_displacement(d, p, ek0, ek1, et, beta, wk0, wk1, wt, t_max, cap, grid):
    """Running max L-inf displacement of a walk from the origin, sampled at ``grid``."""
    positions = np.zeros((t_max + 1, d), dtype=np.int64)
    sizes = np.zeros(t_max + 1, dtype=np.int64)
    labels = np.zeros(t_max + 1, dtype=np.int64)
    start = np.zeros(d, dtype=np.int64)
    k, err = lazy_walk(d, p, ek0, ek1, et, beta, wk0, wk1, wt, start, t_max, cap,
                       positions, sizes, labels)
    out = np.zeros(grid.size, dtype=np.int64)
    if err != 0:
        return out, err
    m = 0
    gi = 0
    for t in range(t_max + 1):
        for i in range(d):
            a = abs(positions[t, i])
            if a > m:
                m = a
        while gi < grid.size and grid[gi] == t:
            out[gi] = m
            gi += 1
    return out, 0
