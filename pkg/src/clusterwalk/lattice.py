"""
Site percolation environments on Z^d and their open clusters.

Two kinds of environment are provided:

* :class:`Environment` - statuses materialized eagerly on a box
  ``(-n/2, n/2]^d`` enlarged by a margin ring, so that cluster sizes of
  sites in (and next to) the box are infinite-volume sizes.
* :class:`LazyEnvironment` - statuses sampled on first query and frozen
  afterwards, used with the generation method (:func:`grow_cluster`).

Both draw site statuses from the same counter-based field: site ``x`` is
open iff ``U(seed, stream, x) < p``, where ``U`` is a Philox uniform keyed
by the seed. The status of a site therefore does not depend on the order
in which sites are queried.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import ndimage

from . import rng
from .errors import (GrowthCapError, OutOfRegionError, ParameterError,
                     CapacityError, SupercriticalError)

log = logging.getLogger(__name__)

MAX_DIM = 3
DEFAULT_GROWTH_CAP = 10**6
DEFAULT_MAX_SITES = 1 << 26

# conservative subcritical guards (p_cr ~ 0.593 in d=2, ~0.312 in d=3)
SUBCRITICAL_GUARD = {1: 1.0, 2: 0.55, 3: 0.30}


def check_probability(p):
    if not (0.0 < p < 1.0):
        raise ParameterError(f"p must lie in (0, 1), got {p}")


def check_dimension(d):
    if d not in (1, 2, 3):
        raise ParameterError(f"dimension must be 1, 2 or 3, got {d}")


def check_subcritical(p, d, override=False):
    """Refuse p at or above the subcritical guard unless ``override``."""
    check_probability(p)
    check_dimension(d)
    if not override and p >= SUBCRITICAL_GUARD[d]:
        raise ParameterError(
            f"p={p} is at or above the subcritical guard {SUBCRITICAL_GUARD[d]} for d={d}"
        )


def linf(x):
    """L-infinity norm of a lattice point or of rows of an array."""
    a = np.asarray(x)
    if a.ndim == 1:
        return int(np.max(np.abs(a))) if a.size else 0
    return np.max(np.abs(a), axis=-1)


def neighbors(x):
    """The 2d nearest neighbours of ``x``: +e_1, -e_1, +e_2, -e_2, ..."""
    x = tuple(int(v) for v in x)
    out = []
    for i in range(len(x)):
        for s in (1, -1):
            y = list(x)
            y[i] += s
            out.append(tuple(y))
    return out


@dataclass(frozen=True)
class BoxSpec:
    """The box Lambda_n = (-n/2, n/2]^d."""

    n: int
    d: int

    def __post_init__(self):
        if int(self.n) < 1:
            raise ParameterError(f"box side must be positive, got {self.n}")
        check_dimension(self.d)

    @property
    def lo(self):
        return (-self.n) // 2 + 1

    @property
    def hi(self):
        return self.n // 2

    @property
    def volume(self):
        return self.n**self.d

    @property
    def shape(self):
        return (self.n,) * self.d

    def contains(self, x):
        """Exact membership: -n < 2 x_i <= n for every coordinate."""
        if len(x) != self.d:
            raise ParameterError(f"point {tuple(x)} does not have dimension {self.d}")
        return all(-self.n < 2 * int(v) <= self.n for v in x)

    def sites(self):
        """All sites as an ``(n**d, d)`` array in row-major order."""
        axes = [np.arange(self.lo, self.hi + 1)] * self.d
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=1).astype(np.int64)

    def index(self, x):
        """Row-major index of a site of the box."""
        return int(np.ravel_multi_index(tuple(int(v) - self.lo for v in x), self.shape))

    def enlarged(self, margin):
        return BoxSpec(self.n + 2 * margin, self.d)


# ----------------------------------------------------------------------------
# status field


@njit(cache=True, nogil=True)
def site_uniform(x0, x1, x2, t, k0, k1):
    return rng.uniform01(x0, x1, x2, t, k0, k1)


@njit(cache=True)
def _box_status(lo, shape, t, k0, k1, p):
    d = len(shape)
    total = 1
    for s in shape:
        total *= s
    out = np.zeros(total, dtype=np.uint8)
    c = np.zeros(3, dtype=np.int64)
    for flat in range(total):
        r = flat
        for i in range(d - 1, -1, -1):
            c[i] = lo[i] + r % shape[i]
            r //= shape[i]
        if rng.uniform01(c[0], c[1], c[2], t, k0, k1) < p:
            out[flat] = 1
    return out


def field_status(p, seed, stream, lo, shape):
    """Statuses of the field ``(p, seed, stream)`` on the grid starting at ``lo``."""
    k0, k1 = rng.split_seed(seed)
    t = rng.tag(rng.ENV, stream)
    flat = _box_status(np.asarray(lo, dtype=np.int64), np.asarray(shape, dtype=np.int64),
                       t, k0, k1, float(p))
    return flat.reshape(shape)


def default_margin(n):
    return max(1, 4 * math.ceil(math.log(n))) if n > 1 else 1


class Environment:
    """
    Site statuses materialized on a box plus a margin ring.

    ``status`` is a read-only ``uint8`` array over the enlarged grid whose
    entry ``[0, ..., 0]`` is the site ``lo - margin`` in every coordinate.
    """

    def __init__(self, box, status, p=float("nan"), seed=None, margin=0,
                 stream=0, scope="margin"):
        status = np.ascontiguousarray(status, dtype=np.uint8)
        expected = box.enlarged(margin).shape
        if status.shape != expected:
            raise ParameterError(f"status grid has shape {status.shape}, expected {expected}")
        if scope not in ("margin", "truncated"):
            raise ParameterError(f"unknown cluster scope {scope!r}")
        status.setflags(write=False)
        self.box = box
        self.status = status
        self.p = p
        self.seed = seed
        self.margin = int(margin)
        self.stream = stream
        self.scope = scope
        self.margin_escalations = 0

    @classmethod
    def from_array(cls, status, box=None, margin=0, p=float("nan"), seed=None):
        """Hand-built environment; ``status`` covers ``box`` enlarged by ``margin``."""
        status = np.asarray(status)
        if box is None:
            box = BoxSpec(status.shape[0] - 2 * margin, status.ndim)
        return cls(box, status, p=p, seed=seed, margin=margin)

    @property
    def d(self):
        return self.box.d

    @property
    def origin(self):
        """Lattice coordinate of grid index 0 along every axis."""
        return self.box.lo - self.margin

    @property
    def grid_box(self):
        return self.box.enlarged(self.margin)

    def in_region(self, x):
        o = self.origin
        m = self.status.shape[0]
        return all(0 <= int(v) - o < m for v in x)

    def status_at(self, x):
        if len(x) != self.d or not self.in_region(x):
            raise OutOfRegionError(f"site {tuple(x)} is outside the materialized region")
        return int(self.status[tuple(int(v) - self.origin for v in x)])

    def box_status(self):
        """Statuses restricted to the box itself."""
        m = self.margin
        sl = tuple(slice(m, m + self.box.n) for _ in range(self.d))
        return self.status[sl]

    def open_fraction(self):
        return float(self.box_status().mean())


def sample_environment(p, box, seed, margin=None, stream=0, scope="margin",
                       max_sites=DEFAULT_MAX_SITES):
    """
    I.i.d. Bernoulli(p) statuses on ``box`` plus a margin ring.

    With ``scope="margin"`` the margin starts at ``4*ceil(log n)`` and is
    doubled until no cluster meeting the box or its neighbour ring reaches
    the outer shell of the grid, so sizes seen from the box are
    infinite-volume sizes. With ``scope="truncated"`` no margin is sampled
    and clusters are cut at the box boundary.
    """
    check_probability(p)
    if scope == "truncated":
        margin = 0
    elif scope == "margin":
        margin = default_margin(box.n) if margin is None else max(1, int(margin))
    else:
        raise ParameterError(f"unknown cluster scope {scope!r}")
    escalations = 0
    while True:
        grid = box.enlarged(margin)
        if grid.volume > max_sites:
            raise CapacityError(
                f"box of {grid.volume} sites exceeds the memory budget of {max_sites} sites"
            )
        lo = (grid.lo,) * box.d
        status = field_status(p, seed, stream, lo, grid.shape)
        env = Environment(box, status, p=p, seed=seed, margin=margin, stream=stream, scope=scope)
        if scope == "truncated" or not _touches_shell(env):
            env.margin_escalations = escalations
            return env
        escalations += 1
        log.info("margin escalation: cluster reaches outer shell, margin %d -> %d",
                 margin, 2 * margin)
        margin *= 2


def _touches_shell(env):
    labels, _ = _label_grid(env.status)
    shell = np.zeros(labels.shape, dtype=bool)
    for ax in range(labels.ndim):
        idx = [slice(None)] * labels.ndim
        idx[ax] = 0
        shell[tuple(idx)] = True
        idx[ax] = -1
        shell[tuple(idx)] = True
    m = env.margin - 1
    inner = tuple(slice(m, m + env.box.n + 2) for _ in range(labels.ndim))
    near = set(np.unique(labels[inner])) - {-1}
    far = set(np.unique(labels[shell])) - {-1}
    return bool(near & far)


# ----------------------------------------------------------------------------
# labeling


@njit(cache=True)
def _bfs_label(flat, shape):
    d = len(shape)
    total = flat.size
    strides = np.ones(d, dtype=np.int64)
    for i in range(d - 2, -1, -1):
        strides[i] = strides[i + 1] * shape[i + 1]
    labels = -np.ones(total, dtype=np.int64)
    sizes = np.zeros(total, dtype=np.int64)
    queue = np.empty(total, dtype=np.int64)
    nlab = 0
    for s in range(total):
        if flat[s] == 0 or labels[s] >= 0:
            continue
        head = 0
        tail = 1
        queue[0] = s
        labels[s] = nlab
        while head < tail:
            v = queue[head]
            head += 1
            for i in range(d):
                coord = (v // strides[i]) % shape[i]
                if coord > 0:
                    w = v - strides[i]
                    if flat[w] == 1 and labels[w] < 0:
                        labels[w] = nlab
                        queue[tail] = w
                        tail += 1
                if coord < shape[i] - 1:
                    w = v + strides[i]
                    if flat[w] == 1 and labels[w] < 0:
                        labels[w] = nlab
                        queue[tail] = w
                        tail += 1
        sizes[nlab] = tail
        nlab += 1
    return labels, sizes[:nlab]


def _label_grid(status):
    labels, sizes = _bfs_label(np.ascontiguousarray(status, dtype=np.uint8).ravel(),
                               np.asarray(status.shape, dtype=np.int64))
    return labels.reshape(status.shape), sizes


class ClusterMap:
    """
    Cluster labels and sizes of an eager environment.

    ``label_grid`` holds -1 on closed sites and a cluster id otherwise;
    ``size_grid`` holds ``|C(x)|`` (0 on closed sites). Both cover the
    environment grid padded by one closed ring, so every neighbour of a
    box site has a size.
    """

    def __init__(self, env):
        status = np.pad(env.status, 1) if env.scope == "truncated" else env.status
        pad = 1 if env.scope == "truncated" else 0
        labels, sizes = _label_grid(status)
        self.env = env
        self.origin = env.origin - pad
        self.label_grid = labels
        self.sizes = sizes
        size_grid = np.zeros(labels.shape, dtype=np.int64)
        size_grid[labels >= 0] = sizes[labels[labels >= 0]]
        self.size_grid = size_grid
        for a in (self.label_grid, self.sizes, self.size_grid):
            a.setflags(write=False)

    @property
    def d(self):
        return self.env.d

    def _index(self, x):
        if len(x) != self.d:
            raise OutOfRegionError(f"site {tuple(x)} has the wrong dimension")
        idx = tuple(int(v) - self.origin for v in x)
        m = self.size_grid.shape[0]
        if not all(0 <= i < m for i in idx):
            raise OutOfRegionError(f"site {tuple(x)} is outside the labeled region")
        return idx

    def size(self, x):
        return int(self.size_grid[self._index(x)])

    def label(self, x):
        return int(self.label_grid[self._index(x)])

    def members(self, x):
        """Sites of C(x) as a set of tuples."""
        lab = self.label(x)
        if lab < 0:
            return set()
        idx = np.argwhere(self.label_grid == lab) + self.origin
        return {tuple(int(v) for v in r) for r in idx}

    def size_multiset(self):
        return np.sort(self.sizes)


class LazyClusterMap:
    """Cluster sizes of a lazy environment, grown and cached on demand."""

    def __init__(self, env, cap=DEFAULT_GROWTH_CAP):
        self.env = env
        self.cap = cap
        self._label = {}
        self._sizes = []

    @property
    def d(self):
        return self.env.d

    def _resolve(self, x):
        x = tuple(int(v) for v in x)
        if x in self._label:
            return self._label[x]
        if not self.env.status(x):
            return -1
        grown = grow_cluster(self.env, x, self.cap)
        lab = len(self._sizes)
        self._sizes.append(len(grown.cluster))
        for y in grown.cluster:
            self._label[y] = lab
        return lab

    def size(self, x):
        lab = self._resolve(x)
        return 0 if lab < 0 else self._sizes[lab]

    def label(self, x):
        return self._resolve(x)


def label_clusters(env):
    """Cluster map of an environment (eager labeling or lazy on-demand growth)."""
    if isinstance(env, LazyEnvironment):
        return LazyClusterMap(env)
    return ClusterMap(env)


def cluster_size(cmap, x):
    """``|C(x)|``; 0 iff x is closed. Raises OutOfRegionError outside the region."""
    return cmap.size(x)


# ----------------------------------------------------------------------------
# lazy environments and the generation method


class LazyEnvironment:
    """
    Statuses sampled on first query and frozen afterwards.

    ``base`` replays an already-materialized :class:`Environment` instead of
    sampling; ``preset`` forces given sites to given statuses.
    """

    def __init__(self, p, seed=0, d=2, stream=0, base=None, preset=None):
        check_dimension(d)
        if base is None:
            check_probability(p)
        self.p = p
        self.seed = seed
        self.d = d
        self.stream = stream
        self.base = base
        self._k = rng.split_seed(seed)
        self._t = rng.tag(rng.ENV, stream)
        self._status = {}
        self._forced = bool(preset)
        if preset:
            for x, s in preset.items():
                self._status[tuple(int(v) for v in x)] = int(bool(s))

    @classmethod
    def replay(cls, env):
        return cls(env.p, env.seed if env.seed is not None else 0, d=env.d, base=env)

    @property
    def is_pure_field(self):
        """True when every status comes from the counter-based field."""
        return self.base is None and not self._forced

    def _sample(self, x):
        if self.base is not None:
            return self.base.status_at(x)
        c = list(x) + [0] * (MAX_DIM - len(x))
        u = site_uniform(c[0], c[1], c[2], self._t, self._k[0], self._k[1])
        return int(u < self.p)

    def status(self, x):
        x = tuple(int(v) for v in x)
        if len(x) != self.d:
            raise ParameterError(f"point {x} does not have dimension {self.d}")
        s = self._status.get(x)
        if s is None:
            s = self._sample(x)
            self._status[x] = s
        return s

    def is_sampled(self, x):
        return tuple(int(v) for v in x) in self._status

    @property
    def sampled(self):
        """Read-only view of everything materialized so far."""
        return dict(self._status)


@dataclass
class GrownCluster:
    cluster: set = field(default_factory=set)
    boundary: set = field(default_factory=set)
    generations: dict = field(default_factory=dict)

    @property
    def size(self):
        return len(self.cluster)

    @property
    def sites(self):
        """H = C u dC."""
        return self.cluster | self.boundary


def grow_cluster(env, x, cap=DEFAULT_GROWTH_CAP):
    """
    Grow the open cluster of ``x`` generation by generation.

    The root gets generation 0. Every fresh neighbour of an open site of
    generation m is sampled with generation m + 1; growth stops once a
    generation has no open site. Every sampled status stays recorded in
    ``env``.
    """
    if cap <= 0:
        raise ParameterError("growth cap must be positive")
    x = tuple(int(v) for v in x)
    out = GrownCluster(generations={x: 0})
    if not env.status(x):
        return out
    out.cluster.add(x)
    current = [x]
    m = 0
    while current:
        m += 1
        nxt = []
        for y in current:
            for z in neighbors(y):
                if z in out.generations:
                    continue
                out.generations[z] = m
                if env.status(z):
                    out.cluster.add(z)
                    nxt.append(z)
                else:
                    out.boundary.add(z)
        if len(out.cluster) > cap:
            raise GrowthCapError(
                f"cluster of {x} exceeds the growth cap of {cap} sites", partial=out
            )
        current = nxt
    return out


def holes(region, bounding=None):
    """
    Sites outside ``region`` cut off by it from the boundary of ``bounding``.

    Without ``bounding`` the bounding box of the region plus one ring is
    used, which makes the result the set of holes with respect to paths to
    infinity.
    """
    pts = np.array(sorted(region), dtype=np.int64)
    if pts.size == 0:
        return set()
    d = pts.shape[1]
    if bounding is None:
        lo = pts.min(axis=0) - 1
        hi = pts.max(axis=0) + 1
    else:
        lo = np.full(d, bounding.lo)
        hi = np.full(d, bounding.hi)
        if (pts < lo).any() or (pts > hi).any():
            raise ParameterError("region is not contained in the bounding box")
    grid = np.zeros(tuple(hi - lo + 1), dtype=bool)
    grid[tuple((pts - lo).T)] = True
    filled = ndimage.binary_fill_holes(grid)
    idx = np.argwhere(filled & ~grid) + lo
    return {tuple(int(v) for v in r) for r in idx}


# ----------------------------------------------------------------------------
# cluster-size tails


@dataclass
class TailStats:
    """Empirical exceedance frequencies of ``|C(0)|``."""

    counts: dict
    hits: dict
    sample_count: int
    fitted_slope: float
    r_squared: float
    sizes: np.ndarray = field(repr=False, default=None)
    cap_hits: int = 0

    def exceedance(self, k):
        """Empirical P[|C(0)| >= k]."""
        return float(np.mean(self.sizes >= k))


def tail_fit(sizes, min_hits=10):
    """Least-squares fit of log P[|C|>N] against N over thresholds with >= min_hits."""
    sizes = np.asarray(sizes)
    total = sizes.size
    top = int(sizes.max()) if total else 0
    hits = {N: int(np.count_nonzero(sizes > N)) for N in range(top + 1)}
    counts = {N: h / total for N, h in hits.items()}
    usable = [N for N, h in hits.items() if h >= min_hits]
    slope, r2 = float("nan"), float("nan")
    if len(usable) >= 2:
        xs = np.array(usable, dtype=float)
        ys = np.log([counts[N] for N in usable])
        A = np.vstack([xs, np.ones_like(xs)]).T
        coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
        slope = float(coef[0])
        resid = ys - A @ coef
        ss_tot = float(np.sum((ys - ys.mean()) ** 2))
        r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return counts, hits, slope, r2


def cluster_tail(p, d, samples, seed, cap=DEFAULT_GROWTH_CAP, override=False,
                 min_samples=1000):
    """
    Grow ``C(0)`` on ``samples`` independent lazy environments.

    Sample ``i`` uses stream ``i`` of the field keyed by ``seed``. Raises
    :class:`SupercriticalError` as soon as more than 0.1% of the requested
    growths have hit the cap.
    """
    check_subcritical(p, d, override)
    if samples < min_samples:
        raise ParameterError(f"need at least {min_samples} samples, got {samples}")
    origin = (0,) * d
    sizes = np.zeros(samples, dtype=np.int64)
    cap_hits = 0
    for i in range(samples):
        env = LazyEnvironment(p, seed, d=d, stream=i)
        try:
            sizes[i] = grow_cluster(env, origin, cap).size
        except GrowthCapError as err:
            cap_hits += 1
            sizes[i] = err.partial.size
            if cap_hits > 0.001 * samples:
                raise SupercriticalError(
                    f"{cap_hits} of the first {i + 1} growths hit the cap; "
                    f"p={p} looks supercritical"
                ) from None
    counts, hits, slope, r2 = tail_fit(sizes)
    return TailStats(counts=counts, hits=hits, sample_count=samples, fitted_slope=slope,
                     r_squared=r2, sizes=sizes, cap_hits=cap_hits)


def exact_tail_1d(p, k):
    """P[|C(0)| >= k] in d=1: sum over s >= k of s p^s (1-p)^2."""
    if k <= 0:
        return 1.0
    return p**k * (k - (k - 1) * p)
