"""
Measurable experiments on the cluster-attracted walk.

* :func:`estimate_exponent` / :func:`beta_sweep` - slope of
  ``E log max_{s<=t} ||xi(s)||`` against ``log t``; 1/2 means diffusive.
* :func:`sojourn_statistics` - entry times and sojourn lengths of the walk
  inside open clusters.
* :func:`escape_time` - hitting time of ``{||x|| >= n/4}`` for the box chain.
* :func:`entry_probe` - the exploration scheme that reveals the environment
  one cluster at a time and records how often a fresh cluster is large.
* :func:`displacement_tail` - frequency of ``||xi_t|| >= t^(1/2 + eps)``.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, rng
from .errors import (CapacityError, GrowthCapError, ParameterError,
                     StructuralError)
from .lattice import (DEFAULT_GROWTH_CAP, BoxSpec, ClusterMap, LazyClusterMap,
                      LazyEnvironment, check_subcritical, grow_cluster, holes,
                      sample_environment)
from .walk import KernelParams, simulate_discrete, stationary_box_measure, step

log = logging.getLogger(__name__)

MIN_REPLICAS = 30


def time_grid(t_max, first=64):
    """Powers of two from ``first`` up to ``t_max``, with ``t_max`` appended."""
    if t_max < first:
        raise ParameterError(f"t_max must be at least {first}")
    grid = []
    t = first
    while t <= t_max:
        grid.append(t)
        t *= 2
    if grid[-1] != t_max:
        grid.append(t_max)
    return np.array(grid, dtype=np.int64)


@dataclass
class ExponentEstimate:
    beta: float
    p: float
    d: int
    time_grid: np.ndarray
    mean_log_maxdisp: np.ndarray
    slope: float
    stderr: float
    intercept: float
    replicas: int
    seed: int
    fit_from: int
    replica_slopes: np.ndarray = field(repr=False, default=None)

    def rows(self):
        for t, m in zip(self.time_grid, self.mean_log_maxdisp):
            yield {"beta": self.beta, "p": self.p, "d": self.d, "t": int(t),
                   "mean_log_maxdisp": float(m), "slope": self.slope, "stderr": self.stderr,
                   "replicas": self.replicas, "seed": self.seed}


def _max_disp_replica(args):
    d, p, ek, et, beta, wk, wt, t_max, cap, grid = args
    out, err = _kernels.lazy_max_displacement(d, p, ek[0], ek[1], et, beta, wk[0], wk[1], wt,
                                              t_max, cap, grid)
    if err == _kernels.ERR_CAP:
        raise GrowthCapError(f"cluster growth exceeded cap {cap}")
    if err != 0:
        raise CapacityError("walk left the encodable coordinate range")
    return out


def max_displacement_samples(p, d, beta, t_max, replicas, seed, grid, quenched=False,
                             cap=DEFAULT_GROWTH_CAP, workers=1):
    """``M_r(t)`` for each replica r and each t of ``grid`` (annealed by default)."""
    if t_max >= _kernels.LIMIT:
        raise CapacityError("t_max exceeds the encodable coordinate range")
    k = rng.split_seed(seed)
    jobs = [(d, float(p), k, rng.tag(rng.ENV, 0 if quenched else r), float(beta), k,
             rng.tag(rng.WALK, r), int(t_max), int(cap), grid) for r in range(replicas)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(_max_disp_replica, jobs))
    else:
        rows = [_max_disp_replica(j) for j in jobs]
    return np.array(rows)


def fit_exponent(grid, maxdisp, fit_from=None):
    """
    Slope of mean log M(t) against log t over ``grid[fit_from:]``.

    OLS is linear in the responses, so the slope of the replica mean equals
    the mean of per-replica slopes; the standard error is the standard
    deviation of those slopes over sqrt(replicas).
    """
    grid = np.asarray(grid)
    fit_from = len(grid) // 2 if fit_from is None else fit_from
    logm = np.log(np.maximum(maxdisp, 1))
    lt = np.log(grid[fit_from:])
    X = np.vstack([lt, np.ones_like(lt)]).T
    coef, *_ = np.linalg.lstsq(X, logm[:, fit_from:].T, rcond=None)
    slopes = coef[0]
    mean = logm.mean(axis=0)
    c, *_ = np.linalg.lstsq(X, mean[fit_from:], rcond=None)
    R = logm.shape[0]
    stderr = float(slopes.std(ddof=1) / math.sqrt(R)) if R > 1 else float("nan")
    return mean, float(c[0]), float(c[1]), stderr, slopes, fit_from


def estimate_exponent(p, d, beta, t_max, replicas, seed, quenched=False,
                      cap=DEFAULT_GROWTH_CAP, workers=1, override=False):
    """Diffusion exponent of the annealed walk from the origin."""
    check_subcritical(p, d, override)
    KernelParams(beta, d)
    if t_max < 1000:
        raise ParameterError("t_max must be at least 1000")
    if replicas < MIN_REPLICAS:
        raise ParameterError(f"need at least {MIN_REPLICAS} replicas, got {replicas}")
    grid = time_grid(t_max)
    M = max_displacement_samples(p, d, beta, t_max, replicas, seed, grid, quenched, cap, workers)
    mean, slope, icpt, stderr, slopes, k = fit_exponent(grid, M)
    return ExponentEstimate(beta, p, d, grid, mean, slope, stderr, icpt, replicas, seed, k,
                            slopes)


def beta_sweep(p, d, beta_grid, t_max, replicas, seed, **kw):
    """One :class:`ExponentEstimate` per beta, all sharing ``seed``."""
    beta_grid = list(beta_grid)
    if not beta_grid:
        raise ParameterError("beta grid is empty")
    out = []
    for beta in beta_grid:
        log.info("sweep: beta=%g", beta)
        out.append(estimate_exponent(p, d, beta, t_max, replicas, seed, **kw))
    return out


# ----------------------------------------------------------------------------
# sojourns


@dataclass
class SojournRecord:
    cluster_label: int
    cluster_size: int
    entry_time: float
    sojourn: float
    visit_index: int
    censored: bool = False


def sojourn_statistics(traj, cmap=None):
    """
    Split a trajectory into maximal runs inside open clusters.

    A discrete sojourn counts the positions of the run; a continuized one is
    the time between entering and leaving. The last run is flagged
    ``censored`` when the trajectory ends inside the cluster.
    """
    labels = traj.labels
    sizes = traj.sizes
    if labels is None or sizes is None:
        if cmap is None:
            raise ParameterError("trajectory carries no cluster annotations and no map was given")
        pts = [tuple(p) for p in traj.positions]
        sizes = np.array([cmap.size(x) for x in pts])
        labels = np.array([cmap.label(x) if s > 0 else -1 for x, s in zip(pts, sizes)])
    T = len(labels)
    if T == 0:
        return []
    out = []
    visits = {}
    change = np.flatnonzero(np.diff(labels)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [T]])
    for a, b in zip(starts, ends):
        lab = int(labels[a])
        if lab < 0:
            continue
        visits[lab] = visits.get(lab, 0) + 1
        censored = b == T
        if traj.continuous:
            stop = traj.times[b] if b < T else traj.times[-1]
            length = float(stop - traj.times[a])
        else:
            length = int(b - a)
        out.append(SojournRecord(lab, int(sizes[a]), traj.times[a].item(), length,
                                 visits[lab], bool(censored)))
    return out


def mean_sojourn_by_size(records, include_censored=False):
    """``{size: (mean sojourn, count)}``."""
    acc = {}
    for r in records:
        if r.censored and not include_censored:
            continue
        s, c = acc.get(r.cluster_size, (0.0, 0))
        acc[r.cluster_size] = (s + r.sojourn, c + 1)
    return {k: (s / c, c) for k, (s, c) in sorted(acc.items())}


def geometric_floor(size, beta, d):
    """
    Lower bound on the mean discrete sojourn in a cluster of ``size`` sites.

    Inside a cluster of two or more sites every site has a cluster
    neighbour of weight e^(beta size) and at most 2d - 1 closed neighbours
    of weight 1, so leaving takes at least a geometric number of steps
    with success probability (2d - 1) / (2d - 1 + e^(beta size)).
    """
    if size <= 1:
        return 1.0
    return (2 * d - 1 + math.exp(beta * size)) / (2 * d - 1)


# ----------------------------------------------------------------------------
# escape from the central region


@dataclass
class EscapeSummary:
    n: int
    radius: int
    times: np.ndarray
    censored: int
    censor_at: int
    median: float
    q25: float
    q75: float
    pi_far: float
    far_fraction: float

    @property
    def median_over_n2(self):
        return self.median / self.n**2


def escape_time(env, box, params, replicas, seed, restriction="selfloop", censor=None):
    """
    Hitting time of ``{||x|| >= n/4}`` for the box chain started at the origin.

    Replica r uses walker stream r on the fixed environment ``env``. Runs
    still inside after ``censor`` steps (default 50 n^2) count as censored
    at that value; quantiles use the censored sample.
    """
    n = box.n
    radius = -(-n // 4)
    censor = 50 * n * n if censor is None else int(censor)
    cmap = env if isinstance(env, ClusterMap) else ClusterMap(env)
    times = np.zeros(replicas, dtype=np.int64)
    censored = 0
    for r in range(replicas):
        tr = simulate_discrete(cmap, params, censor, seed, walker=r, restriction=restriction,
                               stop_radius=radius)
        hit = len(tr) - 1
        if np.abs(tr.positions[-1]).max() < radius:
            censored += 1
        times[r] = hit
    mu = stationary_box_measure(cmap, box, params, restriction)
    far = np.abs(mu.sites).max(axis=1) >= radius
    q25, med, q75 = np.percentile(times, [25, 50, 75])
    return EscapeSummary(n, radius, times, censored, censor, float(med), float(q25),
                         float(q75), float(mu.values[far].sum()), float(far.mean()))


# ----------------------------------------------------------------------------
# exploration one cluster at a time


@dataclass
class EntryProbeRecord:
    step_index: int
    tau: int
    site: tuple
    cluster_size: int
    found_big: bool
    delta: float
    n: int
    replica: int = 0


@dataclass
class EntryProbeResult:
    records: list
    threshold: float
    path_bound: float
    epsilon: float
    eps_bound: float
    explored_sizes: list = field(default_factory=list)

    @property
    def frequency(self):
        if not self.records:
            return float("nan")
        return sum(r.found_big for r in self.records) / len(self.records)


def _probe_once(p, d, n, delta, beta, seed, replica, budget, max_walk_steps, cap, checks):
    env = LazyEnvironment(p, seed, d=d, stream=replica)
    cmap = LazyClusterMap(env, cap=cap)
    params = KernelParams(beta, d)
    box = BoxSpec(n, d)
    threshold = delta * math.log(n)
    k0, k1 = rng.split_seed(seed)
    wt = rng.tag(rng.WALK, replica)
    x = (0,) * d
    G = set()
    seen_clusters = set()
    t = 0
    us = np.empty(0)
    records = []
    sizes = []
    for i in range(1, budget + 1):
        grown = grow_cluster(env, x, cap)
        if checks and grown.cluster & seen_clusters:
            raise StructuralError(f"cluster explored at step {i} meets an earlier one")
        seen_clusters |= grown.cluster
        sizes.append(grown.size)
        U = G | grown.sites | {x}
        filled = holes(U)
        for h in filled:
            env.status(h)
        G_next = U | filled
        if checks and not (G < G_next):
            raise StructuralError("explored region did not grow")
        G = G_next
        start = t
        while x in G:
            if t - start >= max_walk_steps:
                log.warning("entry probe: walker stuck in explored region for %d steps", t - start)
                return records, sizes
            if t % 4096 == 0:
                us = rng._uniform_block(k0, k1, wt, t, 4096)
            x = step(cmap, x, params, us[t % 4096])
            t += 1
        size = cmap.size(x)
        records.append(EntryProbeRecord(i, t, x, size, size >= threshold, delta, n, replica))
        if not box.contains(x):
            break
    return records, sizes


def entry_probe(p, d, n, delta, beta, seed, theta=0.25, epsilon=None, replicas=1,
                max_walk_steps=10**6, cap=DEFAULT_GROWTH_CAP, checks=True, override=False):
    """
    Reveal the environment one cluster at a time along the walk.

    Step i grows the cluster at the walker's position with its closed
    boundary, adds it and all enclosed holes to the explored region G_i,
    then runs the walk until it first stands outside G_i (time tau_i) and
    records whether the cluster found there has at least ``delta log n``
    sites. Each replica runs at most ``n^(1 - theta)`` steps or until the
    walker leaves the box.
    """
    check_subcritical(p, d, override)
    if delta <= 0:
        raise ParameterError("delta must be positive")
    if not 0 < theta < 1:
        raise ParameterError("theta must lie in (0, 1)")
    eps = delta * math.log(1 / p) + 0.01 if epsilon is None else epsilon
    budget = max(1, int(math.floor(n ** (1 - theta))))
    records, sizes = [], []
    for r in range(replicas):
        rec, sz = _probe_once(p, d, n, delta, beta, seed, r, budget, max_walk_steps, cap, checks)
        records.extend(rec)
        sizes.extend(sz)
    threshold = delta * math.log(n)
    return EntryProbeResult(records, threshold, p**threshold, eps, n ** (-eps), sizes)


# ----------------------------------------------------------------------------
# displacement tail


@dataclass
class TailFrequency:
    t: int
    epsilon: float
    threshold: float
    hits: int
    replicas: int

    @property
    def frequency(self):
        return self.hits / self.replicas


def displacement_tail(p, d, beta, t, replicas, epsilon, seed, cap=DEFAULT_GROWTH_CAP,
                      override=False):
    """Fraction of annealed walks with ``||xi_t|| >= t^(1/2 + epsilon)``."""
    check_subcritical(p, d, override)
    params = KernelParams(beta, d)
    thr = t ** (0.5 + epsilon)
    hits = 0
    for r in range(replicas):
        env = LazyEnvironment(p, seed, d=d, stream=r)
        tr = simulate_discrete(env, params, t, seed, walker=r, cap=cap)
        hits += int(np.abs(tr.positions[-1]).max() >= thr)
    return TailFrequency(int(t), epsilon, thr, hits, replicas)

