"""
The cluster-attracted random walk.

From ``x`` the walk jumps to a neighbour ``y`` with probability
proportional to ``exp(beta * |C(y)|)``. It is reversible with respect to

    pi(x) = exp(beta |C(x)|) * sum_{z ~ x} exp(beta |C(z)|),

since ``pi(x) P(x, y) = exp(beta (|C(x)| + |C(y)|))`` is symmetric.

Weights are handled in log space throughout; ``beta * |C|`` in the
thousands is fine.
"""
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels, rng
from .errors import CapacityError, GrowthCapError, ParameterError, OutOfRegionError
from .lattice import (DEFAULT_GROWTH_CAP, BoxSpec, ClusterMap, Environment,
                      LazyClusterMap, LazyEnvironment, label_clusters, neighbors)

RESTRICTIONS = ("selfloop", "renormalize")


@dataclass(frozen=True)
class KernelParams:
    beta: float
    d: int = 2

    def __post_init__(self):
        if not (self.beta >= 0.0) or math.isinf(self.beta):
            raise ParameterError(f"beta must be finite and nonnegative, got {self.beta}")


def _logsumexp(vals):
    m = max(vals)
    return m + math.log(sum(math.exp(v - m) for v in vals))


@dataclass
class LocalKernel:
    """One row of the transition kernel.

    ``probabilities`` maps each target to its probability; in a restricted
    chain with self-loops the site itself may appear as a target.
    """

    site: tuple
    log_weights: dict
    probabilities: dict

    @property
    def neighbor_weights(self):
        return {y: math.exp(lw) for y, lw in self.log_weights.items()}


def local_kernel(cmap, x, params):
    """Row ``P(x, .)`` of the walk on Z^d."""
    x = tuple(int(v) for v in x)
    nbrs = neighbors(x)
    logw = {y: params.beta * cmap.size(y) for y in nbrs}
    lse = _logsumexp(list(logw.values()))
    probs = {y: math.exp(lw - lse) for y, lw in logw.items()}
    return LocalKernel(x, logw, probs)


def log_reversible_measure(cmap, x, params):
    x = tuple(int(v) for v in x)
    own = params.beta * cmap.size(x)
    return own + _logsumexp([params.beta * cmap.size(y) for y in neighbors(x)])


def reversible_measure(cmap, x, params):
    """Unnormalized ``pi(x)``; may overflow to inf, see :func:`log_reversible_measure`."""
    return math.exp(log_reversible_measure(cmap, x, params))


class RestrictedKernel:
    """
    The walk restricted to a box.

    ``selfloop``: a move that would leave the box is replaced by staying
    put with the same probability, so in-box transitions are unchanged and
    ``pi`` (with the full-lattice neighbour sum) stays reversible.
    ``renormalize``: weights are renormalized over in-box neighbours; the
    reversible measure then uses the in-box neighbour sum.
    """

    def __init__(self, cmap, box, restriction="selfloop"):
        if restriction not in RESTRICTIONS:
            raise ParameterError(f"restriction must be one of {RESTRICTIONS}, got {restriction!r}")
        self.cmap = cmap
        self.box = box
        self.restriction = restriction

    def _targets(self, x):
        nbrs = neighbors(x)
        if self.restriction == "selfloop":
            return nbrs
        return [y for y in nbrs if self.box.contains(y)]

    def local_kernel(self, x, params):
        x = tuple(int(v) for v in x)
        if not self.box.contains(x):
            raise ParameterError(f"site {x} is outside the box")
        targets = self._targets(x)
        if not targets:
            return LocalKernel(x, {}, {x: 1.0})
        logw = {y: params.beta * self.cmap.size(y) for y in targets}
        lse = _logsumexp(list(logw.values()))
        probs = {}
        for y, lw in logw.items():
            tgt = y if self.box.contains(y) else x
            probs[tgt] = probs.get(tgt, 0.0) + math.exp(lw - lse)
        return LocalKernel(x, logw, probs)

    def log_measure(self, x, params):
        x = tuple(int(v) for v in x)
        targets = self._targets(x)
        own = params.beta * self.cmap.size(x)
        if not targets:
            return own
        return own + _logsumexp([params.beta * self.cmap.size(y) for y in targets])


def restrict_to_box(cmap, box, restriction="selfloop"):
    return RestrictedKernel(cmap, box, restriction)


@dataclass
class ReversibleMeasure:
    """Normalized stationary measure of a box chain, in row-major site order."""

    sites: np.ndarray
    values: np.ndarray
    log_values: np.ndarray
    log_normalizer: float
    restriction: str = "selfloop"
    normalized: bool = True

    @property
    def normalizer(self):
        return math.exp(self.log_normalizer) if self.log_normalizer < 709 else math.inf


def box_size_arrays(cmap, box):
    """Sizes on the box and on its 2d shifted copies (one per neighbour direction)."""
    if not isinstance(cmap, ClusterMap):
        sites = box.sites()
        own = np.array([cmap.size(tuple(s)) for s in sites], dtype=np.int64).reshape(box.shape)
        shifted = []
        for i in range(box.d):
            for sgn in (1, -1):
                sh = sites.copy()
                sh[:, i] += sgn
                shifted.append(np.array([cmap.size(tuple(s)) for s in sh],
                                        dtype=np.int64).reshape(box.shape))
        return own, shifted
    start = box.lo - cmap.origin
    if start < 1 or start + box.n + 1 > cmap.size_grid.shape[0]:
        raise OutOfRegionError("cluster map does not cover the box and its neighbour ring")
    g = cmap.size_grid
    own = g[(slice(start, start + box.n),) * box.d]
    shifted = []
    for i in range(box.d):
        for sgn in (1, -1):
            sl = [slice(start, start + box.n)] * box.d
            sl[i] = slice(start + sgn, start + sgn + box.n)
            shifted.append(g[tuple(sl)])
    return own, shifted


def _inbox_masks(box):
    masks = []
    for i in range(box.d):
        for sgn in (1, -1):
            m = np.ones(box.shape, dtype=bool)
            sl = [slice(None)] * box.d
            sl[i] = -1 if sgn == 1 else 0
            m[tuple(sl)] = False
            masks.append(m)
    return masks


def log_box_measure(cmap, box, params, restriction="selfloop"):
    """Unnormalized log pi on the box, shape ``box.shape``."""
    own, shifted = box_size_arrays(cmap, box)
    logs = np.stack([params.beta * s for s in shifted]).astype(float)
    if restriction == "renormalize":
        masks = np.stack(_inbox_masks(box))
        logs = np.where(masks, logs, -np.inf)
    elif restriction != "selfloop":
        raise ParameterError(f"restriction must be one of {RESTRICTIONS}, got {restriction!r}")
    m = logs.max(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lse = m + np.log(np.exp(logs - m).sum(axis=0))
    if restriction == "renormalize" and box.n == 1:
        lse = np.zeros(box.shape)
    return params.beta * own + lse


def stationary_box_measure(cmap, box, params, restriction="selfloop"):
    """``pi^(n)(x) = pi(x) / Z`` over the box, with Z the sum of pi over the box."""
    if box.volume == 0:
        raise ParameterError("empty box")
    logpi = log_box_measure(cmap, box, params, restriction).ravel()
    m = logpi.max()
    logz = m + math.log(np.exp(logpi - m).sum())
    log_values = logpi - logz
    return ReversibleMeasure(box.sites(), np.exp(log_values), log_values, logz, restriction)


# ----------------------------------------------------------------------------
# trajectories


@dataclass
class ContinuizedClock:
    """Jump times of a rate-1 Poisson process; ``jump_times[k]`` is S_k (S_0 = 0)."""

    jump_times: np.ndarray
    rate: float = 1.0

    @property
    def holding_times(self):
        return np.diff(self.jump_times)

    def count(self, t):
        """N_t: number of jumps in (0, t]."""
        return int(np.searchsorted(self.jump_times, t, side="right")) - 1


@dataclass
class WalkTrajectory:
    """
    Positions of a walk, one row per step.

    ``times`` is the step index for a discrete walk and the jump time S_k
    for a continuized one. ``sizes[k]`` / ``labels[k]`` are ``|C|`` and the
    cluster label at ``positions[k]`` (-1 for closed sites).
    """

    positions: np.ndarray
    times: np.ndarray
    sizes: np.ndarray = None
    labels: np.ndarray = None
    continuous: bool = False
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.positions)

    @property
    def d(self):
        return self.positions.shape[1]

    @property
    def max_displacement(self):
        if len(self.positions) == 0:
            return np.zeros(0, dtype=np.int64)
        return np.maximum.accumulate(np.abs(self.positions).max(axis=1))

    @property
    def clock(self):
        return ContinuizedClock(self.times) if self.continuous else None

    def embedded(self):
        """The jump chain, i.e. the discrete trajectory underneath."""
        return replace(self, times=np.arange(len(self.positions)), continuous=False)

    def position_at(self, t):
        """Position at (continuous) time t."""
        if not self.continuous:
            return self.positions[int(t)]
        return self.positions[self.clock.count(t)]


def step(cmap, x, params, u, box=None, restriction="selfloop"):
    """
    One move from ``x``. ``u`` is a uniform in (0, 1) or a numpy Generator.

    Targets are scanned in the order +e_1, -e_1, +e_2, ... and the first
    whose cumulative weight exceeds ``u * total`` is taken.
    """
    if isinstance(u, np.random.Generator):
        u = u.random()
    x = tuple(int(v) for v in x)
    nbrs = neighbors(x)
    if box is not None and restriction == "renormalize":
        cand = [y for y in nbrs if box.contains(y)]
        if not cand:
            return x
    else:
        cand = nbrs
    sizes = [cmap.size(y) for y in cand]
    smax = max(sizes)
    w = [math.exp(params.beta * (s - smax)) for s in sizes]
    target = u * sum(w)
    acc = 0.0
    pick = cand[-1]
    for y, wy in zip(cand, w):
        acc += wy
        if target < acc:
            pick = y
            break
    if box is not None and not box.contains(pick):
        return x
    return pick


def _origin(d):
    return np.zeros(d, dtype=np.int64)


def simulate_discrete(env, params, t_max, seed, start=None, walker=0,
                      restriction="selfloop", cap=DEFAULT_GROWTH_CAP, stop_radius=-1):
    """
    Discrete-time walk with ``t_max`` steps (``t_max + 1`` positions).

    On a :class:`LazyEnvironment` this is the walk on Z^d, with clusters
    grown on demand ahead of the walker. On an :class:`Environment` it is
    the chain restricted to the box. The walker's randomness is stream
    ``walker`` of ``seed``.
    """
    t_max = int(t_max)
    if t_max < 0:
        raise ParameterError("t_max must be nonnegative")
    d = env.d
    start = _origin(d) if start is None else np.asarray(start, dtype=np.int64)
    wk0, wk1 = rng.split_seed(seed)
    wt = rng.tag(rng.WALK, walker)
    positions = np.zeros((t_max + 1, d), dtype=np.int64)
    sizes = np.zeros(t_max + 1, dtype=np.int64)
    labels = np.zeros(t_max + 1, dtype=np.int64)
    p = env.env.p if isinstance(env, ClusterMap) else env.p
    meta = {"seed": int(seed), "walker": walker, "beta": params.beta, "p": p, "d": d,
            "t_max": t_max}
    if isinstance(env, LazyEnvironment):
        if env.is_pure_field:
            if np.abs(start).max(initial=0) + t_max >= _kernels.LIMIT:
                raise CapacityError("walk could leave the encodable coordinate range")
            ek0, ek1 = rng.split_seed(env.seed)
            et = rng.tag(rng.ENV, env.stream)
            k, err = _kernels.lazy_walk(d, float(env.p), ek0, ek1, et, float(params.beta),
                                        wk0, wk1, wt, start, t_max, int(cap),
                                        positions, sizes, labels)
            if err == _kernels.ERR_CAP:
                raise GrowthCapError(f"cluster growth exceeded cap {cap} at step {k}")
            if err == _kernels.ERR_RANGE:
                raise CapacityError("cluster grew outside the encodable coordinate range")
            end = k + 1
        else:
            end = _python_walk(label_clusters(env), params, start, t_max, wk0, wk1, wt,
                               positions, sizes, labels)
    else:
        cmap = env if isinstance(env, ClusterMap) else ClusterMap(env)
        box = cmap.env.box
        if not box.contains(tuple(start)):
            raise ParameterError(f"start {tuple(start)} is outside the box")
        if restriction not in RESTRICTIONS:
            raise ParameterError(f"restriction must be one of {RESTRICTIONS}")
        mode = RESTRICTIONS.index(restriction)
        k = _kernels.box_walk(cmap.size_grid.ravel(), cmap.label_grid.ravel(),
                              np.asarray(cmap.size_grid.shape, dtype=np.int64), cmap.origin,
                              box.lo, box.hi, d, mode, float(params.beta), wk0, wk1, wt,
                              start, t_max, int(stop_radius), positions, sizes, labels)
        end = k + 1
        meta["n"] = box.n
        meta["restriction"] = restriction
    return WalkTrajectory(positions[:end], np.arange(end), sizes[:end], labels[:end],
                          meta=meta)


def _python_walk(cmap, params, start, t_max, wk0, wk1, wt, positions, sizes, labels):
    x = tuple(int(v) for v in start)
    us = rng._uniform_block(wk0, wk1, wt, 0, t_max) if t_max else []
    for t in range(t_max + 1):
        positions[t] = x
        sizes[t] = cmap.size(x)
        labels[t] = cmap.label(x) if sizes[t] > 0 else -1
        if t < t_max:
            x = step(cmap, x, params, us[t])
    return t_max + 1


def continuize(traj, seed, stream=0):
    """
    Attach rate-1 exponential holding times to a discrete trajectory.

    The result visits exactly the same positions; position k is entered at
    time S_k, the sum of the first k holding times.
    """
    if traj.continuous:
        raise ParameterError("trajectory is already continuized")
    n = len(traj.positions)
    if n == 0:
        return replace(traj, times=np.zeros(0), continuous=True)
    hold = rng.exponentials(seed, stream, n - 1)
    times = np.concatenate([[0.0], np.cumsum(hold)])
    meta = dict(traj.meta, clock_seed=int(seed), clock_stream=stream)
    return replace(traj, times=times, continuous=True, meta=meta)
