"""
Spectral gap of the box-restricted chain and the canonical-path bound.

For every ordered pair of box sites one path is fixed: starting from ``x``
the last coordinate is moved to that of ``y`` one unit step at a time,
then the one before it, and so on down to the first. With edge weights

    Q(u) = exp(beta (|C(z1)| + |C(z2)|)) / Z,      u = <z1, z2>,

the congestion

    A = max_u (1 / Q(u)) * sum_{gamma(x, y) through u} |gamma(x, y)| pi(x) pi(y)

satisfies ``gap >= 1 / A`` for the continuized chain.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import linalg

from . import rng
from .errors import CapacityError, ParameterError, StructuralError
from .lattice import ClusterMap, Environment
from .walk import RESTRICTIONS, box_size_arrays, stationary_box_measure

DENSE_LIMIT = 4096
SYMMETRY_TOL = 1e-12
SOUNDNESS_TOL = 1e-10


@dataclass
class ChainMatrix:
    box: object
    states: np.ndarray
    kernel: np.ndarray
    pi: np.ndarray
    log_pi: np.ndarray
    log_normalizer: float
    sizes: np.ndarray
    beta: float
    restriction: str = "selfloop"

    @property
    def n(self):
        return self.box.n

    @property
    def d(self):
        return self.box.d


def _cmap(source):
    return ClusterMap(source) if isinstance(source, Environment) else source


def build_chain(source, box, params, restriction="selfloop", dense_limit=DENSE_LIMIT):
    """Dense kernel and stationary vector of the walk restricted to ``box``."""
    if restriction not in RESTRICTIONS:
        raise ParameterError(f"restriction must be one of {RESTRICTIONS}, got {restriction!r}")
    N = box.volume
    if N > dense_limit:
        raise CapacityError(
            f"{N} states exceed the dense limit {dense_limit}; use sampled_edge_load instead"
        )
    cmap = _cmap(source)
    own, shifted = box_size_arrays(cmap, box)
    idx = np.arange(N).reshape(box.shape)
    logw = np.stack([params.beta * s.ravel() for s in shifted]).astype(float)
    inside = []
    targets = []
    for i in range(box.d):
        for sgn in (1, -1):
            t = np.roll(idx, -sgn, axis=i).ravel()
            edge = np.ones(box.shape, dtype=bool)
            sl = [slice(None)] * box.d
            sl[i] = -1 if sgn == 1 else 0
            edge[tuple(sl)] = False
            inside.append(edge.ravel())
            targets.append(t)
    inside = np.stack(inside)
    if restriction == "renormalize":
        logw = np.where(inside, logw, -np.inf)
    m = logw.max(axis=0)
    with np.errstate(invalid="ignore"):
        lse = m + np.log(np.exp(logw - m).sum(axis=0))
    K = np.zeros((N, N))
    rows = np.arange(N)
    for j in range(2 * box.d):
        prob = np.exp(logw[j] - lse)
        prob = np.nan_to_num(prob)
        dest = np.where(inside[j], targets[j], rows)
        np.add.at(K, (rows, dest), prob)
    if restriction == "renormalize" and N == 1:
        K[0, 0] = 1.0
    mu = stationary_box_measure(cmap, box, params, restriction)
    return ChainMatrix(box, mu.sites, K, mu.values, mu.log_values, mu.log_normalizer,
                       own.ravel().astype(np.int64), float(params.beta), restriction)


def symmetrized(chain):
    """``D^{1/2} K D^{-1/2}`` with ``D = diag(pi)``, computed in log space."""
    lp = chain.log_pi
    with np.errstate(divide="ignore"):
        S = np.exp(0.5 * (lp[:, None] - lp[None, :]) + np.log(chain.kernel))
    return S


def exact_gap(chain):
    """Spectral gap ``1 - lambda_2(K)`` of the continuized chain (generator K - I)."""
    N = chain.kernel.shape[0]
    if N < 2:
        raise ParameterError("the spectral gap needs at least two states")
    S = symmetrized(chain)
    asym = float(np.max(np.abs(S - S.T)))
    if asym > SYMMETRY_TOL:
        raise StructuralError(f"pi-symmetrized kernel is not symmetric (max asymmetry {asym:.3e})")
    S = 0.5 * (S + S.T)
    ev = linalg.eigh(S, eigvals_only=True, driver="evd")
    gap = 1.0 - ev[-2]
    if gap <= 1e-13:
        raise StructuralError(f"chain looks reducible (gap {gap:.3e})")
    return float(gap)


def eigenvalues(chain):
    S = symmetrized(chain)
    return linalg.eigh(0.5 * (S + S.T), eigvals_only=True, driver="evd")


# ----------------------------------------------------------------------------
# canonical paths


@dataclass
class CanonicalPath:
    sites: list

    @property
    def length(self):
        return len(self.sites) - 1

    def edges(self):
        return list(zip(self.sites[:-1], self.sites[1:]))


def canonical_path(x, y, box):
    """Coordinate-ordered path from x to y: last coordinate first, first coordinate last."""
    x = tuple(int(v) for v in x)
    y = tuple(int(v) for v in y)
    if not box.contains(x) or not box.contains(y):
        raise ParameterError(f"endpoints {x}, {y} must lie in the box")
    cur = list(x)
    sites = [x]
    for a in range(box.d - 1, -1, -1):
        s = 1 if y[a] > cur[a] else -1
        while cur[a] != y[a]:
            cur[a] += s
            sites.append(tuple(cur))
    return CanonicalPath(sites)


def _edge_key(z1, z2):
    return (z1, z2) if z1 <= z2 else (z2, z1)


@njit(cache=True)
def _add_path(coords, n, i, j, pi, loads, cur):
    d = coords.shape[1]
    length = 0
    for a in range(d):
        length += abs(coords[j, a] - coords[i, a])
    w = length * pi[i] * pi[j]
    for a in range(d):
        cur[a] = coords[i, a]
    for a in range(d - 1, -1, -1):
        s = 1 if coords[j, a] > cur[a] else -1
        while cur[a] != coords[j, a]:
            if s < 0:
                cur[a] -= 1
            f = 0
            for b in range(d):
                f = f * n + cur[b]
            loads[f, a] += w
            if s > 0:
                cur[a] += 1


@njit(cache=True)
def _stream_loads(coords, n, pi):
    N, d = coords.shape
    loads = np.zeros((N, d))
    cur = np.zeros(d, dtype=np.int64)
    for i in range(N):
        for j in range(N):
            if i != j:
                _add_path(coords, n, i, j, pi, loads, cur)
    return loads


@njit(cache=True)
def _sampled_loads(coords, n, pi, src, dst):
    N, d = coords.shape
    loads = np.zeros((N, d))
    cur = np.zeros(d, dtype=np.int64)
    for k in range(src.size):
        _add_path(coords, n, src[k], dst[k], pi, loads, cur)
    return loads


@dataclass
class SpectralReport:
    n: int
    d: int
    beta: float
    gap: float
    bound: float
    A: float
    log_A: float
    worst_edge: tuple
    edge_loads: dict = field(repr=False, default_factory=dict)
    restriction: str = "selfloop"
    approximate: bool = False

    @property
    def margin(self):
        return self.gap - self.bound if self.gap is not None else None

    @property
    def lambda_times_n2(self):
        return self.gap * self.n**2 if self.gap is not None else None


def edge_load_bound(chain, paths=None, verify=True):
    """
    Congestion A of the canonical paths and the bound 1/A on the gap.

    ``paths`` may be a callable ``(x, y) -> sequence of sites`` replacing
    the coordinate-ordered construction (slow, pure Python). With
    ``verify`` the exact gap is computed and ``gap >= 1/A`` is enforced.
    """
    box = chain.box
    N = box.volume
    coords = chain.states - box.lo
    if paths is None:
        raw = _stream_loads(coords, box.n, chain.pi)
    else:
        raw = np.zeros((N, box.d))
        for i in range(N):
            for j in range(N):
                if i == j:
                    continue
                x, y = tuple(chain.states[i]), tuple(chain.states[j])
                sites = [tuple(int(v) for v in s) for s in paths(x, y)]
                w = (len(sites) - 1) * chain.pi[i] * chain.pi[j]
                for z1, z2 in zip(sites[:-1], sites[1:]):
                    lo, hi = _edge_key(z1, z2)
                    a = next(k for k in range(box.d) if lo[k] != hi[k])
                    raw[box.index(lo), a] += w

    loads = {}
    best = -math.inf
    for a in range(box.d):
        for f in range(N):
            z1 = tuple(int(v) for v in chain.states[f])
            if z1[a] == box.hi:
                continue
            z2 = list(z1)
            z2[a] += 1
            z2 = tuple(z2)
            g = box.index(z2)
            log_q = chain.beta * (chain.sizes[f] + chain.sizes[g]) - chain.log_normalizer
            flow = 0.5 * (chain.pi[f] * chain.kernel[f, g] + chain.pi[g] * chain.kernel[g, f])
            closed = math.exp(log_q)
            if not math.isclose(flow, closed, rel_tol=1e-9, abs_tol=1e-300):
                raise StructuralError(
                    f"edge weight {closed!r} disagrees with the directed-flow average {flow!r}"
                )
            with np.errstate(divide="ignore"):
                log_ratio = math.log(raw[f, a]) - log_q if raw[f, a] > 0 else -math.inf
            loads[(z1, z2)] = log_ratio
            best = max(best, log_ratio)
    if not loads:
        raise ParameterError("box has no edges")
    tied = [e for e, v in loads.items() if v >= best - 1e-12 * max(1.0, abs(best))]
    worst = min(tied)
    A = math.exp(best) if best < 709 else math.inf
    gap = exact_gap(chain) if verify else None
    report = SpectralReport(box.n, box.d, chain.beta, gap, 1.0 / A, A, best, worst,
                            {e: math.exp(v) for e, v in loads.items()}, chain.restriction)
    if verify and gap < report.bound - SOUNDNESS_TOL:
        raise StructuralError(f"gap {gap} is below the canonical-path bound {report.bound}")
    return report


def sampled_edge_load(source, box, params, pairs, seed, restriction="selfloop"):
    """
    Approximate congestion from ``pairs`` uniformly sampled ordered pairs.

    Each sampled pair carries weight ``N (N - 1) / pairs`` (Horvitz-Thompson),
    so edge loads are unbiased. No dense matrix is built; the result has
    ``approximate=True`` and no gap.
    """
    cmap = _cmap(source)
    mu = stationary_box_measure(cmap, box, params, restriction)
    own = box_size_arrays(cmap, box)[0].ravel()
    N = box.volume
    u = rng.uniforms(seed, rng.AUX, 0, 2 * pairs)
    i = np.minimum((u[:pairs] * N).astype(np.int64), N - 1)
    j = np.minimum((u[pairs:] * (N - 1)).astype(np.int64), N - 2)
    j = np.where(j >= i, j + 1, j)
    coords = mu.sites - box.lo
    raw = _sampled_loads(coords, box.n, mu.values, i, j) * (N * (N - 1) / pairs)
    loads = {}
    best = -math.inf
    for a in range(box.d):
        for f in np.nonzero(raw[:, a])[0]:
            z1 = tuple(int(v) for v in mu.sites[f])
            z2 = list(z1)
            z2[a] += 1
            g = box.index(z2)
            log_ratio = math.log(raw[f, a]) - (params.beta * (own[f] + own[g]) - mu.log_normalizer)
            loads[(z1, tuple(z2))] = math.exp(log_ratio)
            best = max(best, log_ratio)
    worst = min(e for e, v in loads.items() if math.log(v) >= best - 1e-12 * max(1.0, abs(best)))
    A = math.exp(best)
    return SpectralReport(box.n, box.d, params.beta, None, 1.0 / A, A, best, worst, loads,
                          restriction, approximate=True)


# ----------------------------------------------------------------------------
# line-mass diagnostics


def edge_sets(u, box):
    """
    ``(I_u, R_u, I~_u)`` for the edge ``u = (z, z + e_a)``.

    Pairs whose path crosses ``u`` in the + direction have ``x`` in I_u and
    ``y`` in R_u; ``I~_u`` is the line through z that contains I_u.
    """
    z1, z2 = (tuple(int(v) for v in w) for w in u)
    diff = [k for k in range(box.d) if z1[k] != z2[k]]
    if len(diff) != 1 or abs(z1[diff[0]] - z2[diff[0]]) != 1:
        raise ParameterError(f"{u} is not a lattice edge")
    a = diff[0]
    z = min(z1, z2)
    I, R, It = set(), set(), set()
    for w in map(tuple, box.sites().tolist()):
        before = all(w[k] == z[k] for k in range(a))
        after = all(w[k] == z[k] for k in range(a + 1, box.d))
        if before:
            It.add(w)
            if w[a] <= z[a]:
                I.add(w)
        if after and w[a] > z[a]:
            R.add(w)
    return I, R, It


def column_mass_diagnostic(chain, axes=None):
    """
    ``Z / n * sum_{x on line} pi^(n)(x)`` for every axis-parallel line of the box.

    Keys are ``(axis, other_coordinates)``. A value of order one means the
    line carries mass of order ``n / Z``.
    """
    box = chain.box
    axes = range(box.d) if axes is None else axes
    grid = chain.log_pi.reshape(box.shape)
    out = {}
    for a in axes:
        m = grid.max(axis=a, keepdims=True)
        lse = (m + np.log(np.exp(grid - m).sum(axis=a, keepdims=True))).squeeze(axis=a)
        vals = np.exp(lse + chain.log_normalizer - math.log(box.n))
        for idx in np.ndindex(vals.shape):
            key = tuple(int(box.lo + i) for i in idx)
            out[(a, key)] = float(vals[idx])
    return out


def set_mass(chain, sites):
    """``sum_{x in sites} pi^(n)(x)``."""
    box = chain.box
    return float(sum(chain.pi[box.index(s)] for s in sites))
