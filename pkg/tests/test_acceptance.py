"""
End-to-end acceptance checks, one test per criterion.

Each test prints ``PASS`` or ``FAIL`` with the measured numbers before
asserting; the lines are also collected into the terminal summary.
Run just this file with ``pytest tests/test_acceptance.py -v``.
"""
import math

import numpy as np
import pytest
import scipy.linalg
import scipy.ndimage

from clusterwalk import rng
from clusterwalk.experiments import beta_sweep, entry_probe, escape_time
from clusterwalk.lattice import BoxSpec, cluster_tail, exact_tail_1d, sample_environment
from clusterwalk.spectral import build_chain, edge_load_bound, exact_gap
from clusterwalk.walk import KernelParams, continuize, simulate_discrete
from oracles import tail_1d_enumerated

pytestmark = pytest.mark.acceptance

RESULTS = []


def verdict(number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} [{number:>2}] {title}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def _chain(seed, n, d, beta, restriction="selfloop"):
    box = BoxSpec(n, d)
    return build_chain(sample_environment(0.3, box, seed), box, KernelParams(beta, d),
                       restriction)


def test_01_detailed_balance():
    g = np.random.default_rng(1)
    worst = 0.0
    for i in range(100):
        d = 1 + i % 2
        n = int(g.integers(2, 17))
        beta = (0.0, 0.5, 2.0)[i % 3]
        restriction = ("selfloop", "renormalize")[(i // 3) % 2]
        chain = _chain(1000 + i, n, d, beta, restriction)
        F = chain.pi[:, None] * chain.kernel
        off = ~np.eye(len(F), dtype=bool) & (chain.kernel > 0)
        rel = np.abs(F - F.T)[off] / np.maximum(F[off], 1e-300)
        worst = max(worst, float(rel.max(initial=0.0)))
    verdict(1, "detailed balance", worst <= 1e-12, f"max relative flux mismatch {worst:.2e}")


def test_02_stationary_vector_matches_eigenvector():
    # an eigenvector oracle is only as accurate as 1/gap allows, so the
    # attraction stays moderate; strongly trapping boxes are covered by test 1
    worst, gaps = 0.0, []
    for i in range(20):
        n = 3 + i % 8
        chain = _chain(2000 + i, n, 2, (0.0, 0.25, 0.5)[i % 3],
                       ("selfloop", "renormalize")[i % 2])
        w, vl = scipy.linalg.eig(chain.kernel, left=True, right=False)
        order = np.argsort(np.abs(w - 1))
        gaps.append(float(np.abs(w[order[1]] - 1)))
        v = np.real(vl[:, order[0]])
        v /= v.sum()
        worst = max(worst, float(np.abs(chain.pi - v).max()))
    verdict(2, "stationary oracle", worst <= 1e-8,
            f"max-norm distance {worst:.2e} (smallest gap {min(gaps):.2e})")


def test_03_gap_dominates_path_bound():
    margins = []
    for s in range(50):
        rep = edge_load_bound(_chain(s, 8, 2, 0.1))
        margins.append(rep.gap - rep.bound)
    m = min(margins)
    verdict(3, "gap >= 1/A", m >= 0,
            f"50/50 instances sound? {m >= 0}; min margin {m:.4g}, median {np.median(margins):.4g}")


def test_04_gap_scaling():
    med = {}
    for n in (4, 8, 12, 16):
        med[n] = float(np.median([exact_gap(_chain(s, n, 2, 0.1)) * n * n for s in range(20)]))
    ratio = max(med.values()) / min(med.values())
    shown = ", ".join(f"n={n}: {v:.3f}" for n, v in med.items())
    verdict(4, "gap scaling", ratio <= 10, f"median lambda*n^2 {shown}; spread x{ratio:.2f}")


@pytest.fixture(scope="module")
def sweep():
    ests = beta_sweep(0.3, 2, [0.0, 0.1, 5.0], 10**5, 200, seed=2024)
    return {e.beta: e for e in ests}


def test_05_diffusive_regime(sweep):
    s0, s1 = sweep[0.0], sweep[0.1]
    ok = abs(s0.slope - 0.5) <= 0.05 and 0.45 <= s1.slope <= 0.55
    verdict(5, "diffusive exponent", ok,
            f"beta=0 slope {s0.slope:.4f} +- {s0.stderr:.4f}; "
            f"beta=0.1 slope {s1.slope:.4f} +- {s1.stderr:.4f}")


def test_06_subdiffusive_regime(sweep):
    s1, s5 = sweep[0.1], sweep[5.0]
    cut = s1.slope - 2 * math.hypot(s1.stderr, s5.stderr)
    ok = s5.slope <= 0.45 and s5.slope < cut
    verdict(6, "subdiffusive exponent", ok,
            f"beta=5 slope {s5.slope:.4f} +- {s5.stderr:.4f}; cutoff {cut:.4f}")


def test_07_cluster_tail():
    t1 = cluster_tail(0.3, 1, 10**5, seed=76)
    zs = []
    for k in range(1, 6):
        exact = exact_tail_1d(0.3, k)
        assert exact == pytest.approx(tail_1d_enumerated(0.3, k), rel=1e-9)
        se = math.sqrt(exact * (1 - exact) / t1.sample_count)
        zs.append(abs(t1.exceedance(k) - exact) / se)
    ok1 = max(zs) <= 3
    t2 = cluster_tail(0.3, 2, 10**5, seed=77)
    ok2 = t2.fitted_slope < 0 and t2.r_squared >= 0.9
    verdict(7, "cluster tail", ok1 and ok2,
            f"d=1 max |z| {max(zs):.2f} over k<=5; d=2 slope {t2.fitted_slope:.4f}, "
            f"R^2 {t2.r_squared:.4f}")


def _eager_sizes(samples, seed, side=64, batch=2000):
    g = np.random.default_rng(seed)
    c = side // 2
    plane = np.zeros((3, 3, 3), dtype=bool)
    plane[1] = scipy.ndimage.generate_binary_structure(2, 1)
    out = []
    for start in range(0, samples, batch):
        b = min(batch, samples - start)
        grid = g.random((b, side, side)) < 0.3
        lab, _ = scipy.ndimage.label(grid, structure=plane)
        sizes = np.bincount(lab.ravel())
        centre = lab[:, c, c]
        out.append(np.where(centre > 0, sizes[centre], 0))
    return np.concatenate(out)


def test_08_lazy_and_eager_cluster_laws_agree():
    lazy = cluster_tail(0.3, 2, 10**5, seed=78).sizes
    eager = _eager_sizes(10**5, seed=78)
    top = int(max(lazy.max(), eager.max())) + 1
    tv = 0.5 * np.abs(np.bincount(lazy, minlength=top) / lazy.size
                      - np.bincount(eager, minlength=top) / eager.size).sum()
    verdict(8, "lazy vs eager", tv <= 0.02, f"total variation {tv:.4f}")


def test_09_escape_time_scaling():
    med = {}
    for n in (8, 16, 32):
        box = BoxSpec(n, 2)
        s = escape_time(sample_environment(0.3, box, 90 + n), box, KernelParams(0.1), 200,
                        seed=n)
        med[n] = s.median_over_n2
    ratio = max(med.values()) / min(med.values())
    shown = ", ".join(f"n={n}: {v:.4f}" for n, v in med.items())
    verdict(9, "escape time", ratio <= 4, f"median/n^2 {shown}; spread x{ratio:.2f}")


def test_10_entry_probability():
    res = entry_probe(0.3, 2, 1024, 0.5, 0.1, seed=10, replicas=6)
    steps = len(res.records)
    ok = steps >= 1000 and res.frequency >= res.path_bound
    verdict(10, "entry probability", ok,
            f"{steps} steps, frequency {res.frequency:.4f} vs p^(delta log n) "
            f"{res.path_bound:.4f}")


def test_11_continuization():
    hold = rng.exponentials(11, 0, 10**6)
    tr = simulate_discrete(sample_environment(0.3, BoxSpec(32, 2), 11), KernelParams(1.0),
                           10**4, seed=11)
    emb = continuize(tr, 11).embedded()
    same = np.array_equal(emb.positions, tr.positions) and np.array_equal(emb.times, tr.times)
    ok = abs(hold.mean() - 1) <= 0.01 and same
    verdict(11, "continuization", ok,
            f"mean holding time {hold.mean():.5f}; embedded chain identical: {same}")
