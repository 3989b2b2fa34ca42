import math

import numpy as np
import pytest

from clusterwalk.errors import ParameterError
from clusterwalk.experiments import (beta_sweep, displacement_tail, entry_probe, escape_time,
                                     estimate_exponent, fit_exponent, geometric_floor,
                                     max_displacement_samples, mean_sojourn_by_size,
                                     sojourn_statistics, time_grid)
from clusterwalk.lattice import (BoxSpec, ClusterMap, Environment, LazyEnvironment,
                                 sample_environment)
from clusterwalk.walk import KernelParams, continuize, simulate_discrete


# --- exponent ------------------------------------------------------------

def test_time_grid():
    assert time_grid(1000).tolist() == [64, 128, 256, 512, 1000]
    assert time_grid(1024).tolist() == [64, 128, 256, 512, 1024]
    with pytest.raises(ParameterError):
        time_grid(10)


def test_fit_recovers_power_law():
    grid = time_grid(2**16)
    M = np.array([[3.0 * t**0.3 for t in grid]] * 5)
    mean, slope, icpt, stderr, slopes, k = fit_exponent(grid, M)
    assert slope == pytest.approx(0.3, abs=1e-12)
    assert icpt == pytest.approx(math.log(3.0), abs=1e-12)
    assert np.allclose(slopes, 0.3)
    assert k == len(grid) // 2


def test_fit_slope_is_mean_of_replica_slopes():
    g = np.random.default_rng(0)
    grid = time_grid(2**14)
    M = g.integers(1, 200, size=(40, len(grid)))
    _, slope, _, stderr, slopes, _ = fit_exponent(grid, M)
    assert slope == pytest.approx(slopes.mean(), abs=1e-12)
    assert stderr == pytest.approx(slopes.std(ddof=1) / math.sqrt(40))


def test_exponent_preconditions():
    with pytest.raises(ParameterError):
        estimate_exponent(0.3, 2, 0.1, 10**4, 10, seed=0)
    with pytest.raises(ParameterError):
        estimate_exponent(0.3, 2, 0.1, 500, 50, seed=0)
    with pytest.raises(ParameterError):
        estimate_exponent(0.7, 2, 0.1, 10**4, 50, seed=0)


def test_simple_walk_exponent_near_half():
    est = estimate_exponent(0.3, 2, 0.0, 2**15, 100, seed=4)
    assert abs(est.slope - 0.5) < 0.08
    rows = list(est.rows())
    assert len(rows) == len(est.time_grid)
    assert set(rows[0]) == {"beta", "p", "d", "t", "mean_log_maxdisp", "slope", "stderr",
                            "replicas", "seed"}


def test_sweep_is_deterministic_and_thread_independent():
    a = beta_sweep(0.3, 2, [0.0, 2.0], 4096, 30, seed=7)
    b = beta_sweep(0.3, 2, [0.0, 2.0], 4096, 30, seed=7, workers=3)
    for x, y in zip(a, b):
        assert np.array_equal(x.mean_log_maxdisp, y.mean_log_maxdisp)
        assert x.slope == y.slope
    with pytest.raises(ParameterError):
        beta_sweep(0.3, 2, [], 4096, 30, seed=7)


def test_quenched_replicas_share_environment():
    grid = time_grid(2048)
    q = max_displacement_samples(0.3, 2, 3.0, 2048, 4, 1, grid, quenched=True)
    a = max_displacement_samples(0.3, 2, 3.0, 2048, 4, 1, grid, quenched=False)
    # replica 0 has the same environment stream in both modes
    assert np.array_equal(q[0], a[0])


# --- sojourns ------------------------------------------------------------

def line_cluster_env(s, n=9):
    """All closed except a horizontal segment of s open sites through the origin."""
    box = BoxSpec(n, 2)
    a = np.zeros(box.shape, dtype=np.uint8)
    for k in range(s):
        a[tuple(np.array((0, k - s // 2)) - box.lo)] = 1
    return Environment(box, a)


def test_no_open_site_no_sojourn():
    env = Environment.from_array(np.zeros((7, 7), dtype=np.uint8))
    tr = simulate_discrete(env, KernelParams(1.0), 500, seed=0)
    assert sojourn_statistics(tr) == []


def test_single_site_sojourns_last_one_step():
    env = line_cluster_env(1)
    tr = simulate_discrete(env, KernelParams(2.0), 20000, seed=1)
    recs = sojourn_statistics(tr)
    assert len(recs) > 10
    assert all(r.sojourn == 1 for r in recs if not r.censored)
    assert all(r.cluster_size == 1 for r in recs)


def test_sojourn_lengths_add_up():
    tr = simulate_discrete(LazyEnvironment(0.3, 3), KernelParams(1.0), 20000, seed=3)
    recs = sojourn_statistics(tr)
    assert sum(r.sojourn for r in recs) == int(np.count_nonzero(tr.labels >= 0))
    visits = {}
    for r in recs:
        visits[r.cluster_label] = visits.get(r.cluster_label, 0) + 1
        assert r.visit_index == visits[r.cluster_label]
    assert [r.entry_time for r in recs] == sorted(r.entry_time for r in recs)


def test_continuized_sojourns_are_time_spans():
    tr = simulate_discrete(LazyEnvironment(0.3, 3), KernelParams(1.0), 5000, seed=3)
    ct = continuize(tr, 5)
    dis = sojourn_statistics(tr)
    con = sojourn_statistics(ct)
    assert len(dis) == len(con)
    for a, b in zip(dis, con):
        assert b.sojourn > 0 and a.cluster_label == b.cluster_label


def test_sojourns_need_annotations_or_map():
    tr = simulate_discrete(line_cluster_env(2), KernelParams(1.0), 100, seed=0)
    bare = type(tr)(tr.positions, tr.times)
    with pytest.raises(ParameterError):
        sojourn_statistics(bare)
    recs = sojourn_statistics(bare, ClusterMap(line_cluster_env(2)))
    assert [r.sojourn for r in recs] == [r.sojourn for r in sojourn_statistics(tr)]


def test_geometric_floor_values():
    assert geometric_floor(1, 5.0, 2) == 1.0
    assert geometric_floor(2, 2.0, 2) == pytest.approx((3 + math.exp(4)) / 3)


def test_sojourns_grow_with_cluster_size_and_beat_the_floor():
    beta = 2.0
    means = {}
    for s in (1, 2, 3):
        env = line_cluster_env(s, n=7)
        recs = []
        for w in range(4):
            recs += sojourn_statistics(simulate_discrete(env, KernelParams(beta), 100000,
                                                         seed=9, walker=w))
        (mean, count), = mean_sojourn_by_size(recs).values()
        assert count >= 30
        means[s] = mean
        assert mean >= 0.8 * geometric_floor(s, beta, 2)
    assert means[1] < means[2] < means[3]
    # both sites of a pair have three closed neighbours: exactly geometric
    assert means[2] == pytest.approx(geometric_floor(2, beta, 2), rel=0.15)


# --- escape --------------------------------------------------------------

def test_escape_small_box_is_fast():
    box = BoxSpec(4, 2)
    s = escape_time(sample_environment(0.3, box, 1), box, KernelParams(0.1), 50, seed=0)
    assert s.radius == 1
    assert s.censored == 0
    assert s.median <= 3


def test_escape_simple_walk_scaling():
    med = []
    for n in (8, 16, 32):
        box = BoxSpec(n, 2)
        s = escape_time(sample_environment(0.3, box, 2), box, KernelParams(0.0), 200, seed=1)
        med.append(s.median_over_n2)
    assert max(med) / min(med) <= 3


def test_escape_far_mass_all_closed():
    box = BoxSpec(16, 2)
    env = sample_environment(1e-9, box, 0)
    s = escape_time(env, box, KernelParams(1.0), 20, seed=0)
    assert s.pi_far == pytest.approx(s.far_fraction, rel=1e-12)
    assert s.pi_far >= 0.5 * s.far_fraction


def test_escape_censoring():
    box = BoxSpec(16, 2)
    s = escape_time(sample_environment(0.3, box, 0), box, KernelParams(0.0), 20, seed=0,
                    censor=1)
    assert s.censored == 20
    assert (s.times == 1).all()


# --- entry probe ---------------------------------------------------------

def test_entry_probe_degenerate_threshold():
    n, delta = 64, 0.2
    assert delta * math.log(n) <= 1
    res = entry_probe(0.3, 2, n, delta, 0.1, seed=0, replicas=40)
    f = res.frequency
    se = math.sqrt(0.3 * 0.7 / len(res.records))
    assert f >= 0.3 - 3 * se
    assert all(r.found_big == (r.cluster_size >= 1) for r in res.records)


def test_entry_probe_records_are_fresh_clusters():
    res = entry_probe(0.3, 2, 256, 0.5, 0.1, seed=3, replicas=3, checks=True)
    assert res.records
    for r in res.records:
        assert r.tau >= 0 and r.step_index >= 1
    assert res.path_bound == pytest.approx(0.3 ** (0.5 * math.log(256)))
    assert res.eps_bound == pytest.approx(256 ** (-res.epsilon))
    assert res.epsilon > 0.5 * math.log(1 / 0.3)


def test_entry_probe_budget():
    n, theta = 256, 0.5
    res = entry_probe(0.3, 2, n, 0.5, 0.5, seed=1, theta=theta)
    assert len(res.records) <= int(n ** (1 - theta))
    with pytest.raises(ParameterError):
        entry_probe(0.3, 2, n, 0.5, 0.5, seed=1, theta=1.5)
    with pytest.raises(ParameterError):
        entry_probe(0.3, 2, n, -1, 0.5, seed=1)


# --- displacement tail ---------------------------------------------------

def test_tail_impossible_event():
    tf = displacement_tail(0.3, 2, 0.0, 1000, 50, 0.5, seed=0)
    assert tf.frequency == 0.0


def test_tail_simple_walk_rare():
    tf = displacement_tail(0.3, 2, 0.0, 10**4, 1000, 0.1, seed=2)
    assert tf.frequency <= 0.01


def test_tail_decays_in_time():
    a = displacement_tail(0.3, 2, 0.1, 10**3, 400, 0.02, seed=5)
    b = displacement_tail(0.3, 2, 0.1, 10**4, 400, 0.02, seed=5)
    assert b.frequency <= a.frequency
