import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from clusterwalk.errors import (CapacityError, GrowthCapError, OutOfRegionError,
                                ParameterError, SupercriticalError)
from clusterwalk.lattice import (BoxSpec, ClusterMap, Environment, LazyClusterMap,
                                 LazyEnvironment, cluster_size, cluster_tail, exact_tail_1d,
                                 field_status, grow_cluster, holes, label_clusters,
                                 sample_environment, tail_fit)
from oracles import exterior, flood_fill_size, tail_1d_enumerated, union_find_sizes


# --- boxes ---------------------------------------------------------------

@pytest.mark.parametrize("n,lo,hi", [(1, 0, 0), (2, 0, 1), (3, -1, 1), (4, -1, 2), (7, -3, 3)])
def test_box_bounds_half_open(n, lo, hi):
    box = BoxSpec(n, 2)
    assert (box.lo, box.hi) == (lo, hi)
    assert box.volume == n * n
    members = [x for x in range(-n, n + 1) if -n < 2 * x <= n]
    assert members == list(range(lo, hi + 1))


def test_box_rejects_bad_sizes():
    with pytest.raises(ParameterError):
        BoxSpec(0, 2)
    with pytest.raises(ParameterError):
        BoxSpec(4, 4)


def test_box_index_matches_sites():
    box = BoxSpec(5, 3)
    for k, s in enumerate(box.sites()):
        assert box.index(tuple(s)) == k


# --- environments --------------------------------------------------------

def test_tiny_p_closes_everything():
    env = sample_environment(1e-9, BoxSpec(8, 2), seed=0)
    assert env.box_status().sum() == 0
    cmap = ClusterMap(env)
    assert all(cmap.size(tuple(x)) == 0 for x in env.box.sites())


def test_environment_deterministic():
    a = sample_environment(0.3, BoxSpec(4, 2), seed=42)
    b = sample_environment(0.3, BoxSpec(4, 2), seed=42)
    assert np.array_equal(a.status, b.status)
    assert not a.status.flags.writeable


def test_open_fraction_over_many_seeds():
    # independent count straight from the field, no Environment involved
    lo = (BoxSpec(64, 2).lo,) * 2
    fracs = [field_status(0.3, s, 0, lo, (64, 64)).mean() for s in range(10**4)]
    assert abs(np.mean(fracs) - 0.3) < 0.01
    env = sample_environment(0.3, BoxSpec(64, 2), seed=5)
    assert abs(env.open_fraction() - 0.3) < 0.03


def test_environment_is_restriction_of_field():
    # statuses depend only on the site, so a bigger sample contains a smaller one
    small = sample_environment(0.3, BoxSpec(8, 2), seed=3, margin=2)
    big = sample_environment(0.3, BoxSpec(8, 2), seed=3, margin=6)
    for x in small.grid_box.sites():
        assert small.status_at(tuple(x)) == big.status_at(tuple(x))


def test_parameter_and_capacity_errors():
    with pytest.raises(ParameterError):
        sample_environment(1.2, BoxSpec(4, 2), 0)
    with pytest.raises(ParameterError):
        sample_environment(0.0, BoxSpec(4, 2), 0)
    with pytest.raises(CapacityError):
        sample_environment(0.3, BoxSpec(64, 3), 0, max_sites=1000)


def test_margin_escalation_leaves_no_cluster_on_shell():
    env = sample_environment(0.5, BoxSpec(16, 2), seed=1, margin=1)
    cmap = ClusterMap(env)
    box = env.box
    ring = BoxSpec(box.n + 2, 2)
    shell_labels = set(np.concatenate([cmap.label_grid[0], cmap.label_grid[-1],
                                       cmap.label_grid[:, 0], cmap.label_grid[:, -1]]))
    for x in ring.sites():
        lab = cmap.label(tuple(x))
        assert lab < 0 or lab not in shell_labels
    assert env.margin_escalations >= 1


def test_status_outside_region_raises():
    env = sample_environment(0.3, BoxSpec(4, 2), seed=0, margin=1)
    with pytest.raises(OutOfRegionError):
        env.status_at((1000, 0))
    with pytest.raises(OutOfRegionError):
        ClusterMap(env).size((1000, 0))


# --- labeling ------------------------------------------------------------

def test_all_closed_has_no_clusters():
    env = Environment.from_array(np.zeros((6, 6), dtype=np.uint8))
    cmap = ClusterMap(env)
    assert cmap.sizes.size == 0
    assert (cmap.size_grid == 0).all()


def test_one_dimensional_hand_case():
    env = Environment.from_array(np.array([1, 1, 0, 1]), box=BoxSpec(4, 1))
    cmap = ClusterMap(env)
    assert sorted(cmap.sizes) == [1, 2]
    lo = env.box.lo
    assert [cmap.size((lo + i,)) for i in range(4)] == [2, 2, 0, 1]
    assert cmap.members((lo,)) == {(lo,), (lo + 1,)}


def test_labeling_matches_union_find_and_scipy():
    env = sample_environment(0.3, BoxSpec(32, 2), seed=9)
    cmap = ClusterMap(env)
    assert list(cmap.size_multiset()) == union_find_sizes(env.status)
    lab, k = ndimage.label(env.status)
    assert k == cmap.sizes.size
    assert sorted(np.bincount(lab.ravel())[1:]) == list(cmap.size_multiset())


def test_labeling_3d_matches_union_find():
    env = sample_environment(0.25, BoxSpec(8, 3), seed=2)
    assert list(ClusterMap(env).size_multiset()) == union_find_sizes(env.status)


def test_sizes_match_flood_fill_per_query():
    env = sample_environment(0.4, BoxSpec(12, 2), seed=4)
    cmap = ClusterMap(env)
    for x in env.box.sites():
        x = tuple(int(v) for v in x)
        assert cluster_size(cmap, x) == flood_fill_size(env.status, env.origin, x)


def test_closed_and_isolated_sites():
    a = np.zeros((5, 5), dtype=np.uint8)
    a[2, 2] = 1
    env = Environment.from_array(a)
    cmap = ClusterMap(env)
    assert cmap.size((0, 0)) == 1
    assert cmap.size((1, 0)) == 0


def test_truncated_scope_cuts_clusters_at_the_box():
    # a line crossing the whole box and beyond
    a = np.zeros((8, 8), dtype=np.uint8)
    a[4, :] = 1
    box = BoxSpec(4, 2)
    env_m = Environment(box, a, margin=2)
    env_t = Environment(box, a[2:6, 2:6], scope="truncated")
    # grid row 4 is lattice coordinate 1 on the first axis
    assert ClusterMap(env_m).size((1, 0)) == 8
    assert ClusterMap(env_t).size((1, 0)) == 4
    # neighbours just outside the box exist and are closed
    assert ClusterMap(env_t).size((1, 3)) == 0


# --- lazy growth ---------------------------------------------------------

def test_closed_root_gives_empty_cluster():
    env = LazyEnvironment(0.3, preset={(0, 0): 0}, d=2)
    g = grow_cluster(env, (0, 0))
    assert g.cluster == set() and g.boundary == set()
    assert env.is_sampled((0, 0)) and env.status((0, 0)) == 0


def test_one_dimensional_growth_trace():
    env = LazyEnvironment(0.5, d=1, preset={(0,): 1, (1,): 1, (2,): 0, (-1,): 0})
    g = grow_cluster(env, (0,))
    assert g.cluster == {(0,), (1,)}
    assert g.boundary == {(-1,), (2,)}
    assert g.generations == {(0,): 0, (1,): 1, (-1,): 1, (2,): 2}
    assert set(env.sampled) == {(-1,), (0,), (1,), (2,)}


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([1, 2, 3]))
def test_growth_invariants(seed, d):
    env = LazyEnvironment(0.3 if d > 1 else 0.6, seed, d=d)
    g = grow_cluster(env, (0,) * d)
    # the boundary is closed and is exactly the outer neighbourhood
    nb = set()
    for y in g.cluster:
        for ax in range(d):
            for s in (1, -1):
                z = list(y)
                z[ax] += s
                nb.add(tuple(z))
    assert g.boundary == nb - g.cluster
    assert all(env.status(z) == 0 for z in g.boundary)
    # every non-root cluster site has a neighbour one generation earlier
    for y in g.cluster - {(0,) * d}:
        m = g.generations[y]
        assert any(g.generations.get(z) == m - 1 and z in g.cluster
                   for z in nb | g.cluster if sum(abs(a - b) for a, b in zip(y, z)) == 1)


def test_lazy_growth_matches_eager_labels():
    box = BoxSpec(24, 2)
    env = sample_environment(0.35, box, seed=13)
    eager = ClusterMap(env)
    lazy = LazyEnvironment(0.35, 13, d=2)
    for x in [(0, 0), (3, -2), (-5, 7), (10, 10)]:
        assert grow_cluster(lazy, x).size == eager.size(x)


def test_replay_reproduces_environment():
    env = sample_environment(0.3, BoxSpec(12, 2), seed=8)
    lazy = LazyEnvironment.replay(env)
    cm = ClusterMap(env)
    for x in env.box.sites():
        x = tuple(int(v) for v in x)
        assert grow_cluster(lazy, x).size == cm.size(x)
    assert not lazy.is_pure_field


def test_lazy_statuses_independent_of_query_order():
    a = LazyEnvironment(0.3, 5, d=2)
    b = LazyEnvironment(0.3, 5, d=2)
    pts = [(i, j) for i in range(-6, 6) for j in range(-6, 6)]
    sa = [a.status(x) for x in pts]
    sb = [b.status(x) for x in reversed(pts)][::-1]
    assert sa == sb


def test_lazy_cluster_map_caches_whole_cluster():
    env = LazyEnvironment(0.4, 2, d=2)
    cmap = label_clusters(env)
    assert isinstance(cmap, LazyClusterMap)
    g = grow_cluster(LazyEnvironment(0.4, 2, d=2), (0, 0))
    assert cmap.size((0, 0)) == g.size
    labels = {cmap.label(y) for y in g.cluster}
    assert len(labels) <= 1


def test_growth_cap_carries_partial_cluster():
    env = LazyEnvironment(0.9, 0, d=2)
    with pytest.raises(GrowthCapError) as info:
        grow_cluster(env, (0, 0), cap=50)
    assert info.value.partial.size > 50
    assert info.value.exit_code == 3


# --- holes ---------------------------------------------------------------

def test_single_site_has_no_holes():
    assert holes({(0, 0)}) == set()


def test_square_perimeter_hole():
    ring = {(i, j) for i in range(3) for j in range(3)} - {(1, 1)}
    assert holes(ring) == {(1, 1)}


def test_diagonal_gap_is_not_a_hole():
    # nearest-neighbour paths cannot cross diagonal contacts, so this is still enclosed
    ring = {(0, 1), (1, 0), (2, 1), (1, 2)}
    assert holes(ring) == {(1, 1)}
    opened = ring - {(0, 1)}
    assert holes(opened) == set()


@settings(max_examples=40, deadline=None)
@given(st.sets(st.tuples(st.integers(0, 7), st.integers(0, 7)), min_size=1, max_size=40))
def test_holes_partition_the_bounding_box(region):
    lo = np.min(list(region), axis=0) - 1
    hi = np.max(list(region), axis=0) + 1
    h = holes(region)
    ext = exterior(region, lo, hi)
    allsites = {(i, j) for i in range(lo[0], hi[0] + 1) for j in range(lo[1], hi[1] + 1)}
    assert h.isdisjoint(region) and h.isdisjoint(ext)
    assert h | ext | region == allsites


def test_holes_3d():
    cube = {(i, j, k) for i in range(3) for j in range(3) for k in range(3)} - {(1, 1, 1)}
    assert holes(cube) == {(1, 1, 1)}


# --- tails ---------------------------------------------------------------

def test_exact_1d_tail_matches_enumeration():
    for k in range(8):
        assert abs(exact_tail_1d(0.3, k) - tail_1d_enumerated(0.3, k)) < 1e-12


def test_tail_small_p_single_site_dominates():
    stats = cluster_tail(0.01, 2, 20000, seed=1)
    assert abs(stats.counts[0] - 0.01) < 0.003
    assert stats.counts.get(1, 0.0) < 0.002


def test_tail_is_monotone_and_decays():
    stats = cluster_tail(0.3, 2, 5000, seed=2)
    freqs = [stats.counts[N] for N in sorted(stats.counts)]
    assert all(a >= b for a, b in zip(freqs, freqs[1:]))
    assert stats.fitted_slope < 0


def test_tail_requires_samples_and_guard():
    with pytest.raises(ParameterError):
        cluster_tail(0.3, 2, 10, seed=0)
    with pytest.raises(ParameterError):
        cluster_tail(0.6, 2, 1000, seed=0)


def test_supercritical_detection():
    with pytest.raises(SupercriticalError):
        cluster_tail(0.7, 2, 1000, seed=0, cap=200, override=True)


def test_tail_fit_on_exact_geometric():
    sizes = np.random.default_rng(0).geometric(0.3, 20000)
    counts, hits, slope, r2 = tail_fit(sizes)
    assert abs(slope - np.log(0.7)) < 0.05 and r2 > 0.99
