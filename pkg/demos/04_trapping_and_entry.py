"""
Sojourns inside clusters, escape from a box, and entering large clusters.

Three views of how clusters hold the walker: mean time spent per visit
as a function of cluster size, the time to leave the centre of a box on
the diffusive scale, and how often newly explored territory puts the
walker in a cluster of logarithmic size.

    python demos/04_trapping_and_entry.py
"""
import math

from clusterwalk.experiments import (entry_probe, escape_time, geometric_floor,
                                     mean_sojourn_by_size, sojourn_statistics)
from clusterwalk.lattice import BoxSpec, LazyEnvironment, sample_environment
from clusterwalk.walk import KernelParams, simulate_discrete

beta = 1.0
records = []
for r in range(20):
    tr = simulate_discrete(LazyEnvironment(0.3, 100 + r), KernelParams(beta), 20000, seed=r)
    records += sojourn_statistics(tr)
print(f"Mean sojourn per visit at beta={beta} (20 walkers x 20000 steps):")
print("   size   visits   mean     floor")
for size, (mean, count) in mean_sojourn_by_size(records).items():
    if count >= 5:
        print(f"   {size:<6} {count:<8} {mean:<8.2f} {geometric_floor(size, beta, 2):.2f}")

print("\nEscape from the centre of a box at beta=0.1 (median steps / n^2):")
for n in (8, 16, 32):
    box = BoxSpec(n, 2)
    s = escape_time(sample_environment(0.3, box, n), box, KernelParams(0.1), 100, seed=n)
    print(f"   n={n:>2}: {s.median_over_n2:.4f}   (stationary mass far out {s.pi_far:.2f})")

n, delta = 1024, 0.5
res = entry_probe(0.3, 2, n, delta, 0.1, seed=4, replicas=3)
print(f"\nEntry probe, n={n}: {len(res.records)} exploration steps; a fresh cluster of size "
      f">= {res.threshold:.2f} was found with frequency {res.frequency:.3f},")
print(f"above the single-path lower bound p^(delta log n) = {res.path_bound:.4f}"
      f" (log ratio {math.log(res.frequency / res.path_bound):.2f}).")
