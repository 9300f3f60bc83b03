#!/usr/bin/env python3
"""Reproduce every analytic threshold at desk scale and print a summary table.

Covers: GHZ/W visibility thresholds from the trace-norm criterion, the
N-party GHZ threshold family, the four-qubit cluster-state equality case,
and the GHZ fidelity bound.
"""

import time

import numpy as np

from netcm.covariance import covariance_matrix
from netcm.criteria import ghz_fidelity_bound, trace_norm_criterion, visibility_threshold
from netcm.observables import named_observable_set
from netcm.states import cluster4_state, ghz_state, mix_white_noise, w_state
from netcm.topology import line_topology, triangle_topology


def row(label, got, expected):
    print(f"  {label:<34} {got:>12.7f}   expected {expected:>12.7f}   "
          f"diff {abs(got - expected):.2e}")


def main():
    start = time.perf_counter()
    print("visibility thresholds (trace-norm criterion)")
    thr = visibility_threshold(
        lambda v: mix_white_noise(ghz_state(3, 2), v),
        lambda rho: named_observable_set("pauli-z", rho.layout),
        "trace-norm", triangle_topology(), tol=1e-6)
    row("ghz3, pauli-z", thr, 0.5)
    thr = visibility_threshold(
        lambda v: mix_white_noise(w_state(), v),
        lambda rho: named_observable_set("w-set", rho.layout),
        "trace-norm", triangle_topology(), tol=1e-6)
    row("w, sigma_x/sigma_y set", thr, 0.75)
    for n in range(3, 7):
        topo = triangle_topology() if n == 3 else line_topology(tuple("ABCDEF"[:n]))
        thr = visibility_threshold(
            lambda v: mix_white_noise(ghz_state(n, 2), v),
            lambda rho: named_observable_set("pauli-z", rho.layout),
            "trace-norm", topo, tol=1e-6)
        row(f"ghz{n}, pauli-z", thr, 1.0 / (n - 1))

    print("\ncluster state (trace-norm equality case)")
    rho = cluster4_state()
    rep = trace_norm_criterion(
        covariance_matrix(named_observable_set("cluster-set", rho.layout), rho),
        line_topology(("A", "B", "C", "D")))
    print(f"  lhs {rep.lhs:.6f}  rhs {rep.rhs:.6f}  margin {rep.margin:+.2e}  "
          f"pass {rep.passed}")

    print("\nghz fidelity bound (trace-norm criterion, worst-case statistics)")
    bound = ghz_fidelity_bound(tol=1e-4)
    row("bound", bound, 3.0 - np.sqrt(5.0))

    print(f"\ntotal {time.perf_counter() - start:.1f} s")


if __name__ == "__main__":
    main()
