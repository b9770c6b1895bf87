"""Lowest four states of the 1D harmonic oscillator by preconditioned descent.

Runs the three update rules from a start near the exact subspace and prints
the error history next to the dense reference. Two preconditioners are tried:
the kinetic stencil shifted by one, and the operator itself.

    python3 demos/harmonic_oscillator.py
"""
import time

import numpy as np

from grassdescent import diagnostics, operators, problems, solvers
from grassdescent.manifold import subspace_distance

grid = operators.build_grid(400, -10.0, 10.0)
A = operators.build_schrodinger_1d(grid, operators.harmonic)
p = problems.simplified(A, 4)

t0 = time.perf_counter()
ref = diagnostics.dense_eigensolve(A, 4)
print(f"reference eigenvalues {np.round(ref.eigenvalues, 6)} ({time.perf_counter() - t0:.1f} s)")
print(f"gap to the fifth state: {ref.gap:.6f}")

for variant in ("shifted", "inverse_a"):
    B = operators.build_preconditioner(variant, A, shift=1.0, alpha=1.0)
    phi0 = solvers.initial_frame(p, B, "perturbed_oracle", seed=0, scale=0.2, ref_frame=ref.frame)
    print(f"\n{variant} preconditioner, start error {diagnostics.subspace_error(ref, phi0):.3f}")
    for alg in ("alg1", "alg2", "alg3"):
        phi, rec = solvers.solve(p, B, phi0, solvers.SolverConfig(algorithm=alg), ref)
        err = rec.errors
        chi = diagnostics.contraction_estimate(rec)[0]
        print(f"  {alg}: {rec.status:14s} rows={len(rec):3d} "
              f"error {err[0]:.2e} -> {err[-1]:.2e}  chi_hat={chi:.4f}  "
              f"distance to reference {subspace_distance(phi, ref.frame, A.h):.1e}")
