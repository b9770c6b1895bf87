"""Ellipticity of the constrained Hessian against the spectral gap.

For a diagonal operator the smallest curvature across the manifold equals
lambda_{N+1} - lambda_N. A tie across the cut makes the gap zero and the
minimizer non-unique; a tie inside the block is harmless.

    python3 demos/ellipticity_and_gap.py
"""
from grassdescent import diagnostics, operators, problems, solvers
from grassdescent.manifold import subspace_distance

cases = [([1, 2, 4], 1), ([1, 1, 2, 5], 3), ([3, -1, 2], 2), ([0.5, 0.7, 3, 3.1, 9], 2),
         ([1, 2, 2, 5], 2)]
for diag, N in cases:
    A = operators.build_diagonal_operator(diag)
    ref = diagnostics.dense_eigensolve(A, N)
    gap, ok = diagnostics.gap_check(ref)
    line = f"diag{tuple(diag)} N={N}: gap {gap:g}"
    if ok:
        probe = diagnostics.ellipticity_probe(problems.simplified(A, N), ref)
        line += f", probe {probe:.8f}"
    else:
        line += " (degenerate: no unique minimizer)"
    print(line)

# the multiplicity-inside case still converges
A = operators.build_diagonal_operator([1, 1, 2, 5])
p = problems.simplified(A, 3)
ref = diagnostics.dense_eigensolve(A, 3)
B = operators.build_preconditioner("identity", A, alpha=3.5)
phi0 = solvers.initial_frame(p, B, "random", seed=0)
phi, rec = solvers.solve(p, B, phi0, solvers.SolverConfig(), ref)
print(f"diag(1,1,2,5) N=3: {rec.status} in {len(rec)} rows, "
      f"error {subspace_distance(phi, ref.frame, A.h):.1e}")
