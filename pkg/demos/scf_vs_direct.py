"""Toy density-coupled problem: direct descent against a self-consistent loop.

The direct solver treats the full functional; the SCF loop freezes the
density-dependent operator, solves that linear problem, and repeats. Both
should end on the same subspace.

    python3 demos/scf_vs_direct.py
"""
from grassdescent import operators, problems, solvers
from grassdescent.manifold import subspace_distance

A = operators.build_schrodinger_1d(operators.build_grid(400, -10.0, 10.0), operators.harmonic)
B = operators.build_preconditioner("inverse_a", A)

for kappa in (0.0, 0.5, 2.0):
    p = problems.toy_lda(A, 4, kappa)
    phi0 = solvers.initial_frame(p, B, "random", seed=0)
    phi_d, rd = solvers.solve(p, B, phi0, solvers.SolverConfig(tol=1e-10))
    phi_s, rs = solvers.scf_solve(p, B, phi0, solvers.SolverConfig(algorithm="scf", tol=1e-10))
    inner = sum(1 for s in rs.inner_statuses if s == "converged")
    print(f"kappa={kappa}: direct {rd.status} in {len(rd)} rows, "
          f"scf {rs.status} in {len(rs)} outer rows ({inner} converged inner solves)")
    print(f"  energies {problems.energy(p, phi_d):.12f} / {problems.energy(p, phi_s):.12f}, "
          f"distance {subspace_distance(phi_d, phi_s, A.h):.1e}")
