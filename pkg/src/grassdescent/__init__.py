"""Preconditioned gradient descent on Grassmann manifolds.

Computes invariant subspaces of symmetric operators, and minimizers of
orthogonality-constrained energies, by projected, tangent-projected and
geodesic descent; ships a dense oracle and executable convergence checks.
"""
from .errors import (BudgetExceeded, ConfigError, DimensionMismatch, GrassDescentError,
                     InsufficientData, InvalidArgument, MissingOperator, NoConvergence,
                     NoDecrease, NotPositiveDefinite, NotTangent, RankDeficient, TooFar)
from .operators import (Grid1D, Preconditioner, SymmetricOperator, build_diagonal_operator,
                        build_grid, build_preconditioner, build_schrodinger_1d, check_symmetry)
from .manifold import (build_xhat_dense, closest_representative, geodesic_step, gram,
                       orthonormalize, project_tangent, projector_distance, subspace_distance)
from .problems import (Problem, energy, gradient, gradient_operator, lagrange_matrix, residual,
                       residual_norms, simplified, toy_lda)
from .record import ConvergenceRecord, IterationRow
from .solvers import (Armijo, SolverConfig, armijo_search, initial_frame, optimal_alpha,
                      scf_solve, solve, step_alg1, step_alg2, step_alg3)
from .diagnostics import (BhatMetric, OracleReference, TheoryVerdict, bhat_apply_inverse,
                          contraction_estimate, dense_eigensolve, ellipticity_probe,
                          energy_quadraticity, gap_check, residual_equivalence, subspace_error)

__version__ = "0.1.0"
