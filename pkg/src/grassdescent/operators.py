"""Discretized symmetric operators and preconditioners on a uniform 1D grid.

All L2 pairings use the grid-weighted product ``<u, v> = h * sum(u * v)``.
Grid functions are 1D arrays of length ``n``; blocks of ``N`` functions are
``(n, N)`` arrays (one function per column).
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import InvalidArgument, NotPositiveDefinite, BudgetExceeded

DENSE_BUDGET = 2000


def inner(u, v, h=1.0):
    """Grid-weighted inner product of two grid functions."""
    return h * float(np.dot(u, v))


@dataclass(frozen=True)
class Grid1D:
    n: int
    a: float
    b: float

    @property
    def h(self):
        return (self.b - self.a) / (self.n + 1)

    @property
    def points(self):
        return self.a + (np.arange(self.n) + 1) * self.h


def build_grid(n, a, b):
    if int(n) != n or n < 2:
        raise InvalidArgument(f"grid needs n >= 2 interior points, got {n}")
    if not a < b:
        raise InvalidArgument(f"grid endpoints must satisfy a < b, got a={a}, b={b}")
    return Grid1D(int(n), float(a), float(b))


def _tridiag_matvec(diag, off, u):
    out = diag.reshape((-1,) + (1,) * (u.ndim - 1)) * u
    if off.size:
        o = off.reshape((-1,) + (1,) * (u.ndim - 1))
        out[:-1] += o * u[1:]
        out[1:] += o * u[:-1]
    return out


@dataclass(frozen=True, eq=False)
class SymmetricOperator:
    """Self-adjoint map on grid functions.

    Either ``bands`` (a ``(diag, off)`` pair describing a symmetric
    tridiagonal matrix) or ``matrix`` must be given. ``apply`` works on single
    functions and on ``(n, N)`` blocks alike.
    """

    n: int
    h: float = 1.0
    bands: tuple = None
    matrix: np.ndarray = None
    grid: Grid1D = None
    name: str = ""
    _norm: list = field(default_factory=list, repr=False)

    def apply(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape[0] != self.n:
            raise InvalidArgument(f"operator of size {self.n} applied to length {u.shape[0]}")
        if self.bands is not None:
            return _tridiag_matvec(self.bands[0], self.bands[1], u)
        return self.matrix @ u

    __call__ = apply

    @property
    def has_dense(self):
        return self.matrix is not None or self.n <= DENSE_BUDGET

    def dense(self):
        """Dense n x n realization (oracle use only)."""
        if self.matrix is not None:
            return self.matrix.copy()
        if self.n > DENSE_BUDGET:
            raise BudgetExceeded(f"dense realization limited to n <= {DENSE_BUDGET}, got {self.n}")
        d, e = self.bands
        return np.diag(d) + np.diag(e, 1) + np.diag(e, -1)

    def norm_estimate(self):
        """Cheap upper bound on the spectral norm (Gershgorin / Frobenius)."""
        if not self._norm:
            if self.bands is not None:
                d, e = np.abs(self.bands[0]), np.abs(self.bands[1])
                row = d.copy()
                row[:-1] += e
                row[1:] += e
                self._norm.append(float(row.max()))
            else:
                self._norm.append(float(np.linalg.norm(self.matrix)))
        return self._norm[0]

    def plus_diagonal(self, values, name=None):
        """Return ``self + diag(values)`` (same weight, grid and structure)."""
        values = np.broadcast_to(np.asarray(values, dtype=float), (self.n,))
        if self.bands is not None:
            return SymmetricOperator(self.n, self.h, (self.bands[0] + values, self.bands[1]),
                                     grid=self.grid, name=name or self.name)
        return SymmetricOperator(self.n, self.h, matrix=self.matrix + np.diag(values),
                                 grid=self.grid, name=name or self.name)

    @classmethod
    def from_dense(cls, matrix, h=1.0, name="dense"):
        """Wrap an explicit matrix. Symmetry is *not* enforced; see `check_symmetry`."""
        m = np.array(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidArgument("matrix must be square")
        return cls(m.shape[0], float(h), matrix=m, name=name)


def kinetic_bands(grid):
    """Bands of the 3-point Dirichlet discretization of -1/2 d^2/dx^2."""
    h2 = grid.h ** 2
    return np.full(grid.n, 1.0 / h2), np.full(grid.n - 1, -0.5 / h2)


def build_schrodinger_1d(grid, potential):
    """-1/2 Laplacian plus a multiplicative potential ``V(x)`` on ``grid``."""
    v = np.broadcast_to(np.asarray(potential(grid.points), dtype=float), (grid.n,))
    if not np.all(np.isfinite(v)):
        raise InvalidArgument("potential is not finite at every grid point")
    d, e = kinetic_bands(grid)
    return SymmetricOperator(grid.n, grid.h, (d + v, e), grid=grid, name="schrodinger")


def build_diagonal_operator(values, h=1.0):
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise InvalidArgument("diagonal operator needs at least one value")
    return SymmetricOperator(values.size, float(h), (values.copy(), np.zeros(values.size - 1)),
                             name="diagonal")


def harmonic(x):
    return 0.5 * x ** 2


def zero(x):
    return np.zeros_like(x)


def square_well(x, depth=-5.0, half_width=2.0):
    """Finite well of given depth; zero outside ``|x| < half_width``."""
    return np.where(np.abs(x) < half_width, depth, 0.0)


POTENTIALS = {"zero": zero, "harmonic": harmonic, "well": square_well}


class Preconditioner:
    """Applyable inverse ``B^{-1} = (1/alpha) * base^{-1}`` of an SPD operator.

    Variants:

    ``identity``
        ``base = I``.
    ``shifted``
        ``base = -1/2 Laplacian + C`` on the operator's grid.
    ``inverse_a``
        ``base = A``; simultaneous inverse iteration.

    The banded Cholesky factor of ``base`` is computed once here.
    """

    VARIANTS = ("identity", "shifted", "inverse_a")

    def __init__(self, variant, n, alpha=1.0, shift=0.0, base_bands=None, base_matrix=None):
        if variant not in self.VARIANTS:
            raise InvalidArgument(f"unknown preconditioner variant {variant!r}")
        if not alpha > 0:
            raise InvalidArgument(f"alpha must be positive, got {alpha}")
        self.variant = variant
        self.n = n
        self.alpha = float(alpha)
        self.shift = float(shift)
        self._bands = base_bands
        self._chol = None
        self._dense_chol = None
        try:
            if base_bands is not None:
                d, e = base_bands
                ab = np.zeros((2, n))
                ab[0, 1:] = e
                ab[1] = d
                self._chol = scipy.linalg.cholesky_banded(ab, lower=False)
            elif base_matrix is not None:
                self._base_matrix = np.asarray(base_matrix, dtype=float)
                self._dense_chol = scipy.linalg.cho_factor(self._base_matrix)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite(f"{variant} preconditioner base is not positive definite") from exc

    def apply_inverse(self, r):
        r = np.asarray(r, dtype=float)
        if self.variant == "identity":
            return r / self.alpha
        if self._chol is not None:
            return scipy.linalg.cho_solve_banded((self._chol, False), r) / self.alpha
        return scipy.linalg.cho_solve(self._dense_chol, r) / self.alpha

    __call__ = apply_inverse

    def apply(self, u):
        """Forward application ``B u`` (undoes `apply_inverse`)."""
        u = np.asarray(u, dtype=float)
        if self.variant == "identity":
            return self.alpha * u
        if self._bands is not None:
            return self.alpha * _tridiag_matvec(self._bands[0], self._bands[1], u)
        return self.alpha * (self._base_matrix @ u)

    def dense_inverse(self):
        return self.apply_inverse(np.eye(self.n))

    def __repr__(self):
        return f"Preconditioner({self.variant!r}, n={self.n}, alpha={self.alpha}, shift={self.shift})"


def build_preconditioner(variant, A, shift=0.0, alpha=1.0):
    if variant == "identity":
        return Preconditioner("identity", A.n, alpha=alpha)
    if variant == "shifted":
        if A.grid is None:
            raise InvalidArgument("shifted preconditioner needs an operator built on a grid")
        d, e = kinetic_bands(A.grid)
        return Preconditioner("shifted", A.n, alpha, shift, base_bands=(d + shift, e))
    if variant == "inverse_a":
        if A.bands is not None:
            return Preconditioner("inverse_a", A.n, alpha, base_bands=A.bands)
        return Preconditioner("inverse_a", A.n, alpha, base_matrix=A.matrix)
    raise InvalidArgument(f"unknown preconditioner variant {variant!r}")


def _unit_vector(rng, n, h):
    u = rng.standard_normal(n)
    return u / np.sqrt(h * np.dot(u, u))


def check_symmetry(A, trials=10, seed=0):
    """Max over seeded random unit ``u, v`` of ``|<Au, v> - <u, Av>|``.

    Each trial draws ``u`` then ``v`` from ``numpy.random.default_rng(seed)``
    and normalizes both in the grid-weighted norm.
    """
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        u = _unit_vector(rng, A.n, A.h)
        v = _unit_vector(rng, A.n, A.h)
        worst = max(worst, abs(inner(A.apply(u), v, A.h) - inner(u, A.apply(v), A.h)))
    return worst
