"""Brute-force oracles and empirical checks of the convergence theory.

The eigensolver here is deliberately independent of the iteration code:
a parallel-ordered cyclic Jacobi method on the dense matrix, cross-checked by
Sturm-sequence bisection for tridiagonal operators.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import BudgetExceeded, DimensionMismatch, InsufficientData, NoConvergence
from .manifold import as_block, block_inner, block_norm, gram, orthonormalize, project_tangent
from .problems import energy, gradient, lagrange_matrix
from .operators import DENSE_BUDGET

ROUNDING_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# eigen-oracles
# ---------------------------------------------------------------------------

def _round_robin(m):
    """All rounds of a round-robin tournament on ``m`` (even) players."""
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p = np.array(players[: m // 2])
        q = np.array(players[m // 2:][::-1])
        lo, hi = np.minimum(p, q), np.maximum(p, q)
        rounds.append((lo, hi))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(matrix, tol=1e-12, max_sweeps=100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Each sweep visits every off-diagonal pair once, in round-robin order so
    that the ``n/2`` rotations of a round touch disjoint index pairs and can
    be applied together. Iteration stops when the off-diagonal Frobenius
    norm drops below ``tol * ||A||_F``.

    Returns
    -------
    eigenvalues : (n,) ascending
    eigenvectors : (n, n) orthonormal columns (Euclidean)

    Raises
    ------
    NoConvergence
        If ``max_sweeps`` sweeps do not reach the tolerance.
    """
    a = np.array(matrix, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise DimensionMismatch("matrix must be square")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v
    fro = np.linalg.norm(a)
    target = tol * fro
    # entries this small cannot keep the off-diagonal norm above the target
    skip = 0.1 * target / n
    m = n + (n % 2)
    rounds = []
    for p, q in _round_robin(m):
        keep = q < n
        rounds.append((p[keep], q[keep]))

    def off_norm():
        return np.linalg.norm(a - np.diag(a.diagonal()))

    for _ in range(max_sweeps):
        if off_norm() <= target:
            break
        for p, q in rounds:
            apq = a[p, q]
            active = np.abs(apq) > skip
            if not np.any(active):
                continue
            p, q, apq = p[active], q[active], apq[active]
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t[theta == 0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            ap, aq = a[:, p].copy(), a[:, q]
            a[:, p] = c * ap - s * aq
            a[:, q] = s * ap + c * aq
            ap, aq = a[p, :].copy(), a[q, :]
            a[p, :] = c[:, None] * ap - s[:, None] * aq
            a[q, :] = s[:, None] * ap + c[:, None] * aq
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp, vq = v[:, p].copy(), v[:, q]
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
    else:
        if off_norm() > target:
            raise NoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps")
    w = a.diagonal().copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def sturm_count(diag, off, x):
    """Number of eigenvalues of the tridiagonal matrix strictly below each ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    count = np.zeros(x.shape, dtype=int)
    tiny = np.finfo(float).tiny
    q = diag[0] - x
    for i in range(len(diag)):
        if i > 0:
            q = diag[i] - x - off[i - 1] ** 2 / q
        q = np.where(q == 0.0, -tiny, q)
        count += q < 0
    return count


def bisection_eigenvalues(diag, off, k=None, rtol=1e-15):
    """Lowest ``k`` eigenvalues of a symmetric tridiagonal matrix by bisection."""
    diag = np.asarray(diag, dtype=float)
    off = np.asarray(off, dtype=float)
    n = diag.size
    k = n if k is None else k
    rad = np.zeros(n)
    rad[:-1] += np.abs(off)
    rad[1:] += np.abs(off)
    lo0, hi0 = float(np.min(diag - rad)), float(np.max(diag + rad))
    scale = max(abs(lo0), abs(hi0), 1.0)
    lo = np.full(k, lo0)
    hi = np.full(k, hi0)
    idx = np.arange(k)
    for _ in range(200):
        if np.all(hi - lo <= rtol * scale):
            break
        mid = 0.5 * (lo + hi)
        below = sturm_count(diag, off, mid) > idx
        hi = np.where(below, mid, hi)
        lo = np.where(below, lo, mid)
    return 0.5 * (lo + hi)


@dataclass(frozen=True, eq=False)
class OracleReference:
    """Reference frame for the sought subspace.

    ``frame`` is orthonormal in the weighted product. ``spectrum`` holds all
    computed eigenvalues when the reference comes from `dense_eigensolve`.
    """

    frame: np.ndarray
    eigenvalues: np.ndarray
    h: float = 1.0
    spectrum: Optional[np.ndarray] = None

    @property
    def n_states(self):
        return self.frame.shape[1]

    @property
    def next_eigenvalue(self):
        if self.spectrum is None or self.spectrum.size <= self.n_states:
            return None
        return float(self.spectrum[self.n_states])

    @property
    def gap(self):
        nxt = self.next_eigenvalue
        return None if nxt is None else nxt - float(self.eigenvalues[-1])

    def project_out(self, x):
        """``(I - D) x`` for a block with any number of columns."""
        x = as_block(x)
        return x - self.frame @ (self.h * (self.frame.T @ x))

    @classmethod
    def from_frame(cls, frame, h=1.0, eigenvalues=None):
        frame = as_block(frame)
        ev = np.full(frame.shape[1], np.nan) if eigenvalues is None else np.asarray(eigenvalues)
        return cls(frame, ev, h)


def dense_eigensolve(A, n_states, tol=1e-12):
    """Lowest ``n_states`` eigenpairs of ``A`` from the dense Jacobi oracle."""
    if A.n > DENSE_BUDGET:
        raise BudgetExceeded(f"dense oracle limited to n <= {DENSE_BUDGET}, got {A.n}")
    w, v = jacobi_eigh(A.dense(), tol=tol)
    # accumulated rotations leave an O(1e-13) orthogonality defect; energy
    # differences near e = 1e-8 are sensitive to it
    frame = orthonormalize(v[:, :n_states] / np.sqrt(A.h), "gram_schmidt", h=A.h)
    return OracleReference(frame, w[:n_states].copy(), A.h, spectrum=w)


def oracle_residual(A, ref):
    """``||A Psi - Psi diag(lambda)||`` in the weighted block norm."""
    return block_norm(A.apply(ref.frame) - ref.frame * ref.eigenvalues, ref.h)


def gap_check(ref, tol=1e-8):
    gap = ref.gap
    if gap is None:
        raise InsufficientData("reference does not carry the (N+1)-th eigenvalue")
    return gap, bool(gap > tol)


# ---------------------------------------------------------------------------
# error measures
# ---------------------------------------------------------------------------

def bhat_apply_inverse(ref, precond, r):
    """``(I - D) B^{-1} (I - D) r + D r`` with ``D`` the projector onto span(ref)."""
    r = np.asarray(r, dtype=float)
    if r.shape[0] != ref.frame.shape[0]:
        raise DimensionMismatch("grid function does not match the reference grid")
    single = r.ndim == 1
    r2 = as_block(r)
    psi, h = ref.frame, ref.h
    dr = psi @ (h * (psi.T @ r2))
    out = precond.apply_inverse(r2 - dr)
    out = out - psi @ (h * (psi.T @ out)) + dr
    return out[:, 0] if single else out


class BhatMetric:
    """Forward application of ``Bhat`` and the induced block norm.

    ``Bhat^{-1}`` is assembled densely once and Cholesky-factored (oracle
    scale only). For the identity preconditioner the closed form
    ``Bhat = alpha (I - D) + D`` is used instead.
    """

    def __init__(self, ref, precond):
        self.ref = ref
        self.precond = precond
        n = ref.frame.shape[0]
        self._factor = None
        if precond.variant != "identity":
            if n > DENSE_BUDGET:
                raise BudgetExceeded(f"Bhat norm limited to n <= {DENSE_BUDGET}, got {n}")
            m = bhat_apply_inverse(ref, precond, np.eye(n))
            self._factor = scipy.linalg.cho_factor(0.5 * (m + m.T))

    def apply(self, u):
        u = np.asarray(u, dtype=float)
        if self._factor is None:
            du = self.ref.frame @ gram(self.ref.frame, as_block(u), self.ref.h)
            du = du.reshape(u.shape)
            return self.precond.alpha * (u - du) + du
        return scipy.linalg.cho_solve(self._factor, u)

    __call__ = apply

    def norm(self, x):
        return float(np.sqrt(max(block_inner(self.apply(x), x, self.ref.h), 0.0)))


def subspace_error(ref, phi, norm="l2", precond=None, metric=None):
    """``||(I - D_ref) Phi||`` in the weighted L2 norm or the Bhat norm."""
    e = ref.project_out(as_block(phi))
    if norm == "l2":
        return block_norm(e, ref.h)
    if norm == "bhat":
        if metric is None:
            if precond is None:
                raise ValueError("bhat error needs a preconditioner or a metric")
            metric = BhatMetric(ref, precond)
        return metric.norm(e)
    raise ValueError(f"unknown norm {norm!r}")


def energy_excess(p, ref, phi):
    """``J(Phi) - J(Psi)`` evaluated without catastrophic cancellation.

    Write ``Phi = Psi C + E`` with ``E`` orthogonal to span(Psi) and let ``Q``
    be the orthogonal polar factor of ``C``. The quadratic part is

        <<A E, E>> + 2 <<(A Psi - Psi Lambda) C, E>> - tr(Lambda Q gram(E, E) Q^T)

    with ``Lambda = gram(A Psi, Psi)``. For toy_lda the density change
    ``n_Phi - n_Psi`` is assembled from the same small pieces and the coupling
    term becomes ``(kappa/2) h sum(dn * (2 n_Psi + dn))``. Every term is formed
    from small quantities, so the result stays accurate when the excess is far
    below the rounding level of the energies themselves.
    """
    phi = as_block(phi)
    h, psi, A = ref.h, ref.frame, p.operator
    c = gram(psi, phi, h)
    # project twice so the rounding left inside span(Psi) is O(eps * e)
    e = ref.project_out(ref.project_out(phi))
    a_psi = A.apply(psi)
    lam = gram(a_psi, psi, h)
    lam = 0.5 * (lam + lam.T)
    w, _, zt = np.linalg.svd(c)
    q = w @ zt
    m = q @ gram(e, e, h) @ q.T
    out = (block_inner(A.apply(e), e, h) + 2.0 * block_inner((a_psi - psi @ lam) @ c, e, h)
           - float(np.trace(lam @ m)))
    if p.kind == "toy_lda":
        # diag(Phi Phi^T - Psi Psi^T) with Psi (C C^T - I) Psi^T = -Psi M Psi^T
        dn = (-np.einsum("xi,ij,xj->x", psi, m, psi) + 2.0 * np.sum((psi @ c) * e, axis=1)
              + np.sum(e * e, axis=1))
        n_psi = np.sum(psi * psi, axis=1)
        out += 0.5 * p.kappa * h * float(np.dot(dn, 2.0 * n_psi + dn))
    return out


# ---------------------------------------------------------------------------
# verdicts on convergence records
# ---------------------------------------------------------------------------

@dataclass
class TheoryVerdict:
    name: str
    measured: dict
    passed: bool
    tolerances: dict = field(default_factory=dict)
    seed: Optional[int] = None
    note: str = ""


def _errors(record, norm):
    if hasattr(record, "column"):
        return record.column("subspace_err_bhat" if norm == "bhat" else "subspace_err_l2")
    return np.asarray(record, dtype=float)


def contraction_estimate(record, trailing=10, norm="l2", floor=ROUNDING_FLOOR):
    """Mean and sample standard deviation of ``e[n+1] / e[n]`` over the tail.

    Only consecutive pairs where both errors exceed ``10 * floor`` count.
    ``record`` may be a `ConvergenceRecord` or a plain sequence of errors.
    """
    e = _errors(record, norm)
    ok = np.isfinite(e) & (e > 10 * floor)
    ratios = [e[k + 1] / e[k] for k in range(len(e) - 1) if ok[k] and ok[k + 1]]
    if len(ratios) < max(trailing, 2):
        raise InsufficientData(f"need {trailing} qualifying ratios, have {len(ratios)}")
    tail = np.array(ratios[-trailing:])
    return float(tail.mean()), float(tail.std(ddof=1))


def residual_equivalence(record, lo=1e-10, hi=1e-1, norm="l2"):
    """Extremal ratios ``res_dual / e`` over rows with ``lo <= e <= hi``."""
    e = _errors(record, norm)
    res = record.column("res_dual")
    ok = np.isfinite(e) & np.isfinite(res) & (e >= lo) & (e <= hi)
    if np.count_nonzero(ok) < 2:
        raise InsufficientData("fewer than two rows inside the equivalence window")
    ratios = res[ok] / e[ok]
    return float(ratios.min()), float(ratios.max())


def energy_quadraticity(record, ref=None, p=None, lo=1e-8, hi=1e-1, norm="l2"):
    """Extremal ``q = (J(Phi_n) - J(Psi)) / e_n^2`` over rows with ``lo <= e_n <= hi``.

    Rows carrying a precomputed ``energy_excess`` use it; otherwise the excess
    is ``energy - J(Psi)`` with ``J(Psi) = sum(lambda)`` for the simplified
    problem or the problem energy at the reference frame.
    """
    e = _errors(record, norm)
    excess = record.column("energy_excess")
    missing = ~np.isfinite(excess)
    if np.any(missing):
        if ref is None:
            raise InsufficientData("no stored energy excess and no reference given")
        if p is None or p.kind == "simplified":
            target = float(np.sum(ref.eigenvalues))
        else:
            target = energy(p, ref.frame)
        excess = np.where(missing, record.column("energy") - target, excess)
    ok = np.isfinite(e) & (e >= lo) & (e <= hi)
    if np.count_nonzero(ok) < 1:
        raise InsufficientData("no rows inside the quadraticity window")
    q = excess[ok] / e[ok] ** 2
    return float(q.min()), float(q.max())


def ellipticity_probe(p, ref, trials=8, seed=0, fd_step=1e-5, max_dim=200, precond=None,
                      rtol=1e-7):
    """Smallest Rayleigh quotient of the projected Lagrangian Hessian.

    The Hessian action ``delta -> J''(Psi) delta - delta Lambda`` is taken by
    central differences of the gradient, and quotients use the weighted L2
    norm. The search starts from ``trials`` seeded tangent directions (trial
    ``j`` draws from ``default_rng([seed, j])``) and enlarges the subspace
    Davidson-style with the (optionally preconditioned) residuals of the
    lowest Ritz pairs, up to ``max_dim`` vectors. The returned minimum Ritz
    value is an upper bound on the true minimum and converges to it.
    """
    psi, h = ref.frame, ref.h
    n, n_states = psi.shape
    tangent_dim = (n - n_states) * n_states
    if tangent_dim == 0:
        raise InsufficientData("tangent space is trivial")
    if n > DENSE_BUDGET:
        raise BudgetExceeded(f"ellipticity probe limited to n <= {DENSE_BUDGET}, got {n}")
    limit = min(max_dim, tangent_dim)
    lam = lagrange_matrix(p, psi)

    def hess(u):
        fd = (gradient(p, psi + fd_step * u) - gradient(p, psi - fd_step * u)) / (2 * fd_step)
        return project_tangent(psi, fd - u @ lam, h)

    basis, images = [], []

    def add(w):
        ref_norm = block_norm(w, h)
        for _ in range(2):
            for b in basis:
                w = w - block_inner(b, w, h) * b
        nrm = block_norm(w, h)
        if nrm <= 1e-8 * ref_norm:
            return False
        basis.append(w / nrm)
        images.append(hess(basis[-1]))
        return True

    for j in range(trials):
        rng = np.random.default_rng([seed, j])
        if len(basis) < limit:
            add(project_tangent(psi, rng.standard_normal((n, n_states)), h))
    while True:
        bm, im = np.stack(basis), np.stack(images)
        t = h * np.einsum("inm,jnm->ij", im, bm)
        vals, vecs = np.linalg.eigh(0.5 * (t + t.T))
        if len(basis) >= limit:
            break
        added = False
        for i in range(min(trials, len(basis))):
            x = np.tensordot(vecs[:, i], bm, 1)
            r = np.tensordot(vecs[:, i], im, 1) - vals[i] * x
            if block_norm(r, h) <= rtol * max(1.0, abs(vals[i])):
                continue
            if precond is not None:
                r = precond.apply_inverse(r)
            if len(basis) < limit and add(project_tangent(psi, r, h)):
                added = True
        if not added:
            break
    return float(vals[0])
