"""Stiefel/Grassmann geometry for blocks of grid functions.

A block ``Phi`` is an ``(n, N)`` array whose columns are grid functions; an
orthonormal frame satisfies ``gram(Phi, Phi, h) == I``. Every pairing uses the
grid weight ``h``.
"""
import numpy as np

from .errors import (BudgetExceeded, DimensionMismatch, InvalidArgument, MissingOperator,
                     NotTangent, RankDeficient, TooFar)

PIVOT_TOL = 1e-12
XHAT_BUDGET = 200
ORTHO_METHODS = ("gram_schmidt", "cholesky", "rayleigh_ritz")


def as_block(phi):
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 1:
        phi = phi[:, None]
    if phi.ndim != 2:
        raise DimensionMismatch(f"expected an (n, N) block, got shape {phi.shape}")
    return phi


def _check_pair(phi, psi):
    if phi.shape != psi.shape:
        raise DimensionMismatch(f"blocks have shapes {phi.shape} and {psi.shape}")


def gram(phi, psi, h=1.0):
    """Matrix of pairwise products: entry ``(i, j)`` is ``<phi_i, psi_j>``."""
    phi, psi = as_block(phi), as_block(psi)
    _check_pair(phi, psi)
    return h * (phi.T @ psi)


def block_inner(phi, psi, h=1.0):
    """Trace pairing ``sum_i <phi_i, psi_i>``."""
    phi, psi = as_block(phi), as_block(psi)
    _check_pair(phi, psi)
    return h * float(np.sum(phi * psi))


def block_norm(phi, h=1.0):
    phi = as_block(phi)
    return float(np.sqrt(h * np.sum(phi * phi)))


def stiefel_defect(phi, h=1.0):
    """``max |gram(Phi, Phi) - I|``."""
    g = gram(phi, phi, h)
    return float(np.max(np.abs(g - np.eye(g.shape[0]))))


def project_tangent(phi, w, h=1.0):
    """Apply ``I - D_Phi`` columnwise: ``W - Phi gram(Phi, W)``."""
    phi, w = as_block(phi), as_block(w)
    _check_pair(phi, w)
    return w - phi @ gram(phi, w, h)


def _gram_schmidt(x, h):
    q = x.copy()
    ref = np.sqrt(h * np.sum(x * x, axis=0))
    for k in range(q.shape[1]):
        v = q[:, k]
        # two passes of modified Gram-Schmidt against the finished columns
        for _ in range(2):
            for j in range(k):
                v -= (h * np.dot(q[:, j], v)) * q[:, j]
        nrm = np.sqrt(h * np.dot(v, v))
        if ref[k] == 0.0 or (nrm / ref[k]) ** 2 < PIVOT_TOL:
            raise RankDeficient(f"column {k} is (numerically) in the span of the previous columns")
        q[:, k] = v / nrm
    return q


def _cholesky(x, h):
    g = gram(x, x, h)
    g = 0.5 * (g + g.T)
    scale = np.diag(g).copy()
    if np.any(scale <= 0):
        raise RankDeficient("zero column in block")
    try:
        lower = np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise RankDeficient("Gram matrix is not positive definite") from exc
    if np.min(np.diag(lower) ** 2 / scale) < PIVOT_TOL:
        raise RankDeficient("Gram matrix pivot below tolerance")
    # X L^{-T}
    return np.linalg.solve(lower, x.T).T


def orthonormalize(phi_hat, method="gram_schmidt", operator=None, h=1.0, return_ritz=False):
    """Orthonormal frame spanning the same subspace as ``phi_hat``.

    Parameters
    ----------
    phi_hat : (n, N) array
        Linearly independent columns.
    method : {"gram_schmidt", "cholesky", "rayleigh_ritz"}
        ``rayleigh_ritz`` additionally rotates the frame so that
        ``gram(A Phi, Phi)`` is diagonal with ascending entries.
    operator : SymmetricOperator, optional
        Required for ``rayleigh_ritz``.
    return_ritz : bool
        With ``rayleigh_ritz``, also return the Ritz values.

    Raises
    ------
    RankDeficient
        If a Gram pivot falls below ``1e-12`` (relative to the column norm).
    """
    x = as_block(phi_hat)
    if method == "gram_schmidt":
        return _gram_schmidt(x, h)
    if method == "cholesky":
        return _cholesky(x, h)
    if method == "rayleigh_ritz":
        if operator is None:
            raise MissingOperator("rayleigh_ritz orthonormalization needs an operator")
        q = _cholesky(x, h)
        a = gram(operator.apply(q), q, h)
        vals, vecs = np.linalg.eigh(0.5 * (a + a.T))
        out = q @ vecs
        return (out, vals) if return_ritz else out
    raise InvalidArgument(f"unknown orthonormalization method {method!r}")


def _procrustes(c):
    # maximize tr(C U) over orthogonal U
    w, _, zt = np.linalg.svd(c)
    return zt.T @ w.T


def subspace_distance(phi1, phi2, h=1.0, norm="l2", metric=None):
    """Grassmann distance ``min_U ||Phi1 - Phi2 U||`` over orthogonal ``U``.

    The minimizer is the orthogonal Procrustes rotation. With ``norm="bhat"``
    the block norm is ``sqrt(<<G X, X>>)`` where ``metric(X) = G X`` is applied
    columnwise; the Procrustes solution carries over because ``G`` acts
    identically on every column.
    """
    phi1, phi2 = as_block(phi1), as_block(phi2)
    _check_pair(phi1, phi2)
    if norm == "l2":
        u = _procrustes(gram(phi1, phi2, h))
        return block_norm(phi1 - phi2 @ u, h)
    if norm == "bhat":
        if metric is None:
            raise InvalidArgument("bhat distance needs a metric callable")
        u = _procrustes(gram(phi1, metric(phi2), h))
        diff = phi1 - phi2 @ u
        return float(np.sqrt(max(block_inner(metric(diff), diff, h), 0.0)))
    raise InvalidArgument(f"unknown norm {norm!r}")


def projector_distance(phi1, phi2, h=1.0):
    """``||(I - D_Phi1) Phi2||``; agrees with `subspace_distance` to first order."""
    return block_norm(project_tangent(phi1, phi2, h), h)


def closest_representative(psi_ref, phi, h=1.0):
    """Orthonormal basis of span(psi_ref) lined up with the columns of ``phi``.

    Each column of ``phi`` is projected onto span(psi_ref) and normalized, and
    the result is Gram-Schmidt orthonormalized in column order. ``phi - result``
    then equals ``(I - D_ref) phi`` up to a term quadratic in that quantity.
    """
    psi_ref, phi = as_block(psi_ref), as_block(phi)
    _check_pair(psi_ref, phi)
    proj = psi_ref @ gram(psi_ref, phi, h)
    norms = np.sqrt(h * np.sum(proj * proj, axis=0))
    if np.any(norms < 0.5):
        raise TooFar(f"projected column norms {norms} fall below 0.5")
    return _gram_schmidt(proj / norms, h)


def geodesic_step(phi, k, t, h=1.0, tangent_tol=1e-8):
    """Point ``exp(t Xhat) Phi`` on the geodesic leaving ``Phi`` with velocity ``K``.

    ``Xhat`` acts only on span{Phi, K}, so with ``gram(K, K) = V S^2 V^T``
    the curve is ``Phi V cos(S t) V^T + K V (sin(S t)/S) V^T``. Writing the
    second term with ``K`` rather than the left singular vectors keeps zero
    singular values exact (``sin(S t)/S -> t``).
    """
    phi, k = as_block(phi), as_block(k)
    _check_pair(phi, k)
    off = np.max(np.abs(gram(phi, k, h)))
    if off > tangent_tol * max(1.0, block_norm(k, h)):
        raise NotTangent(f"direction is not tangent: max |gram(Phi, K)| = {off:.3e}")
    if t == 0:
        return phi.copy()
    g = gram(k, k, h)
    s2, v = np.linalg.eigh(0.5 * (g + g.T))
    s = np.sqrt(np.clip(s2, 0.0, None))
    st = s * t
    cos_part = np.cos(st)
    sinc_part = t * np.sinc(st / np.pi)
    out = phi @ (v * cos_part) @ v.T + k @ (v * sinc_part) @ v.T
    # removes rounding drift only; the closed form is already orthonormal
    return _gram_schmidt(out, h)


def build_xhat_dense(phi, x, h=1.0):
    """Dense antisymmetric lift ``(I - D) X D - D X^T (I - D)`` of ``X``.

    ``D = h Phi Phi^T`` is the weighted projector onto span(Phi); the adjoint
    of a matrix under the weighted product is its transpose.
    """
    phi = as_block(phi)
    n = phi.shape[0]
    if n > XHAT_BUDGET:
        raise BudgetExceeded(f"dense Xhat limited to n <= {XHAT_BUDGET}, got {n}")
    x = np.asarray(x, dtype=float)
    if x.shape != (n, n):
        raise DimensionMismatch(f"X must be {n}x{n}, got {x.shape}")
    d = h * (phi @ phi.T)
    q = np.eye(n) - d
    return q @ x @ d - d @ x.T @ q


def random_orthogonal(n_states, rng):
    q, r = np.linalg.qr(rng.standard_normal((n_states, n_states)))
    return q * np.sign(np.diag(r))


def random_frame(n, n_states, rng, h=1.0):
    """Seeded random orthonormal frame (weighted product)."""
    return _gram_schmidt(rng.standard_normal((n, n_states)), h)
