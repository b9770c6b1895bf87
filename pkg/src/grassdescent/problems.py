"""Orthogonality-constrained energy functionals.

Two kinds are supported:

``simplified``
    ``J(Phi) = sum_i <phi_i, A phi_i>`` for a fixed symmetric ``A``.
``toy_lda``
    ``J(Phi) = sum_i <phi_i, A phi_i> + (kappa/2) * h * sum_x n(x)^2`` with
    the density ``n = sum_i phi_i^2``. Its gradient operator is
    ``A + kappa * diag(n)``.

Gradient convention: ``J'(Phi) := A_Phi Phi``, so that the directional
derivative is ``dJ(Phi)[delta] = 2 <<A_Phi Phi, delta>>``.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidArgument
from .manifold import as_block, block_inner, block_norm, gram

KINDS = ("simplified", "toy_lda")


@dataclass(frozen=True)
class Problem:
    kind: str
    operator: object
    n_states: int
    kappa: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown problem kind {self.kind!r}")
        if self.kind == "simplified" and self.kappa != 0:
            raise InvalidArgument("simplified problems have no coupling")
        if self.kappa < 0:
            raise InvalidArgument("kappa must be >= 0")
        if not 1 <= self.n_states <= self.operator.n:
            raise InvalidArgument(f"N={self.n_states} out of range for n={self.operator.n}")

    @property
    def h(self):
        return self.operator.h


def simplified(A, n_states):
    return Problem("simplified", A, int(n_states))


def toy_lda(A, n_states, kappa=0.5):
    return Problem("toy_lda", A, int(n_states), float(kappa))


def _check(p, phi):
    phi = as_block(phi)
    if phi.shape != (p.operator.n, p.n_states):
        raise DimensionMismatch(f"expected block of shape {(p.operator.n, p.n_states)}, got {phi.shape}")
    return phi


def density(phi):
    phi = as_block(phi)
    return np.sum(phi * phi, axis=1)


def energy(p, phi):
    phi = _check(p, phi)
    e = block_inner(phi, p.operator.apply(phi), p.h)
    if p.kind == "toy_lda":
        n = density(phi)
        e += 0.5 * p.kappa * p.h * float(np.dot(n, n))
    return e


def gradient_operator(p, phi):
    """Operator ``A_Phi`` with ``J'(Phi) = A_Phi Phi``."""
    if p.kind == "simplified":
        return p.operator
    phi = _check(p, phi)
    return p.operator.plus_diagonal(p.kappa * density(phi), name="toy_lda")


def gradient(p, phi):
    phi = _check(p, phi)
    return gradient_operator(p, phi).apply(phi)


def lagrange_matrix(p, phi):
    """Symmetrized ``gram(A_Phi Phi, Phi)``."""
    phi = _check(p, phi)
    lam = gram(gradient(p, phi), phi, p.h)
    return 0.5 * (lam + lam.T)


def residual(p, phi):
    """Subspace residual ``A_Phi Phi - Phi Lambda``; tangent at ``Phi``."""
    phi = _check(p, phi)
    g = gradient(p, phi)
    lam = gram(g, phi, p.h)
    return g - phi @ (0.5 * (lam + lam.T))


def residual_norms(p, phi, precond, r=None):
    """``(||R||, sqrt(<<B^{-1} R, R>>))`` for the subspace residual ``R``."""
    if r is None:
        r = residual(p, phi)
    l2 = block_norm(r, p.h)
    dual = np.sqrt(max(block_inner(precond.apply_inverse(r), r, p.h), 0.0))
    return l2, float(dual)
