"""Preconditioned descent iterations on the Grassmann manifold.

Three single-step updates are provided:

``alg1``
    ``Phi - B^{-1} R`` followed by orthonormalization.
``alg2``
    As ``alg1`` with the preconditioned residual projected onto the tangent
    space first.
``alg3``
    Move along the geodesic whose initial velocity is minus the tangent
    preconditioned gradient.

`solve` iterates one of them and `scf_solve` wraps a fixed-operator inner
solve in a self-consistent outer loop.
"""
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import diagnostics
from .errors import InvalidArgument, NoDecrease, RankDeficient
from .manifold import (block_inner, geodesic_step, orthonormalize, project_tangent,
                       random_frame, random_orthogonal, stiefel_defect, ORTHO_METHODS)
from .operators import DENSE_BUDGET, build_preconditioner
from .problems import (energy, gradient_operator, lagrange_matrix, residual,
                       residual_norms, simplified)
from .record import ConvergenceRecord, IterationRow

ALGORITHMS = ("alg1", "alg2", "alg3", "scf")
BLOWUP = 1e3
EPS = np.finfo(float).eps


@dataclass(frozen=True)
class Armijo:
    c1: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 30

    def __post_init__(self):
        if not 0 < self.c1 < 1:
            raise InvalidArgument(f"c1 must lie in (0, 1), got {self.c1}")
        if not 0 < self.shrink < 1:
            raise InvalidArgument(f"shrink must lie in (0, 1), got {self.shrink}")
        if self.max_backtracks < 0:
            raise InvalidArgument("max_backtracks must be >= 0")


@dataclass(frozen=True)
class SolverConfig:
    """Iteration settings.

    ``max_iters`` bounds the number of steps; the record holds one row per
    visited iterate before stepping. ``step_t`` is the geodesic step of
    ``alg3`` and multiplies the preconditioner's own scaling. With
    ``adaptive_inner_tol`` the SCF inner tolerance follows the outer residual.
    """

    algorithm: str = "alg1"
    max_iters: int = 500
    tol: float = 1e-10
    ortho: str = "gram_schmidt"
    linesearch: Optional[Armijo] = None
    step_t: float = 1.0
    scf_inner: Optional["SolverConfig"] = None
    adaptive_inner_tol: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise InvalidArgument(f"unknown algorithm {self.algorithm!r}")
        if self.max_iters < 1:
            raise InvalidArgument("max_iters must be >= 1")
        if not self.tol > 0:
            raise InvalidArgument("tol must be positive")
        if self.ortho not in ORTHO_METHODS:
            raise InvalidArgument(f"unknown orthonormalization method {self.ortho!r}")

    @property
    def inner(self):
        if self.scf_inner is not None:
            return self.scf_inner
        return SolverConfig(algorithm="alg1", max_iters=200, tol=self.tol, ortho=self.ortho,
                            seed=self.seed)


# ---------------------------------------------------------------------------
# single steps
# ---------------------------------------------------------------------------

def _ortho(p, phi_hat, method):
    return orthonormalize(phi_hat, method, operator=gradient_operator(p, phi_hat), h=p.h)


def descent_direction(p, B, phi, algorithm="alg1"):
    """Preconditioned correction ``-B^{-1} R`` (tangent-projected for alg2/alg3)."""
    d = -B.apply_inverse(residual(p, phi))
    if algorithm != "alg1":
        d = project_tangent(phi, d, p.h)
    return d


def step_alg1(p, B, phi, ortho_method="gram_schmidt"):
    return _ortho(p, phi + descent_direction(p, B, phi, "alg1"), ortho_method)


def step_alg2(p, B, phi, ortho_method="gram_schmidt"):
    return _ortho(p, phi + descent_direction(p, B, phi, "alg2"), ortho_method)


def step_alg3(p, B, phi, t=1.0):
    """Geodesic step ``exp(-t Xhat) Phi`` with ``Xhat Phi = K``.

    ``K = (I - D) B^{-1} (I - D) A_Phi Phi`` equals the tangent projection of
    ``B^{-1} R`` because ``(I - D) A_Phi Phi = R``.
    """
    k = -descent_direction(p, B, phi, "alg3")
    return geodesic_step(phi, -k, t, p.h)


# ---------------------------------------------------------------------------
# line search
# ---------------------------------------------------------------------------

def _retraction(p, phi, algorithm, ortho_method):
    if algorithm == "alg3":
        return lambda t, d: geodesic_step(phi, d, t, p.h)
    return lambda t, d: _ortho(p, phi + t * d, ortho_method)


def _armijo(p, phi, direction, rule, retract, t0=1.0):
    j0 = energy(p, phi)
    # slope of t -> J(retract(Phi + t d)) at t = 0; only the tangent part of d counts
    slope = 2.0 * block_inner(residual(p, phi), direction, p.h)
    if not slope < 0:
        raise NoDecrease(f"direction is not a descent direction (slope {slope:.3e})")
    t = t0
    for _ in range(rule.max_backtracks + 1):
        try:
            cand = retract(t, direction)
        except RankDeficient:
            cand = None
        if cand is not None:
            j = energy(p, cand)
            # slack of a few ulps: near convergence the decrease drops below rounding
            if j <= j0 + rule.c1 * t * slope + 8 * EPS * abs(j0):
                return t, cand
        t *= rule.shrink
    raise NoDecrease(f"no sufficient decrease after {rule.max_backtracks} backtracks")


def armijo_search(p, phi, direction, c1=1e-4, shrink=0.5, max_backtracks=30,
                  retract=None, ortho_method="gram_schmidt"):
    """Largest ``t`` in ``{1, shrink, shrink^2, ...}`` passing the Armijo test.

    The test is ``J(retract(Phi + t d)) <= J(Phi) + c1 t 2 <<R, d>>`` with the
    residual ``R``; for tangent ``d`` this is ``2 <<A_Phi Phi, d>>``.
    ``retract(t, d)`` defaults to orthonormalizing ``Phi + t d``.

    Raises
    ------
    NoDecrease
        If ``d`` is not a descent direction or every trial fails.
    """
    rule = Armijo(c1, shrink, max_backtracks)
    if retract is None:
        retract = _retraction(p, phi, "alg1", ortho_method)
    t, _ = _armijo(p, phi, direction, rule, retract)
    return t


# ---------------------------------------------------------------------------
# iteration drivers
# ---------------------------------------------------------------------------

def _as_reference(oracle_ref, h):
    if oracle_ref is None or isinstance(oracle_ref, diagnostics.OracleReference):
        return oracle_ref
    return diagnostics.OracleReference.from_frame(oracle_ref, h)


class _Recorder:
    """Fills a record row by row, including oracle errors when available."""

    def __init__(self, p, B, ref):
        self.p, self.B, self.ref = p, B, ref
        self.metric = None
        if ref is not None and ref.frame.shape[0] <= DENSE_BUDGET:
            self.metric = diagnostics.BhatMetric(ref, B)
        self.record = ConvergenceRecord()
        self.prev_err = None

    def row(self, phi, step, nonlinear_p=None):
        p = nonlinear_p or self.p
        k = len(self.record)
        r = residual(p, phi)
        res_l2, res_dual = residual_norms(p, phi, self.B, r)
        j = energy(p, phi)
        err = err_b = rate = excess = None
        if self.ref is not None:
            e = self.ref.project_out(phi)
            err = diagnostics.block_norm(e, p.h)
            if self.metric is not None:
                err_b = self.metric.norm(e)
            if self.prev_err:
                rate = err / self.prev_err
            self.prev_err = err
            excess = diagnostics.energy_excess(p, self.ref, phi)
        row = IterationRow(k, j, res_l2, res_dual, err, err_b, rate, step, excess)
        if not np.isfinite(j):
            return row
        self.record.append(row)
        return row


def _check_start(p, phi0):
    phi0 = np.array(phi0, dtype=float)
    if phi0.ndim == 1:
        phi0 = phi0[:, None]
    if phi0.shape != (p.operator.n, p.n_states):
        raise InvalidArgument(f"initial block has shape {phi0.shape}, "
                              f"expected {(p.operator.n, p.n_states)}")
    if stiefel_defect(phi0, p.h) > 1e-10:
        raise InvalidArgument("initial block is not orthonormal")
    return phi0


def _diverged(j, j0):
    return not np.isfinite(j) or j - j0 > BLOWUP * max(abs(j0), 1.0)


def solve(p, B, phi0, cfg=None, oracle_ref=None):
    """Iterate the configured step until the dual residual drops below ``tol``.

    Parameters
    ----------
    p : Problem
    B : Preconditioner
    phi0 : (n, N) orthonormal frame
    cfg : SolverConfig, optional
    oracle_ref : OracleReference or frame, optional
        Enables the subspace-error and rate columns of the record.

    Returns
    -------
    phi : final frame
    record : ConvergenceRecord
        ``status`` is ``"converged"``, ``"no-convergence"`` or ``"diverged"``.
    """
    cfg = cfg or SolverConfig()
    if cfg.algorithm == "scf":
        return scf_solve(p, B, phi0, cfg, oracle_ref)
    phi = _check_start(p, phi0)
    rec = _Recorder(p, B, _as_reference(oracle_ref, p.h))
    record = rec.record
    retract = None
    j0 = None
    step = None
    for _ in range(cfg.max_iters):
        row = rec.row(phi, step)
        j0 = row.energy if j0 is None else j0
        if _diverged(row.energy, j0):
            record.status, record.message = "diverged", "energy blow-up"
            return phi, record
        if row.res_dual <= cfg.tol:
            record.status = "converged"
            return phi, record
        try:
            if cfg.linesearch is not None:
                d = descent_direction(p, B, phi, cfg.algorithm)
                retract = _retraction(p, phi, cfg.algorithm, cfg.ortho)
                t0 = cfg.step_t if cfg.algorithm == "alg3" else 1.0
                step, phi = _armijo(p, phi, d, cfg.linesearch, retract, t0)
            elif cfg.algorithm == "alg1":
                step, phi = 1.0, step_alg1(p, B, phi, cfg.ortho)
            elif cfg.algorithm == "alg2":
                step, phi = 1.0, step_alg2(p, B, phi, cfg.ortho)
            else:
                step, phi = cfg.step_t, step_alg3(p, B, phi, cfg.step_t)
        except RankDeficient as exc:
            record.status, record.message = "diverged", str(exc)
            return phi, record
        except NoDecrease as exc:
            record.status, record.message = "no-convergence", str(exc)
            return phi, record
    record.status = "no-convergence"
    record.message = f"dual residual above {cfg.tol:g} after {cfg.max_iters} iterations"
    return phi, record


def scf_solve(p, B, phi0, cfg=None, oracle_ref=None):
    """Self-consistent outer loop around fixed-operator inner solves.

    Each outer step freezes ``A_k = A_{Phi_k}`` and runs `solve` on the
    simplified problem for ``A_k`` starting from ``Phi_k``. The outer record
    tracks the full functional; inner statuses are kept in
    ``record.inner_statuses``.
    """
    cfg = cfg or SolverConfig(algorithm="scf")
    if p.kind != "toy_lda":
        raise InvalidArgument("scf_solve needs a toy_lda problem")
    phi = _check_start(p, phi0)
    inner = cfg.inner
    if inner.algorithm == "scf":
        raise InvalidArgument("inner solver cannot itself be scf")
    rec = _Recorder(p, B, _as_reference(oracle_ref, p.h))
    record = rec.record
    j0 = None
    for _ in range(cfg.max_iters):
        row = rec.row(phi, None)
        j0 = row.energy if j0 is None else j0
        if _diverged(row.energy, j0):
            record.status, record.message = "diverged", "energy blow-up"
            return phi, record
        if row.res_dual <= cfg.tol:
            record.status = "converged"
            return phi, record
        frozen = simplified(gradient_operator(p, phi), p.n_states)
        tol = inner.tol
        if cfg.adaptive_inner_tol:
            # never ask for less than half the current residual, or the inner solve may not move
            tol = min(max(tol, 1e-2 * row.res_dual), 0.5 * row.res_dual)
        phi, inner_rec = solve(frozen, B, phi, replace(inner, tol=tol))
        record.inner_statuses.append(inner_rec.status)
        if inner_rec.status == "diverged":
            record.status, record.message = "diverged", "inner solve diverged"
            return phi, record
    record.status = "no-convergence"
    record.message = f"dual residual above {cfg.tol:g} after {cfg.max_iters} outer iterations"
    return phi, record


# ---------------------------------------------------------------------------
# constants and starts
# ---------------------------------------------------------------------------

def optimal_alpha(gamma, Gamma, theta, Theta):
    """Scaling ``alpha`` and contraction bound ``beta`` from spectral bounds.

    ``gamma, Gamma`` bound the projected Hessian and ``theta, Theta`` the
    preconditioner from below and above:

        alpha = (Gamma/theta + gamma/Theta) / 2
        beta = (Gamma Theta - gamma theta) / (Gamma Theta + gamma theta)
    """
    if not (0 < gamma <= Gamma and 0 < theta <= Theta):
        raise InvalidArgument("need 0 < gamma <= Gamma and 0 < theta <= Theta")
    alpha = 0.5 * (Gamma / theta + gamma / Theta)
    beta = (Gamma * Theta - gamma * theta) / (Gamma * Theta + gamma * theta)
    return alpha, beta


def sine_frame(n, n_states, h=1.0):
    """Lowest ``n_states`` eigenvectors of the Dirichlet 3-point Laplacian."""
    j = np.arange(1, n + 1)[:, None]
    k = np.arange(1, n_states + 1)[None, :]
    phi = np.sin(np.pi * j * k / (n + 1))
    return phi / np.sqrt(h * np.sum(phi * phi, axis=0))


def perturbed_frame(ref_frame, scale, rng, h=1.0, smoother=None):
    """Oracle frame pushed off by a random tangent of norm ``scale``, then mixed.

    ``smoother`` (a callable on blocks) filters the raw Gaussian noise first;
    unfiltered grid noise puts most of the error into the stiffest modes.
    """
    psi = np.asarray(ref_frame, dtype=float)
    noise = rng.standard_normal(psi.shape)
    if smoother is not None:
        noise = smoother(noise)
    w = project_tangent(psi, noise, h)
    w *= scale / diagnostics.block_norm(w, h)
    phi = orthonormalize(psi + w, "gram_schmidt", h=h)
    return phi @ random_orthogonal(psi.shape[1], rng)


def initial_frame(p, B=None, kind="auto", seed=0, scale=0.2, ref_frame=None):
    """Starting frame for a solve.

    ``auto`` uses the discrete sine modes (eigenvectors of the shifted
    preconditioner base) when ``B`` is the shifted variant, else a seeded
    random frame. ``perturbed_oracle`` needs ``ref_frame``; on grid operators
    its perturbation is smoothed twice by ``(-1/2 Laplacian + 1)^{-1}``.
    """
    n, h = p.operator.n, p.h
    rng = np.random.default_rng(seed)
    if kind == "auto":
        if B is not None and B.variant == "shifted":
            return sine_frame(n, p.n_states, h)
        kind = "random"
    if kind == "random":
        return random_frame(n, p.n_states, rng, h)
    if kind == "perturbed_oracle":
        if ref_frame is None:
            raise InvalidArgument("perturbed_oracle start needs a reference frame")
        smoother = None
        if p.operator.grid is not None:
            base = build_preconditioner("shifted", p.operator, shift=1.0)
            smoother = lambda x: base.apply_inverse(base.apply_inverse(x))
        return perturbed_frame(ref_frame, scale, rng, h, smoother)
    raise InvalidArgument(f"unknown initial guess {kind!r}")
