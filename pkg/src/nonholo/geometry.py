"""Pointwise metric algebra and the two projectors.

Numeric entry points work on numpy arrays; the ``*_apply`` twins evaluate the
same formulas over generic scalars (floats or duals) so that every projector
and residual can be differentiated by the forward-mode engine. The float and
generic paths share the compiled expression closures on the system object.

The on-manifold tolerance ON_M_TOL is the single default used by every
operation that requires its phase point to satisfy the momentum constraints;
callers may override it per call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numdiff
from .errors import (
    FrameDegenerateError,
    FrameInvalidError,
    NotOnMError,
    NotSPDError,
    RankDeficientError,
    SplittingDegenerateError,
)

ON_M_TOL = 1e-8


@dataclass(frozen=True)
class MetricAtPoint:
    G: np.ndarray
    Ginv: np.ndarray


@dataclass(frozen=True)
class ConstraintsAtPoint:
    mu: np.ndarray  # (n-k) x n rows of constraint one-forms
    gram: np.ndarray  # mu Ginv mu^T


@dataclass(frozen=True)
class FrameAtPoint:
    E: np.ndarray  # n x k, columns span the distribution fiber
    free_cols: tuple | None  # selection used by the default construction
    pivot_tie: bool  # a pivot tie was broken deterministically here


def metric_at(sys, q) -> MetricAtPoint:
    """Evaluate G(q) and its inverse; fail if not symmetric positive definite."""
    q_list = [float(v) for v in q]
    G = np.asarray(sys.metric_values(q_list), dtype=float)
    if not np.all(np.isfinite(G)):
        raise NotSPDError(f"metric has non-finite entries at q={q_list}")
    scale = max(1.0, float(np.max(np.abs(G))))
    if float(np.max(np.abs(G - G.T))) > 1e-9 * scale:
        raise NotSPDError(f"metric is not symmetric at q={q_list}")
    Gs = 0.5 * (G + G.T)
    try:
        np.linalg.cholesky(Gs)
    except np.linalg.LinAlgError:
        raise NotSPDError(f"metric is not positive definite at q={q_list}") from None
    Ginv = np.linalg.inv(Gs)
    if float(np.max(np.abs(Gs @ Ginv - np.eye(len(q_list))))) > 1e-10 * scale:
        raise NotSPDError(f"metric is too ill-conditioned at q={q_list}")
    return MetricAtPoint(G=Gs, Ginv=Ginv)


def flat(sys, q, v) -> np.ndarray:
    """Lower the index: p = G(q) v."""
    return metric_at(sys, q).G @ np.asarray(v, dtype=float)


def sharp(sys, q, p) -> np.ndarray:
    """Raise the index: v = G(q)^-1 p."""
    return metric_at(sys, q).Ginv @ np.asarray(p, dtype=float)


def constraints_at(sys, q, met: MetricAtPoint | None = None) -> ConstraintsAtPoint:
    """Assemble the constraint rows and their cometric Gram matrix at q."""
    q_list = [float(v) for v in q]
    mu = np.asarray(sys.mu_values(q_list), dtype=float)
    if not np.all(np.isfinite(mu)):
        raise RankDeficientError(f"constraint rows non-finite at q={q_list}")
    s = np.linalg.svd(mu, compute_uv=False)
    if s[0] == 0.0 or s[-1] <= 1e-10 * s[0]:
        raise RankDeficientError(
            f"constraint rows are dependent at q={q_list} (singular values {s})"
        )
    met = met or metric_at(sys, q_list)
    gram = mu @ met.Ginv @ mu.T
    try:
        np.linalg.cholesky(0.5 * (gram + gram.T))
    except np.linalg.LinAlgError:
        raise RankDeficientError(
            f"constraint Gram matrix is not positive definite at q={q_list}"
        ) from None
    return ConstraintsAtPoint(mu=mu, gram=gram)


def velocity_constraint(sys, q, p) -> np.ndarray:
    """Residual c with c_a = mu_a . G^-1 p; p lies on M iff this vanishes."""
    met = metric_at(sys, q)
    cons = constraints_at(sys, q, met)
    return cons.mu @ (met.Ginv @ np.asarray(p, dtype=float))


def eden_project(sys, q, p) -> np.ndarray:
    """Project a covector onto the constraint manifold along the annihilator.

    gamma(p) = p - mu^T gram^-1 mu G^-1 p; orthogonal for the cometric.
    """
    met = metric_at(sys, q)
    cons = constraints_at(sys, q, met)
    p = np.asarray(p, dtype=float)
    c = cons.mu @ (met.Ginv @ p)
    return p - cons.mu.T @ np.linalg.solve(cons.gram, c)


def residual_norm(sys, q, p) -> float:
    return float(np.max(np.abs(velocity_constraint(sys, q, p))))


def require_on_m(sys, q, p, on_m_tol: float | None = None) -> float:
    tol = ON_M_TOL if on_m_tol is None else on_m_tol
    r = residual_norm(sys, q, p)
    if r > tol:
        raise NotOnMError(r, tol)
    return r


# --- frames for the distribution ---------------------------------------------


def default_frame_plan(mu: np.ndarray, strict_ties: bool = False):
    """Choose pivot columns by rank-revealing elimination with a fixed order.

    Each constraint row pivots on its largest remaining column (ties broken
    toward the lowest index); the complementary columns index the default
    frame. Returns (free_cols, tie_seen).
    """
    m, n = mu.shape
    r = np.array(mu, dtype=float)
    scale = float(np.max(np.abs(r)))
    if scale == 0.0:
        raise RankDeficientError("constraint rows vanish identically here")
    pivots: list[int] = []
    tie = False
    for row in range(m):
        mags = np.abs(r[row]).copy()
        mags[pivots] = -1.0
        best_col = int(np.argmax(mags))
        best = mags[best_col]
        if best <= 1e-10 * scale:
            raise RankDeficientError("constraint rows are dependent here")
        mags[best_col] = -1.0
        second = float(np.max(mags)) if n > len(pivots) + 1 else -1.0
        if second >= best * (1.0 - 1e-9):
            tie = True
            if strict_ties:
                raise FrameDegenerateError(
                    f"pivot tie in constraint row {row}: the default frame "
                    "is discontinuous at this configuration"
                )
        pivots.append(best_col)
        for rr in range(m):
            if rr != row and r[rr, best_col] != 0.0:
                r[rr] = r[rr] - (r[rr, best_col] / r[row, best_col]) * r[row]
    free = tuple(j for j in range(n) if j not in pivots)
    return free, tie


def frame_at(sys, q, strict_ties: bool = False) -> FrameAtPoint:
    """Evaluate (or construct) a frame spanning the distribution fiber at q.

    User-supplied frames are validated against mu E = 0 and column
    independence. The default frame projects the free coordinate axes onto
    ker(mu) orthogonally and normalizes, which varies smoothly with q away
    from pivot switches.
    """
    q_list = [float(v) for v in q]
    mu = np.asarray(sys.mu_values(q_list), dtype=float)
    user = sys.frame_values(q_list)
    if user is not None:
        E = np.asarray(user, dtype=float).T  # stored as columns
        scale = max(1.0, float(np.max(np.abs(mu))) * float(np.max(np.abs(E))))
        if float(np.max(np.abs(mu @ E))) > 1e-10 * scale:
            raise FrameInvalidError(
                f"user frame leaves the distribution at q={q_list}"
            )
        s = np.linalg.svd(E, compute_uv=False)
        if s[0] == 0.0 or s[-1] <= 1e-10 * max(1.0, s[0]):
            raise FrameInvalidError(f"user frame columns are dependent at q={q_list}")
        return FrameAtPoint(E=E, free_cols=None, pivot_tie=False)
    free, tie = default_frame_plan(mu, strict_ties)
    A = mu @ mu.T
    try:
        W = np.linalg.solve(A, mu[:, list(free)])
    except np.linalg.LinAlgError:
        raise RankDeficientError("constraint rows are dependent here") from None
    E = np.eye(sys.n)[:, list(free)] - mu.T @ W
    norms = np.linalg.norm(E, axis=0)
    if np.any(norms <= 1e-10):
        raise FrameDegenerateError(
            f"default frame column collapsed at q={q_list}"
        )
    E = E / norms
    s = np.linalg.svd(E, compute_uv=False)
    if s[-1] <= 1e-10 * max(1.0, s[0]):
        raise FrameDegenerateError(f"default frame columns are dependent at q={q_list}")
    return FrameAtPoint(E=E, free_cols=free, pivot_tie=tie)


# --- symplectic splitting along the constraint manifold -----------------------


def omega_matrix(n: int) -> np.ndarray:
    """Matrix of the canonical two-form in (dq, dp) block coordinates."""
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = np.eye(n)
    J[n:, :n] = -np.eye(n)
    return J


def omega_inv_apply(cols: np.ndarray) -> np.ndarray:
    """Apply Omega^-1 = [[0, -I], [I, 0]] columnwise."""
    n = cols.shape[0] // 2
    return np.vstack([-cols[n:], cols[:n]])


def tangent_splitting(sys, q, p, on_m_tol: float | None = None):
    """Projectors of the symplectic splitting along the constraint manifold.

    Rows of C are the differentials of (i) the membership residuals
    c_a(q, p) = mu_a G^-1 p and (ii) the base conditions mu_a(q) dq. Then
    ker C is the admissible tangent sub-bundle, and

        Q = Omega^-1 C^T (C Omega^-1 C^T)^-1 C,    P = I - Q

    project onto it along its symplectic orthogonal complement. Returns
    (P, Q, C).
    """
    require_on_m(sys, q, p, on_m_tol)
    n = sys.n
    z = [*map(float, q), *map(float, p)]
    Cc = numdiff.jacobian(lambda s: residual_apply(sys, s[:n], s[n:]), z)
    mu = np.asarray(sys.mu_values(z[:n]), dtype=float)
    C = np.vstack([Cc, np.hstack([mu, np.zeros_like(mu)])])
    M1 = omega_inv_apply(C.T)
    K = C @ M1
    s = np.linalg.svd(K, compute_uv=False)
    if s[0] == 0.0 or s[-1] <= 1e-12 * s[0]:
        raise SplittingDegenerateError(
            "the admissible tangent sub-bundle fails to be symplectic here "
            f"(splitting matrix singular values {s})"
        )
    Q = M1 @ np.linalg.solve(K, C)
    P = np.eye(2 * n) - Q
    return P, Q, C


def tangent_projector(sys, q, p, on_m_tol: float | None = None) -> np.ndarray:
    """The projector P of the symplectic splitting (see tangent_splitting)."""
    return tangent_splitting(sys, q, p, on_m_tol)[0]


# --- generic-scalar formula twins ---------------------------------------------


def cometric_apply(sys, q_s, p_s):
    """v = G(q)^-1 p over generic scalars."""
    G = sys.metric_values(q_s)
    return numdiff.solve_linear(G, list(p_s))


def residual_apply(sys, q_s, p_s):
    """Constraint residuals c_a = mu_a . G^-1 p over generic scalars."""
    v = cometric_apply(sys, q_s, p_s)
    return [numdiff.sum_prod(row, v) for row in sys.mu_values(q_s)]


def gamma_apply(sys, q_s, p_s):
    """Momentum projection gamma(p) over generic scalars."""
    G = sys.metric_values(q_s)
    mu = sys.mu_values(q_s)
    y = numdiff.solve_linear(G, list(p_s))
    c = [numdiff.sum_prod(row, y) for row in mu]
    W = numdiff.solve_linear(G, numdiff.transpose(mu))  # G^-1 mu^T, n x m
    gram = numdiff.mat_mul(mu, W)
    lam = numdiff.solve_linear(gram, c)
    m = len(mu)
    return [
        p_s[i] - numdiff.sum_prod([mu[a][i] for a in range(m)], lam)
        for i in range(len(p_s))
    ]


def gamma_hat_apply(sys, scalars):
    """The phase-space projection (q, p) -> (q, gamma_q p) over scalars."""
    n = sys.n
    q_s = list(scalars[:n])
    return q_s + gamma_apply(sys, q_s, list(scalars[n:]))


def frame_apply(sys, q_s, free_cols):
    """Frame columns over generic scalars, branch-frozen to ``free_cols``.

    With a user frame the stored expressions are evaluated directly and
    ``free_cols`` is ignored; otherwise the default construction is replayed
    with the pivot selection fixed by the caller (normally taken from
    frame_at on the float core), which keeps it differentiable.
    """
    user = sys.frame_values(q_s)
    if user is not None:
        return [list(col) for col in user]
    mu = sys.mu_values(q_s)
    m, n = len(mu), sys.n
    A = numdiff.mat_mul(mu, numdiff.transpose(mu))
    cols = []
    for j in free_cols:
        rhs = [mu[a][j] for a in range(m)]
        w = numdiff.solve_linear(A, rhs)
        col = [
            (1.0 if i == j else 0.0)
            - numdiff.sum_prod([mu[a][i] for a in range(m)], w)
            for i in range(n)
        ]
        norm = numdiff.sqrt(numdiff.sum_prod(col, col))
        cols.append([numdiff.divide(ci, norm) for ci in col])
    return cols


def to_dstar_apply(sys, q_s, p_s, free_cols):
    """Fiber components pi_a = E_a . p over generic scalars."""
    cols = frame_apply(sys, q_s, free_cols)
    return [numdiff.sum_prod(col, p_s) for col in cols]


def from_dstar_apply(sys, q_s, pi_s, free_cols):
    """p = G E (E^T G E)^-1 pi over generic scalars."""
    cols = frame_apply(sys, q_s, free_cols)
    G = sys.metric_values(q_s)
    ge = [numdiff.mat_vec(G, col) for col in cols]  # k vectors of length n
    K = [[numdiff.sum_prod(ca, gb) for gb in ge] for ca in cols]
    xi = numdiff.solve_linear(K, list(pi_s))
    n = sys.n
    return [
        numdiff.sum_prod([ge[a][i] for a in range(len(cols))], xi) for i in range(n)
    ]
