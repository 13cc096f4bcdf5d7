"""Hamiltonian and constrained vector fields, multipliers, integration.

The constrained field is built twice, by independent constructions:

* multiplier route — solve gram . lam = d/dt(residual along the free field)
  and subtract the reaction force mu^T lam from dp, which is the unique
  force in the annihilator making the field tangent to the constraint
  manifold;
* projection route — apply the symplectic tangent projector to the free
  Hamiltonian field.

Their pointwise agreement is a central verification target, so neither route
is allowed to reuse the other's intermediates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry, numdiff
from .errors import NonholoError, StepFailureError
from .system import PhasePoint, SystemDefinition, hamiltonian_scalar


@dataclass(frozen=True)
class PhaseVelocity:
    dq: np.ndarray
    dp: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.dq, self.dp])


@dataclass(frozen=True)
class TrajectoryPoint:
    t: float
    x: PhasePoint
    H: float
    c: np.ndarray  # constraint residuals
    lam: np.ndarray  # multipliers


@dataclass
class Trajectory:
    points: list

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def final(self) -> TrajectoryPoint:
        return self.points[-1]


def hamiltonian_field(sys: SystemDefinition, x: PhasePoint) -> PhaseVelocity:
    """Free field: dq = dH/dp, dp = -dH/dq from the dual-number gradient."""
    n = sys.n
    _, grad = numdiff.gradient(lambda s: hamiltonian_scalar(sys, s), x.scalars())
    return PhaseVelocity(dq=grad[n:], dp=-grad[:n])


def _residual_jacobian(sys: SystemDefinition, x: PhasePoint) -> np.ndarray:
    n = sys.n
    return numdiff.jacobian(
        lambda s: geometry.residual_apply(sys, s[:n], s[n:]), x.scalars()
    )


def multipliers(
    sys: SystemDefinition, x: PhasePoint, on_m_tol: float | None = None
) -> np.ndarray:
    """Multipliers making the constrained field preserve the residuals.

    Solves gram . lam = dc(X_H): the derivative of each residual along the
    free field is a single-direction dual pass, so the configuration
    dependence of mu and the cometric is included exactly.
    """
    geometry.require_on_m(sys, x.q, x.p, on_m_tol)
    cons = geometry.constraints_at(sys, x.q)
    xh = hamiltonian_field(sys, x).as_vector()
    n = sys.n
    duals = [
        numdiff.DualScalar(float(v), (float(d),)) for v, d in zip(x.scalars(), xh)
    ]
    rates = geometry.residual_apply(sys, duals[:n], duals[n:])
    cdot = np.array(
        [r.partials[0] if isinstance(r, numdiff.DualScalar) else 0.0 for r in rates]
    )
    return np.linalg.solve(cons.gram, cdot)


def nonholonomic_field_multiplier(
    sys: SystemDefinition, x: PhasePoint, on_m_tol: float | None = None
) -> PhaseVelocity:
    """Constrained field via reaction forces in the annihilator."""
    lam = multipliers(sys, x, on_m_tol)
    free = hamiltonian_field(sys, x)
    mu = np.asarray(sys.mu_values(x.q.tolist()), dtype=float)
    return PhaseVelocity(dq=free.dq, dp=free.dp - mu.T @ lam)


def nonholonomic_field_projection(
    sys: SystemDefinition, x: PhasePoint, on_m_tol: float | None = None
) -> PhaseVelocity:
    """Constrained field as the symplectic projection of the free field."""
    n = sys.n
    P = geometry.tangent_projector(sys, x.q, x.p, on_m_tol)
    v = P @ hamiltonian_field(sys, x).as_vector()
    return PhaseVelocity(dq=v[:n], dp=v[n:])


class FieldEvaluator:
    """Batched per-point assembly of the constrained field for integration.

    Evaluates all metric / potential / constraint entries (and their
    configuration gradients, via one width-n dual pass) per field call and
    assembles the same multiplier-route field as the public functions with
    plain matrix algebra. Constant entries are detected once and folded.
    """

    def __init__(self, sys: SystemDefinition):
        self.sys = sys
        self.n = sys.n
        self._const_metric = None
        self._const_metric_inv = None
        if sys.metric_is_constant:
            G = np.asarray(sys.metric_values([0.0] * sys.n), dtype=float)
            self._const_metric = 0.5 * (G + G.T)
            self._const_metric_inv = np.linalg.inv(self._const_metric)

    def _metric_and_grad(self, q):
        n = self.n
        if self._const_metric is not None:
            return self._const_metric, self._const_metric_inv, None
        duals = numdiff.lift([float(v) for v in q])
        G = np.empty((n, n))
        dG = np.zeros((n, n, n))  # dG[i] = dG/dq_i
        for r, row in enumerate(self.sys._metric_fns):
            for c, fn in enumerate(row):
                val = fn(duals)
                if isinstance(val, numdiff.DualScalar):
                    G[r, c] = val.value
                    dG[:, r, c] = val.partials
                else:
                    G[r, c] = val
        G = 0.5 * (G + G.T)
        dG = 0.5 * (dG + np.transpose(dG, (0, 2, 1)))
        return G, np.linalg.inv(G), dG

    def _mu_and_grad(self, q):
        n, m = self.n, self.sys.n_constraints
        duals = numdiff.lift([float(v) for v in q])
        mu = np.empty((m, n))
        dmu = np.zeros((m, n, n))  # dmu[a, j, i] = d mu_aj / d q_i
        for a, row in enumerate(self.sys._mu_fns):
            for j, fn in enumerate(row):
                val = fn(duals)
                if isinstance(val, numdiff.DualScalar):
                    mu[a, j] = val.value
                    dmu[a, j, :] = val.partials
                else:
                    mu[a, j] = val
        return mu, dmu

    def _potential_grad(self, q):
        if self.sys.potential_is_constant:
            return float(self.sys.potential_value(list(q))), np.zeros(self.n)
        v, g = numdiff.gradient(self.sys._potential_fn, q)
        return v, g

    def evaluate(self, q, p):
        """Return (xdot 2n-vector, lam, residual c, H) at (q, p)."""
        G, Ginv, dG = self._metric_and_grad(q)
        Vval, dV = self._potential_grad(q)
        mu, dmu = self._mu_and_grad(q)
        v = Ginv @ p
        if dG is None:
            dHq = dV
        else:
            dHq = -0.5 * np.einsum("j,ijk,k->i", v, dG, v) + dV
        c = mu @ v
        # dc/dq[a, i] = (d_i mu_a).v - (mu_a Ginv) dG_i v
        muGinv = mu @ Ginv
        dc_q = np.einsum("aji,j->ai", dmu, v)
        if dG is not None:
            dc_q -= np.einsum("aj,ijk,k->ai", muGinv, dG, v)
        rhs = dc_q @ v + muGinv @ (-dHq)
        gram = muGinv @ mu.T
        lam = np.linalg.solve(gram, rhs)
        dp = -dHq - mu.T @ lam
        H = 0.5 * float(p @ v) + Vval
        return np.concatenate([v, dp]), lam, c, H

    def project(self, q, p):
        """Momentum projection at q using the same cached entry closures."""
        if self._const_metric_inv is not None:
            Ginv = self._const_metric_inv
        else:
            G = np.asarray(self.sys.metric_values(list(q)), dtype=float)
            Ginv = np.linalg.inv(0.5 * (G + G.T))
        mu = np.asarray(self.sys.mu_values(list(q)), dtype=float)
        muGinv = mu @ Ginv
        gram = muGinv @ mu.T
        return p - mu.T @ np.linalg.solve(gram, muGinv @ p)


def integrate(
    sys: SystemDefinition,
    x0: PhasePoint,
    t0: float,
    t1: float,
    dt: float,
    project_each_step: bool = True,
    on_m_tol: float | None = None,
) -> Trajectory:
    """Classical fixed-step RK4 on the multiplier-route constrained field.

    With ``project_each_step`` the momentum is re-projected onto the
    constraint manifold after every step (the projector is the system's own,
    and cheap); without it the raw drift is observable and the on-manifold
    tolerance is enforced at step boundaries.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t1 <= t0:
        raise ValueError("t1 must exceed t0")
    tol = geometry.ON_M_TOL if on_m_tol is None else on_m_tol
    geometry.require_on_m(sys, x0.q, x0.p, tol)
    ev = FieldEvaluator(sys)
    n = sys.n
    n_steps = max(1, int(round((t1 - t0) / dt)))
    z = np.concatenate([x0.q, x0.p])
    points: list[TrajectoryPoint] = []

    def record(t, z):
        _, lam, c, H = ev.evaluate(z[:n], z[n:])
        points.append(
            TrajectoryPoint(
                t=t, x=PhasePoint(q=z[:n].copy(), p=z[n:].copy()), H=H, c=c, lam=lam
            )
        )
        return c

    try:
        record(t0, z)
        for i in range(n_steps):
            k1, _, _, _ = ev.evaluate(z[:n], z[n:])
            z2 = z + 0.5 * dt * k1
            k2, _, _, _ = ev.evaluate(z2[:n], z2[n:])
            z3 = z + 0.5 * dt * k2
            k3, _, _, _ = ev.evaluate(z3[:n], z3[n:])
            z4 = z + dt * k3
            k4, _, _, _ = ev.evaluate(z4[:n], z4[n:])
            z = z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if project_each_step:
                z[n:] = ev.project(z[:n], z[n:])
            t_next = t0 + (i + 1) * dt
            c = record(t_next, z)
            if not project_each_step and float(np.max(np.abs(c))) > tol:
                raise StepFailureError(
                    f"constraint residual {float(np.max(np.abs(c))):.3e} exceeded "
                    f"{tol:.3e} at t={t_next:.6g} with projection off",
                    trajectory=Trajectory(points=points[:-1]),
                )
    except StepFailureError:
        raise
    except NonholoError as exc:
        raise StepFailureError(
            f"field evaluation failed mid-integration: {exc}",
            trajectory=Trajectory(points=points),
        ) from exc
    return Trajectory(points=points)


def observable_evolution_check(sys: SystemDefinition, traj: Trajectory, f) -> float:
    """Max gap between the finite-difference observable rate and the bracket.

    At each interior sample the centered difference of f along the
    trajectory is compared against the momentum-projection bracket of f with
    the energy. The same call cross-checks the one-side-projected form built
    on the raw energy; the two must agree to 1e-9.
    """
    from . import brackets
    from .errors import InternalConsistencyError
    from .system import hamiltonian_observable

    pts = traj.points
    if len(pts) < 3:
        raise ValueError("trajectory too short for centered differences")
    h_obs = hamiltonian_observable(sys)
    worst = 0.0
    for i in range(1, len(pts) - 1):
        xm, x0, xp = pts[i - 1].x, pts[i].x, pts[i + 1].x
        dt2 = pts[i + 1].t - pts[i - 1].t
        fd = (f.at(xp) - f.at(xm)) / dt2
        ctx = brackets.PointContext(sys, x0)
        br = ctx.eden_value(f, h_obs)
        raw = ctx.one_side_projected_value(f, h_obs)
        if abs(br - raw) > 1e-9:
            raise InternalConsistencyError(
                f"evolution bracket forms disagree: {br!r} vs {raw!r}"
            )
        worst = max(worst, abs(fd - br))
    return worst
