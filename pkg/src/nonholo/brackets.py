"""Almost-Poisson brackets on the constraint manifold, four ways.

Routes computed here, all of which must coincide on M:

* ``nh``    - pair the symplectic-projected Hamiltonian fields of two
  extensions with the canonical two-form;
* ``nh2``   - same, but only one argument projected (valid because the
  splitting is symplectic);
* ``eden``  - canonical bracket of the momentum-projection extensions,
  restricted to M;
* ``dstar`` - push the observables to the dual bundle through the frame
  isomorphism and bracket the pullbacks there.

A PointContext precomputes the per-point linear data (projectors, the
projection Jacobian, the dual-bundle correspondence Jacobians) so sweeps
over many observable pairs stay cheap; the standalone functions follow the
defining formulas directly and are cross-checked against the context path in
the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry, numdiff
from .errors import InternalConsistencyError, SectionNotInDError
from .numdiff import DualScalar
from .system import (
    DStarObservable,
    DStarPoint,
    Observable,
    PhasePoint,
    SystemDefinition,
    from_dstar,
    to_dstar,
)


def _pair(a, b, n: int) -> float:
    """Canonical two-form pairing of gradient (or field) block vectors."""
    return float(a[:n] @ b[n:] - a[n:] @ b[:n])


def _symp(grad: np.ndarray, n: int) -> np.ndarray:
    """Hamiltonian field components from a gradient: (dF/dp, -dF/dq)."""
    return np.concatenate([grad[n:], -grad[:n]])


def canonical_bracket(f: Observable, g: Observable, x: PhasePoint) -> float:
    """{F, G} = sum_i dF/dq_i dG/dp_i - dF/dp_i dG/dq_i via dual gradients."""
    z = x.scalars()
    n = len(z) // 2
    _, gf = numdiff.gradient(f.fn, z)
    _, gg = numdiff.gradient(g.fn, z)
    return _pair(gf, gg, n)


def gamma_extension(sys: SystemDefinition, f: Observable) -> Observable:
    """Extend an observable off M by precomposing with the momentum projection.

    The result is defined on all of phase space, differentiable through the
    configuration dependence of the projection, and restricts to f on M.
    """
    return Observable(
        label=f"gamma({f.label})",
        fn=lambda s, fn=f.fn: fn(geometry.gamma_hat_apply(sys, s)),
    )


class PointContext:
    """Per-point workspace shared by bracket evaluations at one M-point."""

    def __init__(self, sys: SystemDefinition, x: PhasePoint, on_m_tol: float | None = None):
        geometry.require_on_m(sys, x.q, x.p, on_m_tol)
        self.sys = sys
        self.x = x
        self.n = sys.n
        self.z = x.scalars()
        # keyed by the observable object itself: holding the reference keeps
        # ids stable for the lifetime of the cache
        self._grad_raw: dict = {}
        self._grad_raw_prime: dict = {}
        self._splitting = None
        self._dgamma = None
        self._dstar = None

    # -- lazily built linear data --

    @property
    def splitting(self):
        if self._splitting is None:
            self._splitting = geometry.tangent_splitting(
                self.sys, self.x.q, self.x.p, on_m_tol=np.inf
            )
        return self._splitting

    @property
    def P(self) -> np.ndarray:
        return self.splitting[0]

    @property
    def Q(self) -> np.ndarray:
        return self.splitting[1]

    @property
    def C(self) -> np.ndarray:
        return self.splitting[2]

    @property
    def dgamma(self) -> np.ndarray:
        """Jacobian of the phase-space momentum projection at this point."""
        if self._dgamma is None:
            self._dgamma = numdiff.jacobian(
                lambda s: geometry.gamma_hat_apply(self.sys, s), self.z
            )
        return self._dgamma

    @property
    def dstar_data(self):
        """Correspondence data: relanded point and the two route Jacobians."""
        if self._dstar is None:
            sys, n = self.sys, self.n
            fr = geometry.frame_at(sys, self.x.q)
            free = fr.free_cols
            y = DStarPoint(q=self.x.q, pi=fr.E.T @ self.x.p)
            xp = from_dstar(sys, y)
            zp = xp.scalars()
            dpsi = numdiff.jacobian(
                lambda s: list(s[:n])
                + geometry.to_dstar_apply(sys, s[:n], s[n:], free),
                zp,
            )
            yp = list(xp.q) + geometry.to_dstar_apply(
                sys, list(xp.q), list(xp.p), free
            )
            dtheta = numdiff.jacobian(
                lambda s: list(s[:n])
                + geometry.from_dstar_apply(sys, s[:n], s[n:], free),
                yp,
            )
            self._dstar = (free, xp, zp, dtheta @ dpsi)
        return self._dstar

    # -- gradients --

    def grad_raw(self, f: Observable) -> np.ndarray:
        g = self._grad_raw.get(f)
        if g is None:
            _, g = numdiff.gradient(f.fn, self.z)
            self._grad_raw[f] = g
        return g

    def grad_ext(self, f: Observable) -> np.ndarray:
        """Gradient of the momentum-projection extension of f at this point."""
        return self.dgamma.T @ self.grad_raw(f)

    def _grad_prime(self, f: Observable) -> np.ndarray:
        g = self._grad_raw_prime.get(f)
        if g is None:
            _, g = numdiff.gradient(f.fn, self.dstar_data[2])
            self._grad_raw_prime[f] = g
        return g

    # -- the four bracket routes --

    def eden_value(self, f: Observable, g: Observable) -> float:
        return _pair(self.grad_ext(f), self.grad_ext(g), self.n)

    def nh_value(self, f: Observable, g: Observable) -> float:
        P, n = self.P, self.n
        xf = P @ _symp(self.grad_ext(f), n)
        xg = P @ _symp(self.grad_ext(g), n)
        return _pair(xf, xg, n)

    def nh2_value(self, f: Observable, g: Observable) -> float:
        P, n = self.P, self.n
        xf = _symp(self.grad_ext(f), n)
        xg = P @ _symp(self.grad_ext(g), n)
        return _pair(xf, xg, n)

    def one_side_projected_value(self, f: Observable, g_raw: Observable) -> float:
        """nh2 form with the second argument left as a raw extension."""
        P, n = self.P, self.n
        xf = _symp(self.grad_ext(f), n)
        xg = P @ _symp(self.grad_raw(g_raw), n)
        return _pair(xf, xg, n)

    def nh_values_from_grads(self, gf_ext, gg_ext) -> tuple[float, float]:
        """(nh, nh2) from caller-supplied extension gradients."""
        P, n = self.P, self.n
        xf = _symp(gf_ext, n)
        xg = P @ _symp(gg_ext, n)
        return _pair(P @ xf, xg, n), _pair(xf, xg, n)

    def residual_gradients(self) -> np.ndarray:
        """Gradients of the membership residuals (extensions vanishing on M)."""
        return self.C[: self.sys.n_constraints]

    def dstar_value(self, f: Observable, g: Observable) -> float:
        _, _, _, dd = self.dstar_data
        gf = dd.T @ self._grad_prime(f)
        gg = dd.T @ self._grad_prime(g)
        return _pair(gf, gg, self.n)


def bracket_route_tables(ctx: PointContext, observables) -> dict[str, np.ndarray]:
    """All four bracket routes over every ordered observable pair at a point.

    Returns route-name -> (n_obs, n_obs) matrix; entry (i, j) is the bracket
    of observable i with observable j. Gradients are computed once per
    observable and the pair contraction is a handful of matrix products, so
    full-pair sweeps stay cheap.
    """
    n = ctx.n
    gext = np.array([ctx.grad_ext(f) for f in observables])
    gq, gp = gext[:, :n], gext[:, n:]

    def pair_table(aq, ap, bq, bp):
        return aq @ bp.T - ap @ bq.T

    eden = pair_table(gq, gp, gq, gp)
    X = np.hstack([gp, -gq])  # rows are the extension Hamiltonian fields
    PX = X @ ctx.P.T
    nh = pair_table(PX[:, :n], PX[:, n:], PX[:, :n], PX[:, n:])
    nh2 = pair_table(X[:, :n], X[:, n:], PX[:, :n], PX[:, n:])
    _, _, _, dd = ctx.dstar_data
    gstar = np.array([ctx._grad_prime(f) for f in observables]) @ dd
    dstar = pair_table(gstar[:, :n], gstar[:, n:], gstar[:, :n], gstar[:, n:])
    return {"nh": nh, "nh2": nh2, "eden": eden, "dstar": dstar}


@dataclass(frozen=True)
class BracketReport:
    point: PhasePoint
    f: str
    g: str
    value_nh: float
    value_nh2: float
    value_eden: float
    value_dstar: float

    @property
    def max_pairwise_gap(self) -> float:
        vals = (self.value_nh, self.value_nh2, self.value_eden, self.value_dstar)
        return max(abs(a - b) for a in vals for b in vals)


def compare_brackets(
    sys: SystemDefinition,
    f: Observable,
    g: Observable,
    x: PhasePoint,
    ctx: PointContext | None = None,
    on_m_tol: float | None = None,
) -> BracketReport:
    """Evaluate all four bracket routes at one point and report the spread."""
    ctx = ctx or PointContext(sys, x, on_m_tol)
    return BracketReport(
        point=x,
        f=f.label,
        g=g.label,
        value_nh=ctx.nh_value(f, g),
        value_nh2=ctx.nh2_value(f, g),
        value_eden=ctx.eden_value(f, g),
        value_dstar=ctx.dstar_value(f, g),
    )


def eden_bracket(
    sys: SystemDefinition,
    f: Observable,
    g: Observable,
    x: PhasePoint,
    on_m_tol: float | None = None,
) -> float:
    """Canonical bracket of the momentum-projection extensions, on M."""
    geometry.require_on_m(sys, x.q, x.p, on_m_tol)
    return canonical_bracket(gamma_extension(sys, f), gamma_extension(sys, g), x)


def nonholonomic_bracket(
    sys: SystemDefinition,
    f: Observable,
    g: Observable,
    x: PhasePoint,
    on_m_tol: float | None = None,
) -> float:
    """Projected-field bracket; cross-checks its one-side-projected form."""
    ctx = PointContext(sys, x, on_m_tol)
    a = ctx.nh_value(f, g)
    b = ctx.nh2_value(f, g)
    if abs(a - b) > 1e-9:
        raise InternalConsistencyError(
            f"projected bracket forms disagree at {x}: {a!r} vs {b!r}"
        )
    return a


def dstar_bracket(
    sys: SystemDefinition,
    f: DStarObservable,
    g: DStarObservable,
    y: DStarPoint,
) -> float:
    """Bracket on the dual bundle via canonical pullbacks through the frame."""
    n = sys.n
    fr = geometry.frame_at(sys, y.q)
    free = fr.free_cols

    def pullback(obs):
        return Observable(
            label=f"pull({obs.label})",
            fn=lambda s, fn=obs.fn: fn(
                list(s[:n]) + geometry.to_dstar_apply(sys, s[:n], s[n:], free)
            ),
        )

    return canonical_bracket(pullback(f), pullback(g), from_dstar(sys, y))


def pushforward_observable(sys: SystemDefinition, f: Observable) -> DStarObservable:
    """Transport a phase-space observable to the dual bundle."""
    n = sys.n

    def fn(s):
        q_s = list(s[:n])
        free = _free_cols_at(sys, q_s)
        p_s = geometry.from_dstar_apply(sys, q_s, list(s[n:]), free)
        return f.fn(q_s + p_s)

    return DStarObservable(label=f"push({f.label})", fn=fn)


def _free_cols_at(sys, q_s):
    if sys.frame_exprs is not None:
        return None
    mu = np.asarray(
        [[numdiff.float_core(v) for v in row] for row in sys.mu_values(q_s)],
        dtype=float,
    )
    return geometry.default_frame_plan(mu)[0]


# --- sections of the distribution and the projected Lie bracket ---------------


def section_from_expressions(sys: SystemDefinition, texts):
    """Compile an n-component vector field on configurations."""
    from . import dsl

    fns = []
    for t in texts:
        e = dsl.parse_expression(t)
        dsl.validate_identifiers(e, set(sys.coords) | set(sys.params))
        fns.append(dsl.compile_expression(e, sys.coords, sys.params))
    if len(fns) != sys.n:
        raise ValueError(f"section needs {sys.n} components, got {len(fns)}")
    return lambda q_s: [fn(q_s) for fn in fns]


def lie_bracket_raw(sys: SystemDefinition, X, Y, q) -> np.ndarray:
    """[X, Y] = (DY) X - (DX) Y by dual-number Jacobians; no projection."""
    q_list = [float(v) for v in q]
    jx = numdiff.jacobian(X, q_list)
    jy = numdiff.jacobian(Y, q_list)
    xv = np.array([numdiff.float_core(v) for v in X(q_list)])
    yv = np.array([numdiff.float_core(v) for v in Y(q_list)])
    return jy @ xv - jx @ yv


def almost_lie_bracket(sys: SystemDefinition, X, Y, q) -> np.ndarray:
    """Projected Lie bracket of two distribution sections at q.

    Validates that both sections lie in the distribution at q, then returns
    the metric-orthogonal projection of [X, Y] back onto it.
    """
    q_list = [float(v) for v in q]
    mu = np.asarray(sys.mu_values(q_list), dtype=float)
    xv = np.array([numdiff.float_core(v) for v in X(q_list)])
    yv = np.array([numdiff.float_core(v) for v in Y(q_list)])
    scale = max(1.0, float(np.max(np.abs(mu))))
    for nm, vec in (("X", xv), ("Y", yv)):
        r = float(np.max(np.abs(mu @ vec)))
        if r > 1e-9 * scale * max(1.0, float(np.max(np.abs(vec)))):
            raise SectionNotInDError(
                f"section {nm} leaves the distribution at q={q_list} (residual {r:.3e})"
            )
    w = lie_bracket_raw(sys, X, Y, q_list)
    met = geometry.metric_at(sys, q_list)
    fr = geometry.frame_at(sys, q_list)
    ge = met.G @ fr.E
    return fr.E @ np.linalg.solve(fr.E.T @ ge, ge.T @ w)


# --- Jacobiator via nested dual numbers ---------------------------------------


def _grad_generic(fn, scalars):
    """Gradient over generic scalars: one more lift on top of the inputs."""
    duals = numdiff.lift(list(scalars))
    level = duals[0].level
    out = fn(duals)
    if isinstance(out, DualScalar) and out.level == level:
        return list(out.partials)
    return [0.0] * len(scalars)


def _pair_generic(a, b, n: int):
    acc = a[0] * b[n]
    for i in range(1, n):
        acc = acc + a[i] * b[n + i]
    for i in range(n):
        acc = acc - a[n + i] * b[i]
    return acc


def _canonical_value_generic(ffn, gfn, scalars, n):
    return _pair_generic(_grad_generic(ffn, scalars), _grad_generic(gfn, scalars), n)


def _eden_value_generic(sys, ffn, gfn, scalars):
    def ext(fn):
        return lambda s: fn(geometry.gamma_hat_apply(sys, s))

    return _canonical_value_generic(ext(ffn), ext(gfn), scalars, sys.n)


def _omega_inv_row(row, n):
    return [-v for v in row[n:]] + list(row[:n])


def _nh_value_generic(sys, ffn, gfn, scalars):
    n, m = sys.n, sys.n_constraints

    def ext(fn):
        return lambda s: fn(geometry.gamma_hat_apply(sys, s))

    gf = _grad_generic(ext(ffn), scalars)
    gg = _grad_generic(ext(gfn), scalars)
    xf = list(gf[n:]) + [-v for v in gf[:n]]
    xg = list(gg[n:]) + [-v for v in gg[:n]]

    duals = numdiff.lift(list(scalars))
    level = duals[0].level
    res = geometry.residual_apply(sys, duals[:n], duals[n:])
    rows = []
    for r in res:
        if isinstance(r, DualScalar) and r.level == level:
            rows.append(list(r.partials))
        else:
            rows.append([0.0] * (2 * n))
    mu = sys.mu_values(list(scalars[:n]))
    for a in range(m):
        rows.append(list(mu[a]) + [0.0] * n)
    ocols = [_omega_inv_row(r, n) for r in rows]
    K = [[numdiff.sum_prod(ri, oc) for oc in ocols] for ri in rows]

    def q_apply(v):
        w = [numdiff.sum_prod(r, v) for r in rows]
        u = numdiff.solve_linear(K, w)
        out = [0.0] * (2 * n)
        for j, uj in enumerate(u):
            col = ocols[j]
            for i in range(2 * n):
                out[i] = out[i] + col[i] * uj
        return out

    pxg = [a - b for a, b in zip(xg, q_apply(xg))]
    pxf = [a - b for a, b in zip(xf, q_apply(xf))]
    return _pair_generic(pxf, pxg, n)


def _dstar_value_generic(sys, ffn, gfn, scalars, free_cols):
    n = sys.n
    q_s = list(scalars[:n])
    p_s = geometry.from_dstar_apply(sys, q_s, list(scalars[n:]), free_cols)

    def pull(fn):
        return lambda s: fn(
            list(s[:n]) + geometry.to_dstar_apply(sys, s[:n], s[n:], free_cols)
        )

    return _canonical_value_generic(pull(ffn), pull(gfn), q_s + p_s, n)


BRACKET_KINDS = ("canonical", "eden", "nh", "dstar")


def jacobiator(
    sys: SystemDefinition,
    kind: str,
    f,
    g,
    h,
    x: PhasePoint,
    on_m_tol: float | None = None,
) -> float:
    """J = {f,{g,h}} + {g,{h,f}} + {h,{f,g}} for the selected bracket kind.

    Outer derivatives come from evaluating the inner bracket at dual-number
    perturbed points, so every kind reuses its own defining formula without
    symbolic composition. For the dual-bundle kind the observables are
    dual-bundle expressions and the evaluation point is the image of x.
    """
    if kind not in BRACKET_KINDS:
        raise ValueError(f"unknown bracket kind {kind!r}")
    geometry.require_on_m(sys, x.q, x.p, on_m_tol)
    if kind == "dstar":
        free = geometry.frame_at(sys, x.q).free_cols
        y = to_dstar(sys, x, on_m_tol=np.inf)
        base = y.scalars()

        def value(afn, bfn, s):
            return _dstar_value_generic(sys, afn, bfn, s, free)

    else:
        base = x.scalars()
        if kind == "canonical":

            def value(afn, bfn, s):
                return _canonical_value_generic(afn, bfn, s, sys.n)

        elif kind == "eden":

            def value(afn, bfn, s):
                return _eden_value_generic(sys, afn, bfn, s)

        else:

            def value(afn, bfn, s):
                return _nh_value_generic(sys, afn, bfn, s)

    def inner(a, b):
        return lambda s: value(a.fn, b.fn, s)

    total = value(f.fn, inner(g, h), base)
    total = total + value(g.fn, inner(h, f), base)
    total = total + value(h.fn, inner(f, g), base)
    return float(numdiff.float_core(total))
