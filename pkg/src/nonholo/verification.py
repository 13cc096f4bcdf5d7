"""Verification sweeps: every pointwise identity, measured over seeded samples.

One sweep evaluates, per sampled point on the constraint manifold: the
four-route bracket coincidence over all observable pairs, skew-symmetry and
the Leibniz rule per route, extension independence, agreement of the two
projected-bracket forms, the two dynamics routes, field tangency, projector
laws, the projection-Jacobian identity on admissible tangents, the
distribution membership of extension fields, and the Jacobiator policy
(zero everywhere for an integrable distribution, a reproducible nonzero
witness otherwise).

Points are distributed across worker processes by index; per-point results
are merged in index order, so reports are byte-identical for any worker
count. The informational ``strong_projection_gap`` row reports how far the
projection Jacobian is from the symplectic projector off the admissible
sub-bundle without asserting anything about it.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import brackets, catalog, dsl, dynamics, geometry
from .system import Observable

WITNESS_FLOOR = 1e-3


@dataclass
class VerifyConfig:
    system_source: str
    system_label: str
    seed: int = 1
    count: int = 100
    on_m_tol: float = geometry.ON_M_TOL
    compare_tol: float = 1e-9
    workers: int = 1
    region: tuple | None = None
    momentum_scale: float = 1.0
    jacobiator_cap: int = 12  # points given to the (expensive) defect scans


def _jacobiator_triples(n_obs: int, n: int):
    return [
        (n - 1, n, n + 1),
        (0, n, 2 * n),
        (n, n + 1, min(2 * n + 1, n_obs - 1)),
    ]


def _leibniz_triples(n_obs: int, n: int):
    return [
        (0, n, 2 * n),
        (1 % n_obs, (n + 1) % n_obs, (2 * n + 1) % n_obs),
        (n, 2 * n, 0),
    ]


def _system_is_integrable(sysd, region, seed) -> bool:
    """Probe the distribution: do projected frame fields close under brackets?"""
    from .rng import derive_seed

    rng_points = catalog.sample_m_points(
        sysd, 12, derive_seed(seed, "integrability-probe"), region=region
    )
    worst = 0.0
    for x in rng_points:
        q = list(x.q)
        fr = geometry.frame_at(sysd, q)
        free = fr.free_cols
        mu = np.asarray(sysd.mu_values(q), dtype=float)
        pairs = [(a, b) for a in range(sysd.k) for b in range(a + 1, sysd.k)]
        if pairs:
            for a, b in pairs:
                X = lambda s, a=a: geometry.frame_apply(sysd, s, free)[a]
                Y = lambda s, b=b: geometry.frame_apply(sysd, s, free)[b]
                w = brackets.lie_bracket_raw(sysd, X, Y, q)
                worst = max(worst, float(np.max(np.abs(mu @ w))))
        else:
            X = lambda s: geometry.frame_apply(sysd, s, free)[0]
            Y = lambda s: [s[0] * v for v in geometry.frame_apply(sysd, s, free)[0]]
            w = brackets.lie_bracket_raw(sysd, X, Y, q)
            worst = max(worst, float(np.max(np.abs(mu @ w))))
    return worst <= 1e-10


def _point_metrics(sysd, x, observables, cfg_dict, do_jacobiator):
    n = sysd.n
    tol = cfg_dict["on_m_tol"]
    ctx = brackets.PointContext(sysd, x, on_m_tol=tol)
    n_obs = len(observables)
    routes = ("nh", "nh2", "eden", "dstar")
    vals = brackets.bracket_route_tables(ctx, observables)
    stacked = np.stack([vals[r] for r in routes])
    coincidence = float(np.max(np.abs(stacked[:, None] - stacked[None, :])))
    forms_gap = float(np.max(np.abs(vals["nh"] - vals["nh2"])))
    skew = float(max(np.max(np.abs(vals[r] + vals[r].T)) for r in routes))

    leibniz = 0.0
    for i, j, g_idx in _leibniz_triples(n_obs, n):
        f, f2, g = observables[i], observables[j], observables[g_idx]
        prod = Observable.product(f, f2)
        fv, f2v = f.at(x), f2.at(x)
        for r, fn in (
            ("nh", ctx.nh_value),
            ("nh2", ctx.nh2_value),
            ("eden", ctx.eden_value),
            ("dstar", ctx.dstar_value),
        ):
            resid = fn(prod, g) - fv * vals[r][j, g_idx] - f2v * vals[r][i, g_idx]
            leibniz = max(leibniz, abs(resid))

    ext_ind = 0.0
    w_grad = ctx.residual_gradients()[0]
    for i, j in ((0, n), (n, min(2 * n, n_obs - 1))):
        gf, gg = ctx.grad_ext(observables[i]), ctx.grad_ext(observables[j])
        base = ctx.nh_values_from_grads(gf, gg)
        for c in (1.0, -1.0, 10.0):
            for pert in (
                ctx.nh_values_from_grads(gf + c * w_grad, gg),
                ctx.nh_values_from_grads(gf, gg + c * w_grad),
            ):
                ext_ind = max(ext_ind, abs(pert[0] - base[0]), abs(pert[1] - base[1]))

    a = dynamics.nonholonomic_field_multiplier(sysd, x, on_m_tol=tol)
    b = dynamics.nonholonomic_field_projection(sysd, x, on_m_tol=tol)
    two_route = float(np.max(np.abs(a.as_vector() - b.as_vector())))
    dc = dynamics._residual_jacobian(sysd, x)
    tangency = float(np.max(np.abs(dc @ a.as_vector())))

    P, Q, C = ctx.splitting
    projector_laws = max(
        float(np.max(np.abs(P @ P - P))), float(np.max(np.abs(C @ P)))
    )
    dgam = ctx.dgamma
    u, s, _ = np.linalg.svd(P)
    rank = int(np.sum(s > 1e-8 * s[0]))
    basis = u[:, :rank]
    proj_identity = float(np.max(np.abs(dgam @ (P @ basis) - P @ basis)))
    if rank != 2 * sysd.k:
        proj_identity = float("inf")

    mu = np.asarray(sysd.mu_values(list(x.q)), dtype=float)
    base_in_d = 0.0
    vertical = 0.0
    for f in observables:
        xf = brackets._symp(ctx.grad_ext(f), n)
        base_in_d = max(base_in_d, float(np.max(np.abs(mu @ xf[:n]))))
        qx = Q @ xf
        vertical = max(vertical, float(np.max(np.abs(qx[:n]))))
        lam, *_ = np.linalg.lstsq(mu.T, qx[n:], rcond=None)
        vertical = max(vertical, float(np.max(np.abs(mu.T @ lam - qx[n:]))))

    # informational: projection Jacobian vs projector on base-admissible
    # vectors that leave the manifold tangent space
    fr = geometry.frame_at(sysd, x.q)
    strong_gap = 0.0
    for a_idx in range(sysd.k):
        zvec = np.concatenate([fr.E[:, a_idx], np.ones(n)])
        strong_gap = max(strong_gap, float(np.max(np.abs((dgam - P) @ zvec))))

    out = {
        "bracket_coincidence": coincidence,
        "projected_forms_agreement": forms_gap,
        "skew_symmetry": skew,
        "leibniz_rule": leibniz,
        "extension_independence": ext_ind,
        "dynamics_two_route": two_route,
        "field_tangency": tangency,
        "projector_laws": projector_laws,
        "projection_identity_on_admissible": proj_identity,
        "extension_field_base_in_distribution": base_in_d,
        "extension_field_complement_vertical": vertical,
        "strong_projection_gap": strong_gap,
    }

    if do_jacobiator:
        triples = _jacobiator_triples(n_obs, n)
        jc = 0.0
        for i, j, k in triples:
            jc = max(
                jc,
                abs(
                    brackets.jacobiator(
                        sysd, "canonical", observables[i], observables[j],
                        observables[k], x, on_m_tol=tol,
                    )
                ),
            )
        out["jacobiator_canonical"] = jc
        jdef = 0.0
        for i, j, k in triples:
            f, g, h = observables[i], observables[j], observables[k]
            jdef = max(jdef, abs(brackets.jacobiator(sysd, "eden", f, g, h, x, on_m_tol=tol)))
            if cfg_dict["integrable"]:
                jdef = max(
                    jdef, abs(brackets.jacobiator(sysd, "nh", f, g, h, x, on_m_tol=tol))
                )
                fd, gd, hd = (brackets.pushforward_observable(sysd, o) for o in (f, g, h))
                jdef = max(
                    jdef,
                    abs(brackets.jacobiator(sysd, "dstar", fd, gd, hd, x, on_m_tol=tol)),
                )
        out["jacobiator_defect"] = jdef
    return out


def _chunk_worker(payload):
    sysd = dsl.parse_system(payload["source"])
    observables = catalog.observable_test_set(sysd)
    points = catalog.sample_m_points(
        sysd,
        payload["count"],
        payload["seed"],
        region=payload["region"],
        momentum_scale=payload["momentum_scale"],
    )
    out = []
    for idx in payload["indices"]:
        metrics = _point_metrics(
            sysd,
            points[idx],
            observables,
            payload,
            do_jacobiator=idx < payload["jacobiator_cap"],
        )
        out.append((idx, metrics))
    return out


def run_verify(cfg: VerifyConfig) -> dict:
    """Run every suite and assemble the deterministic report object."""
    sysd = dsl.parse_system(cfg.system_source)
    region = cfg.region
    integrable = _system_is_integrable(sysd, region, cfg.seed)
    payload_base = {
        "source": cfg.system_source,
        "count": cfg.count,
        "seed": cfg.seed,
        "region": region,
        "momentum_scale": cfg.momentum_scale,
        "on_m_tol": cfg.on_m_tol,
        "jacobiator_cap": min(cfg.jacobiator_cap, cfg.count),
        "integrable": integrable,
    }
    indices = list(range(cfg.count))
    if cfg.workers > 1:
        chunks = [
            {**payload_base, "indices": indices[i :: cfg.workers]}
            for i in range(cfg.workers)
        ]
        chunks = [c for c in chunks if c["indices"]]
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            results = []
            for part in pool.map(_chunk_worker, chunks):
                results.extend(part)
    else:
        results = _chunk_worker({**payload_base, "indices": indices})
    results.sort(key=lambda item: item[0])

    merged: dict[str, float] = {}
    argmax: dict[str, int] = {}
    for idx, metrics in results:
        for name, value in metrics.items():
            if name not in merged or value > merged[name]:
                merged[name] = value
                argmax[name] = idx

    suites = []

    def add(name, tolerance, mode="max"):
        value = merged.get(name, 0.0)
        if tolerance is None:
            ok = True
        elif mode == "max":
            ok = value <= tolerance
        else:  # witness: the statistic must exceed the floor
            ok = value > tolerance
        suites.append(
            {
                "name": name,
                "statistic": "max_abs" if mode == "max" else "max_witness",
                "value": value,
                "tolerance": tolerance,
                "worst_point_index": argmax.get(name, 0),
                "pass": bool(ok),
            }
        )

    add("bracket_coincidence", cfg.compare_tol)
    add("projected_forms_agreement", cfg.compare_tol)
    add("skew_symmetry", 1e-12)
    add("leibniz_rule", 1e-10)
    add("extension_independence", cfg.compare_tol)
    add("dynamics_two_route", cfg.compare_tol)
    add("field_tangency", 1e-9)
    add("projector_laws", 1e-10)
    add("projection_identity_on_admissible", 1e-9)
    add("extension_field_base_in_distribution", 1e-9)
    add("extension_field_complement_vertical", 1e-9)
    add("jacobiator_canonical", 1e-8)
    if integrable:
        add("jacobiator_defect", 1e-8)
    else:
        add("jacobiator_defect", WITNESS_FLOOR, mode="witness")
    add("strong_projection_gap", None)

    report = {
        "command": "verify",
        "system": cfg.system_label,
        "seed": cfg.seed,
        "count": cfg.count,
        "on_m_tol": cfg.on_m_tol,
        "compare_tol": cfg.compare_tol,
        "integrable_distribution": integrable,
        "suites": suites,
        "pass": all(s["pass"] for s in suites),
    }
    return report
