"""Comparison-principle harness: classify data, then run the doubling-free proof pipeline numerically.

Sign conventions: ``u`` is a subsolution when ``F(u, grad_h u, hess_h u) >= 0``
and ``v`` a supersolution when ``F(v, ...) <= 0``.  The claim under test is

    sup_Omega (u - v)^+  <=  sup_boundary (u - v)^+.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import expr as fx
from .errors import BoundaryError, InputError, NonsmoothError
from .grid import GridDomain, GridField
from .group import CarnotGroup
from .horizontal import central_differences, coefficient_matrix, frozen_coefficient_hessian
from .operators import NonlinearOperator, PerturbationError, check_structure, classical_residual, perturb_supersolution
from .transforms import convolve, semiconvexity_certificate, shrink_domain

VERDICTS = ("HOLDS", "HYPOTHESIS_VIOLATION", "COUNTEREXAMPLE_CANDIDATE", "INCONCLUSIVE")
SLACK = 1e-9


def _floats(a):
    return np.asarray(a, dtype=float).tolist()


# -- classical classification ---------------------------------------------

@dataclass
class ClassicalReport:
    kind: str
    passed: bool
    extreme: float
    node: int
    point: list

    def to_dict(self):
        return dataclasses.asdict(self)


def classify_classical(G: CarnotGroup, F: NonlinearOperator, w, dom: GridDomain, kind: str) -> ClassicalReport:
    """Sign of the classical residual ``F(w, grad_h w, hess_h w)`` over interior nodes.

    ``kind="sub"`` needs the minimum ``>= -1e-9``, ``kind="super"`` the maximum ``<= 1e-9``.
    For smooth ``w`` this is the viscosity condition.
    """
    if kind not in ("sub", "super"):
        raise InputError("kind must be 'sub' or 'super'")
    if isinstance(w, str):
        w = fx.parse(w)
    if not fx.is_smooth(w):
        raise NonsmoothError(
            f"{fx.to_string(w)} is not smooth; classify it through the grid pipeline instead")
    nodes = np.flatnonzero(dom.interior_mask.ravel())
    res = classical_residual(G, F, w, dom.points[nodes])
    k = int(np.argmin(res)) if kind == "sub" else int(np.argmax(res))
    extreme = float(res[k])
    passed = extreme >= -SLACK if kind == "sub" else extreme <= SLACK
    node = int(nodes[k])
    return ClassicalReport(kind, bool(passed), extreme, node, _floats(dom.points[node]))


# -- blow-up and Jensen witness --------------------------------------------

def blow_up(u: GridField, x0, grad, rho: float, half_width: float = 2.0, spacing=None) -> GridField:
    """``u^rho(x) = (u(x0 + rho x) - u(x0) - rho <grad, x>) / rho^2`` on ``[-half_width, half_width]^n``.

    By default the reference grid has spacing ``h / rho`` so every sample sits
    on a node of ``u``; an explicit ``spacing`` interpolates multilinearly.
    """
    dom = u.domain
    if not rho > 0:
        raise InputError("rho must be positive")
    node = dom.flat_index(x0)
    c = dom.node_coordinates(node)
    grad = np.asarray(grad, dtype=float)
    if grad.shape != (dom.ndim,):
        raise InputError(f"gradient must have length {dom.ndim}")
    h = dom.spacing
    if spacing is None:
        J = np.floor(half_width * rho / h + 1e-9).astype(int)
        if np.any(J < 1):
            raise InputError("blow-up window is smaller than one grid cell")
        ref_h = h / rho
        ref = GridDomain(tuple(-J * ref_h), tuple(J * ref_h), tuple(2 * J + 1))
    else:
        ref_h = np.broadcast_to(np.asarray(spacing, dtype=float), (dom.ndim,))
        J = np.floor(half_width / ref_h + 1e-9).astype(int)
        if np.any(J < 1):
            raise InputError("reference spacing exceeds the window")
        ref = GridDomain(tuple(-J * ref_h), tuple(J * ref_h), tuple(2 * J + 1))
    lo = c + rho * np.asarray(ref.lows)
    hi = c + rho * np.asarray(ref.highs)
    tol = 1e-9 * np.maximum(1.0, np.abs(np.asarray(dom.highs)))
    if np.any(lo < np.asarray(dom.lows) - tol) or np.any(hi > np.asarray(dom.highs) + tol):
        raise BoundaryError(f"blow-up window [{lo.tolist()}, {hi.tolist()}] leaves the sampled domain")

    if spacing is None:
        idx = dom.multi_index(node)
        sl = tuple(slice(i - j, i + j + 1) for i, j in zip(idx, J))
        samples = u.values[sl].ravel()
    else:
        interp = RegularGridInterpolator(dom.axes, u.values, method="linear")
        samples = interp(np.clip(c + rho * ref.points, dom.lows, dom.highs))
    u0 = u.flat[node]
    vals = (samples - u0 - rho * ref.points @ grad) / rho ** 2
    return GridField(ref, vals)


@dataclass
class WitnessReport:
    status: str
    node: int | None = None
    point: list | None = None
    hessian: list | None = None
    gradient: list | None = None
    max_eigenvalue: float | None = None
    residual: float | None = None
    candidates: int = 0

    @property
    def found(self) -> bool:
        return self.status == "FOUND"

    def to_dict(self):
        return dataclasses.asdict(self)


def _design(offsets):
    n = offsets.shape[1]
    cols = [np.ones(len(offsets))] + [offsets[:, i] for i in range(n)]
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    for i, j in pairs:
        cols.append(offsets[:, i] * offsets[:, j] * (0.5 if i == j else 1.0))
    return np.stack(cols, axis=1), pairs


def quadratic_fit(w: GridField, node, fit_steps: int = 1):
    """Least-squares quadratic on the ``(2 fit_steps + 1)^n`` block around ``node``.

    Returns ``(gradient, hessian, rms_residual)``.
    """
    dom = w.domain
    idx = dom.multi_index(node)
    if any(i - fit_steps < 0 or i + fit_steps >= c for i, c in zip(idx, dom.counts)):
        raise BoundaryError(f"fit stencil around {idx} leaves the grid")
    n = dom.ndim
    grids = np.meshgrid(*[np.arange(-fit_steps, fit_steps + 1)] * n, indexing="ij")
    steps = np.stack([g.ravel() for g in grids], axis=-1)
    offsets = steps * dom.spacing
    vals = w.values[tuple((np.asarray(idx) + steps).T)]
    A, pairs = _design(offsets)
    coef, *_ = np.linalg.lstsq(A, vals, rcond=None)
    grad = coef[1:1 + n]
    H = np.zeros((n, n))
    for (i, j), c in zip(pairs, coef[1 + n:]):
        H[i, j] = H[j, i] = c
    resid = vals - A @ coef
    return grad, H, float(np.sqrt(np.mean(resid ** 2)))


def jensen_witness(w: GridField, x0, radius: float, tol: float, fit_steps: int = 1) -> WitnessReport:
    """Search nodes within Euclidean ``radius`` of ``x0`` for a twice-differentiable point with ``hess w <= tol``.

    Each candidate gets a local quadratic fit; among candidates whose fitted
    Hessian has largest eigenvalue ``<= tol`` the smallest fit residual wins,
    ties going to the node closer to ``x0`` and then to the lower index.
    """
    dom = w.domain
    if not radius > 0:
        raise InputError("radius must be positive")
    c = dom.node_coordinates(x0)
    pts = dom.points
    dist = np.sqrt(np.sum((pts - c) ** 2, axis=1))
    near = dist <= radius * (1 + 1e-12)
    inner = np.ones(dom.counts, dtype=bool)
    for ax in range(dom.ndim):
        sl = [slice(None)] * dom.ndim
        sl[ax] = slice(0, fit_steps)
        inner[tuple(sl)] = False
        sl[ax] = slice(dom.counts[ax] - fit_steps, None)
        inner[tuple(sl)] = False
    cand = np.flatnonzero(near & inner.ravel())
    if cand.size == 0:
        raise InputError("no node in the search window has a full fitting stencil")
    best = None
    for node in cand:
        grad, H, res = quadratic_fit(w, int(node), fit_steps)
        lam = float(np.linalg.eigvalsh(H)[-1])
        if lam > tol:
            continue
        key = (res, float(dist[node]), int(node))
        if best is None or key < best[0]:
            best = (key, grad, H, lam)
    if best is None:
        return WitnessReport("NOT_FOUND", candidates=int(cand.size))
    (res, _, node), grad, H, lam = best
    return WitnessReport("FOUND", node, _floats(pts[node]), _floats(H), _floats(grad), lam, res, int(cand.size))


# -- the pipeline ------------------------------------------------------------

@dataclass
class ComparisonReport:
    verdict: str
    c_plus: float
    delta0: float
    tolerances: dict
    x0: dict | None = None
    gradient_gap: dict | None = None
    semiconvexity: dict | None = None
    blow_up: dict | None = None
    jensen_witness: dict | None = None
    residuals: dict | None = None
    hypotheses: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    perturbation: dict | None = None
    failed_step: str | None = None
    message: str = ""
    setup: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict, repr=False)

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "fields"}
        return _jsonable(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _check_hypotheses(G, F, dom, u_expr, v_expr, samples, seed):
    hyp, violations = {}, []
    rep = check_structure(F, G.m, samples, seed)
    hyp["structure"] = rep.to_dict()
    case = "i" if rep.case_i else ("ii" if rep.case_ii else None)
    hyp["case"] = case
    effective = F
    if case is None:
        checks = rep.checks
        for name in ("degenerate_subelliptic", "decreasing", "uniformly_subelliptic", "nonincreasing"):
            if not checks[name].passed:
                violations.append({"check": f"operator {name}", "counterexample": checks[name].counterexample,
                                   "constant": checks[name].constant})
                break
    elif not (F.case_i or F.case_ii):
        # undeclared but verified: adopt the estimated constants
        c = rep.checks
        if case == "i":
            effective = dataclasses.replace(
                F, properties=F.properties | {"degenerate_subelliptic", "decreasing"}, alpha3=c["decreasing"].constant)
        else:
            effective = dataclasses.replace(
                F, properties=F.properties | {"uniformly_subelliptic", "nonincreasing"},
                alpha1=c["uniformly_subelliptic"].constant, alpha2=F.alpha2 if F.alpha2 is not None else 0.0)

    for name, e, kind in (("u", u_expr, "sub"), ("v", v_expr, "super")):
        if e is None:
            hyp[f"{name}_{kind}solution"] = "UNCHECKED"
            continue
        try:
            cls = classify_classical(G, F, e, dom, kind)
        except NonsmoothError:
            hyp[f"{name}_{kind}solution"] = "UNCHECKED (nonsmooth)"
            continue
        hyp[f"{name}_{kind}solution"] = cls.to_dict()
        if not cls.passed:
            violations.append({"check": f"{name} is a {kind}solution", "node": cls.node, "point": cls.point,
                               "residual": cls.extreme})
    return hyp, violations, effective


def _lipschitz(values, spacing):
    return max(float(np.max(np.abs(np.diff(values, axis=ax)))) / h for ax, h in enumerate(spacing))


def _finest_rho(h):
    return 2.0 ** -math.floor(math.log2(1.0 / h) + 1e-12)


def run_comparison(G: CarnotGroup, F: NonlinearOperator, u: GridField, v: GridField, delta: float,
                   eps: float, tol: float, *, u_expr=None, v_expr=None, samples: int = 200,
                   seed: int = 0, jet_bounds=None) -> ComparisonReport:
    """Check ``sup (u - v)^+ <= sup_boundary (u - v)^+`` and, if it fails, chase the contradiction.

    ``u_expr``/``v_expr`` (smooth expressions) enable the classical
    sub/supersolution pre-check; without them those hypotheses are reported
    as unchecked.
    """
    dom = u.domain
    if v.domain != dom:
        raise InputError("u and v are sampled on different grids")
    if dom.ndim != G.n:
        raise InputError("grid dimension does not match the group")
    if not (delta > 0 and eps > 0 and tol > 0):
        raise InputError("delta, eps and tol must be positive")
    u_expr = fx.parse(u_expr) if isinstance(u_expr, str) else u_expr
    v_expr = fx.parse(v_expr) if isinstance(v_expr, str) else v_expr

    setup = {"group": G.name, "operator": F.describe(), "grid": dom.to_dict(), "delta_requested": float(delta),
             "eps_requested": float(eps), "seed": int(seed), "samples": int(samples)}
    tols = {"tol": float(tol), "classical_slack": SLACK}
    hyp, violations, Feff = _check_hypotheses(G, F, dom, u_expr, v_expr, samples, seed)

    bnd = dom.boundary_mask.ravel()
    diff = u.flat - v.flat
    c_plus = max(0.0, float(np.max(diff[bnd])))
    v_s = v + c_plus
    diff_s = u.flat - v_s.flat
    delta0 = max(0.0, float(np.max(diff_s))) - max(0.0, float(np.max(diff_s[bnd])))
    worst = int(np.argmax(diff_s))
    setup["max_excess_node"] = {"node": worst, "point": _floats(dom.points[worst])}
    report = ComparisonReport("HOLDS", c_plus, delta0, tols, hypotheses=hyp, violations=violations, setup=setup)

    if violations:
        report.verdict = "HYPOTHESIS_VIOLATION"
        report.message = violations[0]["check"] + " fails"
        return report
    if delta0 <= tol:
        report.message = "interior excess within tolerance of the boundary excess"
        return report

    def inconclusive(step, msg):
        report.verdict = "INCONCLUSIVE"
        report.failed_step = step
        report.message = msg
        return report

    d = min(float(delta), delta0 / 8.0)
    e = min(float(eps), d / 2.0)
    tols.update(delta=d, epsilon=e)
    try:
        pert = perturb_supersolution(G, v_s, d, Feff, jet_bounds=jet_bounds)
    except (PerturbationError, InputError) as exc:
        return inconclusive("perturb_supersolution", str(exc))
    report.perturbation = pert.to_dict()

    u_eps = convolve(G, u, e, "sup")
    v_eps = convolve(G, pert.v_delta, e, "inf")
    w = u_eps.field - v_eps.field
    report.fields = {"u_eps": u_eps.field, "v_delta_eps": v_eps.field, "difference": w}
    R0 = max(float(np.max(np.abs(u.flat))), float(np.max(np.abs(v_s.flat))))
    mask = shrink_domain(G, dom, 2.0 * R0 * e).ravel()
    if not mask.any():
        raise InputError(f"the shrunken domain for eps={e:g} is empty; use a smaller eps or a finer grid")

    wf = np.where(mask, w.flat, -np.inf)
    x0 = int(np.argmax(wf))
    report.x0 = {"node": x0, "point": _floats(dom.points[x0]), "value": float(w.flat[x0]),
                 "shrink_radius": 2.0 * R0 * e, "nodes_in_mask": int(mask.sum())}

    idx = dom.multi_index(x0)
    _, gu, Hu = central_differences(u_eps.field.values, dom.spacing, idx)
    _, gv, Hv = central_differences(v_eps.field.values, dom.spacing, idx)
    lip = max(_lipschitz(u_eps.field.values, dom.spacing), _lipschitz(v_eps.field.values, dom.spacing))
    gap = float(np.linalg.norm(gu - gv))
    allowed = tol * (1.0 + lip)
    report.gradient_gap = {"gap": gap, "allowed": allowed, "lipschitz": lip, "grad_u": _floats(gu),
                           "grad_v": _floats(gv)}
    if gap > allowed:
        return inconclusive("gradient_agreement", f"discrete gradients differ by {gap:.3g} > {allowed:.3g}")

    C = u_eps.kernel_constant / e
    cert = semiconvexity_certificate(w, C, 1e-8 * (1.0 + C))
    report.semiconvexity = dataclasses.asdict(cert)
    if not cert.passed:
        return inconclusive("semiconvexity", "difference of convolutions fails the semiconvexity certificate")

    rho = _finest_rho(float(np.max(dom.spacing)))
    try:
        wr = blow_up(w, x0, gu - gv, rho)
        ur = blow_up(u_eps.field, x0, gu, rho)
        vr = blow_up(v_eps.field, x0, gu, rho)
    except (BoundaryError, InputError) as exc:
        return inconclusive("blow_up", str(exc))
    report.blow_up = {"rho": rho, "window": wr.domain.to_dict()}

    centre = wr.domain.flat_index(tuple(c // 2 for c in wr.domain.counts))
    try:
        wit = jensen_witness(wr, centre, float(np.max(wr.domain.highs)) * math.sqrt(G.n), tol)
    except InputError as exc:
        return inconclusive("jensen_witness", str(exc))
    report.jensen_witness = wit.to_dict()
    if not wit.found:
        return inconclusive("jensen_witness", "no node with a negative semidefinite fitted Hessian")

    _, H1, _ = quadratic_fit(ur, wit.node)
    _, H2, _ = quadratic_fit(vr, wit.node)
    x0pt = dom.points[x0]
    M1 = frozen_coefficient_hessian(G, x0pt, H1, gu)
    M2 = frozen_coefficient_hessian(G, x0pt, H2, gu)
    p = coefficient_matrix(G, x0pt) @ gu
    r1, r2 = float(u_eps.field.flat[x0]), float(v_eps.field.flat[x0])
    F1 = float(Feff(r1, p, M1))
    F2 = float(Feff(r2, p, M2))
    slack = tol * (1.0 + abs(F1) + abs(F2))
    links = {
        "subsolution": bool(F1 >= -tol),
        "strict_supersolution": bool(F2 <= -pert.c_delta + tol),
        "monotone": bool(F1 <= F2 + slack),
    }
    report.jensen_witness.update(M1=_floats(M1), M2=_floats(M2),
                                 max_eigenvalue_M1_minus_M2=float(np.linalg.eigvalsh(M1 - M2)[-1]))
    report.residuals = {"F_u": F1, "F_v": F2, "c_delta": pert.c_delta, "slack": slack, "r_u": r1, "r_v": r2,
                        "p": _floats(p), "links": links}
    if not links["monotone"]:
        return inconclusive("frozen_coefficient_chain", "F(u, p, M1) exceeds F(v, p, M2) at the witness")
    report.verdict = "COUNTEREXAMPLE_CANDIDATE"
    failing = [k for k in ("subsolution", "strict_supersolution") if not links[k]]
    report.message = ("broken link: " + ", ".join(failing)) if failing else "all links hold numerically"
    return report
