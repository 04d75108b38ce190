"""Fully nonlinear operators ``F(r, p, M)``, structure checks and the strict-supersolution perturbation.

Operators are vectorized: ``F(r, p, M)`` accepts ``r`` of shape ``(...)``,
``p`` of shape ``(..., m)`` and ``M`` of shape ``(..., m, m)``.

Structure properties (``M <= N`` in the Loewner order, ``r >= s``):

* degenerate subelliptic: ``F(r, p, M) <= F(r, p, N)``
* uniformly subelliptic:  ``F(r, p, N) - F(r, q, M) >= alpha1 tr(N - M) - alpha2 |p - q|``
* nonincreasing:          ``F(r, p, M) <= F(s, p, M)``
* decreasing:             ``F(r, p, M) - F(s, p, M) <= alpha3 (s - r)``
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import expr as fx
from .errors import CarnotError, InputError
from .grid import GridField
from .group import CarnotGroup
from .horizontal import HorizontalJet, discrete_horizontal_jet, horizontal_derivatives

PROPERTIES = ("degenerate_subelliptic", "uniformly_subelliptic", "nonincreasing", "decreasing")


def _zero_modulus(s, p_bound=0.0, M_bound=0.0):
    return 0.0


@dataclass(frozen=True, eq=False)
class NonlinearOperator:
    """``F(r, p, M)`` plus declared structure.

    ``omega2(s, p_bound, M_bound)`` bounds ``|F(r, p, M) - F(r, q, M)|`` for
    ``|p - q| <= s``, ``|p| <= p_bound`` and ``|M| <= M_bound``.
    """

    name: str
    func: Callable
    properties: frozenset = frozenset()
    alpha1: float | None = None
    alpha2: float | None = None
    alpha3: float | None = None
    omega2: Callable = _zero_modulus
    omega2_estimated: bool = False
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        props = frozenset(self.properties)
        unknown = props - set(PROPERTIES)
        if unknown:
            raise InputError(f"unknown operator properties {sorted(unknown)}")
        object.__setattr__(self, "properties", props)
        if "uniformly_subelliptic" in props and (self.alpha1 is None or self.alpha2 is None):
            raise InputError("uniformly subelliptic operators need alpha1 and alpha2")
        if "decreasing" in props and self.alpha3 is None:
            raise InputError("decreasing operators need alpha3")

    def __call__(self, r, p, M):
        r = np.asarray(r, dtype=float)
        p = np.asarray(p, dtype=float)
        M = np.asarray(M, dtype=float)
        return np.asarray(self.func(r, p, M), dtype=float)

    @property
    def case_i(self) -> bool:
        """Degenerate subelliptic and decreasing."""
        return {"degenerate_subelliptic", "decreasing"} <= self.properties and self.alpha3 > 0

    @property
    def case_ii(self) -> bool:
        """Uniformly subelliptic and nonincreasing."""
        return {"uniformly_subelliptic", "nonincreasing"} <= self.properties and self.alpha1 > 0

    def describe(self) -> dict:
        return {
            "name": self.name,
            "params": dict(self.params),
            "properties": sorted(self.properties),
            "alpha1": self.alpha1,
            "alpha2": self.alpha2,
            "alpha3": self.alpha3,
            "omega2": "estimated" if self.omega2_estimated else "exact",
        }


def _trace(M):
    return np.trace(M, axis1=-2, axis2=-1)


def _structure_flags(c):
    props = {"degenerate_subelliptic", "uniformly_subelliptic", "nonincreasing"}
    if c > 0:
        props.add("decreasing")
    return props


def trace_minus_u(c: float = 1.0) -> NonlinearOperator:
    """``trace(M) - c r``."""
    c = float(c)
    if c < 0:
        raise InputError("c must be non-negative")
    return NonlinearOperator(
        "trace_minus_u", lambda r, p, M: _trace(M) - c * r, _structure_flags(c),
        alpha1=1.0, alpha2=0.0, alpha3=c if c > 0 else None, params={"c": c},
    )


def infinity_sublaplacian(c: float = 1.0) -> NonlinearOperator:
    """``<M p, p> - c r``; degenerate but not uniformly subelliptic."""
    c = float(c)
    if c < 0:
        raise InputError("c must be non-negative")

    def modulus(s, p_bound=0.0, M_bound=0.0):
        return M_bound * (2.0 * p_bound + s) * s

    props = {"degenerate_subelliptic", "nonincreasing"} | ({"decreasing"} if c > 0 else set())
    return NonlinearOperator(
        "infinity_sublap", lambda r, p, M: np.einsum("...i,...ij,...j->...", p, M, p) - c * r,
        props, alpha3=c if c > 0 else None, omega2=modulus, params={"c": c},
    )


def pucci_minus(lam: float = 1.0, Lam: float = 2.0, c: float = 1.0) -> NonlinearOperator:
    """Minimal Pucci operator ``lam * sum(e > 0) + Lam * sum(e < 0) - c r`` over eigenvalues ``e`` of ``M``."""
    lam, Lam, c = float(lam), float(Lam), float(c)
    if not 0 < lam <= Lam:
        raise InputError("Pucci ellipticity constants need 0 < lambda <= Lambda")

    def F(r, p, M):
        e = np.linalg.eigvalsh(M)
        return lam * np.sum(np.clip(e, 0, None), axis=-1) + Lam * np.sum(np.clip(e, None, 0), axis=-1) - c * r

    return NonlinearOperator(
        "pucci", F, _structure_flags(c), alpha1=lam, alpha2=0.0,
        alpha3=c if c > 0 else None, params={"lambda": lam, "Lambda": Lam, "c": c},
    )


def _operator_env(r, p, M):
    env = {"r": r}
    m = p.shape[-1]
    for i in range(m):
        env[f"p{i + 1}"] = p[..., i]
        for j in range(m):
            env[f"M{i + 1}{j + 1}"] = M[..., i, j]
    return env


def expression_operator(text: str, m: int, properties=(), alpha1=None, alpha2=None, alpha3=None,
                        seed: int = 0) -> NonlinearOperator:
    """User operator from an expression in ``r``, ``p1..pm``, ``M11..Mmm``.

    The gradient modulus is estimated by sampling and flagged as such.
    """
    e = fx.parse(text)
    allowed = {"r"} | {f"p{i + 1}" for i in range(m)} | {f"M{i + 1}{j + 1}" for i in range(m) for j in range(m)}
    bad = fx.variables(e) - allowed
    if bad:
        raise InputError(f"operator expression uses unknown variables {sorted(bad)} for m={m}")

    def F(r, p, M):
        # symmetrize so Mij and Mji agree
        M = 0.5 * (M + np.swapaxes(M, -1, -2))
        return fx.evaluate(e, env=_operator_env(r, p, M))

    def modulus(s, p_bound=0.0, M_bound=0.0):
        return _estimate_modulus(F, m, s, p_bound, M_bound, seed)

    return NonlinearOperator(
        "expr", F, frozenset(properties), alpha1=alpha1, alpha2=alpha2, alpha3=alpha3,
        omega2=modulus, omega2_estimated=True, params={"expr": fx.to_string(e), "m": m},
    )


def _estimate_modulus(F, m, s, p_bound, M_bound, seed, samples=2000):
    if s <= 0:
        return 0.0
    rng = np.random.default_rng(seed)
    p = _ball(rng, samples, m, p_bound)
    q = p + _ball(rng, samples, m, s)
    A = rng.normal(size=(samples, m, m))
    M = 0.5 * (A + np.swapaxes(A, -1, -2))
    norms = np.maximum(np.linalg.norm(M, ord=2, axis=(-2, -1)), 1e-300)
    M *= (M_bound * rng.uniform(size=samples) / norms)[:, None, None]
    r = rng.uniform(-1, 1, size=samples)
    return float(np.max(np.abs(F(r, q, M) - F(r, p, M))))


def _ball(rng, k, m, radius):
    v = rng.normal(size=(k, m))
    v /= np.maximum(np.linalg.norm(v, axis=-1, keepdims=True), 1e-300)
    return v * (radius * rng.uniform(size=(k, 1)) ** (1.0 / m))


def operator_from_config(cfg: dict, m: int) -> NonlinearOperator:
    """``{"op": "trace_minus_u", "c": 1}``, ``{"op": "infinity_sublap"}``, ``{"op": "pucci", ...}``,
    ``{"op": "trace"}`` or ``{"op": "expr", "expr": "...", "properties": [...], ...}``."""
    if not isinstance(cfg, dict) or "op" not in cfg:
        raise InputError("operator config needs an 'op' key")
    op = cfg["op"]
    if op == "trace_minus_u":
        return trace_minus_u(cfg.get("c", 1.0))
    if op == "trace":
        return trace_minus_u(0.0)
    if op == "infinity_sublap":
        return infinity_sublaplacian(cfg.get("c", 1.0))
    if op == "pucci":
        return pucci_minus(cfg.get("lambda", 1.0), cfg.get("Lambda", 2.0), cfg.get("c", 1.0))
    if op == "expr":
        return expression_operator(
            cfg["expr"], m, cfg.get("properties", ()), cfg.get("alpha1"), cfg.get("alpha2"),
            cfg.get("alpha3"), cfg.get("seed", 0),
        )
    raise InputError(f"unknown operator {op!r}")


def evaluate_operator(F: NonlinearOperator, jet: HorizontalJet) -> float:
    if jet.hessian.shape != (jet.m, jet.m):
        raise InputError("jet hessian does not match its gradient")
    return float(F(jet.value, jet.gradient, jet.hessian))


# -- structure checks -----------------------------------------------------

@dataclass
class PropertyCheck:
    status: str
    constant: float | None = None
    estimated: bool = False
    counterexample: dict | None = None

    @property
    def passed(self) -> bool:
        return self.status == "PASS"

    def to_dict(self):
        return {"status": self.status, "constant": self.constant, "estimated": self.estimated,
                "counterexample": self.counterexample}


@dataclass
class StructureReport:
    operator: dict
    m: int
    samples: int
    seed: int
    checks: dict

    @property
    def case_i(self) -> bool:
        return self.checks["degenerate_subelliptic"].passed and self.checks["decreasing"].passed

    @property
    def case_ii(self) -> bool:
        return self.checks["uniformly_subelliptic"].passed and self.checks["nonincreasing"].passed

    def to_dict(self):
        return {
            "operator": self.operator,
            "m": self.m,
            "samples": self.samples,
            "seed": self.seed,
            "checks": {k: v.to_dict() for k, v in self.checks.items()},
            "case_i": self.case_i,
            "case_ii": self.case_ii,
            "decreasing_reading": "F(r,p,M) - F(s,p,M) <= alpha3 (s - r) for r >= s",
        }


def _probes(m):
    """Hand-picked tuples that expose the usual failures before random sampling."""
    I, Z = np.eye(m), np.zeros((m, m))
    e1 = np.zeros((m, m))
    e1[0, 0] = 1.0
    z, one = np.zeros(m), np.ones(m)
    return [
        # (r, s, p, q, M, N)
        (0.0, 0.0, z, z, Z, I),
        (0.0, 0.0, z, z, -I, Z),
        (0.0, 0.0, one, one, Z, e1),
        (1.0, 0.0, z, z, Z, I),
        (1.0, -1.0, one, z, I, 2 * I),
        (0.5, 0.25, one, -one, np.diag(np.arange(m, dtype=float)), np.diag(np.arange(m, dtype=float)) + e1),
    ]


def _samples(m, samples, seed):
    rng = np.random.default_rng(seed)
    probes = _probes(m)
    k = len(probes) + samples
    r = np.empty(k)
    s = np.empty(k)
    p = np.empty((k, m))
    q = np.empty((k, m))
    M = np.empty((k, m, m))
    N = np.empty((k, m, m))
    for i, (ri, si, pi, qi, Mi, Ni) in enumerate(probes):
        r[i], s[i], p[i], q[i], M[i], N[i] = ri, si, pi, qi, Mi, Ni
    j = len(probes)
    r[j:] = rng.uniform(-2, 2, samples)
    s[j:] = r[j:] - rng.exponential(1.0, samples)
    p[j:] = rng.normal(size=(samples, m))
    q[j:] = rng.normal(size=(samples, m))
    A = rng.normal(size=(samples, m, m))
    M[j:] = 0.5 * (A + np.swapaxes(A, -1, -2))
    Q = rng.normal(size=(samples, m, m))
    N[j:] = M[j:] + Q @ np.swapaxes(Q, -1, -2)
    return r, s, p, q, M, N


def _tuple(i, r, s, p, q, M, N, **extra):
    out = {"r": float(r[i]), "s": float(s[i]), "p": p[i].tolist(), "q": q[i].tolist(),
           "M": M[i].tolist(), "N": N[i].tolist()}
    out.update({k: float(v) + 0.0 for k, v in extra.items()})
    return out


def check_structure(F: NonlinearOperator, m: int, samples: int = 200, seed: int = 0,
                    tol: float = 1e-9) -> StructureReport:
    """Sample ``(r, s, p, q, M, N)`` with ``N = M + Q Q^T`` and ``r >= s`` and test each property.

    Declared constants are checked as given; for undeclared properties the
    best constant is estimated from the samples (a property whose estimate
    is not positive fails).
    """
    if samples < 1:
        raise InputError("samples must be >= 1")
    r, s, p, q, M, N = _samples(m, samples, seed)
    FM = F(r, p, M)
    FN = F(r, p, N)
    FqM = F(r, q, M)
    FsM = F(s, p, M)
    scale = tol * (1.0 + np.maximum.reduce([np.abs(FM), np.abs(FN), np.abs(FqM), np.abs(FsM)]))
    checks = {}
    args = (r, s, p, q, M, N)

    gap = FM - FN
    bad = np.flatnonzero(gap > scale)
    checks["degenerate_subelliptic"] = (
        PropertyCheck("FAIL", counterexample=_tuple(bad[0], *args, F_M=FM[bad[0]], F_N=FN[bad[0]]))
        if bad.size else PropertyCheck("PASS"))

    dtr = _trace(N - M)
    dp = np.linalg.norm(p - q, axis=-1)
    if "uniformly_subelliptic" in F.properties:
        a1, a2 = F.alpha1, F.alpha2
        FNq = F(r, q, N)
        FpM = FM
        # both orientations of the gradient slot
        slack = np.minimum(FN - FqM, FNq - FpM) - (a1 * dtr - a2 * dp)
        bad = np.flatnonzero(slack < -scale)
        checks["uniformly_subelliptic"] = (
            PropertyCheck("FAIL", a1, counterexample=_tuple(bad[0], *args, slack=slack[bad[0]]))
            if bad.size else PropertyCheck("PASS", a1))
    else:
        ratio = np.where(dtr > 0, (FN - FM) / np.where(dtr > 0, dtr, 1.0), np.inf)
        i = int(np.argmin(ratio))
        a1 = float(ratio[i]) + 0.0
        checks["uniformly_subelliptic"] = (
            PropertyCheck("PASS", a1, estimated=True) if a1 > tol
            else PropertyCheck("FAIL", a1, estimated=True,
                               counterexample=_tuple(i, *args, F_M=FM[i], F_N=FN[i])))

    rise = FM - FsM
    bad = np.flatnonzero(rise > scale)
    checks["nonincreasing"] = (
        PropertyCheck("FAIL", counterexample=_tuple(bad[0], *args, F_r=FM[bad[0]], F_s=FsM[bad[0]]))
        if bad.size else PropertyCheck("PASS"))

    dr = r - s
    if "decreasing" in F.properties:
        a3 = F.alpha3
        slack = a3 * (-dr) - rise
        bad = np.flatnonzero(slack < -scale)
        checks["decreasing"] = (
            PropertyCheck("FAIL", a3, counterexample=_tuple(bad[0], *args, slack=slack[bad[0]]))
            if bad.size else PropertyCheck("PASS", a3))
    else:
        ratio = np.where(dr > 0, -rise / np.where(dr > 0, dr, 1.0), np.inf)
        i = int(np.argmin(ratio))
        a3 = float(ratio[i]) + 0.0
        checks["decreasing"] = (
            PropertyCheck("PASS", a3, estimated=True) if a3 > tol
            else PropertyCheck("FAIL", a3, estimated=True,
                               counterexample=_tuple(i, *args, F_r=FM[i], F_s=FsM[i])))

    return StructureReport(F.describe(), m, samples, seed, checks)


# -- classical residuals --------------------------------------------------

def classical_residual(G: CarnotGroup, F: NonlinearOperator, e, points) -> np.ndarray:
    """``F(w, grad_h w, hess_h w)`` at each point for a smooth expression ``w``."""
    if isinstance(e, str):
        e = fx.parse(e)
    jet = e if isinstance(e, fx.Jet) else fx.Jet(e, G.n)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    value, grad, hess = jet(pts)
    grad_h, hess_h = horizontal_derivatives(G, pts, grad, hess)
    return F(value, grad_h, hess_h)


# -- strict supersolution perturbation ------------------------------------

def alpha_expr(k: float, c1: float) -> fx.Expr:
    """``1 - exp(-k (x1 + 1 - c1)) / k`` as an expression."""
    x1 = fx.var(1)
    return fx.sub(fx.Num(1.0), fx.div(fx.call("exp", fx.mul(fx.Num(-float(k)), fx.add(x1, fx.Num(1.0 - c1)))),
                                       fx.Num(float(k))))


def alpha_values(x1, k: float, c1: float):
    return 1.0 - np.exp(-k * (np.asarray(x1, float) + 1.0 - c1)) / k


@dataclass(frozen=True, eq=False)
class PerturbationResult:
    v_delta: GridField
    alpha_field: GridField
    k: float
    c_delta: float
    c1: float
    delta: float
    case: str
    margins: dict

    def to_dict(self):
        return {"k": self.k, "c_delta": self.c_delta, "c1": self.c1, "delta": self.delta,
                "case": self.case, "margins": self.margins}


class PerturbationError(CarnotError):
    pass


def jet_bounds_from_field(G: CarnotGroup, v: GridField):
    """``(p_bound, M_bound)`` from finite-difference horizontal jets at interior nodes."""
    pmax = Mmax = 0.0
    for node in np.flatnonzero(v.domain.interior_mask.ravel()):
        jet = discrete_horizontal_jet(G, v, int(node))
        pmax = max(pmax, float(np.linalg.norm(jet.gradient)))
        Mmax = max(Mmax, float(np.linalg.norm(jet.hessian, 2)))
    return pmax, Mmax


def jet_bounds_from_expr(G: CarnotGroup, e, points):
    if isinstance(e, str):
        e = fx.parse(e)
    _, grad, hess = fx.Jet(e, G.n)(points)
    grad_h, hess_h = horizontal_derivatives(G, points, grad, hess)
    return (float(np.max(np.linalg.norm(grad_h, axis=-1))),
            float(np.max(np.linalg.norm(hess_h, ord=2, axis=(-2, -1)))))


def perturb_supersolution(G: CarnotGroup, v: GridField, delta: float, F: NonlinearOperator,
                          jet_bounds=None, max_doublings: int = 60) -> PerturbationResult:
    """Return ``v + delta * alpha_k`` and a margin ``c_delta > 0``.

    ``k`` starts at 2 and doubles until the margin of the applicable case is
    positive:

    * case (i)  ``alpha3 delta min(alpha_k) / 2 - omega2(delta max|grad_h alpha_k|)``
    * case (ii) ``delta min(exp(-k (x1 + 1 - c1))) (alpha1 k - alpha2) / 2``

    When both apply the larger margin is returned.
    """
    if not delta > 0:
        raise InputError("delta must be positive")
    if v.domain.ndim != G.n:
        raise InputError("field dimension does not match the group")
    if not (F.case_i or F.case_ii):
        raise InputError(f"operator {F.name} declares neither (degenerate, decreasing) "
                         "nor (uniformly subelliptic, nonincreasing)")
    x1 = v.domain.points[:, 0]
    c1, x1max = float(np.min(x1)), float(np.max(x1))
    if F.case_i and jet_bounds is None and F.omega2 is not _zero_modulus:
        jet_bounds = jet_bounds_from_field(G, v)
    p_bound, M_bound = jet_bounds if jet_bounds is not None else (0.0, 0.0)

    k = 2.0
    for _ in range(max_doublings + 1):
        margins = {}
        # alpha_k is increasing in x1, its gradient decreasing
        if F.case_i:
            alpha_min = 1.0 - math.exp(-k) / k
            grad_max = math.exp(-k)
            margins["i"] = 0.5 * F.alpha3 * delta * alpha_min - float(F.omega2(delta * grad_max, p_bound, M_bound))
        if F.case_ii:
            e_min = math.exp(-k * (x1max + 1.0 - c1))
            margins["ii"] = 0.5 * delta * e_min * (F.alpha1 * k - F.alpha2)
        case, c_delta = max(margins.items(), key=lambda kv: kv[1])
        if c_delta > 0:
            break
        k *= 2.0
    else:
        raise PerturbationError(f"no admissible k up to {k / 2:g}; the gradient modulus may be pathological")

    alpha = alpha_values(x1, k, c1)
    alpha_field = GridField(v.domain, alpha)
    v_delta = GridField(v.domain, v.flat + delta * alpha)
    return PerturbationResult(v_delta, alpha_field, k, float(c_delta), c1, float(delta), case,
                              {key: float(val) for key, val in margins.items()})
