"""Sup/inf convolutions on a Carnot group and their diagnostics.

For a sampled field ``u`` and ``eps > 0``::

    u^eps(x) = max_y  u(y) - K(x, y) / (2 eps)
    v_eps(x) = min_y  v(y) + K(x, y) / (2 eps)

with ``K(x, y) = d(x^-1, y^-1)^(2 r!) = N(x . y^-1)^(2 r!)``, a polynomial.
The optimum is taken by brute force over all grid nodes ``y``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InputError
from .grid import GridDomain, GridField
from .group import CarnotGroup, gauge_kernel, kernel_hessian, multiply, pairwise_kernel

_CHUNK_FLOATS = 4_000_000


@dataclass(frozen=True, eq=False)
class ConvolutionResult:
    field: GridField
    witnesses: np.ndarray
    epsilon: float
    mode: str
    kernel_constant: float

    @property
    def semiconvexity_constant(self) -> float:
        """``C(Omega, d) / (2 eps)``: adding this times ``|x|^2`` makes the sup-convolution convex."""
        return self.kernel_constant / (2.0 * self.epsilon)


@dataclass(frozen=True)
class CertResult:
    passed: bool
    constant: float
    worst_node: int | None
    worst_eigenvalue: float
    tolerance: float


def _chunk_rows(n_cols: int, width: int) -> int:
    return max(1, _CHUNK_FLOATS // max(1, n_cols * width))


def _sup_convolve(G, pts, vals, eps):
    N = len(pts)
    out = np.empty(N)
    arg = np.empty(N, dtype=np.intp)
    step = _chunk_rows(N, G.n)
    rows = np.arange(N)
    for start in range(0, N, step):
        stop = min(N, start + step)
        kern = pairwise_kernel(G, pts[start:stop], pts)
        cand = vals[None, :] - kern / (2.0 * eps)
        idx = np.argmax(cand, axis=1)
        arg[start:stop] = idx
        out[start:stop] = cand[rows[: stop - start], idx]
    return out, arg


def convolve(G: CarnotGroup, u: GridField, eps: float, mode: str = "sup") -> ConvolutionResult:
    """Sup- (``mode="sup"``) or inf-convolution of a sampled field.

    Ties in the discrete optimum go to the lowest node index.  The inf mode
    is computed as ``-sup(-u)``.
    """
    if not eps > 0:
        raise InputError(f"epsilon must be positive, got {eps}")
    if mode not in ("sup", "inf"):
        raise InputError(f"mode must be 'sup' or 'inf', got {mode!r}")
    dom = u.domain
    if dom.ndim != G.n:
        raise InputError(f"field dimension {dom.ndim} does not match group dimension {G.n}")
    sign = 1.0 if mode == "sup" else -1.0
    vals, arg = _sup_convolve(G, dom.points, sign * u.flat, float(eps))
    return ConvolutionResult(
        field=GridField(dom, sign * vals),
        witnesses=arg,
        epsilon=float(eps),
        mode=mode,
        kernel_constant=kernel_constant(G, dom),
    )


def shrink_domain(G: CarnotGroup, dom: GridDomain, radius: float) -> np.ndarray:
    """Interior nodes whose gauge distance ``d(x^-1, y^-1)`` to every boundary node is >= radius."""
    if radius < 0:
        raise InputError("radius must be non-negative")
    interior = dom.interior_mask.ravel()
    if radius == 0:
        return interior.reshape(dom.counts).copy()
    pts = dom.points
    bnd = pts[dom.boundary_mask.ravel()]
    keep = interior.copy()
    cand = np.flatnonzero(interior)
    step = _chunk_rows(len(bnd), G.n)
    # grid coordinates carry rounding; do not drop nodes sitting exactly at the radius
    slack = 1e-12 * max(1.0, radius)
    for start in range(0, len(cand), step):
        rows = cand[start:start + step]
        kern = pairwise_kernel(G, pts[rows], bnd)
        dist = np.min(kern, axis=1) ** (1.0 / G.homogeneous_exponent)
        keep[rows] = dist >= radius - slack
    return keep.reshape(dom.counts)


def _subsample_axis(count: int, target: int) -> np.ndarray:
    if count <= target:
        return np.arange(count)
    return np.unique(np.round(np.linspace(0, count - 1, target)).astype(int))


def kernel_constant(G: CarnotGroup, dom: GridDomain, max_nodes: int = 343) -> float:
    """Estimate ``sup_{x,y} |Hess_x K(x, y)|`` (spectral norm) over node pairs.

    Nodes are subsampled to at most ``max_nodes`` per side (corners always
    kept); denser sampling can only increase the estimate.
    """
    return _kernel_constant(G, dom, int(max_nodes))


@lru_cache(maxsize=64)
def _kernel_constant(G, dom, max_nodes):
    per_axis = max(2, int(math.floor(max_nodes ** (1.0 / dom.ndim) + 1e-9)))
    sub = [_subsample_axis(c, per_axis) for c in dom.counts]
    mesh = np.meshgrid(*[ax[s] for ax, s in zip(dom.axes, sub)], indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    best = 0.0
    step = _chunk_rows(len(pts), G.n * G.n * 4)
    for start in range(0, len(pts), step):
        xs = pts[start:start + step]
        H = kernel_hessian(G, xs[:, None, :], pts[None, :, :])
        eig = np.linalg.eigvalsh(H)
        best = max(best, float(np.max(np.abs(eig))))
    return best


def discrete_hessians(values: np.ndarray, spacing) -> np.ndarray:
    """Centered second differences at all interior nodes; shape ``(*interior, d, d)``."""
    v = np.asarray(values, dtype=float)
    d = v.ndim
    h = np.asarray(spacing, dtype=float)
    inner = tuple(slice(1, -1) for _ in range(d))
    out = np.empty(tuple(s - 2 for s in v.shape) + (d, d))

    def shifted(offsets):
        return v[tuple(slice(1 + o, v.shape[ax] - 1 + o) for ax, o in enumerate(offsets))]

    center = v[inner]
    for a in range(d):
        e = [0] * d
        e[a] = 1
        out[..., a, a] = (shifted(e) - 2 * center + shifted([-o for o in e])) / h[a] ** 2
        for b in range(a + 1, d):
            def corner(sa, sb):
                o = [0] * d
                o[a], o[b] = sa, sb
                return shifted(o)
            mixed = (corner(1, 1) - corner(1, -1) - corner(-1, 1) + corner(-1, -1)) / (4 * h[a] * h[b])
            out[..., a, b] = out[..., b, a] = mixed
    return out


def semiconvexity_certificate(u: GridField, C: float, tol: float = 0.0) -> CertResult:
    """Check that the discrete Hessian of ``u + C |x|_E^2`` is PSD (up to ``-tol``) at interior nodes.

    A necessary condition for convexity of the continuum function sampled
    by ``u``, not a sufficient one.
    """
    if C < 0:
        raise InputError("semiconvexity constant must be non-negative")
    dom = u.domain
    sq = np.sum(dom.points ** 2, axis=1).reshape(dom.counts)
    H = discrete_hessians(u.values + C * sq, dom.spacing)
    eig = np.linalg.eigvalsh(H)[..., 0]
    k = int(np.argmin(eig))
    worst = float(eig.ravel()[k])
    inner_idx = np.unravel_index(k, eig.shape)
    node = dom.flat_index(tuple(i + 1 for i in inner_idx))
    return CertResult(worst >= -tol, float(C), node, worst, float(tol))


def modulus_of_continuity(u: GridField, radii) -> np.ndarray:
    """Empirical ``omega_u(t) = max |u(x) - u(y)|`` over node pairs with ``|x - y|_E <= t``."""
    pts, vals = u.domain.points, u.flat
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    out = np.zeros(radii.shape)
    step = _chunk_rows(len(pts), pts.shape[1] + 2)
    for start in range(0, len(pts), step):
        dist = np.sqrt(np.sum((pts[start:start + step, None, :] - pts[None, :, :]) ** 2, axis=-1))
        diff = np.abs(vals[start:start + step, None] - vals[None, :])
        for i, t in enumerate(radii):
            sel = dist <= t * (1 + 1e-12)
            if np.any(sel):
                out[i] = max(out[i], float(np.max(diff[sel])))
    return out


def convergence_report(G: CarnotGroup, u: GridField, epsilons, mode: str = "sup") -> dict:
    """Gap, witness displacement and monotonicity of ``u^eps`` for decreasing ``eps``.

    The bound column evaluates ``omega_u(C (R0 eps)^(1/r))`` with ``C``
    fitted from the observed witness displacements.
    """
    eps = [float(e) for e in epsilons]
    if not eps or any(e <= 0 for e in eps):
        raise InputError("epsilons must be positive")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise InputError("epsilons must be strictly decreasing")
    pts = u.domain.points
    R0 = float(np.max(np.abs(u.flat)))
    results = [convolve(G, u, e, mode) for e in eps]
    disps = [float(np.max(np.sqrt(np.sum((pts[res.witnesses] - pts) ** 2, axis=1)))) for res in results]
    scales = [(R0 * e) ** (1.0 / G.step) for e in eps]
    C = max((d / s for d, s in zip(disps, scales) if s > 0), default=0.0)
    args = [C * s for s in scales]
    omegas = modulus_of_continuity(u, args)

    rows = []
    prev = None
    for e, res, disp, arg, om in zip(eps, results, disps, args, omegas):
        gap = float(np.max(np.abs(res.field.flat - u.flat)))
        if prev is None:
            monotone = True
        elif mode == "sup":
            monotone = bool(np.all(prev.field.flat >= res.field.flat))
        else:
            monotone = bool(np.all(prev.field.flat <= res.field.flat))
        rows.append({
            "epsilon": e,
            "sup_gap": gap,
            "max_witness_displacement": disp,
            "monotone_vs_previous": monotone,
            "bound_argument": float(arg),
            "modulus_bound": float(om),
            "bound_holds": bool(gap <= om * (1 + 1e-12) + 1e-15),
        })
        prev = res
    return {
        "mode": mode,
        "R0": R0,
        "displacement_constant": float(C),
        "kernel_constant": results[0].kernel_constant,
        "rows": rows,
        "fields": results,
    }


def kernel_values(G: CarnotGroup, x, y) -> np.ndarray:
    """Pointwise ``K(x, y)`` for broadcastable stacks of points."""
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    return gauge_kernel(G, multiply(G, x, -y))
