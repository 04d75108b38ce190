"""Carnot groups of step at most three in exponential coordinates.

A group is described by its stratified Lie algebra: layer dimensions and the
structure constants of the bracket in a basis adapted to the layers.  Points
are flat ``numpy`` arrays of length ``n`` (layer 1 first); every function
accepts stacked points of shape ``(..., n)``.

The group law is the Baker-Campbell-Hausdorff series, which terminates for
nilpotent algebras::

    Z = X + Y + [X,Y]/2 + ([X,[X,Y]] + [Y,[Y,X]])/12

(the degree-4 terms live in the fourth layer, which is zero for step <= 3).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import product as iproduct

import numpy as np

from .errors import InputError, SpecError

MAX_STEP = 3


@dataclass(frozen=True, eq=False)
class CarnotGroup:
    """Stratified nilpotent Lie group with precomputed product tables.

    Parameters
    ----------
    name : str
        Label used in reports.
    layer_dims : tuple of int
        ``(m_1, ..., m_r)``; ``m_1`` is the horizontal dimension.
    structure : ndarray, shape (n, n, n)
        ``structure[a, b, k]`` is the k-th coordinate of ``[e_a, e_b]``.
    """

    name: str
    layer_dims: tuple
    structure: np.ndarray = field(repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        C = np.array(self.structure, dtype=float)
        C.setflags(write=False)
        object.__setattr__(self, "structure", C)
        _validate(dims, C)

        n = sum(dims)
        # nested[a, b, c, k] = [e_a, [e_b, e_c]]_k
        nested = np.einsum("bcj,ajk->abck", C, C)
        nested.setflags(write=False)
        object.__setattr__(self, "nested", nested)

        m = dims[0]
        # Left-invariant frame: a[l, k](x) = E + x.A1 + x.x.A2
        lin = 0.5 * C[:, :m, :]
        quad = nested[:, :, :m, :] / 12.0
        for arr in (lin, quad):
            arr.setflags(write=False)
        object.__setattr__(self, "frame_linear", lin)
        object.__setattr__(self, "frame_quadratic", quad)

        layer_of = np.repeat(np.arange(1, len(dims) + 1), dims)
        layer_of.setflags(write=False)
        object.__setattr__(self, "layer_of", layer_of)
        object.__setattr__(self, "n", n)

    # -- basic shape data -------------------------------------------------
    @property
    def step(self) -> int:
        return len(self.layer_dims)

    @property
    def m(self) -> int:
        return self.layer_dims[0]

    @property
    def homogeneous_exponent(self) -> int:
        """The even integer ``2 * r!`` used by the gauge norm."""
        return 2 * math.factorial(self.step)

    @property
    def layer_slices(self):
        out, start = [], 0
        for d in self.layer_dims:
            out.append(slice(start, start + d))
            start += d
        return out

    def identity(self) -> np.ndarray:
        return np.zeros(self.n)

    def split(self, p):
        """Layer components ``[xi_1(p), ..., xi_r(p)]`` of a point."""
        p = self.check_point(p)
        return [p[..., s] for s in self.layer_slices]

    def check_point(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.ndim == 0 or p.shape[-1] != self.n:
            raise InputError(
                f"point has trailing dimension {p.shape[-1:] or 0}, group {self.name} needs {self.n}"
            )
        return p

    # -- Lie algebra ------------------------------------------------------
    def bracket(self, x, y) -> np.ndarray:
        return np.einsum("...a,...b,abk->...k", x, y, self.structure)

    def nested_bracket(self, x, y, z) -> np.ndarray:
        """``[x, [y, z]]``."""
        return np.einsum("...a,...b,...c,abck->...k", x, y, z, self.nested)

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        brackets = []
        C = self.structure
        slices = self.layer_slices
        for a in range(self.n):
            for b in range(a + 1, self.n):
                if np.any(C[a, b]):
                    target = self.layer_of[a] + self.layer_of[b]
                    out = C[a, b, slices[target - 1]]
                    brackets.append({"i": a + 1, "j": b + 1, "out": out.tolist()})
        return {"name": self.name, "layer_dims": list(self.layer_dims), "brackets": brackets}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "CarnotGroup":
        try:
            dims = [int(d) for d in doc["layer_dims"]]
            name = str(doc.get("name", "custom"))
            raw = doc.get("brackets", [])
        except (KeyError, TypeError, ValueError) as exc:
            raise SpecError(f"malformed group document: {exc}") from None
        if not dims or any(d < 1 for d in dims):
            raise SpecError("layer_dims must be a non-empty list of positive integers")
        if len(dims) > MAX_STEP:
            raise SpecError(f"step {len(dims)} exceeds the supported maximum {MAX_STEP}")
        n = sum(dims)
        starts = np.cumsum([0] + dims)
        layer_of = np.repeat(np.arange(1, len(dims) + 1), dims)
        C = np.zeros((n, n, n))
        for entry in raw:
            try:
                i, j = int(entry["i"]) - 1, int(entry["j"]) - 1
                out = np.asarray(entry["out"], dtype=float)
            except (KeyError, TypeError, ValueError) as exc:
                raise SpecError(f"malformed bracket entry {entry!r}: {exc}") from None
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise SpecError(f"bracket indices out of range in {entry!r}")
            target = layer_of[i] + layer_of[j]
            vec = np.zeros(n)
            if out.shape == (n,):
                vec = out
            elif target <= len(dims) and out.shape == (dims[target - 1],):
                vec[starts[target - 1]:starts[target]] = out
            elif target > len(dims) and not np.any(out):
                continue
            else:
                raise SpecError(f"bracket output has wrong length in {entry!r}")
            for a, b, sign in ((i, j, 1.0), (j, i, -1.0)):
                prev = C[a, b]
                if np.any(prev) and not np.array_equal(prev, sign * vec):
                    raise SpecError(f"conflicting bracket [{a + 1},{b + 1}]")
                C[a, b] = sign * vec
        return cls(name, tuple(dims), C)

    @classmethod
    def from_json(cls, text: str) -> "CarnotGroup":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecError(f"group spec is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise SpecError("group spec must be a JSON object")
        return cls.from_dict(doc)


def _validate(dims, C):
    if not dims or any(d < 1 for d in dims):
        raise SpecError("layer_dims must be positive")
    r = len(dims)
    if r > MAX_STEP:
        raise SpecError(f"step {r} exceeds the supported maximum {MAX_STEP}")
    n = sum(dims)
    if C.shape != (n, n, n):
        raise SpecError(f"structure constants must have shape {(n, n, n)}, got {C.shape}")
    if not np.array_equal(C, -C.transpose(1, 0, 2)):
        raise SpecError("bracket is not antisymmetric")

    layer_of = np.repeat(np.arange(1, r + 1), dims)
    for a, b in iproduct(range(n), repeat=2):
        target = layer_of[a] + layer_of[b]
        allowed = layer_of == target
        if np.any(C[a, b, ~allowed]):
            raise SpecError(f"[e{a + 1}, e{b + 1}] does not land in layer {target}")

    nested = np.einsum("bcj,ajk->abck", C, C)
    jacobi = nested + nested.transpose(1, 2, 0, 3) + nested.transpose(2, 0, 1, 3)
    if np.max(np.abs(jacobi), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(C), initial=0.0)) ** 2:
        raise SpecError("structure constants violate the Jacobi identity")

    starts = np.cumsum([0] + list(dims))
    horizontal = range(dims[0])
    for j in range(1, r):
        layer_j = range(starts[j - 1], starts[j])
        images = [C[a, b, starts[j]:starts[j + 1]] for a in horizontal for b in layer_j]
        rank = np.linalg.matrix_rank(np.array(images)) if images else 0
        if rank != dims[j]:
            raise SpecError(f"[V_1, V_{j}] does not span V_{j + 1} (rank {rank} < {dims[j]})")


# -- built-in groups ------------------------------------------------------

def euclidean(n: int) -> CarnotGroup:
    if n < 1:
        raise InputError("euclidean dimension must be >= 1")
    return CarnotGroup(f"euclidean:{n}", (n,), np.zeros((n, n, n)))


def heisenberg(k: int = 1) -> CarnotGroup:
    """Heisenberg group H^k: layers (2k, 1), [X_i, X_{k+i}] = T."""
    if k < 1:
        raise InputError("heisenberg index must be >= 1")
    n = 2 * k + 1
    C = np.zeros((n, n, n))
    for i in range(k):
        C[i, k + i, n - 1] = 1.0
        C[k + i, i, n - 1] = -1.0
    return CarnotGroup(f"heisenberg:{k}", (2 * k, 1), C)


def engel() -> CarnotGroup:
    """Engel group: layers (2, 1, 1), [X1, X2] = X3, [X1, X3] = X4."""
    C = np.zeros((4, 4, 4))
    C[0, 1, 2], C[1, 0, 2] = 1.0, -1.0
    C[0, 2, 3], C[2, 0, 3] = 1.0, -1.0
    return CarnotGroup("engel", (2, 1, 1), C)


def builtin_group(name: str) -> CarnotGroup:
    """Resolve ``"euclidean:n"``, ``"heisenberg:n"`` or ``"engel"``."""
    kind, _, arg = name.strip().partition(":")
    try:
        if kind == "euclidean":
            return euclidean(int(arg))
        if kind == "heisenberg":
            return heisenberg(int(arg) if arg else 1)
        if kind == "engel" and not arg:
            return engel()
    except ValueError:
        pass
    raise SpecError(f"unknown group {name!r}")


def load_group(ref) -> CarnotGroup:
    """Accept a group, a built-in name, a JSON document (dict) or a path to one."""
    if isinstance(ref, CarnotGroup):
        return ref
    if isinstance(ref, dict):
        return CarnotGroup.from_dict(ref)
    ref = str(ref)
    if ref.endswith(".json"):
        try:
            with open(ref) as fh:
                text = fh.read()
        except OSError as exc:
            raise SpecError(f"cannot read group spec {ref}: {exc}") from None
        return CarnotGroup.from_json(text)
    return builtin_group(ref)


# -- group operations -----------------------------------------------------

def multiply(G: CarnotGroup, p, q) -> np.ndarray:
    """Group product ``p . q``; exact polynomial evaluation."""
    p, q = G.check_point(p), G.check_point(q)
    z = p + q
    if G.step >= 2:
        z = z + 0.5 * G.bracket(p, q)
    if G.step >= 3:
        z = z + (G.nested_bracket(p, p, q) + G.nested_bracket(q, q, p)) / 12.0
    return z


def inverse(G: CarnotGroup, p) -> np.ndarray:
    return -G.check_point(p)


def dilate(G: CarnotGroup, lam: float, p) -> np.ndarray:
    """Non-isotropic dilation: layer i scaled by ``lam**i``."""
    if not lam > 0:
        raise InputError(f"dilation factor must be positive, got {lam}")
    p = G.check_point(p)
    return p * float(lam) ** G.layer_of


def gauge_kernel(G: CarnotGroup, p) -> np.ndarray:
    """``N(p) ** (2 r!)`` evaluated as a polynomial: sum_i |xi_i|^(2 r!/i)."""
    p = G.check_point(p)
    rf = math.factorial(G.step)
    total = 0.0
    for i, s in enumerate(G.layer_slices, start=1):
        sq = np.sum(p[..., s] ** 2, axis=-1)
        total = total + sq ** (rf // i)
    return total


def gauge_norm(G: CarnotGroup, p) -> np.ndarray:
    return gauge_kernel(G, p) ** (1.0 / G.homogeneous_exponent)


def distance(G: CarnotGroup, p, q) -> np.ndarray:
    """Gauge pseudo-distance ``N(p^-1 . q)``."""
    return gauge_norm(G, multiply(G, inverse(G, p), q))


def euclidean_norm(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return np.sqrt(np.sum(p ** 2, axis=-1))


def right_jacobian(G: CarnotGroup, p, q) -> np.ndarray:
    """``d(p . q)/dq`` as a matrix ``J[..., k, c]``."""
    p, q = G.check_point(p), G.check_point(q)
    eye = np.eye(G.n)
    J = np.broadcast_to(eye, p.shape[:-1] + (G.n, G.n)).copy()
    C, D = G.structure, G.nested
    J += 0.5 * np.einsum("...a,ack->...kc", p, C)
    if G.step >= 3:
        J += np.einsum("...a,...b,abck->...kc", p, p, D) / 12.0
        J += (np.einsum("...a,...b,acbk->...kc", q, p, D)
              + np.einsum("...a,...b,cabk->...kc", q, p, D)) / 12.0
    return J


# -- pairwise kernels used by the convolutions --------------------------------

def pairwise_quotient(G: CarnotGroup, x, y) -> np.ndarray:
    """All products ``x_p . y_q^{-1}`` for ``x`` (P, n) and ``y`` (Q, n); shape (P, Q, n).

    The horizontal block is the plain difference; the vertical blocks are
    assembled from matrix products so large batches stay BLAS-bound.
    """
    x, y = np.atleast_2d(x), np.atleast_2d(y)
    z = x[:, None, :] - y[None, :, :]
    if G.step == 1:
        return z
    m, n = G.m, G.n
    C, D = G.structure, G.nested
    vert = slice(m, n)
    # -[x, y]/2
    bil = np.einsum("pa,abk->pbk", x, C[:, :, vert])
    z[:, :, vert] -= 0.5 * np.einsum("pbk,qb->pqk", bil, y)
    if G.step >= 3:
        # -[x,[x,y]]/12 + [y,[y,x]]/12
        wx = np.einsum("pa,pb,abck->pck", x, x, D[:, :, :, vert])
        wy = np.einsum("qa,qb,abck->qck", y, y, D[:, :, :, vert])
        z[:, :, vert] += (np.einsum("qck,pc->pqk", wy, x) - np.einsum("pck,qc->pqk", wx, y)) / 12.0
    return z


def pairwise_kernel(G: CarnotGroup, x, y) -> np.ndarray:
    """``d(x^-1, y^-1) ** (2 r!) = N(x . y^-1) ** (2 r!)`` for all pairs; shape (P, Q)."""
    return gauge_kernel(G, pairwise_quotient(G, x, y))


def kernel_hessian(G: CarnotGroup, x, y) -> np.ndarray:
    """Exact Hessian in ``x`` of ``N(x . y^-1) ** (2 r!)``; broadcasting over leading axes."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    x, y = np.broadcast_arrays(x, y)
    n = G.n
    C, D = G.structure, G.nested
    z = multiply(G, x, -y)

    J = np.broadcast_to(np.eye(n), x.shape[:-1] + (n, n)).copy()
    Z2 = np.zeros(x.shape[:-1] + (n, n, n))  # d2 z_k / dx_i dx_j stored [..., k, i, j]
    if G.step >= 2:
        J -= 0.5 * np.einsum("jbk,...b->...kj", C, y)
    if G.step >= 3:
        J -= np.einsum("jbck,...b,...c->...kj", D, x, y) / 12.0
        J -= np.einsum("ajck,...a,...c->...kj", D, x, y) / 12.0
        J += np.einsum("abjk,...a,...b->...kj", D, y, y) / 12.0
        Z2 -= (np.einsum("jick,...c->...kij", D, y) + np.einsum("ijck,...c->...kij", D, y)) / 12.0

    rf = math.factorial(G.step)
    g1 = np.zeros(x.shape[:-1] + (n,))
    g2 = np.zeros(x.shape[:-1] + (n, n))
    for i, s in enumerate(G.layer_slices, start=1):
        p = rf // i
        zs = z[..., s]
        sq = np.sum(zs ** 2, axis=-1)[..., None]
        g1[..., s] = 2.0 * p * sq ** (p - 1) * zs
        block = 2.0 * p * sq[..., None] ** (p - 1) * np.eye(s.stop - s.start)
        if p >= 2:
            block = block + 4.0 * p * (p - 1) * sq[..., None] ** (p - 2) * zs[..., :, None] * zs[..., None, :]
        g2[..., s, s] = block
    H = np.einsum("...ki,...kl,...lj->...ij", J, g2, J)
    H += np.einsum("...k,...kij->...ij", g1, Z2)
    return H


# -- invariant suite ----------------------------------------------------------

def _rel(a, b, scale=None):
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)) if scale is None else scale, 1e-300)
    err = np.abs(a - b)
    if err.ndim > 1:
        err, scale = np.max(err, axis=-1), np.max(scale, axis=-1)
    return float(np.max(err / np.maximum(scale, 1e-300))) if err.size else 0.0


def check_group_laws(G: CarnotGroup, samples: int = 1000, seed: int = 0, lambdas=(0.5, 2.0, 10.0),
                     tol: float = 1e-9) -> dict:
    """Max relative errors of the group laws on seeded random triples.

    Checks associativity, ``p . p^-1 = 0``, left-invariance
    ``d(z.x, z.y) = d(x, y)``, dilation homogeneity
    ``d(D_l x, D_l y) = l d(x, y)`` and ``D_l(x.y) = D_l x . D_l y``.
    """
    if samples < 1:
        raise InputError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    x, y, z = (rng.normal(size=(samples, G.n)) for _ in range(3))
    errors = {}
    lhs = multiply(G, multiply(G, x, y), z)
    rhs = multiply(G, x, multiply(G, y, z))
    errors["associativity"] = _rel(lhs, rhs)
    scale = np.maximum(np.abs(x), 1.0)
    errors["inverse"] = max(_rel(multiply(G, x, inverse(G, x)), 0 * x, scale),
                            _rel(multiply(G, inverse(G, x), x), 0 * x, scale))
    errors["left_invariance"] = _rel(distance(G, multiply(G, z, x), multiply(G, z, y)), distance(G, x, y))
    d = distance(G, x, y)
    errors["homogeneity"] = max(_rel(distance(G, dilate(G, lam, x), dilate(G, lam, y)), lam * d) for lam in lambdas)
    errors["dilation_automorphism"] = max(
        _rel(dilate(G, lam, multiply(G, x, y)), multiply(G, dilate(G, lam, x), dilate(G, lam, y))) for lam in lambdas)
    return {
        "group": G.name,
        "samples": int(samples),
        "seed": int(seed),
        "lambdas": [float(v) for v in lambdas],
        "tolerance": float(tol),
        "max_relative_error": errors,
        "passed": {k: bool(v <= tol) for k, v in errors.items()},
        "all_passed": bool(all(v <= tol for v in errors.values())),
    }
