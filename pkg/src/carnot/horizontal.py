"""Horizontal vector fields, horizontal jets and their finite-difference versions.

The horizontal field ``X_l`` at ``x`` is the image of the l-th basis vector
under the differential of left translation by ``x``.  In coordinates

    X_l = sum_k a[l, k](x) d/dx_k,   a[l, k] = delta_lk for k < m,

with ``a`` a polynomial of degree <= step - 1 read off the product tables.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundaryError, InputError
from .group import CarnotGroup


@dataclass(frozen=True)
class HorizontalJet:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gradient, dtype=float)
        H = np.asarray(self.hessian, dtype=float)
        if H.shape != (g.size, g.size):
            raise InputError(f"hessian shape {H.shape} does not match gradient length {g.size}")
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "gradient", g)
        object.__setattr__(self, "hessian", 0.5 * (H + H.T))

    @property
    def m(self) -> int:
        return self.gradient.size


def coefficient_matrix(G: CarnotGroup, x) -> np.ndarray:
    """The ``m x n`` matrix ``a[l, k](x)``; stacked input gives ``(..., m, n)``."""
    x = G.check_point(x)
    a = np.broadcast_to(np.eye(G.m, G.n), x.shape[:-1] + (G.m, G.n)).copy()
    if G.step >= 2:
        a += np.einsum("...a,alk->...lk", x, G.frame_linear)
    if G.step >= 3:
        a += np.einsum("...a,...b,ablk->...lk", x, x, G.frame_quadratic)
    return a


def coefficient_derivatives(G: CarnotGroup, x) -> np.ndarray:
    """``da[l, k]/dx_j`` as an array ``[..., j, l, k]``."""
    x = G.check_point(x)
    n, m = G.n, G.m
    da = np.zeros(x.shape[:-1] + (n, m, n))
    if G.step >= 2:
        da += G.frame_linear
    if G.step >= 3:
        Q = G.frame_quadratic
        da += np.einsum("...b,jblk->...jlk", x, Q) + np.einsum("...b,bjlk->...jlk", x, Q)
    return da


def frozen_coefficient_hessian(G: CarnotGroup, x0, ehess, egrad) -> np.ndarray:
    """Horizontal Hessian assembled from a Euclidean jet with coefficients frozen at ``x0``.

    ``M[i, j] = sum_kl a_ik a_jl H_kl + sum_kl a_ik (d_k a_jl) g_l``, then
    symmetrized.  ``ehess`` may come from a different point than ``x0`` (the
    blow-up limit), which is the only reason this is separate from
    :func:`horizontal_derivatives`.
    """
    a = coefficient_matrix(G, x0)
    da = coefficient_derivatives(G, x0)
    ehess = np.asarray(ehess, dtype=float)
    egrad = np.asarray(egrad, dtype=float)
    M = np.einsum("...ik,...jl,...kl->...ij", a, a, ehess)
    M += np.einsum("...ik,...kjl,...l->...ij", a, da, egrad)
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def horizontal_derivatives(G: CarnotGroup, x, egrad, ehess):
    """Vectorized ``(grad_h, hess_h)`` from Euclidean gradients/Hessians at ``x``."""
    egrad = np.asarray(egrad, dtype=float)
    ehess = np.asarray(ehess, dtype=float)
    if egrad.shape[-1] != G.n or ehess.shape[-2:] != (G.n, G.n):
        raise InputError("Euclidean jet does not match the group dimension")
    a = coefficient_matrix(G, x)
    grad_h = np.einsum("...lk,...k->...l", a, egrad)
    return grad_h, frozen_coefficient_hessian(G, x, ehess, egrad)


def horizontal_jet_from_euclidean(G: CarnotGroup, x, value, egrad, ehess) -> HorizontalJet:
    ehess = np.asarray(ehess, dtype=float)
    if ehess.shape != (G.n, G.n):
        raise InputError(f"Euclidean Hessian must be {G.n}x{G.n}")
    if not np.allclose(ehess, ehess.T, rtol=1e-12, atol=1e-12):
        raise InputError("Euclidean Hessian is not symmetric")
    x = G.check_point(x)
    if x.ndim != 1:
        raise InputError("horizontal_jet_from_euclidean takes a single point")
    grad_h, hess_h = horizontal_derivatives(G, x, egrad, ehess)
    return HorizontalJet(value, grad_h, hess_h)


def central_differences(values: np.ndarray, spacing, index, stride: int = 1):
    """Centered gradient and Hessian of gridded samples at a multi-index.

    Second-order accurate; mixed partials use the four diagonal neighbours.
    """
    values = np.asarray(values)
    d = values.ndim
    idx = tuple(int(i) for i in index)
    for ax in range(d):
        if idx[ax] - stride < 0 or idx[ax] + stride >= values.shape[ax]:
            raise BoundaryError(f"node {idx} lacks a {stride}-node margin on axis {ax}")
    hs = np.asarray(spacing, dtype=float) * stride

    def at(offsets):
        return values[tuple(i + o * stride for i, o in zip(idx, offsets))]

    f0 = values[idx]
    grad = np.zeros(d)
    hess = np.zeros((d, d))
    for a in range(d):
        e = [0] * d
        e[a] = 1
        fp, fm = at(e), at([-v for v in e])
        grad[a] = (fp - fm) / (2 * hs[a])
        hess[a, a] = (fp - 2 * f0 + fm) / hs[a] ** 2
        for b in range(a + 1, d):
            def corner(sa, sb):
                o = [0] * d
                o[a], o[b] = sa, sb
                return at(o)
            mixed = (corner(1, 1) - corner(1, -1) - corner(-1, 1) + corner(-1, -1)) / (4 * hs[a] * hs[b])
            hess[a, b] = hess[b, a] = mixed
    return f0, grad, hess


def discrete_horizontal_jet(G: CarnotGroup, u, node, h_steps: int = 1) -> HorizontalJet:
    """Finite-difference horizontal jet of a sampled field at a grid node.

    ``u`` is a :class:`~carnot.grid.GridField`; ``node`` a multi-index or a
    flat (row-major) index.  Centered Euclidean differences with offset
    ``h_steps`` nodes are pushed through the coefficient algebra.
    """
    dom = u.domain
    if dom.ndim != G.n:
        raise InputError(f"field dimension {dom.ndim} does not match group dimension {G.n}")
    idx = dom.multi_index(node)
    f0, grad, hess = central_differences(u.values, dom.spacing, idx, h_steps)
    x = dom.node_coordinates(idx)
    grad_h, hess_h = horizontal_derivatives(G, x, grad, hess)
    return HorizontalJet(f0, grad_h, hess_h)
