"""
Horizontal gradients and Hessians
=================================

The left-invariant frame X_1..X_m, symbolic horizontal jets of a field, and
their discrete counterparts on a grid.
"""

import numpy as np

from carnot import expr as fx
from carnot.grid import GridDomain, sample
from carnot.group import load_group
from carnot.horizontal import coefficient_matrix, discrete_horizontal_jet, horizontal_jet_from_euclidean

H = load_group("heisenberg:1")

###############################################################################
# Row l of the coefficient matrix holds X_l in the coordinate basis.
# On H^1, X_1 = d1 - x2/2 d3 and X_2 = d2 + x1/2 d3.
print(coefficient_matrix(H, [1.0, 2.0, 3.0]))

###############################################################################
# The vertical coordinate t = x3 has no Euclidean Hessian, but its horizontal
# gradient is (-x2/2, x1/2).
t = fx.parse("x3")
x = np.array([0.7, -1.3, 2.0])
jet = horizontal_jet_from_euclidean(H, x, *fx.Jet(t, 3)(x))
print("grad_h x3 =", jet.gradient, " hess_h x3 =", jet.hessian.tolist())

###############################################################################
# Central differences on a grid converge at second order in the spacing.
f = fx.parse("sin(x1)*exp(0.5*x2) + x1*x3^2")
ref = horizontal_jet_from_euclidean(H, x, *fx.Jet(f, 3)(x))
for h in (0.08, 0.04, 0.02, 0.01):
    dom = GridDomain.box([(c - 2 * h, c + 2 * h) for c in x], 5)
    d = discrete_horizontal_jet(H, sample(f, H, dom), (2, 2, 2))
    err = max(np.abs(d.gradient - ref.gradient).max(), np.abs(d.hessian - ref.hessian).max())
    print(f"h = {h:.2f}: jet error {err:.2e}")
