"""
Making a supersolution strict
=============================

Adding delta * alpha_k(x1) to a supersolution keeps it within delta of the
original and pushes the residual below a positive margin.
"""

import numpy as np

from carnot import expr as fx
from carnot.grid import GridDomain, sample
from carnot.group import load_group
from carnot.operators import alpha_expr, classical_residual, infinity_sublaplacian, perturb_supersolution

H = load_group("heisenberg:1")
F = infinity_sublaplacian()

###############################################################################
# x1*x2 solves <Mp,p> - r <= 0 where x1*x2 <= 0, so work on such a box.
dom = GridDomain.box([(0, 1), (-1, 0), (0, 1)], 21)
v = sample("x1*x2", H, dom)
res = perturb_supersolution(H, v, 0.1, F)
print(f"case {res.case}, k = {res.k}, margin c_delta = {res.c_delta:.3e}")
print("v <= v_delta <= v + delta:", bool(np.all(v.flat <= res.v_delta.flat) and np.all(res.v_delta.flat <= v.flat + 0.1)))

###############################################################################
# The classical residual of the perturbed field stays below -c_delta.
vd = fx.add(fx.parse("x1*x2"), fx.mul(fx.Num(0.1), alpha_expr(res.k, res.c1)))
r = classical_residual(H, F, vd, dom.points)
print(f"max residual {r.max():.3e} <= -c_delta = {-res.c_delta:.3e}")
