"""
Sup- and inf-convolution
========================

Regularizing a field with the gauge kernel, checking the closed form on a
parabola and watching the kink of |x| being smoothed out.
"""

import numpy as np

from carnot.grid import GridDomain, sample
from carnot.group import load_group
from carnot.transforms import convergence_report, convolve, semiconvexity_certificate

G = load_group("euclidean:1")
dom = GridDomain.box([(-1, 1)], 401)
x = dom.points[:, 0]

###############################################################################
# For u = -x^2/2 the sup-convolution is again a parabola, -x^2 / (2 (1 + eps)).
res = convolve(G, sample("-0.5*x1^2", G, dom), 1.0)
print("max error against the closed form:", np.abs(res.field.flat + x ** 2 / 4).max())

###############################################################################
# The convolution of |x| sits above |x| by at most eps/2 and is semiconvex
# with constant K / (2 eps).
u = sample("abs(x1)", G, dom)
rep = convergence_report(G, u, [0.2, 0.1, 0.05, 0.025])
for row in rep["rows"]:
    print(f"eps = {row['epsilon']:.3f}: sup gap {row['sup_gap']:.4f}  monotone {row['monotone_vs_previous']}")

sup = convolve(G, u, 0.05)
cert = semiconvexity_certificate(sup.field, sup.semiconvexity_constant, 1e-8)
print("semiconvexity certificate:", cert.passed, "with C =", cert.constant)

###############################################################################
# On the Heisenberg group the same construction uses the gauge kernel.
H = load_group("heisenberg:1")
hdom = GridDomain.box([(-1, 1)] * 3, 9)
w = sample("abs(x3) - x1*x2", H, hdom)
hs = convolve(H, w, 0.1)
print("H^1 kernel constant:", hs.kernel_constant, " sup >= u:", bool(np.all(hs.field.flat >= w.flat)))
