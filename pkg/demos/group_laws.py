"""
Group laws in exponential coordinates
=====================================

Products on the built-in Carnot groups, their inverses and dilations, and
the gauge distance that is invariant under left translation.
"""

import numpy as np

from carnot.group import check_group_laws, dilate, distance, inverse, load_group, multiply

###############################################################################
# On the first Heisenberg group two horizontal unit vectors do not commute:
# the product picks up half of their bracket in the third coordinate.
H = load_group("heisenberg:1")
e1, e2 = np.array([1.0, 0, 0]), np.array([0, 1.0, 0])
print("e1 . e2 =", multiply(H, e1, e2))
print("e2 . e1 =", multiply(H, e2, e1))
print("(e1 . e2)^-1 =", inverse(H, multiply(H, e1, e2)))

###############################################################################
# Dilations scale layer i by lambda^i, and the gauge distance is
# 1-homogeneous for them.
p, q = np.array([0.3, -0.2, 0.5]), np.array([-0.1, 0.4, 0.2])
for lam in (0.5, 2.0, 10.0):
    ratio = distance(H, dilate(H, lam, p), dilate(H, lam, q)) / distance(H, p, q)
    print(f"lambda = {lam:5.1f}: d(lam p, lam q) / d(p, q) = {ratio:.12f}")

###############################################################################
# The invariant suite samples random triples on every built-in group.
for name in ("euclidean:2", "heisenberg:1", "heisenberg:2", "engel"):
    rep = check_group_laws(load_group(name), samples=1000, seed=0)
    worst = max(rep["max_relative_error"].values())
    print(f"{name:13s} all passed: {rep['all_passed']}  worst relative error {worst:.1e}")
