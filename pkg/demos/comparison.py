"""
Running the comparison pipeline
===============================

A subsolution below a supersolution on the boundary stays below inside;
broken hypotheses are reported rather than silently accepted.
"""

from carnot.comparison import run_comparison
from carnot.grid import GridDomain, sample
from carnot.group import load_group
from carnot.operators import trace_minus_u

G = load_group("euclidean:2")
dom = GridDomain.box([(-1, 1), (-1, 1)], 21)
F = trace_minus_u()
tol = 1e-6 + 4 * dom.spacing.max()


def compare(u, v):
    return run_comparison(G, F, sample(u, G, dom), sample(v, G, dom), 0.1, 0.05, tol, u_expr=u, v_expr=v)


###############################################################################
# A convex bump is a subsolution of trace - r and 0 a supersolution.
rep = compare("-0.5*(1 - x1^2 - x2^2)", "0")
print(rep.verdict, "c+ =", rep.c_plus, "interior excess =", rep.delta0)

###############################################################################
# The concave bump fails the subsolution test at the origin.
rep = compare("0.5*(1 - x1^2 - x2^2)", "0")
print(rep.verdict, rep.violations[0])

###############################################################################
# Without symbolic fields the hypotheses go unchecked; the pipeline runs
# through the doubling and blow-up steps and names the broken link.
u = "0.5*(1 - x1^2 - x2^2)"
rep = run_comparison(G, F, sample(u, G, dom), sample("0", G, dom), 0.1, 0.05, tol)
print(rep.verdict, rep.residuals["links"])
print("JSON keys:", sorted(rep.to_dict()))
