"""
Structure conditions of an operator
===================================

Sampling monotonicity, properness and the modulus of continuity, and
turning up a counterexample when an operator has the wrong sign.
"""

from carnot.operators import check_structure, expression_operator, pucci_minus

###############################################################################
# A catalog operator declares its constants and passes every check.
rep = check_structure(pucci_minus(1, 2, 1), m=2, samples=200, seed=0)
for name, check in rep.checks.items():
    print(f"{name:24s} {check.status:10s} constant={check.constant}")
print("case i:", rep.case_i, " case ii:", rep.case_ii)

###############################################################################
# Flipping the sign of the trace breaks degenerate ellipticity; the report
# carries a concrete (r, p, M, N) tuple.
bad = check_structure(expression_operator("-(M11 + M22) - r", 2), m=2, samples=200, seed=0)
failing = {k: c for k, c in bad.checks.items() if c.status == "FAIL"}
for name, check in failing.items():
    print(name, check.counterexample)
