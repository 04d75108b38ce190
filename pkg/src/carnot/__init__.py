"""Comparison principles for fully nonlinear subelliptic equations on Carnot groups, numerically.

Modules
-------
group        exact group law, dilations and gauge distance in exponential coordinates
horizontal   horizontal frames, jets and finite-difference jets
expr         expression parser, evaluator and symbolic derivatives
grid         box grids and sampled fields
transforms   sup/inf-convolutions, domain shrinking, semiconvexity certificates
operators    F(r, p, M), structure checks, strict supersolution perturbation
comparison   the comparison pipeline and its report
cli          the ``carnot`` command
"""
from .comparison import ComparisonReport, blow_up, classify_classical, jensen_witness, run_comparison
from .errors import (BoundaryError, CarnotError, DomainError, ExprError, ExprSyntaxError, InputError,
                     NonsmoothError, SpecError, UnknownIdentifierError)
from .expr import Jet, differentiate, evaluate, parse, to_string
from .grid import GridDomain, GridField, sample
from .group import (CarnotGroup, builtin_group, check_group_laws, dilate, distance, engel, euclidean,
                    gauge_norm, heisenberg, inverse, load_group, multiply)
from .horizontal import (HorizontalJet, coefficient_matrix, discrete_horizontal_jet, frozen_coefficient_hessian,
                         horizontal_jet_from_euclidean)
from .operators import (NonlinearOperator, check_structure, evaluate_operator, expression_operator,
                        infinity_sublaplacian, operator_from_config, perturb_supersolution, pucci_minus,
                        trace_minus_u)
from .transforms import convergence_report, convolve, kernel_constant, semiconvexity_certificate, shrink_domain

__version__ = "0.1.0"
