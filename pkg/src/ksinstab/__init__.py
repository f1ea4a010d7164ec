"""Linear instability of homogeneous states in chemotaxis models coupled to
mass-action reaction networks."""

from .matrices import (ClassDecomposition, DirectedGraph, block_triangularize, digraph,
                       has_path, is_irreducible, is_metzler, is_nonsingular_m_matrix,
                       perron_root, row_sum_bounds, strongly_connected_components)
from .network import (Interval, ModelSpec, ModelValidationError, Reaction, ReactionNetwork,
                      Rectangle, Species, eval_jacobian, eval_kinetics, validate_model)
from .parser import ParseError, format_crn, load_model, parse_crn, parse_model
from .spectral import (ConditionReport, ModeMatrix, NeumannSpectrum, StabilityReport,
                       Threshold, build_M, check_suff1, check_suff2, critical_alpha,
                       critical_chi, trimolecular_determinant, mode_spectrum,
                       neumann_eigenvalues, routh_hurwitz_cubic, stability_verdict)
from .steady import (LinearPart, SteadyState, SteadyStateError, extract_linear,
                     find_steady_state, linear_steady_state, newton_steady_state)

__version__ = "0.1.0"
