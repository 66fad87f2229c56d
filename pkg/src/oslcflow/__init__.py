"""Transport equations with one-sided Lipschitz coefficients.

Generalized flows by mollification, reversible and duality solutions,
and the diagnostics that characterize them.
"""

from .fields import (CoefficientField, FieldError, Interface, OslcReport, PairSampler,
                     constant_field, estimate_oslc, evaluate, field_from_json, grid_field,
                     jump_direction_check, linear_field, mollify, oscillatory_field,
                     piecewise_field, rotation_field, sgn_field, tangential_jump_field,
                     translation_bound, zero_field)
from .flow import (ConvergenceFailure, FlowMap, ResolutionError, SupportError,
                   build_transport_flow, check_semigroup, flow_diagnostics,
                   integrate_regularized_flow, trace_back)
from .grid import ScalarField, SpaceTimeGrid
from .harness import (ConvergenceReport, ScenarioConfig, emit_report, nonuniqueness_demo,
                      run_scenario, stability_experiment)
from .jacobian import (divergence_free_lift, jacobian_det, jacobian_solution,
                       weak_jacobian_limit_check)
from .oracles import (SgnExampleSpec, linear_field_oracle, sgn_exceptional_set, sgn_flow,
                      sgn_general_conservative, sgn_general_nonconservative, sgn_jacobian)
from .transport import (PairingTrace, WeakResidualReport, bv_trace, duality_pairing, l1_trace,
                        solve_backward_reversible, solve_forward_duality, weak_product,
                        weak_residual)

__all__ = [
    "CoefficientField", "FieldError", "Interface", "OslcReport", "PairSampler",
    "constant_field", "estimate_oslc", "evaluate", "field_from_json", "grid_field",
    "jump_direction_check", "linear_field", "mollify", "oscillatory_field", "piecewise_field",
    "rotation_field", "sgn_field", "tangential_jump_field", "translation_bound", "zero_field",
    "ConvergenceFailure", "FlowMap", "ResolutionError", "SupportError", "build_transport_flow",
    "check_semigroup", "flow_diagnostics", "integrate_regularized_flow", "trace_back",
    "ScalarField", "SpaceTimeGrid", "ConvergenceReport", "ScenarioConfig", "emit_report",
    "nonuniqueness_demo", "run_scenario", "stability_experiment", "divergence_free_lift",
    "jacobian_det", "jacobian_solution", "weak_jacobian_limit_check", "SgnExampleSpec",
    "linear_field_oracle", "sgn_exceptional_set", "sgn_flow", "sgn_general_conservative",
    "sgn_general_nonconservative", "sgn_jacobian", "PairingTrace", "WeakResidualReport",
    "bv_trace", "duality_pairing", "l1_trace", "solve_backward_reversible",
    "solve_forward_duality", "weak_product", "weak_residual",
]

__version__ = "0.1.0"
