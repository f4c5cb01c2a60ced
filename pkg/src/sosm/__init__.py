"""Survival-geometry toolkit.

Curvature-penalized embeddings of cohorts, survival-similarity kernels,
discrete curve energies, curvature-cost optimal transport, a normalized
coarse-curvature flow on graphs, and executable property experiments over
synthetic cohorts.
"""

__version__ = "0.1.0"

from .core import (Cohort, Embedding, LaplacianMatrix, NeighborGraph,
                   build_knn_graph, graph_laplacian)
from .errors import (ConvergenceError, DegenerateInputError, DivergenceError,
                     NumericalError, ParameterError, ParseError, ReportError,
                     SizeError, SosmError, StepSizeError)
from .geometry import (CurvatureProfile, Polyline, curve_energy,
                       polyline_curvature, second_difference,
                       weighted_curve_energy)
from .kernel import (WeightMatrix, median_pairwise, proxy_weights,
                     survival_weight, weight_matrix)
from .objective import (EmbedResult, OptimizerConfig, SosmObjectiveContext,
                        build_context, embed, fd_gradient, sosm_gradient,
                        sosm_loss, spectral_embedding)
from .ricciflow import (EdgeCurvatures, FlowTrace, all_edge_curvatures,
                        flow_step, ollivier_curvature, run_flow)
from .transport import (TransportPlan, TransportProblem, curvature_cost_matrix,
                        exact_ot_small, ot_sosm_estimate, sinkhorn)
from .verify import (ExperimentReport, SyntheticCohort, cohort_digest,
                     evaluate_pass, flow_convergence_experiment,
                     make_bifurcation_cohort, make_curve_cohort,
                     stability_experiment, survival_gradient_experiment)

__all__ = [name for name in dir() if not name.startswith("_")]
