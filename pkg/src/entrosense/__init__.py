"""Entropy-driven sensor silencing for dense, spatially correlated sensor fields."""
from .corrmodel import CorrelationModel, build_correlation, kernel_value, psd_project
from .entropy import (
    EntropyReport,
    QuantizationSpec,
    choose_delta,
    differential_entropy,
    quantized_entropy_lb,
    relative_entropy_loss,
    selected_entropy_lb,
    univariate_quantized_entropy,
)
from .errors import DomainError, EntrosenseError, FieldFormatError, NotPSDError, ParameterError
from .scenario import SensorField, distance_matrix, generate_field, load_field, perturb_distances, save_field
from .selector import (
    ConstraintSpec,
    RelaxedSolution,
    SelectionProblem,
    SelectionResult,
    SolverConfig,
    exhaustive_select,
    make_constraint,
    objective_gradient,
    objective_lb,
    optimize_selection,
    prepare_problem,
    random_selection,
    round_selection,
    solve_relaxed,
    threshold_select_max_power,
)
from .speclinalg import SpectralData, eig_sym, logdet_gram, pivoted_cholesky, pseudo_log_det

__version__ = "0.1.0"
