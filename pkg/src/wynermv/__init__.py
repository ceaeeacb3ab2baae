"""Wyner common information toolkit for discrete multi-view distributions."""

from .info_measures import (
    CondPmf,
    DistributionError,
    JointPmf,
    NumericalError,
    Pmf,
    compose_joint,
    conditional_entropy,
    conditional_mutual_information,
    encoder_joint,
    entropy,
    kl_divergence,
    latent_joint,
    load_joint,
    mutual_information,
    save_joint,
)
from .model_state import (
    MLOG_CAP,
    MLOG_FLOOR,
    DecoderSet,
    Encoder,
    decoder_set_from_random,
    encoder_from_random,
    load_encoder,
    project_neglog,
    save_encoder,
)
from .synthetic_data import (
    DatasetSpec,
    SampleSet,
    compose_dataset_joint,
    conditional_table,
    draw_samples,
    empirical_joint,
)
from .variational_solver import (
    VariationalConfig,
    VariationalRun,
    block_update,
    parameter_count,
    posterior_encoder,
    solve_variational,
    surrogate_bound,
    variational_lagrangian,
)
from .representation_solvers import (
    AdmmConfig,
    ConvexityConstants,
    admm_step,
    augmented_lagrangian,
    decrease_coefficients,
    estimate_convexity_constants,
    lagrangian_gamma,
    lagrangian_multiview,
    penalty_threshold,
    solve_admm,
    solve_baseline,
    split_objectives,
    sufficient_decrease_check,
    weak_convexity_sigma_entropy,
    weak_convexity_sigma_negentropy,
)
from .evaluation import (
    ClusterReport,
    PlanePoint,
    best_label_accuracy,
    cluster_predict,
    plane_point,
    wyner_line,
)
from .records import RunRecord, load_record, save_record, write_plane_csv

__version__ = "0.1.0"
