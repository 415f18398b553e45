"""Multi-object trajectory smoothing.

Forward Poisson multi-Bernoulli filtering over object sets, backward
simulation of trajectory sets through the smoothing kernel, an exact
enumeration oracle for desk-scale problems, and GOSPA evaluation.
"""

from .assignment import Assignment, murty, solve_lap
from .backward import (
    BackwardKernel,
    ContinuedSmoothed,
    EndedAtK,
    FirstDetected,
    LocalHypothesis,
    Particle,
    SmootherParams,
    Unaltered,
    backward_simulate,
    best_particle,
    build_backward_kernel,
    sample_bernoulli,
    sample_global,
    split_y,
)
from .errors import (
    ConfigError,
    ContractError,
    InfeasibleAssignmentError,
    SingularMatrixError,
    SizeCapError,
    TrajsmoothError,
)
from .forward import (
    BernoulliComponent,
    FilterLog,
    FilterParams,
    PMBDensity,
    predict_pmb,
    prune_pmb,
    run_forward,
    update_pmb,
)
from .gaussians import (
    GaussianDensity,
    GaussianMixture,
    LinearMotionModel,
    log_gaussian_pdf,
    make_cv_model,
    moment_match,
    predict_gaussian,
    sample_gaussian,
    smd,
    smooth_head,
)
from .metrics import (
    GospaResult,
    ParticleStats,
    extract_estimates,
    gospa,
    gospa_over_time,
    particle_stats,
    track_switch_count,
)
from .models import BirthModel, ClutterModel, MeasurementModel, make_position_measurement
from .oracle import (
    ExactPosterior,
    TrajectorySetHypothesis,
    exact_smooth,
    structure_probability,
    structure_signature,
)
from .simulate import (
    GroundTruth,
    Scenario,
    ScenarioConfig,
    generate_measurements,
    generate_truth,
    load_scenario_config,
    simulate_scenario,
)
from .trajectory import Trajectory, states_at_time

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
