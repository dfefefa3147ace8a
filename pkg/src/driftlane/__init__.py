"""Drift-diffusion modeling of lane-change decisions behind heavy vehicles.

Pipeline: extract HV-car following episodes from trajectory data, cluster
them to isolate lane-change intention, compute first-passage-time
probabilities of the evidence process, and calibrate the model by censored
maximum likelihood, with Monte-Carlo simulation for validation and
synthetic-data generation.
"""

from .trajectories import (
    CAR, CENSORED, HEAVY_VEHICLE, LC_LEFT, LC_RIGHT,
    InputError, NeighborSnapshot, PairStep, TrajectoryPair, TrajectorySample,
    VehicleTrack, compute_environment, extract_pairs, find_pairs,
    initial_headway, parse_trajectories, read_pairs, write_pairs,
)
from .clustering import (
    ClusterResult, FeatureWeights, PairFeatures, feature_position,
    kmeans_1d_2, optimize_weights, pair_features, select_intention_cluster,
)
from .ddm import (
    REFERENCE_PARAMS, DdmParams, EnvStep, FirstPassageResult,
    decision_probability_series, drift_integral, drift_rate, first_passage,
    first_passage_mu, initial_evidence, kernel, transition_density,
)
from .estimation import (
    FitOptions, FitResult, fit, pair_log_likelihood, standard_errors,
    total_log_likelihood,
)
from .simulation import (
    PassageSample, ScenarioConfig, SimConfig, generate_synthetic_pairs,
    simulate_paths,
)

__version__ = "0.1.0"
