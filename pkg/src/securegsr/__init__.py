"""Adversary detection and blind recovery of smooth graph signals."""

from .detector import (
    DetectionResult,
    DetectorParams,
    DetectorTerms,
    analysis_terms,
    calibrate,
    calibrate_eta,
    calibrate_threshold,
    detect,
    detection_metrics,
    error_probabilities,
    statistic,
)
from .graph import Graph, closed_neighborhood, erdos_renyi, is_connected, laplacian
from .harness import ExperimentConfig, MetricsTable, load_config, msd_db, run_experiment, run_trial
from .numerics import gaussian_pdf, gaussian_q, minimize_scalar, minres, sym_eig
from .recovery import (
    FractionalProblem,
    RecoveryConfig,
    assemble,
    build_problem,
    dinkelbach_solve,
    oracle_fractional_min,
    ratio,
    recover,
)
from .signals import GftBasis, gft, igft, lowpass_project, median_filter, smoothness, synth_bandlimited
from .threat import noise_sigma_for_snr, observe, sample_attack

__version__ = "0.1.0"
