"""Likelihood-free state inference in state-space models with unknown dynamics.

Public API
----------
Models and data:
    MODEL_REGISTRY, get_model, generate_ground_truth, summarize, discrepancy
Surrogates:
    gp_fit, gp_predict, lmc_fit, lmc_predict, WindowedDiscrepancySet
Transition models:
    build_training_pairs, bnn_train, bnn_predict_samples, blr_fit,
    blr_predict_samples, save_transition_model, load_transition_model
Posterior machinery:
    select_threshold, synthetic_likelihood, extract_posterior,
    jensen_lower_bound_check
Acquisition:
    lcbsc_beta, lcbsc_next, transition_proposals
Run orchestration:
    RunConfig, run_lmc_method, run_bolfi_baseline, run_method
Reference methods:
    rejection_abc, kde_map_estimate
Benchmarking:
    BenchConfig, parse_bench_config, run_benchmark, moving_window_sweep,
    evaluate_state_rmse, evaluate_trajectory_rmse
"""
from .acquisition import AcquisitionBatch, lcbsc_beta, lcbsc_next, transition_proposals
from .bench import (
    BenchConfig,
    ResultsTable,
    evaluate_state_rmse,
    evaluate_trajectory_rmse,
    moving_window_sweep,
    parse_bench_config,
    run_benchmark,
)
from .engine import (
    PosteriorStore,
    RunConfig,
    RunResult,
    SimulationStore,
    recompute_discrepancies,
    run_bolfi_baseline,
    run_lmc_method,
    run_method,
)
from .gp import GPPrediction, KernelHyperparams, TrainedGP, gp_fit, gp_predict
from .lmc import LMCConfig, LMCModel, WindowedDiscrepancySet, lmc_fit, lmc_predict
from .models import (
    MODEL_REGISTRY,
    GroundTruthRun,
    ObservationSet,
    ParameterVector,
    SummaryStats,
    discrepancy,
    generate_ground_truth,
    get_model,
    sample_prior,
    simulate_observation,
    step_dynamics,
    summarize,
)
from .oracle import ABCResult, kde_map_estimate, rejection_abc
from .posterior import (
    PosteriorSampleSet,
    Threshold,
    extract_posterior,
    jensen_lower_bound_check,
    resample,
    select_threshold,
    synthetic_likelihood,
)
from .transitions import (
    BLRModel,
    BNNConfig,
    BNNModel,
    TrainingPairs,
    blr_fit,
    blr_predict_samples,
    bnn_predict_samples,
    bnn_train,
    build_training_pairs,
    load_transition_model,
    save_transition_model,
)

__version__ = "0.1.0"
