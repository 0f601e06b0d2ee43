//! Bayesian active reinforcement learning with transition queries.
//!
//! This crate holds the numerical core: a multi-output Gaussian-process model
//! of state deltas, pathwise posterior function samples, an iCEM planner,
//! the expected-information-gain acquisition functions and the ground-truth
//! control environments. It is `no_std` and only needs `alloc`; IO,
//! threading and the experiment harness live in the `barl` crate.

#![no_std]

extern crate alloc;

pub mod acquisition;
pub mod envs;
pub mod error;
pub mod exec;
pub mod gp;
pub mod linalg;
pub mod noise;
pub mod paths;
pub mod planner;
pub mod seed;

pub use acquisition::{
    choose_query, eig_t, eig_tau_star, sample_optimal_trajectories, AcqScore, EigTauStar,
    Trajectory,
};
pub use envs::{EnvKind, EnvSpec};
pub use error::{AcqError, EnvError, GpError, PlanError};
pub use exec::{Executor, Sequential};
pub use gp::{
    fit_hyperparams, kernel_eval, predictive_entropy, Dataset, DimParams, FitOptions, GpModel,
    KernelParams, Prediction, TrainingSet, Transition,
};
pub use noise::colored_noise;
pub use paths::{sample_path, sample_path_with_features, sample_paths_shared_basis, PosteriorPath};
pub use planner::{icem_plan, MpcController, Plan, PlanSpec};
pub use seed::{derive_seed, rng_from_seed, Rng64};
