//! Experiment harness: sequence generators, experiment orchestration with
//! trace and report emission, lower-bound probes, frozen calibration and
//! the acceptance criteria.

pub mod calibration;
pub mod criteria;
pub mod experiment;
pub mod generate;
pub mod probe;

pub use criteria::{accept, select, CriterionResult, Mutation};
pub use experiment::{
    run_experiment, trace_from_csv, trace_to_csv, BoundCheck, Command, ExperimentOutput, ExperimentSpec, Shape,
};
pub use generate::Generator;
pub use probe::{lower_bound_probe, LowerBoundReport};
