//! Signature-kernel approximate Bayesian computation for time-series
//! simulators.
//!
//! The numerical core (streams, signature kernels, discrepancies,
//! summaries, evaluation metrics) is generic over [`Real`]; simulators, the
//! ABC engine and the MCMC samplers work in `f64`. The aliases below fix the
//! generic types to `f64`.

pub mod abc;
pub mod codec;
pub mod discrepancy;
pub mod error;
pub mod evaluate;
pub mod linalg;
pub mod mcmc;
pub mod models;
pub mod scalar;
pub mod sigkernel;
pub mod streams;
pub mod summaries;
pub mod transport;

pub use error::{Error, Result};
pub use scalar::{Field, Real};

pub type TimeSeries = streams::TimeSeries<f64>;
pub type TransformPipeline = streams::TransformPipeline<f64>;
pub type Transform = streams::Transform<f64>;
pub type StaticKernel = sigkernel::StaticKernel<f64>;
pub type SigKernelConfig = sigkernel::SigKernelConfig<f64>;
pub type DiscrepancyFn = discrepancy::DiscrepancyFn<f64>;
pub type KrrSummaryModel = summaries::KrrSummaryModel<f64>;
pub type LinearSummaryModel = summaries::LinearSummaryModel<f64>;
pub type TrainingSet = summaries::TrainingSet<f64>;
pub type SampleSet = evaluate::SampleSet<f64>;
