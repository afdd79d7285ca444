//! Simulation and analysis of the (mu+1)-EA on dynamic binary value functions.

pub mod analytic;
pub mod bitpop;
pub mod drift;
pub mod dynbv;
pub mod ea;
pub mod error;
pub mod oracle;

pub use bitpop::{BitString, Population};
pub use dynbv::{GenerationFitness, GenerationRanking, WeightDistribution};
pub use ea::{EaParams, FitnessMode, Simulator};
pub use error::{Error, Result};

/// Exact rational used by closed-form probabilities.
pub type Rational = num_rational::Ratio<i128>;
