//! Three-stage speaker verification in emotional speech: gender
//! identification, gender-dependent emotion identification with
//! suprasegmental HMMs, and emotion-dependent speaker verification.
//!
//! The numerical modules are generic over [`Scalar`] (`f32`/`f64`); the
//! aliases below fix `f64`, which is what the cascade and the on-disk
//! registry use.

pub mod cascade;
pub mod corpus;
pub mod eval;
pub mod features;
pub mod hmm;
pub mod rng;
pub mod sphmm;
mod scalar;

pub use scalar::{log_add, log_sum_exp, Scalar};

pub type ObservationSequence = features::ObservationSequence<f64>;
pub type ProsodicSequence = features::ProsodicSequence<f64>;
pub type HmmModel = hmm::Hmm<f64>;
pub type Mixture = hmm::GaussianMixture<f64>;
pub type SupraModel = sphmm::SuprasegmentalModel<f64>;
pub type Registry = cascade::ModelRegistry<f64>;
