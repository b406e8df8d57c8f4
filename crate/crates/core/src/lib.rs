//! Classification RBMs over sets of vectors.
//!
//! The crate covers the single-vector ClassRBM, its set extensions with XOR
//! and OR hidden constraints (soft and hard-max pooling), the multiple-instance
//! baselines they are compared against, and a cross-validation harness.

pub mod error;
pub mod numerics;
pub mod data;
pub mod params;
pub mod class_rbm;
pub mod set_rbm;
pub mod model;
pub mod trainer;
pub mod parallel;
pub mod baselines;
pub mod registry;
pub mod persist;
pub mod evaluator;
pub mod checks;

pub use error::{Error, Result};
pub use data::{Bag, Dataset};
pub use model::{BagClassifier, ModelVariant, RbmModel, SgdModel};
pub use numerics::RngStream;
pub use params::RbmParams;
pub use set_rbm::{Family, Pooling, SetVariant};
pub use registry::{HyperGrid, ModelSpec, Predictor, TrainedModel};
pub use trainer::{Objective, TrainConfig, TrainHistory};
