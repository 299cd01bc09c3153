pub mod autodiff;
pub mod data;
pub mod error;
pub mod judges;
pub mod learners;
pub mod les;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod optim;
pub mod pipeline;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
