//! 64-bit dense linear algebra: least squares, eigendecomposition and
//! Koopman operator fitting.

mod eig;
pub mod koopman;
mod lstsq;
mod mat;

pub use eig::{eig, Eigen, ILL_CONDITIONED};
pub use lstsq::{lstsq, pinv, svd, Svd};
pub use mat::{CMat, ComplexLu, Mat};
