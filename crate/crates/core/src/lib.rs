pub mod assignment;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod kernels;
pub mod landscapes;
pub mod layouts;
pub mod linalg;
pub mod periodic;
pub mod sampler;

pub use error::{PtgError, Result};
