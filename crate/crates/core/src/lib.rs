pub mod analyzers;
pub mod conditions;
pub mod config;
pub mod dilation;
pub mod error;
pub mod field;
pub mod fit;
pub mod harness;
mod jet;
pub mod kernels;
pub mod multiindex;
pub mod numdiff;
pub mod operator;
pub mod quadrature;

pub use dilation::DilationMatrix;
pub use error::{QpError, Result};
pub use kernels::Kernel;
pub use multiindex::MultiIndex;
