//! Target functions, grids, norms, band truncation and smoothness measures.

pub mod function;
pub mod grid;
pub mod smoothness;

pub use function::{Profile, TestFunction};
pub use grid::{lp_norm, sample, Cutoff, GridFunction, GridSpec};
pub use smoothness::{best_approx, besov_tail, difference, modulus, ModulusOptions};
