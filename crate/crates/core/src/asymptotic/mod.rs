//! Potential kernel and closed-form asymptotic predictors.

pub mod potkern;
pub mod predict;

pub use potkern::{fit_kernel_constants, potential_kernel, KernelFit, PotentialKernelTable};
pub use predict::{evaluate, predict, FormulaId, PredictParams, PredictorReport, ToleranceConfig};
