//! Discrete potential theory for symmetric planar random walks on Z² and
//! their projections to the lattice torus Z²_K.

pub mod asymptotic;
pub mod error;
pub mod harnack;
pub mod kernel;
pub mod lattice;
pub mod mc;
pub mod report;
pub mod stepdist;

pub use error::{Error, Result};
pub use lattice::{Geometry, Point, Region};
pub use stepdist::{build_distribution, DistributionSpec, StepDistribution};
