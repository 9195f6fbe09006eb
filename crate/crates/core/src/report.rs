//! Provenance-tagged numbers shared by every report type.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// From an exact linear solve or closed-form identity.
    Exact,
    /// Leading term of an asymptotic formula.
    Predicted,
    /// Monte Carlo estimate.
    Mc,
    /// Fitted from data (regression slope, calibrated constant).
    Fitted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tagged {
    pub value: f64,
    pub provenance: Provenance,
}

impl Tagged {
    pub fn new(value: f64, provenance: Provenance) -> Self {
        Tagged { value, provenance }
    }

    pub fn exact(value: f64) -> Self {
        Tagged::new(value, Provenance::Exact)
    }

    pub fn predicted(value: f64) -> Self {
        Tagged::new(value, Provenance::Predicted)
    }

    pub fn mc(value: f64) -> Self {
        Tagged::new(value, Provenance::Mc)
    }

    pub fn fitted(value: f64) -> Self {
        Tagged::new(value, Provenance::Fitted)
    }
}
