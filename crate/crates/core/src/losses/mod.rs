//! Triplet-loss family, triplet enumeration and hard-negative mining.

mod batch;
mod functions;
mod triplets;

pub use batch::{batch_distance_matrix, batch_loss, batch_loss_value, joint_loss, pair_distance};
pub use functions::{soft_margin_loss, triplet_loss, weighted_soft_margin_loss};
pub use triplets::{enumerate_exhaustive_triplets, mine_hard_negatives, Direction, Triplet, TripletBatch};

use serde::{Deserialize, Serialize};

use crate::diffcore::DistanceMode;
use crate::error::{param_err, Result};

/// Which member of the triplet family a batch is reduced with.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// `max(0, m + dp − dn)`
    Margin,
    /// `ln(1 + e^{dp − dn})`
    SoftMargin,
    /// `ln(1 + e^{α(dp − dn)})`
    #[default]
    WeightedSoftMargin,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub kind: LossKind,
    pub margin: f64,
    pub alpha: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub distance: DistanceMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: LossKind::WeightedSoftMargin,
            margin: 0.0,
            alpha: 10.0,
            lambda1: 10.0,
            lambda2: 1.0,
            distance: DistanceMode::Euclidean,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(param_err!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.margin >= 0.0) {
            return Err(param_err!("margin must be non-negative, got {}", self.margin));
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) || !(self.lambda1 + self.lambda2 > 0.0) {
            return Err(param_err!(
                "lambdas must be non-negative with positive sum, got {} and {}",
                self.lambda1,
                self.lambda2
            ));
        }
        Ok(())
    }
}
