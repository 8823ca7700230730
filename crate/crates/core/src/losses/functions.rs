use crate::diffcore::softplus;
use crate::error::{param_err, Result};
use crate::scalar::Real;

/// Margin triplet loss `max(0, m + dp − dn)`.
pub fn triplet_loss<T: Real>(dp: T, dn: T, margin: T) -> T {
    (margin + dp - dn).max(T::zero())
}

/// Soft-margin triplet loss `ln(1 + e^{dp − dn})`.
pub fn soft_margin_loss<T: Real>(dp: T, dn: T) -> T {
    softplus(dp - dn)
}

/// Weighted soft-margin loss `ln(1 + e^{α(dp − dn)})`.
///
/// Evaluated as `softplus(α·dp − α·dn)`, so that `α = 1` reproduces
/// [`soft_margin_loss`] bit for bit and the result equals
/// `soft_margin_loss(α·dp, α·dn)` exactly.
pub fn weighted_soft_margin_loss<T: Real>(dp: T, dn: T, alpha: T) -> Result<T> {
    if !(alpha > T::zero()) {
        return Err(param_err!("alpha must be positive, got {alpha}"));
    }
    Ok(softplus(alpha * dp - alpha * dn))
}
