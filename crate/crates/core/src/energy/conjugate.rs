use super::tabulated::convex_slopes;
use crate::error::Result;

/// `max_i p z_i − s_i` over a sampled convex function.
///
/// The samples are checked for convexity first; a violation reports the
/// index of the offending second difference.
pub fn legendre_numeric(z: &[f64], s: &[f64], p: f64) -> Result<f64> {
    convex_slopes(z, s)?;
    Ok(z.iter().zip(s).map(|(&zi, &si)| p * zi - si).fold(f64::NEG_INFINITY, f64::max))
}
