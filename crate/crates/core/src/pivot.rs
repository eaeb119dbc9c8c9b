//! Two-by-two blocks of the asymptotic pivot.
//!
//! In the basis spanned by each population spike direction and its
//! empirical counterpart, `Σ^{-1/2} Σ̂(η) Σ^{-1/2}` converges to a block
//! diagonal matrix with blocks
//!
//! ```text
//! A(ℓ,η) = [ (ηc²+s²)/ℓ        (η−1)cs/√ℓ ]
//!          [ (η−1)cs/√ℓ        c²+ηs²     ]
//! ```
//!
//! and an identity block for the bulk. Everything here works from the
//! trace `T` and determinant `D = η/ℓ` of each block.

use serde::{Deserialize, Serialize};

use crate::asymptotics::{cosine2_unchecked, AspectRatio, SpikeConfig};
use crate::error::{Error, Result};

/// Summary of `A(ℓ,η;γ)` by trace, determinant and extreme eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PivotBlock {
    pub ell: f64,
    pub eta: f64,
    pub trace: f64,
    pub det: f64,
    pub nu_minus: f64,
    pub nu_plus: f64,
}

impl PivotBlock {
    /// Condition number of this block alone, ignoring the identity part.
    pub fn kappa(&self) -> f64 {
        if self.nu_minus <= 0.0 {
            f64::INFINITY
        } else {
            self.nu_plus / self.nu_minus
        }
    }
}

/// Coefficients `a = c²/ℓ + s²` and `b = s²/ℓ + c²` of the multi-spike shrinker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ABCoeffs {
    pub a: f64,
    pub b: f64,
}

fn check_args(ell: f64, eta: f64) -> Result<()> {
    if !ell.is_finite() || ell < 1.0 {
        return Err(Error::domain(format!("block needs ell >= 1, got {ell}")));
    }
    if !eta.is_finite() || eta < 0.0 {
        return Err(Error::domain(format!("block needs eta >= 0, got {eta}")));
    }
    Ok(())
}

/// Builds `A(ℓ,η;γ)` and its eigenvalues `ν± = T/2 ± √(T²/4 − D)`.
pub fn block(ell: f64, eta: f64, gamma: AspectRatio) -> Result<PivotBlock> {
    check_args(ell, eta)?;
    block_unchecked(ell, eta, gamma)
}

pub(crate) fn block_unchecked(ell: f64, eta: f64, gamma: AspectRatio) -> Result<PivotBlock> {
    let c2 = cosine2_unchecked(ell, gamma);
    let s2 = 1.0 - c2;
    let eta_dot = eta - 1.0;
    let trace = (1.0 + eta_dot * c2) / ell + 1.0 + eta_dot * s2;
    let det = eta / ell;
    let half = trace / 2.0;
    let mut disc = half * half - det;
    if disc < 0.0 {
        if disc >= -1e-12 * half.abs().max(1.0).powi(2) {
            disc = 0.0;
        } else {
            return Err(Error::internal(format!(
                "complex pivot eigenvalues for ell={ell}, eta={eta}: discriminant {disc}"
            )));
        }
    }
    let nu_plus = half + disc.sqrt();
    // ν₋ through the determinant: no cancellation when ν₋ ≪ ν₊.
    let nu_minus = if nu_plus > 0.0 { det / nu_plus } else { 0.0 };
    Ok(PivotBlock {
        ell,
        eta,
        trace,
        det,
        nu_minus,
        nu_plus,
    })
}

pub fn ab_coeffs(ell: f64, gamma: AspectRatio) -> Result<ABCoeffs> {
    if !ell.is_finite() || ell < 1.0 {
        return Err(Error::domain(format!("ab_coeffs needs ell >= 1, got {ell}")));
    }
    Ok(ab_coeffs_unchecked(ell, gamma))
}

#[inline]
pub(crate) fn ab_coeffs_unchecked(ell: f64, gamma: AspectRatio) -> ABCoeffs {
    let c2 = cosine2_unchecked(ell, gamma);
    let s2 = 1.0 - c2;
    ABCoeffs {
        a: c2 / ell + s2,
        b: s2 / ell + c2,
    }
}

/// `max(1, maxᵢ ν₊) / min(1, minᵢ ν₋)` over a set of blocks plus the identity block.
pub fn kappa_of_blocks<'a>(blocks: impl IntoIterator<Item = &'a PivotBlock>) -> f64 {
    let (mut hi, mut lo) = (1.0f64, 1.0f64);
    for b in blocks {
        hi = hi.max(b.nu_plus);
        lo = lo.min(b.nu_minus);
    }
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Condition number of the asymptotic pivot for shrunk values `etas` at the
/// spikes of `config`.
///
/// A shrunk value of exactly zero makes the estimator singular and yields
/// `+∞`; negative values are a domain error.
pub fn asymptotic_kappa(config: &SpikeConfig, etas: &[f64]) -> Result<f64> {
    if etas.len() != config.rank() {
        return Err(Error::domain(format!(
            "expected {} shrunk values, got {}",
            config.rank(),
            etas.len()
        )));
    }
    let gamma = config.gamma();
    let mut blocks = Vec::with_capacity(etas.len());
    for (&ell, &eta) in config.spikes().iter().zip(etas) {
        if eta == 0.0 {
            return Ok(f64::INFINITY);
        }
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::domain(format!("shrunk values must be positive, got {eta}")));
        }
        blocks.push(block_unchecked(ell, eta, gamma)?);
    }
    Ok(kappa_of_blocks(&blocks))
}
