//! Deterministic maps of the spiked covariance model.
//!
//! With `p/n → γ`, noise eigenvalues of the sample covariance fill the
//! Marčenko–Pastur bulk `[(1−√γ)², (1+√γ)²]`. A population spike `ℓ`
//! above `1+√γ` produces an empirical eigenvalue displaced to `λ(ℓ;γ)`
//! outside the bulk, and its empirical eigenvector keeps squared cosine
//! `c²(ℓ;γ)` with the population one. Below `1+√γ` the spike is invisible:
//! the eigenvalue sticks to the bulk edge and the cosine vanishes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Limiting aspect ratio `γ = lim p/n`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct AspectRatio(f64);

impl AspectRatio {
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma.is_finite() && gamma > 0.0 {
            Ok(AspectRatio(gamma))
        } else {
            Err(Error::domain(format!(
                "aspect ratio must be positive and finite, got {gamma}"
            )))
        }
    }

    /// `γ = p/n` for a finite sample.
    pub fn from_dims(p: usize, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("sample size n must be positive"));
        }
        Self::new(p as f64 / n as f64)
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn sqrt(self) -> f64 {
        self.0.sqrt()
    }
}

impl TryFrom<f64> for AspectRatio {
    type Error = Error;

    fn try_from(gamma: f64) -> Result<Self> {
        AspectRatio::new(gamma)
    }
}

impl From<AspectRatio> for f64 {
    fn from(g: AspectRatio) -> f64 {
        g.0
    }
}

/// Marčenko–Pastur bulk edges `((1−√γ)², (1+√γ)²)`.
pub fn bulk_edges(gamma: AspectRatio) -> (f64, f64) {
    let r = gamma.sqrt();
    ((1.0 - r).powi(2), (1.0 + r).powi(2))
}

/// Upper bulk edge `λ₊(γ)`.
#[inline]
pub fn bulk_edge(gamma: AspectRatio) -> f64 {
    (1.0 + gamma.sqrt()).powi(2)
}

/// `ℓ₊(γ) = 1+√γ`: spikes at or below this value do not separate from the bulk.
#[inline]
pub fn spike_detection_threshold(gamma: AspectRatio) -> f64 {
    1.0 + gamma.sqrt()
}

fn check_spike(ell: f64) -> Result<()> {
    if ell.is_finite() && ell >= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("spike value must be finite and >= 1, got {ell}")))
    }
}

/// Eigenvalue displacement `λ(ℓ;γ)`.
///
/// Equals `ℓ(1 + γ/(ℓ−1))` above the detection threshold and the bulk edge
/// `λ₊(γ)` at or below it.
pub fn eigen_map(ell: f64, gamma: AspectRatio) -> Result<f64> {
    check_spike(ell)?;
    Ok(eigen_map_unchecked(ell, gamma))
}

#[inline]
pub(crate) fn eigen_map_unchecked(ell: f64, gamma: AspectRatio) -> f64 {
    if ell > spike_detection_threshold(gamma) {
        ell * (1.0 + gamma.value() / (ell - 1.0))
    } else {
        bulk_edge(gamma)
    }
}

/// Inverse displacement `ℓ(λ;γ)`, defined strictly above the bulk edge.
pub fn eigen_inverse(lambda: f64, gamma: AspectRatio) -> Result<f64> {
    let edge = bulk_edge(gamma);
    if !lambda.is_finite() || lambda <= edge {
        return Err(Error::domain(format!(
            "eigen_inverse needs lambda > bulk edge {edge}, got {lambda}"
        )));
    }
    let g = gamma.value();
    let lower = (1.0 - gamma.sqrt()).powi(2);
    // (λ+1−γ)² − 4λ factors as (λ−λ₊)(λ−λ₋); the product form avoids cancellation.
    let mut disc = (lambda - edge) * (lambda - lower);
    if disc < 0.0 {
        if disc > -1e-12 {
            disc = 0.0;
        } else {
            return Err(Error::internal(format!("negative discriminant {disc} in eigen_inverse")));
        }
    }
    Ok((lambda + 1.0 - g + disc.sqrt()) / 2.0)
}

/// Squared cosine `c²(ℓ;γ)` between population and empirical spike eigenvectors.
pub fn cosine2(ell: f64, gamma: AspectRatio) -> Result<f64> {
    check_spike(ell)?;
    Ok(cosine2_unchecked(ell, gamma))
}

#[inline]
pub(crate) fn cosine2_unchecked(ell: f64, gamma: AspectRatio) -> f64 {
    if ell > spike_detection_threshold(gamma) {
        let x = ell - 1.0;
        let g = gamma.value();
        ((1.0 - g / (x * x)) / (1.0 + g / x)).max(0.0)
    } else {
        0.0
    }
}

/// Squared sine, the complement `1 − c²`.
pub fn sine2(ell: f64, gamma: AspectRatio) -> Result<f64> {
    Ok(1.0 - cosine2(ell, gamma)?)
}

/// A spike together with its limiting empirical eigenvalue and eigenvector angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub ell: f64,
    pub lambda: f64,
    pub c2: f64,
    pub s2: f64,
}

impl EigenPair {
    pub fn new(ell: f64, gamma: AspectRatio) -> Result<Self> {
        check_spike(ell)?;
        Ok(Self::new_unchecked(ell, gamma))
    }

    pub(crate) fn new_unchecked(ell: f64, gamma: AspectRatio) -> Self {
        let c2 = cosine2_unchecked(ell, gamma);
        EigenPair {
            ell,
            lambda: eigen_map_unchecked(ell, gamma),
            c2,
            s2: 1.0 - c2,
        }
    }
}

/// Population spike configuration `ℓ₁ > … > ℓ_r > 1` at aspect ratio γ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeConfig {
    gamma: AspectRatio,
    spikes: Vec<f64>,
}

impl SpikeConfig {
    pub fn new(gamma: AspectRatio, spikes: Vec<f64>) -> Result<Self> {
        if spikes.is_empty() {
            return Err(Error::domain("spike configuration needs at least one spike"));
        }
        for &ell in &spikes {
            if !ell.is_finite() || ell <= 1.0 {
                return Err(Error::domain(format!("spikes must be finite and > 1, got {ell}")));
            }
        }
        if spikes.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::domain("spikes must be strictly decreasing"));
        }
        Ok(SpikeConfig { gamma, spikes })
    }

    pub fn single(gamma: AspectRatio, ell: f64) -> Result<Self> {
        Self::new(gamma, vec![ell])
    }

    pub fn gamma(&self) -> AspectRatio {
        self.gamma
    }

    pub fn spikes(&self) -> &[f64] {
        &self.spikes
    }

    pub fn top(&self) -> f64 {
        self.spikes[0]
    }

    pub fn rank(&self) -> usize {
        self.spikes.len()
    }

    pub fn eigen_pairs(&self) -> Vec<EigenPair> {
        self.spikes
            .iter()
            .map(|&ell| EigenPair::new_unchecked(ell, self.gamma))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn g(x: f64) -> AspectRatio {
        AspectRatio::new(x).unwrap()
    }

    #[test]
    fn rejects_bad_gamma() {
        assert!(AspectRatio::new(0.0).is_err());
        assert!(AspectRatio::new(-1.0).is_err());
        assert!(AspectRatio::new(f64::NAN).is_err());
        assert!(AspectRatio::new(f64::INFINITY).is_err());
    }

    #[test]
    fn bulk_edge_values() {
        assert_relative_eq!(bulk_edges(g(50.0)).1, 65.142135623, epsilon = 1e-6);
        assert!((bulk_edges(g(11.9)).1 - 19.8).abs() < 0.01);
        assert_eq!(bulk_edges(g(1.0)), (0.0, 4.0));
    }

    #[test]
    fn detection_threshold() {
        assert_eq!(spike_detection_threshold(g(1.0)), 2.0);
        assert_eq!(spike_detection_threshold(g(4.0)), 3.0);
        let t = spike_detection_threshold(g(0.5));
        assert_relative_eq!(t, 1.70711, epsilon = 1e-5);
        // both branches of the displacement meet at the threshold
        let above = eigen_map(t + 1e-9, g(0.5)).unwrap();
        assert_relative_eq!(above, bulk_edge(g(0.5)), epsilon = 1e-8);
    }

    #[test]
    fn eigen_map_examples() {
        assert_eq!(eigen_map(5.0, g(1.0)).unwrap(), 6.25);
        assert_eq!(eigen_map(1.5, g(1.0)).unwrap(), 4.0);
        assert_eq!(eigen_map(2.0, g(1.0)).unwrap(), 4.0);
        let l = eigen_map(52.9258, g(50.0)).unwrap();
        assert!((l - 103.887).abs() < 0.01, "{l}");
        assert!(eigen_map(0.99, g(1.0)).is_err());
    }

    #[test]
    fn eigen_inverse_examples() {
        assert_relative_eq!(eigen_inverse(6.25, g(1.0)).unwrap(), 5.0, max_relative = 1e-14);
        assert!((eigen_inverse(103.887, g(50.0)).unwrap() - 52.926).abs() < 0.01);
        assert!(eigen_inverse(4.0, g(1.0)).is_err());
        assert!(eigen_inverse(3.0, g(1.0)).is_err());
    }

    #[test]
    fn cosine_examples() {
        assert_relative_eq!(cosine2(5.0, g(1.0)).unwrap(), 0.75, epsilon = 1e-15);
        assert_relative_eq!(sine2(5.0, g(1.0)).unwrap(), 0.25, epsilon = 1e-15);
        assert_eq!(cosine2(2.0, g(1.0)).unwrap(), 0.0);
        assert!(cosine2(0.5, g(1.0)).is_err());
        for gamma in [0.1, 1.0, 7.0] {
            let ell = 1e8;
            let c2 = cosine2(ell, g(gamma)).unwrap();
            let s2 = sine2(ell, g(gamma)).unwrap();
            assert!((1.0 - c2) < 1e-6);
            assert_relative_eq!(ell * s2, gamma, max_relative = 1e-6);
        }
    }

    #[test]
    fn spike_config_validation() {
        assert!(SpikeConfig::new(g(1.0), vec![]).is_err());
        assert!(SpikeConfig::new(g(1.0), vec![3.0, 3.0]).is_err());
        assert!(SpikeConfig::new(g(1.0), vec![2.0, 3.0]).is_err());
        assert!(SpikeConfig::new(g(1.0), vec![3.0, 1.0]).is_err());
        let c = SpikeConfig::new(g(1.0), vec![5.0, 3.0]).unwrap();
        assert_eq!(c.top(), 5.0);
        assert_eq!(c.eigen_pairs()[0].lambda, 6.25);
    }

    proptest! {
        #[test]
        fn roundtrip(log_g in -2.0f64..2.0, t in -4.0f64..6.0) {
            let gamma = g(10f64.powf(log_g));
            let edge = spike_detection_threshold(gamma);
            // ℓ stays a relative 1e-4 above the edge, where dλ/dℓ vanishes
            let ell = (edge * (1.0 + 10f64.powf(t))).min(1e6);
            prop_assume!(ell > edge);
            let back = eigen_inverse(eigen_map(ell, gamma).unwrap(), gamma).unwrap();
            prop_assert!(((back - ell) / ell).abs() < 1e-10, "ell={ell} back={back}");
        }

        #[test]
        fn displacement_is_upward_and_monotone(log_g in -2.0f64..2.0, a in 1.0f64..1e4, b in 1.0f64..1e4) {
            let gamma = g(10f64.powf(log_g));
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let l_lo = eigen_map(lo, gamma).unwrap();
            let l_hi = eigen_map(hi, gamma).unwrap();
            prop_assert!(l_lo <= l_hi);
            prop_assert!(l_lo >= lo.max(bulk_edge(gamma)) * (1.0 - 1e-15));
            let edge = spike_detection_threshold(gamma);
            if lo > edge && hi > lo * (1.0 + 1e-9) {
                prop_assert!(l_lo < l_hi);
            }
        }

        #[test]
        fn cosine_sine_partition(log_g in -2.0f64..2.0, ell in 1.0f64..1e5) {
            let p = EigenPair::new(ell, g(10f64.powf(log_g))).unwrap();
            prop_assert_eq!(p.c2 + p.s2, 1.0);
            prop_assert!((0.0..1.0).contains(&p.c2));
        }
    }
}
