//! Scalar shrinkage nonlinearities `λ ↦ η`.
//!
//! Every rule is offered on the observable (empirical-eigenvalue) scale.
//! Internally each is evaluated on the spike scale `ℓ = ℓ(λ;γ)`, which is
//! also what the asymptotic loss computations use directly.
//!
//! | text       | rule                                              |
//! |------------|---------------------------------------------------|
//! | `single`   | optimal single-spike shrinker η₁*                 |
//! | `multi`    | optimal multi-spike shrinker η_m*(·; λ₁)          |
//! | `minimax`  | tuning-free minimax shrinker η_MM = η_m*(·; ∞)    |
//! | `mmst`     | soft threshold at the bulk edge, slope 1/(1+γ)    |
//! | `pnl`      | Frobenius-optimal shrinker for the precision matrix |
//! | `identity` | everything to 1                                   |
//! | `raw`      | the sample eigenvalues themselves                 |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::asymptotics::{
    bulk_edge, cosine2_unchecked, eigen_inverse, eigen_map_unchecked, spike_detection_threshold,
    AspectRatio,
};
use crate::error::{Error, Result};
use crate::pivot::{ab_coeffs_unchecked, block_unchecked};

/// Choice of nonlinearity, with tuning where the rule needs it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ShrinkerSpec {
    SingleSpikeOptimal,
    /// `lambda1` is the top limiting empirical eigenvalue. When absent,
    /// [`apply`] tunes with the observed top eigenvalue.
    MultiSpikeOptimal { lambda1: Option<f64> },
    Minimax,
    Mmst,
    Precision,
    Identity,
    Raw,
}

impl ShrinkerSpec {
    /// The four rules compared in the worst-case regret figures.
    pub const FIGURE_RULES: [ShrinkerSpec; 4] = [
        ShrinkerSpec::SingleSpikeOptimal,
        ShrinkerSpec::Minimax,
        ShrinkerSpec::Mmst,
        ShrinkerSpec::Precision,
    ];

    pub fn multi() -> Self {
        ShrinkerSpec::MultiSpikeOptimal { lambda1: None }
    }

    /// Whether the rule maps `[0, λ₊(γ)]` to exactly 1.
    pub fn collapses_bulk(&self) -> bool {
        !matches!(self, ShrinkerSpec::Raw)
    }
}

impl fmt::Display for ShrinkerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShrinkerSpec::SingleSpikeOptimal => f.write_str("single"),
            ShrinkerSpec::MultiSpikeOptimal { lambda1: None } => f.write_str("multi"),
            ShrinkerSpec::MultiSpikeOptimal { lambda1: Some(l) } => write!(f, "multi:{l}"),
            ShrinkerSpec::Minimax => f.write_str("minimax"),
            ShrinkerSpec::Mmst => f.write_str("mmst"),
            ShrinkerSpec::Precision => f.write_str("pnl"),
            ShrinkerSpec::Identity => f.write_str("identity"),
            ShrinkerSpec::Raw => f.write_str("raw"),
        }
    }
}

impl FromStr for ShrinkerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let spec = match s {
            "single" => ShrinkerSpec::SingleSpikeOptimal,
            "multi" => ShrinkerSpec::multi(),
            "minimax" => ShrinkerSpec::Minimax,
            "mmst" => ShrinkerSpec::Mmst,
            "pnl" => ShrinkerSpec::Precision,
            "identity" => ShrinkerSpec::Identity,
            "raw" => ShrinkerSpec::Raw,
            other => match other.strip_prefix("multi:") {
                Some(v) => {
                    let l: f64 = v.trim().parse().map_err(|_| {
                        Error::Usage(format!("invalid multi tuning value {v:?}"))
                    })?;
                    if !l.is_finite() || l < 0.0 {
                        return Err(Error::Usage(format!("invalid multi tuning value {v:?}")));
                    }
                    ShrinkerSpec::MultiSpikeOptimal { lambda1: Some(l) }
                }
                None => return Err(Error::Usage(format!("unknown shrinker {other:?}"))),
            },
        };
        Ok(spec)
    }
}

impl TryFrom<String> for ShrinkerSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ShrinkerSpec> for String {
    fn from(s: ShrinkerSpec) -> String {
        s.to_string()
    }
}

/// End of a shrinker's dead zone on both scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeadZone {
    pub ell_threshold: f64,
    pub lambda_threshold: f64,
}

impl DeadZone {
    fn at_spike(ell: f64, gamma: AspectRatio) -> Self {
        DeadZone {
            ell_threshold: ell,
            lambda_threshold: eigen_map_unchecked(ell, gamma),
        }
    }
}

/// `ℓ₁⁺(γ) = 1 + (γ + √(γ²+8γ))/2`.
pub(crate) fn single_threshold(gamma: AspectRatio) -> f64 {
    let g = gamma.value();
    1.0 + (g + (g * g + 8.0 * g).sqrt()) / 2.0
}

/// Dead zone `(ℓ₁⁺, λ₁⁺)` of the single-spike optimal shrinker.
pub fn dead_zone_single(gamma: AspectRatio) -> DeadZone {
    DeadZone::at_spike(single_threshold(gamma), gamma)
}

/// `ν₋^MM(γ) = 1 − √(γ/(γ+1))`.
pub fn nu_minus_minimax(gamma: AspectRatio) -> f64 {
    let g = gamma.value();
    1.0 - (g / (g + 1.0)).sqrt()
}

/// Dead zone `ℓ ≤ 1/ν₋^MM` of the minimax shrinker.
pub fn dead_zone_minimax(gamma: AspectRatio) -> DeadZone {
    DeadZone::at_spike(1.0 / nu_minus_minimax(gamma), gamma)
}

/// Dead zone `ℓ ≤ 1/ν₋^{1,*}` of the multi-spike shrinker tuned at `lambda1`.
pub fn dead_zone_multi(lambda1: f64, gamma: AspectRatio) -> Result<DeadZone> {
    if lambda1 <= bulk_edge(gamma) {
        // nothing emerges: the whole admissible range is dead
        return Ok(DeadZone {
            ell_threshold: spike_detection_threshold(gamma),
            lambda_threshold: bulk_edge(gamma),
        });
    }
    let ell1 = eigen_inverse(lambda1, gamma)?;
    Ok(DeadZone::at_spike(1.0 / nu_minus_star_unchecked(ell1, gamma)?, gamma))
}

/// Spike-scale upper branch of η₁*.
#[inline]
pub(crate) fn eta_single_at_spike(ell: f64, gamma: AspectRatio) -> f64 {
    if ell > single_threshold(gamma) {
        let g = gamma.value();
        ell / (1.0 + g + 2.0 * g / (ell - 1.0))
    } else {
        1.0
    }
}

/// Optimal single-spike shrinker η₁*(λ;γ).
pub fn eta_single(lambda: f64, gamma: AspectRatio) -> Result<f64> {
    check_lambda(lambda)?;
    if lambda <= dead_zone_single(gamma).lambda_threshold {
        return Ok(1.0);
    }
    Ok(eta_single_at_spike(eigen_inverse(lambda, gamma)?, gamma))
}

/// `ν₋^{1,*}`: smallest eigenvalue of the top block under η₁*.
pub fn nu_minus_star(ell1: f64, gamma: AspectRatio) -> Result<f64> {
    if !ell1.is_finite() || ell1 < 1.0 {
        return Err(Error::domain(format!("nu_minus_star needs ell1 >= 1, got {ell1}")));
    }
    nu_minus_star_unchecked(ell1, gamma)
}

pub(crate) fn nu_minus_star_unchecked(ell1: f64, gamma: AspectRatio) -> Result<f64> {
    Ok(block_unchecked(ell1, eta_single_at_spike(ell1, gamma), gamma)?.nu_minus)
}

/// The family `η(ℓ; v) = (v − b)/(a − 1/(ℓv))` above `ℓ = 1/v`, else 1.
///
/// `v = ν₋^{1,*}` gives η_m*, `v = ν₋^MM` gives η_MM.
pub(crate) fn eta_tuned_at_spike(ell: f64, v: f64, gamma: AspectRatio) -> Result<f64> {
    if ell <= 1.0 / v {
        return Ok(1.0);
    }
    let ab = ab_coeffs_unchecked(ell, gamma);
    let denom = ab.a - 1.0 / (ell * v);
    if denom.abs() <= 1e-14 {
        return Err(Error::internal(format!(
            "vanishing denominator in tuned shrinker at ell={ell}, v={v}"
        )));
    }
    Ok((v - ab.b) / denom)
}

/// Optimal multi-spike shrinker η_m*(λ; λ₁, γ).
pub fn eta_multi(lambda: f64, lambda1: f64, gamma: AspectRatio) -> Result<f64> {
    check_lambda(lambda)?;
    check_lambda(lambda1)?;
    if lambda > lambda1 {
        return Err(Error::domain(format!(
            "eta_multi needs lambda <= tuning lambda1 ({lambda} > {lambda1})"
        )));
    }
    let edge = bulk_edge(gamma);
    if lambda <= edge || lambda1 <= edge {
        return Ok(1.0);
    }
    let ell1 = eigen_inverse(lambda1, gamma)?;
    let ell = eigen_inverse(lambda, gamma)?.min(ell1);
    eta_tuned_at_spike(ell, nu_minus_star_unchecked(ell1, gamma)?, gamma)
}

/// Minimax shrinker η_MM(λ;γ).
pub fn eta_minimax(lambda: f64, gamma: AspectRatio) -> Result<f64> {
    check_lambda(lambda)?;
    if lambda <= bulk_edge(gamma) {
        return Ok(1.0);
    }
    eta_tuned_at_spike(eigen_inverse(lambda, gamma)?, nu_minus_minimax(gamma), gamma)
}

/// Soft thresholding at the bulk edge with slope `1/(1+γ)`.
pub fn eta_mmst(lambda: f64, gamma: AspectRatio) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(1.0 + (lambda - bulk_edge(gamma)).max(0.0) / (1.0 + gamma.value()))
}

#[inline]
pub(crate) fn eta_pnl_at_spike(ell: f64, gamma: AspectRatio) -> f64 {
    if ell > spike_detection_threshold(gamma) {
        let c2 = cosine2_unchecked(ell, gamma);
        ell / (ell * (1.0 - c2) + c2)
    } else {
        1.0
    }
}

/// Precision-matrix shrinker `ℓ/(ℓs² + c²)` above the bulk edge.
pub fn eta_pnl(lambda: f64, gamma: AspectRatio) -> Result<f64> {
    check_lambda(lambda)?;
    if lambda <= bulk_edge(gamma) {
        return Ok(1.0);
    }
    Ok(eta_pnl_at_spike(eigen_inverse(lambda, gamma)?, gamma))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("eigenvalue must be finite and >= 0, got {lambda}")))
    }
}

/// A shrinker with its aspect ratio and tuning resolved.
#[derive(Debug, Clone, Copy)]
pub struct Shrinker {
    spec: ShrinkerSpec,
    gamma: AspectRatio,
    rule: Rule,
}

#[derive(Debug, Clone, Copy)]
enum Rule {
    Single,
    /// Tuned family with parameter `v`; `max_ell` bounds admissible spikes.
    Tuned { v: f64, max_ell: f64 },
    /// Multi-spike rule whose tuning eigenvalue has not left the bulk.
    AllOnes,
    Mmst,
    Precision,
    Identity,
    Raw,
}

impl Shrinker {
    /// Resolves `spec` at `gamma`. Multi-spike rules need an explicit tuning
    /// value here; see [`Shrinker::tuned_at_spike`] for spike-scale tuning.
    pub fn new(spec: ShrinkerSpec, gamma: AspectRatio) -> Result<Self> {
        let rule = match spec {
            ShrinkerSpec::SingleSpikeOptimal => Rule::Single,
            ShrinkerSpec::MultiSpikeOptimal { lambda1: None } => {
                return Err(Error::domain("multi-spike shrinker needs a tuning eigenvalue"))
            }
            ShrinkerSpec::MultiSpikeOptimal { lambda1: Some(l1) } => {
                check_lambda(l1)?;
                if l1 <= bulk_edge(gamma) {
                    Rule::AllOnes
                } else {
                    let ell1 = eigen_inverse(l1, gamma)?;
                    Rule::Tuned {
                        v: nu_minus_star_unchecked(ell1, gamma)?,
                        max_ell: ell1,
                    }
                }
            }
            ShrinkerSpec::Minimax => Rule::Tuned {
                v: nu_minus_minimax(gamma),
                max_ell: f64::INFINITY,
            },
            ShrinkerSpec::Mmst => Rule::Mmst,
            ShrinkerSpec::Precision => Rule::Precision,
            ShrinkerSpec::Identity => Rule::Identity,
            ShrinkerSpec::Raw => Rule::Raw,
        };
        Ok(Shrinker { spec, gamma, rule })
    }

    /// Multi-spike shrinker tuned at the top spike `ell1` (oracle tuning).
    pub fn tuned_at_spike(ell1: f64, gamma: AspectRatio) -> Result<Self> {
        if !ell1.is_finite() || ell1 < 1.0 {
            return Err(Error::domain(format!("tuning spike must be >= 1, got {ell1}")));
        }
        let lambda1 = eigen_map_unchecked(ell1, gamma);
        let rule = if ell1 <= spike_detection_threshold(gamma) {
            Rule::AllOnes
        } else {
            Rule::Tuned {
                v: nu_minus_star_unchecked(ell1, gamma)?,
                max_ell: ell1,
            }
        };
        Ok(Shrinker {
            spec: ShrinkerSpec::MultiSpikeOptimal { lambda1: Some(lambda1) },
            gamma,
            rule,
        })
    }

    /// Resolves `spec` for a whole configuration whose top spike is `ell1`:
    /// untuned multi-spike rules are tuned there.
    pub fn for_top_spike(spec: ShrinkerSpec, ell1: f64, gamma: AspectRatio) -> Result<Self> {
        match spec {
            ShrinkerSpec::MultiSpikeOptimal { lambda1: None } => Self::tuned_at_spike(ell1, gamma),
            other => Self::new(other, gamma),
        }
    }

    pub fn spec(&self) -> ShrinkerSpec {
        self.spec
    }

    pub fn gamma(&self) -> AspectRatio {
        self.gamma
    }

    /// Shrunk value for the spike `ell`, i.e. η(λ(ℓ;γ)).
    pub fn eta_at_spike(&self, ell: f64) -> Result<f64> {
        let gamma = self.gamma;
        Ok(match self.rule {
            Rule::Single => eta_single_at_spike(ell, gamma),
            Rule::Tuned { v, max_ell } => {
                if ell > max_ell * (1.0 + 1e-12) {
                    return Err(Error::domain(format!(
                        "spike {ell} exceeds the tuning spike {max_ell}"
                    )));
                }
                eta_tuned_at_spike(ell.min(max_ell), v, gamma)?
            }
            Rule::AllOnes | Rule::Identity => 1.0,
            Rule::Mmst => 1.0 + (eigen_map_unchecked(ell, gamma) - bulk_edge(gamma)) / (1.0 + gamma.value()),
            Rule::Precision => eta_pnl_at_spike(ell, gamma),
            Rule::Raw => eigen_map_unchecked(ell, gamma),
        })
    }

    /// Shrunk value for the empirical eigenvalue `lambda`.
    pub fn eta(&self, lambda: f64) -> Result<f64> {
        check_lambda(lambda)?;
        let gamma = self.gamma;
        match self.rule {
            Rule::Single => eta_single(lambda, gamma),
            Rule::Tuned { max_ell, .. } => {
                if lambda <= bulk_edge(gamma) {
                    return Ok(1.0);
                }
                let ell = eigen_inverse(lambda, gamma)?;
                if ell > max_ell * (1.0 + 1e-12) {
                    return Err(Error::domain(format!(
                        "eigenvalue {lambda} exceeds the tuning eigenvalue"
                    )));
                }
                self.eta_at_spike(ell.min(max_ell))
            }
            Rule::AllOnes | Rule::Identity => Ok(1.0),
            Rule::Mmst => eta_mmst(lambda, gamma),
            Rule::Precision => eta_pnl(lambda, gamma),
            Rule::Raw => Ok(lambda),
        }
    }

    /// End of the dead zone; `None` for rules without one (raw, identity).
    pub fn dead_zone(&self) -> Option<DeadZone> {
        let gamma = self.gamma;
        match self.rule {
            Rule::Single => Some(dead_zone_single(gamma)),
            Rule::Tuned { v, .. } => Some(DeadZone::at_spike(1.0 / v, gamma)),
            Rule::AllOnes => Some(DeadZone::at_spike(spike_detection_threshold(gamma), gamma)),
            Rule::Mmst | Rule::Precision => Some(DeadZone {
                ell_threshold: spike_detection_threshold(gamma),
                lambda_threshold: bulk_edge(gamma),
            }),
            Rule::Identity | Rule::Raw => None,
        }
    }
}

/// Applies `spec` to a descending spectrum.
///
/// An untuned multi-spike rule is tuned with `eigenvalues[0]`.
pub fn apply(spec: ShrinkerSpec, eigenvalues: &[f64], gamma: AspectRatio) -> Result<Vec<f64>> {
    for &l in eigenvalues {
        check_lambda(l)?;
    }
    if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::domain("eigenvalues must be sorted in descending order"));
    }
    let spec = match spec {
        ShrinkerSpec::MultiSpikeOptimal { lambda1: None } => match eigenvalues.first() {
            Some(&top) => ShrinkerSpec::MultiSpikeOptimal { lambda1: Some(top) },
            None => return Ok(Vec::new()),
        },
        other => other,
    };
    if let ShrinkerSpec::MultiSpikeOptimal { lambda1: Some(l1) } = spec {
        if let Some(&top) = eigenvalues.first() {
            if top > l1 {
                return Err(Error::domain(format!(
                    "top eigenvalue {top} exceeds the multi-spike tuning value {l1}"
                )));
            }
        }
    }
    let shrinker = Shrinker::new(spec, gamma)?;
    eigenvalues.iter().map(|&l| shrinker.eta(l)).collect()
}
