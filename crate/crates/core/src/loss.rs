//! Condition-number loss, Sharpe-ratio guarantees and regrets.
//!
//! The worst configuration for a rule at top spike `ℓ` places extra spikes
//! wherever `ν₊` is largest and `ν₋` smallest over `[1, ℓ]`. Both extremes
//! are searched on a dense spike grid refined at every branch point of the
//! rule, so sweeps are plain grid scans.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{bulk_edges, spike_detection_threshold, AspectRatio, SpikeConfig};
use crate::error::{Error, Result};
use crate::pivot::{asymptotic_kappa, block_unchecked};
use crate::shrinkers::{nu_minus_minimax, single_threshold, Shrinker, ShrinkerSpec};

/// Optimal single-spike loss `κ₁*(ℓ₁;γ)`.
pub fn kappa_star(ell1: f64, gamma: AspectRatio) -> Result<f64> {
    if !ell1.is_finite() || ell1 < 1.0 {
        return Err(Error::domain(format!("kappa_star needs ell1 >= 1, got {ell1}")));
    }
    Ok(kappa_star_unchecked(ell1, gamma))
}

pub(crate) fn kappa_star_unchecked(ell1: f64, gamma: AspectRatio) -> f64 {
    if ell1 <= single_threshold(gamma) {
        // δ* = ((1−1/ℓ)/(1+1/ℓ))² reduces to κ(Σ) = ℓ
        return ell1;
    }
    let g = gamma.value();
    let m = ell1 - 1.0;
    let delta = g * (m * m - g) / (m * ((1.0 + g) * m + 2.0 * g));
    let r = delta.sqrt();
    (1.0 + r) / (1.0 - r)
}

/// `κ₁*(∞;γ)`, the supremum of the optimal loss over all spikes.
pub fn kappa_star_limit(gamma: AspectRatio) -> f64 {
    let g = gamma.value();
    let r = (g / (g + 1.0)).sqrt();
    (1.0 + r) / (1.0 - r)
}

/// Relative Sharpe-ratio guarantee `½√(κ + 1/κ + 2)`.
pub fn rsrg_from_kappa(kappa: f64) -> Result<f64> {
    if kappa.is_nan() || kappa < 1.0 {
        return Err(Error::domain(format!("condition number must be >= 1, got {kappa}")));
    }
    if kappa.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let s = kappa.sqrt();
    Ok((s + 1.0 / s) / 2.0)
}

/// Inverse of [`rsrg_from_kappa`]: `κ = (r + √(r²−1))²`.
pub fn kappa_from_rsrg(rsrg: f64) -> Result<f64> {
    if rsrg.is_nan() || rsrg < 1.0 {
        return Err(Error::domain(format!("RSRG must be >= 1, got {rsrg}")));
    }
    if rsrg.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let root = rsrg + (rsrg * rsrg - 1.0).sqrt();
    Ok(root * root)
}

/// Percentage regret `100·(1 − optimum/achieved)`, clamped at 0.
pub fn regret_pct(optimum: f64, achieved: f64) -> f64 {
    if achieved.is_infinite() {
        return 100.0;
    }
    (100.0 * (1.0 - optimum / achieved)).max(0.0)
}

/// Condition number of `Z'Z/n` for white Gaussian `Z`: the limit under the raw
/// sample covariance, whatever the spikes.
pub fn raw_kappa_limit(gamma: AspectRatio) -> f64 {
    if gamma.value() >= 1.0 {
        return f64::INFINITY;
    }
    let (lo, hi) = bulk_edges(gamma);
    hi / lo
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub kappa: f64,
    pub rsrg: f64,
    pub kappa_star: f64,
    pub regret_kappa_pct: f64,
    pub regret_rsrg_pct: f64,
}

impl LossReport {
    fn new(kappa: f64, kappa_star: f64) -> Result<Self> {
        let rsrg = rsrg_from_kappa(kappa)?;
        let rsrg_star = rsrg_from_kappa(kappa_star)?;
        Ok(LossReport {
            kappa,
            rsrg,
            kappa_star,
            regret_kappa_pct: regret_pct(kappa_star, kappa),
            regret_rsrg_pct: regret_pct(rsrg_star, rsrg),
        })
    }
}

/// Shrunk values of `spec` at every spike of `config`; multi-spike rules
/// without tuning are tuned at the top spike.
pub fn etas_for_config(config: &SpikeConfig, spec: ShrinkerSpec) -> Result<Vec<f64>> {
    let s = Shrinker::for_top_spike(spec, config.top(), config.gamma())?;
    config.spikes().iter().map(|&ell| s.eta_at_spike(ell)).collect()
}

/// Asymptotic loss of `spec` at `config` against the optimum `κ₁*(ℓ₁)`.
pub fn loss_report(config: &SpikeConfig, spec: ShrinkerSpec) -> Result<LossReport> {
    let gamma = config.gamma();
    let kappa = match spec {
        ShrinkerSpec::Raw => raw_kappa_limit(gamma),
        _ => asymptotic_kappa(config, &etas_for_config(config, spec)?)?,
    };
    LossReport::new(kappa, kappa_star_unchecked(config.top(), gamma))
}

/// Worst configuration found below a given top spike.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub kappa: f64,
    pub ell_top: f64,
    /// Spike where `ν₊` peaks (the top spike if nothing beats it).
    pub argmax_ell: f64,
    pub nu_plus_max: f64,
    /// Spike where `ν₋` bottoms out.
    pub argmin_ell: f64,
    pub nu_minus_min: f64,
}

#[derive(Debug, Clone, Copy)]
enum Density {
    /// Step 1e-3 up to 100, then 4000 points per decade.
    Fine,
    /// Step 0.05 up to 100, then 200 points per decade.
    Coarse,
}

/// Spikes where a rule's blocks may change branch.
fn branch_points(shrinker: &Shrinker, gamma: AspectRatio) -> Vec<f64> {
    let edge = spike_detection_threshold(gamma);
    let mut pts = vec![
        1.0,
        edge,
        edge - 1e-6,
        edge + 1e-6,
        single_threshold(gamma),
        1.0 / nu_minus_minimax(gamma),
    ];
    if let Some(dz) = shrinker.dead_zone() {
        pts.push(dz.ell_threshold);
        pts.push(dz.ell_threshold * (1.0 + 1e-9));
    }
    pts
}

fn inner_grid(top: f64, density: Density, extra: &[f64]) -> Vec<f64> {
    let (per_unit, per_decade) = match density {
        Density::Fine => (1000u32, 4000.0),
        Density::Coarse => (20u32, 200.0),
    };
    let lin_end = top.min(100.0);
    let mut pts = Vec::new();
    let mut k = 0u32;
    loop {
        // exact ratios so that grid points coincide with 1.00, 1.01, ...
        let x = (per_unit + k) as f64 / per_unit as f64;
        if x > lin_end {
            break;
        }
        pts.push(x);
        k += 1;
    }
    if top > 100.0 {
        let decades = (top / 100.0).log10();
        let steps = (decades * per_decade).ceil() as usize;
        for i in 1..=steps {
            pts.push((100.0 * 10f64.powf(i as f64 / per_decade)).min(top));
        }
    }
    pts.extend(extra.iter().copied().filter(|&x| x >= 1.0 && x <= top));
    pts.push(top);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

fn scan(shrinker: &Shrinker, grid: &[f64], gamma: AspectRatio) -> Result<Vec<(f64, f64)>> {
    grid.iter()
        .map(|&ell| {
            let b = block_unchecked(ell, shrinker.eta_at_spike(ell)?, gamma)?;
            Ok((b.nu_plus, b.nu_minus))
        })
        .collect()
}

fn worst_over(
    shrinker: &Shrinker,
    top: f64,
    gamma: AspectRatio,
    density: Density,
) -> Result<WorstCase> {
    let grid = inner_grid(top, density, &branch_points(shrinker, gamma));
    let nus = scan(shrinker, &grid, gamma)?;
    let mut w = WorstCase {
        kappa: 1.0,
        ell_top: top,
        argmax_ell: top,
        nu_plus_max: 1.0,
        argmin_ell: top,
        nu_minus_min: 1.0,
    };
    let (mut top_plus, mut top_minus) = (1.0, 1.0);
    for (&ell, &(hi, lo)) in grid.iter().zip(&nus) {
        if ell == top {
            (top_plus, top_minus) = (hi, lo);
        }
        if hi > w.nu_plus_max {
            w.nu_plus_max = hi;
            w.argmax_ell = ell;
        }
        if lo < w.nu_minus_min {
            w.nu_minus_min = lo;
            w.argmin_ell = ell;
        }
    }
    // ties resolve to the top spike itself
    if top_plus >= w.nu_plus_max {
        w.argmax_ell = top;
    }
    if top_minus <= w.nu_minus_min {
        w.argmin_ell = top;
    }
    w.kappa = if w.nu_minus_min <= 0.0 {
        f64::INFINITY
    } else {
        w.nu_plus_max / w.nu_minus_min
    };
    Ok(w)
}

/// Largest asymptotic loss of `spec` over configurations whose top spike is
/// `ell_top`. Untuned multi-spike rules are tuned at `ell_top`.
pub fn worst_config_kappa(spec: ShrinkerSpec, ell_top: f64, gamma: AspectRatio) -> Result<WorstCase> {
    if !ell_top.is_finite() || ell_top < 1.0 {
        return Err(Error::domain(format!("top spike must be >= 1, got {ell_top}")));
    }
    if spec == ShrinkerSpec::Raw {
        return Ok(raw_worst(ell_top, gamma));
    }
    let shrinker = Shrinker::for_top_spike(spec, ell_top, gamma)?;
    worst_over(&shrinker, ell_top, gamma, Density::Fine)
}

fn raw_worst(top: f64, gamma: AspectRatio) -> WorstCase {
    let (lo, hi) = bulk_edges(gamma);
    WorstCase {
        kappa: raw_kappa_limit(gamma),
        ell_top: top,
        argmax_ell: top,
        nu_plus_max: hi,
        argmin_ell: top,
        nu_minus_min: lo,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSweepRow {
    pub gamma: f64,
    pub shrinker: ShrinkerSpec,
    pub max_regret_kappa_pct: f64,
    pub max_regret_rsrg_pct: f64,
    /// Top spike in the spike grid where the κ regret peaks.
    pub argmax_ell: f64,
}

/// `{1, 1.01, …, 100} ∪ {10⁵}`; the last point stands in for `ℓ = ∞`.
pub fn default_ell_grid() -> Vec<f64> {
    let mut g: Vec<f64> = (0..=9900u32).map(|k| (100 + k) as f64 / 100.0).collect();
    g.push(1e5);
    g
}

/// `{0.01, 0.03, …, 1.99} ∪ {2}`.
pub fn default_gamma_grid() -> Vec<f64> {
    let mut g: Vec<f64> = (0..100u32).map(|k| (1 + 2 * k) as f64 / 100.0).collect();
    g.push(2.0);
    g
}

/// Worst-case loss at each top spike of `ells` (ascending) for a rule that
/// does not depend on the top spike, via one scan and prefix extremes.
fn worst_profile(shrinker: &Shrinker, ells: &[f64], gamma: AspectRatio) -> Result<Vec<f64>> {
    let top = *ells.last().expect("non-empty grid");
    let mut extra = branch_points(shrinker, gamma);
    extra.extend_from_slice(ells);
    let grid = inner_grid(top, Density::Fine, &extra);
    let nus = scan(shrinker, &grid, gamma)?;
    let mut out = Vec::with_capacity(ells.len());
    let (mut hi, mut lo) = (1.0f64, 1.0f64);
    let mut j = 0;
    for &ell in ells {
        while j < grid.len() && grid[j] <= ell {
            hi = hi.max(nus[j].0);
            lo = lo.min(nus[j].1);
            j += 1;
        }
        out.push(if lo <= 0.0 { f64::INFINITY } else { hi / lo });
    }
    Ok(out)
}

/// Worst-case loss of `spec` at each top spike of `ells` (finite, `>= 1`,
/// strictly increasing). Untuned multi-spike rules are tuned at each top spike.
pub fn worst_case_profile(spec: ShrinkerSpec, gamma: AspectRatio, ells: &[f64]) -> Result<Vec<f64>> {
    if ells.is_empty() {
        return Err(Error::domain("empty spike grid"));
    }
    if ells.windows(2).any(|w| w[0] >= w[1]) || ells[0] < 1.0 || !ells[ells.len() - 1].is_finite() {
        return Err(Error::domain("spike grid must be finite, >= 1 and strictly increasing"));
    }
    match spec {
        ShrinkerSpec::Raw => Ok(vec![raw_kappa_limit(gamma); ells.len()]),
        ShrinkerSpec::MultiSpikeOptimal { lambda1: None } => ells
            .iter()
            .map(|&ell| {
                let s = Shrinker::tuned_at_spike(ell, gamma)?;
                Ok(worst_over(&s, ell, gamma, Density::Coarse)?.kappa)
            })
            .collect(),
        other => worst_profile(&Shrinker::new(other, gamma)?, ells, gamma),
    }
}

/// Maximal regret of `spec` over the top-spike grid `ells`.
pub fn max_regret_on(spec: ShrinkerSpec, gamma: AspectRatio, ells: &[f64]) -> Result<RegretSweepRow> {
    let worst = worst_case_profile(spec, gamma, ells)?;
    let mut row = RegretSweepRow {
        gamma: gamma.value(),
        shrinker: spec,
        max_regret_kappa_pct: 0.0,
        max_regret_rsrg_pct: 0.0,
        argmax_ell: ells[0],
    };
    for (&ell, &k) in ells.iter().zip(&worst) {
        let opt = kappa_star_unchecked(ell, gamma);
        let rk = regret_pct(opt, k);
        let rr = regret_pct(rsrg_from_kappa(opt)?, rsrg_from_kappa(k.max(1.0))?);
        if rk > row.max_regret_kappa_pct {
            row.max_regret_kappa_pct = rk;
            row.argmax_ell = ell;
        }
        row.max_regret_rsrg_pct = row.max_regret_rsrg_pct.max(rr);
    }
    Ok(row)
}

/// Maximal regret of `spec` over the default spike grid.
pub fn max_regret(spec: ShrinkerSpec, gamma: AspectRatio) -> Result<RegretSweepRow> {
    max_regret_on(spec, gamma, &default_ell_grid())
}

/// Cross product of rules and aspect ratios, ordered by rule (as given) then γ.
pub fn regret_sweep(specs: &[ShrinkerSpec], gammas: &[f64]) -> Result<Vec<RegretSweepRow>> {
    if specs.is_empty() || gammas.is_empty() {
        return Err(Error::Usage("regret sweep needs at least one shrinker and one gamma".into()));
    }
    let gammas: Vec<AspectRatio> = gammas.iter().map(|&g| AspectRatio::new(g)).collect::<Result<_>>()?;
    let ells = default_ell_grid();
    let cells: Vec<(usize, AspectRatio)> = (0..specs.len())
        .flat_map(|i| gammas.iter().map(move |&g| (i, g)))
        .collect();
    let mut rows: Vec<(usize, RegretSweepRow)> = cells
        .par_iter()
        .map(|&(i, g)| Ok((i, max_regret_on(specs[i], g, &ells)?)))
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.gamma.total_cmp(&b.1.gamma)));
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}
