//! Finite-sample experiments on spiked Gaussian data.
//!
//! Population covariances are `Σ = I + U diag(ℓ−1) Uᵀ` and are never formed
//! densely: every power `Σˢ` acts through the same rank-`r` update. Shrunk
//! estimates likewise keep the form `τI + V diag(η−τ) Vᵀ`, so the pivot
//! condition number only needs an eigensolve on `span[U, V]`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{AspectRatio, SpikeConfig};
use crate::error::{Error, Result};
use crate::linalg::{orthonormal_basis, symmetric_eigen, symmetric_eigenvalues, top_eigenvectors};
use crate::loss::{loss_report, rsrg_from_kappa};
use crate::shrinkers::{apply, ShrinkerSpec};

/// Largest dimension for which dense population matrices are handed out.
pub const DENSE_LIMIT: usize = 512;

/// A spiked population `Σ = I + Σᵢ (ℓᵢ−1) uᵢuᵢᵀ` in dimension `p`.
#[derive(Debug, Clone)]
pub struct SpikedPopulation {
    p: usize,
    config: SpikeConfig,
    u: DMatrix<f64>,
}

impl SpikedPopulation {
    /// Uses the supplied orthonormal `p×r` basis.
    pub fn new(config: SpikeConfig, u: DMatrix<f64>) -> Result<Self> {
        let p = u.nrows();
        if u.ncols() != config.rank() {
            return Err(Error::domain(format!(
                "basis has {} columns for {} spikes",
                u.ncols(),
                config.rank()
            )));
        }
        if p < 2 || p < config.rank() {
            return Err(Error::domain(format!("dimension {p} too small for rank {}", config.rank())));
        }
        let dev = (u.transpose() * &u - DMatrix::identity(u.ncols(), u.ncols())).amax();
        if dev > 1e-10 {
            return Err(Error::domain(format!("spike basis is not orthonormal (deviation {dev:e})")));
        }
        Ok(SpikedPopulation { p, config, u })
    }

    /// Spike directions from the QR factor of a Gaussian `p×r` matrix.
    pub fn random(p: usize, config: SpikeConfig, seed: u64) -> Result<Self> {
        if p < 2 || p < config.rank() {
            return Err(Error::domain(format!("dimension {p} too small for rank {}", config.rank())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // a separate stream keeps the basis independent of samples drawn with the same seed
        rng.set_stream(1);
        let g = gaussian_matrix(p, config.rank(), &mut rng);
        let u = g.qr().q();
        Self::new(config, u)
    }

    /// Spike directions along the first `r` coordinate axes.
    pub fn canonical(p: usize, config: SpikeConfig) -> Result<Self> {
        if p < 2 || p < config.rank() {
            return Err(Error::domain(format!("dimension {p} too small for rank {}", config.rank())));
        }
        let u = DMatrix::identity(p, config.rank());
        Self::new(config, u)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn config(&self) -> &SpikeConfig {
        &self.config
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// `Σˢ x` for each column of `x`.
    pub fn apply_power(&self, s: f64, x: &DMatrix<f64>) -> DMatrix<f64> {
        let w = DVector::from_iterator(self.config.rank(), self.config.spikes().iter().map(|l| l.powf(s) - 1.0));
        let mut coef = self.u.tr_mul(x);
        for (mut row, &wi) in coef.row_iter_mut().zip(w.iter()) {
            row *= wi;
        }
        x + &self.u * coef
    }

    /// Dense `Σˢ`; only for `p ≤ DENSE_LIMIT`.
    pub fn dense_power(&self, s: f64) -> Result<DMatrix<f64>> {
        if self.p > DENSE_LIMIT {
            return Err(Error::domain(format!(
                "dense population matrix refused for p = {} > {DENSE_LIMIT}",
                self.p
            )));
        }
        Ok(self.apply_power(s, &DMatrix::identity(self.p, self.p)))
    }
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    // row-major draw order, independent of the storage layout
    let data: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

/// A second-moment matrix `XᵀX/c` kept in whichever of the `p×p` or `n×n`
/// forms is smaller.
#[derive(Debug, Clone)]
pub struct SampleCovariance {
    x: DMatrix<f64>,
    divisor: f64,
    /// `XᵀX/c` when `p ≤ n`, else `XXᵀ/c`.
    small: DMatrix<f64>,
    gram: bool,
}

impl SampleCovariance {
    /// `n` rows drawn i.i.d. from `N(0, Σ)` with generator seed `seed`.
    pub fn draw(pop: &SpikedPopulation, n: usize, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain(format!("need n >= 2 observations, got {n}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = gaussian_matrix(n, pop.p, &mut rng);
        // X = ZΣ^{1/2}: rows are Σ^{1/2} z
        let x = pop.apply_power(0.5, &z.transpose()).transpose();
        Ok(Self::from_parts(x, n as f64))
    }

    /// Second-moment matrix of observed rows. With `center`, column means are
    /// removed and the divisor is `n−1`.
    pub fn from_data(mut x: DMatrix<f64>, center: bool) -> Result<Self> {
        let (n, p) = x.shape();
        if n < 2 || p < 2 {
            return Err(Error::domain(format!("data matrix must be at least 2x2, got {n}x{p}")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("data matrix contains non-finite values"));
        }
        let divisor = if center {
            for mut col in x.column_iter_mut() {
                let m = col.mean();
                col.add_scalar_mut(-m);
            }
            (n - 1) as f64
        } else {
            n as f64
        };
        Ok(Self::from_parts(x, divisor))
    }

    fn from_parts(x: DMatrix<f64>, divisor: f64) -> Self {
        let (n, p) = x.shape();
        let gram = p > n;
        let small = if gram {
            &x * x.transpose() / divisor
        } else {
            x.transpose() * &x / divisor
        };
        SampleCovariance { x, divisor, small, gram }
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn gamma(&self) -> Result<AspectRatio> {
        AspectRatio::from_dims(self.p(), self.n())
    }

    /// All `p` eigenvalues, descending; zero-padded when `p > n`.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = symmetric_eigenvalues(&self.small).into_iter().map(|x| x.max(0.0)).collect();
        v.resize(self.p(), 0.0);
        v
    }

    /// Leading `k` eigenvectors (`p×k`), given the output of [`Self::eigenvalues`].
    pub fn top_eigenvectors(&self, eigenvalues: &[f64], k: usize) -> Result<DMatrix<f64>> {
        if !self.gram {
            return top_eigenvectors(&self.small, eigenvalues, k);
        }
        let n = self.n();
        if k > n || eigenvalues[..k].iter().any(|&l| l <= 0.0) {
            // null-space directions are not reachable through the Gram matrix
            return Ok(self.full_eigen().1.columns(0, k).into_owned());
        }
        let u = top_eigenvectors(&self.small, eigenvalues, k)?;
        let mut v = self.x.tr_mul(&u);
        for (mut col, &l) in v.column_iter_mut().zip(eigenvalues) {
            col /= (self.divisor * l).sqrt();
        }
        Ok(orthonormal_basis(&v, 1e-8))
    }

    /// Full eigendecomposition of the `p×p` matrix.
    pub fn full_eigen(&self) -> (Vec<f64>, DMatrix<f64>) {
        let s = if self.gram {
            self.x.transpose() * &self.x / self.divisor
        } else {
            self.small.clone()
        };
        let (mut values, vectors) = symmetric_eigen(&s);
        for v in &mut values {
            *v = v.max(0.0);
        }
        (values, vectors)
    }

    /// Dense `p×p` matrix `XᵀX/c`.
    pub fn dense(&self) -> DMatrix<f64> {
        if self.gram {
            self.x.transpose() * &self.x / self.divisor
        } else {
            self.small.clone()
        }
    }
}

/// Eigenvalues (all `p`) and leading `k` eigenvectors of one simulated sample
/// covariance.
pub fn sample_empirical(
    pop: &SpikedPopulation,
    n: usize,
    seed: u64,
    k: usize,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if pop.p() < 2 {
        return Err(Error::domain("need p >= 2"));
    }
    let s = SampleCovariance::draw(pop, n, seed)?;
    let values = s.eigenvalues();
    let vectors = s.top_eigenvectors(&values, k.min(pop.p()))?;
    Ok((values, vectors))
}

/// Covariance estimate `tail·I + V diag(values − tail) Vᵀ`.
#[derive(Debug, Clone)]
pub struct SpectralEstimate {
    pub tail: f64,
    pub values: Vec<f64>,
    /// Orthonormal `p×k` basis matching `values`.
    pub vectors: DMatrix<f64>,
}

impl SpectralEstimate {
    /// Splits `etas` (length `p`, aligned with the columns of a descending
    /// eigenbasis) into a leading part and a constant tail. Returns the number
    /// of leading eigenvectors that are needed.
    pub fn leading_count(etas: &[f64]) -> usize {
        match etas.last() {
            None => 0,
            Some(&t) => etas.len() - etas.iter().rev().take_while(|&&e| e == t).count(),
        }
    }

    /// Builds the estimate from shrunk values `etas` (length `p`) and the
    /// leading eigenvectors; only the first [`Self::leading_count`] columns
    /// are used.
    pub fn from_shrunk(etas: &[f64], vectors: &DMatrix<f64>) -> Result<Self> {
        let k = Self::leading_count(etas);
        let p = vectors.nrows();
        if etas.len() != p {
            return Err(Error::domain(format!("{} shrunk values for dimension {p}", etas.len())));
        }
        if vectors.ncols() < k {
            return Err(Error::domain(format!(
                "{k} leading eigenvectors needed, {} supplied",
                vectors.ncols()
            )));
        }
        let tail = if k == p { 1.0 } else { etas[p - 1] };
        Ok(SpectralEstimate {
            tail,
            values: etas[..k].to_vec(),
            vectors: vectors.columns(0, k).into_owned(),
        })
    }

    /// The population covariance itself.
    pub fn exact(pop: &SpikedPopulation) -> Self {
        SpectralEstimate {
            tail: 1.0,
            values: pop.config.spikes().to_vec(),
            vectors: pop.u.clone(),
        }
    }

    pub fn p(&self) -> usize {
        self.vectors.nrows()
    }

    fn is_singular(&self) -> bool {
        self.values.iter().any(|&v| v == 0.0) || (self.values.len() < self.p() && self.tail == 0.0)
    }

    fn validate(&self) -> Result<()> {
        if self.values.len() != self.vectors.ncols() {
            return Err(Error::domain("estimate values and vectors disagree in length"));
        }
        if self.values.iter().chain([&self.tail]).any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::domain("estimate eigenvalues must be finite and >= 0"));
        }
        Ok(())
    }

    /// `Σ̂ˢ x`.
    pub fn apply_power(&self, s: f64, x: &DMatrix<f64>) -> DMatrix<f64> {
        let ts = self.tail.powf(s);
        let mut coef = self.vectors.tr_mul(x);
        for (mut row, &v) in coef.row_iter_mut().zip(&self.values) {
            row *= v.powf(s) - ts;
        }
        x * ts + &self.vectors * coef
    }

    pub fn dense(&self) -> DMatrix<f64> {
        self.apply_power(1.0, &DMatrix::identity(self.p(), self.p()))
    }
}

/// Condition number of `Σ^{-1/2} Σ̂ Σ^{-1/2}`; `+∞` if `Σ̂` is singular.
pub fn pivot_kappa(pop: &SpikedPopulation, est: &SpectralEstimate) -> Result<f64> {
    est.validate()?;
    if est.p() != pop.p {
        return Err(Error::domain("estimate and population differ in dimension"));
    }
    if est.is_singular() {
        return Ok(f64::INFINITY);
    }
    let joint = DMatrix::from_columns(
        &pop.u.column_iter().chain(est.vectors.column_iter()).map(|c| c.into_owned()).collect::<Vec<_>>(),
    );
    let q = orthonormal_basis(&joint, 1e-10);
    let m = q.ncols();
    // Σ^{-1/2} maps span(Q) to itself, and the pivot is τ on its complement.
    let b = pop.apply_power(-0.5, &est.vectors);
    let c = q.tr_mul(&b);
    let qu = q.tr_mul(&pop.u);
    let mut mat = DMatrix::identity(m, m) * est.tail;
    let mut scaled_qu = qu.clone();
    for (mut col, &l) in scaled_qu.column_iter_mut().zip(pop.config.spikes()) {
        col *= est.tail * (1.0 / l - 1.0);
    }
    mat += &scaled_qu * qu.transpose();
    let mut scaled_c = c.clone();
    for (mut col, &v) in scaled_c.column_iter_mut().zip(&est.values) {
        col *= v - est.tail;
    }
    mat += &scaled_c * c.transpose();
    let mat = (&mat + mat.transpose()) * 0.5;
    let ev = symmetric_eigenvalues(&mat);
    let (mut hi, mut lo) = (ev[0], ev[m - 1]);
    if m < pop.p {
        hi = hi.max(est.tail);
        lo = lo.min(est.tail);
    }
    if lo <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(hi / lo)
}

/// Pivot condition number for shrunk values `etas` (length `p`, aligned with
/// the descending eigenbasis whose leading columns are `eigenvectors`).
pub fn empirical_pivot_kappa(pop: &SpikedPopulation, eigenvectors: &DMatrix<f64>, etas: &[f64]) -> Result<f64> {
    if etas.iter().any(|&e| !e.is_finite() || e < 0.0) {
        return Err(Error::domain("shrunk values must be finite and >= 0"));
    }
    if etas.iter().any(|&e| e == 0.0) {
        return Ok(f64::INFINITY);
    }
    pivot_kappa(pop, &SpectralEstimate::from_shrunk(etas, eigenvectors)?)
}

/// One replicate of [`simulate_loss`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepResult {
    pub replicate: u64,
    pub kappa: f64,
    pub rsrg: f64,
    pub top_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub gamma: f64,
    pub spikes: Vec<f64>,
    pub shrinker: ShrinkerSpec,
    pub reps: usize,
    pub mean_kappa: f64,
    pub stderr_kappa: f64,
    pub mean_rsrg: f64,
    /// Asymptotic loss the mean should approach.
    pub target: f64,
    pub per_rep: Vec<RepResult>,
}

/// Loss of `spec` on one replicate, with empirical tuning (`γ = p/n`,
/// multi-spike rules tuned at the observed top eigenvalue).
pub fn replicate_loss(pop: &SpikedPopulation, n: usize, spec: ShrinkerSpec, seed: u64) -> Result<(f64, f64)> {
    let s = SampleCovariance::draw(pop, n, seed)?;
    let values = s.eigenvalues();
    let gamma = AspectRatio::from_dims(pop.p, n)?;
    let etas = apply(spec, &values, gamma)?;
    let top = values[0];
    if etas.iter().any(|&e| e == 0.0) {
        return Ok((f64::INFINITY, top));
    }
    let k = SpectralEstimate::leading_count(&etas);
    let vectors = if 4 * k > pop.p {
        s.full_eigen().1
    } else {
        s.top_eigenvectors(&values, k)?
    };
    Ok((empirical_pivot_kappa(pop, &vectors, &etas)?, top))
}

/// Repeated sampling of `n` observations, replicate `i` seeded with `seed + i`.
pub fn simulate_loss(
    pop: &SpikedPopulation,
    n: usize,
    spec: ShrinkerSpec,
    reps: usize,
    seed: u64,
) -> Result<SimResult> {
    if reps == 0 {
        return Err(Error::Usage("need at least one replicate".into()));
    }
    if n < 2 {
        return Err(Error::domain(format!("need n >= 2 observations, got {n}")));
    }
    let gamma = AspectRatio::from_dims(pop.p, n)?;
    let target = loss_report(&SpikeConfig::new(gamma, pop.config.spikes().to_vec())?, spec)?.kappa;
    let per_rep: Vec<RepResult> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let (kappa, top) = replicate_loss(pop, n, spec, seed.wrapping_add(i))?;
            Ok(RepResult {
                replicate: i,
                kappa,
                rsrg: rsrg_from_kappa(kappa)?,
                top_eigenvalue: top,
            })
        })
        .collect::<Result<_>>()?;
    let k: Vec<f64> = per_rep.iter().map(|r| r.kappa).collect();
    let mean = k.iter().sum::<f64>() / reps as f64;
    let stderr = if reps > 1 {
        let var = k.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        (var / reps as f64).sqrt()
    } else {
        0.0
    };
    let mean_rsrg = per_rep.iter().map(|r| r.rsrg).sum::<f64>() / reps as f64;
    Ok(SimResult {
        seed,
        n,
        p: pop.p,
        gamma: gamma.value(),
        spikes: pop.config.spikes().to_vec(),
        shrinker: spec,
        reps,
        mean_kappa: mean,
        stderr_kappa: stderr,
        mean_rsrg,
        target,
        per_rep,
    })
}

/// Sharpe ratio `h'μ/√(h'Σh)` of holdings `h`.
pub fn sharpe_ratio(h: &DVector<f64>, mu: &DVector<f64>, pop: &SpikedPopulation) -> Result<f64> {
    if h.len() != pop.p || mu.len() != pop.p {
        return Err(Error::domain("vector length differs from the population dimension"));
    }
    if h.iter().all(|&x| x == 0.0) {
        return Err(Error::domain("Sharpe ratio of zero holdings is undefined"));
    }
    let hm = DMatrix::from_column_slice(pop.p, 1, h.as_slice());
    let sh = pop.apply_power(1.0, &hm);
    Ok(h.dot(mu) / h.dot(&sh.column(0)).sqrt())
}

/// Least-favorable mean vector for an estimate, with its diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForecastVector {
    /// Unit-norm mean vector.
    pub mu: Vec<f64>,
    /// Coefficient on the top population eigenvector `U₁`.
    pub alpha1: f64,
    /// Coefficient on `W₂`, the top estimate eigenvector orthogonalised against `U₁`.
    pub alpha2: f64,
    /// Norm of the part of `μ` outside `span{U₁, W₂}`.
    pub residual: f64,
    /// `SR*(μ,Σ) / SR(Σ̂; μ, Σ)` for the constructed `μ`.
    pub achieved_ratio: f64,
    /// `½√(κ + 1/κ + 2)` with `κ` the pivot condition number.
    pub bound: f64,
    pub kappa: f64,
}

/// Ratio of the oracle Sharpe ratio to the one achieved by `Σ̂⁻¹μ`.
pub fn sharpe_loss_ratio(pop: &SpikedPopulation, est: &SpectralEstimate, mu: &DMatrix<f64>) -> Vec<f64> {
    let a = est.apply_power(-1.0, mu);
    let sa = pop.apply_power(1.0, &a);
    let si = pop.apply_power(-1.0, mu);
    (0..mu.ncols())
        .map(|j| {
            let m = mu.column(j);
            let num = m.dot(&a.column(j));
            let den = a.column(j).dot(&sa.column(j)).sqrt();
            let opt = m.dot(&si.column(j)).sqrt();
            opt / (num / den)
        })
        .collect()
}

/// Builds the mean vector maximising the Sharpe-ratio deterioration of `est`.
///
/// Dense in `p`; meant for desk-scale instances.
pub fn least_favorable_forecast(pop: &SpikedPopulation, est: &SpectralEstimate) -> Result<ForecastVector> {
    est.validate()?;
    if est.is_singular() {
        return Err(Error::domain("singular covariance estimate"));
    }
    if est.p() != pop.p {
        return Err(Error::domain("estimate and population differ in dimension"));
    }
    let p = pop.p;
    let half_inv = est.apply_power(-0.5, &DMatrix::identity(p, p));
    let sigma_half_inv = pop.apply_power(1.0, &half_inv);
    let tilde = &half_inv * sigma_half_inv;
    let tilde = (&tilde + tilde.transpose()) * 0.5;
    let (_, vecs) = symmetric_eigen(&tilde);
    let x = (vecs.column(0) + vecs.column(p - 1)) / 2f64.sqrt();
    let xm = DMatrix::from_column_slice(p, 1, x.as_slice());
    let mu = est.apply_power(0.5, &xm);
    let mu = &mu / mu.norm();

    let achieved_ratio = sharpe_loss_ratio(pop, est, &mu)[0];
    let kappa = pivot_kappa(pop, est)?;
    let bound = rsrg_from_kappa(kappa)?;

    let u1 = pop.u.column(0).into_owned();
    let (alpha1, alpha2, residual) = if est.vectors.ncols() > 0 {
        let both = DMatrix::from_columns(&[u1.clone(), est.vectors.column(0).into_owned()]);
        let basis = orthonormal_basis(&both, 1e-10);
        let a1 = u1.dot(&mu.column(0));
        let a2 = if basis.ncols() > 1 { basis.column(1).dot(&mu.column(0)) } else { 0.0 };
        let proj = &basis * basis.tr_mul(&mu);
        (a1, a2, (&mu - proj).norm())
    } else {
        let a1 = u1.dot(&mu.column(0));
        (a1, 0.0, (&mu.column(0) - &u1 * a1).norm())
    };
    Ok(ForecastVector {
        mu: mu.column(0).iter().copied().collect(),
        alpha1,
        alpha2,
        residual,
        achieved_ratio,
        bound,
        kappa,
    })
}

/// Largest deterioration ratio over `samples` random unit mean vectors.
pub fn random_search_ratio(pop: &SpikedPopulation, est: &SpectralEstimate, samples: usize, seed: u64) -> Result<f64> {
    est.validate()?;
    if est.is_singular() {
        return Err(Error::domain("singular covariance estimate"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    let batch = 1000;
    let mut done = 0;
    while done < samples {
        let m = batch.min(samples - done);
        let mut mu = gaussian_matrix(pop.p, m, &mut rng);
        for mut c in mu.column_iter_mut() {
            let nrm = c.norm();
            c /= nrm;
        }
        for r in sharpe_loss_ratio(pop, est, &mu) {
            best = best.max(r);
        }
        done += m;
    }
    Ok(best)
}
