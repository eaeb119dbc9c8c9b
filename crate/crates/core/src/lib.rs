//! Optimal eigenvalue shrinkage of covariance matrices under relative
//! condition-number loss, in the spiked covariance model.
//!
//! The crate is organised bottom-up:
//!
//! - [`asymptotics`]: bulk edges, spike-to-eigenvalue displacement and
//!   eigenvector cosines of the spiked model.
//! - [`pivot`]: the 2×2 blocks of the asymptotic pivot and the condition
//!   number they induce.
//! - [`shrinkers`]: the family of scalar nonlinearities λ ↦ η.
//! - [`loss`]: optimal loss, Sharpe-ratio guarantees, regrets and
//!   worst-case regret sweeps.
//! - [`montecarlo`]: finite-sample simulation of spiked Gaussian data and
//!   least-favorable forecast construction.
//! - [`cli`]: the command-line surface and file formats.

pub mod asymptotics;
pub mod cli;
pub mod error;
mod linalg;
pub mod loss;
pub mod montecarlo;
pub mod pivot;
pub mod shrinkers;

pub use asymptotics::{AspectRatio, EigenPair, SpikeConfig};
pub use error::{Error, Result};
pub use loss::{LossReport, RegretSweepRow};
pub use pivot::{ABCoeffs, PivotBlock};
pub use shrinkers::{DeadZone, ShrinkerSpec};
