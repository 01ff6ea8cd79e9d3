//! Delay estimators: the proposed weighted subspace fit and its baselines.

mod esprit;
mod mimusic;
mod multires;
mod wsf;

pub use esprit::{esprit_baseline, esprit_rotation_eigenvalues};
pub use mimusic::{mimusic_baseline, music_spectrum};
pub use multires::init_multiresolution;
pub use wsf::{
    build_blocks, build_blocks_unweighted, recover_gains, varpro_solve, wsf_cost, FitResult,
    JacobianKind, VarproOptions, WsfProblem,
};

use crate::error::{Error, Result};
use crate::frontend::{stacked_mean, ChannelEstimate};
use crate::hankel::{default_q_cols, signal_basis_from_snapshots};

/// How the fitting problem weights the receiver branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// `1/sigma_i^2` per band, the nonuniform-noise weighting.
    #[default]
    PerBand,
    /// `W = I`, ignoring the per-branch noise levels.
    Uniform,
}

/// Configuration for the end-to-end proposed estimator.
#[derive(Debug, Clone)]
pub struct WsfConfig {
    pub k_paths: usize,
    /// Hankel width; `None` picks the default for the plan.
    pub q_cols: Option<usize>,
    pub weighting: Weighting,
    pub varpro: VarproOptions,
}

impl WsfConfig {
    pub fn new(k_paths: usize) -> Self {
        Self {
            k_paths,
            q_cols: None,
            weighting: Weighting::default(),
            varpro: VarproOptions::default(),
        }
    }
}

/// Full pipeline of the proposed estimator: Hankel lift and snapshot fusion,
/// denoised signal basis, multiresolution initialization (MUSIC-peak
/// fallback), and the variable-projection subspace fit.
pub fn wsf_estimate(snapshots: &[ChannelEstimate], cfg: &WsfConfig) -> Result<FitResult> {
    if snapshots.is_empty() {
        return Err(Error::InvalidArgument("need at least one snapshot".into()));
    }
    let plan = snapshots[0].plan().clone();
    let n = plan.n_subcarriers();
    let q = cfg.q_cols.unwrap_or_else(|| default_q_cols(n, cfg.k_paths));
    let (_, basis) = signal_basis_from_snapshots(snapshots, cfg.k_paths, q)?;
    let prob = match cfg.weighting {
        Weighting::PerBand => build_blocks(&basis, &plan, snapshots[0].sigmas())?,
        Weighting::Uniform => build_blocks_unweighted(&basis, &plan)?,
    };
    let init = match init_multiresolution(snapshots, cfg.k_paths, Some(q)) {
        Ok(delays) => delays,
        // coarse-grid MUSIC peaks keep the pipeline total when the
        // initializer cannot pair its eigenvalues
        Err(_) => mimusic_baseline(snapshots, cfg.k_paths, 10 * n, Some(q))?,
    };
    let stacked = stacked_mean(snapshots)?;
    varpro_solve(&prob, &stacked, &init, &cfg.varpro)
}
