//! Deterministic Cramér-Rao lower bound for the multiband delay model.
//!
//! Gains are treated as unknown deterministic nuisance parameters split into
//! real and imaginary parts, so the parameter vector is
//! `eta = [tau; Re alpha; Im alpha]` and the bound matches the fixed-channel
//! Monte-Carlo protocol used by the benchmark runner.

use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::frontend::sigma_from_snr;
use crate::model::{BandPlan, MultipathChannel};

/// Fisher information and the delay-variance block of its inverse.
#[derive(Debug, Clone)]
pub struct CrlbResult {
    tau_variances: Vec<f64>,
    fisher: DMatrix<f64>,
    snapshots: usize,
}

impl CrlbResult {
    /// Diagonal CRLB entries for the delays, in seconds squared.
    pub fn tau_variances(&self) -> &[f64] {
        &self.tau_variances
    }

    /// `3K x 3K` information matrix for `eta = [tau; Re alpha; Im alpha]`,
    /// with delays expressed in seconds.
    pub fn fisher(&self) -> &DMatrix<f64> {
        &self.fisher
    }

    pub fn snapshots(&self) -> usize {
        self.snapshots
    }

    /// RMSE floor for the line-of-sight (smallest) delay, in seconds.
    pub fn los_rmse_floor_s(&self) -> f64 {
        self.tau_variances[0].sqrt()
    }
}

/// Complex Jacobian `d mu / d eta` of the stacked mean `mu = A(tau) alpha`,
/// with delays measured in units of `tau_scale` seconds.
fn mean_jacobian(
    ch: &MultipathChannel,
    plan: &BandPlan,
    tau_scale: f64,
) -> DMatrix<Complex64> {
    let k = ch.k_paths();
    let n = plan.n_subcarriers();
    let l = plan.l_bands();
    let w_sc = plan.subcarrier_spacing_rad();
    let mut d = DMatrix::from_element(l * n, 3 * k, Complex64::default());
    for (i, &n_i) in plan.band_offsets().iter().enumerate() {
        for s in 0..n {
            let row = i * n + s;
            let m = (n_i + s) as f64;
            for (p, (&gain, &tau)) in ch.gains().iter().zip(ch.delays_s()).enumerate() {
                let a = crate::model::unit_phasor(-m * w_sc * tau);
                // d mu / d tau_p (scaled), d mu / d Re(alpha_p), d mu / d Im(alpha_p)
                d[(row, p)] = gain * a * Complex64::new(0.0, -m * w_sc * tau_scale);
                d[(row, k + p)] = a;
                d[(row, 2 * k + p)] = Complex64::new(0.0, 1.0) * a;
            }
        }
    }
    d
}

/// CRLB on the delays for the given per-band noise levels and snapshot count.
pub fn crlb_delays(
    ch: &MultipathChannel,
    plan: &BandPlan,
    sigmas: &[f64],
    snapshots: usize,
) -> Result<CrlbResult> {
    if sigmas.len() != plan.l_bands() {
        return Err(Error::InvalidArgument(format!(
            "got {} noise levels, plan has L = {}",
            sigmas.len(),
            plan.l_bands()
        )));
    }
    if sigmas.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidArgument(
            "CRLB needs strictly positive noise levels".into(),
        ));
    }
    if snapshots < 1 {
        return Err(Error::InvalidArgument("need at least one snapshot".into()));
    }
    let k = ch.k_paths();
    let n = plan.n_subcarriers();

    // Delays enter in units of T_s so the information matrix stays
    // well-conditioned; the variances are rescaled afterwards.
    let tau_scale = plan.sample_period_s();
    let mut d = mean_jacobian(ch, plan, tau_scale);
    for (i, &sigma) in sigmas.iter().enumerate() {
        let w = 1.0 / sigma;
        for s in 0..n {
            for c in 0..3 * k {
                d[(i * n + s, c)] *= Complex64::new(w, 0.0);
            }
        }
    }
    let gram = d.adjoint() * &d;
    let scale = 2.0 * snapshots as f64;
    let fisher_scaled = DMatrix::from_fn(3 * k, 3 * k, |r, c| scale * gram[(r, c)].re);

    let chol = Cholesky::new(fisher_scaled.clone()).ok_or(Error::SingularInformation)?;
    let inv = chol.inverse();

    // a Cholesky that "succeeded" on a near-singular matrix shows up as a
    // large inversion residual
    let dim = 3 * k;
    let residual = (&fisher_scaled * &inv - DMatrix::<f64>::identity(dim, dim)).norm()
        / (dim as f64).sqrt();
    if !(residual < 1e-3) {
        return Err(Error::SingularInformation);
    }

    let tau_variances: Vec<f64> = (0..k)
        .map(|p| inv[(p, p)] * tau_scale * tau_scale)
        .collect();
    if tau_variances.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::SingularInformation);
    }

    // report the information matrix in seconds
    let mut fisher = fisher_scaled;
    for r in 0..3 * k {
        for c in 0..3 * k {
            let mut f = fisher[(r, c)];
            if r < k {
                f /= tau_scale;
            }
            if c < k {
                f /= tau_scale;
            }
            fisher[(r, c)] = f;
        }
    }
    Ok(CrlbResult {
        tau_variances,
        fisher,
        snapshots,
    })
}

/// RMSE floor (seconds) for the line-of-sight delay across an SNR axis.
///
/// `offsets_db[i]` shifts band `i` relative to the axis value, implementing
/// nonuniform noise across branches.
pub fn crlb_curve(
    ch: &MultipathChannel,
    plan: &BandPlan,
    snr_axis_db: &[f64],
    offsets_db: &[f64],
    snapshots: usize,
) -> Result<Vec<f64>> {
    if offsets_db.len() != plan.l_bands() {
        return Err(Error::InvalidArgument(format!(
            "got {} per-band offsets, plan has L = {}",
            offsets_db.len(),
            plan.l_bands()
        )));
    }
    snr_axis_db
        .iter()
        .map(|&snr| {
            let per_band: Vec<f64> = offsets_db.iter().map(|&o| snr + o).collect();
            let noise = sigma_from_snr(ch, plan, &per_band)?;
            let res = crlb_delays(ch, plan, noise.sigmas(), snapshots)?;
            Ok(res.los_rmse_floor_s())
        })
        .collect()
}
