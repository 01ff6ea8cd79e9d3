//! Single-invariance ESPRIT baseline.
//!
//! Operates on the column-stacked Hankel blocks of the listed bands only, so
//! its resolution is set by the per-band bandwidth; cross-band rotations are
//! not exploited. Least-squares variant.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::frontend::ChannelEstimate;
use crate::hankel::{default_q_cols, fuse_snapshots, hankel_lift};
use crate::linalg;

/// Eigenvalues of the ESPRIT rotation solved on the listed bands. Exposed
/// for diagnostics; on noiseless data they are unit-modulus.
pub fn esprit_rotation_eigenvalues(
    snapshots: &[ChannelEstimate],
    k_paths: usize,
    bands: &[usize],
    q_cols: Option<usize>,
) -> Result<Vec<Complex64>> {
    if snapshots.is_empty() {
        return Err(Error::InvalidArgument("need at least one snapshot".into()));
    }
    if bands.is_empty() {
        return Err(Error::InvalidArgument("need at least one band".into()));
    }
    let plan = snapshots[0].plan();
    let l = plan.l_bands();
    if let Some(&bad) = bands.iter().find(|&&b| b >= l) {
        return Err(Error::InvalidArgument(format!(
            "band index {bad} out of range for {l} bands"
        )));
    }
    let n = plan.n_subcarriers();
    let q = q_cols.unwrap_or_else(|| default_q_cols(n, k_paths));
    let stacks = snapshots
        .iter()
        .map(|est| hankel_lift(est, q))
        .collect::<Result<Vec<_>>>()?;
    let fused = fuse_snapshots(&stacks)?;
    let p = fused.p_rows();
    if p < k_paths + 1 {
        return Err(Error::InvalidArgument(format!(
            "need P - 1 >= K, got P = {p}, K = {k_paths}"
        )));
    }

    // column-stack the selected bands over all snapshots
    let cols_each = fused.blocks()[0].ncols();
    let mut data = DMatrix::from_element(p, bands.len() * cols_each, Complex64::default());
    for (j, &b) in bands.iter().enumerate() {
        data.view_mut((0, j * cols_each), (p, cols_each))
            .copy_from(&fused.blocks()[b]);
    }

    let (u, sv) = linalg::leading_left_singular(&data, k_paths)?;
    let ratio = sv[k_paths - 1] / sv[0];
    if !ratio.is_finite() || ratio < 1e-12 {
        return Err(Error::DegenerateData {
            k: k_paths,
            ratio,
        });
    }

    let u1 = u.rows(0, p - 1).into_owned();
    let u2 = u.rows(1, p - 1).into_owned();
    let psi = linalg::least_squares(&u1, &u2)
        .map_err(|e| Error::InitializerFailed(format!("shift-invariance solve: {e}")))?;
    let eigs = linalg::eigenvalues(&psi)
        .map_err(|e| Error::InitializerFailed(format!("rotation eigenvalues: {e}")))?;
    for ev in &eigs {
        if !ev.re.is_finite() || !ev.im.is_finite() || ev.norm() < 1e-6 {
            return Err(Error::InitializerFailed(format!(
                "degenerate rotation eigenvalue {ev}"
            )));
        }
    }
    Ok(eigs)
}

/// Delay estimates from standard least-squares ESPRIT on the listed bands,
/// sorted ascending.
pub fn esprit_baseline(
    snapshots: &[ChannelEstimate],
    k_paths: usize,
    bands: &[usize],
    q_cols: Option<usize>,
) -> Result<Vec<f64>> {
    let eigs = esprit_rotation_eigenvalues(snapshots, k_paths, bands, q_cols)?;
    let plan = snapshots[0].plan();
    let w_sc = plan.subcarrier_spacing_rad();
    let mut delays: Vec<f64> = eigs
        .iter()
        .map(|ev| (-ev.arg()).rem_euclid(TAU) / w_sc)
        .collect();
    delays.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(delays)
}
