//! Two-stage multiresolution delay initializer.
//!
//! Stage one solves the subcarrier-level shift invariance of the stacked
//! (first, last)-band Hankel blocks: coarse delays, resolution set by one
//! band. Stage two solves the cross-band rotation between the same two
//! blocks, reusing the stage-one eigenvectors to pair paths: fine delays
//! known modulo `tau_max / n_last`, unwrapped against the coarse stage.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::frontend::ChannelEstimate;
use crate::hankel::{default_q_cols, hankel_lift};
use crate::linalg;

use super::esprit::esprit_baseline;

/// Multiresolution delay estimates, sorted ascending. Falls back to plain
/// single-band ESPRIT when only one band is available.
pub fn init_multiresolution(
    snapshots: &[ChannelEstimate],
    k_paths: usize,
    q_cols: Option<usize>,
) -> Result<Vec<f64>> {
    if snapshots.is_empty() {
        return Err(Error::InvalidArgument("need at least one snapshot".into()));
    }
    let plan = snapshots[0].plan().clone();
    let l = plan.l_bands();
    if l == 1 {
        return esprit_baseline(snapshots, k_paths, &[0], q_cols);
    }
    let n = plan.n_subcarriers();
    let q = q_cols.unwrap_or_else(|| default_q_cols(n, k_paths));

    // stack the first and last band vertically, snapshots side by side
    let mut blocks = Vec::with_capacity(snapshots.len());
    let mut p = 0usize;
    for est in snapshots {
        let stack = hankel_lift(est, q)?;
        p = stack.p_rows();
        let b0 = &stack.blocks()[0];
        let b1 = &stack.blocks()[l - 1];
        let mut v = DMatrix::from_element(2 * p, q, Complex64::default());
        v.view_mut((0, 0), (p, q)).copy_from(b0);
        v.view_mut((p, 0), (p, q)).copy_from(b1);
        blocks.push(v);
    }
    if p < k_paths + 1 {
        return Err(Error::InvalidArgument(format!(
            "need P - 1 >= K, got P = {p}, K = {k_paths}"
        )));
    }
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut data = DMatrix::from_element(2 * p, cols, Complex64::default());
    let mut at = 0;
    for b in &blocks {
        data.view_mut((0, at), (2 * p, b.ncols())).copy_from(b);
        at += b.ncols();
    }

    let (u, sv) = linalg::leading_left_singular(&data, k_paths)?;
    let ratio = sv[k_paths - 1] / sv[0];
    if !ratio.is_finite() || ratio < 1e-12 {
        return Err(Error::InitializerFailed(format!(
            "two-band data rank deficient, sigma_K/sigma_1 = {ratio:.3e}"
        )));
    }

    // coarse: subcarrier shift invariance within each band block
    let sub = p - 1;
    let k = k_paths;
    let mut u1 = DMatrix::from_element(2 * sub, k, Complex64::default());
    let mut u2 = DMatrix::from_element(2 * sub, k, Complex64::default());
    for half in 0..2usize {
        for r in 0..sub {
            for c in 0..k {
                u1[(half * sub + r, c)] = u[(half * p + r, c)];
                u2[(half * sub + r, c)] = u[(half * p + r + 1, c)];
            }
        }
    }
    let psi_sub = linalg::least_squares(&u1, &u2)
        .map_err(|e| Error::InitializerFailed(format!("subcarrier invariance solve: {e}")))?;
    let (coarse_eigs, eigvecs) = linalg::eigen(&psi_sub)
        .map_err(|e| Error::InitializerFailed(format!("coarse eigendecomposition: {e}")))?;
    for ev in &coarse_eigs {
        if !ev.re.is_finite() || !ev.im.is_finite() || ev.norm() < 1e-6 {
            return Err(Error::InitializerFailed(format!(
                "degenerate coarse eigenvalue {ev}"
            )));
        }
    }

    // fine: cross-band rotation, diagonalized in the coarse eigenbasis so
    // each fine phase is paired with its coarse partner
    let ua = u.rows(0, p).into_owned();
    let ub = u.rows(p, p).into_owned();
    let psi_band = linalg::least_squares(&ua, &ub)
        .map_err(|e| Error::InitializerFailed(format!("cross-band invariance solve: {e}")))?;
    let mixed = &psi_band * &eigvecs;
    let paired = eigvecs
        .clone()
        .lu()
        .solve(&mixed)
        .ok_or_else(|| Error::InitializerFailed("eigenvector pairing is singular".into()))?;

    let n_last = plan.band_offsets()[l - 1] as f64;
    let w_sc = plan.subcarrier_spacing_rad();
    let mut delays = Vec::with_capacity(k);
    for i in 0..k {
        let fine_rot = paired[(i, i)];
        if fine_rot.norm() < 1e-6 {
            return Err(Error::InitializerFailed(
                "cross-band rotation lost a path during pairing".into(),
            ));
        }
        let coarse_phase = (-coarse_eigs[i].arg()).rem_euclid(TAU);
        let fine_phase = (-fine_rot.arg()).rem_euclid(TAU);
        // unwrap: n_last * phi = fine_phase + 2*pi*m, m chosen nearest the coarse stage
        let wraps = ((n_last * coarse_phase - fine_phase) / TAU)
            .round()
            .clamp(0.0, n_last - 1.0);
        let phi = (fine_phase + TAU * wraps) / n_last;
        delays.push(phi / w_sc);
    }
    delays.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(delays)
}
