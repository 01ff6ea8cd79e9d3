//! Multiple-invariance MUSIC baseline: a 1-D pseudospectrum search over the
//! delay axis using the full multiband steering vector against the noise
//! subspace of the denoised column-block matrix.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::frontend::ChannelEstimate;
use crate::hankel::{default_q_cols, signal_basis_from_snapshots};
use crate::model::{unit_phasor, BandPlan};

/// MUSIC pseudospectrum over a uniform delay grid of `grid_points` cells in
/// `[0, tau_max)`. `basis` must have orthonormal columns and `l_bands * p_rows`
/// rows; the value at each cell is `1 / ||(I - U U^H) a(tau)||^2`.
pub fn music_spectrum(
    basis: &DMatrix<Complex64>,
    plan: &BandPlan,
    p_rows: usize,
    grid_points: usize,
) -> Result<Vec<f64>> {
    let l = plan.l_bands();
    if basis.nrows() != l * p_rows {
        return Err(Error::InvalidArgument(format!(
            "basis has {} rows, expected L*P = {}",
            basis.nrows(),
            l * p_rows
        )));
    }
    if grid_points < 2 {
        return Err(Error::InvalidArgument("grid needs at least two points".into()));
    }
    let w_sc = plan.subcarrier_spacing_rad();
    let step = plan.tau_max_s() / grid_points as f64;
    let rows = basis.nrows();
    let k = basis.ncols();
    let mut spectrum = Vec::with_capacity(grid_points);
    let mut steering = vec![Complex64::default(); rows];
    for g in 0..grid_points {
        let tau = g as f64 * step;
        for (i, &n_i) in plan.band_offsets().iter().enumerate() {
            for r in 0..p_rows {
                steering[i * p_rows + r] = unit_phasor(-((n_i + r) as f64) * w_sc * tau);
            }
        }
        // ||(I - U U^H) a||^2 = ||a||^2 - ||U^H a||^2 with ||a||^2 = L*P
        let mut in_span = 0.0f64;
        for c in 0..k {
            let mut acc = Complex64::default();
            for r in 0..rows {
                acc += basis[(r, c)].conj() * steering[r];
            }
            in_span += acc.norm_sqr();
        }
        let out = (rows as f64 - in_span).max(1e-300);
        spectrum.push(1.0 / out);
    }
    Ok(spectrum)
}

/// Delay estimates from the `K` largest well-separated pseudospectrum peaks,
/// each refined by quadratic interpolation on the log spectrum. Sorted
/// ascending.
pub fn mimusic_baseline(
    snapshots: &[ChannelEstimate],
    k_paths: usize,
    grid_points: usize,
    q_cols: Option<usize>,
) -> Result<Vec<f64>> {
    if snapshots.is_empty() {
        return Err(Error::InvalidArgument("need at least one snapshot".into()));
    }
    let plan = snapshots[0].plan().clone();
    let n = plan.n_subcarriers();
    if grid_points < 10 * n {
        return Err(Error::InvalidArgument(format!(
            "grid of {grid_points} points is below the 10*N = {} minimum",
            10 * n
        )));
    }
    let q = q_cols.unwrap_or_else(|| default_q_cols(n, k_paths));
    let (_, basis) = signal_basis_from_snapshots(snapshots, k_paths, q)?;
    let spectrum = music_spectrum(basis.basis(), &plan, basis.p_rows(), grid_points)?;

    let mut sorted = spectrum.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[grid_points / 2];

    // cyclic local maxima above the median level
    let mut peaks: Vec<(usize, f64)> = Vec::new();
    for g in 0..grid_points {
        let prev = spectrum[(g + grid_points - 1) % grid_points];
        let next = spectrum[(g + 1) % grid_points];
        if spectrum[g] > prev && spectrum[g] >= next && spectrum[g] > median {
            peaks.push((g, spectrum[g]));
        }
    }
    if peaks.len() < k_paths {
        return Err(Error::PeakDeficit {
            found: peaks.len(),
            need: k_paths,
        });
    }
    peaks.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    peaks.truncate(k_paths);

    let step = plan.tau_max_s() / grid_points as f64;
    let mut delays: Vec<f64> = peaks
        .iter()
        .map(|&(g, _)| {
            let prev = spectrum[(g + grid_points - 1) % grid_points].ln();
            let here = spectrum[g].ln();
            let next = spectrum[(g + 1) % grid_points].ln();
            let denom = prev - 2.0 * here + next;
            let offset = if denom.abs() > 1e-300 {
                (0.5 * (prev - next) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            };
            ((g as f64 + offset) * step).rem_euclid(plan.tau_max_s())
        })
        .collect();
    delays.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(delays)
}
