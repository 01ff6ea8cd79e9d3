//! Parametric multipath channel model and its structure matrices.
//!
//! A channel with `K` paths has frequency response `H(w) = sum_k a_k exp(-j w tau_k)`.
//! Sampled on the subcarrier grid of `L` bands it factors into Vandermonde
//! steering matrices and per-band diagonal rotations; every estimator in this
//! crate consumes those factors.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Unit-modulus phasor `exp(j*phase)` with the phase wrapped into `[0, 2*pi)`.
///
/// Exponents like `Phi_k^n` are computed through the phase rather than by
/// repeated multiplication so that the modulus stays at 1 to machine accuracy
/// for powers in the thousands.
#[inline]
pub(crate) fn unit_phasor(phase: f64) -> Complex64 {
    Complex64::from_polar(1.0, phase.rem_euclid(TAU))
}

/// Frequency layout of the probed bands.
///
/// All bands share the same bandwidth `B` and subcarrier count `N`; band `i`
/// is centred at `f0 + n_i * B/N` where the integer offsets `n_i` start at 0
/// and increase strictly.
#[derive(Debug, Clone, PartialEq)]
pub struct BandPlan {
    f0_hz: f64,
    bandwidth_hz: f64,
    n_subcarriers: usize,
    band_offsets: Vec<usize>,
}

impl BandPlan {
    pub fn new(
        f0_hz: f64,
        bandwidth_hz: f64,
        n_subcarriers: usize,
        band_offsets: Vec<usize>,
    ) -> Result<Self> {
        if !(bandwidth_hz > 0.0) || !f0_hz.is_finite() || f0_hz < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "band plan needs f0 >= 0 and bandwidth > 0, got f0 = {f0_hz}, B = {bandwidth_hz}"
            )));
        }
        if n_subcarriers == 0 || n_subcarriers % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "subcarrier count must be even and positive, got {n_subcarriers}"
            )));
        }
        if band_offsets.is_empty() {
            return Err(Error::InvalidArgument("band plan needs at least one band".into()));
        }
        if band_offsets[0] != 0 {
            return Err(Error::InvalidArgument(format!(
                "first band offset must be 0, got {}",
                band_offsets[0]
            )));
        }
        for w in band_offsets.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidArgument(format!(
                    "band offsets must increase strictly, got {} then {}",
                    w[0], w[1]
                )));
            }
            if w[1] - w[0] < n_subcarriers {
                return Err(Error::InvalidArgument(format!(
                    "bands overlap: consecutive offsets {} and {} differ by less than N = {}",
                    w[0], w[1], n_subcarriers
                )));
            }
        }
        Ok(Self {
            f0_hz,
            bandwidth_hz,
            n_subcarriers,
            band_offsets,
        })
    }

    /// Offsets `n_i` derived from band centre frequencies on the subcarrier grid.
    ///
    /// Each centre must sit on the grid `f0 + n * B/N` to within a small
    /// rounding tolerance.
    pub fn from_band_centers(
        f0_hz: f64,
        bandwidth_hz: f64,
        n_subcarriers: usize,
        centers_hz: &[f64],
    ) -> Result<Self> {
        let step = bandwidth_hz / n_subcarriers as f64;
        let offsets = centers_hz
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let raw = (c - f0_hz) / step;
                let n = raw.round();
                if (raw - n).abs() > 1e-6 || n < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "band center {i} at {c} Hz is not on the subcarrier grid"
                    )));
                }
                Ok(n as usize)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(f0_hz, bandwidth_hz, n_subcarriers, offsets)
    }

    pub fn f0_hz(&self) -> f64 {
        self.f0_hz
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz
    }

    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }

    pub fn band_offsets(&self) -> &[usize] {
        &self.band_offsets
    }

    pub fn l_bands(&self) -> usize {
        self.band_offsets.len()
    }

    /// Sample period `T_s = 1/B`.
    pub fn sample_period_s(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    /// Subcarrier spacing in rad/s, `w_sc = 2*pi / (N * T_s)`.
    pub fn subcarrier_spacing_rad(&self) -> f64 {
        TAU * self.bandwidth_hz / self.n_subcarriers as f64
    }

    /// Unambiguous delay range `N * T_s`: phases `w_sc * tau` wrap at 2*pi.
    pub fn tau_max_s(&self) -> f64 {
        self.n_subcarriers as f64 * self.sample_period_s()
    }

    pub fn band_center_hz(&self, band: usize) -> f64 {
        self.f0_hz + self.band_offsets[band] as f64 * self.bandwidth_hz / self.n_subcarriers as f64
    }

    pub(crate) fn check_band(&self, band: usize) -> Result<()> {
        if band >= self.l_bands() {
            return Err(Error::InvalidArgument(format!(
                "band index {band} out of range for {} bands",
                self.l_bands()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_delays(&self, delays_s: &[f64]) -> Result<()> {
        let max = self.tau_max_s();
        for (i, &d) in delays_s.iter().enumerate() {
            if !d.is_finite() || d < 0.0 || d >= max {
                return Err(Error::DelayOutOfRange {
                    index: i,
                    value_s: d,
                    max_s: max,
                });
            }
        }
        Ok(())
    }
}

/// The `K` complex gains and strictly increasing delays defining the channel.
///
/// Gains absorb the constant carrier phase `exp(-j w0 tau_k)` and the phase
/// offset from indexing subcarriers `0..N-1` instead of a symmetric range, so
/// delays are unaffected by either convention.
#[derive(Debug, Clone, PartialEq)]
pub struct MultipathChannel {
    gains: Vec<Complex64>,
    delays_s: Vec<f64>,
}

impl MultipathChannel {
    pub fn new(gains: Vec<Complex64>, delays_s: Vec<f64>, plan: &BandPlan) -> Result<Self> {
        if gains.is_empty() || gains.len() != delays_s.len() {
            return Err(Error::InvalidArgument(format!(
                "need K >= 1 gains and as many delays, got {} gains and {} delays",
                gains.len(),
                delays_s.len()
            )));
        }
        plan.check_delays(&delays_s)?;
        for w in delays_s.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidArgument(format!(
                    "delays must increase strictly, got {:.6e} then {:.6e}",
                    w[0], w[1]
                )));
            }
        }
        if let Some(k) = gains.iter().position(|g| g.norm() == 0.0) {
            return Err(Error::InvalidArgument(format!("gain[{k}] is exactly zero")));
        }
        Ok(Self { gains, delays_s })
    }

    pub fn k_paths(&self) -> usize {
        self.gains.len()
    }

    pub fn gains(&self) -> &[Complex64] {
        &self.gains
    }

    pub fn delays_s(&self) -> &[f64] {
        &self.delays_s
    }

    /// The smallest delay, taken as the line-of-sight component.
    pub fn los_delay_s(&self) -> f64 {
        self.delays_s[0]
    }
}

/// Per-path subcarrier rotations `Phi_k` and per-band rotations `theta_ik = Phi_k^{n_i}`.
#[derive(Debug, Clone)]
pub struct SteeringSet {
    phis: Vec<Complex64>,
    thetas: DMatrix<Complex64>,
}

impl SteeringSet {
    pub fn phis(&self) -> &[Complex64] {
        &self.phis
    }

    /// `L x K` matrix of band-dependent phase shifts.
    pub fn thetas(&self) -> &DMatrix<Complex64> {
        &self.thetas
    }
}

/// Steering phasors for the given delays: `Phi_k = exp(-j w_sc tau_k)`.
pub fn steering_from_delays(delays_s: &[f64], plan: &BandPlan) -> Result<SteeringSet> {
    plan.check_delays(delays_s)?;
    let w_sc = plan.subcarrier_spacing_rad();
    let phis: Vec<Complex64> = delays_s.iter().map(|&t| unit_phasor(-w_sc * t)).collect();
    let thetas = DMatrix::from_fn(plan.l_bands(), delays_s.len(), |i, k| {
        unit_phasor(-(plan.band_offsets()[i] as f64) * w_sc * delays_s[k])
    });
    Ok(SteeringSet { phis, thetas })
}

/// Vandermonde matrix with entry `(r, k) = phis[k]^r` for `r = 0..rows-1`.
pub fn vandermonde(phis: &[Complex64], rows: usize) -> Result<DMatrix<Complex64>> {
    if rows < 1 {
        return Err(Error::InvalidArgument(format!(
            "vandermonde needs at least one row, got {rows}"
        )));
    }
    let k = phis.len();
    let mut m = DMatrix::from_element(rows, k, Complex64::new(1.0, 0.0));
    for c in 0..k {
        for r in 1..rows {
            let v = m[(r - 1, c)] * phis[c];
            m[(r, c)] = v;
        }
    }
    Ok(m)
}

/// Noiseless frequency-domain channel samples `h_i` for one band,
/// `H_i[n] = sum_k a_k Phi_k^{n_i} Phi_k^n` for `n = 0..N-1`.
pub fn channel_samples(
    ch: &MultipathChannel,
    plan: &BandPlan,
    band: usize,
) -> Result<DVector<Complex64>> {
    plan.check_band(band)?;
    let n = plan.n_subcarriers();
    let w_sc = plan.subcarrier_spacing_rad();
    let n_i = plan.band_offsets()[band] as f64;
    let mut h = DVector::from_element(n, Complex64::default());
    for (k, (&gain, &tau)) in ch.gains().iter().zip(ch.delays_s()).enumerate() {
        let _ = k;
        for s in 0..n {
            h[s] += gain * unit_phasor(-(n_i + s as f64) * w_sc * tau);
        }
    }
    Ok(h)
}

/// Vertical stack of `M' Theta_i` blocks over all bands, where `M'` has the
/// given number of rows. With `rows = N` this is the full multiband manifold
/// `A(tau)`; estimators use it with `rows = P` and `rows = P-1`.
pub fn stacked_manifold(
    delays_s: &[f64],
    plan: &BandPlan,
    rows: usize,
) -> Result<DMatrix<Complex64>> {
    if rows < 1 {
        return Err(Error::InvalidArgument(format!(
            "stacked manifold needs at least one row per block, got {rows}"
        )));
    }
    plan.check_delays(delays_s)?;
    let k = delays_s.len();
    let l = plan.l_bands();
    let w_sc = plan.subcarrier_spacing_rad();
    let mut a = DMatrix::from_element(l * rows, k, Complex64::default());
    for (i, &n_i) in plan.band_offsets().iter().enumerate() {
        for (c, &tau) in delays_s.iter().enumerate() {
            for r in 0..rows {
                a[(i * rows + r, c)] = unit_phasor(-((n_i + r) as f64) * w_sc * tau);
            }
        }
    }
    Ok(a)
}
