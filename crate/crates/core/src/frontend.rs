//! Multibranch OFDM receiver simulation.
//!
//! Each of the `L` receiver branches observes one band through known pilots
//! and a known RF-chain response, plus additive white Gaussian noise.
//! Deconvolution divides both back out, leaving per-band channel estimates
//! with per-branch noise variances.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{channel_samples, BandPlan, MultipathChannel};

/// Known probing setup: pilots, per-branch RF-chain responses, cyclic prefix.
#[derive(Debug, Clone)]
pub struct ProbeConfig {
    pilots: DVector<Complex64>,
    rf_responses: Vec<DVector<Complex64>>,
    cp_duration_s: f64,
}

impl ProbeConfig {
    pub fn new(
        pilots: DVector<Complex64>,
        rf_responses: Vec<DVector<Complex64>>,
        cp_duration_s: f64,
        plan: &BandPlan,
    ) -> Result<Self> {
        let n = plan.n_subcarriers();
        if pilots.len() != n {
            return Err(Error::InvalidArgument(format!(
                "pilot vector has {} entries, plan has N = {n}",
                pilots.len()
            )));
        }
        let mag = pilots[0].norm();
        if mag <= 0.0 {
            return Err(Error::InvalidArgument("pilot magnitude must be positive".into()));
        }
        for (i, p) in pilots.iter().enumerate() {
            if (p.norm() - mag).abs() > 1e-9 * mag {
                return Err(Error::InvalidArgument(format!(
                    "pilot symbols must share one magnitude; entry {i} has |s| = {}",
                    p.norm()
                )));
            }
        }
        if rf_responses.len() != plan.l_bands() {
            return Err(Error::InvalidArgument(format!(
                "need one RF response per band: got {}, plan has L = {}",
                rf_responses.len(),
                plan.l_bands()
            )));
        }
        for (i, g) in rf_responses.iter().enumerate() {
            if g.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "RF response {i} has {} entries, plan has N = {n}",
                    g.len()
                )));
            }
            for (s, v) in g.iter().enumerate() {
                if v.norm() < 1e-6 {
                    return Err(Error::InvalidArgument(format!(
                        "RF response {i} is within 1e-6 of zero at subcarrier {s}"
                    )));
                }
            }
        }
        if !(cp_duration_s > 0.0) || cp_duration_s > plan.tau_max_s() {
            return Err(Error::InvalidArgument(format!(
                "cyclic prefix {cp_duration_s} s must lie in (0, N*T_s = {} s]",
                plan.tau_max_s()
            )));
        }
        Ok(Self {
            pilots,
            rf_responses,
            cp_duration_s,
        })
    }

    /// Unit pilots and flat unit RF chains, the shipped scenario default.
    pub fn flat(plan: &BandPlan) -> Self {
        Self::flat_with_pilot_magnitude(plan, 1.0).expect("unit probe is valid")
    }

    pub fn flat_with_pilot_magnitude(plan: &BandPlan, magnitude: f64) -> Result<Self> {
        let n = plan.n_subcarriers();
        let pilots = DVector::from_element(n, Complex64::new(magnitude, 0.0));
        let rf = vec![DVector::from_element(n, Complex64::new(1.0, 0.0)); plan.l_bands()];
        Self::new(pilots, rf, plan.tau_max_s(), plan)
    }

    pub fn pilots(&self) -> &DVector<Complex64> {
        &self.pilots
    }

    pub fn rf_responses(&self) -> &[DVector<Complex64>] {
        &self.rf_responses
    }

    pub fn cp_duration_s(&self) -> f64 {
        self.cp_duration_s
    }
}

/// Per-branch noise standard deviations of the deconvolved estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    sigmas: Vec<f64>,
}

impl NoiseModel {
    pub fn new(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.iter().any(|&s| !s.is_finite() || s < 0.0) {
            return Err(Error::InvalidArgument(
                "noise standard deviations must be finite and >= 0".into(),
            ));
        }
        Ok(Self { sigmas })
    }

    pub fn noiseless(l_bands: usize) -> Self {
        Self {
            sigmas: vec![0.0; l_bands],
        }
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }
}

/// Deconvolved per-band channel estimates with their noise levels.
#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    per_band: Vec<DVector<Complex64>>,
    sigmas: Vec<f64>,
    plan: BandPlan,
}

impl ChannelEstimate {
    pub fn new(per_band: Vec<DVector<Complex64>>, sigmas: Vec<f64>, plan: BandPlan) -> Result<Self> {
        if per_band.len() != plan.l_bands() || sigmas.len() != plan.l_bands() {
            return Err(Error::InvalidArgument(format!(
                "estimate needs {} bands, got {} vectors and {} sigmas",
                plan.l_bands(),
                per_band.len(),
                sigmas.len()
            )));
        }
        if per_band.iter().any(|h| h.len() != plan.n_subcarriers()) {
            return Err(Error::InvalidArgument(
                "every band estimate must have N entries".into(),
            ));
        }
        Ok(Self {
            per_band,
            sigmas,
            plan,
        })
    }

    pub fn per_band(&self) -> &[DVector<Complex64>] {
        &self.per_band
    }

    pub fn band(&self, i: usize) -> &DVector<Complex64> {
        &self.per_band[i]
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn plan(&self) -> &BandPlan {
        &self.plan
    }

    /// All bands stacked into one length `L*N` vector.
    pub fn stacked(&self) -> DVector<Complex64> {
        let n = self.plan.n_subcarriers();
        let mut v = DVector::from_element(self.per_band.len() * n, Complex64::default());
        for (i, h) in self.per_band.iter().enumerate() {
            v.rows_mut(i * n, n).copy_from(h);
        }
        v
    }
}

/// Mean of the stacked channel vectors over snapshots.
pub fn stacked_mean(snapshots: &[ChannelEstimate]) -> Result<DVector<Complex64>> {
    if snapshots.is_empty() {
        return Err(Error::InvalidArgument("need at least one snapshot".into()));
    }
    let mut acc = snapshots[0].stacked();
    for s in &snapshots[1..] {
        acc += s.stacked();
    }
    Ok(acc / Complex64::new(snapshots.len() as f64, 0.0))
}

fn complex_gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> Complex64 {
    // circularly symmetric: each quadrature carries half the variance
    let scale = sigma / std::f64::consts::SQRT_2;
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * scale, im * scale)
}

/// Received pilot-domain vectors `y_i = diag(s . g_i) h_i + q_i`, one per band.
///
/// Noise is drawn in the post-deconvolution domain with the variances of
/// `noise` and carried through the probe, so deconvolving the result yields
/// estimates whose noise is white with exactly those variances.
/// Deterministic for a fixed seed.
pub fn synthesize_received(
    ch: &MultipathChannel,
    plan: &BandPlan,
    probe: &ProbeConfig,
    noise: &NoiseModel,
    rng_seed: u64,
) -> Result<Vec<DVector<Complex64>>> {
    if noise.sigmas().len() != plan.l_bands() {
        return Err(Error::InvalidArgument(format!(
            "noise model has {} branches, plan has L = {}",
            noise.sigmas().len(),
            plan.l_bands()
        )));
    }
    if probe.pilots().len() != plan.n_subcarriers() {
        return Err(Error::InvalidArgument(
            "probe does not match the band plan".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let n = plan.n_subcarriers();
    let mut out = Vec::with_capacity(plan.l_bands());
    for band in 0..plan.l_bands() {
        let h = channel_samples(ch, plan, band)?;
        let sigma = noise.sigmas()[band];
        let g = &probe.rf_responses()[band];
        let mut y = DVector::from_element(n, Complex64::default());
        for s in 0..n {
            let noisy = h[s] + complex_gaussian(&mut rng, sigma);
            y[s] = probe.pilots()[s] * g[s] * noisy;
        }
        out.push(y);
    }
    Ok(out)
}

/// Divide pilots and RF responses back out: `h_i[n] = y_i[n] / (s_n g_i[n])`.
pub fn deconvolve(
    y: &[DVector<Complex64>],
    probe: &ProbeConfig,
    noise: &NoiseModel,
    plan: &BandPlan,
) -> Result<ChannelEstimate> {
    if y.len() != plan.l_bands() {
        return Err(Error::InvalidArgument(format!(
            "got {} received vectors, plan has L = {}",
            y.len(),
            plan.l_bands()
        )));
    }
    let n = plan.n_subcarriers();
    let mut per_band = Vec::with_capacity(y.len());
    for (band, yb) in y.iter().enumerate() {
        if yb.len() != n {
            return Err(Error::InvalidArgument(format!(
                "received vector {band} has {} entries, plan has N = {n}",
                yb.len()
            )));
        }
        let g = &probe.rf_responses()[band];
        let mut h = DVector::from_element(n, Complex64::default());
        for s in 0..n {
            let divisor = probe.pilots()[s] * g[s];
            let mag = divisor.norm();
            if mag < 1e-6 {
                return Err(Error::IllConditionedProbe {
                    band,
                    subcarrier: s,
                    magnitude: mag,
                });
            }
            h[s] = yb[s] / divisor;
        }
        per_band.push(h);
    }
    ChannelEstimate::new(per_band, noise.sigmas().to_vec(), plan.clone())
}

/// Noise levels matching per-band SNRs (dB), defined post-deconvolution:
/// `sigma_i^2 = P_i * 10^(-snr_i/10)` with `P_i` the mean per-subcarrier
/// power of the noiseless channel samples in band `i`.
pub fn sigma_from_snr(
    ch: &MultipathChannel,
    plan: &BandPlan,
    snr_db: &[f64],
) -> Result<NoiseModel> {
    if snr_db.len() != plan.l_bands() {
        return Err(Error::InvalidArgument(format!(
            "got {} SNR values, plan has L = {}",
            snr_db.len(),
            plan.l_bands()
        )));
    }
    if snr_db.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("SNR values must be finite".into()));
    }
    let n = plan.n_subcarriers() as f64;
    let mut sigmas = Vec::with_capacity(snr_db.len());
    for (band, &snr) in snr_db.iter().enumerate() {
        let h = channel_samples(ch, plan, band)?;
        let power = h.iter().map(|v| v.norm_sqr()).sum::<f64>() / n;
        sigmas.push((power * 10f64.powf(-snr / 10.0)).sqrt());
    }
    NoiseModel::new(sigmas)
}
