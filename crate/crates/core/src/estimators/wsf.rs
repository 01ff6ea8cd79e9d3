//! Weighted subspace fitting over the multiple shift-invariance structure,
//! solved by variable projection.
//!
//! From the signal basis `U`, selection matrices pick the first and last
//! `P-1` rows of every band block; stacking the selections gives `scriptU`,
//! which the parametric stack `scriptA(tau)` must match up to a `K x K`
//! linear factor. The linear factor is eliminated analytically and the
//! delays are refined by Levenberg-Marquardt on the projected residual.

use std::f64::consts::TAU;

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hankel::SignalBasis;
use crate::linalg;
use crate::model::{stacked_manifold, unit_phasor, BandPlan};

/// Ratio of `|R_kk|` diagonals below which the manifold is declared singular.
const MANIFOLD_RANK_TOL: f64 = 1e-12;

/// The data entering the subspace fit: selected basis rows and weights.
#[derive(Debug, Clone)]
pub struct WsfProblem {
    script_u: DMatrix<Complex64>,
    weights: DVector<f64>,
    weighted_u: DMatrix<Complex64>,
    exponents: Vec<f64>,
    plan: BandPlan,
    p_rows: usize,
    k_paths: usize,
}

impl WsfProblem {
    /// Selected basis rows, `2L(P-1) x K`.
    pub fn script_u(&self) -> &DMatrix<Complex64> {
        &self.script_u
    }

    /// Diagonal of the weighting matrix `W`.
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn plan(&self) -> &BandPlan {
        &self.plan
    }

    pub fn p_rows(&self) -> usize {
        self.p_rows
    }

    pub fn k_paths(&self) -> usize {
        self.k_paths
    }

    /// Same problem with every weight multiplied by `c > 0`.
    pub fn with_scaled_weights(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "weight scale must be positive, got {c}"
            )));
        }
        let weights = &self.weights * c;
        let weighted_u = apply_sqrt_weights(&weights, &self.script_u);
        Ok(Self {
            weights,
            weighted_u,
            ..self.clone()
        })
    }
}

fn apply_sqrt_weights(weights: &DVector<f64>, m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let mut out = m.clone();
    for r in 0..m.nrows() {
        let w = weights[r].sqrt();
        for c in 0..m.ncols() {
            out[(r, c)] *= Complex64::new(w, 0.0);
        }
    }
    out
}

/// Phase exponents `m` per row of `scriptA`: block `(i, s)` row `r` carries
/// `Phi^{n_i + s + r}`, bands stacked as `(0,1), (0,2), (1,1), (1,2), ...`.
fn row_exponents(plan: &BandPlan, p_rows: usize) -> Vec<f64> {
    let rows_per_sub = p_rows - 1;
    let mut m = Vec::with_capacity(2 * plan.l_bands() * rows_per_sub);
    for &n_i in plan.band_offsets() {
        for shift in 0..2usize {
            for r in 0..rows_per_sub {
                m.push((n_i + shift + r) as f64);
            }
        }
    }
    m
}

fn script_a_from_phases(exponents: &[f64], phases: &[f64]) -> DMatrix<Complex64> {
    DMatrix::from_fn(exponents.len(), phases.len(), |r, k| {
        unit_phasor(-exponents[r] * phases[k])
    })
}

/// Build the fitting problem from the signal basis and per-branch noise
/// levels: rows are selected per band, weights are `1/sigma_i^2` on both
/// sub-blocks of band `i`.
pub fn build_blocks(
    u: &SignalBasis,
    plan: &BandPlan,
    noise_sigmas: &[f64],
) -> Result<WsfProblem> {
    if noise_sigmas.len() != plan.l_bands() {
        return Err(Error::InvalidArgument(format!(
            "got {} noise levels, plan has L = {}",
            noise_sigmas.len(),
            plan.l_bands()
        )));
    }
    let sigma_max = noise_sigmas.iter().cloned().fold(0.0f64, f64::max);
    let band_weights: Vec<f64> = if sigma_max == 0.0 {
        vec![1.0; noise_sigmas.len()]
    } else {
        // sigma = 0 would mean an infinite weight; floor it relative to the
        // noisiest branch
        noise_sigmas
            .iter()
            .map(|&s| {
                let eff = s.max(1e-6 * sigma_max);
                1.0 / (eff * eff)
            })
            .collect()
    };
    build_blocks_with_band_weights(u, plan, &band_weights)
}

/// Build the fitting problem with `W = I` regardless of the noise levels.
pub fn build_blocks_unweighted(u: &SignalBasis, plan: &BandPlan) -> Result<WsfProblem> {
    let band_weights = vec![1.0; plan.l_bands()];
    build_blocks_with_band_weights(u, plan, &band_weights)
}

fn build_blocks_with_band_weights(
    u: &SignalBasis,
    plan: &BandPlan,
    band_weights: &[f64],
) -> Result<WsfProblem> {
    let p = u.p_rows();
    let k = u.k_paths();
    let l = u.l_bands();
    if plan.l_bands() != l {
        return Err(Error::InvalidArgument(format!(
            "basis has {l} bands, plan has {}",
            plan.l_bands()
        )));
    }
    if p < k + 1 {
        return Err(Error::InvalidArgument(format!(
            "need P - 1 >= K for the selection step, got P = {p}, K = {k}"
        )));
    }
    if band_weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::InvalidArgument("weights must be strictly positive".into()));
    }
    let basis = u.basis();
    let rows_per_sub = p - 1;
    let mut script_u = DMatrix::from_element(2 * l * rows_per_sub, k, Complex64::default());
    let mut weights = DVector::from_element(2 * l * rows_per_sub, 0.0f64);
    for band in 0..l {
        for shift in 0..2usize {
            let dst = (2 * band + shift) * rows_per_sub;
            for r in 0..rows_per_sub {
                weights[dst + r] = band_weights[band];
                for c in 0..k {
                    script_u[(dst + r, c)] = basis[(band * p + shift + r, c)];
                }
            }
        }
    }
    let weighted_u = apply_sqrt_weights(&weights, &script_u);
    Ok(WsfProblem {
        script_u,
        weights,
        weighted_u,
        exponents: row_exponents(plan, p),
        plan: plan.clone(),
        p_rows: p,
        k_paths: k,
    })
}

/// One evaluation of the projected residual at a set of phases.
struct Eval {
    cost: f64,
    b: DMatrix<Complex64>,
    q: DMatrix<Complex64>,
    r: DMatrix<Complex64>,
    coeffs: DMatrix<Complex64>,
    residual: DMatrix<Complex64>,
}

fn evaluate(prob: &WsfProblem, phases: &[f64]) -> Result<Eval> {
    let a = script_a_from_phases(&prob.exponents, phases);
    let b = apply_sqrt_weights(&prob.weights, &a);
    let (q, r) = linalg::thin_qr(&b);
    let ratio = linalg::diag_ratio(&r);
    if ratio < MANIFOLD_RANK_TOL {
        return Err(Error::SingularManifold { ratio });
    }
    let qtu = q.adjoint() * &prob.weighted_u;
    let coeffs = r
        .solve_upper_triangular(&qtu)
        .ok_or(Error::SingularManifold { ratio })?;
    let residual = &prob.weighted_u - &q * &qtu;
    let cost = residual.norm_squared();
    Ok(Eval {
        cost,
        b,
        q,
        r,
        coeffs,
        residual,
    })
}

/// Evaluate the subspace-fitting objective at the given delays: the exact
/// minimum over the linear factor of `||W^{1/2}(scriptU - scriptA T^{-1})||_F^2`,
/// returned with the projected residual matrix.
pub fn wsf_cost(delays_s: &[f64], prob: &WsfProblem) -> Result<(f64, DMatrix<Complex64>)> {
    prob.plan.check_delays(delays_s)?;
    if delays_s.len() != prob.k_paths {
        return Err(Error::InvalidArgument(format!(
            "problem has K = {}, got {} delays",
            prob.k_paths,
            delays_s.len()
        )));
    }
    let w_sc = prob.plan.subcarrier_spacing_rad();
    let phases: Vec<f64> = delays_s.iter().map(|&t| (w_sc * t).rem_euclid(TAU)).collect();
    let eval = evaluate(prob, &phases)?;
    Ok((eval.cost, eval.residual))
}

/// Which variable-projection Jacobian to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JacobianKind {
    /// Kaufman approximation: drops the second projector term. One
    /// triangular solve cheaper per step, same gradient at the solution.
    #[default]
    Kaufman,
    /// Exact Golub-Pereyra Jacobian.
    GolubPereyra,
}

#[derive(Debug, Clone)]
pub struct VarproOptions {
    pub max_iterations: usize,
    /// Relative cost decrease below which the iteration stops.
    pub rel_cost_tol: f64,
    /// Step norm relative to the parameter norm below which it stops.
    pub step_tol: f64,
    pub damping_init: f64,
    pub jacobian: JacobianKind,
}

impl Default for VarproOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            rel_cost_tol: 1e-12,
            step_tol: 1e-12,
            damping_init: 1e-3,
            jacobian: JacobianKind::Kaufman,
        }
    }
}

/// Outcome of the fit: delays, recovered gains, and solver diagnostics.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub delays_s: Vec<f64>,
    pub gains: Vec<Complex64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The minimizing linear factor of the objective, `K x K`.
    pub linear_coeffs: DMatrix<Complex64>,
}

/// Complex Jacobian of the flattened residual with respect to the phases.
fn residual_jacobian(prob: &WsfProblem, eval: &Eval, kind: JacobianKind) -> DMatrix<Complex64> {
    let m_rows = eval.b.nrows();
    let k = prob.k_paths;
    let mut jac = DMatrix::from_element(m_rows * k, k, Complex64::default());
    for p in 0..k {
        // only column p of scriptA depends on phase p:
        // d B[:, p] / d phi_p = -j * m(row) * B[row, p]
        let mut d = DVector::from_element(m_rows, Complex64::default());
        for r in 0..m_rows {
            d[r] = Complex64::new(0.0, -prob.exponents[r]) * eval.b[(r, p)];
        }
        let proj_d = &d - &eval.q * (eval.q.adjoint() * &d);
        // Kaufman term: -(I - P_B) dB C, rank one
        for c in 0..k {
            let coef = eval.coeffs[(p, c)];
            for r in 0..m_rows {
                jac[(c * m_rows + r, p)] = -proj_d[r] * coef;
            }
        }
        if kind == JacobianKind::GolubPereyra {
            // second term: -(B^+)^H (dB)^H residual, also rank one
            let mut e = DVector::from_element(k, Complex64::default());
            e[p] = Complex64::new(1.0, 0.0);
            let y = eval
                .r
                .adjoint()
                .solve_lower_triangular(&e)
                .expect("R has full rank at an evaluated point");
            let pinv_col = &eval.q * y;
            let row = d.adjoint() * &eval.residual; // 1 x K
            for c in 0..k {
                let coef = row[(0, c)];
                for r in 0..m_rows {
                    jac[(c * m_rows + r, p)] -= pinv_col[r] * coef;
                }
            }
        }
    }
    jac
}

/// Minimize the subspace-fitting objective over the delays by
/// Levenberg-Marquardt on the variable-projection residual, then recover the
/// gains by least squares against the stacked channel estimate.
///
/// Non-convergence within the iteration budget yields `converged = false`
/// rather than an error; a singular manifold at the initial point is an
/// error.
pub fn varpro_solve(
    prob: &WsfProblem,
    stacked_channel: &DVector<Complex64>,
    init_delays_s: &[f64],
    opts: &VarproOptions,
) -> Result<FitResult> {
    prob.plan.check_delays(init_delays_s)?;
    if init_delays_s.len() != prob.k_paths {
        return Err(Error::InvalidArgument(format!(
            "problem has K = {}, got {} initial delays",
            prob.k_paths,
            init_delays_s.len()
        )));
    }
    let w_sc = prob.plan.subcarrier_spacing_rad();
    let mut phases: Vec<f64> = init_delays_s
        .iter()
        .map(|&t| (w_sc * t).rem_euclid(TAU))
        .collect();

    let mut eval = evaluate(prob, &phases)?;
    let cost_floor = 1e-18 * prob.weighted_u.norm_squared();

    let mut lambda = opts.damping_init;
    let mut iterations = 0usize;
    let mut converged = eval.cost <= cost_floor;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let jac = residual_jacobian(prob, &eval, opts.jacobian);

        // real normal equations over the real parameters
        let k = prob.k_paths;
        let mut h = DMatrix::from_element(k, k, 0.0f64);
        for a in 0..k {
            for b in a..k {
                let mut acc = 0.0;
                for r in 0..jac.nrows() {
                    acc += (jac[(r, a)].conj() * jac[(r, b)]).re;
                }
                h[(a, b)] = acc;
                h[(b, a)] = acc;
            }
        }
        let mut g = DVector::from_element(k, 0.0f64);
        let res_flat: Vec<Complex64> = {
            let m_rows = eval.residual.nrows();
            let mut v = Vec::with_capacity(m_rows * k);
            for c in 0..k {
                for r in 0..m_rows {
                    v.push(eval.residual[(r, c)]);
                }
            }
            v
        };
        for a in 0..k {
            let mut acc = 0.0;
            for (r, &rv) in res_flat.iter().enumerate() {
                acc += (jac[(r, a)].conj() * rv).re;
            }
            g[a] = acc;
        }

        // damped step; retry with larger damping on reject
        let mut stepped = false;
        while lambda <= 1e12 {
            let mut damped = h.clone();
            for d in 0..k {
                let base = if h[(d, d)] > 0.0 { h[(d, d)] } else { 1.0 };
                damped[(d, d)] += lambda * base;
            }
            let delta = match Cholesky::new(damped) {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = phases
                .iter()
                .zip(delta.iter())
                .map(|(&p, &d)| (p + d).rem_euclid(TAU))
                .collect();
            match evaluate(prob, &trial) {
                Ok(trial_eval) if trial_eval.cost < eval.cost => {
                    let prev_cost = eval.cost;
                    let step_norm = delta.norm();
                    let phase_norm = phases.iter().map(|p| p * p).sum::<f64>().sqrt();
                    phases = trial;
                    eval = trial_eval;
                    lambda = (lambda / 10.0).max(1e-12);
                    stepped = true;
                    let rel_decrease = (prev_cost - eval.cost) / prev_cost.max(f64::MIN_POSITIVE);
                    if eval.cost <= cost_floor
                        || rel_decrease < opts.rel_cost_tol
                        || step_norm < opts.step_tol * phase_norm.max(f64::MIN_POSITIVE)
                    {
                        converged = true;
                    }
                    break;
                }
                _ => {
                    lambda *= 10.0;
                }
            }
        }
        if !stepped {
            // no acceptable step at any damping: stationary within precision
            converged = true;
        }
    }

    // report delays in ascending order and re-evaluate in that order
    let mut order: Vec<usize> = (0..prob.k_paths).collect();
    order.sort_by(|&a, &b| phases[a].partial_cmp(&phases[b]).unwrap());
    let sorted_phases: Vec<f64> = order.iter().map(|&i| phases[i]).collect();
    let final_eval = evaluate(prob, &sorted_phases)?;
    let delays_s: Vec<f64> = sorted_phases.iter().map(|&p| p / w_sc).collect();

    let gains = recover_gains(stacked_channel, &delays_s, &prob.plan)?;
    Ok(FitResult {
        delays_s,
        gains,
        cost: final_eval.cost,
        iterations,
        converged,
        linear_coeffs: final_eval.coeffs,
    })
}

/// Least-squares gains on the full stacked model: `alpha = A(tau)^+ h`.
pub fn recover_gains(
    stacked_channel: &DVector<Complex64>,
    delays_s: &[f64],
    plan: &BandPlan,
) -> Result<Vec<Complex64>> {
    let n = plan.n_subcarriers();
    if stacked_channel.len() != n * plan.l_bands() {
        return Err(Error::InvalidArgument(format!(
            "stacked channel has {} entries, plan implies {}",
            stacked_channel.len(),
            n * plan.l_bands()
        )));
    }
    let a = stacked_manifold(delays_s, plan, n)?;
    let rhs = DMatrix::from_column_slice(stacked_channel.len(), 1, stacked_channel.as_slice());
    let sol = linalg::least_squares(&a, &rhs)?;
    Ok(sol.column(0).iter().copied().collect())
}
