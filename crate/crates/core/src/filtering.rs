//! Complex Kalman filter for the Gaussian a-posteriori state and its
//! Kalman–Bucy continuous-time limit.
//!
//! The posterior after `k` measurements is the circular Gaussian Glauber
//! distribution with mean `z_k` and variance `hbar * Sigma_k`:
//!
//! ```text
//! z_k     = phi z_{k-1} + beta u_{k-1} + kappa_k (eta_k - gamma z_{k-1} - delta u_{k-1})
//! Sigma_k = |phi|^2 Sigma_{k-1} + sigma - |kappa_k|^2 Psi_k
//! kappa_k = (phi conj(gamma) Sigma_{k-1} - upsilon) / Psi_k
//! Psi_k   = |gamma|^2 Sigma_{k-1} + nu + mu
//! ```
//!
//! The variance sweep does not depend on the measurement record.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{ContinuousModel, GaussianState, MeasurementModel, OscillatorModel};
use crate::ode;

/// Gain and dimensionless innovation variance of one filter step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gain {
    pub kappa: Complex64,
    pub psi: f64,
}

/// Shared Riccati gain kernel `(a conj(b) p - c) / (|b|^2 p + r)`.
///
/// Filtering uses `(phi, gamma, upsilon, nu + mu, Sigma)`; control uses
/// `(phi, beta, vartheta, vartheta1, Omega)`.
pub(crate) fn riccati_gain(a: Complex64, b: Complex64, c: Complex64, r: f64, p: f64) -> (Complex64, f64) {
    let denom = b.norm_sqr() * p + r;
    ((a * b.conj() * p - c) / denom, denom)
}

pub fn gain(sigma_prev: f64, m: &OscillatorModel, meas: &MeasurementModel) -> Result<Gain> {
    let (kappa, psi) = riccati_gain(m.phi, m.gamma, m.upsilon, m.nu + meas.mu, sigma_prev);
    if !(psi > 0.0) {
        return Err(Error::SingularInnovation { psi });
    }
    Ok(Gain { kappa, psi })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterState {
    pub k: usize,
    pub state: GaussianState,
    /// Gain used to reach this state; `None` at `k = 0`.
    pub gain: Option<Gain>,
}

impl FilterState {
    pub fn initial(state: GaussianState) -> Self {
        FilterState { k: 0, state, gain: None }
    }
}

/// Mean of the innovation `eta_k` given the previous posterior.
pub fn predicted_output(z_prev: Complex64, u: Complex64, m: &OscillatorModel) -> Complex64 {
    m.gamma * z_prev + m.delta * u
}

pub fn step(
    prev: &FilterState,
    u: Complex64,
    eta: Complex64,
    m: &OscillatorModel,
    meas: &MeasurementModel,
) -> Result<FilterState> {
    let g = gain(prev.state.sigma, m, meas)?;
    let z_prev = prev.state.z;
    let z = m.phi * z_prev + m.beta * u + g.kappa * (eta - predicted_output(z_prev, u, m));
    let sigma = m.phi.norm_sqr() * prev.state.sigma + m.sigma - g.kappa.norm_sqr() * g.psi;
    Ok(FilterState { k: prev.k + 1, state: GaussianState { z, sigma }, gain: Some(g) })
}

/// The one-shot statistic `x_hat = phi z + beta u + kappa (eta - gamma z - delta u)`,
/// evaluated in the regrouped form `(phi - kappa gamma) z + (beta - kappa delta) u + kappa eta`:
/// the estimate as a single linear measurement of the current output given `z_{k-1}`.
pub fn one_shot_estimate(
    z_prev: Complex64,
    u: Complex64,
    eta: Complex64,
    kappa: Complex64,
    m: &OscillatorModel,
) -> Complex64 {
    (m.phi - kappa * m.gamma) * z_prev + (m.beta - kappa * m.delta) * u + kappa * eta
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    /// Posterior states for `k = 0..=K`.
    pub states: Vec<FilterState>,
    /// `controls[k]` enters the step producing `states[k + 1]`.
    pub controls: Vec<Complex64>,
    /// `etas[k]` is the measurement `eta_{k+1}`.
    pub etas: Vec<Complex64>,
    pub model: OscillatorModel,
    pub meas: MeasurementModel,
}

impl FilterRun {
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    /// One-shot estimates `x_hat_k` for `k = 1..=K`.
    pub fn one_shot_estimates(&self) -> Vec<Complex64> {
        self.states
            .windows(2)
            .zip(self.controls.iter().zip(&self.etas))
            .map(|(w, (&u, &eta))| {
                let kappa = w[1].gain.map(|g| g.kappa).unwrap_or_default();
                one_shot_estimate(w[0].state.z, u, eta, kappa, &self.model)
            })
            .collect()
    }
}

pub fn run(
    model: &OscillatorModel,
    meas: &MeasurementModel,
    init: GaussianState,
    controls: &[Complex64],
    etas: &[Complex64],
) -> Result<FilterRun> {
    if controls.len() != etas.len() {
        return Err(Error::InvalidParameter(format!(
            "record length mismatch: {} controls vs {} measurements",
            controls.len(),
            etas.len()
        )));
    }
    let mut states = Vec::with_capacity(etas.len() + 1);
    states.push(FilterState::initial(init));
    for (&u, &eta) in controls.iter().zip(etas) {
        let next = step(states.last().expect("nonempty"), u, eta, model, meas)?;
        states.push(next);
    }
    Ok(FilterRun { states, controls: controls.to_vec(), etas: etas.to_vec(), model: *model, meas: *meas })
}

/// Data-free forward Riccati sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceProfile {
    /// `Sigma_k` for `k = 0..=K`.
    pub sigma: Vec<f64>,
    /// `gains[k - 1]` holds `(kappa_k, Psi_k)` for `k = 1..=K`.
    pub gains: Vec<Gain>,
}

impl VarianceProfile {
    pub fn horizon(&self) -> usize {
        self.gains.len()
    }

    /// `kappa_k` for `1 <= k <= K`.
    pub fn kappa(&self, k: usize) -> Complex64 {
        self.gains[k - 1].kappa
    }

    pub fn psi(&self, k: usize) -> f64 {
        self.gains[k - 1].psi
    }
}

pub fn variance_profile(
    model: &OscillatorModel,
    meas: &MeasurementModel,
    sigma0: f64,
    horizon: usize,
) -> Result<VarianceProfile> {
    let mut sigma = Vec::with_capacity(horizon + 1);
    let mut gains = Vec::with_capacity(horizon);
    sigma.push(sigma0);
    let phi2 = model.phi.norm_sqr();
    for _ in 0..horizon {
        let prev = *sigma.last().expect("nonempty");
        let g = gain(prev, model, meas)?;
        sigma.push(phi2 * prev + model.sigma - g.kappa.norm_sqr() * g.psi);
        gains.push(g);
    }
    Ok(VarianceProfile { sigma, gains })
}

/// Kalman–Bucy gain `kappa(t) = (conj(gamma) Sigma - upsilon) / nu1`.
pub fn continuous_gain(c: &ContinuousModel, nu1: f64, sigma: f64) -> Complex64 {
    (c.gamma_rate.conj() * sigma - c.upsilon_rate) / nu1
}

/// Right-hand side of `dSigma/dt = sigma - (alpha + conj alpha) Sigma - |kappa|^2 nu1`.
pub fn continuous_variance_rhs(c: &ContinuousModel, nu1: f64, sigma: f64) -> f64 {
    c.sigma_rate - c.damping() * sigma - continuous_gain(c, nu1, sigma).norm_sqr() * nu1
}

/// RK4 solution of the variance Riccati ODE at `t_n = n dt`, `n = 0..=steps`.
pub fn continuous_variance(c: &ContinuousModel, mu_rate: f64, sigma0: f64, dt: f64, steps: usize) -> Result<Vec<f64>> {
    let nu1 = checked_nu1(c, mu_rate)?;
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
    }
    Ok(ode::integrate_forward(|s| continuous_variance_rhs(c, nu1, s), sigma0, dt, steps))
}

fn checked_nu1(c: &ContinuousModel, mu_rate: f64) -> Result<f64> {
    if !(mu_rate >= 0.0) {
        return Err(Error::InvalidParameter(format!("mu_rate must be >= 0, got {mu_rate}")));
    }
    let nu1 = c.nu_rate + mu_rate;
    if !(nu1 > 0.0) {
        return Err(Error::SingularInnovation { psi: nu1 });
    }
    Ok(nu1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousFilterPath {
    pub dt: f64,
    /// Posterior at `t_n = n dt`.
    pub states: Vec<GaussianState>,
    /// `kappa(t_n)`.
    pub kappa: Vec<Complex64>,
}

/// Kalman–Bucy filter driven by measured increments `record[n] = eta(dt)` over
/// `[t_n, t_{n+1})`. The mean uses explicit Euler,
/// `dz = -alpha z dt + beta u dt + kappa (eta(dt) - (gamma z + delta u) dt)`,
/// and the variance the RK4 Riccati solution. `controls` may be empty (zero control).
pub fn continuous_filter(
    c: &ContinuousModel,
    mu_rate: f64,
    init: GaussianState,
    record: &[Complex64],
    controls: &[Complex64],
    dt: f64,
) -> Result<ContinuousFilterPath> {
    if !controls.is_empty() && controls.len() != record.len() {
        return Err(Error::InvalidParameter("controls must be empty or match the record length".into()));
    }
    let nu1 = checked_nu1(c, mu_rate)?;
    let sigma = continuous_variance(c, mu_rate, init.sigma, dt, record.len())?;
    let mut states = Vec::with_capacity(record.len() + 1);
    let mut kappa = Vec::with_capacity(record.len() + 1);
    let mut z = init.z;
    for (n, &eta) in record.iter().enumerate() {
        let u = controls.get(n).copied().unwrap_or_default();
        let k = continuous_gain(c, nu1, sigma[n]);
        states.push(GaussianState { z, sigma: sigma[n] });
        kappa.push(k);
        z += (-c.alpha * z + c.beta_rate * u) * dt + k * (eta - (c.gamma_rate * z + c.delta_rate * u) * dt);
    }
    let last = sigma[record.len()];
    states.push(GaussianState { z, sigma: last });
    kappa.push(continuous_gain(c, nu1, last));
    Ok(ContinuousFilterPath { dt, states, kappa })
}
