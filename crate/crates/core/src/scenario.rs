//! The default matched-line scenario and the closed forms that hold under the
//! tie-in `beta = gamma = epsilon = alpha + conj(alpha)`, `nu = upsilon = sigma`,
//! `delta = -gamma`, `vartheta = omega`, `vartheta1 = omega + theta`.

use num_complex::Complex64;

use crate::error::Result;
use crate::model::{
    matched_line_preset, ContinuousModel, CostModel, GaussianState, MeasurementModel, OscillatorModel, Units,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub continuous: ContinuousModel,
    pub init: GaussianState,
    pub dt: f64,
}

impl Scenario {
    pub fn discretize(&self) -> Result<(OscillatorModel, MeasurementModel, CostModel)> {
        let (m, meas) = matched_line_preset(&self.continuous, self.dt)?;
        let cost = self.continuous.discrete_cost(self.dt)?;
        Ok((m, meas, cost))
    }
}

/// Matched line with `gamma = 1`, `alpha = 0.5`, `sigma = 0.2`, `theta = 1`,
/// `omega = 0.5`, `Omega_final = 1`, `tau = 1`, `K = 100`, `hbar = 1`,
/// `z_0 = 1`, `Sigma_0 = 0.3`.
pub fn default_scenario() -> Scenario {
    Scenario { continuous: matched_line(1.0, 0.2, 1.0, 0.5, 1.0), init: GaussianState { z: Complex64::new(1.0, 0.0), sigma: 0.3 }, dt: 0.01 }
}

/// Matched-line rates for line coupling `g` (so `alpha = g / 2`) and noise `sigma`.
pub fn matched_line(g: f64, sigma: f64, theta: f64, omega: f64, omega_final: f64) -> ContinuousModel {
    let gc = Complex64::new(g, 0.0);
    ContinuousModel {
        alpha: Complex64::new(0.5 * g, 0.0),
        beta_rate: gc,
        gamma_rate: gc,
        delta_rate: -gc,
        epsilon_rate: g,
        sigma_rate: sigma,
        upsilon_rate: Complex64::new(sigma, 0.0),
        nu_rate: sigma,
        mu_rate: None,
        theta,
        omega_rate: omega,
        omega_final,
        tau: 1.0,
        units: Units::default(),
    }
}

/// `dSigma/dt = (sigma - g Sigma)(mu + g Sigma) / (mu + sigma)`.
pub fn matched_variance_rhs(g: f64, sigma: f64, mu: f64, big_sigma: f64) -> f64 {
    (sigma - g * big_sigma) * (mu + g * big_sigma) / (mu + sigma)
}

/// `-dOmega/dt = (omega - g Omega)(theta + g Omega) / (theta + omega)`.
pub fn matched_control_rhs(g: f64, theta: f64, omega: f64, big_omega: f64) -> f64 {
    (omega - g * big_omega) * (theta + g * big_omega) / (theta + omega)
}

/// Integrand of the matched-line minimal loss,
/// `Omega sigma + (g Omega - omega)^2 Sigma / (theta + omega)`.
pub fn matched_loss_integrand(g: f64, sigma: f64, theta: f64, omega: f64, big_omega: f64, big_sigma: f64) -> f64 {
    big_omega * sigma + (g * big_omega - omega).powi(2) * big_sigma / (theta + omega)
}
