//! Model parameters for the discrete and continuous one-mode oscillator,
//! the Heisenberg admissibility gate, and the named presets.
//!
//! Variances are carried dimensionless throughout: a physical variance is
//! `hbar * Sigma`. The Boltzmann constant is fixed to 1, so temperatures are
//! supplied in energy units.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default slack on the minimum eigenvalue of the admissibility matrix.
pub const ADMISSIBILITY_TOLERANCE: f64 = 1e-12;

/// Default cap on the thermal occupation returned by [`thermal_preset`].
pub const THERMAL_OCCUPATION_CAP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub hbar: f64,
}

impl Units {
    pub fn new(hbar: f64) -> Result<Self> {
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::InvalidParameter(format!("hbar must be positive, got {hbar}")));
        }
        Ok(Units { hbar })
    }
}

impl Default for Units {
    fn default() -> Self {
        Units { hbar: 1.0 }
    }
}

/// One-step dynamics `x_k = phi x_{k-1} + beta u_{k-1} + v_k` and output
/// `y_k = gamma x_{k-1} + delta u_{k-1} + w_k` with noise covariances
/// `E|v|^2 = hbar sigma`, `E[v conj(w)] = -hbar upsilon`, `E|w|^2 = hbar nu`
/// and output commutator `[y_k, y_k*] = epsilon hbar`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillatorModel {
    pub phi: Complex64,
    pub beta: Complex64,
    pub gamma: Complex64,
    pub delta: Complex64,
    pub epsilon: f64,
    pub sigma: f64,
    pub upsilon: Complex64,
    pub nu: f64,
    pub units: Units,
}

/// Added noise of the indirect (heterodyne-type) output measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementModel {
    pub mu: f64,
}

impl MeasurementModel {
    /// The Heisenberg-minimal measurement noise `mu = max(0, epsilon)`.
    pub fn optimal(epsilon: f64) -> Self {
        MeasurementModel { mu: epsilon.max(0.0) }
    }
}

/// Quadratic loss `omega x*x - 2 Re(vartheta conj(u) x) + vartheta1 |u|^2`
/// per step and `Omega_final x*x` at the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub omega_final: f64,
    pub omega: f64,
    pub vartheta: Complex64,
    pub vartheta1: f64,
    pub horizon: usize,
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_final >= 0.0) {
            return Err(Error::InvalidParameter("Omega_final must be >= 0".into()));
        }
        if !(self.omega >= 0.0) {
            return Err(Error::InvalidParameter("omega must be >= 0".into()));
        }
        if !(self.vartheta1 > 0.0) {
            return Err(Error::InvalidParameter("vartheta1 must be > 0".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon K must be positive".into()));
        }
        Ok(())
    }
}

/// Continuous-time oscillator `dx + alpha x dt = beta u dt + v(dt)`,
/// `y(dt) = gamma x dt + delta u dt + w(dt)`, with per-unit-time noise rates and
/// the matched-line control criterion weights `theta` and `omega`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousModel {
    pub alpha: Complex64,
    pub beta_rate: Complex64,
    pub gamma_rate: Complex64,
    pub delta_rate: Complex64,
    pub epsilon_rate: f64,
    pub sigma_rate: f64,
    pub upsilon_rate: Complex64,
    pub nu_rate: f64,
    /// Measurement noise rate; `None` selects the optimal `max(0, epsilon_rate)`.
    pub mu_rate: Option<f64>,
    pub theta: f64,
    pub omega_rate: f64,
    pub omega_final: f64,
    pub tau: f64,
    pub units: Units,
}

/// Continuous cost rates; `vartheta = omega`, `vartheta1 = omega + theta` for
/// the tracking criterion `theta |u|^2 + omega |x - u|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousCost {
    pub omega_final: f64,
    pub omega: f64,
    pub vartheta: Complex64,
    pub vartheta1: f64,
}

impl ContinuousModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.theta >= 0.0 && self.omega_rate >= 0.0 && self.omega_final >= 0.0) {
            return Err(Error::InvalidParameter("cost weights must be nonnegative".into()));
        }
        if let Some(mu) = self.mu_rate {
            if !(mu >= 0.0) {
                return Err(Error::InvalidParameter("mu_rate must be >= 0".into()));
            }
        }
        Ok(())
    }

    /// `alpha + conj(alpha)`.
    pub fn damping(&self) -> f64 {
        2.0 * self.alpha.re
    }

    pub fn mu_rate(&self) -> f64 {
        self.mu_rate.unwrap_or(self.epsilon_rate.max(0.0))
    }

    /// `nu + mu`, the effective output noise rate.
    pub fn nu1_rate(&self) -> f64 {
        self.nu_rate + self.mu_rate()
    }

    pub fn cost_rates(&self) -> ContinuousCost {
        ContinuousCost {
            omega_final: self.omega_final,
            omega: self.omega_rate,
            vartheta: Complex64::new(self.omega_rate, 0.0),
            vartheta1: self.omega_rate + self.theta,
        }
    }

    /// Number of steps of size `dt` spanning `[0, tau]`.
    pub fn steps(&self, dt: f64) -> Result<usize> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
        }
        let k = (self.tau / dt).round();
        if k < 1.0 || ((k * dt - self.tau) / self.tau).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "dt = {dt} does not divide tau = {}",
                self.tau
            )));
        }
        Ok(k as usize)
    }

    /// Discrete cost: rates scale by `dt`, the terminal weight does not.
    pub fn discrete_cost(&self, dt: f64) -> Result<CostModel> {
        let horizon = self.steps(dt)?;
        let c = self.cost_rates();
        let cost = CostModel {
            omega_final: c.omega_final,
            omega: c.omega * dt,
            vartheta: c.vartheta * dt,
            vartheta1: c.vartheta1 * dt,
            horizon,
        };
        cost.validate()?;
        Ok(cost)
    }
}

/// Circular Gaussian posterior: mean `z`, physical variance `hbar * sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianState {
    pub z: Complex64,
    pub sigma: f64,
}

impl GaussianState {
    pub fn new(z: Complex64, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("Sigma must be >= 0, got {sigma}")));
        }
        Ok(GaussianState { z, sigma })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    /// Smallest eigenvalue of the noise-minus-commutator matrix.
    pub min_eigenvalue: f64,
    /// Smallest eigenvalue of the noise covariance `[[sigma, -upsilon], [-conj(upsilon), nu]]`.
    pub noise_min_eigenvalue: f64,
    /// `mu - max(0, epsilon)`.
    pub mu_slack: f64,
    pub tolerance: f64,
}

impl AdmissibilityReport {
    pub fn into_result(self) -> Result<Self> {
        if self.admissible {
            Ok(self)
        } else {
            Err(Error::Inadmissible(self))
        }
    }
}

/// Smallest eigenvalue of the Hermitian matrix `[[a, b], [conj(b), d]]`.
pub fn hermitian_2x2_min_eigenvalue(a: f64, b: Complex64, d: f64) -> f64 {
    let mean = 0.5 * (a + d);
    let radius = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    let largest = mean + radius;
    if largest > 0.0 {
        // det / largest avoids cancellation when the matrix is nearly singular.
        (a * d - b.norm_sqr()) / largest
    } else {
        mean - radius
    }
}

impl OscillatorModel {
    /// The Hermitian matrix `[[sigma, -upsilon], [-conj(upsilon), nu]]` minus
    /// `[[|phi|^2 - 1, phi conj(gamma)], [gamma conj(phi), |gamma|^2 - epsilon]]`,
    /// returned as `(m11, m12, m22)`.
    pub fn constraint_matrix(&self) -> (f64, Complex64, f64) {
        let m11 = self.sigma - (self.phi.norm_sqr() - 1.0);
        let m12 = -self.upsilon - self.phi * self.gamma.conj();
        let m22 = self.nu - (self.gamma.norm_sqr() - self.epsilon);
        (m11, m12, m22)
    }

    /// Rotates the output channel `y -> e^{i theta} y`: `gamma` and `delta` pick up
    /// `e^{i theta}`, the cross covariance `upsilon` picks up `e^{-i theta}`.
    /// The constraint matrix changes by a diagonal unitary, so admissibility is unchanged.
    pub fn rotated(&self, theta: f64) -> Self {
        let r = Complex64::from_polar(1.0, theta);
        OscillatorModel {
            gamma: r * self.gamma,
            delta: r * self.delta,
            upsilon: r.conj() * self.upsilon,
            ..*self
        }
    }
}

/// Admissibility gate: the noise covariance must be positive semidefinite and
/// dominate the commutator matrix, and `mu >= max(0, epsilon)`.
pub fn validate_model(m: &OscillatorModel, meas: &MeasurementModel) -> AdmissibilityReport {
    validate_model_with_tolerance(m, meas, ADMISSIBILITY_TOLERANCE)
}

pub fn validate_model_with_tolerance(
    m: &OscillatorModel,
    meas: &MeasurementModel,
    tolerance: f64,
) -> AdmissibilityReport {
    let (a, b, d) = m.constraint_matrix();
    let min_eigenvalue = hermitian_2x2_min_eigenvalue(a, b, d);
    let noise_min_eigenvalue = hermitian_2x2_min_eigenvalue(m.sigma, -m.upsilon, m.nu);
    let mu_slack = meas.mu - m.epsilon.max(0.0);
    let admissible = min_eigenvalue >= -tolerance && noise_min_eigenvalue >= -tolerance && mu_slack >= -tolerance;
    AdmissibilityReport { admissible, min_eigenvalue, noise_min_eigenvalue, mu_slack, tolerance }
}

/// Least-noisy admissible model over the given dynamics: the noise covariance is
/// the commutator matrix plus `slack = (s11, s12, s22)` (which must be PSD), lifted
/// by a multiple of the identity where needed to stay PSD itself. The
/// measurement noise is the optimal `max(0, epsilon)`.
pub fn admissible_from_parts(
    phi: Complex64,
    beta: Complex64,
    gamma: Complex64,
    delta: Complex64,
    epsilon: f64,
    slack: (f64, Complex64, f64),
    units: Units,
) -> Result<(OscillatorModel, MeasurementModel)> {
    let (s11, s12, s22) = slack;
    if hermitian_2x2_min_eigenvalue(s11, s12, s22) < 0.0 {
        return Err(Error::InvalidParameter("slack matrix must be positive semidefinite".into()));
    }
    let n11 = phi.norm_sqr() - 1.0 + s11;
    let n12 = phi * gamma.conj() + s12;
    let n22 = gamma.norm_sqr() - epsilon + s22;
    let lift = (-hermitian_2x2_min_eigenvalue(n11, n12, n22)).max(0.0);
    let model = OscillatorModel {
        phi,
        beta,
        gamma,
        delta,
        epsilon,
        sigma: n11 + lift,
        upsilon: -n12,
        nu: n22 + lift,
        units,
    };
    Ok((model, MeasurementModel::optimal(epsilon)))
}

/// Matched-line oscillator at thermal equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalPreset {
    pub model: ContinuousModel,
    pub initial: GaussianState,
    /// Equilibrium occupation `(exp(hbar Omega / T) - 1)^{-1}` after capping.
    pub occupation: f64,
    /// Set when the occupation hit the cap.
    pub saturated: bool,
}

/// Builds the matched transmission-line model at temperature `temperature`:
/// `alpha = gamma/2`, `beta = gamma = epsilon = gamma_line`, `delta = -gamma_line`,
/// `sigma = upsilon = nu = gamma_line * n` with the occupation
/// `n = (exp(hbar Omega / T) - 1)^{-1}`. The initial state carries `Sigma = n`;
/// for negative temperatures `n < 0` is not a variance and the stationary
/// `Sigma = 0` is returned instead.
///
/// Cost weights default to `theta = 1`, `omega = 0`, `Omega_final = 1`, `tau = 1`.
pub fn thermal_preset(
    omega_osc: f64,
    temperature: f64,
    gamma_line: f64,
    units: Units,
) -> Result<ThermalPreset> {
    thermal_preset_with_cap(omega_osc, temperature, gamma_line, units, THERMAL_OCCUPATION_CAP)
}

pub fn thermal_preset_with_cap(
    omega_osc: f64,
    temperature: f64,
    gamma_line: f64,
    units: Units,
    cap: f64,
) -> Result<ThermalPreset> {
    if temperature == 0.0 || !temperature.is_finite() {
        return Err(Error::InvalidParameter("temperature must be nonzero and finite".into()));
    }
    if gamma_line == 0.0 {
        return Err(Error::InvalidParameter("line coupling gamma must be nonzero".into()));
    }
    if !(omega_osc > 0.0) {
        return Err(Error::InvalidParameter("oscillator frequency must be positive".into()));
    }
    let x = units.hbar * omega_osc / temperature;
    let mut occupation = 1.0 / x.exp_m1();
    let mut saturated = false;
    if !(occupation.abs() <= cap) {
        occupation = cap.copysign(occupation);
        saturated = true;
    }
    let sigma = gamma_line * occupation;
    let g = Complex64::new(gamma_line, 0.0);
    let model = ContinuousModel {
        alpha: Complex64::new(0.5 * gamma_line, 0.0),
        beta_rate: g,
        gamma_rate: g,
        delta_rate: -g,
        epsilon_rate: gamma_line,
        sigma_rate: sigma,
        upsilon_rate: Complex64::new(sigma, 0.0),
        nu_rate: sigma,
        mu_rate: None,
        theta: 1.0,
        omega_rate: 0.0,
        omega_final: 1.0,
        tau: 1.0,
        units,
    };
    let initial = GaussianState::new(Complex64::new(0.0, 0.0), occupation.max(0.0))?;
    Ok(ThermalPreset { model, initial, occupation, saturated })
}

/// How `phi` is obtained from the damping `alpha` over one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discretization {
    /// `|phi|^2 = 1 - (alpha + conj(alpha)) dt` exactly, phase `e^{-i Im(alpha) dt}`.
    /// Keeps `[v_k, v_k*] = (1 - |phi|^2) hbar` equal to the continuous
    /// `(alpha + conj(alpha)) hbar dt`, so matched models stay admissible.
    #[default]
    CommutatorPreserving,
    /// `phi = 1 - alpha dt`. Agrees to first order but breaks the
    /// admissibility constraint at `O(dt^2)` in the eigenvalues.
    Euler,
}

pub fn matched_line_preset(c: &ContinuousModel, dt: f64) -> Result<(OscillatorModel, MeasurementModel)> {
    matched_line_preset_with(c, dt, Discretization::default())
}

/// Discretizes a continuous model: rates scale by `dt`, `phi` follows `rule`,
/// and `mu = mu_rate * dt` (optimal `max(0, epsilon)` unless overridden).
pub fn matched_line_preset_with(
    c: &ContinuousModel,
    dt: f64,
    rule: Discretization,
) -> Result<(OscillatorModel, MeasurementModel)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
    }
    let phi = match rule {
        Discretization::Euler => Complex64::new(1.0, 0.0) - c.alpha * dt,
        Discretization::CommutatorPreserving => {
            let modulus_sq = 1.0 - c.damping() * dt;
            if modulus_sq < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "dt = {dt} too large for damping {}",
                    c.damping()
                )));
            }
            Complex64::from_polar(modulus_sq.sqrt(), -c.alpha.im * dt)
        }
    };
    let model = OscillatorModel {
        phi,
        beta: c.beta_rate * dt,
        gamma: c.gamma_rate * dt,
        delta: c.delta_rate * dt,
        epsilon: c.epsilon_rate * dt,
        sigma: c.sigma_rate * dt,
        upsilon: c.upsilon_rate * dt,
        nu: c.nu_rate * dt,
        units: c.units,
    };
    let meas = MeasurementModel { mu: c.mu_rate() * dt };
    Ok((model, meas))
}

/// Flat JSON layout of a discrete model file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub phi_re: f64,
    pub phi_im: f64,
    pub beta_re: f64,
    pub beta_im: f64,
    pub gamma_re: f64,
    pub gamma_im: f64,
    pub delta_re: f64,
    pub delta_im: f64,
    pub epsilon: f64,
    pub sigma: f64,
    pub upsilon_re: f64,
    pub upsilon_im: f64,
    pub nu: f64,
    pub mu: f64,
    pub hbar: f64,
}

impl ModelFile {
    pub fn from_model(m: &OscillatorModel, meas: &MeasurementModel) -> Self {
        ModelFile {
            phi_re: m.phi.re,
            phi_im: m.phi.im,
            beta_re: m.beta.re,
            beta_im: m.beta.im,
            gamma_re: m.gamma.re,
            gamma_im: m.gamma.im,
            delta_re: m.delta.re,
            delta_im: m.delta.im,
            epsilon: m.epsilon,
            sigma: m.sigma,
            upsilon_re: m.upsilon.re,
            upsilon_im: m.upsilon.im,
            nu: m.nu,
            mu: meas.mu,
            hbar: m.units.hbar,
        }
    }

    pub fn into_model(self) -> Result<(OscillatorModel, MeasurementModel)> {
        let units = Units::new(self.hbar)?;
        let model = OscillatorModel {
            phi: Complex64::new(self.phi_re, self.phi_im),
            beta: Complex64::new(self.beta_re, self.beta_im),
            gamma: Complex64::new(self.gamma_re, self.gamma_im),
            delta: Complex64::new(self.delta_re, self.delta_im),
            epsilon: self.epsilon,
            sigma: self.sigma,
            upsilon: Complex64::new(self.upsilon_re, self.upsilon_im),
            nu: self.nu,
            units,
        };
        Ok((model, MeasurementModel { mu: self.mu }))
    }
}

fn default_omega_final() -> f64 {
    1.0
}

/// Flat JSON layout of a continuous model file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousModelFile {
    pub alpha_re: f64,
    pub alpha_im: f64,
    pub beta_rate_re: f64,
    pub beta_rate_im: f64,
    pub gamma_rate_re: f64,
    pub gamma_rate_im: f64,
    pub delta_rate_re: f64,
    pub delta_rate_im: f64,
    pub epsilon_rate: f64,
    pub sigma_rate: f64,
    pub upsilon_rate_re: f64,
    pub upsilon_rate_im: f64,
    pub nu_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_rate: Option<f64>,
    pub tau: f64,
    pub theta: f64,
    pub omega: f64,
    #[serde(rename = "Omega_final", default = "default_omega_final")]
    pub omega_final: f64,
    pub hbar: f64,
}

impl ContinuousModelFile {
    pub fn from_model(c: &ContinuousModel) -> Self {
        ContinuousModelFile {
            alpha_re: c.alpha.re,
            alpha_im: c.alpha.im,
            beta_rate_re: c.beta_rate.re,
            beta_rate_im: c.beta_rate.im,
            gamma_rate_re: c.gamma_rate.re,
            gamma_rate_im: c.gamma_rate.im,
            delta_rate_re: c.delta_rate.re,
            delta_rate_im: c.delta_rate.im,
            epsilon_rate: c.epsilon_rate,
            sigma_rate: c.sigma_rate,
            upsilon_rate_re: c.upsilon_rate.re,
            upsilon_rate_im: c.upsilon_rate.im,
            nu_rate: c.nu_rate,
            mu_rate: c.mu_rate,
            tau: c.tau,
            theta: c.theta,
            omega: c.omega_rate,
            omega_final: c.omega_final,
            hbar: c.units.hbar,
        }
    }

    pub fn into_model(self) -> Result<ContinuousModel> {
        let c = ContinuousModel {
            alpha: Complex64::new(self.alpha_re, self.alpha_im),
            beta_rate: Complex64::new(self.beta_rate_re, self.beta_rate_im),
            gamma_rate: Complex64::new(self.gamma_rate_re, self.gamma_rate_im),
            delta_rate: Complex64::new(self.delta_rate_re, self.delta_rate_im),
            epsilon_rate: self.epsilon_rate,
            sigma_rate: self.sigma_rate,
            upsilon_rate: Complex64::new(self.upsilon_rate_re, self.upsilon_rate_im),
            nu_rate: self.nu_rate,
            mu_rate: self.mu_rate,
            theta: self.theta,
            omega_rate: self.omega,
            omega_final: self.omega_final,
            tau: self.tau,
            units: Units::new(self.hbar)?,
        };
        c.validate()?;
        Ok(c)
    }
}

/// Flat JSON layout of a cost file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostFile {
    #[serde(rename = "Omega_final")]
    pub omega_final: f64,
    pub omega: f64,
    pub vartheta_re: f64,
    pub vartheta_im: f64,
    pub vartheta1: f64,
    #[serde(rename = "horizon_K")]
    pub horizon_k: usize,
}

impl CostFile {
    pub fn from_cost(c: &CostModel) -> Self {
        CostFile {
            omega_final: c.omega_final,
            omega: c.omega,
            vartheta_re: c.vartheta.re,
            vartheta_im: c.vartheta.im,
            vartheta1: c.vartheta1,
            horizon_k: c.horizon,
        }
    }

    pub fn into_cost(self) -> Result<CostModel> {
        let c = CostModel {
            omega_final: self.omega_final,
            omega: self.omega,
            vartheta: Complex64::new(self.vartheta_re, self.vartheta_im),
            vartheta1: self.vartheta1,
            horizon: self.horizon_k,
        };
        c.validate()?;
        Ok(c)
    }
}

/// Flat JSON layout of an initial Gaussian state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateFile {
    pub z_re: f64,
    pub z_im: f64,
    #[serde(rename = "Sigma")]
    pub sigma: f64,
}

impl StateFile {
    pub fn into_state(self) -> Result<GaussianState> {
        GaussianState::new(Complex64::new(self.z_re, self.z_im), self.sigma)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn closed_oscillator() -> OscillatorModel {
        OscillatorModel {
            phi: c(1.0, 0.0),
            beta: c(0.0, 0.0),
            gamma: c(0.0, 0.0),
            delta: c(0.0, 0.0),
            epsilon: 0.0,
            sigma: 0.0,
            upsilon: c(0.0, 0.0),
            nu: 0.0,
            units: Units::default(),
        }
    }

    pub(crate) fn matched_line(alpha: f64) -> ContinuousModel {
        let g = 2.0 * alpha;
        ContinuousModel {
            alpha: c(alpha, 0.0),
            beta_rate: c(g, 0.0),
            gamma_rate: c(g, 0.0),
            delta_rate: c(-g, 0.0),
            epsilon_rate: g,
            sigma_rate: 0.2,
            upsilon_rate: c(0.2, 0.0),
            nu_rate: 0.2,
            mu_rate: None,
            theta: 1.0,
            omega_rate: 0.5,
            omega_final: 1.0,
            tau: 1.0,
            units: Units::default(),
        }
    }

    #[test]
    fn noiseless_closed_dynamics_is_admissible() {
        let r = validate_model(&closed_oscillator(), &MeasurementModel { mu: 0.0 });
        assert!(r.admissible);
        assert_eq!(r.min_eigenvalue, 0.0);
    }

    #[test]
    fn direct_observation_without_noise_is_rejected() {
        let m = OscillatorModel { gamma: c(1.0, 0.0), epsilon: 1.0, ..closed_oscillator() };
        let r = validate_model(&m, &MeasurementModel { mu: 0.0 });
        assert!(!r.admissible);
        // [[0, -1], [-1, 0]] has eigenvalues +-1.
        assert_abs_diff_eq!(r.min_eigenvalue, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.mu_slack, -1.0);
    }

    #[test]
    fn mu_below_epsilon_is_rejected() {
        let m = OscillatorModel { sigma: 1.0, nu: 2.0, epsilon: 0.5, ..closed_oscillator() };
        assert!(!validate_model(&m, &MeasurementModel { mu: 0.4 }).admissible);
    }

    #[test]
    fn indefinite_noise_covariance_is_rejected() {
        // dominates the commutator matrix, yet sigma = 0 with a nonzero cross term
        let m = OscillatorModel {
            phi: c(0.9, 0.0),
            gamma: c(0.9, 0.0),
            upsilon: c(-0.81, 0.0),
            nu: 0.81,
            ..closed_oscillator()
        };
        let r = validate_model(&m, &MeasurementModel { mu: 0.0 });
        assert!(r.min_eigenvalue >= 0.0);
        assert!(r.noise_min_eigenvalue < -0.4);
        assert!(!r.admissible);
    }

    #[test]
    fn parts_constructor_is_admissible() {
        let (m, meas) = admissible_from_parts(
            c(1.1, 0.4),
            c(0.0, 1.0),
            c(0.7, -0.2),
            c(0.0, 0.0),
            -0.3,
            (0.1, c(0.02, 0.0), 0.2),
            Units::default(),
        )
        .unwrap();
        let r = validate_model(&m, &meas);
        assert!(r.admissible, "{r:?}");
        assert!(admissible_from_parts(c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), 0.0, (0.0, c(1.0, 0.0), 0.0), Units::default()).is_err());
        assert!(validate_model(&m, &MeasurementModel { mu: 0.5 }).admissible);
    }

    #[test]
    fn matched_line_is_admissible_at_small_dt() {
        for dt in [0.04, 0.01, 0.001] {
            let (m, meas) = matched_line_preset(&matched_line(0.5), dt).unwrap();
            let r = validate_model(&m, &meas);
            assert!(r.admissible, "dt={dt}: {r:?}");
            assert!(r.min_eigenvalue > 0.0);
        }
    }

    #[test]
    fn euler_matched_line_breaks_admissibility() {
        let (m, meas) = matched_line_preset_with(&matched_line(0.5), 0.01, Discretization::Euler).unwrap();
        assert_abs_diff_eq!(m.phi.re, 0.995, epsilon = 1e-15);
        let r = validate_model(&m, &meas);
        assert!(!r.admissible);
        // det = -(sigma + g) dt^3 |alpha|^2 over trace 2 (sigma + g) dt, to leading order
        assert_abs_diff_eq!(r.min_eigenvalue, -0.5 * 0.01f64.powi(2) * 0.25, epsilon = 1e-7);
    }

    #[test]
    fn zero_damping_gives_identity_transition() {
        let mut cm = matched_line(0.5);
        cm.alpha = c(0.0, 0.0);
        for rule in [Discretization::Euler, Discretization::CommutatorPreserving] {
            let (m, _) = matched_line_preset_with(&cm, 0.1, rule).unwrap();
            assert_eq!(m.phi, c(1.0, 0.0));
        }
    }

    #[test]
    fn commutator_preserving_phi_agrees_to_first_order() {
        let mut cm = matched_line(0.5);
        cm.alpha = c(0.5, 0.3);
        for dt in [1e-2, 1e-3] {
            let (m, _) = matched_line_preset(&cm, dt).unwrap();
            let euler = c(1.0, 0.0) - cm.alpha * dt;
            assert!((m.phi - euler).norm() < dt * dt);
            assert_abs_diff_eq!(m.phi.norm_sqr(), 1.0 - cm.damping() * dt, epsilon = 1e-15);
        }
    }

    #[test]
    fn tie_in_survives_discretization() {
        let (m, meas) = matched_line_preset(&matched_line(0.7), 0.01).unwrap();
        assert_eq!(m.beta, m.gamma);
        assert_eq!(m.gamma.re, m.epsilon);
        assert_eq!(m.nu, m.sigma);
        assert_eq!(m.upsilon.re, m.sigma);
        assert_eq!(meas.mu, m.epsilon);
    }

    #[test]
    fn oversized_step_is_rejected() {
        assert!(matched_line_preset(&matched_line(0.5), 1.5).is_err());
        assert!(matched_line_preset(&matched_line(0.5), 0.0).is_err());
    }

    #[test]
    fn thermal_preset_ln2() {
        let p = thermal_preset(std::f64::consts::LN_2, 1.0, 1.0, Units::default()).unwrap();
        assert_abs_diff_eq!(p.initial.sigma, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.model.sigma_rate, 1.0, epsilon = 1e-15);
        assert!(!p.saturated);
    }

    #[test]
    fn thermal_sigma_is_gamma_times_occupation() {
        for (w, t, g) in [(1.0, 0.3, 2.5), (3.0, 10.0, 0.1), (0.2, 0.05, 7.0)] {
            let p = thermal_preset(w, t, g, Units::default()).unwrap();
            assert_eq!(p.model.sigma_rate, g * p.initial.sigma);
            assert_eq!(p.model.damping(), g);
        }
    }

    #[test]
    fn thermal_high_temperature_saturates() {
        let p = thermal_preset_with_cap(1.0, 1e300, 1.0, Units::default(), 1e6).unwrap();
        assert!(p.saturated);
        assert_eq!(p.occupation, 1e6);
        let q = thermal_preset_with_cap(1.0, 1e3, 1.0, Units::default(), 1e6).unwrap();
        assert!(!q.saturated);
        assert!(q.occupation > 999.0);
    }

    #[test]
    fn thermal_rejects_zero_temperature() {
        assert!(thermal_preset(1.0, 0.0, 1.0, Units::default()).is_err());
    }

    #[test]
    fn negative_temperature_active_medium() {
        let p = thermal_preset(1.0, -2.0, -1.0, Units::default()).unwrap();
        assert!(p.occupation < -1.0);
        assert!(p.model.sigma_rate > 0.0);
        assert_eq!(p.initial.sigma, 0.0);
        assert_eq!(p.model.mu_rate(), 0.0);
    }

    #[test]
    fn model_file_round_trip() {
        let (m, meas) = matched_line_preset(&matched_line(0.5), 0.01).unwrap();
        let json = serde_json::to_string(&ModelFile::from_model(&m, &meas)).unwrap();
        assert!(json.contains("\"upsilon_im\""));
        let (m2, meas2) = serde_json::from_str::<ModelFile>(&json).unwrap().into_model().unwrap();
        assert_eq!(m, m2);
        assert_eq!(meas, meas2);
    }

    #[test]
    fn continuous_cost_discretization() {
        let cm = matched_line(0.5);
        let cost = cm.discrete_cost(0.01).unwrap();
        assert_eq!(cost.horizon, 100);
        assert_abs_diff_eq!(cost.vartheta1, 0.015, epsilon = 1e-15);
        assert_eq!(cost.omega_final, 1.0);
        assert!(cm.discrete_cost(0.03).is_err());
    }

    #[test]
    fn rotating_all_three_coefficients_is_not_a_symmetry() {
        let m = OscillatorModel { gamma: c(1.0, 0.0), upsilon: c(-1.0, 0.0), ..closed_oscillator() };
        let (_, m12, _) = m.constraint_matrix();
        assert_eq!(m12, c(0.0, 0.0));
        let r = c(-1.0, 0.0);
        let naive = OscillatorModel { phi: r * m.phi, gamma: r * m.gamma, upsilon: r * m.upsilon, ..m };
        let (_, m12, _) = naive.constraint_matrix();
        assert_eq!(m12.norm(), 2.0);
    }

    proptest::proptest! {
        #[test]
        fn admissibility_is_invariant_under_output_rotation(
            pr in 0.0f64..1.5, pa in -3.1f64..3.1, gr in 0.0f64..1.5, ga in -3.1f64..3.1,
            eps in -1.0f64..1.0, sigma in 0.0f64..2.0, nu in 0.0f64..2.0,
            ur in -1.0f64..1.0, ui in -1.0f64..1.0, theta in -3.1f64..3.1,
        ) {
            let m = OscillatorModel {
                phi: Complex64::from_polar(pr, pa),
                gamma: Complex64::from_polar(gr, ga),
                epsilon: eps,
                sigma,
                nu,
                upsilon: c(ur, ui),
                ..closed_oscillator()
            };
            let meas = MeasurementModel::optimal(eps);
            let a = validate_model(&m, &meas);
            let b = validate_model(&m.rotated(theta), &meas);
            proptest::prop_assert!((a.min_eigenvalue - b.min_eigenvalue).abs() < 1e-12);
            proptest::prop_assert_eq!(a.admissible, b.admissible);
        }
    }
}
