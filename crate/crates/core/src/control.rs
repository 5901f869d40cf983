//! Backward dynamic programming for the quadratic loss: control Riccati
//! recursion, feedback gains, the future-loss coefficients `Gamma_k`, `d_k`, and
//! the minimal expected loss.
//!
//! ```text
//! Upsilon_k = |beta|^2 Omega_{k+1} + vartheta1
//! lambda_k  = (phi conj(beta) Omega_{k+1} - vartheta) / Upsilon_k
//! Omega_k   = |phi|^2 Omega_{k+1} + omega - |lambda_k|^2 Upsilon_k,   Omega_K = Omega_final
//! Gamma_k   = |lambda_k|^2 Upsilon_k + |phi - kappa_{k+1} gamma|^2 Gamma_{k+1},   Gamma_K = 0
//! d_k       = d_{k+1} + hbar (Omega_{k+1} sigma
//!             + Gamma_{k+1} (sigma + 2 Re(kappa_{k+1} conj(upsilon)) + nu1 |kappa_{k+1}|^2)),   d_K = 0
//! ```

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::filtering::{riccati_gain, VarianceProfile};
use crate::model::{ContinuousCost, ContinuousModel, CostModel, GaussianState, MeasurementModel, OscillatorModel};
use crate::ode;

#[derive(Debug, Clone, PartialEq)]
pub struct ControlSolution {
    /// `Omega_k`, `k = 0..=K`.
    pub omega: Vec<f64>,
    /// `lambda_k`, `k = 0..K`.
    pub lambda: Vec<Complex64>,
    /// `Upsilon_k`, `k = 0..K`.
    pub upsilon: Vec<f64>,
    /// `Gamma_k`, `k = 0..=K`.
    pub gamma: Vec<f64>,
    /// `d_k`, `k = 0..=K`.
    pub d: Vec<f64>,
}

impl ControlSolution {
    pub fn horizon(&self) -> usize {
        self.lambda.len()
    }
}

/// Per-step noise load on the estimation-error channel,
/// `sigma + 2 Re(kappa conj(upsilon)) + nu1 |kappa|^2`.
pub fn error_noise(m: &OscillatorModel, meas: &MeasurementModel, kappa: Complex64) -> f64 {
    m.sigma + 2.0 * (kappa * m.upsilon.conj()).re + (m.nu + meas.mu) * kappa.norm_sqr()
}

/// `d_{k-1} - d_k`.
pub fn value_increment(
    m: &OscillatorModel,
    meas: &MeasurementModel,
    omega_k: f64,
    gamma_k: f64,
    kappa_k: Complex64,
) -> f64 {
    m.units.hbar * (omega_k * m.sigma + gamma_k * error_noise(m, meas, kappa_k))
}

pub fn riccati_backward(
    m: &OscillatorModel,
    cost: &CostModel,
    meas: &MeasurementModel,
    profile: &VarianceProfile,
) -> Result<ControlSolution> {
    cost.validate()?;
    let k_max = cost.horizon;
    if profile.horizon() != k_max {
        return Err(Error::InvalidParameter(format!(
            "variance profile covers {} steps, cost horizon is {k_max}",
            profile.horizon()
        )));
    }
    let mut omega = vec![0.0; k_max + 1];
    let mut lambda = vec![Complex64::default(); k_max];
    let mut upsilon = vec![0.0; k_max];
    let mut gamma = vec![0.0; k_max + 1];
    let mut d = vec![0.0; k_max + 1];
    omega[k_max] = cost.omega_final;
    let phi2 = m.phi.norm_sqr();
    for k in (0..k_max).rev() {
        let (l, ups) = riccati_gain(m.phi, m.beta, cost.vartheta, cost.vartheta1, omega[k + 1]);
        lambda[k] = l;
        upsilon[k] = ups;
        let control_gain = l.norm_sqr() * ups;
        omega[k] = phi2 * omega[k + 1] + cost.omega - control_gain;
        let kappa = profile.kappa(k + 1);
        gamma[k] = control_gain + (m.phi - kappa * m.gamma).norm_sqr() * gamma[k + 1];
        d[k] = d[k + 1] + value_increment(m, meas, omega[k + 1], gamma[k + 1], kappa);
    }
    Ok(ControlSolution { omega, lambda, upsilon, gamma, d })
}

/// Minimal expected loss
/// `Omega_0 |z_0|^2 + hbar (Omega_0 Sigma_0 + sum_k (Omega_k sigma + conj(lambda_{k-1}) Lambda_{k-1} Sigma_{k-1}))`
/// with `Lambda_k = phi conj(beta) Omega_{k+1} - vartheta = lambda_k Upsilon_k`.
pub fn minimal_loss(sol: &ControlSolution, profile: &VarianceProfile, init: &GaussianState, m: &OscillatorModel) -> f64 {
    let hbar = m.units.hbar;
    let tail: f64 = (1..=sol.horizon())
        .map(|k| {
            let big_lambda = sol.lambda[k - 1] * sol.upsilon[k - 1];
            sol.omega[k] * m.sigma + (sol.lambda[k - 1].conj() * big_lambda).re * profile.sigma[k - 1]
        })
        .sum();
    sol.omega[0] * init.z.norm_sqr() + hbar * (sol.omega[0] * init.sigma + tail)
}

/// The same minimal loss computed on the posterior-mean process: the estimate
/// is driven by innovations of variance `hbar |kappa_k|^2 Psi_k`, each weighted by
/// `Omega_k`, while the state penalty also pays for the posterior spread.
pub fn minimal_loss_innovation_form(
    sol: &ControlSolution,
    profile: &VarianceProfile,
    init: &GaussianState,
    m: &OscillatorModel,
    cost: &CostModel,
) -> f64 {
    let hbar = m.units.hbar;
    let k_max = sol.horizon();
    let innovations: f64 = (1..=k_max).map(|k| sol.omega[k] * profile.kappa(k).norm_sqr() * profile.psi(k)).sum();
    let spread: f64 = cost.omega * profile.sigma[..k_max].iter().sum::<f64>() + cost.omega_final * profile.sigma[k_max];
    sol.omega[0] * init.z.norm_sqr() + hbar * (innovations + spread)
}

/// Expected loss from the state/error value function
/// `Omega_0 E|x_0|^2 + Gamma_0 E|x_0 - z_0|^2 + d_0`.
pub fn minimal_loss_value_form(sol: &ControlSolution, init: &GaussianState, m: &OscillatorModel) -> f64 {
    let hbar = m.units.hbar;
    sol.omega[0] * (init.z.norm_sqr() + hbar * init.sigma) + sol.gamma[0] * hbar * init.sigma + sol.d[0]
}

/// Expected loss of the linear policy `u_k = -gains[k] z_k`, evaluated exactly
/// through the second moment `E|z_k|^2` of the posterior mean.
pub fn linear_policy_cost(
    m: &OscillatorModel,
    cost: &CostModel,
    profile: &VarianceProfile,
    gains: &[Complex64],
    init: &GaussianState,
) -> Result<f64> {
    if gains.len() != cost.horizon || profile.horizon() != cost.horizon {
        return Err(Error::InvalidParameter("gain schedule, profile and horizon disagree".into()));
    }
    let hbar = m.units.hbar;
    let mut second = init.z.norm_sqr();
    let mut total = 0.0;
    for (k, &g) in gains.iter().enumerate() {
        let weight = cost.omega + 2.0 * (cost.vartheta * g.conj()).re + cost.vartheta1 * g.norm_sqr();
        total += weight * second + cost.omega * hbar * profile.sigma[k];
        second = (m.phi - m.beta * g).norm_sqr() * second + hbar * profile.kappa(k + 1).norm_sqr() * profile.psi(k + 1);
    }
    Ok(total + cost.omega_final * (second + hbar * profile.sigma[cost.horizon]))
}

/// Optimal feedback `u = -lambda z`.
pub fn feedback(z: Complex64, lambda: Complex64) -> Complex64 {
    -lambda * z
}

/// Filter profile, control solution and minimal loss for one problem.
#[derive(Debug, Clone, PartialEq)]
pub struct LqgSolution {
    pub profile: VarianceProfile,
    pub control: ControlSolution,
    pub alpha_opt: f64,
}

pub fn solve(
    m: &OscillatorModel,
    meas: &MeasurementModel,
    cost: &CostModel,
    init: &GaussianState,
) -> Result<LqgSolution> {
    cost.validate()?;
    let profile = crate::filtering::variance_profile(m, meas, init.sigma, cost.horizon)?;
    let control = riccati_backward(m, cost, meas, &profile)?;
    let alpha_opt = minimal_loss(&control, &profile, init, m);
    Ok(LqgSolution { profile, control, alpha_opt })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousControlPath {
    pub dt: f64,
    /// `Omega(t_n)` for `n = 0..=N`.
    pub omega: Vec<f64>,
    /// `lambda(t_n)`.
    pub lambda: Vec<Complex64>,
}

/// Right-hand side of `dOmega/dt = (alpha + conj alpha) Omega - omega + |lambda|^2 vartheta1`.
pub fn continuous_control_rhs(c: &ContinuousModel, cost: &ContinuousCost, omega: f64) -> f64 {
    let lambda = continuous_lambda(c, cost, omega);
    c.damping() * omega - cost.omega + lambda.norm_sqr() * cost.vartheta1
}

/// `lambda(t) = (conj(beta) Omega - vartheta) / vartheta1`.
pub fn continuous_lambda(c: &ContinuousModel, cost: &ContinuousCost, omega: f64) -> Complex64 {
    (c.beta_rate.conj() * omega - cost.vartheta) / cost.vartheta1
}

/// RK4 backward sweep of the control Riccati ODE from `Omega(tau) = Omega_final`
/// on the grid `t_n = n dt` covering `[0, tau]`.
pub fn continuous_riccati(c: &ContinuousModel, dt: f64) -> Result<ContinuousControlPath> {
    let steps = c.steps(dt)?;
    continuous_riccati_with(c, &c.cost_rates(), dt, steps)
}

pub fn continuous_riccati_with(
    c: &ContinuousModel,
    cost: &ContinuousCost,
    dt: f64,
    steps: usize,
) -> Result<ContinuousControlPath> {
    if !(cost.vartheta1 > 0.0) {
        return Err(Error::InvalidParameter(format!("vartheta1 must be > 0, got {}", cost.vartheta1)));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
    }
    let omega = ode::integrate_backward(|o| continuous_control_rhs(c, cost, o), cost.omega_final, dt, steps);
    let lambda = omega.iter().map(|&o| continuous_lambda(c, cost, o)).collect();
    Ok(ContinuousControlPath { dt, omega, lambda })
}

/// Continuous minimal loss
/// `Omega(0) |z|^2 + hbar (Omega(0) Sigma(0) + int (Omega sigma + |lambda|^2 vartheta1 Sigma) dt)`
/// from RK4 paths on `steps` uniform intervals of `[0, tau]` and the trapezoid rule.
pub fn continuous_minimal_loss(c: &ContinuousModel, init: &GaussianState, steps: usize) -> Result<f64> {
    let dt = c.tau / steps as f64;
    let cost = c.cost_rates();
    let sigma = crate::filtering::continuous_variance(c, c.mu_rate(), init.sigma, dt, steps)?;
    let ctrl = continuous_riccati_with(c, &cost, dt, steps)?;
    let integrand: Vec<f64> = (0..=steps)
        .map(|n| ctrl.omega[n] * c.sigma_rate + ctrl.lambda[n].norm_sqr() * cost.vartheta1 * sigma[n])
        .collect();
    let omega0 = ctrl.omega[0];
    Ok(omega0 * init.z.norm_sqr() + c.units.hbar * (omega0 * init.sigma + ode::trapezoid(&integrand, dt)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filtering::variance_profile;
    use crate::model::{matched_line_preset, Units};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn simple_model() -> OscillatorModel {
        OscillatorModel {
            phi: c(1.0, 0.0),
            beta: c(1.0, 0.0),
            gamma: c(0.0, 0.0),
            delta: c(0.0, 0.0),
            epsilon: 0.0,
            sigma: 0.0,
            upsilon: c(0.0, 0.0),
            nu: 1.0,
            units: Units::default(),
        }
    }

    fn unit_cost(horizon: usize) -> CostModel {
        CostModel { omega_final: 1.0, omega: 0.0, vartheta: c(0.0, 0.0), vartheta1: 1.0, horizon }
    }

    fn generic() -> (OscillatorModel, MeasurementModel, CostModel, GaussianState) {
        let cm = crate::model::tests::matched_line(0.5);
        let (mut m, meas) = matched_line_preset(&cm, 0.1).unwrap();
        m.phi *= Complex64::from_polar(1.0, 0.3);
        m.beta = c(0.07, -0.04);
        let cost = CostModel { omega_final: 1.3, omega: 0.05, vartheta: c(0.02, 0.01), vartheta1: 0.15, horizon: 10 };
        (m, meas, cost, GaussianState { z: c(0.8, -0.6), sigma: 0.3 })
    }

    #[test]
    fn single_step_hand_case() {
        let m = simple_model();
        let meas = MeasurementModel { mu: 0.0 };
        let init = GaussianState { z: c(1.0, 0.0), sigma: 0.0 };
        let s = solve(&m, &meas, &unit_cost(1), &init).unwrap();
        assert_eq!(s.control.lambda[0], c(0.5, 0.0));
        assert_eq!(s.control.omega[0], 0.5);
        assert_eq!(s.alpha_opt, 0.5);
    }

    #[test]
    fn no_control_channel() {
        let m = OscillatorModel { beta: c(0.0, 0.0), phi: c(0.9, 0.1), ..simple_model() };
        let meas = MeasurementModel { mu: 0.0 };
        let cost = CostModel { omega: 0.2, ..unit_cost(5) };
        let p = variance_profile(&m, &meas, 0.0, 5).unwrap();
        let sol = riccati_backward(&m, &cost, &meas, &p).unwrap();
        assert!(sol.lambda.iter().all(|l| *l == c(0.0, 0.0)));
        for k in 0..5 {
            assert_abs_diff_eq!(sol.omega[k], m.phi.norm_sqr() * sol.omega[k + 1] + 0.2, epsilon = 1e-15);
        }
        let cost = CostModel { vartheta: c(0.3, -0.1), ..cost };
        let sol = riccati_backward(&m, &cost, &meas, &p).unwrap();
        assert!(sol.lambda.iter().all(|l| *l == -cost.vartheta / cost.vartheta1));
    }

    #[test]
    fn zero_weights_give_zero_loss() {
        let (m, meas, _, init) = generic();
        let cost = CostModel { omega_final: 0.0, omega: 0.0, vartheta: c(0.0, 0.0), vartheta1: 1.0, horizon: 7 };
        let s = solve(&m, &meas, &cost, &init).unwrap();
        assert_eq!(s.alpha_opt, 0.0);
        assert!(s.control.lambda.iter().all(|l| *l == c(0.0, 0.0)));
    }

    #[test]
    fn terminal_conditions() {
        let (m, meas, cost, init) = generic();
        let s = solve(&m, &meas, &cost, &init).unwrap();
        let k = cost.horizon;
        assert_eq!(s.control.omega[k], cost.omega_final);
        assert_eq!(s.control.gamma[k], 0.0);
        assert_eq!(s.control.d[k], 0.0);
        assert!(s.control.omega.iter().all(|&o| o >= 0.0));
        assert!(s.control.upsilon.iter().all(|&u| u > 0.0));
    }

    #[test]
    fn three_routes_to_the_minimal_loss_agree() {
        let (m, meas, cost, init) = generic();
        let s = solve(&m, &meas, &cost, &init).unwrap();
        let a = minimal_loss_innovation_form(&s.control, &s.profile, &init, &m, &cost);
        let b = minimal_loss_value_form(&s.control, &init, &m);
        let exact = linear_policy_cost(&m, &cost, &s.profile, &s.control.lambda, &init).unwrap();
        for other in [a, b, exact] {
            assert_abs_diff_eq!(s.alpha_opt, other, epsilon = 1e-12 * s.alpha_opt.abs().max(1.0));
        }
    }

    #[test]
    fn optimal_gain_beats_perturbed_gains() {
        let (m, meas, cost, init) = generic();
        let s = solve(&m, &meas, &cost, &init).unwrap();
        for factor in [c(0.8, 0.0), c(1.2, 0.0), c(1.0, 0.2), c(0.0, 0.0)] {
            let gains: Vec<Complex64> = s.control.lambda.iter().map(|l| l * factor).collect();
            let j = linear_policy_cost(&m, &cost, &s.profile, &gains, &init).unwrap();
            assert!(j > s.alpha_opt, "factor {factor}: {j} <= {}", s.alpha_opt);
        }
    }

    #[test]
    fn filter_control_duality() {
        let (m, meas, cost, init) = generic();
        let s = solve(&m, &meas, &cost, &init).unwrap();
        for k in 0..cost.horizon {
            // the filter gain kernel with (gamma, upsilon, nu1, Sigma) -> (beta, vartheta, vartheta1, Omega_{k+1})
            let dual = OscillatorModel { gamma: m.beta, upsilon: cost.vartheta, nu: cost.vartheta1, ..m };
            let g = crate::filtering::gain(s.control.omega[k + 1], &dual, &MeasurementModel { mu: 0.0 }).unwrap();
            assert_eq!(g.kappa, s.control.lambda[k]);
            assert_eq!(g.psi, s.control.upsilon[k]);
        }
    }

    #[test]
    fn continuous_balance_keeps_omega_stationary() {
        // omega = gamma Omega_final with the tie-in
        let mut cm = crate::model::tests::matched_line(0.5);
        cm.omega_final = 0.5;
        let path = continuous_riccati(&cm, 0.01).unwrap();
        for (o, l) in path.omega.iter().zip(&path.lambda) {
            assert_abs_diff_eq!(*o, 0.5, epsilon = 1e-15);
            assert_eq!(l.norm(), 0.0);
        }
    }

    #[test]
    fn heavy_control_penalty_reduces_to_damping() {
        let mut cm = crate::model::tests::matched_line(0.5);
        cm.omega_rate = 0.0;
        cm.theta = 1e12;
        let path = continuous_riccati(&cm, 0.01).unwrap();
        assert!(path.lambda[0].norm() < 1e-11);
        assert_abs_diff_eq!(path.omega[0], (-cm.damping() * cm.tau).exp(), epsilon = 1e-9);
    }

    #[test]
    fn active_medium_converges_to_theta_over_gamma() {
        let mut cm = crate::model::tests::matched_line(-0.5);
        cm.omega_rate = 0.0;
        cm.theta = 2.0;
        cm.tau = 40.0;
        let path = continuous_riccati(&cm, 0.01).unwrap();
        assert_abs_diff_eq!(path.omega[0], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn vartheta1_must_be_positive() {
        let mut cm = crate::model::tests::matched_line(0.5);
        cm.omega_rate = 0.0;
        cm.theta = 0.0;
        assert!(continuous_riccati(&cm, 0.01).is_err());
    }

    #[test]
    fn feedback_is_linear() {
        assert_eq!(feedback(c(1.0, 1.0), c(0.5, 0.0)), c(-0.5, -0.5));
        assert_eq!(feedback(c(3.0, -2.0), c(0.0, 0.0)).norm(), 0.0);
    }

    proptest! {
        #[test]
        fn omega_nonincreasing_without_running_state_cost(
            pr in 0.0f64..1.0, pa in -3.1f64..3.1, br in 0.0f64..2.0, ba in -3.1f64..3.1,
            v1 in 0.1f64..3.0, of in 0.0f64..3.0,
        ) {
            let m = OscillatorModel {
                phi: Complex64::from_polar(pr, pa),
                beta: Complex64::from_polar(br, ba),
                ..simple_model()
            };
            let meas = MeasurementModel { mu: 0.0 };
            // with omega = 0 the loss is nonnegative only for vartheta = 0
            let cost = CostModel { omega_final: of, omega: 0.0, vartheta: c(0.0, 0.0), vartheta1: v1, horizon: 20 };
            let p = variance_profile(&m, &meas, 0.5, 20).unwrap();
            let s = riccati_backward(&m, &cost, &meas, &p).unwrap();
            for k in 0..20 {
                prop_assert!(s.omega[k] <= s.omega[k + 1] + 1e-12);
            }
        }

        #[test]
        fn minimal_loss_depends_only_on_modulus_of_z0(theta in -3.1f64..3.1, r in 0.0f64..3.0) {
            let (m, meas, cost, init) = generic();
            let a = solve(&m, &meas, &cost, &GaussianState { z: c(r, 0.0), ..init }).unwrap();
            let b = solve(&m, &meas, &cost, &GaussianState { z: Complex64::from_polar(r, theta), ..init }).unwrap();
            prop_assert!((a.alpha_opt - b.alpha_opt).abs() <= 1e-12 * a.alpha_opt.max(1.0));
        }
    }
}
