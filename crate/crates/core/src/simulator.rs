//! Closed-loop Monte-Carlo: measurement records are drawn from the innovation
//! law `eta_k ~ CN(gamma z_{k-1} + delta u_{k-1}, hbar Psi_k)`, the filter is
//! stepped on them and the optimal feedback applied. Each trajectory carries
//! its posterior-expected loss.
//!
//! Stream splitting: trajectory `i` of a run with base seed `s` draws from
//! `ChaCha8Rng::seed_from_u64(s)` switched to stream `i`. Results do not depend
//! on scheduling or thread count.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::control::{feedback, solve, LqgSolution};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::filtering::{self, FilterRun, FilterState};
use crate::model::{
    matched_line_preset, validate_model, ContinuousModel, CostModel, GaussianState, MeasurementModel, OscillatorModel,
    Units,
};
use crate::ode;

/// Random stream for trajectory `index` under `base_seed`.
pub fn stream_rng(base_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    rng
}

/// Circular complex Gaussian draw with mean `mean` and variance `variance`.
pub fn sample_circular<R: rand::Rng + ?Sized>(mean: Complex64, variance: f64, rng: &mut R) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    mean + Complex64::new(s * re, s * im)
}

pub fn sample_eta<R: rand::Rng + ?Sized>(
    state: &GaussianState,
    u: Complex64,
    m: &OscillatorModel,
    meas: &MeasurementModel,
    rng: &mut R,
) -> Result<Complex64> {
    let g = filtering::gain(state.sigma, m, meas)?;
    Ok(sample_circular(filtering::predicted_output(state.z, u, m), m.units.hbar * g.psi, rng))
}

/// Posterior expectation of the normal-ordered running loss,
/// `omega (|z|^2 + hbar Sigma) - 2 Re(vartheta conj(u) z) + vartheta1 |u|^2`.
pub fn step_cost(state: &GaussianState, u: Complex64, cost: &CostModel, units: &Units) -> f64 {
    cost.omega * (state.z.norm_sqr() + units.hbar * state.sigma) - 2.0 * (cost.vartheta * u.conj() * state.z).re
        + cost.vartheta1 * u.norm_sqr()
}

/// `Omega_final (|z|^2 + hbar Sigma)`.
pub fn terminal_cost(state: &GaussianState, cost: &CostModel, units: &Units) -> f64 {
    cost.omega_final * (state.z.norm_sqr() + units.hbar * state.sigma)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub etas: Vec<Complex64>,
    pub controls: Vec<Complex64>,
    pub posterior: FilterRun,
    pub realized_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub n: usize,
    pub mean_cost: f64,
    pub stderr: f64,
    pub alpha_opt_ref: f64,
}

impl McSummary {
    pub fn from_costs(costs: &[f64], alpha_opt_ref: f64) -> Result<Self> {
        let n = costs.len();
        if n < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 trajectories, got {n}")));
        }
        let mean = costs.iter().sum::<f64>() / n as f64;
        let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Ok(McSummary { n, mean_cost: mean, stderr: (var / n as f64).sqrt(), alpha_opt_ref })
    }

    /// `|mean - alpha_opt| / stderr`; infinite when the spread is zero and they differ.
    pub fn z_score(&self) -> f64 {
        let diff = (self.mean_cost - self.alpha_opt_ref).abs();
        if diff == 0.0 {
            0.0
        } else {
            diff / self.stderr
        }
    }
}

/// A validated closed-loop problem with its solved filter and control profiles.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub model: OscillatorModel,
    pub meas: MeasurementModel,
    pub cost: CostModel,
    pub init: GaussianState,
    pub solution: LqgSolution,
}

impl Simulator {
    pub fn new(model: OscillatorModel, meas: MeasurementModel, cost: CostModel, init: GaussianState) -> Result<Self> {
        validate_model(&model, &meas).into_result()?;
        GaussianState::new(init.z, init.sigma)?;
        let solution = solve(&model, &meas, &cost, &init)?;
        Ok(Simulator { model, meas, cost, init, solution })
    }

    pub fn alpha_opt(&self) -> f64 {
        self.solution.alpha_opt
    }

    /// One trajectory with feedback gains `gain_scale * lambda_k`.
    pub fn closed_loop_scaled(&self, seed: u64, index: u64, gain_scale: Complex64) -> Result<Trajectory> {
        let mut rng = stream_rng(seed, index);
        let k_max = self.cost.horizon;
        let units = &self.model.units;
        let mut states = Vec::with_capacity(k_max + 1);
        let mut etas = Vec::with_capacity(k_max);
        let mut controls = Vec::with_capacity(k_max);
        let mut current = FilterState::initial(self.init);
        let mut total = 0.0;
        for k in 0..k_max {
            let u = feedback(current.state.z, gain_scale * self.solution.control.lambda[k]);
            total += step_cost(&current.state, u, &self.cost, units);
            let eta = sample_eta(&current.state, u, &self.model, &self.meas, &mut rng)?;
            let next = filtering::step(&current, u, eta, &self.model, &self.meas)?;
            states.push(current);
            etas.push(eta);
            controls.push(u);
            current = next;
        }
        total += terminal_cost(&current.state, &self.cost, units);
        states.push(current);
        let posterior = FilterRun { states, controls: controls.clone(), etas: etas.clone(), model: self.model, meas: self.meas };
        Ok(Trajectory { etas, controls, posterior, realized_cost: total })
    }

    pub fn closed_loop(&self, seed: u64, index: u64) -> Result<Trajectory> {
        self.closed_loop_scaled(seed, index, Complex64::new(1.0, 0.0))
    }

    pub fn monte_carlo(&self, n: usize, base_seed: u64, exec: Execution) -> Result<McSummary> {
        self.monte_carlo_scaled(n, base_seed, exec, Complex64::new(1.0, 0.0))
    }

    /// Mean and standard error of the realized cost over trajectories `0..n`.
    pub fn monte_carlo_scaled(&self, n: usize, base_seed: u64, exec: Execution, gain_scale: Complex64) -> Result<McSummary> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 trajectories, got {n}")));
        }
        let costs = exec
            .map_indexed(n, |i| self.closed_loop_scaled(base_seed, i as u64, gain_scale).map(|t| t.realized_cost))
            .into_iter()
            .collect::<Result<Vec<f64>>>()?;
        McSummary::from_costs(&costs, self.alpha_opt())
    }
}

/// Free-function form of [`Simulator::closed_loop`].
pub fn closed_loop(
    m: &OscillatorModel,
    meas: &MeasurementModel,
    cost: &CostModel,
    init: &GaussianState,
    seed: u64,
) -> Result<Trajectory> {
    Simulator::new(*m, *meas, *cost, *init)?.closed_loop(seed, 0)
}

pub fn monte_carlo(
    m: &OscillatorModel,
    meas: &MeasurementModel,
    cost: &CostModel,
    init: &GaussianState,
    n: usize,
    base_seed: u64,
    exec: Execution,
) -> Result<McSummary> {
    Simulator::new(*m, *meas, *cost, *init)?.monte_carlo(n, base_seed, exec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuumRow {
    pub dt: f64,
    pub sigma_err: f64,
    pub omega_err: f64,
    pub alpha_err: f64,
}

/// Refinement of the reference grid relative to the finest common step.
pub const CONTINUUM_REFINEMENT: usize = 16;

/// Compares the discretized problem at each `dt` with RK4 reference solutions
/// of the continuous Riccati equations on a grid that nests every `dt`:
/// max deviation of `Sigma_k` and `Omega_k` from `Sigma(t_k)`, `Omega(t_k)`, and
/// the gap between the discrete minimal loss and the continuous one.
/// Deterministic: no sampling is involved.
pub fn continuum_study(
    c: &ContinuousModel,
    dt_list: &[f64],
    init: &GaussianState,
    exec: Execution,
) -> Result<Vec<ContinuumRow>> {
    if dt_list.is_empty() {
        return Err(Error::InvalidParameter("dt_list must be nonempty".into()));
    }
    if dt_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("dt_list must be strictly decreasing".into()));
    }
    c.validate()?;
    let steps: Vec<usize> = dt_list.iter().map(|&dt| c.steps(dt)).collect::<Result<_>>()?;
    let n_ref = steps.iter().fold(1usize, |acc, &k| lcm(acc, k)) * CONTINUUM_REFINEMENT;
    let h = c.tau / n_ref as f64;
    let sigma_ref = filtering::continuous_variance(c, c.mu_rate(), init.sigma, h, n_ref)?;
    let omega_ref = crate::control::continuous_riccati_with(c, &c.cost_rates(), h, n_ref)?;
    let alpha_ref = {
        let cost = c.cost_rates();
        let integrand: Vec<f64> = (0..=n_ref)
            .map(|n| omega_ref.omega[n] * c.sigma_rate + omega_ref.lambda[n].norm_sqr() * cost.vartheta1 * sigma_ref[n])
            .collect();
        omega_ref.omega[0] * init.z.norm_sqr()
            + c.units.hbar * (omega_ref.omega[0] * init.sigma + ode::trapezoid(&integrand, h))
    };
    let rows = exec.map_indexed(dt_list.len(), |i| -> Result<ContinuumRow> {
        let dt = c.tau / steps[i] as f64;
        let k_max = steps[i];
        let stride = n_ref / k_max;
        let (m, meas) = matched_line_preset(c, dt)?;
        let cost = c.discrete_cost(dt)?;
        let sol = solve(&m, &meas, &cost, init)?;
        let sigma_err = (0..=k_max)
            .map(|k| (sol.profile.sigma[k] - sigma_ref[k * stride]).abs())
            .fold(0.0, f64::max);
        let omega_err = (0..=k_max)
            .map(|k| (sol.control.omega[k] - omega_ref.omega[k * stride]).abs())
            .fold(0.0, f64::max);
        Ok(ContinuumRow { dt: dt_list[i], sigma_err, omega_err, alpha_err: (sol.alpha_opt - alpha_ref).abs() })
    });
    rows.into_iter().collect()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::default_scenario;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn default_sim(horizon_dt: f64) -> Simulator {
        let mut s = default_scenario();
        s.dt = horizon_dt;
        let (m, meas, cost) = s.discretize().unwrap();
        Simulator::new(m, meas, cost, s.init).unwrap()
    }

    #[test]
    fn zero_variance_draw_is_the_mean() {
        let mut rng = stream_rng(1, 0);
        assert_eq!(sample_circular(c(0.3, -1.0), 0.0, &mut rng), c(0.3, -1.0));
    }

    #[test]
    fn draw_moments() {
        let mut rng = stream_rng(7, 3);
        let n = 100_000;
        let (mean, var) = (c(0.5, -0.25), 0.8);
        let draws: Vec<Complex64> = (0..n).map(|_| sample_circular(mean, var, &mut rng)).collect();
        let m = draws.iter().sum::<Complex64>() / n as f64;
        let v = draws.iter().map(|d| (d - m).norm_sqr()).sum::<f64>() / (n - 1) as f64;
        assert!((m - mean).norm() < 3.0 * (var / n as f64).sqrt());
        assert!((v / var - 1.0).abs() < 0.02);
        // circular: no pseudo-variance
        let pseudo = draws.iter().map(|d| (d - m) * (d - m)).sum::<Complex64>() / n as f64;
        assert!(pseudo.norm() < 0.02 * var);
    }

    #[test]
    fn streams_differ_and_repeat() {
        let a: Vec<u64> = (0..4).map(|_| rand::Rng::random::<u64>(&mut stream_rng(5, 0))).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let x: u64 = rand::Rng::random(&mut stream_rng(5, 0));
        let y: u64 = rand::Rng::random(&mut stream_rng(5, 1));
        assert_ne!(x, y);
    }

    #[test]
    fn step_cost_hand_cases() {
        let cost = CostModel { omega_final: 2.0, omega: 0.5, vartheta: c(0.0, 0.0), vartheta1: 3.0, horizon: 1 };
        let u = Units::default();
        assert_eq!(step_cost(&GaussianState { z: c(0.0, 0.0), sigma: 0.4 }, c(0.0, 0.0), &cost, &u), 0.2);
        assert_eq!(step_cost(&GaussianState { z: c(1.0, 1.0), sigma: 0.0 }, c(0.0, 2.0), &cost, &u), 1.0 + 12.0);
        assert_eq!(terminal_cost(&GaussianState { z: c(1.0, 0.0), sigma: 0.5 }, &cost, &u), 3.0);
    }

    #[test]
    fn identical_seeds_give_identical_trajectories() {
        let sim = default_sim(0.05);
        let a = sim.closed_loop(42, 9).unwrap();
        let b = sim.closed_loop(42, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.etas, sim.closed_loop(42, 10).unwrap().etas);
    }

    #[test]
    fn trajectory_shapes_and_policy() {
        let sim = default_sim(0.05);
        let t = sim.closed_loop(3, 0).unwrap();
        assert_eq!(t.etas.len(), 20);
        assert_eq!(t.posterior.states.len(), 21);
        for (k, u) in t.controls.iter().enumerate() {
            assert_eq!(*u, -sim.solution.control.lambda[k] * t.posterior.states[k].state.z);
        }
        for (s, p) in t.posterior.states.iter().zip(&sim.solution.profile.sigma) {
            assert_eq!(s.state.sigma, *p);
        }
    }

    #[test]
    fn uninformed_open_loop_cost_is_deterministic() {
        let m = OscillatorModel {
            phi: c(0.9, 0.0),
            beta: c(0.0, 0.0),
            gamma: c(0.0, 0.0),
            delta: c(0.0, 0.0),
            epsilon: 0.0,
            sigma: 0.1,
            upsilon: c(0.0, 0.0),
            nu: 1.0,
            units: Units::default(),
        };
        let meas = MeasurementModel { mu: 0.0 };
        let cost = CostModel { omega_final: 1.0, omega: 0.3, vartheta: c(0.0, 0.0), vartheta1: 1.0, horizon: 6 };
        let init = GaussianState { z: c(1.0, 0.0), sigma: 0.2 };
        let sim = Simulator::new(m, meas, cost, init).unwrap();
        let a = sim.closed_loop(1, 0).unwrap().realized_cost;
        let b = sim.closed_loop(2, 0).unwrap().realized_cost;
        assert_eq!(a, b);
        assert_abs_diff_eq!(a, sim.alpha_opt(), epsilon = 1e-14);
    }

    #[test]
    fn inadmissible_model_is_rejected() {
        let mut sim = default_sim(0.05);
        sim.model.nu = 0.0;
        sim.model.sigma = 0.0;
        let err = Simulator::new(sim.model, sim.meas, sim.cost, sim.init).unwrap_err();
        assert!(matches!(err, Error::Inadmissible(_)));
    }

    #[test]
    fn equal_costs_give_zero_stderr() {
        let s = McSummary::from_costs(&[1.5, 1.5], 1.5).unwrap();
        assert_eq!(s.stderr, 0.0);
        assert_eq!(s.z_score(), 0.0);
        assert!(McSummary::from_costs(&[1.0], 1.0).is_err());
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let sim = default_sim(0.05);
        let a = sim.monte_carlo(500, 11, Execution::Sequential).unwrap();
        let b = sim.monte_carlo(500, 11, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stderr_shrinks_like_root_n() {
        let sim = default_sim(0.05);
        let ratios: Vec<f64> = (0..4)
            .map(|r| {
                let a = sim.monte_carlo(2000, 100 + r, Execution::Parallel).unwrap();
                let b = sim.monte_carlo(4000, 200 + r, Execution::Parallel).unwrap();
                a.stderr / b.stderr
            })
            .collect();
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!((mean / 2f64.sqrt() - 1.0).abs() < 0.2, "{ratios:?}");
    }

    #[test]
    fn short_monte_carlo_matches_minimal_loss() {
        let sim = default_sim(0.05);
        let s = sim.monte_carlo(20_000, 5, Execution::Parallel).unwrap();
        assert!(s.z_score() < 4.0, "{s:?}");
    }

    #[test]
    fn innovations_are_white() {
        let sim = default_sim(0.01);
        let mut standardized = Vec::new();
        for i in 0..50 {
            let t = sim.closed_loop(77, i).unwrap();
            for k in 0..t.etas.len() {
                let prev = &t.posterior.states[k].state;
                let g = t.posterior.states[k + 1].gain.unwrap();
                let innov = t.etas[k] - filtering::predicted_output(prev.z, t.controls[k], &sim.model);
                standardized.push(innov / (sim.model.units.hbar * g.psi).sqrt());
            }
        }
        let n = standardized.len() as f64;
        let mean = standardized.iter().sum::<Complex64>() / n;
        let var = standardized.iter().map(|x| x.norm_sqr()).sum::<f64>() / n;
        let lag1 = standardized.windows(2).map(|w| w[1] * w[0].conj()).sum::<Complex64>() / (n - 1.0);
        // unit-variance circular variables: |mean| ~ 1/sqrt(n), var of |x|^2 is 1
        assert!(mean.norm() < 3.0 / n.sqrt());
        assert!((var - 1.0).abs() < 3.0 / n.sqrt());
        assert!(lag1.norm() < 3.0 / n.sqrt());
    }

    #[test]
    fn conserved_variance_has_zero_continuum_error() {
        let mut cm = crate::scenario::matched_line(1.0, 0.0, 1.0, 0.5, 1.0);
        cm.alpha = c(0.0, 0.0);
        cm.gamma_rate = c(0.0, 0.0);
        cm.upsilon_rate = c(0.0, 0.0);
        cm.nu_rate = 1.0;
        let rows = continuum_study(&cm, &[0.1, 0.05], &GaussianState { z: c(1.0, 0.0), sigma: 0.7 }, Execution::Sequential).unwrap();
        assert!(rows.iter().all(|r| r.sigma_err == 0.0));
    }

    #[test]
    fn continuum_rejects_bad_lists() {
        let s = default_scenario();
        assert!(continuum_study(&s.continuous, &[], &s.init, Execution::Sequential).is_err());
        assert!(continuum_study(&s.continuous, &[0.01, 0.02], &s.init, Execution::Sequential).is_err());
        assert!(continuum_study(&s.continuous, &[0.3], &s.init, Execution::Sequential).is_err());
    }

    #[test]
    fn continuum_errors_halve() {
        let s = default_scenario();
        let rows = continuum_study(&s.continuous, &[0.04, 0.02, 0.01], &s.init, Execution::Parallel).unwrap();
        for w in rows.windows(2) {
            for (a, b) in [(w[0].sigma_err, w[1].sigma_err), (w[0].omega_err, w[1].omega_err), (w[0].alpha_err, w[1].alpha_err)] {
                assert!((1.5..=2.5).contains(&(a / b)), "{rows:?}");
            }
        }
    }
}
