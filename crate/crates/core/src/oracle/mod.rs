//! Independent verification engines: a phase-grid Bayes filter and
//! truncated Fock-space identity checks.

pub mod fock;
pub mod grid;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::filtering;
use crate::model::{GaussianState, MeasurementModel, OscillatorModel};

pub use fock::{coherent_projector_check, second_moment_bound_check, Channel, FockOperator};
pub use grid::{convolution_check, grid_condition, grid_filter, grid_moments, grid_predict, PhaseGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridComparison {
    pub resolution: usize,
    pub steps: usize,
    pub max_mean_error: f64,
    pub max_variance_error: f64,
}

/// Runs the grid filter and the Kalman filter on the same record and reports
/// the largest discrepancy in posterior mean (relative to `max(1, |z_k|)`) and variance.
pub fn compare_with_kalman(
    m: &OscillatorModel,
    meas: &MeasurementModel,
    init: &GaussianState,
    controls: &[Complex64],
    etas: &[Complex64],
    resolution: usize,
) -> Result<GridComparison> {
    let kalman = filtering::run(m, meas, *init, controls, etas)?;
    let prior = PhaseGrid::from_gaussian(init, m.units.hbar, resolution)?;
    let grids = grid_filter(&prior, m, meas, controls, etas)?;
    let mut max_mean_error: f64 = 0.0;
    let mut max_variance_error: f64 = 0.0;
    for (g, s) in grids.iter().zip(&kalman.states) {
        let (mean, var) = grid_moments(g);
        max_mean_error = max_mean_error.max((mean - s.state.z).norm() / s.state.z.norm().max(1.0));
        max_variance_error = max_variance_error.max((var - s.state.sigma).abs());
    }
    Ok(GridComparison { resolution, steps: etas.len(), max_mean_error, max_variance_error })
}

/// Thresholds used by the default oracle suite.
pub const GRID_TOLERANCE: f64 = 1e-3;
pub const PROJECTOR_TOLERANCE: f64 = 1e-6;
pub const PROJECTOR_SEPARATION: f64 = 1e-3;
pub const CONVOLUTION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSuiteReport {
    pub grid: GridComparison,
    pub convolution: Vec<grid::ConvolutionReport>,
    pub projector_minimal: Vec<fock::ProjectorReport>,
    pub projector_doubled: Vec<fock::ProjectorReport>,
    pub second_moment: fock::SecondMomentReport,
    pub pass: bool,
}

/// Real-axis and off-axis samples with `|z| <= 3`.
pub fn projector_samples() -> Vec<Complex64> {
    let mut zs: Vec<Complex64> = (-6..=6).map(|i| Complex64::new(0.5 * i as f64, 0.0)).collect();
    zs.extend((0..8).map(|k| Complex64::from_polar(3.0, k as f64 * std::f64::consts::FRAC_PI_4)));
    zs.push(Complex64::new(1.2, -0.7));
    zs
}

/// Grid-vs-Kalman on `(m, meas, init)` with the given record, the convolution
/// identity, and the coherent-projector identities at dim 40.
pub fn oracle_suite(
    m: &OscillatorModel,
    meas: &MeasurementModel,
    init: &GaussianState,
    controls: &[Complex64],
    etas: &[Complex64],
    resolution: usize,
) -> Result<OracleSuiteReport> {
    let grid = compare_with_kalman(m, meas, init, controls, etas, resolution)?;
    let convolution = vec![convolution_check(0.0, 128)?, convolution_check(1.0, 128)?];
    let zs = projector_samples();
    let scale = Complex64::new(1.0, 0.0);
    let mut projector_minimal = Vec::new();
    let mut projector_doubled = Vec::new();
    for channel in [Channel::Annihilation, Channel::Creation] {
        projector_minimal.push(coherent_projector_check(scale, 1.0, 40, channel, &zs)?);
        projector_doubled.push(coherent_projector_check(scale, 2.0, 40, channel, &zs)?);
    }
    // measurement noise mu hbar against the bound for x_hat = y
    let second_moment =
        second_moment_bound_check(meas.mu * m.units.hbar, Complex64::new(1.0, 0.0), m.epsilon, m.units.hbar);
    let pass = grid.max_mean_error < GRID_TOLERANCE
        && grid.max_variance_error < GRID_TOLERANCE
        && convolution.iter().all(|c| c.max_abs_deviation < CONVOLUTION_TOLERANCE)
        && projector_minimal.iter().all(|r| r.max_residual < PROJECTOR_TOLERANCE)
        && projector_doubled.iter().all(|r| r.max_residual > PROJECTOR_SEPARATION)
        && second_moment.pass;
    Ok(OracleSuiteReport { grid, convolution, projector_minimal, projector_doubled, second_moment, pass })
}
