//! Truncated number-basis checks of the coherent-measurement optimality
//! identities and of the measurement second-moment bound.
//!
//! With `x_hat = c a` (annihilation channel) the normally ordered Gaussian
//! `#n(z - x_hat)#` of minimal variance `v = |c|^2 hbar` is proportional to the
//! coherent projector `|z/c><z/c|`, a right eigen-projector of `x_hat`, so
//! `(z - x_hat) #n(z - x_hat)# = 0`. For the creation channel `x_hat = c a*`
//! the adjoint identity `#n(z - x_hat)# (z - x_hat) = 0` holds instead.
//!
//! `#exp(-t |xi - alpha|^2)#` with annihilators to the right is
//! `e^{-t|alpha|^2} exp(t alpha a*) diag((1 - t)^n) exp(t conj(alpha) a)`. The
//! truncated factors are lower/upper triangular, so the truncated product
//! equals the projection of the exact operator.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_DIM: usize = 20;
pub const MAX_TAIL_MASS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    pub dim: usize,
    pub matrix: DMatrix<Complex64>,
}

impl FockOperator {
    pub fn annihilation(dim: usize) -> Self {
        let matrix = DMatrix::from_fn(dim, dim, |m, n| {
            if n == m + 1 {
                Complex64::new((n as f64).sqrt(), 0.0)
            } else {
                Complex64::default()
            }
        });
        FockOperator { dim, matrix }
    }

    pub fn creation(dim: usize) -> Self {
        let a = Self::annihilation(dim);
        FockOperator { dim, matrix: a.matrix.adjoint() }
    }

    pub fn identity(dim: usize) -> Self {
        FockOperator { dim, matrix: DMatrix::identity(dim, dim) }
    }

    pub fn adjoint(&self) -> Self {
        FockOperator { dim: self.dim, matrix: self.matrix.adjoint() }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        FockOperator { dim: self.dim, matrix: &self.matrix * c }
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// `exp(t alpha a*)` truncated: `U[m][n] = (t alpha)^{m-n} / (m-n)! sqrt(m! / n!)`.
fn displacement_factor(dim: usize, x: Complex64) -> DMatrix<Complex64> {
    let ln_fact: Vec<f64> = (0..=dim).scan(0.0, |acc, k| {
        if k > 0 {
            *acc += (k as f64).ln();
        }
        Some(*acc)
    })
    .collect();
    DMatrix::from_fn(dim, dim, |m, n| {
        if m < n {
            return Complex64::default();
        }
        let p = (m - n) as i32;
        let log_mag = -ln_fact[m - n] + 0.5 * (ln_fact[m] - ln_fact[n]);
        x.powi(p) * log_mag.exp()
    })
}

/// The normally ordered Gaussian `#exp(-t |xi - alpha|^2)#` with `0 <= t <= 1`.
pub fn normal_ordered_gaussian(dim: usize, alpha: Complex64, t: f64) -> Result<FockOperator> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!("normal-ordered width t = {t} outside [0, 1]")));
    }
    let u = displacement_factor(dim, alpha * t);
    let diag = DMatrix::from_fn(dim, dim, |m, n| {
        if m == n {
            Complex64::new((1.0 - t).powi(m as i32), 0.0)
        } else {
            Complex64::default()
        }
    });
    let matrix = &u * diag * u.adjoint() * Complex64::new((-t * alpha.norm_sqr()).exp(), 0.0);
    Ok(FockOperator { dim, matrix })
}

/// Number-state mass of the coherent state `|alpha>` beyond `dim - 1`.
pub fn coherent_tail_mass(alpha: Complex64, dim: usize) -> f64 {
    let x = alpha.norm_sqr();
    let mut term = (-x).exp();
    let mut inside = 0.0;
    for n in 0..dim {
        inside += term;
        term *= x / (n + 1) as f64;
    }
    (1.0 - inside).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    /// `x_hat = c a`, `epsilon > 0`.
    Annihilation,
    /// `x_hat = c a*`, `epsilon < 0`.
    Creation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectorReport {
    pub channel: Channel,
    pub dim: usize,
    pub kappa_scale: Complex64,
    /// Variance of the measurement noise relative to the minimum `|c|^2 hbar`.
    pub variance_ratio: f64,
    /// Sup over the sample of the Frobenius norm of the identity's left side.
    pub max_residual: f64,
    pub max_tail_mass: f64,
}

/// Evaluates `(z - x_hat) #n(z - x_hat)#` (annihilation) or
/// `#n(z - x_hat)# (z - x_hat)` (creation) for each `z` in `z_samples`, where
/// `n` is the circular Gaussian with variance `variance_ratio * |c|^2 hbar`.
pub fn coherent_projector_check(
    kappa_scale: Complex64,
    variance_ratio: f64,
    dim: usize,
    channel: Channel,
    z_samples: &[Complex64],
) -> Result<ProjectorReport> {
    if dim < MIN_DIM {
        return Err(Error::InvalidParameter(format!("Fock dimension {dim} < {MIN_DIM}")));
    }
    if kappa_scale.norm() == 0.0 || !(variance_ratio >= 1.0) {
        return Err(Error::InvalidParameter("need c != 0 and variance at or above the minimum".into()));
    }
    // the normal-ordered symbol of c a has variance |c|^2 hbar, so t = 1 / ratio
    let t = 1.0 / variance_ratio;
    let a = match channel {
        Channel::Annihilation => FockOperator::annihilation(dim),
        Channel::Creation => FockOperator::creation(dim),
    };
    let x_hat = a.scale(kappa_scale);
    let mut max_residual: f64 = 0.0;
    let mut max_tail: f64 = 0.0;
    for &z in z_samples {
        let alpha = match channel {
            Channel::Annihilation => z / kappa_scale,
            Channel::Creation => (z / kappa_scale).conj(),
        };
        let tail = coherent_tail_mass(alpha, dim);
        if tail > MAX_TAIL_MASS {
            return Err(Error::TruncationDominated { tail_mass: tail });
        }
        max_tail = max_tail.max(tail);
        let kernel = normal_ordered_gaussian(dim, alpha, t)?;
        let shift = &FockOperator::identity(dim).matrix * z - &x_hat.matrix;
        let lhs = match channel {
            Channel::Annihilation => &shift * &kernel.matrix,
            Channel::Creation => &kernel.matrix * &shift,
        };
        // prefactor hbar / v of the normalized measurement density
        let scale = 1.0 / (variance_ratio * kappa_scale.norm_sqr());
        let residual = lhs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() * scale;
        max_residual = max_residual.max(residual);
    }
    Ok(ProjectorReport { channel, dim, kappa_scale, variance_ratio, max_residual, max_tail_mass: max_tail })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondMomentReport {
    pub pass: bool,
    pub variance: f64,
    pub bound: f64,
    pub slack: f64,
}

/// `E|zeta|^2 >= max(epsilon |kappa|^2 hbar, 0)` for the measurement noise.
pub fn second_moment_bound_check(variance: f64, kappa: Complex64, epsilon: f64, hbar: f64) -> SecondMomentReport {
    let bound = (epsilon * kappa.norm_sqr() * hbar).max(0.0);
    let slack = variance - bound;
    SecondMomentReport { pass: slack >= -crate::model::ADMISSIBILITY_TOLERANCE * bound.max(1.0), variance, bound, slack }
}
