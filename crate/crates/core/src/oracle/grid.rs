//! Brute-force Bayes filter on a discretized Glauber phase plane.
//!
//! A grid stores density values at the nodes
//! `center + e^{i rotation} (x_i + i x_j)`, `x_i = (i - N/2) h`, with respect to the
//! measure `d xi = dRe dIm / (pi hbar)`. A Gaussian with `E|xi - z|^2 = hbar Sigma`
//! has density `exp(-|xi - z|^2 / (hbar Sigma)) / Sigma`.
//!
//! One filter step multiplies the prior by the output likelihood and pushes it
//! through the transition kernel conditioned on the observed output,
//! `xi | xi', eta ~ CN(A xi' + b, hbar s)` with `A = phi + upsilon gamma / nu1`,
//! `b = beta u - upsilon (eta - delta u) / nu1`, `s = sigma - |upsilon|^2 / nu1`.
//! Rotating the output frame by `arg A` makes that kernel separable in the two
//! frame axes, so the sum over all node pairs is two dense matrix products.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GaussianState, MeasurementModel, OscillatorModel};

pub const DEFAULT_RESOLUTION: usize = 256;
/// Output windows span this many `sqrt(hbar (Sigma + sigma + 1))` either side.
pub const WINDOW_SCALE: f64 = 6.0;
pub const MIN_EVIDENCE: f64 = 1e-300;
/// Kernels must have variance at least this many cell areas.
pub const MIN_CELLS_PER_KERNEL: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    /// Row-major `values[i * resolution + j]`, `i` along the rotated real axis.
    pub values: Vec<f64>,
    pub center: Complex64,
    pub half_width: f64,
    pub resolution: usize,
    /// Frame angle of the grid axes.
    pub rotation: f64,
    pub hbar: f64,
}

impl PhaseGrid {
    pub fn from_fn(
        center: Complex64,
        half_width: f64,
        resolution: usize,
        rotation: f64,
        hbar: f64,
        f: impl Fn(Complex64) -> f64,
    ) -> Result<Self> {
        if resolution < 8 {
            return Err(Error::InvalidParameter(format!("grid resolution {resolution} < 8")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidParameter(format!("grid half-width must be > 0, got {half_width}")));
        }
        let mut g = PhaseGrid { values: Vec::new(), center, half_width, resolution, rotation, hbar };
        g.values = (0..resolution * resolution).map(|idx| f(g.node(idx / resolution, idx % resolution))).collect();
        Ok(g)
    }

    /// Samples the circular Gaussian `state` on a window of `6 sqrt(hbar (Sigma + 1))`.
    pub fn from_gaussian(state: &GaussianState, hbar: f64, resolution: usize) -> Result<Self> {
        let hw = WINDOW_SCALE * (hbar * (state.sigma + 1.0)).sqrt();
        Self::gaussian_on(state, hbar, state.z, hw, resolution, 0.0)
    }

    pub fn gaussian_on(
        state: &GaussianState,
        hbar: f64,
        center: Complex64,
        half_width: f64,
        resolution: usize,
        rotation: f64,
    ) -> Result<Self> {
        if state.sigma == 0.0 {
            return Self::point_mass(state.z, hbar, half_width, resolution);
        }
        Self::from_fn(center, half_width, resolution, rotation, hbar, |xi| gaussian_density(xi, state, hbar))
    }

    /// Unit mass on the central node, placed at `xi`.
    pub fn point_mass(xi: Complex64, hbar: f64, half_width: f64, resolution: usize) -> Result<Self> {
        let mut g = Self::from_fn(xi, half_width, resolution, 0.0, hbar, |_| 0.0)?;
        let c = resolution / 2;
        g.values[c * resolution + c] = 1.0 / g.cell_weight();
        Ok(g)
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.resolution as f64
    }

    /// Frame coordinate of index `i`.
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - (self.resolution / 2) as f64) * self.spacing()
    }

    pub fn node(&self, i: usize, j: usize) -> Complex64 {
        self.center + Complex64::from_polar(1.0, self.rotation) * Complex64::new(self.coord(i), self.coord(j))
    }

    /// Measure of one cell, `h^2 / (pi hbar)`.
    pub fn cell_weight(&self) -> f64 {
        self.spacing().powi(2) / (std::f64::consts::PI * self.hbar)
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_weight()
    }

    pub fn normalize(&mut self) {
        let m = self.mass();
        if m > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= m);
        }
    }

    /// Mass in the outermost ring of nodes, a proxy for window truncation.
    pub fn edge_mass(&self) -> f64 {
        let n = self.resolution;
        let ring: f64 = (0..n * n)
            .filter(|idx| {
                let (i, j) = (idx / n, idx % n);
                i == 0 || j == 0 || i == n - 1 || j == n - 1
            })
            .map(|idx| self.values[idx].abs())
            .sum();
        ring * self.cell_weight()
    }
}

pub fn gaussian_density(xi: Complex64, state: &GaussianState, hbar: f64) -> f64 {
    (-(xi - state.z).norm_sqr() / (hbar * state.sigma)).exp() / state.sigma
}

/// Mean and dimensionless variance `E|xi - mean|^2 / hbar` of a grid.
pub fn grid_moments(g: &PhaseGrid) -> (Complex64, f64) {
    let n = g.resolution;
    let mut mass = 0.0;
    let mut first = Complex64::default();
    for (idx, &v) in g.values.iter().enumerate() {
        mass += v;
        first += v * g.node(idx / n, idx % n);
    }
    let mean = first / mass;
    let second: f64 = g.values.iter().enumerate().map(|(idx, &v)| v * (g.node(idx / n, idx % n) - mean).norm_sqr()).sum();
    (mean, second / mass / g.hbar)
}

/// Pushes weighted prior mass `w(xi')` through `xi ~ CN(a xi' + b, hbar s)` and
/// renders it on a frame rotated by `arg a` relative to the input.
fn transport(
    prior: &PhaseGrid,
    weights: &[f64],
    a: Complex64,
    b: Complex64,
    s: f64,
    center: Complex64,
    half_width: f64,
) -> Result<PhaseGrid> {
    let n = prior.resolution;
    let hbar = prior.hbar;
    let modulus = a.norm();
    let rotation = prior.rotation + if modulus > 0.0 { a.arg() } else { 0.0 };
    if s <= 0.0 {
        if modulus == 0.0 {
            let mut g = PhaseGrid::point_mass(b, hbar, half_width, n)?;
            let total: f64 = weights.iter().sum::<f64>() * prior.cell_weight();
            g.values.iter_mut().for_each(|v| *v *= total);
            return Ok(g);
        }
        // deterministic map: the frame is carried along with spacing |a| h
        let values = weights.iter().map(|w| w / (modulus * modulus)).collect();
        return Ok(PhaseGrid {
            values,
            center: a * prior.center + b,
            half_width: prior.half_width * modulus,
            resolution: n,
            rotation,
            hbar,
        });
    }
    let mut out = PhaseGrid { values: vec![0.0; n * n], center, half_width, resolution: n, rotation, hbar };
    let d = Complex64::from_polar(1.0, -rotation) * (center - a * prior.center - b);
    let hs = hbar * s;
    let kernel = |offset: f64| {
        DMatrix::from_fn(n, n, |i, k| {
            let r = out.coord(i) - modulus * prior.coord(k) + offset;
            (-r * r / hs).exp()
        })
    };
    let k1 = kernel(d.re);
    let k2 = kernel(d.im);
    let w = DMatrix::from_row_slice(n, n, weights);
    let result = &k1 * w * k2.transpose() * (prior.cell_weight() / s);
    for i in 0..n {
        for j in 0..n {
            out.values[i * n + j] = result[(i, j)];
        }
    }
    Ok(out)
}

/// Conditional kernel of `xi` given `xi'` and the output, see the module docs.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ConditionalKernel {
    a: Complex64,
    s: f64,
    nu1: f64,
}

impl ConditionalKernel {
    fn new(m: &OscillatorModel, meas: &MeasurementModel) -> Result<Self> {
        let nu1 = m.nu + meas.mu;
        if !(nu1 > 0.0) {
            return Err(Error::SingularInnovation { psi: nu1 });
        }
        let mut s = m.sigma - m.upsilon.norm_sqr() / nu1;
        if s < 0.0 {
            if s < -1e-12 * m.sigma.abs().max(1.0) {
                return Err(Error::InvalidParameter(format!(
                    "noise covariance is not positive semidefinite (conditional variance {s:e})"
                )));
            }
            s = 0.0;
        }
        Ok(ConditionalKernel { a: m.phi + m.upsilon * m.gamma / nu1, s, nu1 })
    }

    fn offset(&self, m: &OscillatorModel, u: Complex64, eta: Complex64) -> Complex64 {
        m.beta * u - m.upsilon * (eta - m.delta * u) / self.nu1
    }
}

/// The joint predictive density `g(xi, eta)` of the next state and output,
/// evaluated lazily at the observed output.
#[derive(Debug, Clone)]
pub struct JointDensity {
    pub prior: PhaseGrid,
    pub model: OscillatorModel,
    pub meas: MeasurementModel,
    pub u: Complex64,
    kernel: ConditionalKernel,
    out_half_width: f64,
}

pub fn grid_predict(
    prior: &PhaseGrid,
    m: &OscillatorModel,
    meas: &MeasurementModel,
    u: Complex64,
) -> Result<JointDensity> {
    let kernel = ConditionalKernel::new(m, meas)?;
    let mut prior = prior.clone();
    prior.normalize();
    let (_, prior_var) = grid_moments(&prior);
    let hbar = prior.hbar;
    let out_half_width = WINDOW_SCALE * (hbar * (prior_var + m.sigma + 1.0)).sqrt();
    let h_in = prior.spacing();
    let h_out = 2.0 * out_half_width / prior.resolution as f64;
    let check = |variance: f64, h: f64| {
        let cell = h * h;
        if variance < MIN_CELLS_PER_KERNEL * cell {
            Err(Error::GridUnderresolved { kernel_variance: variance, cell_area: cell })
        } else {
            Ok(())
        }
    };
    if kernel.s > 0.0 {
        check(hbar * kernel.s, h_out)?;
        if kernel.a.norm() > 0.0 {
            check(hbar * kernel.s / kernel.a.norm_sqr(), h_in)?;
        }
    }
    if m.gamma.norm() > 0.0 {
        check(hbar * kernel.nu1 / m.gamma.norm_sqr(), h_in)?;
    }
    Ok(JointDensity { prior, model: *m, meas: *meas, u, kernel, out_half_width })
}

impl JointDensity {
    /// Output likelihood `exp(-|eta - gamma xi' - delta u|^2 / (hbar nu1)) / nu1` on the prior nodes.
    fn likelihood(&self, eta: Complex64) -> Vec<f64> {
        let p = &self.prior;
        let n = p.resolution;
        let hn = p.hbar * self.kernel.nu1;
        (0..n * n)
            .map(|idx| {
                let xi = p.node(idx / n, idx % n);
                let r = eta - self.model.gamma * xi - self.model.delta * self.u;
                (-r.norm_sqr() / hn).exp() / self.kernel.nu1
            })
            .collect()
    }

    /// Output density `r(eta)` with respect to `d eta / (pi hbar)`.
    pub fn evidence(&self, eta: Complex64) -> f64 {
        let w: f64 = self.likelihood(eta).iter().zip(&self.prior.values).map(|(l, p)| l * p).sum();
        w * self.prior.cell_weight()
    }

    /// Direct quadrature of `g(xi, eta)` at one point.
    pub fn density(&self, xi: Complex64, eta: Complex64) -> f64 {
        let p = &self.prior;
        let n = p.resolution;
        let b = self.kernel.offset(&self.model, self.u, eta);
        let lik = self.likelihood(eta);
        if self.kernel.s <= 0.0 {
            return f64::NAN;
        }
        let hs = p.hbar * self.kernel.s;
        let sum: f64 = (0..n * n)
            .map(|idx| {
                let mean = self.kernel.a * p.node(idx / n, idx % n) + b;
                lik[idx] * p.values[idx] * (-(xi - mean).norm_sqr() / hs).exp() / self.kernel.s
            })
            .sum();
        sum * p.cell_weight()
    }

    /// `int g(xi, eta) d eta`: the prior pushed through the state transition alone.
    pub fn predicted_marginal(&self) -> Result<PhaseGrid> {
        let (mean, _) = grid_moments(&self.prior);
        let m = &self.model;
        let center = m.phi * mean + m.beta * self.u;
        transport(&self.prior, &self.prior.values, m.phi, m.beta * self.u, m.sigma, center, self.out_half_width)
    }

    /// Posterior `g(xi, eta) / r(eta)`.
    pub fn condition(&self, eta: Complex64) -> Result<PhaseGrid> {
        let lik = self.likelihood(eta);
        let weights: Vec<f64> = lik.iter().zip(&self.prior.values).map(|(l, p)| l * p).collect();
        let evidence = weights.iter().sum::<f64>() * self.prior.cell_weight();
        if !(evidence >= MIN_EVIDENCE) {
            return Err(Error::ZeroEvidence { evidence });
        }
        let weights: Vec<f64> = weights.iter().map(|w| w / evidence).collect();
        let reweighted = PhaseGrid { values: weights.clone(), ..self.prior.clone() };
        let (mean, _) = grid_moments(&reweighted);
        let b = self.kernel.offset(&self.model, self.u, eta);
        let center = self.kernel.a * mean + b;
        let mut out = transport(&self.prior, &weights, self.kernel.a, b, self.kernel.s, center, self.out_half_width)?;
        out.normalize();
        Ok(out)
    }
}

pub fn grid_condition(joint: &JointDensity, eta: Complex64) -> Result<PhaseGrid> {
    joint.condition(eta)
}

/// Chained grid updates; returns the posterior grids for `k = 0..=K`.
pub fn grid_filter(
    prior: &PhaseGrid,
    m: &OscillatorModel,
    meas: &MeasurementModel,
    controls: &[Complex64],
    etas: &[Complex64],
) -> Result<Vec<PhaseGrid>> {
    if controls.len() != etas.len() {
        return Err(Error::InvalidParameter("record length mismatch".into()));
    }
    let mut out = vec![prior.clone()];
    for (&u, &eta) in controls.iter().zip(etas) {
        let joint = grid_predict(out.last().expect("nonempty"), m, meas, u)?;
        out.push(joint.condition(eta)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionReport {
    pub sigma: f64,
    pub resolution: usize,
    /// Max absolute deviation from the analytic Gaussian of variance `Sigma + 1`.
    pub max_abs_deviation: f64,
    pub output_variance: f64,
}

/// Convolves a Gaussian symbol of variance `Sigma` with the unit Gaussian of
/// width `hbar` on a grid and compares with the Gaussian of variance `Sigma + 1`.
pub fn convolution_check(sigma: f64, resolution: usize) -> Result<ConvolutionReport> {
    convolution_check_mixture(&[(1.0, GaussianState { z: Complex64::default(), sigma })], resolution)
}

/// Mixture form: `sum_i w_i N(z_i, Sigma_i)` must map to `sum_i w_i N(z_i, Sigma_i + 1)`.
pub fn convolution_check_mixture(components: &[(f64, GaussianState)], resolution: usize) -> Result<ConvolutionReport> {
    if components.is_empty() {
        return Err(Error::InvalidParameter("empty mixture".into()));
    }
    if components.iter().any(|(w, s)| !(*w >= 0.0) || !(s.sigma >= 0.0)) {
        return Err(Error::InvalidParameter("mixture weights and variances must be >= 0".into()));
    }
    let total: f64 = components.iter().map(|(w, _)| w).sum();
    let hbar = 1.0;
    let spread = components.iter().map(|(_, s)| s.z.norm() + (s.sigma + 2.0).sqrt() * WINDOW_SCALE).fold(0.0, f64::max);
    let hw = spread;
    let mut input = PhaseGrid::from_fn(Complex64::default(), hw, resolution, 0.0, hbar, |_| 0.0)?;
    for (w, s) in components {
        let part = if s.sigma == 0.0 {
            // point masses need a node: shift onto the nearest one
            let h = input.spacing();
            let snapped = Complex64::new((s.z.re / h).round() * h, (s.z.im / h).round() * h);
            let mut g = PhaseGrid::point_mass(Complex64::default(), hbar, hw, resolution)?;
            let c = resolution / 2;
            let (di, dj) = ((snapped.re / h).round() as i64, (snapped.im / h).round() as i64);
            let v = g.values[c * resolution + c];
            g.values[c * resolution + c] = 0.0;
            let (i, j) = ((c as i64 + di) as usize, (c as i64 + dj) as usize);
            g.values[i * resolution + j] = v;
            g
        } else {
            PhaseGrid::gaussian_on(s, hbar, Complex64::default(), hw, resolution, 0.0)?
        };
        input.values.iter_mut().zip(&part.values).for_each(|(a, b)| *a += w / total * b);
    }
    let out = transport(&input, &input.values, Complex64::new(1.0, 0.0), Complex64::default(), 1.0, Complex64::default(), hw)?;
    let mut max_dev: f64 = 0.0;
    let n = resolution;
    for idx in 0..n * n {
        let xi = out.node(idx / n, idx % n);
        let expected: f64 = components
            .iter()
            .map(|(w, s)| {
                let z = if s.sigma == 0.0 {
                    let h = input.spacing();
                    Complex64::new((s.z.re / h).round() * h, (s.z.im / h).round() * h)
                } else {
                    s.z
                };
                w / total * gaussian_density(xi, &GaussianState { z, sigma: s.sigma + 1.0 }, hbar)
            })
            .sum();
        max_dev = max_dev.max((out.values[idx] - expected).abs());
    }
    let (_, var) = grid_moments(&out);
    Ok(ConvolutionReport { sigma: components[0].1.sigma, resolution, max_abs_deviation: max_dev, output_variance: var })
}
