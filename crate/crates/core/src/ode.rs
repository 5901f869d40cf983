//! Fixed-step RK4 for the scalar Riccati equations.

/// One classical RK4 step of `dy/dt = f(y)` with (possibly negative) step `h`.
pub fn rk4_step(f: impl Fn(f64) -> f64, y: f64, h: f64) -> f64 {
    let k1 = f(y);
    let k2 = f(y + 0.5 * h * k1);
    let k3 = f(y + 0.5 * h * k2);
    let k4 = f(y + h * k3);
    y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Integrates forward from `y0` over `n` steps of size `h`; returns `n + 1` samples.
pub fn integrate_forward(f: impl Fn(f64) -> f64, y0: f64, h: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(y0);
    let mut y = y0;
    for _ in 0..n {
        y = rk4_step(&f, y, h);
        out.push(y);
    }
    out
}

/// Integrates `dy/dt = f(y)` backward from the terminal value `y_end`;
/// returns samples at `t_0, ..., t_n` in forward order.
pub fn integrate_backward(f: impl Fn(f64) -> f64, y_end: f64, h: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    out[n] = y_end;
    let mut y = y_end;
    for i in (0..n).rev() {
        y = rk4_step(&f, y, -h);
        out[i] = y;
    }
    out
}

/// Composite trapezoid rule on uniform samples.
pub fn trapezoid(samples: &[f64], h: f64) -> f64 {
    match samples.len() {
        0 | 1 => 0.0,
        n => h * (samples.iter().sum::<f64>() - 0.5 * (samples[0] + samples[n - 1])),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_exponential_decay() {
        let path = integrate_forward(|y| -y, 1.0, 0.01, 100);
        assert!((path[100] - (-1.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn backward_recovers_initial_value() {
        let path = integrate_backward(|y| 2.0 * y, (2.0f64).exp(), 0.001, 1000);
        assert!((path[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn trapezoid_is_exact_for_linear() {
        let samples: Vec<f64> = (0..=10).map(|i| 3.0 * i as f64 * 0.1).collect();
        assert!((trapezoid(&samples, 0.1) - 1.5).abs() < 1e-14);
    }
}
