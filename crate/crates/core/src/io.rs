//! Artifact writers: CSV tables at 17 significant digits, pretty JSON and
//! plain SVG line plots. Every writer is a pure function of its input, so
//! reruns produce identical bytes.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use crate::control::ControlSolution;
use crate::error::{Error, Result};
use crate::filtering::FilterRun;
use crate::simulator::ContinuumRow;

/// Full-precision decimal rendering used in every CSV cell.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

fn push_complex(row: &mut Vec<String>, z: Option<Complex64>) {
    match z {
        Some(z) => {
            row.push(fmt_f64(z.re));
            row.push(fmt_f64(z.im));
        }
        None => {
            row.push(String::new());
            row.push(String::new());
        }
    }
}

/// Row `k` holds the posterior after `eta_k`, the gain that produced it and
/// the control `u_k` applied next. Undefined cells (`eta_0`, `kappa_0`,
/// `u_K`) are left empty.
pub fn write_filter_csv<W: Write>(w: W, run: &FilterRun) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["k", "z_re", "z_im", "Sigma", "kappa_re", "kappa_im", "Psi", "eta_re", "eta_im", "u_re", "u_im"])
        .map_err(csv_err)?;
    for (k, s) in run.states.iter().enumerate() {
        let mut row = vec![k.to_string()];
        push_complex(&mut row, Some(s.state.z));
        row.push(fmt_f64(s.state.sigma));
        push_complex(&mut row, s.gain.map(|g| g.kappa));
        row.push(s.gain.map(|g| fmt_f64(g.psi)).unwrap_or_default());
        push_complex(&mut row, k.checked_sub(1).and_then(|j| run.etas.get(j).copied()));
        push_complex(&mut row, run.controls.get(k).copied());
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()
}

/// `lambda` and `Upsilon` are undefined on the terminal row.
pub fn write_control_csv<W: Write>(w: W, sol: &ControlSolution) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["k", "Omega", "lambda_re", "lambda_im", "Upsilon", "Gamma", "d"]).map_err(csv_err)?;
    for k in 0..sol.omega.len() {
        let mut row = vec![k.to_string(), fmt_f64(sol.omega[k])];
        push_complex(&mut row, sol.lambda.get(k).copied());
        row.push(sol.upsilon.get(k).map(|&x| fmt_f64(x)).unwrap_or_default());
        row.push(fmt_f64(sol.gamma[k]));
        row.push(fmt_f64(sol.d[k]));
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()
}

/// Error ratio of consecutive rows; `None` on the first row.
pub fn halving_ratios(rows: &[ContinuumRow]) -> Vec<Option<[f64; 3]>> {
    let mut out = vec![None];
    for w in rows.windows(2) {
        out.push(Some([
            w[0].sigma_err / w[1].sigma_err,
            w[0].omega_err / w[1].omega_err,
            w[0].alpha_err / w[1].alpha_err,
        ]));
    }
    out.truncate(rows.len());
    out
}

pub fn write_continuum_csv<W: Write>(w: W, rows: &[ContinuumRow]) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["dt", "sigma_err", "omega_err", "alpha_err", "sigma_ratio", "omega_ratio", "alpha_ratio"])
        .map_err(csv_err)?;
    for (r, ratio) in rows.iter().zip(halving_ratios(rows)) {
        let mut row = vec![fmt_f64(r.dt), fmt_f64(r.sigma_err), fmt_f64(r.omega_err), fmt_f64(r.alpha_err)];
        match ratio {
            Some(q) => row.extend(q.iter().map(|&x| fmt_f64(x))),
            None => row.extend(std::iter::repeat_n(String::new(), 3)),
        }
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()
}

/// Measurement record read by the `filter` and `oracle-check` modes.
pub fn read_record<R: std::io::Read>(r: R) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    #[derive(serde::Deserialize)]
    struct Row {
        eta_re: f64,
        eta_im: f64,
        u_re: f64,
        u_im: f64,
    }
    let mut etas = Vec::new();
    let mut controls = Vec::new();
    for row in csv::Reader::from_reader(r).deserialize::<Row>() {
        let row = row.map_err(|e| Error::InvalidParameter(format!("record: {e}")))?;
        etas.push(Complex64::new(row.eta_re, row.eta_im));
        controls.push(Complex64::new(row.u_re, row.u_im));
    }
    Ok((controls, etas))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn write_file(path: &Path, contents: &str) -> std::io::Result<()> {
    std::fs::write(path, contents)
}

/// Machine-readable failure written as `error.json` and echoed on stderr.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorPayload {
    pub error: String,
    pub message: String,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
}

impl ErrorPayload {
    pub fn from_error(e: &Error, exit_code: i32) -> Self {
        let details = match e {
            Error::Inadmissible(r) => serde_json::to_value(r).ok(),
            Error::SingularInnovation { psi } => Some(serde_json::json!({ "psi": psi })),
            Error::GridUnderresolved { kernel_variance, cell_area } => {
                Some(serde_json::json!({ "kernel_variance": kernel_variance, "cell_area": cell_area }))
            }
            Error::ZeroEvidence { evidence } => Some(serde_json::json!({ "evidence": evidence })),
            Error::TruncationDominated { tail_mass } => Some(serde_json::json!({ "tail_mass": tail_mass })),
            Error::InvalidParameter(_) => None,
        };
        ErrorPayload { error: e.kind().to_string(), message: e.to_string(), exit_code, details }
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Line plot of each series against its index. Coordinates are rounded to
/// 1e-3 px so output is stable across platforms.
pub fn line_plot_svg(title: &str, y_label: &str, series: &[(String, Vec<f64>)]) -> String {
    let finite = series.iter().flat_map(|(_, v)| v.iter().copied()).filter(|x| x.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-12 * hi.abs().max(1.0) {
        lo -= 0.5;
        hi += 0.5;
    }
    let n_max = series.iter().map(|(_, v)| v.len()).max().unwrap_or(1).max(2);
    let px = |i: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / (n_max - 1) as f64;
    let py = |y: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (y - lo) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(title));
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(s, r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" fill="none" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{x0}" y="{}" text-anchor="middle">0</text>"#, y0 + 16.0);
    let _ = writeln!(s, r#"<text x="{x1}" y="{}" text-anchor="middle">{}</text>"#, y0 + 16.0, n_max - 1);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">k</text>"#, WIDTH / 2.0, y0 + 32.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.4e}</text>"#, x0 - 4.0, y0, lo);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.4e}</text>"#, x0 - 4.0, y1 + 4.0, hi);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for (j, (name, values)) in series.iter().enumerate() {
        let colour = PALETTE[j % PALETTE.len()];
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .filter(|(_, y)| y.is_finite())
            .map(|(i, &y)| format!("{:.3},{:.3}", px(i), py(y)))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#, points.join(" "));
        let ly = MARGIN + 14.0 * j as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{colour}" text-anchor="end">{}</text>"#, x1, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
