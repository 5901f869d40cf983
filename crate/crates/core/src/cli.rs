//! Manifest-driven runner behind the `qlqg` binary.
//!
//! Paths inside a manifest are resolved relative to the manifest file.
//! Exit codes: 0 success, 1 I/O, 2 validation, 3 numerical failure.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::Parser;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::control::{minimal_loss_innovation_form, minimal_loss_value_form, solve};
use crate::error::Error;
use crate::exec::{with_threads, Execution};
use crate::filtering::{self, FilterState};
use crate::io::{self, ErrorPayload};
use crate::model::{
    matched_line_preset, validate_model, ContinuousModelFile, CostFile, CostModel, GaussianState, MeasurementModel,
    ModelFile, OscillatorModel, StateFile,
};
use crate::oracle;
use crate::simulator::{self, continuum_study, Simulator};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "qlqg", version, about = "Quantum LQG filtering, control and verification runs")]
pub struct Args {
    /// Run manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Overrides the manifest seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the manifest output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the manifest worker count.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Filter,
    Control,
    Simulate,
    OracleCheck,
    Continuum,
}

fn default_samples() -> usize {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub mode: Mode,
    /// Discrete model file.
    #[serde(default)]
    pub model: Option<PathBuf>,
    /// Continuous model file, discretized at `dt` when `model` is absent.
    #[serde(default)]
    pub continuous_model: Option<PathBuf>,
    #[serde(default)]
    pub dt: Option<f64>,
    /// Cost file; derived from the continuous model when absent.
    #[serde(default)]
    pub cost: Option<PathBuf>,
    /// Initial state file.
    #[serde(default)]
    pub init: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Monte-Carlo trajectory count.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Measurement record CSV (`eta_re, eta_im, u_re, u_im`); sampled when absent.
    #[serde(default)]
    pub record: Option<PathBuf>,
    /// Length of a sampled record.
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub dt_list: Option<Vec<f64>>,
    #[serde(default = "default_samples")]
    pub sample_trajectories: usize,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub resolution: Option<usize>,
    #[serde(default)]
    pub execution: Option<Execution>,
}

#[derive(Debug)]
pub enum CliError {
    Io(String),
    Lib(Error),
    /// The oracle suite ran but a residual exceeded its threshold.
    CheckFailed,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => EXIT_IO,
            CliError::Lib(e) if e.is_validation() => EXIT_VALIDATION,
            CliError::Lib(_) | CliError::CheckFailed => EXIT_NUMERICAL,
        }
    }

    pub fn payload(&self) -> ErrorPayload {
        match self {
            CliError::Lib(e) => ErrorPayload::from_error(e, self.exit_code()),
            CliError::Io(msg) => {
                ErrorPayload { error: "Io".into(), message: msg.clone(), exit_code: EXIT_IO, details: None }
            }
            CliError::CheckFailed => ErrorPayload {
                error: "OracleCheckFailed".into(),
                message: "oracle residuals exceed their thresholds, see oracle_report.json".into(),
                exit_code: EXIT_NUMERICAL,
                details: None,
            },
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())).into())
}

fn missing(field: &str, mode: Mode) -> CliError {
    Error::InvalidParameter(format!("manifest field `{field}` is required for mode {mode:?}")).into()
}

/// A manifest with every path made absolute and the CLI overrides applied.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub manifest: RunManifest,
    pub base: PathBuf,
    pub out: PathBuf,
}

impl Resolved {
    pub fn load(args: &Args) -> CliResult<Self> {
        let mut manifest: RunManifest = read_json(&args.manifest)?;
        let base = args.manifest.parent().map(Path::to_path_buf).unwrap_or_default();
        if let Some(seed) = args.seed {
            manifest.seed = seed;
        }
        if args.threads.is_some() {
            manifest.threads = args.threads;
        }
        let out = match (&args.out, &manifest.out) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => base.join(o),
            (None, None) => PathBuf::from("out"),
        };
        Ok(Resolved { manifest, base, out })
    }

    fn path(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    fn model(&self) -> CliResult<(OscillatorModel, MeasurementModel)> {
        let m = &self.manifest;
        let (model, meas) = match (&m.model, &m.continuous_model) {
            (Some(p), _) => read_json::<ModelFile>(&self.path(p))?.into_model()?,
            (None, Some(p)) => {
                let c = read_json::<ContinuousModelFile>(&self.path(p))?.into_model()?;
                let dt = m.dt.ok_or_else(|| missing("dt", m.mode))?;
                matched_line_preset(&c, dt)?
            }
            (None, None) => return Err(missing("model", m.mode)),
        };
        validate_model(&model, &meas).into_result()?;
        Ok((model, meas))
    }

    fn cost(&self) -> CliResult<CostModel> {
        let m = &self.manifest;
        match (&m.cost, &m.continuous_model) {
            (Some(p), _) => Ok(read_json::<CostFile>(&self.path(p))?.into_cost()?),
            (None, Some(p)) => {
                let c = read_json::<ContinuousModelFile>(&self.path(p))?.into_model()?;
                Ok(c.discrete_cost(m.dt.ok_or_else(|| missing("dt", m.mode))?)?)
            }
            (None, None) => Err(missing("cost", m.mode)),
        }
    }

    fn init(&self) -> CliResult<GaussianState> {
        let p = self.manifest.init.as_ref().ok_or_else(|| missing("init", self.manifest.mode))?;
        Ok(read_json::<StateFile>(&self.path(p))?.into_state()?)
    }

    /// The given record, or an open-loop (`u = 0`) record sampled from the
    /// model's own innovation law under the manifest seed.
    fn record(
        &self,
        m: &OscillatorModel,
        meas: &MeasurementModel,
        init: &GaussianState,
        default_steps: usize,
    ) -> CliResult<(Vec<Complex64>, Vec<Complex64>)> {
        if let Some(p) = &self.manifest.record {
            let path = self.path(p);
            let f = File::open(&path).map_err(|e| io_err(&path, e))?;
            return Ok(io::read_record(f)?);
        }
        let steps = self.manifest.steps.unwrap_or(default_steps);
        let mut rng = simulator::stream_rng(self.manifest.seed, 0);
        let mut current = FilterState::initial(*init);
        let controls = vec![Complex64::new(0.0, 0.0); steps];
        let mut etas = Vec::with_capacity(steps);
        for &u in &controls {
            let eta = simulator::sample_eta(&current.state, u, m, meas, &mut rng)?;
            current = filtering::step(&current, u, eta, m, meas)?;
            etas.push(eta);
        }
        Ok((controls, etas))
    }

    fn write(&self, name: &str, contents: &str) -> CliResult<PathBuf> {
        let path = self.out.join(name);
        io::write_file(&path, contents).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }

    fn write_with(&self, name: &str, f: impl FnOnce(BufWriter<File>) -> std::io::Result<()>) -> CliResult<PathBuf> {
        let path = self.out.join(name);
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        f(BufWriter::new(file)).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }
}

#[derive(Debug, Serialize)]
struct ControlSummary {
    horizon: usize,
    alpha_opt: f64,
    alpha_opt_innovation_form: f64,
    alpha_opt_value_form: f64,
    omega_0: f64,
    d_0: f64,
}

#[derive(Debug, Serialize)]
struct SimulateSummary {
    seed: u64,
    #[serde(flatten)]
    summary: simulator::McSummary,
    z_score: f64,
}

/// Runs one manifest and returns the artifact paths written.
pub fn run(r: &Resolved) -> CliResult<Vec<PathBuf>> {
    std::fs::create_dir_all(&r.out).map_err(|e| io_err(&r.out, e))?;
    let threads = r.manifest.threads;
    with_threads(threads, || run_mode(r))
}

fn run_mode(r: &Resolved) -> CliResult<Vec<PathBuf>> {
    let m = &r.manifest;
    let exec = m.execution.unwrap_or_default();
    let mut written = Vec::new();
    match m.mode {
        Mode::Filter => {
            let (model, meas) = r.model()?;
            let init = r.init()?;
            let (controls, etas) = r.record(&model, &meas, &init, 100)?;
            let run = filtering::run(&model, &meas, init, &controls, &etas)?;
            written.push(r.write_with("filter.csv", |w| io::write_filter_csv(w, &run))?);
        }
        Mode::Control => {
            let (model, meas) = r.model()?;
            let cost = r.cost()?;
            let init = r.init()?;
            let sol = solve(&model, &meas, &cost, &init)?;
            written.push(r.write_with("control.csv", |w| io::write_control_csv(w, &sol.control))?);
            let summary = ControlSummary {
                horizon: cost.horizon,
                alpha_opt: sol.alpha_opt,
                alpha_opt_innovation_form: minimal_loss_innovation_form(&sol.control, &sol.profile, &init, &model, &cost),
                alpha_opt_value_form: minimal_loss_value_form(&sol.control, &init, &model),
                omega_0: sol.control.omega[0],
                d_0: sol.control.d[0],
            };
            written.push(r.write("control_summary.json", &io::to_json(&summary))?);
        }
        Mode::Simulate => {
            let (model, meas) = r.model()?;
            let cost = r.cost()?;
            let init = r.init()?;
            let n = m.n.ok_or_else(|| missing("n", m.mode))?;
            let sim = Simulator::new(model, meas, cost, init)?;
            let summary = sim.monte_carlo(n, m.seed, exec)?;
            let out = SimulateSummary { seed: m.seed, summary, z_score: summary.z_score() };
            written.push(r.write("mc_summary.json", &io::to_json(&out))?);
            let mut abs_z = Vec::new();
            for i in 0..m.sample_trajectories.min(n) {
                let t = sim.closed_loop(m.seed, i as u64)?;
                written.push(r.write_with(&format!("trajectory_{i}.csv"), |w| io::write_filter_csv(w, &t.posterior))?);
                abs_z.push((format!("trajectory {i}"), t.posterior.states.iter().map(|s| s.state.z.norm()).collect()));
            }
            let sigma = vec![("Sigma_k".to_string(), sim.solution.profile.sigma.clone())];
            let omega = vec![("Omega_k".to_string(), sim.solution.control.omega.clone())];
            written.push(r.write("sigma.svg", &io::line_plot_svg("posterior variance", "Sigma_k", &sigma))?);
            written.push(r.write("omega.svg", &io::line_plot_svg("control Riccati solution", "Omega_k", &omega))?);
            written.push(r.write("z_abs.svg", &io::line_plot_svg("posterior mean modulus", "|z_k|", &abs_z))?);
        }
        Mode::OracleCheck => {
            let (model, meas) = r.model()?;
            let init = r.init()?;
            let (controls, etas) = r.record(&model, &meas, &init, 3)?;
            let res = m.resolution.unwrap_or(oracle::grid::DEFAULT_RESOLUTION);
            let report = oracle::oracle_suite(&model, &meas, &init, &controls, &etas, res)?;
            written.push(r.write("oracle_report.json", &io::to_json(&report))?);
            if !report.pass {
                return Err(CliError::CheckFailed);
            }
        }
        Mode::Continuum => {
            let p = m.continuous_model.as_ref().ok_or_else(|| missing("continuous_model", m.mode))?;
            let c = read_json::<ContinuousModelFile>(&r.path(p))?.into_model()?;
            let init = r.init()?;
            let dt_list = m.dt_list.clone().ok_or_else(|| missing("dt_list", m.mode))?;
            let rows = continuum_study(&c, &dt_list, &init, exec)?;
            written.push(r.write_with("continuum.csv", |w| io::write_continuum_csv(w, &rows))?);
        }
    }
    Ok(written)
}

/// Loads, runs and reports one manifest; returns the process exit code.
pub fn main_with(args: &Args) -> i32 {
    let result = Resolved::load(args).and_then(|r| run(&r).map(|paths| (r, paths)));
    match result {
        Ok((_, paths)) => {
            if !args.quiet {
                for p in paths {
                    println!("wrote {}", p.display());
                }
            }
            EXIT_OK
        }
        Err(e) => {
            let payload = e.payload();
            let json = io::to_json(&payload);
            eprint!("{json}");
            if let Ok(r) = Resolved::load(args) {
                if std::fs::create_dir_all(&r.out).is_ok() {
                    let _ = io::write_file(&r.out.join("error.json"), &json);
                }
            }
            payload.exit_code
        }
    }
}
