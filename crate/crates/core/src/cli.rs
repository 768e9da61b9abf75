//! Command-line front end: `certify`, `simulate`, `sweep`, `refine`.
//!
//! Exit codes: 0 success, 2 config error, 3 certification failed, 4 runtime
//! failure. Outputs are written atomically (temp file, then rename).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, Coupling, RefineProfile, RunConfig};
use crate::control::{BoundaryMode, FeedbackController, LawVariant};
use crate::hyperbolics::{HyperbolicSystem, PerturbationField, RiemannField};
use crate::lyapunov::{
    certify, decay_rate_lower_bound, norm_equivalence_constant, synthesize_gains, DecayCertificate,
    GainPair, WeightProfile,
};
use crate::material::{compute_s_star, DesiredState, InternalState, MaterialParams};
use crate::solver::{
    cosine_bump, fit_decay_rate, format_sig12, run_linear, run_nonlinear, step_linear, Characteristics,
    Diagnostics, Grid, LinearCoupling, NonlinearFields, Record, Scheme, Side, TimeSeries,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CERTIFICATION: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("certification failed: {0}")]
    CertificationFailed(String),

    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::CertificationFailed(_) => EXIT_CERTIFICATION,
            Self::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "forming-feedback", version, about = "Lyapunov boundary feedback for 1D viscoplastic forming")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize gains and check the decay certificate.
    Certify(CommonArgs),
    /// Run the closed loop and write a time series and a summary.
    Simulate(CommonArgs),
    /// Run one simulation per value of `[sweep]`.
    Sweep(CommonArgs),
    /// Grid-refinement study of the transport scheme.
    Refine(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Suppress the one-line report on stdout.
    #[arg(long)]
    pub quiet: bool,
}

/// Parse-free entry point; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let (args, result) = match &cli.command {
        Command::Certify(a) => (a, load(a).and_then(|c| cmd_certify(&c, &a.out))),
        Command::Simulate(a) => (a, load(a).and_then(|c| cmd_simulate(&c, &a.out))),
        Command::Sweep(a) => (a, load(a).and_then(|c| cmd_sweep(&c, &a.out))),
        Command::Refine(a) => (a, load(a).and_then(|c| cmd_refine(&c, &a.out))),
    };
    match result {
        Ok(line) => {
            if !args.quiet {
                println!("{line}");
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load(args: &CommonArgs) -> Result<RunConfig, CliError> {
    Ok(RunConfig::load(&args.config)?)
}

/// Write `contents` to `dir/name` through a temporary sibling.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let io = |e: std::io::Error| CliError::Runtime(format!("writing {name}: {e}"));
    std::fs::create_dir_all(dir).map_err(io)?;
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, contents).map_err(io)?;
    std::fs::rename(&tmp, &target).map_err(io)?;
    Ok(target)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// Everything derived from a config before stepping.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: RunConfig,
    pub params: MaterialParams,
    pub desired: DesiredState,
    pub s_star: f64,
    pub sys: HyperbolicSystem,
    pub gains: GainPair,
    pub certificate: DecayCertificate,
    pub grid: Grid,
}

impl Scenario {
    pub fn new(config: &RunConfig) -> Result<Self, CliError> {
        let params = config.material_params();
        let desired = config.desired_state();
        let s_star = match config.linearization.s_star {
            Some(s) => s,
            None => compute_s_star(
                &config.law,
                &params,
                &desired,
                &InternalState::default(),
                config.linearization.fd_step,
            )
            .map_err(|e| ConfigError::Invalid {
                key: "linearization".into(),
                reason: e.to_string(),
            })?,
        };
        let sys = HyperbolicSystem::new(params.elastic_modulus, s_star).map_err(|e| ConfigError::Invalid {
            key: "linearization.s_star".into(),
            reason: e.to_string(),
        })?;
        let gains = synthesize_gains(&sys, &params);
        let certificate = certify(&sys, &params, gains, config.lyapunov).map_err(|e| ConfigError::Invalid {
            key: "lyapunov".into(),
            reason: e.to_string(),
        })?;
        Ok(Self {
            config: config.clone(),
            params,
            desired,
            s_star,
            sys,
            gains,
            certificate,
            grid: config.grid(),
        })
    }

    pub fn controller(&self, variant: LawVariant) -> FeedbackController {
        FeedbackController::new(self.params, self.desired, self.gains, self.s_star, variant)
            .with_modes(self.config.control.left, self.config.control.right)
    }

    /// The moving boundary: the first side under feedback, preferring `x = 0`.
    pub fn die(&self) -> Side {
        let c = &self.config.control;
        if c.left != BoundaryMode::Feedback && c.right == BoundaryMode::Feedback {
            Side::Right
        } else {
            Side::Left
        }
    }

    pub fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            weights: WeightProfile::new(
                self.certificate.mu_hat,
                self.params.elastic_modulus,
                self.params.length,
            ),
            area: self.params.area,
            die: self.die(),
        }
    }

    fn hump(&self, x: f64) -> f64 {
        let i = &self.config.initial;
        let l = self.params.length;
        cosine_bump(x, i.bump_center * l, i.bump_width * l)
    }

    pub fn initial_perturbation(&self) -> PerturbationField {
        let i = &self.config.initial;
        let mut u = PerturbationField::zeros(self.grid.n_cells);
        for (k, x) in self.grid.centers().enumerate() {
            let h = self.hump(x);
            u.delta_sigma[k] = i.sigma0.map_or(0.0, |s| s - self.desired.sigma_star) + i.bump_sigma * h;
            u.delta_v[k] = i.v0.map_or(0.0, |v| v - self.desired.v_star(x)) + i.bump_v * h;
        }
        u
    }

    pub fn initial_fields(&self) -> NonlinearFields {
        let u = self.initial_perturbation();
        let n = self.grid.n_cells;
        let mut f = NonlinearFields::uniform(n, 0.0, 0.0, InternalState::default());
        for (k, x) in self.grid.centers().enumerate() {
            f.v[k] = self.desired.v_star(x) + u.delta_v[k];
            f.sigma[k] = self.desired.sigma_star + u.delta_sigma[k];
        }
        f
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CertifyReport {
    pub config: serde_json::Value,
    pub s_star: f64,
    pub wave_speed: f64,
    pub gains: GainPair,
    pub certificate: DecayCertificate,
    pub decay_rate_lower_bound: f64,
    pub norm_equivalence_constant: f64,
}

pub fn certify_report(scenario: &Scenario) -> CertifyReport {
    let weights = scenario.diagnostics().weights;
    CertifyReport {
        config: serde_json::to_value(&scenario.config).expect("config serializes"),
        s_star: scenario.s_star,
        wave_speed: scenario.sys.wave_speed(),
        gains: scenario.gains,
        certificate: scenario.certificate,
        decay_rate_lower_bound: decay_rate_lower_bound(&scenario.sys, scenario.certificate.mu_hat),
        norm_equivalence_constant: norm_equivalence_constant(&scenario.sys, &weights),
    }
}

pub fn cmd_certify(config: &RunConfig, out: &Path) -> Result<String, CliError> {
    let scenario = Scenario::new(config)?;
    let report = certify_report(&scenario);
    write_atomic(out, "certificate.json", &to_json(&report))?;
    let c = &report.certificate;
    let line = format!(
        "S* = {}, K0 = {}, K1 = {}, mu_hat = {}, mu = {}, valid = {}",
        format_sig12(report.s_star),
        format_sig12(c.k0),
        format_sig12(c.k1),
        format_sig12(c.mu_hat),
        format_sig12(c.mu),
        c.valid
    );
    if c.valid {
        Ok(line)
    } else {
        Err(CliError::CertificationFailed(line))
    }
}

/// Closed-loop behavior of one feedback variant on the linear system.
#[derive(Debug, Clone, Serialize)]
pub struct VariantOutcome {
    pub variant: LawVariant,
    /// Lyapunov sequence never grows by more than round-off.
    pub non_increasing: bool,
    /// Largest one-record relative growth `L(t_{k+1})/L(t_k) − 1`.
    pub max_relative_increase: f64,
    /// `L(t_end)/L(0)`.
    pub final_ratio: Option<f64>,
    pub blew_up: bool,
    pub failure: Option<String>,
}

/// Relative growth allowed between records before a sequence counts as
/// increasing.
pub const ROUNDOFF_GROWTH: f64 = 1e-12;

pub fn max_relative_increase(series: &TimeSeries) -> f64 {
    series
        .records
        .windows(2)
        .filter(|w| w[0].lyapunov > 0.0)
        .map(|w| w[1].lyapunov / w[0].lyapunov - 1.0)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn adjudicate(scenario: &Scenario, variant: LawVariant) -> VariantOutcome {
    let ctrl = scenario.controller(variant);
    let config = scenario.config.solver_config();
    let out = run_linear(
        &scenario.sys,
        &scenario.grid,
        &scenario.sys.field_to_riemann(&scenario.initial_perturbation()),
        LinearCoupling::Controller(&ctrl),
        &scenario.diagnostics(),
        &config,
    );
    let rec = &out.series.records;
    let growth = max_relative_increase(&out.series);
    let final_ratio = match (rec.first(), rec.last()) {
        (Some(a), Some(b)) if a.lyapunov > 0.0 => Some(b.lyapunov / a.lyapunov),
        _ => None,
    };
    let blew_up = out.error.is_some() || final_ratio.is_some_and(|r| !r.is_finite() || r > 1e6);
    VariantOutcome {
        variant,
        non_increasing: out.error.is_none() && growth <= ROUNDOFF_GROWTH,
        max_relative_increase: if growth.is_finite() { growth } else { 0.0 },
        final_ratio: final_ratio.filter(|r| r.is_finite()),
        blew_up,
        failure: out.error.map(|e| e.to_string()),
    }
}

/// Forming-process view of a nonlinear run, measured at the die.
#[derive(Debug, Clone, Serialize)]
pub struct FormingSummary {
    pub die: Side,
    pub initial_command: f64,
    pub target_force: f64,
    pub final_force: f64,
    pub final_velocity: f64,
    pub final_sigma: f64,
    /// Time after which the die stress stays at or above 99% of `σ*`.
    pub settling_time_99: Option<f64>,
    /// Die force is monotone from the settling time on.
    pub force_monotone_after_settling: bool,
}

/// Last up-crossing of `threshold`, linearly interpolated; `None` when the
/// series ends below it.
pub fn settling_time(points: &[(f64, f64)], threshold: f64) -> Option<f64> {
    let last_below = points.iter().rposition(|&(_, y)| y < threshold);
    match last_below {
        None => points.first().map(|p| p.0),
        Some(k) if k + 1 == points.len() => None,
        Some(k) => {
            let ((t0, y0), (t1, y1)) = (points[k], points[k + 1]);
            Some(t0 + (threshold - y0) / (y1 - y0) * (t1 - t0))
        }
    }
}

/// Successive differences all share one sign, up to `tol`.
pub fn is_monotone(values: &[f64], tol: f64) -> bool {
    let d = || values.windows(2).map(|w| w[1] - w[0]);
    d().all(|x| x >= -tol) || d().all(|x| x <= tol)
}

pub fn forming_summary(series: &TimeSeries, desired: &DesiredState, area: f64, die: Side) -> Option<FormingSummary> {
    let pick = |r: &Record| match die {
        Side::Left => (r.v_left, r.sigma_left),
        Side::Right => (r.v_right, r.sigma_right),
    };
    let first = series.records.first()?;
    let last = series.records.last()?;
    let stress: Vec<(f64, f64)> = series.records.iter().map(|r| (r.t, pick(r).1)).collect();
    let settling = settling_time(&stress, 0.99 * desired.sigma_star);
    let target_force = desired.sigma_star * area;
    let monotone = settling.is_some_and(|ts| {
        let forces: Vec<f64> = series.records.iter().filter(|r| r.t >= ts).map(|r| r.force).collect();
        is_monotone(&forces, 1e-9 * target_force.abs().max(1.0))
    });
    Some(FormingSummary {
        die,
        initial_command: pick(first).0,
        target_force,
        final_force: last.force,
        final_velocity: pick(last).0,
        final_sigma: pick(last).1,
        settling_time_99: settling,
        force_monotone_after_settling: monotone,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub config: serde_json::Value,
    pub s_star: f64,
    pub gains: GainPair,
    pub certificate: DecayCertificate,
    pub scheme: Scheme,
    pub steps: usize,
    pub records: usize,
    /// Least-squares decay rate of the Lyapunov series (linear runs).
    pub fitted_rate: Option<f64>,
    pub final_state: Option<Record>,
    pub failure: Option<String>,
    pub variant_adjudication: Option<Vec<VariantOutcome>>,
    pub forming: Option<FormingSummary>,
}

pub struct Simulation {
    pub report: SimulateReport,
    pub series: TimeSeries,
}

pub fn simulate(scenario: &Scenario) -> Simulation {
    let config = scenario.config.solver_config();
    let diag = scenario.diagnostics();
    let (series, steps, error) = match config.scheme {
        Scheme::LinearRiemann => {
            let ctrl = scenario.controller(scenario.config.control.law_variant);
            let coupling = match scenario.config.control.coupling {
                Coupling::Reflection => LinearCoupling::Gains(scenario.gains),
                Coupling::Controller => LinearCoupling::Controller(&ctrl),
            };
            let r0 = scenario.sys.field_to_riemann(&scenario.initial_perturbation());
            let out = run_linear(&scenario.sys, &scenario.grid, &r0, coupling, &diag, &config);
            (out.series, out.steps, out.error)
        }
        Scheme::NonlinearSplit => {
            let ctrl = scenario.controller(scenario.config.control.law_variant);
            let out = run_nonlinear(
                &scenario.params,
                &scenario.config.law,
                &ctrl,
                &scenario.desired,
                &scenario.grid,
                &scenario.initial_fields(),
                &diag,
                &config,
            );
            (out.series, out.steps, out.error)
        }
    };
    let linear = config.scheme == Scheme::LinearRiemann;
    let report = SimulateReport {
        config: serde_json::to_value(&scenario.config).expect("config serializes"),
        s_star: scenario.s_star,
        gains: scenario.gains,
        certificate: scenario.certificate,
        scheme: config.scheme,
        steps,
        records: series.len(),
        fitted_rate: if linear { fit_decay_rate(&series, 0.0).ok() } else { None },
        final_state: series.last().copied(),
        failure: error.map(|e| e.to_string()),
        variant_adjudication: linear.then(|| {
            [LawVariant::RiemannGain, LawVariant::CothClosedForm]
                .into_iter()
                .map(|v| adjudicate(scenario, v))
                .collect()
        }),
        forming: if linear {
            None
        } else {
            forming_summary(&series, &scenario.desired, scenario.params.area, diag.die)
        },
    };
    Simulation { report, series }
}

pub fn cmd_simulate(config: &RunConfig, out: &Path) -> Result<String, CliError> {
    let scenario = Scenario::new(config)?;
    let sim = simulate(&scenario);
    write_atomic(out, "timeseries.csv", &sim.series.to_csv())?;
    write_atomic(out, "summary.json", &to_json(&sim.report))?;
    if let Some(f) = &sim.report.failure {
        return Err(CliError::Runtime(format!(
            "{f} (partial output: {} records)",
            sim.report.records
        )));
    }
    let mut line = format!("{} steps, {} records", sim.report.steps, sim.report.records);
    if let Some(rate) = sim.report.fitted_rate {
        let _ = write!(
            line,
            ", fitted rate {} vs certified {}",
            format_sig12(rate),
            format_sig12(scenario.certificate.mu)
        );
    }
    if let Some(f) = &sim.report.forming {
        let _ = write!(
            line,
            ", final force {} N (target {}), final velocity {} mm/s",
            format_sig12(f.final_force),
            format_sig12(f.target_force),
            format_sig12(f.final_velocity)
        );
    }
    Ok(line)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub ok: bool,
    pub certificate_valid: Option<bool>,
    pub mu: Option<f64>,
    pub fitted_rate: Option<f64>,
    pub final_sigma_die: Option<f64>,
    pub final_v_die: Option<f64>,
    pub final_force: Option<f64>,
    pub settling_time_99: Option<f64>,
    /// Linear: fitted rate minus certified rate. Nonlinear: relative offset
    /// of the final die stress from `σ*`.
    pub discretization_error: Option<f64>,
    /// Previous row's error over this row's.
    pub error_ratio: Option<f64>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub config: serde_json::Value,
    pub path: String,
    pub rows: Vec<SweepRow>,
}

fn sweep_row(config: &RunConfig, path: &str, value: f64) -> SweepRow {
    let empty = SweepRow {
        value,
        ok: false,
        certificate_valid: None,
        mu: None,
        fitted_rate: None,
        final_sigma_die: None,
        final_v_die: None,
        final_force: None,
        settling_time_99: None,
        discretization_error: None,
        error_ratio: None,
        message: None,
    };
    let scenario = match config.with_value(path, value).map_err(CliError::from).and_then(|c| Scenario::new(&c)) {
        Ok(s) => s,
        Err(e) => {
            return SweepRow {
                message: Some(e.to_string()),
                ..empty
            }
        }
    };
    let sim = simulate(&scenario);
    let r = &sim.report;
    let die = scenario.die();
    let (v_die, sigma_die) = match (r.final_state, die) {
        (Some(s), Side::Left) => (Some(s.v_left), Some(s.sigma_left)),
        (Some(s), Side::Right) => (Some(s.v_right), Some(s.sigma_right)),
        (None, _) => (None, None),
    };
    let error = match r.scheme {
        Scheme::LinearRiemann => r.fitted_rate.map(|f| f - scenario.certificate.mu),
        Scheme::NonlinearSplit => sigma_die.map(|s| ((s - scenario.desired.sigma_star) / scenario.desired.sigma_star).abs()),
    };
    SweepRow {
        ok: r.failure.is_none(),
        certificate_valid: Some(scenario.certificate.valid),
        mu: Some(scenario.certificate.mu),
        fitted_rate: r.fitted_rate,
        final_sigma_die: sigma_die,
        final_v_die: v_die,
        final_force: r.final_state.map(|s| s.force),
        settling_time_99: r.forming.as_ref().and_then(|f| f.settling_time_99),
        discretization_error: error,
        message: r.failure.clone(),
        ..empty
    }
}

pub fn sweep(config: &RunConfig) -> Result<SweepReport, CliError> {
    let spec = config.sweep.as_ref().ok_or_else(|| ConfigError::Invalid {
        key: "sweep".into(),
        reason: "missing [sweep] block".into(),
    })?;
    // reject unknown keys up front; per-value failures are recorded instead
    if let Err(e @ ConfigError::Invalid { .. }) = config.with_value(&spec.path, spec.values[0]) {
        if e.key() == Some(spec.path.as_str()) && e.to_string().contains("sweep key") {
            return Err(e.into());
        }
    }
    let mut rows: Vec<SweepRow> = spec
        .values
        .par_iter()
        .map(|&v| sweep_row(config, &spec.path, v))
        .collect();
    for k in 1..rows.len() {
        rows[k].error_ratio = match (rows[k - 1].discretization_error, rows[k].discretization_error) {
            (Some(a), Some(b)) if b != 0.0 => Some(a / b),
            _ => None,
        };
    }
    Ok(SweepReport {
        config: serde_json::to_value(config).expect("config serializes"),
        path: spec.path.clone(),
        rows,
    })
}

fn opt(x: Option<f64>) -> String {
    x.map(format_sig12).unwrap_or_default()
}

pub fn sweep_csv(report: &SweepReport) -> String {
    let mut out = String::from(
        "value,ok,certificate_valid,mu,fitted_rate,final_sigma_die,final_v_die,final_force,settling_time_99,discretization_error,error_ratio,message\n",
    );
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            format_sig12(r.value),
            r.ok,
            r.certificate_valid.map(|b| b.to_string()).unwrap_or_default(),
            opt(r.mu),
            opt(r.fitted_rate),
            opt(r.final_sigma_die),
            opt(r.final_v_die),
            opt(r.final_force),
            opt(r.settling_time_99),
            opt(r.discretization_error),
            opt(r.error_ratio),
            r.message.as_deref().unwrap_or("").replace([',', '\n'], ";"),
        );
    }
    out
}

pub fn cmd_sweep(config: &RunConfig, out: &Path) -> Result<String, CliError> {
    let report = sweep(config)?;
    write_atomic(out, "sweep.csv", &sweep_csv(&report))?;
    write_atomic(out, "sweep.json", &to_json(&report))?;
    let failed = report.rows.iter().filter(|r| !r.ok).count();
    Ok(format!(
        "{} variants of `{}`, {} failed",
        report.rows.len(),
        report.path,
        failed
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct RefineLevel {
    pub n_cells: usize,
    pub dx: f64,
    pub l2_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RefineReport {
    pub config: serde_json::Value,
    pub elastic_modulus: f64,
    pub length: f64,
    pub gain: f64,
    pub profile: RefineProfile,
    pub t_end: f64,
    pub levels: Vec<RefineLevel>,
    /// `e_k / e_{k+1}`.
    pub ratios: Vec<f64>,
    /// `ln(e_k/e_{k+1}) / ln(n_{k+1}/n_k)`.
    pub observed_orders: Vec<f64>,
}

/// Source-free (`S* = 0`) transport error against the characteristics
/// solution on each level.
pub fn refine(config: &RunConfig) -> Result<RefineReport, CliError> {
    let e = config.material.elastic_modulus;
    let l = config.material.length;
    let gain = config.refine.gain;
    let gains = GainPair::new(gain, gain);
    let sys = HyperbolicSystem::new(e, 0.0).map_err(|err| CliError::Runtime(err.to_string()))?;
    let t_end = config.refine.t_end.unwrap_or(0.25 * l / e.sqrt());
    let profile = config.refine.profile;
    let init = move |x: f64| -> (f64, f64) {
        match profile {
            RefineProfile::Bump => (cosine_bump(x, 0.35 * l, 0.5 * l), cosine_bump(x, 0.6 * l, 0.4 * l)),
            RefineProfile::Constant => (1.0, 1.0),
        }
    };
    let exact = Characteristics {
        wave_speed: sys.wave_speed(),
        length: l,
        gains,
        initial: &init,
    };
    let levels = config
        .refine
        .levels
        .par_iter()
        .map(|&n| -> Result<RefineLevel, CliError> {
            let grid = Grid::new(l, n).map_err(|err| CliError::Runtime(err.to_string()))?;
            let mut r = RiemannField::zeros(n);
            for (i, x) in grid.centers().enumerate() {
                (r.plus[i], r.minus[i]) = init(x);
            }
            let dt = grid.time_step(e, config.solver.cfl);
            let n_steps = (t_end / dt * (1.0 - 1e-12)).ceil() as usize;
            for k in 0..n_steps {
                let h = if k + 1 == n_steps { t_end - k as f64 * dt } else { dt };
                r = step_linear(&sys, gains, &grid, &r, h).map_err(|err| CliError::Runtime(err.to_string()))?;
            }
            let err2: f64 = grid
                .centers()
                .enumerate()
                .map(|(i, x)| (r.plus[i] - exact.plus(t_end, x)).powi(2) + (r.minus[i] - exact.minus(t_end, x)).powi(2))
                .sum::<f64>()
                * grid.dx;
            Ok(RefineLevel {
                n_cells: n,
                dx: grid.dx,
                l2_error: err2.sqrt(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let ratios: Vec<f64> = levels.windows(2).map(|w| w[0].l2_error / w[1].l2_error).collect();
    let observed_orders = levels
        .windows(2)
        .map(|w| (w[0].l2_error / w[1].l2_error).ln() / (w[1].n_cells as f64 / w[0].n_cells as f64).ln())
        .collect();
    Ok(RefineReport {
        config: serde_json::to_value(config).expect("config serializes"),
        elastic_modulus: e,
        length: l,
        gain,
        profile,
        t_end,
        levels,
        ratios,
        observed_orders,
    })
}

pub fn cmd_refine(config: &RunConfig, out: &Path) -> Result<String, CliError> {
    let report = refine(config)?;
    let mut csv = String::from("n_cells,dx,l2_error,ratio,observed_order\n");
    for (k, lvl) in report.levels.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            lvl.n_cells,
            format_sig12(lvl.dx),
            format_sig12(lvl.l2_error),
            opt(k.checked_sub(1).map(|j| report.ratios[j])),
            opt(k.checked_sub(1).map(|j| report.observed_orders[j])),
        );
    }
    write_atomic(out, "refine.csv", &csv)?;
    write_atomic(out, "refine.json", &to_json(&report))?;
    let orders: Vec<String> = report.observed_orders.iter().map(|&o| format!("{o:.3}")).collect();
    Ok(format!("{} levels, observed orders [{}]", report.levels.len(), orders.join(", ")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settling_examples() {
        let pts = [(0.0, 0.0), (1.0, 2.0), (2.0, 0.5), (3.0, 1.5), (4.0, 1.2)];
        assert_eq!(settling_time(&pts, 1.0), Some(2.5));
        assert_eq!(settling_time(&pts, 0.0), Some(0.0));
        assert_eq!(settling_time(&pts, 1.3), None);
    }

    #[test]
    fn monotone_examples() {
        assert!(is_monotone(&[1.0, 2.0, 2.0, 3.0], 0.0));
        assert!(is_monotone(&[3.0, 2.0, 1.0], 0.0));
        assert!(!is_monotone(&[1.0, 2.0, 1.5], 0.1));
        assert!(is_monotone(&[1.0, 2.0, 1.95], 0.1));
        assert!(is_monotone(&[], 0.0));
    }

    #[test]
    fn exit_codes() {
        let c = CliError::Config(ConfigError::Parse("x".into()));
        assert_eq!(c.exit_code(), 2);
        assert_eq!(CliError::CertificationFailed(String::new()).exit_code(), 3);
        assert_eq!(CliError::Runtime(String::new()).exit_code(), 4);
    }
}
