//! First-order upwind finite volumes for the Riemann-invariant system and a
//! split scheme for the nonlinear viscoplastic system.
//!
//! `𝓡⁺` is transported toward `x = L` and `𝓡⁻` toward `x = 0`, both at `√E`.
//! Inflow ghost values come from the boundary coupling: either the local
//! reflection laws `𝓡⁺(0) = K₀𝓡⁻(0)`, `𝓡⁻(L) = K₁𝓡⁺(L)` or prescribed
//! boundary velocities, which fix the incoming invariant through
//! `v = −𝓡⁺ + 𝓡⁻`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::control::{BoundaryCommand, BoundaryController, BoundarySample, FeedbackController};
use crate::error::{Error, Result};
use crate::hyperbolics::{HyperbolicSystem, PerturbationField, PerturbationState, RiemannField};
use crate::lyapunov::{lyapunov_functional, GainPair, WeightProfile};
use crate::material::{DesiredState, InternalState, MaterialParams, StateRate, ViscoplasticLaw};

/// Uniform cell-centered grid on `[0, L]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub length: f64,
    pub n_cells: usize,
    pub dx: f64,
}

impl Grid {
    pub fn new(length: f64, n_cells: usize) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::invalid("L", "must be > 0"));
        }
        if n_cells < 2 {
            return Err(Error::invalid("n_cells", "need at least 2 cells"));
        }
        Ok(Self {
            length,
            n_cells,
            dx: length / n_cells as f64,
        })
    }

    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_cells).map(|i| self.center(i))
    }

    /// Largest stable step `dx/√E` times `cfl`.
    pub fn time_step(&self, elastic_modulus: f64, cfl: f64) -> f64 {
        cfl * self.dx / elastic_modulus.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    LinearRiemann,
    NonlinearSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub cfl: f64,
    pub t_end: f64,
    pub record_every: usize,
    pub scheme: Scheme,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::invalid("cfl", "must lie in (0, 1]"));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::invalid("t_end", "must be finite and > 0"));
        }
        if self.record_every == 0 {
            return Err(Error::invalid("record_every", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: f64,
    pub lyapunov: f64,
    pub l2_norm_u: f64,
    pub v_left: f64,
    pub v_right: f64,
    pub sigma_left: f64,
    pub sigma_right: f64,
    pub displacement: f64,
    pub force: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeSeries {
    pub records: Vec<Record>,
}

/// `%.12g`-style formatting.
pub fn format_sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    let sci = format!("{x:.11e}");
    // rounding can bump the exponent (9.9999…e2 → 1.0e3)
    let exp = sci
        .split('e')
        .nth(1)
        .and_then(|e| e.parse::<i32>().ok())
        .unwrap_or(exp);
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-5..12).contains(&exp) {
        let (mantissa, e) = sci.split_once('e').expect("scientific format");
        format!("{}e{}", trim(mantissa), e)
    } else {
        let decimals = (11 - exp).max(0) as usize;
        trim(&format!("{x:.decimals$}"))
    }
}

impl TimeSeries {
    pub const CSV_HEADER: &'static str =
        "t,lyapunov,l2_norm_U,v_left,v_right,sigma_left,sigma_right,displacement,force";

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&Record> {
        self.records.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(128 * (self.records.len() + 1));
        out.push_str(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let cols = [
                r.t,
                r.lyapunov,
                r.l2_norm_u,
                r.v_left,
                r.v_right,
                r.sigma_left,
                r.sigma_right,
                r.displacement,
                r.force,
            ];
            let line: Vec<String> = cols.iter().map(|&c| format_sig12(c)).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }
}

/// Inflow closure for the linear scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearBoundary {
    Reflection(GainPair),
    /// Prescribed boundary velocity perturbations `(Δv(0), Δv(L))`.
    Velocity { left: f64, right: f64 },
}

impl LinearBoundary {
    /// Inflow ghost values `(𝓡⁺ at x = 0, 𝓡⁻ at x = L)`.
    fn ghosts(&self, field: &RiemannField) -> (f64, f64) {
        let n = field.len();
        let (out_left, out_right) = (field.minus[0], field.plus[n - 1]);
        match *self {
            Self::Reflection(g) => (g.k0 * out_left, g.k1 * out_right),
            Self::Velocity { left, right } => (out_left - left, right + out_right),
        }
    }

    /// Face states at both ends.
    pub fn face_traces(
        &self,
        sys: &HyperbolicSystem,
        field: &RiemannField,
    ) -> (PerturbationState, PerturbationState) {
        let n = field.len();
        let (in_left, in_right) = self.ghosts(field);
        let left = sys.to_physical(crate::hyperbolics::RiemannState {
            plus: in_left,
            minus: field.minus[0],
        });
        let right = sys.to_physical(crate::hyperbolics::RiemannState {
            plus: field.plus[n - 1],
            minus: in_right,
        });
        (left, right)
    }
}

fn check_cfl(wave_speed: f64, grid: &Grid, dt: f64) -> Result<f64> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("dt", "must be finite and > 0"));
    }
    let limit = grid.dx / wave_speed;
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt, limit });
    }
    Ok(dt / limit)
}

/// Upwind transport of both invariants with the given inflow ghosts.
fn transport(field: &RiemannField, nu: f64, ghost_left: f64, ghost_right: f64) -> RiemannField {
    let n = field.len();
    let mut out = RiemannField::zeros(n);
    for i in 0..n {
        let up = if i == 0 { ghost_left } else { field.plus[i - 1] };
        out.plus[i] = field.plus[i] - nu * (field.plus[i] - up);
        let down = if i + 1 == n { ghost_right } else { field.minus[i + 1] };
        out.minus[i] = field.minus[i] - nu * (field.minus[i] - down);
    }
    out
}

/// One step of the linear closed loop: upwind transport followed by the exact
/// source propagator `exp(−B·dt)`.
pub fn step_linear_with(
    sys: &HyperbolicSystem,
    boundary: &LinearBoundary,
    grid: &Grid,
    state: &RiemannField,
    dt: f64,
) -> Result<RiemannField> {
    let nu = check_cfl(sys.wave_speed(), grid, dt)?;
    if state.len() != grid.n_cells {
        return Err(Error::invalid("state", "field length does not match the grid"));
    }
    let (gl, gr) = boundary.ghosts(state);
    let mut out = transport(state, nu, gl, gr);
    if sys.s_star != 0.0 {
        let p = sys.source_propagator(dt);
        for (rp, rm) in out.plus.iter_mut().zip(out.minus.iter_mut()) {
            let (a, b) = (*rp, *rm);
            *rp = p[0][0] * a + p[0][1] * b;
            *rm = p[1][0] * a + p[1][1] * b;
        }
    }
    Ok(out)
}

pub fn step_linear(
    sys: &HyperbolicSystem,
    gains: GainPair,
    grid: &Grid,
    state: &RiemannField,
    dt: f64,
) -> Result<RiemannField> {
    step_linear_with(sys, &LinearBoundary::Reflection(gains), grid, state, dt)
}

/// Per-cell fields of the nonlinear system.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NonlinearFields {
    pub v: Vec<f64>,
    pub sigma: Vec<f64>,
    pub plastic_strain: Vec<f64>,
    pub internal: Vec<InternalState>,
}

impl NonlinearFields {
    pub fn uniform(n: usize, v: f64, sigma: f64, internal: InternalState) -> Self {
        Self {
            v: vec![v; n],
            sigma: vec![sigma; n],
            plastic_strain: vec![0.0; n],
            internal: vec![internal; n],
        }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn perturbation(&self, grid: &Grid, desired: &DesiredState) -> PerturbationField {
        PerturbationField {
            delta_v: self
                .v
                .iter()
                .enumerate()
                .map(|(i, v)| v - desired.v_star(grid.center(i)))
                .collect(),
            delta_sigma: self.sigma.iter().map(|s| s - desired.sigma_star).collect(),
        }
    }

    fn check_finite(&self, t: f64) -> Result<()> {
        for i in 0..self.len() {
            let checks: [(&'static str, f64); 5] = [
                ("v", self.v[i]),
                ("sigma", self.sigma[i]),
                ("plastic_strain", self.plastic_strain[i]),
                ("X", self.internal[i].globular_fraction),
                ("rho_bar", self.internal[i].dislocation_density),
            ];
            for (field, value) in checks {
                if !value.is_finite() {
                    return Err(Error::NonFiniteField { field, cell: i, t });
                }
            }
        }
        Ok(())
    }
}

/// Upper bound on inner steps of the local relaxation.
pub const MAX_SUBSTEPS: usize = 100;

#[derive(Clone, Copy)]
struct LocalState {
    sigma: f64,
    plastic_strain: f64,
    internal: InternalState,
}

#[derive(Clone, Copy)]
struct LocalRate {
    sigma: f64,
    plastic_strain: f64,
    internal: StateRate,
}

fn local_rate(law: &ViscoplasticLaw, e: f64, y: &LocalState) -> LocalRate {
    let rate = law.plastic_strain_rate(y.sigma, &y.internal);
    LocalRate {
        sigma: -e * rate,
        plastic_strain: rate,
        internal: law.internal_state_rate(y.sigma, &y.internal),
    }
}

fn local_add(y: &LocalState, k: &LocalRate, h: f64) -> LocalState {
    LocalState {
        sigma: y.sigma + h * k.sigma,
        plastic_strain: y.plastic_strain + h * k.plastic_strain,
        internal: y.internal.with_increment(k.internal.scaled(h)),
    }
}

fn substep_count(law: &ViscoplasticLaw, e: f64, y: &LocalState, h: f64) -> usize {
    let sigma_step = 1e-6 * y.sigma.abs().max(1.0);
    let stiffness = e * law.rate_slope(y.sigma, &y.internal, sigma_step).abs();
    let k = local_rate(law, e, y);
    let relative = |rate: f64, value: f64, floor: f64| rate.abs() * h / (0.1 * value.abs().max(floor));
    let by_state = relative(k.internal.globular_fraction, y.internal.globular_fraction, 1e-3)
        .max(relative(
            k.internal.dislocation_density,
            y.internal.dislocation_density,
            1.0,
        ))
        .max(relative(k.sigma, y.sigma, 1e-6));
    let needed = (stiffness * h / 0.05).max(by_state).ceil();
    if needed.is_finite() {
        (needed as usize).clamp(1, MAX_SUBSTEPS)
    } else {
        MAX_SUBSTEPS
    }
}

/// Local relaxation `σ' = −E·ε̇ᵖ`, `εᵖ' = ε̇ᵖ` and the internal-state
/// equations over `h`, sub-cycled classical RK4.
fn relax(law: &ViscoplasticLaw, e: f64, fields: &mut NonlinearFields, h: f64) {
    if law.is_elastic() {
        return;
    }
    for i in 0..fields.len() {
        let mut y = LocalState {
            sigma: fields.sigma[i],
            plastic_strain: fields.plastic_strain[i],
            internal: fields.internal[i],
        };
        let n = substep_count(law, e, &y, h);
        let dt = h / n as f64;
        for _ in 0..n {
            let k1 = local_rate(law, e, &y);
            let k2 = local_rate(law, e, &local_add(&y, &k1, 0.5 * dt));
            let k3 = local_rate(law, e, &local_add(&y, &k2, 0.5 * dt));
            let k4 = local_rate(law, e, &local_add(&y, &k3, dt));
            let combine = |a: f64, b: f64, c: f64, d: f64| (a + 2.0 * b + 2.0 * c + d) / 6.0;
            let k = LocalRate {
                sigma: combine(k1.sigma, k2.sigma, k3.sigma, k4.sigma),
                plastic_strain: combine(
                    k1.plastic_strain,
                    k2.plastic_strain,
                    k3.plastic_strain,
                    k4.plastic_strain,
                ),
                internal: StateRate {
                    globular_fraction: combine(
                        k1.internal.globular_fraction,
                        k2.internal.globular_fraction,
                        k3.internal.globular_fraction,
                        k4.internal.globular_fraction,
                    ),
                    dislocation_density: combine(
                        k1.internal.dislocation_density,
                        k2.internal.dislocation_density,
                        k3.internal.dislocation_density,
                        k4.internal.dislocation_density,
                    ),
                    accumulated_strain: combine(
                        k1.internal.accumulated_strain,
                        k2.internal.accumulated_strain,
                        k3.internal.accumulated_strain,
                        k4.internal.accumulated_strain,
                    ),
                },
            };
            y = local_add(&y, &k, dt);
        }
        fields.sigma[i] = y.sigma;
        fields.plastic_strain[i] = y.plastic_strain;
        fields.internal[i] = y.internal;
    }
}

/// Homogeneous elastic substep on `(v, σ)` through the Riemann invariants with
/// prescribed boundary velocities.
fn elastic_transport(
    sys: &HyperbolicSystem,
    fields: &mut NonlinearFields,
    nu: f64,
    command: BoundaryCommand,
) {
    let u = PerturbationField {
        delta_v: std::mem::take(&mut fields.v),
        delta_sigma: std::mem::take(&mut fields.sigma),
    };
    let r = sys.field_to_riemann(&u);
    let boundary = LinearBoundary::Velocity {
        left: command.v_left,
        right: command.v_right,
    };
    let (gl, gr) = boundary.ghosts(&r);
    let u = sys.field_to_physical(&transport(&r, nu, gl, gr));
    fields.v = u.delta_v;
    fields.sigma = u.delta_sigma;
}

/// One Strang-split step of the nonlinear system: half relaxation, elastic
/// transport with the boundary velocities, half relaxation.
pub fn step_nonlinear(
    params: &MaterialParams,
    law: &ViscoplasticLaw,
    grid: &Grid,
    fields: &NonlinearFields,
    dt: f64,
    command: BoundaryCommand,
    t: f64,
) -> Result<NonlinearFields> {
    let sys = HyperbolicSystem::new(params.elastic_modulus, 0.0)?;
    let nu = check_cfl(sys.wave_speed(), grid, dt)?;
    if fields.len() != grid.n_cells {
        return Err(Error::invalid("fields", "field length does not match the grid"));
    }
    if !command.v_left.is_finite() || !command.v_right.is_finite() {
        return Err(Error::NonFinite(format!(
            "boundary velocities ({}, {}) at t = {t}",
            command.v_left, command.v_right
        )));
    }
    let e = params.elastic_modulus;
    let mut next = fields.clone();
    relax(law, e, &mut next, 0.5 * dt);
    elastic_transport(&sys, &mut next, nu, command);
    relax(law, e, &mut next, 0.5 * dt);
    next.check_finite(t + dt)?;
    Ok(next)
}

/// Face stress given the outgoing invariant of the adjacent cell and the
/// velocity imposed on the face.
fn face_stress_left(wave_speed: f64, v0: f64, sigma0: f64, v_face: f64) -> f64 {
    sigma0 + wave_speed * (v0 - v_face)
}

fn face_stress_right(wave_speed: f64, vn: f64, sigman: f64, v_face: f64) -> f64 {
    sigman - wave_speed * (vn - v_face)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    #[default]
    Left,
    Right,
}

/// Result of a run; `error` is set when stepping stopped early, in which
/// case `series` holds everything recorded before the failure.
#[derive(Debug, Clone)]
pub struct RunOutcome<S> {
    pub series: TimeSeries,
    pub state: S,
    pub steps: usize,
    pub error: Option<Error>,
}

/// How the linear loop is closed.
#[derive(Debug, Clone, Copy)]
pub enum LinearCoupling<'a> {
    /// Reflection gains applied directly to the invariants.
    Gains(GainPair),
    /// Velocity commands from a controller fed the face stresses of the
    /// previous step.
    Controller(&'a FeedbackController),
}

/// Everything needed to diagnose a run besides the dynamics.
#[derive(Debug, Clone, Copy)]
pub struct Diagnostics {
    pub weights: WeightProfile,
    pub area: f64,
    /// Boundary whose velocity and force are accumulated into displacement
    /// and force.
    pub die: Side,
}

struct Clock {
    dt: f64,
    t_end: f64,
    n_steps: usize,
}

impl Clock {
    fn new(grid: &Grid, elastic_modulus: f64, config: &SolverConfig) -> Self {
        let dt = grid.time_step(elastic_modulus, config.cfl);
        let n_steps = (config.t_end / dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Self {
            dt,
            t_end: config.t_end,
            n_steps,
        }
    }

    fn time(&self, n: usize) -> f64 {
        if n >= self.n_steps {
            self.t_end
        } else {
            n as f64 * self.dt
        }
    }

    fn step(&self, n: usize) -> f64 {
        self.time(n + 1) - self.time(n)
    }

    fn record(&self, n: usize, every: usize) -> bool {
        n % every == 0 || n == self.n_steps
    }
}

fn pick(side: Side, left: f64, right: f64) -> f64 {
    match side {
        Side::Left => left,
        Side::Right => right,
    }
}

/// Linear closed loop on the perturbation `𝓡`.
pub fn run_linear(
    sys: &HyperbolicSystem,
    grid: &Grid,
    initial: &RiemannField,
    coupling: LinearCoupling<'_>,
    diagnostics: &Diagnostics,
    config: &SolverConfig,
) -> RunOutcome<RiemannField> {
    let clock = Clock::new(grid, sys.elastic_modulus, config);
    let c = sys.wave_speed();
    let mut state = initial.clone();
    let mut series = TimeSeries::default();
    let mut displacement = 0.0;

    // velocity command applied during the upcoming step, if any
    let command_for = |state: &RiemannField, last: Option<BoundaryCommand>, t: f64| -> Option<BoundaryCommand> {
        let LinearCoupling::Controller(ctrl) = coupling else {
            return None;
        };
        let u = sys.field_to_physical(state);
        let n = state.len();
        let (sl, sr) = match last {
            Some(cmd) => (
                face_stress_left(c, u.delta_v[0], u.delta_sigma[0], cmd.v_left - ctrl.desired.v_star_left),
                face_stress_right(c, u.delta_v[n - 1], u.delta_sigma[n - 1], cmd.v_right - ctrl.desired.v_star_right),
            ),
            None => (u.delta_sigma[0], u.delta_sigma[n - 1]),
        };
        let sample = BoundarySample {
            t,
            sigma_left: ctrl.desired.sigma_star + sl,
            sigma_right: ctrl.desired.sigma_star + sr,
        };
        Some(ctrl.command(&sample))
    };
    let boundary_for = |cmd: Option<BoundaryCommand>| -> LinearBoundary {
        match (coupling, cmd) {
            (LinearCoupling::Controller(ctrl), Some(cmd)) => LinearBoundary::Velocity {
                left: cmd.v_left - ctrl.desired.v_star_left,
                right: cmd.v_right - ctrl.desired.v_star_right,
            },
            (LinearCoupling::Gains(g), _) => LinearBoundary::Reflection(g),
            (LinearCoupling::Controller(_), None) => unreachable!("controller always yields a command"),
        }
    };

    let mut command = command_for(&state, None, 0.0);
    let mut error = None;
    let mut steps = 0;
    for n in 0..=clock.n_steps {
        let t = clock.time(n);
        let boundary = boundary_for(command);
        if clock.record(n, config.record_every) {
            let (left, right) = boundary.face_traces(sys, &state);
            let u = sys.field_to_physical(&state);
            series.records.push(Record {
                t,
                lyapunov: lyapunov_functional(&diagnostics.weights, grid, &state),
                l2_norm_u: u.norm_sq(grid.dx).sqrt(),
                v_left: left.delta_v,
                v_right: right.delta_v,
                sigma_left: left.delta_sigma,
                sigma_right: right.delta_sigma,
                displacement,
                force: diagnostics.area * pick(diagnostics.die, left.delta_sigma, right.delta_sigma),
            });
        }
        if n == clock.n_steps {
            break;
        }
        let dt = clock.step(n);
        let (left, right) = boundary.face_traces(sys, &state);
        match step_linear_with(sys, &boundary, grid, &state, dt) {
            Ok(next) => state = next,
            Err(e) => {
                error = Some(e);
                break;
            }
        }
        if let Some(i) = state
            .plus
            .iter()
            .chain(&state.minus)
            .position(|r| !r.is_finite())
        {
            error = Some(Error::NonFiniteField {
                field: if i < grid.n_cells { "r_plus" } else { "r_minus" },
                cell: i % grid.n_cells,
                t: t + dt,
            });
            break;
        }
        displacement += dt * pick(diagnostics.die, left.delta_v, right.delta_v);
        steps += 1;
        command = command_for(&state, command, t + dt);
    }
    RunOutcome {
        series,
        state,
        steps,
        error,
    }
}

/// Nonlinear closed loop with one-step-delayed velocity commands: the
/// controller sees the face stresses at the end of the previous step.
#[allow(clippy::too_many_arguments)]
pub fn run_nonlinear(
    params: &MaterialParams,
    law: &ViscoplasticLaw,
    controller: &dyn BoundaryController,
    desired: &DesiredState,
    grid: &Grid,
    initial: &NonlinearFields,
    diagnostics: &Diagnostics,
    config: &SolverConfig,
) -> RunOutcome<NonlinearFields> {
    let clock = Clock::new(grid, params.elastic_modulus, config);
    let c = params.wave_speed();
    let sys = match HyperbolicSystem::new(params.elastic_modulus, 0.0) {
        Ok(sys) => sys,
        Err(e) => {
            return RunOutcome {
                series: TimeSeries::default(),
                state: initial.clone(),
                steps: 0,
                error: Some(e),
            }
        }
    };
    let n_cells = grid.n_cells;
    let measure = |f: &NonlinearFields, last: Option<BoundaryCommand>, t: f64| -> BoundarySample {
        let (sl, sr) = match last {
            Some(cmd) => (
                face_stress_left(c, f.v[0], f.sigma[0], cmd.v_left),
                face_stress_right(c, f.v[n_cells - 1], f.sigma[n_cells - 1], cmd.v_right),
            ),
            None => (f.sigma[0], f.sigma[n_cells - 1]),
        };
        BoundarySample {
            t,
            sigma_left: sl,
            sigma_right: sr,
        }
    };

    let mut fields = initial.clone();
    let mut sample = measure(&fields, None, 0.0);
    let mut command = controller.command(&sample);
    let mut series = TimeSeries::default();
    let mut displacement = 0.0;
    let mut error = None;
    let mut steps = 0;
    for n in 0..=clock.n_steps {
        let t = clock.time(n);
        if clock.record(n, config.record_every) {
            let du = fields.perturbation(grid, desired);
            let r = sys.field_to_riemann(&du);
            series.records.push(Record {
                t,
                lyapunov: lyapunov_functional(&diagnostics.weights, grid, &r),
                l2_norm_u: du.norm_sq(grid.dx).sqrt(),
                v_left: command.v_left,
                v_right: command.v_right,
                sigma_left: sample.sigma_left,
                sigma_right: sample.sigma_right,
                displacement,
                force: diagnostics.area * pick(diagnostics.die, sample.sigma_left, sample.sigma_right),
            });
        }
        if n == clock.n_steps {
            break;
        }
        let dt = clock.step(n);
        match step_nonlinear(params, law, grid, &fields, dt, command, t) {
            Ok(next) => fields = next,
            Err(e) => {
                error = Some(e);
                break;
            }
        }
        displacement += dt * pick(diagnostics.die, command.v_left, command.v_right).abs();
        steps += 1;
        sample = measure(&fields, Some(command), t + dt);
        command = controller.command(&sample);
    }
    RunOutcome {
        series,
        state: fields,
        steps,
        error,
    }
}

/// Floor below which Lyapunov values are treated as round-off.
pub const LYAPUNOV_FLOOR: f64 = 1e-30;

/// Least-squares slope of `−ln L(t)` over records with `t ≥ t_start`.
pub fn fit_decay_rate(series: &TimeSeries, t_start: f64) -> Result<f64> {
    let points: Vec<(f64, f64)> = series
        .records
        .iter()
        .filter(|r| r.t >= t_start && r.lyapunov >= LYAPUNOV_FLOOR && r.lyapunov.is_finite())
        .map(|r| (r.t, r.lyapunov.ln()))
        .collect();
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} usable records after t = {t_start}, need 3",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(t, y)| (t - mean_t) * (y - mean_y)).sum();
    let sxx: f64 = points.iter().map(|(t, _)| (t - mean_t).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all records share one time".into()));
    }
    Ok(-sxy / sxx)
}

/// Raised-cosine hump of unit height on `[center − width/2, center + width/2]`.
pub fn cosine_bump(x: f64, center: f64, width: f64) -> f64 {
    let s = (x - center) / width;
    if s.abs() >= 0.5 {
        0.0
    } else {
        0.5 * (1.0 + (2.0 * std::f64::consts::PI * s).cos())
    }
}

/// Exact solution of the source-free reflection problem by tracing
/// characteristics back to the initial line, bouncing off the boundaries.
pub struct Characteristics<'a> {
    pub wave_speed: f64,
    pub length: f64,
    pub gains: GainPair,
    pub initial: &'a (dyn Fn(f64) -> (f64, f64) + Sync),
}

impl Characteristics<'_> {
    pub fn plus(&self, t: f64, x: f64) -> f64 {
        let foot = x - self.wave_speed * t;
        if foot >= 0.0 {
            return (self.initial)(foot).0;
        }
        if self.gains.k0 == 0.0 {
            return 0.0;
        }
        self.gains.k0 * self.minus(t - x / self.wave_speed, 0.0)
    }

    pub fn minus(&self, t: f64, x: f64) -> f64 {
        let foot = x + self.wave_speed * t;
        if foot <= self.length {
            return (self.initial)(foot).1;
        }
        if self.gains.k1 == 0.0 {
            return 0.0;
        }
        self.gains.k1 * self.plus(t - (self.length - x) / self.wave_speed, self.length)
    }
}
