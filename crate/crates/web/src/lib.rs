//! Browser bindings for the static demo page in `www/`.
//!
//! Three operations, each returning a JSON string:
//! [`decay_curve`], [`certify_gains`] and [`closed_loop`].

use forming_feedback::control::{FeedbackController, LawVariant};
use forming_feedback::hyperbolics::{build_system, PerturbationField};
use forming_feedback::lyapunov::{
    certify, decay_rate, decay_rate_lower_bound, synthesize_gains, MuHatPolicy, WeightProfile,
    DEFAULT_N_GRID,
};
use forming_feedback::material::{DesiredState, MaterialParams};
use forming_feedback::solver::{
    cosine_bump, fit_decay_rate, run_linear, Diagnostics, Grid, LinearCoupling, Scheme, Side, SolverConfig,
};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Upper bound on points returned to the page per series.
const MAX_POINTS: usize = 400;

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

/// `μ(μ̂)` and the bound `μ̂ − 2|S*|` on `n` points of `[0, mu_hat_max]`.
#[wasm_bindgen]
pub fn decay_curve(e: f64, length: f64, s_star: f64, mu_hat_max: f64, n: usize) -> Result<String, JsValue> {
    js(decay_curve_json(e, length, s_star, mu_hat_max, n))
}

pub fn decay_curve_json(e: f64, length: f64, s_star: f64, mu_hat_max: f64, n: usize) -> Result<String, String> {
    let sys = build_system(e, s_star).map_err(|e| e.to_string())?;
    if !(mu_hat_max > 0.0) || n < 2 {
        return Err("need mu_hat_max > 0 and at least 2 points".into());
    }
    let n = n.min(MAX_POINTS);
    let mut mu_hat = Vec::with_capacity(n);
    let mut mu = Vec::with_capacity(n);
    let mut bound = Vec::with_capacity(n);
    for i in 0..n {
        let m = mu_hat_max * i as f64 / (n - 1) as f64;
        mu_hat.push(m);
        mu.push(decay_rate(&sys, length, m, DEFAULT_N_GRID).map_err(|e| e.to_string())?);
        bound.push(decay_rate_lower_bound(&sys, m));
    }
    Ok(json!({ "mu_hat": mu_hat, "mu": mu, "lower_bound": bound }).to_string())
}

/// Synthesized gains and their decay certificate. A negative `mu_hat`
/// selects `μ̂ = |S*|` with a scan fallback.
#[wasm_bindgen]
pub fn certify_gains(e: f64, length: f64, s_star: f64, mu_hat: f64) -> Result<String, JsValue> {
    js(certify_gains_json(e, length, s_star, mu_hat))
}

pub fn certify_gains_json(e: f64, length: f64, s_star: f64, mu_hat: f64) -> Result<String, String> {
    let sys = build_system(e, s_star).map_err(|e| e.to_string())?;
    let params = MaterialParams::new(e, length, 1.0).map_err(|e| e.to_string())?;
    let gains = synthesize_gains(&sys, &params);
    let policy = if mu_hat >= 0.0 {
        MuHatPolicy::Fixed { mu_hat }
    } else {
        MuHatPolicy::MatchRelaxation
    };
    let cert = certify(&sys, &params, gains, policy).map_err(|e| e.to_string())?;
    serde_json::to_string(&cert).map_err(|e| e.to_string())
}

/// Linear closed loop driven through the velocity feedback law of the
/// chosen variant (`"riemann-gain"` or `"coth-closed-form"`), starting from a
/// unit stress hump. Returns the Lyapunov series and the certified envelope
/// `L(0)·e^{−μt}`.
#[wasm_bindgen]
pub fn closed_loop(
    e: f64,
    length: f64,
    s_star: f64,
    n_cells: usize,
    t_end: f64,
    variant: &str,
) -> Result<String, JsValue> {
    js(closed_loop_json(e, length, s_star, n_cells, t_end, variant))
}

pub fn closed_loop_json(
    e: f64,
    length: f64,
    s_star: f64,
    n_cells: usize,
    t_end: f64,
    variant: &str,
) -> Result<String, String> {
    let variant = match variant {
        "riemann-gain" => LawVariant::RiemannGain,
        "coth-closed-form" => LawVariant::CothClosedForm,
        other => return Err(format!("unknown variant `{other}`")),
    };
    let sys = build_system(e, s_star).map_err(|e| e.to_string())?;
    let params = MaterialParams::new(e, length, 1.0).map_err(|e| e.to_string())?;
    let grid = Grid::new(length, n_cells).map_err(|e| e.to_string())?;
    let gains = synthesize_gains(&sys, &params);
    let cert = certify(&sys, &params, gains, MuHatPolicy::MatchRelaxation).map_err(|e| e.to_string())?;
    let desired = DesiredState::uniform(0.0, 0.0, length).map_err(|e| e.to_string())?;
    let ctrl = FeedbackController::new(params, desired, gains, s_star, variant);

    let mut u = PerturbationField::zeros(n_cells);
    for (i, x) in grid.centers().enumerate() {
        u.delta_sigma[i] = cosine_bump(x, 0.5 * length, 0.5 * length);
    }
    let cfl = 0.9;
    let steps = (t_end / grid.time_step(e, cfl)).ceil() as usize;
    let config = SolverConfig {
        cfl,
        t_end,
        record_every: steps.div_ceil(MAX_POINTS).max(1),
        scheme: Scheme::LinearRiemann,
    };
    config.validate().map_err(|e| e.to_string())?;
    let diag = Diagnostics {
        weights: WeightProfile::new(cert.mu_hat, e, length),
        area: 1.0,
        die: Side::Left,
    };
    let out = run_linear(
        &sys,
        &grid,
        &sys.field_to_riemann(&u),
        LinearCoupling::Controller(&ctrl),
        &diag,
        &config,
    );
    let rec = &out.series.records;
    let l0 = rec.first().map_or(0.0, |r| r.lyapunov);
    let t: Vec<f64> = rec.iter().map(|r| r.t).collect();
    let lyapunov: Vec<f64> = rec.iter().map(|r| r.lyapunov).collect();
    let envelope: Vec<f64> = t.iter().map(|&t| l0 * (-cert.mu * t).exp()).collect();
    Ok(json!({
        "t": t,
        "lyapunov": lyapunov,
        "envelope": envelope,
        "mu": cert.mu,
        "valid": cert.valid,
        "fitted_rate": fit_decay_rate(&out.series, 0.0).ok(),
        "failure": out.error.map(|e| e.to_string()),
    })
    .to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> serde_json::Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn curve_stays_above_bound() {
        let v = parse(&decay_curve_json(1.0, 1.0, 0.3, 2.0, 21).unwrap());
        let mu = v["mu"].as_array().unwrap();
        let lb = v["lower_bound"].as_array().unwrap();
        assert_eq!(mu.len(), 21);
        for (m, b) in mu.iter().zip(lb) {
            assert!(m.as_f64().unwrap() >= b.as_f64().unwrap() - 1e-8);
        }
        assert!(decay_curve_json(1.0, 1.0, 0.3, 0.0, 21).is_err());
    }

    #[test]
    fn certificate_json() {
        let v = parse(&certify_gains_json(1.0, 1.0, 0.1, -1.0).unwrap());
        assert_eq!(v["valid"], true);
        assert!((v["K0"].as_f64().unwrap() - (-0.1f64).exp()).abs() < 1e-15);
        let v = parse(&certify_gains_json(1.0, 1.0, 0.0, 0.5).unwrap());
        assert_eq!(v["valid"], false);
    }

    #[test]
    fn riemann_gain_decays_and_coth_does_not() {
        let v = parse(&closed_loop_json(1.0, 1.0, 0.2, 64, 8.0, "riemann-gain").unwrap());
        let l: Vec<f64> = v["lyapunov"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert!(l.len() <= MAX_POINTS + 2);
        assert!(l.windows(2).all(|w| w[1] <= w[0]));
        assert!(v["failure"].is_null());
        let v = parse(&closed_loop_json(1.0, 1.0, 0.2, 64, 8.0, "coth-closed-form").unwrap());
        assert!(!v["failure"].is_null());
        assert!(closed_loop_json(1.0, 1.0, 0.2, 64, 8.0, "nope").is_err());
    }
}
