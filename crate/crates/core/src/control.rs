//! Boundary feedback in physical variables.
//!
//! The reflection laws `𝓡⁺(0) = K₀𝓡⁻(0)` and `𝓡⁻(L) = K₁𝓡⁺(L)` become affine
//! velocity commands once `U = T𝓡` is substituted:
//!
//! ```text
//! Δv(0) = +(1 − K₀)/(√E(1 + K₀)) · Δσ(0)
//! Δv(L) =  (K₁ − 1)/(√E(1 + K₁)) · Δσ(L)
//! ```
//!
//! The two coefficients have opposite signs, as required by the mirror
//! symmetry `x ↦ L − x`, `v ↦ −v`. [`LawVariant::CothClosedForm`] keeps the
//! alternative `(1/√E)·coth((L/√E)|S*|)` coefficient on both sides for
//! comparison runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lyapunov::GainPair;
use crate::material::{DesiredState, MaterialParams};

/// `σ = F/A`
pub fn force_to_stress(force: f64, area: f64) -> Result<f64> {
    if !(area > 0.0) || !area.is_finite() {
        return Err(Error::invalid("A", format!("cross-section must be > 0, got {area}")));
    }
    Ok(force / area)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawVariant {
    #[default]
    RiemannGain,
    CothClosedForm,
}

/// What a boundary does on each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMode {
    /// Velocity from the feedback law.
    #[default]
    Feedback,
    /// Symmetry plane / fixed wall, `v = 0`.
    Wall,
    /// Open-loop `v = v*` at that end.
    Desired,
}

/// Stresses at both ends, measured at the end of the previous step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundarySample {
    pub t: f64,
    pub sigma_left: f64,
    pub sigma_right: f64,
}

impl BoundarySample {
    pub fn from_forces(t: f64, force_left: f64, force_right: f64, area: f64) -> Result<Self> {
        Ok(Self {
            t,
            sigma_left: force_to_stress(force_left, area)?,
            sigma_right: force_to_stress(force_right, area)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCommand {
    pub v_left: f64,
    pub v_right: f64,
}

/// Anything that turns a boundary sample into velocity commands.
pub trait BoundaryController {
    fn command(&self, sample: &BoundarySample) -> BoundaryCommand;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackController {
    pub params: MaterialParams,
    pub desired: DesiredState,
    pub gains: GainPair,
    pub s_star: f64,
    pub variant: LawVariant,
    pub left: BoundaryMode,
    pub right: BoundaryMode,
}

impl FeedbackController {
    pub fn new(
        params: MaterialParams,
        desired: DesiredState,
        gains: GainPair,
        s_star: f64,
        variant: LawVariant,
    ) -> Self {
        Self {
            params,
            desired,
            gains,
            s_star,
            variant,
            left: BoundaryMode::Feedback,
            right: BoundaryMode::Feedback,
        }
    }

    pub fn with_modes(mut self, left: BoundaryMode, right: BoundaryMode) -> Self {
        self.left = left;
        self.right = right;
        self
    }

    fn coth_coefficient(&self) -> f64 {
        let c = self.params.wave_speed();
        let a = self.params.length / c * self.s_star.abs();
        1.0 / (a.tanh() * c)
    }

    /// `∂v/∂σ` of the left law.
    pub fn left_coefficient(&self) -> f64 {
        match self.variant {
            LawVariant::RiemannGain => {
                let k = self.gains.k0;
                (1.0 - k) / (self.params.wave_speed() * (1.0 + k))
            }
            LawVariant::CothClosedForm => self.coth_coefficient(),
        }
    }

    /// `∂v/∂σ` of the right law.
    pub fn right_coefficient(&self) -> f64 {
        match self.variant {
            LawVariant::RiemannGain => {
                let k = self.gains.k1;
                (k - 1.0) / (self.params.wave_speed() * (1.0 + k))
            }
            LawVariant::CothClosedForm => self.coth_coefficient(),
        }
    }

    pub fn feedback_velocity_left(&self, sigma_measured: f64) -> f64 {
        affine(
            self.desired.v_star_left,
            self.left_coefficient(),
            sigma_measured - self.desired.sigma_star,
        )
    }

    pub fn feedback_velocity_right(&self, sigma_measured: f64) -> f64 {
        affine(
            self.desired.v_star_right,
            self.right_coefficient(),
            sigma_measured - self.desired.sigma_star,
        )
    }

    fn side(&self, mode: BoundaryMode, feedback: impl FnOnce() -> f64, v_star: f64) -> f64 {
        match mode {
            BoundaryMode::Feedback => feedback(),
            BoundaryMode::Wall => 0.0,
            BoundaryMode::Desired => v_star,
        }
    }

    /// Velocity commands for the next step.
    pub fn controller_step(&self, sample: &BoundarySample) -> BoundaryCommand {
        BoundaryCommand {
            v_left: self.side(
                self.left,
                || self.feedback_velocity_left(sample.sigma_left),
                self.desired.v_star_left,
            ),
            v_right: self.side(
                self.right,
                || self.feedback_velocity_right(sample.sigma_right),
                self.desired.v_star_right,
            ),
        }
    }
}

impl BoundaryController for FeedbackController {
    fn command(&self, sample: &BoundarySample) -> BoundaryCommand {
        self.controller_step(sample)
    }
}

// an unperturbed boundary returns v* even when the coefficient is infinite
fn affine(v_star: f64, coefficient: f64, delta_sigma: f64) -> f64 {
    if delta_sigma == 0.0 {
        v_star
    } else {
        v_star + coefficient * delta_sigma
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperbolics::{build_system, PerturbationState};
    use crate::lyapunov::synthesize_gains;

    fn controller(e: f64, l: f64, k: f64, s_star: f64, variant: LawVariant) -> FeedbackController {
        FeedbackController::new(
            MaterialParams::new(e, l, 109.31).unwrap(),
            DesiredState::new(146.0, 1.5, 0.5, l).unwrap(),
            GainPair::new(k, k),
            s_star,
            variant,
        )
    }

    #[test]
    fn force_conversion() {
        assert_eq!(force_to_stress(0.0, 109.31).unwrap(), 0.0);
        assert!((force_to_stress(15959.26, 109.31).unwrap() - 146.0).abs() < 1e-9);
        assert!((force_to_stress(68.0 * 109.31, 109.31).unwrap() - 68.0).abs() < 1e-12);
        assert!(force_to_stress(1.0, 0.0).is_err());
        assert!(force_to_stress(1.0, -2.0).is_err());
    }

    #[test]
    fn desired_state_is_fixed_point() {
        for variant in [LawVariant::RiemannGain, LawVariant::CothClosedForm] {
            let c = controller(9200.0, 7.5, 0.3, 10.0, variant);
            assert_eq!(c.feedback_velocity_left(146.0), 1.5);
            assert_eq!(c.feedback_velocity_right(146.0), 0.5);
            let cmd = c.controller_step(&BoundarySample {
                t: 0.0,
                sigma_left: 146.0,
                sigma_right: 146.0,
            });
            assert_eq!((cmd.v_left, cmd.v_right), (1.5, 0.5));
        }
        // coth(0) is infinite but an unperturbed sample still maps to v*
        let c = controller(1.0, 1.0, 1.0, 0.0, LawVariant::CothClosedForm);
        assert_eq!(c.feedback_velocity_left(146.0), 1.5);
    }

    #[test]
    fn unit_gain_is_open_loop() {
        let c = controller(9200.0, 7.5, 1.0, 0.0, LawVariant::RiemannGain);
        for sigma in [0.0, 50.0, 400.0] {
            assert_eq!(c.feedback_velocity_left(sigma), 1.5);
            assert_eq!(c.feedback_velocity_right(sigma), 0.5);
        }
    }

    #[test]
    fn coefficient_values() {
        // E = 1, K₀ = e^{−2}: |coefficient| = tanh(1)
        let c = controller(1.0, 1.0, (-2.0f64).exp(), 2.0, LawVariant::RiemannGain);
        assert!((c.left_coefficient() - 0.761_594_155_955_765).abs() < 1e-12);
        assert!((c.right_coefficient() + 0.761_594_155_955_765).abs() < 1e-12);
        // E = 4, K₁ = e^{−1}
        let c = controller(4.0, 1.0, (-1.0f64).exp(), 2.0, LawVariant::RiemannGain);
        assert!((c.right_coefficient() + 0.231_058_578_630_005).abs() < 1e-12);
    }

    #[test]
    fn riemann_gain_matches_reflection_law() {
        // feeding the law's velocity through U = T𝓡 reproduces 𝓡⁺(0) = K₀𝓡⁻(0)
        // and 𝓡⁻(L) = K₁𝓡⁺(L)
        let (e, l, s) = (9200.0, 7.5, 63.0);
        let sys = build_system(e, s).unwrap();
        let params = MaterialParams::new(e, l, 1.0).unwrap();
        let gains = synthesize_gains(&sys, &params);
        let c = FeedbackController::new(
            params,
            DesiredState::uniform(0.0, 0.0, l).unwrap(),
            gains,
            s,
            LawVariant::RiemannGain,
        );
        let minus = 0.37;
        let plus = gains.k0 * minus;
        let u = sys.to_physical(crate::hyperbolics::RiemannState { plus, minus });
        assert!((c.feedback_velocity_left(u.delta_sigma) - u.delta_v).abs() < 1e-14);

        let plus = -1.3;
        let minus = gains.k1 * plus;
        let u: PerturbationState = sys.to_physical(crate::hyperbolics::RiemannState { plus, minus });
        assert!((c.feedback_velocity_right(u.delta_sigma) - u.delta_v).abs() < 1e-13);
    }

    #[test]
    fn coefficient_magnitude_is_tanh() {
        for &(e, l, s) in &[(1.0, 1.0, 0.3), (9200.0, 7.5, 63.0), (8280.0, 7.5, 5.0), (4.0, 2.0, 9.0)] {
            let sys = build_system(e, s).unwrap();
            let params = MaterialParams::new(e, l, 1.0).unwrap();
            let gains = synthesize_gains(&sys, &params);
            let c = FeedbackController::new(
                params,
                DesiredState::uniform(0.0, 0.0, l).unwrap(),
                gains,
                s,
                LawVariant::RiemannGain,
            );
            let expected = (l / (2.0 * e.sqrt()) * s.abs()).tanh() / e.sqrt();
            assert!((c.left_coefficient().abs() - expected).abs() <= 1e-12 * expected);
            assert!((c.right_coefficient().abs() - expected).abs() <= 1e-12 * expected);
        }
    }

    #[test]
    fn section_three_start_accelerates_the_die() {
        // die on the right, wall on the left, no load yet
        let e = 9200.0;
        let l = 7.5;
        let s_star = 63.0;
        let sys = build_system(e, s_star).unwrap();
        let params = MaterialParams::new(e, l, 109.31).unwrap();
        let c = FeedbackController::new(
            params,
            DesiredState::new(146.0, 0.0, 1.5, l).unwrap(),
            synthesize_gains(&sys, &params),
            s_star,
            LawVariant::RiemannGain,
        )
        .with_modes(BoundaryMode::Wall, BoundaryMode::Feedback);
        let cmd = c.controller_step(&BoundarySample {
            t: 0.0,
            sigma_left: 0.0,
            sigma_right: 0.0,
        });
        assert_eq!(cmd.v_left, 0.0);
        assert!(cmd.v_right > 1.5);
    }

    #[test]
    fn laws_are_affine_and_pure() {
        for variant in [LawVariant::RiemannGain, LawVariant::CothClosedForm] {
            let c = controller(9200.0, 7.5, 0.4, 20.0, variant);
            let d = 7.25;
            let l1 = c.feedback_velocity_left(146.0 + d) - 1.5;
            let l2 = c.feedback_velocity_left(146.0 + 2.0 * d) - 1.5;
            assert!((l2 - 2.0 * l1).abs() < 1e-12);
            let r1 = c.feedback_velocity_right(146.0 + d) - 0.5;
            let r2 = c.feedback_velocity_right(146.0 + 2.0 * d) - 0.5;
            assert!((r2 - 2.0 * r1).abs() < 1e-12);
            let sample = BoundarySample {
                t: 1.0,
                sigma_left: 120.0,
                sigma_right: 170.0,
            };
            let a = c.controller_step(&sample);
            let b = c.controller_step(&sample);
            assert_eq!(a.v_left.to_bits(), b.v_left.to_bits());
            assert_eq!(a.v_right.to_bits(), b.v_right.to_bits());
        }
    }

    #[test]
    fn boundary_modes() {
        let c = controller(9200.0, 7.5, 0.4, 20.0, LawVariant::RiemannGain)
            .with_modes(BoundaryMode::Desired, BoundaryMode::Wall);
        let cmd = c.controller_step(&BoundarySample {
            t: 0.0,
            sigma_left: 10.0,
            sigma_right: 10.0,
        });
        assert_eq!((cmd.v_left, cmd.v_right), (1.5, 0.0));
    }

    #[test]
    fn sample_from_forces() {
        let s = BoundarySample::from_forces(0.5, 15959.26, 0.0, 109.31).unwrap();
        assert!((s.sigma_left - 146.0).abs() < 1e-9);
        assert!(BoundarySample::from_forces(0.5, 1.0, 1.0, 0.0).is_err());
    }
}
