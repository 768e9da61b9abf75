//! Material parameters, desired states and viscoplastic laws.
//!
//! Stress is taken positive in the loading direction of the flow rule, so a
//! viscoplastic law produces a non-negative plastic strain rate for
//! non-negative stress.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elastic modulus, domain length and cross-section of the workpiece.
///
/// Density is normalized to one and kept only so that the invariant is
/// visible in serialized output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    /// Elastic modulus `E` in MPa.
    pub elastic_modulus: f64,
    /// Domain length `L` in mm.
    pub length: f64,
    /// Cross-section `A` in mm².
    pub area: f64,
    pub density: f64,
}

impl MaterialParams {
    pub fn new(elastic_modulus: f64, length: f64, area: f64) -> Result<Self> {
        let params = Self {
            elastic_modulus,
            length,
            area,
            density: 1.0,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        positive("E", self.elastic_modulus)?;
        positive("L", self.length)?;
        positive("A", self.area)?;
        if self.density != 1.0 {
            return Err(Error::invalid("density", "density is normalized to 1"));
        }
        Ok(())
    }

    /// Characteristic wave speed `√E`.
    pub fn wave_speed(&self) -> f64 {
        self.elastic_modulus.sqrt()
    }
}

/// Target stress and a linear target velocity profile on `[0, L]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesiredState {
    pub sigma_star: f64,
    /// `v*(0)`
    pub v_star_left: f64,
    /// `v*(L)`
    pub v_star_right: f64,
    pub length: f64,
}

impl DesiredState {
    pub fn new(sigma_star: f64, v_star_left: f64, v_star_right: f64, length: f64) -> Result<Self> {
        finite("sigma_star", sigma_star)?;
        finite("v_star_left", v_star_left)?;
        finite("v_star_right", v_star_right)?;
        positive("L", length)?;
        Ok(Self {
            sigma_star,
            v_star_left,
            v_star_right,
            length,
        })
    }

    /// Uniform velocity profile.
    pub fn uniform(sigma_star: f64, v_star: f64, length: f64) -> Result<Self> {
        Self::new(sigma_star, v_star, v_star, length)
    }

    pub fn v_star(&self, x: f64) -> f64 {
        let s = (x / self.length).clamp(0.0, 1.0);
        self.v_star_left + s * (self.v_star_right - self.v_star_left)
    }
}

/// Microstructural state carried by each material point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InternalState {
    /// Globularized volume fraction `X ∈ [0, 1]`.
    pub globular_fraction: f64,
    /// Dislocation density `ρ̄ ≥ 0` in 1/mm².
    pub dislocation_density: f64,
    /// Accumulated plastic strain, drives the Avrami kinetics.
    pub accumulated_strain: f64,
    /// Temperature in °C; constant over a run.
    pub temperature: f64,
}

impl Default for InternalState {
    fn default() -> Self {
        Self {
            globular_fraction: 0.0,
            dislocation_density: 0.0,
            accumulated_strain: 0.0,
            temperature: 20.0,
        }
    }
}

/// Time derivatives of the evolving parts of [`InternalState`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateRate {
    pub globular_fraction: f64,
    pub dislocation_density: f64,
    pub accumulated_strain: f64,
}

impl StateRate {
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            globular_fraction: self.globular_fraction * factor,
            dislocation_density: self.dislocation_density * factor,
            accumulated_strain: self.accumulated_strain * factor,
        }
    }
}

impl InternalState {
    /// Adds `rate` to the state (the caller scales by the step) and projects
    /// back onto `X ∈ [0, 1]`, `ρ̄ ≥ 0`.
    pub fn with_increment(&self, increment: StateRate) -> Self {
        Self {
            globular_fraction: (self.globular_fraction + increment.globular_fraction)
                .clamp(0.0, 1.0),
            dislocation_density: (self.dislocation_density + increment.dislocation_density)
                .max(0.0),
            accumulated_strain: (self.accumulated_strain + increment.accumulated_strain).max(0.0),
            temperature: self.temperature,
        }
    }

    /// One explicit Euler step of the internal-state equations.
    pub fn euler_step(&self, rate: StateRate, dt: f64) -> Self {
        self.with_increment(rate.scaled(dt))
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.globular_fraction) {
            return Err(Error::invalid("X", "globularized fraction must lie in [0, 1]"));
        }
        if !(self.dislocation_density >= 0.0) || !self.dislocation_density.is_finite() {
            return Err(Error::invalid("rho_bar", "dislocation density must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Norton power law `ε̇ᵖ = (σ/σ_ref)ⁿ / t_ref` for `σ ≥ 0`, zero otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NortonLaw {
    pub sigma_ref: f64,
    pub exponent: f64,
    pub t_ref: f64,
}

impl NortonLaw {
    pub fn new(sigma_ref: f64, exponent: f64, t_ref: f64) -> Result<Self> {
        let law = Self {
            sigma_ref,
            exponent,
            t_ref,
        };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        positive("sigma_ref", self.sigma_ref)?;
        finite("exponent", self.exponent)?;
        if self.exponent < 1.0 {
            return Err(Error::invalid("exponent", "must be >= 1"));
        }
        positive("t_ref", self.t_ref)
    }

    pub fn rate(&self, sigma: f64) -> f64 {
        if sigma <= 0.0 {
            0.0
        } else {
            (sigma / self.sigma_ref).powf(self.exponent) / self.t_ref
        }
    }

    /// Analytic `dε̇ᵖ/dσ`.
    pub fn rate_slope(&self, sigma: f64) -> f64 {
        if sigma <= 0.0 {
            if self.exponent == 1.0 && sigma == 0.0 {
                return 1.0 / (self.sigma_ref * self.t_ref);
            }
            return 0.0;
        }
        self.exponent * sigma.powf(self.exponent - 1.0)
            / self.sigma_ref.powf(self.exponent)
            / self.t_ref
    }
}

/// Kocks–Mecking storage and dynamic recovery of dislocations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KocksMecking {
    /// Generation coefficient `k₁`.
    pub k1: f64,
    /// Annihilation coefficient `k₂ ≥ 0`.
    pub k2: f64,
}

impl KocksMecking {
    /// `dρ̄/dt = k₁√ρ̄|ε̇ᵖ| − k₂ρ̄|ε̇ᵖ|`
    pub fn density_rate(&self, density: f64, strain_rate: f64) -> f64 {
        let rho = density.max(0.0);
        (self.k1 * rho.sqrt() - self.k2 * rho) * strain_rate.abs()
    }
}

/// Avrami globularization `X = 1 − exp(−k (εᵖ)^m)` and the globular-phase
/// softening relative to the lamellar flow stress.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Avrami {
    pub k: f64,
    pub m: f64,
    /// `σ_glob = softening · σ_lam`, in (0, 1].
    pub softening: f64,
}

impl Avrami {
    pub fn fraction(&self, strain: f64) -> f64 {
        1.0 - (-self.k * strain.max(0.0).powf(self.m)).exp()
    }

    /// `dX/dt` obtained by differentiating the Avrami curve along the
    /// accumulated strain.
    pub fn fraction_rate(&self, strain: f64, strain_rate: f64) -> f64 {
        let e = strain.max(0.0);
        self.k * self.m * e.powf(self.m - 1.0) * (-self.k * e.powf(self.m)).exp() * strain_rate.abs()
    }
}

/// Taylor hardening `σ_lam = σ₀ + α·M·G·b·√ρ̄`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Taylor {
    pub sigma0: f64,
    pub alpha: f64,
    pub taylor_factor: f64,
    pub shear_modulus: f64,
    pub burgers: f64,
}

impl Taylor {
    pub fn flow_stress(&self, density: f64) -> f64 {
        self.sigma0
            + self.alpha * self.taylor_factor * self.shear_modulus * self.burgers * density.max(0.0).sqrt()
    }
}

/// Perzyna-type overstress rate `ε̇ᵖ = ⟨(σ − σ_mix)/σ_drag⟩ⁿ / t_ref`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overstress {
    pub drag_stress: f64,
    pub exponent: f64,
    pub t_ref: f64,
}

/// Hybrid hardening/softening law: Kocks–Mecking dislocations with Taylor
/// hardening in the lamellar phase, Avrami globularization, mixture rule, and
/// an overstress flow rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridLaw {
    pub kocks_mecking: KocksMecking,
    pub avrami: Avrami,
    pub taylor: Taylor,
    pub overstress: Overstress,
}

impl HybridLaw {
    pub fn new(
        kocks_mecking: KocksMecking,
        avrami: Avrami,
        taylor: Taylor,
        overstress: Overstress,
    ) -> Result<Self> {
        let law = Self {
            kocks_mecking,
            avrami,
            taylor,
            overstress,
        };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        let km = &self.kocks_mecking;
        finite("kocks_mecking.k1", km.k1)?;
        non_negative("kocks_mecking.k2", km.k2)?;
        non_negative("avrami.k", self.avrami.k)?;
        finite("avrami.m", self.avrami.m)?;
        if self.avrami.m < 1.0 {
            return Err(Error::invalid("avrami.m", "Avrami exponent must be >= 1"));
        }
        positive("avrami.softening", self.avrami.softening)?;
        if self.avrami.softening > 1.0 {
            return Err(Error::invalid("avrami.softening", "must lie in (0, 1]"));
        }
        let t = &self.taylor;
        non_negative("taylor.sigma0", t.sigma0)?;
        non_negative("taylor.alpha", t.alpha)?;
        non_negative("taylor.taylor_factor", t.taylor_factor)?;
        non_negative("taylor.shear_modulus", t.shear_modulus)?;
        non_negative("taylor.burgers", t.burgers)?;
        positive("overstress.drag_stress", self.overstress.drag_stress)?;
        finite("overstress.exponent", self.overstress.exponent)?;
        if self.overstress.exponent < 1.0 {
            return Err(Error::invalid("overstress.exponent", "exponent must be >= 1"));
        }
        positive("overstress.t_ref", self.overstress.t_ref)
    }

    /// Mixture-rule flow stress `X·σ_glob + (1 − X)·σ_lam`.
    pub fn mixture_stress(&self, state: &InternalState) -> f64 {
        let lamellar = self.taylor.flow_stress(state.dislocation_density);
        let globular = self.avrami.softening * lamellar;
        let x = state.globular_fraction.clamp(0.0, 1.0);
        x * globular + (1.0 - x) * lamellar
    }

    pub fn rate(&self, sigma: f64, state: &InternalState) -> f64 {
        let over = sigma - self.mixture_stress(state);
        if over <= 0.0 {
            0.0
        } else {
            (over / self.overstress.drag_stress).powf(self.overstress.exponent) / self.overstress.t_ref
        }
    }

    pub fn state_rate(&self, sigma: f64, state: &InternalState) -> StateRate {
        let rate = self.rate(sigma, state);
        StateRate {
            globular_fraction: self.avrami.fraction_rate(state.accumulated_strain, rate),
            dislocation_density: self
                .kocks_mecking
                .density_rate(state.dislocation_density, rate),
            accumulated_strain: rate.abs(),
        }
    }
}

/// A pluggable constitutive rule for the viscoplastic strain rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ViscoplasticLaw {
    /// No plastic flow.
    Elastic,
    Norton(NortonLaw),
    Hybrid(HybridLaw),
}

impl ViscoplasticLaw {
    pub fn norton(sigma_ref: f64, exponent: f64, t_ref: f64) -> Result<Self> {
        NortonLaw::new(sigma_ref, exponent, t_ref).map(Self::Norton)
    }

    pub fn hybrid(
        kocks_mecking: KocksMecking,
        avrami: Avrami,
        taylor: Taylor,
        overstress: Overstress,
    ) -> Result<Self> {
        HybridLaw::new(kocks_mecking, avrami, taylor, overstress).map(Self::Hybrid)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Elastic => Ok(()),
            Self::Norton(law) => law.validate(),
            Self::Hybrid(law) => law.validate(),
        }
    }

    /// Plastic strain rate in 1/s.
    pub fn plastic_strain_rate(&self, sigma: f64, state: &InternalState) -> f64 {
        match self {
            Self::Elastic => 0.0,
            Self::Norton(law) => law.rate(sigma),
            Self::Hybrid(law) => law.rate(sigma, state),
        }
    }

    pub fn internal_state_rate(&self, sigma: f64, state: &InternalState) -> StateRate {
        match self {
            Self::Elastic => StateRate::default(),
            Self::Norton(law) => StateRate {
                accumulated_strain: law.rate(sigma).abs(),
                ..StateRate::default()
            },
            Self::Hybrid(law) => law.state_rate(sigma, state),
        }
    }

    /// Central-difference `∂ε̇ᵖ/∂σ` with the internal state frozen.
    pub fn rate_slope(&self, sigma: f64, state: &InternalState, step: f64) -> f64 {
        (self.plastic_strain_rate(sigma + step, state) - self.plastic_strain_rate(sigma - step, state))
            / (2.0 * step)
    }

    pub fn is_elastic(&self) -> bool {
        matches!(self, Self::Elastic)
    }
}

/// Default stencil half-width for [`compute_s_star`].
pub fn default_fd_step(sigma_star: f64) -> f64 {
    (1e-6 * sigma_star.abs()).max(1e-8)
}

/// Linearization `S* = ∂σ(E·ε̇ᵖ)` at the desired stress by central
/// differences, holding the internal state frozen.
pub fn compute_s_star(
    law: &ViscoplasticLaw,
    params: &MaterialParams,
    desired: &DesiredState,
    state: &InternalState,
    fd_step: Option<f64>,
) -> Result<f64> {
    let step = fd_step.unwrap_or_else(|| default_fd_step(desired.sigma_star));
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::invalid("fd_step", "finite-difference step must be > 0"));
    }
    let sigma = desired.sigma_star;
    let hi = law.plastic_strain_rate(sigma + step, state);
    let lo = law.plastic_strain_rate(sigma - step, state);
    if !hi.is_finite() || !lo.is_finite() {
        return Err(Error::NonFinite(format!(
            "plastic strain rate in the S* stencil around sigma = {sigma}"
        )));
    }
    let s_star = params.elastic_modulus * (hi - lo) / (2.0 * step);
    if !s_star.is_finite() {
        return Err(Error::NonFinite("S*".into()));
    }
    Ok(s_star)
}

fn finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, "must be finite"))
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be > 0, got {value}")))
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite and >= 0, got {value}")))
    }
}
