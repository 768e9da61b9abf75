//! The linearized 2×2 system `∂t U + A ∂x U = −S U` for `U = (Δv, Δσ)` and its
//! diagonal form `∂t 𝓡 + Λ ∂x 𝓡 = −B 𝓡` in Riemann invariants `𝓡 = T⁻¹U`.
//!
//! Every matrix is written down in closed form. Column one of `T` belongs to
//! `λ₁ = +√E` (so `𝓡⁺` travels toward `x = L`) and column two to `λ₂ = −√E`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat2 = [[f64; 2]; 2];

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn mat_vec(a: &Mat2, v: [f64; 2]) -> [f64; 2] {
    [
        a[0][0] * v[0] + a[0][1] * v[1],
        a[1][0] * v[0] + a[1][1] * v[1],
    ]
}

pub fn transpose(a: &Mat2) -> Mat2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

pub fn max_abs_diff(a: &Mat2, b: &Mat2) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m
}

/// Physical perturbation `U = (Δv, Δσ)` at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerturbationState {
    pub delta_v: f64,
    pub delta_sigma: f64,
}

/// Riemann invariants `𝓡 = (𝓡⁺, 𝓡⁻)` at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RiemannState {
    pub plus: f64,
    pub minus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperbolicSystem {
    pub elastic_modulus: f64,
    pub s_star: f64,
    pub a: Mat2,
    pub s: Mat2,
    pub t: Mat2,
    pub t_inv: Mat2,
    /// `(λ₁, λ₂) = (+√E, −√E)`
    pub lambda: [f64; 2],
    pub b: Mat2,
}

impl HyperbolicSystem {
    pub fn new(elastic_modulus: f64, s_star: f64) -> Result<Self> {
        if !(elastic_modulus > 0.0) || !elastic_modulus.is_finite() {
            return Err(Error::invalid("E", format!("must be > 0, got {elastic_modulus}")));
        }
        if !s_star.is_finite() {
            return Err(Error::invalid("S*", "must be finite"));
        }
        let e = elastic_modulus;
        let c = e.sqrt();
        let half = 0.5 * s_star;
        Ok(Self {
            elastic_modulus: e,
            s_star,
            a: [[0.0, -1.0], [-e, 0.0]],
            s: [[0.0, 0.0], [0.0, s_star]],
            t: [[-1.0, 1.0], [c, c]],
            t_inv: [[-0.5, 0.5 / c], [0.5, 0.5 / c]],
            lambda: [c, -c],
            b: [[half, half], [half, half]],
        })
    }

    pub fn wave_speed(&self) -> f64 {
        self.lambda[0]
    }

    pub fn lambda_matrix(&self) -> Mat2 {
        [[self.lambda[0], 0.0], [0.0, self.lambda[1]]]
    }

    pub fn to_riemann(&self, u: PerturbationState) -> RiemannState {
        let [plus, minus] = mat_vec(&self.t_inv, [u.delta_v, u.delta_sigma]);
        RiemannState { plus, minus }
    }

    pub fn to_physical(&self, r: RiemannState) -> PerturbationState {
        let [delta_v, delta_sigma] = mat_vec(&self.t, [r.plus, r.minus]);
        PerturbationState {
            delta_v,
            delta_sigma,
        }
    }

    /// Squared extreme singular values `(min, max)` of `T⁻¹`.
    ///
    /// The columns of `T⁻¹` are orthogonal with squared norms `1/2` and
    /// `1/(2E)`.
    pub fn transform_gain_bounds(&self) -> (f64, f64) {
        let a: f64 = 0.5;
        let b = 0.5 / self.elastic_modulus;
        (a.min(b), a.max(b))
    }

    /// Exact `exp(−B·dt)`. `B = (S*/2)·J` with `J² = 2J`, so the exponential is
    /// `I + ½(e^{−S*·dt} − 1)·J`.
    pub fn source_propagator(&self, dt: f64) -> Mat2 {
        let c = 0.5 * ((-self.s_star * dt).exp() - 1.0);
        [[1.0 + c, c], [c, 1.0 + c]]
    }
}

pub fn build_system(elastic_modulus: f64, s_star: f64) -> Result<HyperbolicSystem> {
    HyperbolicSystem::new(elastic_modulus, s_star)
}

/// Cell-centered Riemann invariants on a grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RiemannField {
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

impl RiemannField {
    pub fn zeros(n: usize) -> Self {
        Self {
            plus: vec![0.0; n],
            minus: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.plus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plus.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            plus: self.plus.iter().map(|r| r * factor).collect(),
            minus: self.minus.iter().map(|r| r * factor).collect(),
        }
    }
}

/// Cell-centered physical perturbations on a grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PerturbationField {
    pub delta_v: Vec<f64>,
    pub delta_sigma: Vec<f64>,
}

impl PerturbationField {
    pub fn zeros(n: usize) -> Self {
        Self {
            delta_v: vec![0.0; n],
            delta_sigma: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.delta_v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta_v.is_empty()
    }

    /// `Σ dx (Δv² + Δσ²)`
    pub fn norm_sq(&self, dx: f64) -> f64 {
        self.delta_v
            .iter()
            .zip(&self.delta_sigma)
            .map(|(v, s)| v * v + s * s)
            .sum::<f64>()
            * dx
    }
}

impl HyperbolicSystem {
    pub fn field_to_riemann(&self, u: &PerturbationField) -> RiemannField {
        let (plus, minus) = u
            .delta_v
            .iter()
            .zip(&u.delta_sigma)
            .map(|(&delta_v, &delta_sigma)| {
                let r = self.to_riemann(PerturbationState {
                    delta_v,
                    delta_sigma,
                });
                (r.plus, r.minus)
            })
            .unzip();
        RiemannField { plus, minus }
    }

    pub fn field_to_physical(&self, r: &RiemannField) -> PerturbationField {
        let (delta_v, delta_sigma) = r
            .plus
            .iter()
            .zip(&r.minus)
            .map(|(&plus, &minus)| {
                let u = self.to_physical(RiemannState { plus, minus });
                (u.delta_v, u.delta_sigma)
            })
            .unzip();
        PerturbationField {
            delta_v,
            delta_sigma,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

    #[test]
    fn build_examples() {
        let sys = build_system(1.0, 0.0).unwrap();
        assert_eq!(sys.lambda, [1.0, -1.0]);
        assert_eq!(sys.b, [[0.0; 2]; 2]);

        let sys = build_system(1.0, 1.0).unwrap();
        assert_eq!(sys.b, [[0.5, 0.5], [0.5, 0.5]]);
        let product = mat_mul(&sys.t_inv, &mat_mul(&sys.s, &sys.t));
        assert!(max_abs_diff(&product, &sys.b) < 1e-15);

        let sys = build_system(9200.0, 0.0).unwrap();
        assert!((sys.lambda[0] - 95.9166).abs() < 1e-4);
        assert_eq!(sys.lambda[0], -sys.lambda[1]);

        assert!(build_system(0.0, 1.0).is_err());
        assert!(build_system(-3.0, 1.0).is_err());
    }

    #[test]
    fn transform_examples() {
        let sys = build_system(1.0, 0.0).unwrap();
        assert_eq!(sys.to_riemann(PerturbationState::default()), RiemannState::default());
        let r = sys.to_riemann(PerturbationState {
            delta_v: -1.0,
            delta_sigma: 1.0,
        });
        assert!((r.plus - 1.0).abs() < 1e-15 && r.minus.abs() < 1e-15);

        let sys4 = build_system(4.0, 0.0).unwrap();
        let r = sys4.to_riemann(PerturbationState {
            delta_v: 1.0,
            delta_sigma: 2.0,
        });
        assert!(r.plus.abs() < 1e-15 && (r.minus - 1.0).abs() < 1e-15);

        assert_eq!(sys.to_physical(RiemannState::default()), PerturbationState::default());
        let u = sys.to_physical(RiemannState { plus: 1.0, minus: 0.0 });
        assert_eq!((u.delta_v, u.delta_sigma), (-1.0, 1.0));
        let u = sys.to_physical(RiemannState { plus: 0.0, minus: 1.0 });
        assert_eq!((u.delta_v, u.delta_sigma), (1.0, 1.0));
    }

    #[test]
    fn transport_direction_matches_columns() {
        // A·T[:,k] = λ_k·T[:,k]
        let sys = build_system(9200.0, 3.0).unwrap();
        let at = mat_mul(&sys.a, &sys.t);
        for k in 0..2 {
            for i in 0..2 {
                assert!((at[i][k] - sys.lambda[k] * sys.t[i][k]).abs() < 1e-10);
            }
        }
        assert!(sys.lambda[0] > 0.0);
    }

    #[test]
    fn source_propagator_is_matrix_exponential() {
        let sys = build_system(2.0, 0.7).unwrap();
        let dt = 0.3;
        // truncated Taylor series of exp(−B dt)
        let mut term = IDENTITY;
        let mut sum = IDENTITY;
        let mb = [[-sys.b[0][0] * dt, -sys.b[0][1] * dt], [-sys.b[1][0] * dt, -sys.b[1][1] * dt]];
        for k in 1..30 {
            term = mat_mul(&term, &mb);
            for i in 0..2 {
                for j in 0..2 {
                    term[i][j] /= k as f64;
                    sum[i][j] += term[i][j];
                }
            }
        }
        assert!(max_abs_diff(&sum, &sys.source_propagator(dt)) < 1e-14);
    }

    #[test]
    fn singular_values_of_inverse_transform() {
        let sys = build_system(7.0, 0.0).unwrap();
        let g = mat_mul(&transpose(&sys.t_inv), &sys.t_inv);
        // diagonal Gram matrix ⇒ eigenvalues are the diagonal
        assert!(g[0][1].abs() < 1e-15);
        let (lo, hi) = sys.transform_gain_bounds();
        assert!((lo - g[1][1]).abs() < 1e-15 && (hi - g[0][0]).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn round_trip(e in 1e-3f64..1e5, dv in -1e3f64..1e3, ds in -1e3f64..1e3) {
            let sys = build_system(e, 0.0).unwrap();
            let u = PerturbationState { delta_v: dv, delta_sigma: ds };
            let back = sys.to_physical(sys.to_riemann(u));
            let norm = (dv * dv + ds * ds).sqrt();
            let err = ((back.delta_v - dv).powi(2) + (back.delta_sigma - ds).powi(2)).sqrt();
            prop_assert!(err <= 1e-12 * norm.max(f64::MIN_POSITIVE));
        }

        #[test]
        fn identities(e in 1e-3f64..1e5, s in -1e3f64..1e3) {
            let sys = build_system(e, s).unwrap();
            prop_assert!(max_abs_diff(&mat_mul(&sys.t, &sys.t_inv), &IDENTITY) <= 1e-12);
            let lam = mat_mul(&sys.t_inv, &mat_mul(&sys.a, &sys.t));
            prop_assert!(max_abs_diff(&lam, &sys.lambda_matrix()) <= 1e-12 * e.max(1.0));
            let b = mat_mul(&sys.t_inv, &mat_mul(&sys.s, &sys.t));
            prop_assert!(max_abs_diff(&b, &sys.b) <= 1e-12 * s.abs().max(f64::MIN_POSITIVE));
        }
    }
}
