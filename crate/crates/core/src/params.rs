//! Physical parameters of an identical-emitter chain and the scalar formulas
//! derived from them.

use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::linalg::ComplexMatrix;

/// Chain of `n` identical emitters. Energies and rates in eV with ħ = 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainParams {
    pub n: usize,
    /// Emitter frequency ω̃.
    pub omega: f64,
    /// Nearest-neighbour coherent coupling g̃.
    pub g: f64,
    /// Local decay rate γ̃.
    pub gamma: f64,
    /// Nearest-neighbour cross-decay rate γ̃₀₁.
    pub gamma_cross: f64,
}

impl ChainParams {
    pub const OMEGA_DEFAULT: f64 = 1.2045;
    pub const G_DEFAULT: f64 = 4.5e-3;
    pub const GAMMA_DEFAULT: f64 = 9e-3;
    pub const GAMMA_CROSS_DEFAULT: f64 = 9e-3;

    pub fn new(n: usize, omega: f64, g: f64, gamma: f64, gamma_cross: f64) -> Result<Self> {
        let p = Self { n, omega, g, gamma, gamma_cross };
        p.validate()?;
        Ok(p)
    }

    /// The parameter set used throughout the reference figures.
    pub fn paper_defaults(n: usize) -> Self {
        Self {
            n,
            omega: Self::OMEGA_DEFAULT,
            g: Self::G_DEFAULT,
            gamma: Self::GAMMA_DEFAULT,
            gamma_cross: Self::GAMMA_CROSS_DEFAULT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return arg("chain needs at least one emitter");
        }
        for (name, v) in [("omega", self.omega), ("g", self.g), ("gamma", self.gamma), ("gamma_cross", self.gamma_cross)] {
            if !v.is_finite() {
                return arg(format!("{name} must be finite"));
            }
        }
        if self.gamma < 0.0 {
            return arg(format!("gamma must be non-negative, got {}", self.gamma));
        }
        if self.gamma_cross.abs() > self.gamma * (1.0 + 1e-12) {
            return arg(format!(
                "|gamma_cross| = {} exceeds gamma = {}; decay probabilities would be negative",
                self.gamma_cross.abs(),
                self.gamma
            ));
        }
        Ok(())
    }

    pub fn with_n(self, n: usize) -> Self {
        Self { n, ..self }
    }

    /// Converts a dimensionless γ̃t into physical time (ħ/eV).
    pub fn time_from_gamma_t(&self, gamma_t: f64) -> Result<f64> {
        if self.gamma <= 0.0 {
            return arg("γ̃t is undefined when gamma = 0");
        }
        if gamma_t < 0.0 || !gamma_t.is_finite() {
            return arg(format!("γ̃t must be non-negative, got {gamma_t}"));
        }
        Ok(gamma_t / self.gamma)
    }
}

/// Superradiant and subradiant decay rates of an emitter pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedRates {
    pub gamma_plus: f64,
    pub gamma_minus: f64,
}

impl DerivedRates {
    /// Decay probabilities `(p₊, p₋)` for a time slice `dt`.
    pub fn probabilities(&self, dt: f64) -> Result<(f64, f64)> {
        Ok((decay_probability(self.gamma_plus, dt)?, decay_probability(self.gamma_minus, dt)?))
    }

    /// Rotation angles `(θ₊, θ₋)` for a time slice `dt`.
    pub fn angles(&self, dt: f64) -> Result<(f64, f64)> {
        let (pp, pm) = self.probabilities(dt)?;
        Ok((rotation_angle(pp)?, rotation_angle(pm)?))
    }
}

pub fn derived_rates(params: &ChainParams) -> DerivedRates {
    // Tiny negative values from |γ̃₀₁| = γ̃ round-off are clamped.
    DerivedRates {
        gamma_plus: (params.gamma + params.gamma_cross).max(0.0),
        gamma_minus: (params.gamma - params.gamma_cross).max(0.0),
    }
}

/// p = 1 − exp(−rate·t).
pub fn decay_probability(rate: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return arg(format!("time must be non-negative, got {t}"));
    }
    if !(rate >= 0.0) {
        return arg(format!("rate must be non-negative, got {rate}"));
    }
    if (rate * t).is_infinite() {
        return Ok(1.0);
    }
    Ok((-(-rate * t).exp_m1()).clamp(0.0, 1.0))
}

/// θ = 2·arcsin(√p), so that Ry(θ)|0⟩ has |1⟩-weight sin²(θ/2) = p.
pub fn rotation_angle(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return arg(format!("probability must lie in [0, 1], got {p}"));
    }
    Ok(2.0 * p.sqrt().asin())
}

/// Real basis change with P|00⟩=|00⟩, P|Λ₋⟩=|01⟩, P|Λ₊⟩=|10⟩, P|11⟩=|11⟩,
/// where |Λ∓⟩ = (|10⟩ ∓ |01⟩)/√2. The matrix is symmetric and squares to one.
pub fn basis_change_p() -> ComplexMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::from_real(
        4,
        4,
        &[
            1.0, 0.0, 0.0, 0.0, //
            0.0, -h, h, 0.0, //
            0.0, h, h, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        ],
    )
}

/// Interaction-basis states {G, Λ₋, Λ₊, E} as computational-basis vectors.
pub fn interaction_basis() -> [[f64; 4]; 4] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    [[1.0, 0.0, 0.0, 0.0], [0.0, -h, h, 0.0], [0.0, h, h, 0.0], [0.0, 0.0, 0.0, 1.0]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{r, C64};
    use proptest::prelude::*;

    #[test]
    fn decay_probability_values() {
        assert_eq!(decay_probability(1.0, 0.0).unwrap(), 0.0);
        assert!((decay_probability(1.0, 2f64.ln()).unwrap() - 0.5).abs() < 1e-15);
        assert!((decay_probability(1.0, 1e3).unwrap() - 1.0).abs() < 1e-15);
        assert!(decay_probability(1.0, -1.0).is_err());
    }

    #[test]
    fn rotation_angle_values() {
        assert_eq!(rotation_angle(0.0).unwrap(), 0.0);
        assert!((rotation_angle(0.5).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert!((rotation_angle(1.0).unwrap() - std::f64::consts::PI).abs() < 1e-15);
        assert!(rotation_angle(1.5).is_err());
    }

    #[test]
    fn rates_from_defaults() {
        let d = derived_rates(&ChainParams::paper_defaults(2));
        assert!((d.gamma_plus - 18e-3).abs() < 1e-15);
        assert_eq!(d.gamma_minus, 0.0);
        let d = derived_rates(&ChainParams { gamma_cross: 0.0, ..ChainParams::paper_defaults(2) });
        assert_eq!(d.gamma_plus, d.gamma_minus);
        let d = derived_rates(&ChainParams { gamma_cross: 4e-3, ..ChainParams::paper_defaults(2) });
        assert!((d.gamma_plus - 13e-3).abs() < 1e-15 && (d.gamma_minus - 5e-3).abs() < 1e-15);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(ChainParams::new(0, 1.0, 0.0, 1.0, 0.0).is_err());
        assert!(ChainParams::new(2, 1.0, 0.0, -1.0, 0.0).is_err());
        assert!(ChainParams::new(2, 1.0, 0.0, 1.0, 1.5).is_err());
        assert!(ChainParams::new(2, 1.0, 0.0, 1.0, -1.0).is_ok());
    }

    #[test]
    fn p_maps_interaction_states() {
        let p = basis_change_p();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let lm: Vec<C64> = [0.0, -h, h, 0.0].iter().map(|&x| r(x)).collect();
        let lp: Vec<C64> = [0.0, h, h, 0.0].iter().map(|&x| r(x)).collect();
        let a = p.matvec(&lm);
        let b = p.matvec(&lp);
        assert!((a[1] - r(1.0)).norm() < 1e-15 && a[2].norm() < 1e-15);
        assert!((b[2] - r(1.0)).norm() < 1e-15 && b[1].norm() < 1e-15);
        assert!(p.is_unitary(1e-12));
        assert!(p.matmul(&p).max_abs_diff(&ComplexMatrix::identity(4)) < 1e-15);
    }

    proptest! {
        #[test]
        fn angle_round_trip(p in 0.0f64..=1.0) {
            let th = rotation_angle(p).unwrap();
            prop_assert!(((th / 2.0).sin().powi(2) - p).abs() <= 1e-12);
        }

        #[test]
        fn rate_identities(gamma in 0.0f64..1.0, frac in -1.0f64..=1.0) {
            let p = ChainParams { n: 2, omega: 1.0, g: 0.1, gamma, gamma_cross: gamma * frac };
            let d = derived_rates(&p);
            prop_assert!((d.gamma_plus + d.gamma_minus - 2.0 * gamma).abs() <= 1e-15);
            prop_assert!((d.gamma_plus - d.gamma_minus - 2.0 * p.gamma_cross).abs() <= 1e-15);
        }
    }
}
