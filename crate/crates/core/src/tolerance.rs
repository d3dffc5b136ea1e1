//! Numerical tolerances shared by the pipelines.

use crate::error::{Error, Result};

/// Tolerance set. Every field can be overridden by name, e.g. from a
/// command-line `--tol tol_unit=1e-8` flag.
#[derive(Clone, Debug, PartialEq)]
pub struct Tolerances {
    /// Distance of a multiplier modulus from 1 that counts as "on the unit circle".
    pub unit: f64,
    /// Multiplier modulus that counts as zero (superstability).
    pub zero: f64,
    /// Relative threshold for a matrix power to count as zero.
    pub nilp: f64,
    /// Residual `|f(z)|` that counts as lying on the critical manifold.
    pub manifold: f64,
    /// Band for "= 0" defining conditions of planar singularities.
    pub cond: f64,
    /// Floor for "≠ 0" genericity conditions.
    pub floor: f64,
    /// Relative singular-value threshold for numerical rank.
    pub rank: f64,
    /// Radius around the base point inside which jets are evaluated.
    pub trust_radius: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            unit: 1e-9,
            zero: 1e-9,
            nilp: 1e-9,
            manifold: 1e-11,
            cond: 1e-8,
            floor: 1e-4,
            rank: 1e-9,
            trust_radius: 1.0,
        }
    }
}

impl Tolerances {
    pub const NAMES: [&'static str; 8] = [
        "tol_unit",
        "tol_zero",
        "tol_nilp",
        "tol_manifold",
        "tol_cond",
        "tol_floor",
        "tol_rank",
        "trust_radius",
    ];

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::Format(format!("tolerance {name} must be positive, got {value}")));
        }
        let slot = match name {
            "tol_unit" => &mut self.unit,
            "tol_zero" => &mut self.zero,
            "tol_nilp" => &mut self.nilp,
            "tol_manifold" => &mut self.manifold,
            "tol_cond" => &mut self.cond,
            "tol_floor" => &mut self.floor,
            "tol_rank" => &mut self.rank,
            "trust_radius" => &mut self.trust_radius,
            _ => {
                return Err(Error::Format(format!(
                    "unknown tolerance {name:?} (known: {})",
                    Self::NAMES.join(", ")
                )))
            }
        };
        *slot = value;
        Ok(())
    }

    /// `(name, value)` pairs in a fixed order, for report headers.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("tol_unit", self.unit),
            ("tol_zero", self.zero),
            ("tol_nilp", self.nilp),
            ("tol_manifold", self.manifold),
            ("tol_cond", self.cond),
            ("tol_floor", self.floor),
            ("tol_rank", self.rank),
            ("trust_radius", self.trust_radius),
        ]
    }
}
