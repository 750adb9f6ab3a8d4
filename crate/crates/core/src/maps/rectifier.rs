use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly positive bijection `ℝ → (0, ∞)` applied to a partial derivative
/// to enforce monotonicity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rectifier {
    /// `ln(1 + e^z)`.
    #[default]
    Softplus,
    /// `e^z` for `z < 0`, `z + 1` for `z >= 0`.
    ShiftedElu,
}

impl Rectifier {
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            Rectifier::Softplus => {
                if z > 0.0 {
                    z + (-z).exp().ln_1p()
                } else {
                    z.exp().ln_1p()
                }
            }
            Rectifier::ShiftedElu => {
                if z < 0.0 {
                    z.exp()
                } else {
                    z + 1.0
                }
            }
        }
    }

    pub fn deriv(&self, z: f64) -> f64 {
        match self {
            Rectifier::Softplus => {
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
            Rectifier::ShiftedElu => {
                if z < 0.0 {
                    z.exp()
                } else {
                    1.0
                }
            }
        }
    }

    /// `r'(z) / r(z)`, the derivative of `ln r(z)`.
    pub fn log_deriv(&self, z: f64) -> f64 {
        match self {
            Rectifier::Softplus => self.deriv(z) / self.apply(z),
            Rectifier::ShiftedElu => {
                if z < 0.0 {
                    1.0
                } else {
                    1.0 / (z + 1.0)
                }
            }
        }
    }

    /// `ln r(z)` without underflow for very negative `z`.
    pub fn log_apply(&self, z: f64) -> f64 {
        match self {
            Rectifier::Softplus if z < -30.0 => z + (-z.exp() * 0.5).ln_1p(),
            Rectifier::ShiftedElu if z < 0.0 => z,
            _ => self.apply(z).ln(),
        }
    }

    pub fn inverse(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::Domain { what: "rectifier inverse", value: y, domain: "(0, inf)" });
        }
        Ok(match self {
            // ln(e^y - 1)
            Rectifier::Softplus => {
                if y > 1.0 {
                    y + (-(-y).exp()).ln_1p()
                } else {
                    y.exp_m1().ln()
                }
            }
            Rectifier::ShiftedElu => {
                if y < 1.0 {
                    y.ln()
                } else {
                    y - 1.0
                }
            }
        })
    }
}

impl std::fmt::Display for Rectifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Rectifier::Softplus => "softplus",
            Rectifier::ShiftedElu => "shifted-elu",
        })
    }
}

impl std::str::FromStr for Rectifier {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "softplus" | "soft-plus" => Ok(Rectifier::Softplus),
            "shifted-elu" | "elu" | "shifted_elu" => Ok(Rectifier::ShiftedElu),
            other => Err(Error::Parse(format!("unknown rectifier {other:?}"))),
        }
    }
}
