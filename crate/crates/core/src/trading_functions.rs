//! Trading functions: concave, increasing, differentiable maps from reserves
//! to the scalar a CFMM holds constant.
//!
//! | kind                  | value                                  | homogeneous |
//! |-----------------------|----------------------------------------|-------------|
//! | `Linear`              | `pᵀR`                                  | yes         |
//! | `Sum`                 | `1ᵀR`                                  | yes         |
//! | `GeometricMean`       | `Π R_i^{w_i}`                          | yes         |
//! | `HybridSumGeoMean`    | `(1-α)·1ᵀR + α·Π R_i^{w_i}`            | yes         |
//! | `CurveLike`           | `1ᵀR − α·Π R_i^{-1}`                   | no          |
//!
//! The geometric mean is evaluated in log space. At a reserve of exactly zero
//! its value is the limit 0, while its gradient is a domain error.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Weight vectors must sum to one within this tolerance.
const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Anything that can act as the trading function of a pool.
///
/// `TradingFunctionSpec` is the concrete implementation; the trait exists so
/// that acceptance and pricing logic can also run against transformed
/// functions such as `log ∘ φ`.
pub trait TradingFunction {
    fn dim(&self) -> usize;
    fn value(&self, reserves: &[f64]) -> Result<f64>;
    fn gradient(&self, reserves: &[f64]) -> Result<Vec<f64>>;
    fn hessian(&self, reserves: &[f64]) -> Result<DMatrix<f64>>;
    fn is_homogeneous(&self) -> bool;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TradingFunctionSpec {
    Linear { p: Vec<f64> },
    Sum { n: usize },
    GeometricMean { w: Vec<f64> },
    HybridSumGeoMean { alpha: f64, w: Vec<f64> },
    CurveLike { alpha: f64, n: usize },
}

impl TradingFunctionSpec {
    pub fn linear(p: Vec<f64>) -> Result<Self> {
        let spec = Self::Linear { p };
        spec.validate()?;
        Ok(spec)
    }

    pub fn sum(n: usize) -> Result<Self> {
        let spec = Self::Sum { n };
        spec.validate()?;
        Ok(spec)
    }

    pub fn geometric_mean(w: Vec<f64>) -> Result<Self> {
        let spec = Self::GeometricMean { w };
        spec.validate()?;
        Ok(spec)
    }

    /// Equal-weight geometric mean (constant product up to a monotone transform).
    pub fn constant_product(n: usize) -> Result<Self> {
        Self::geometric_mean(vec![1.0 / n as f64; n])
    }

    pub fn hybrid(alpha: f64, w: Vec<f64>) -> Result<Self> {
        let spec = Self::HybridSumGeoMean { alpha, w };
        spec.validate()?;
        Ok(spec)
    }

    pub fn curve_like(alpha: f64, n: usize) -> Result<Self> {
        let spec = Self::CurveLike { alpha, n };
        spec.validate()?;
        Ok(spec)
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Linear { .. } => "linear",
            Self::Sum { .. } => "sum",
            Self::GeometricMean { .. } => "geometric_mean",
            Self::HybridSumGeoMean { .. } => "hybrid_sum_geo_mean",
            Self::CurveLike { .. } => "curve_like",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n < 2 {
            return Err(Error::invalid(format!("trading function needs at least 2 assets, got {n}")));
        }
        match self {
            Self::Linear { p } => {
                if p.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                    return Err(Error::invalid("linear prices must be positive and finite"));
                }
            }
            Self::Sum { .. } => {}
            Self::GeometricMean { w } => validate_weights(w)?,
            Self::HybridSumGeoMean { alpha, w } => {
                validate_weights(w)?;
                if !(0.0..=1.0).contains(alpha) {
                    return Err(Error::invalid(format!("hybrid alpha must lie in [0, 1], got {alpha}")));
                }
            }
            Self::CurveLike { alpha, .. } => {
                if !(*alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::invalid(format!("curve-like alpha must be positive, got {alpha}")));
                }
            }
        }
        Ok(())
    }

    /// Whether the function exists (finitely) at reserves with zero entries.
    pub fn defined_on_boundary(&self) -> bool {
        !matches!(self, Self::CurveLike { .. })
    }

    /// Gradient does not depend on the reserves.
    pub fn has_constant_gradient(&self) -> bool {
        matches!(self, Self::Linear { .. } | Self::Sum { .. })
    }
}

fn validate_weights(w: &[f64]) -> Result<()> {
    if w.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::invalid("weights must be positive"));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::invalid(format!("weights must sum to 1, got {total}")));
    }
    Ok(())
}

fn check_nonnegative(r: &[f64]) -> Result<()> {
    if let Some(x) = r.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
        return Err(Error::domain(format!("reserves must be nonnegative and finite, got {x}")));
    }
    Ok(())
}

fn check_positive(r: &[f64]) -> Result<()> {
    if let Some(x) = r.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(Error::domain(format!("reserves must be strictly positive here, got {x}")));
    }
    Ok(())
}

/// `Π R_i^{w_i}` computed as `exp(Σ w_i ln R_i)`; 0 when any reserve is 0.
fn geo_mean(w: &[f64], r: &[f64]) -> f64 {
    if r.contains(&0.0) {
        return 0.0;
    }
    w.iter().zip(r).map(|(wi, ri)| wi * ri.ln()).sum::<f64>().exp()
}

fn geo_mean_gradient(w: &[f64], r: &[f64]) -> Vec<f64> {
    let g = geo_mean(w, r);
    w.iter().zip(r).map(|(wi, ri)| wi * g / ri).collect()
}

fn geo_mean_hessian(w: &[f64], r: &[f64]) -> DMatrix<f64> {
    let g = geo_mean(w, r);
    let n = w.len();
    DMatrix::from_fn(n, n, |i, j| {
        let outer = g * w[i] * w[j] / (r[i] * r[j]);
        if i == j {
            outer - g * w[i] / (r[i] * r[i])
        } else {
            outer
        }
    })
}

/// `Π R_i^{-1}`, in log space.
fn inverse_product(r: &[f64]) -> f64 {
    (-r.iter().map(|x| x.ln()).sum::<f64>()).exp()
}

impl TradingFunction for TradingFunctionSpec {
    fn dim(&self) -> usize {
        match self {
            Self::Linear { p } => p.len(),
            Self::Sum { n } | Self::CurveLike { n, .. } => *n,
            Self::GeometricMean { w } | Self::HybridSumGeoMean { w, .. } => w.len(),
        }
    }

    fn value(&self, r: &[f64]) -> Result<f64> {
        check_dim(self.dim(), r.len())?;
        check_nonnegative(r)?;
        Ok(match self {
            Self::Linear { p } => p.iter().zip(r).map(|(a, b)| a * b).sum(),
            Self::Sum { .. } => r.iter().sum(),
            Self::GeometricMean { w } => geo_mean(w, r),
            Self::HybridSumGeoMean { alpha, w } => {
                (1.0 - alpha) * r.iter().sum::<f64>() + alpha * geo_mean(w, r)
            }
            Self::CurveLike { alpha, .. } => {
                check_positive(r)?;
                r.iter().sum::<f64>() - alpha * inverse_product(r)
            }
        })
    }

    fn gradient(&self, r: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), r.len())?;
        match self {
            // constant gradients stay defined on the boundary of the orthant
            Self::Linear { p } => {
                check_nonnegative(r)?;
                Ok(p.clone())
            }
            Self::Sum { n } => {
                check_nonnegative(r)?;
                Ok(vec![1.0; *n])
            }
            Self::GeometricMean { w } => {
                check_positive(r)?;
                Ok(geo_mean_gradient(w, r))
            }
            Self::HybridSumGeoMean { alpha, w } => {
                check_positive(r)?;
                Ok(geo_mean_gradient(w, r)
                    .into_iter()
                    .map(|g| (1.0 - alpha) + alpha * g)
                    .collect())
            }
            Self::CurveLike { alpha, .. } => {
                check_positive(r)?;
                let q = inverse_product(r);
                Ok(r.iter().map(|ri| 1.0 + alpha * q / ri).collect())
            }
        }
    }

    fn hessian(&self, r: &[f64]) -> Result<DMatrix<f64>> {
        check_dim(self.dim(), r.len())?;
        let n = self.dim();
        match self {
            Self::Linear { .. } | Self::Sum { .. } => {
                check_nonnegative(r)?;
                Ok(DMatrix::zeros(n, n))
            }
            Self::GeometricMean { w } => {
                check_positive(r)?;
                Ok(geo_mean_hessian(w, r))
            }
            Self::HybridSumGeoMean { alpha, w } => {
                check_positive(r)?;
                Ok(geo_mean_hessian(w, r) * *alpha)
            }
            Self::CurveLike { alpha, .. } => {
                check_positive(r)?;
                let q = inverse_product(r);
                // H = -αQ (u uᵀ + diag(u²)), u = 1/R
                Ok(DMatrix::from_fn(n, n, |i, j| {
                    let uu = 1.0 / (r[i] * r[j]);
                    if i == j {
                        -alpha * q * 2.0 * uu
                    } else {
                        -alpha * q * uu
                    }
                }))
            }
        }
    }

    fn is_homogeneous(&self) -> bool {
        !matches!(self, Self::CurveLike { .. })
    }
}
