//! The constrained prior region `B(ε)` on stationary-point candidates and the
//! two-dimensional second-derivative classifier.
//!
//! `B(ε)` is the domain box intersected with `‖∇f(x)‖ < ε` and a mode-dependent
//! second-order condition: Hessian positive definite for minima, negative definite
//! for maxima, `D(x) < 0` for 2-d saddles and `|D(x)| < det_tol` for the
//! inconclusive case, with `D = f''₁₁ f''₂₂ − (f''₁₂)²`. Definiteness is tested by
//! attempting a Cholesky factorization (of `−H` for the negative sense); no
//! eigendecomposition is involved. Box boundaries are excluded.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::Objective;

/// Axis-aligned box `[lo_i, hi_i]` per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
            return Err(Error::InvalidConfig(
                "domain box needs lo < hi componentwise".into(),
            ));
        }
        Ok(Self { lo, hi })
    }

    /// `[-10, 10]^d`, the default experiment domain.
    pub fn symmetric(dim: usize, half_width: f64) -> Self {
        Self {
            lo: vec![-half_width; dim],
            hi: vec![half_width; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Strict interior membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&v, (&l, &h))| v > l && v < h)
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }
}

/// Second-order condition attached to the gradient-norm ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionMode {
    /// Hessian positive definite.
    Minimum,
    /// Hessian negative definite.
    Maximum,
    /// `D(x) < 0`; requires `d = 2`.
    Saddle2d,
    /// `|D(x)| < det_tol`; requires `d = 2`.
    Inconclusive2d,
    /// No second-order condition (concave/convex problems).
    GradientOnly,
}

impl std::fmt::Display for RegionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RegionMode::Minimum => "minimum",
            RegionMode::Maximum => "maximum",
            RegionMode::Saddle2d => "saddle2d",
            RegionMode::Inconclusive2d => "inconclusive2d",
            RegionMode::GradientOnly => "gradient-only",
        };
        f.write_str(s)
    }
}

/// The prior support: gradient-norm ball of radius `epsilon` intersected with the
/// mode condition, inside `domain`.
#[derive(Debug, Clone)]
pub struct RegionSpec {
    pub epsilon: f64,
    pub mode: RegionMode,
    pub domain: DomainBox,
    /// Tolerance band for the inconclusive determinant test.
    pub det_tol: f64,
}

pub const DEFAULT_DET_TOL: f64 = 1e-3;

impl RegionSpec {
    pub fn new(epsilon: f64, mode: RegionMode, domain: DomainBox, det_tol: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        if det_tol < 0.0 {
            return Err(Error::InvalidConfig("det_tol must be nonnegative".into()));
        }
        Ok(Self {
            epsilon,
            mode,
            domain,
            det_tol,
        })
    }

    pub fn describe(&self) -> String {
        format!(
            "mode={}, epsilon={}, domain dim={}",
            self.mode,
            self.epsilon,
            self.domain.dim()
        )
    }
}

/// Definiteness sense for [`hessian_definite`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefiniteSense {
    Positive,
    Negative,
}

/// True iff the symmetrized matrix (negated for [`DefiniteSense::Negative`])
/// admits a Cholesky factorization.
pub fn hessian_definite(hess: &DMatrix<f64>, sense: DefiniteSense) -> bool {
    let mut m = 0.5 * (hess + hess.transpose());
    if sense == DefiniteSense::Negative {
        m = -m;
    }
    Cholesky::new(m).is_some()
}

/// Determinant of the 2-d second-derivative test, `D = h₁₁h₂₂ − h₁₂²`.
fn det2(hess: &DMatrix<f64>) -> f64 {
    let h12 = 0.5 * (hess[(0, 1)] + hess[(1, 0)]);
    hess[(0, 0)] * hess[(1, 1)] - h12 * h12
}

/// Membership in `B(ε)` for the given mode. The 2-d-only modes are a contract
/// violation in other dimensions.
pub fn in_region(x: &[f64], spec: &RegionSpec, obj: &Objective) -> Result<bool> {
    if x.len() != obj.dim() {
        return Err(Error::DimensionMismatch {
            expected: obj.dim(),
            got: x.len(),
        });
    }
    if matches!(spec.mode, RegionMode::Saddle2d | RegionMode::Inconclusive2d) && obj.dim() != 2 {
        return Err(Error::InvalidConfig(format!(
            "mode {} requires a 2-d objective, got d = {}",
            spec.mode,
            obj.dim()
        )));
    }
    if !spec.domain.contains(x) {
        return Ok(false);
    }
    if obj.grad(x).norm() >= spec.epsilon {
        return Ok(false);
    }
    let ok = match spec.mode {
        RegionMode::GradientOnly => true,
        RegionMode::Minimum => hessian_definite(&obj.hess(x), DefiniteSense::Positive),
        RegionMode::Maximum => hessian_definite(&obj.hess(x), DefiniteSense::Negative),
        RegionMode::Saddle2d => det2(&obj.hess(x)) < 0.0,
        RegionMode::Inconclusive2d => det2(&obj.hess(x)).abs() < spec.det_tol,
    };
    Ok(ok)
}

/// Outcome of the 2-d second-derivative test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Maximum,
    Minimum,
    Saddle,
    Inconclusive,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Classification::Maximum => "maximum",
            Classification::Minimum => "minimum",
            Classification::Saddle => "saddle",
            Classification::Inconclusive => "inconclusive",
        };
        f.write_str(s)
    }
}

/// Second-derivative test at a 2-d point: `D > 0` with `f''₁₁ < 0` is a maximum,
/// `D > 0` with `f''₁₁ > 0` a minimum, `D < 0` a saddle; `|D| < det_tol` takes
/// precedence and is inconclusive.
pub fn classify_critical_2d(x: &[f64], obj: &Objective, det_tol: f64) -> Result<Classification> {
    if obj.dim() != 2 || x.len() != 2 {
        return Err(Error::InvalidConfig(format!(
            "second-derivative classification requires d = 2, got {}",
            obj.dim()
        )));
    }
    let hess = obj.hess(x);
    let d = det2(&hess);
    Ok(if d.abs() < det_tol {
        Classification::Inconclusive
    } else if d < 0.0 {
        Classification::Saddle
    } else if hess[(0, 0)] < 0.0 {
        Classification::Maximum
    } else {
        Classification::Minimum
    })
}

/// Classification used for reported estimates in any dimension: the determinant
/// test when `d = 2`, otherwise definiteness of the Hessian.
pub fn classify_general(x: &[f64], obj: &Objective, det_tol: f64) -> Option<Classification> {
    if obj.dim() == 2 {
        return classify_critical_2d(x, obj, det_tol).ok();
    }
    let hess = obj.hess(x);
    if hessian_definite(&hess, DefiniteSense::Positive) {
        Some(Classification::Minimum)
    } else if hessian_definite(&hess, DefiniteSense::Negative) {
        Some(Classification::Maximum)
    } else {
        None
    }
}
