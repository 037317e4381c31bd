//! Benchmark objectives with analytic value, gradient, and Hessian, plus the
//! pluggable interface for user objectives.
//!
//! The built-ins mirror the experiment suite: a cubic (`example1`), a sine
//! (`example2`), a quartic 2-d surface with all four kinds of critical point
//! (`example3`), a Poisson log-likelihood on quarterly count data (`example4`,
//! needs a data file) and a family of seeded nonlinear least-squares instances
//! (`example5`). Evaluators must be pure; instances are immutable once built.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::constraints::DomainBox;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizationSense {
    Minimize,
    Maximize,
}

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;
type HessFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// An objective with analytic first and second derivatives on a box domain.
#[derive(Clone)]
pub struct Objective {
    name: String,
    dim: usize,
    domain: DomainBox,
    sense: OptimizationSense,
    f: ScalarFn,
    grad: GradFn,
    hess: HessFn,
}

impl Objective {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        domain: DomainBox,
        sense: OptimizationSense,
        f: ScalarFn,
        grad: GradFn,
        hess: HessFn,
    ) -> Self {
        assert_eq!(domain.dim(), dim, "domain dimension mismatch");
        Self {
            name: name.into(),
            dim,
            domain,
            sense,
            f,
            grad,
            hess,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    /// Replaces the domain box (run configs may restrict it).
    pub fn with_domain(mut self, domain: DomainBox) -> Result<Self> {
        if domain.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: domain.dim(),
            });
        }
        self.domain = domain;
        Ok(self)
    }

    pub fn sense(&self) -> OptimizationSense {
        self.sense
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        (self.f)(x)
    }

    pub fn grad(&self, x: &[f64]) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.dim);
        (self.grad)(x)
    }

    pub fn grad_norm(&self, x: &[f64]) -> f64 {
        self.grad(x).norm()
    }

    pub fn hess(&self, x: &[f64]) -> DMatrix<f64> {
        debug_assert_eq!(x.len(), self.dim);
        (self.hess)(x)
    }
}

impl std::fmt::Debug for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Objective")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("sense", &self.sense)
            .finish()
    }
}

fn default_domain(d: usize) -> DomainBox {
    DomainBox::symmetric(d, 10.0)
}

/// `f(x) = 2x³ − 3x² − 12x + 6` on `[−10, 10]`; maximum at `x = −1`, minimum at
/// `x = 2`, `f'(x) = 6(x−2)(x+1)`, `f''(x) = 6(2x−1)`.
pub fn example1() -> Objective {
    Objective::new(
        "example1",
        1,
        default_domain(1),
        OptimizationSense::Minimize,
        Arc::new(|x: &[f64]| 2.0 * x[0].powi(3) - 3.0 * x[0] * x[0] - 12.0 * x[0] + 6.0),
        Arc::new(|x: &[f64]| DVector::from_vec(vec![6.0 * (x[0] - 2.0) * (x[0] + 1.0)])),
        Arc::new(|x: &[f64]| DMatrix::from_element(1, 1, 6.0 * (2.0 * x[0] - 1.0))),
    )
}

/// `f(x) = sin(x)` on `[−10, 10]`.
pub fn example2() -> Objective {
    Objective::new(
        "example2",
        1,
        default_domain(1),
        OptimizationSense::Maximize,
        Arc::new(|x: &[f64]| x[0].sin()),
        Arc::new(|x: &[f64]| DVector::from_vec(vec![x[0].cos()])),
        Arc::new(|x: &[f64]| DMatrix::from_element(1, 1, -x[0].sin())),
    )
}

/// True maxima of `sin` inside `[−10, 10]`: `π/2 + 2πk`.
pub const EXAMPLE2_MAXIMA: [f64; 3] = [
    std::f64::consts::FRAC_PI_2 - std::f64::consts::TAU,
    std::f64::consts::FRAC_PI_2,
    std::f64::consts::FRAC_PI_2 + std::f64::consts::TAU,
];
/// True minima of `sin` inside `[−10, 10]`: `−π/2 + 2πk`.
pub const EXAMPLE2_MINIMA: [f64; 3] = [
    -std::f64::consts::FRAC_PI_2 - std::f64::consts::TAU,
    -std::f64::consts::FRAC_PI_2,
    -std::f64::consts::FRAC_PI_2 + std::f64::consts::TAU,
];

/// `f(x₁, x₂) = x₁x₂(x₁ + x₂)(1 + x₂)` on `[−10, 10]²` with critical points
/// `(0,0)` (inconclusive), `(0,−1)`, `(1,−1)` (saddles) and `(3/8, −3/4)`
/// (maximum).
pub fn example3() -> Objective {
    Objective::new(
        "example3",
        2,
        default_domain(2),
        OptimizationSense::Maximize,
        Arc::new(|x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            a * b * (a + b) * (1.0 + b)
        }),
        Arc::new(|x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            DVector::from_vec(vec![
                b * (2.0 * a + b) * (b + 1.0),
                a * (3.0 * b * b + 2.0 * b * (a + 1.0) + a),
            ])
        }),
        Arc::new(|x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let h11 = 2.0 * b * (b + 1.0);
            let h12 = 4.0 * a * b + 3.0 * b * b + 2.0 * (a + b);
            let h22 = 2.0 * a * (3.0 * b + a + 1.0);
            DMatrix::from_row_slice(2, 2, &[h11, h12, h12, h22])
        }),
    )
}

/// Quarterly count data for the Poisson regression objective: 14 integers, one
/// per line; `#`-prefixed lines are comments.
pub fn load_count_data(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::InvalidConfig(format!("cannot read count data {}: {e}", path.display()))
    })?;
    let counts: Vec<f64> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.parse::<u64>().map(|v| v as f64).map_err(|_| {
                Error::InvalidConfig(format!("bad count line {l:?} in {}", path.display()))
            })
        })
        .collect::<Result<_>>()?;
    if counts.len() != 14 {
        return Err(Error::InvalidConfig(format!(
            "expected 14 counts in {}, found {}",
            path.display(),
            counts.len()
        )));
    }
    Ok(counts)
}

/// Poisson log-likelihood `f(x₁, x₂) = −Σᵢ exp(x₁ + i·x₂) + Σᵢ yᵢ(x₁ + i·x₂)`
/// over quarters `i = 1..14`; concave, to maximize.
pub fn example4(counts: Vec<f64>) -> Result<Objective> {
    if counts.len() != 14 {
        return Err(Error::InvalidConfig(format!(
            "need 14 counts, got {}",
            counts.len()
        )));
    }
    let y = Arc::new(counts);
    let y_f = Arc::clone(&y);
    let y_g = Arc::clone(&y);
    Ok(Objective::new(
        "example4",
        2,
        default_domain(2),
        OptimizationSense::Maximize,
        Arc::new(move |x: &[f64]| {
            let mut v = 0.0;
            for (idx, &yi) in y_f.iter().enumerate() {
                let i = (idx + 1) as f64;
                let eta = x[0] + i * x[1];
                v += -eta.exp() + yi * eta;
            }
            v
        }),
        Arc::new(move |x: &[f64]| {
            let (mut g0, mut g1) = (0.0, 0.0);
            for (idx, &yi) in y_g.iter().enumerate() {
                let i = (idx + 1) as f64;
                let lam = (x[0] + i * x[1]).exp();
                g0 += yi - lam;
                g1 += i * (yi - lam);
            }
            DVector::from_vec(vec![g0, g1])
        }),
        Arc::new(move |x: &[f64]| {
            let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
            for idx in 0..14 {
                let i = (idx + 1) as f64;
                let lam = (x[0] + i * x[1]).exp();
                s0 += lam;
                s1 += i * lam;
                s2 += i * i * lam;
            }
            DMatrix::from_row_slice(2, 2, &[-s0, -s1, -s1, -s2])
        }),
    ))
}

/// Counter-based generator used to build reproducible `example5` instances:
/// SplitMix64 with the standard constants, uniforms from the top 53 bits,
/// normals via the polar Box–Muller transform (second value cached).
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
    spare_normal: Option<f64>,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self {
            state: seed,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform on `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `(-1, 1)`.
    pub fn uniform_sym(&mut self) -> f64 {
        2.0 * self.next_f64() - 1.0
    }

    /// Standard normal (polar method).
    pub fn normal(&mut self) -> f64 {
        if let Some(v) = self.spare_normal.take() {
            return v;
        }
        loop {
            let u = self.uniform_sym();
            let v = self.uniform_sym();
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let m = (-2.0 * s.ln() / s).sqrt();
                self.spare_normal = Some(v * m);
                return u * m;
            }
        }
    }
}

/// A generated nonlinear least-squares instance: minimize
/// `f(x) = Σᵢ (yᵢ − Σⱼ [exp(−z_ij x_j²) + z_ij x_{d−j+1}])²`.
#[derive(Debug, Clone)]
pub struct NlsInstance {
    pub m: usize,
    pub z: DMatrix<f64>,
    pub y: DVector<f64>,
    pub theta0: DVector<f64>,
    pub sigma0_sq: f64,
    pub seed: u64,
}

/// Observation counts used in the experiments for `d = 2, 5, 10, 50, 100`.
pub fn example5_default_m(d: usize) -> usize {
    match d {
        2 => 10,
        5 => 10,
        10 => 20,
        50 => 75,
        100 => 200,
        _ => (2 * d).max(10),
    }
}

impl NlsInstance {
    /// Draws `θ₀ⱼ ~ U(−1,1)`, `z_ij ~ N(0,1)` row-major, then
    /// `yᵢ ~ N(μ₀ᵢ, 0.1)`, all from one SplitMix64 stream.
    pub fn generate(d: usize, m: usize, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let theta0 = DVector::from_fn(d, |_, _| rng.uniform_sym());
        let z = DMatrix::from_fn(m, d, |_, _| rng.normal());
        let sigma0_sq: f64 = 0.1;
        let mut y = DVector::zeros(m);
        for i in 0..m {
            let mut mu = 0.0;
            for j in 0..d {
                mu += (-z[(i, j)] * theta0[j] * theta0[j]).exp() + z[(i, j)] * theta0[d - 1 - j];
            }
            y[i] = mu + sigma0_sq.sqrt() * rng.normal();
        }
        Self {
            m,
            z,
            y,
            theta0,
            sigma0_sq,
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    /// Model mean `μᵢ(x)` for all observations.
    pub fn mean(&self, x: &[f64]) -> DVector<f64> {
        let d = self.dim();
        DVector::from_fn(self.m, |i, _| {
            let mut mu = 0.0;
            for j in 0..d {
                mu += (-self.z[(i, j)] * x[j] * x[j]).exp() + self.z[(i, j)] * x[d - 1 - j];
            }
            mu
        })
    }

    /// Jacobian `∂μᵢ/∂x_l = −2 z_il x_l exp(−z_il x_l²) + z_{i, d−l+1}`.
    pub fn mean_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(self.m, d, |i, l| {
            let zil = self.z[(i, l)];
            -2.0 * zil * x[l] * (-zil * x[l] * x[l]).exp() + self.z[(i, d - 1 - l)]
        })
    }

    /// Damped Gauss–Newton refinement from `θ₀`; deterministic. Used to produce
    /// a support point for chain initialization in generated configs.
    pub fn gauss_newton_start(&self, iterations: usize) -> DVector<f64> {
        let d = self.dim();
        let mut x: Vec<f64> = self.theta0.iter().copied().collect();
        let fval = |p: &[f64]| {
            let r = &self.y - self.mean(p);
            r.norm_squared()
        };
        for _ in 0..iterations {
            let jac = self.mean_jacobian(&x);
            let r = &self.y - self.mean(&x);
            let mut a = jac.transpose() * &jac;
            for i in 0..d {
                a[(i, i)] += 1e-10;
            }
            let step = match a.cholesky() {
                Some(c) => c.solve(&(jac.transpose() * r)),
                None => break,
            };
            let f0 = fval(&x);
            let mut t = 1.0;
            let mut improved = false;
            while t > 1e-8 {
                let cand: Vec<f64> = x
                    .iter()
                    .zip(step.iter())
                    .map(|(xi, si)| xi + t * si)
                    .collect();
                if fval(&cand) < f0 {
                    x = cand;
                    improved = true;
                    break;
                }
                t *= 0.5;
            }
            if !improved {
                break;
            }
        }
        DVector::from_vec(x)
    }
}

/// Builds the `example5` objective and its generating instance. `m = 0` selects
/// the per-dimension default count.
pub fn example5(d: usize, m: usize, seed: u64) -> (Objective, NlsInstance) {
    let m = if m == 0 { example5_default_m(d) } else { m };
    let inst = NlsInstance::generate(d, m, seed);
    let obj = objective_from_nls(&inst);
    (obj, inst)
}

fn objective_from_nls(inst: &NlsInstance) -> Objective {
    let d = inst.dim();
    let i1 = Arc::new(inst.clone());
    let i2 = Arc::clone(&i1);
    let i3 = Arc::clone(&i1);
    Objective::new(
        format!("example5-d{d}"),
        d,
        default_domain(d),
        OptimizationSense::Minimize,
        Arc::new(move |x: &[f64]| {
            let r = &i1.y - i1.mean(x);
            r.norm_squared()
        }),
        Arc::new(move |x: &[f64]| {
            let r = &i2.y - i2.mean(x);
            let jac = i2.mean_jacobian(x);
            -2.0 * (jac.transpose() * r)
        }),
        Arc::new(move |x: &[f64]| {
            let r = &i3.y - i3.mean(x);
            let jac = i3.mean_jacobian(x);
            let mut h = 2.0 * (jac.transpose() * &jac);
            // second-derivative term: ∂²μᵢ/∂x_l² = 2 z_il exp(−z_il x_l²)(2 z_il x_l² − 1)
            for l in 0..i3.dim() {
                let mut s = 0.0;
                for i in 0..i3.m {
                    let zil = i3.z[(i, l)];
                    let e = (-zil * x[l] * x[l]).exp();
                    s += r[i] * 2.0 * zil * e * (2.0 * zil * x[l] * x[l] - 1.0);
                }
                h[(l, l)] -= 2.0 * s;
            }
            h
        }),
    )
}
