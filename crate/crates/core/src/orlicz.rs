//! Orlicz functions and the Luxemburg norm
//! `‖x‖_M = inf{ρ > 0 : Σ_i M(|x_i|/ρ) ≤ 1}`.
//!
//! The Orlicz function attached to a random variable `X` with a finite first
//! moment is `M(s) = ∫_0^s E[|X| 1{|X| ≥ 1/t}] dt`. For a finite sample
//! `a_1, …, a_m` its plug-in version has the closed form
//! `M̂(s) = (1/m) Σ_j |a_j| max(0, s − 1/|a_j|)`, which is piecewise linear,
//! convex, and zero on `[0, 1/max|a_j|]`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::randsrc::{
    sample_isotropic, IsotropicModel, Perturbation, PerturbationLaw, RngState, ScalarFactor,
};

/// Absolute quadrature tolerance for the Gaussian-marginal function.
pub const GAUSSIAN_QUAD_TOL: f64 = 1e-9;
/// Relative tolerance the Luxemburg solver guarantees.
pub const NORM_REL_TOL: f64 = 1e-10;
const MAX_BRACKET_STEPS: usize = 200;
const MAX_BISECTIONS: usize = 400;
const SHAPE_GRID: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum OrliczForm {
    /// `M(t) = t^p`, `p ≥ 1`.
    Power(f64),
    /// The Orlicz function of a standard normal marginal,
    /// `M(s) = √(2/π) ∫_0^s e^{-1/(2t²)} dt`.
    GaussianMarginal,
    Empirical(EmpiricalSample),
}

/// Sample magnitudes kept sorted in decreasing order with prefix sums, so
/// `M̂(s)` costs one binary search.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSample {
    magnitudes: Vec<f64>,
    prefix: Vec<f64>,
    count: usize,
}

impl EmpiricalSample {
    fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid(
                "empirical Orlicz function needs at least one sample",
            ));
        }
        if samples.iter().any(|a| !a.is_finite()) {
            return Err(invalid("empirical Orlicz samples must be finite"));
        }
        let mut magnitudes: Vec<f64> = samples
            .iter()
            .map(|a| a.abs())
            .filter(|&a| a > 0.0)
            .collect();
        magnitudes.sort_by(|a, b| b.total_cmp(a));
        let mut prefix = Vec::with_capacity(magnitudes.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for &a in &magnitudes {
            acc += a;
            prefix.push(acc);
        }
        Ok(EmpiricalSample {
            magnitudes,
            prefix,
            count: samples.len(),
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn max_magnitude(&self) -> f64 {
        self.magnitudes.first().copied().unwrap_or(0.0)
    }

    /// Nonzero magnitudes in decreasing order.
    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    fn eval(&self, s: f64) -> f64 {
        let k = self.magnitudes.partition_point(|&a| a * s > 1.0);
        if k == 0 {
            return 0.0;
        }
        ((s * self.prefix[k] - k as f64) / self.count as f64).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrliczFn {
    pub form: OrliczForm,
    /// Evaluation tolerance; only the quadrature form uses it.
    pub tolerance: f64,
}

impl OrliczFn {
    pub fn power(p: f64) -> Result<Self> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(invalid(format!(
                "power Orlicz function needs finite p >= 1, got {p}"
            )));
        }
        Ok(OrliczFn {
            form: OrliczForm::Power(p),
            tolerance: 0.0,
        })
    }

    pub fn gaussian_marginal() -> Self {
        OrliczFn {
            form: OrliczForm::GaussianMarginal,
            tolerance: GAUSSIAN_QUAD_TOL,
        }
    }

    pub fn empirical(samples: &[f64]) -> Result<Self> {
        Ok(OrliczFn {
            form: OrliczForm::Empirical(EmpiricalSample::new(samples)?),
            tolerance: 0.0,
        })
    }

    pub fn name(&self) -> &'static str {
        match self.form {
            OrliczForm::Power(_) => "power",
            OrliczForm::GaussianMarginal => "gaussian_marginal",
            OrliczForm::Empirical(_) => "empirical",
        }
    }

    /// `M(s)`; no argument check, `s` must be finite and nonnegative.
    fn value(&self, s: f64) -> f64 {
        match &self.form {
            OrliczForm::Power(p) => s.powf(*p),
            OrliczForm::GaussianMarginal => gaussian_marginal(s, self.tolerance),
            OrliczForm::Empirical(e) => e.eval(s),
        }
    }

    pub fn eval(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(invalid(format!(
                "Orlicz function argument must be >= 0, got {s}"
            )));
        }
        Ok(self.value(s))
    }

    /// Checks `M(0) = 0`, monotonicity and convexity on a 64-point grid.
    pub fn check_shape(&self) -> Result<()> {
        let top = match &self.form {
            OrliczForm::Empirical(e) if e.max_magnitude() > 0.0 => {
                4.0 * (1.0 / e.max_magnitude()).max(1.0)
            }
            _ => 8.0,
        };
        let values: Vec<f64> = (0..SHAPE_GRID)
            .map(|k| self.value(top * k as f64 / (SHAPE_GRID - 1) as f64))
            .collect();
        if values[0] != 0.0 {
            return Err(Error::Numeric(format!("M(0) = {} is not zero", values[0])));
        }
        let scale = values.last().copied().unwrap_or(0.0).abs().max(1.0);
        let slack = 1e-9 * scale;
        for w in values.windows(2) {
            if w[1] - w[0] < -slack {
                return Err(Error::Numeric("Orlicz function is decreasing".into()));
            }
        }
        for w in values.windows(3) {
            if w[2] - 2.0 * w[1] + w[0] < -slack {
                return Err(Error::Numeric("Orlicz function is not convex".into()));
            }
        }
        Ok(())
    }
}

fn gaussian_integrand(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-0.5 / (t * t)).exp()
    }
}

/// `√(2/π) ∫_0^s e^{-1/(2t²)} dt` by adaptive Simpson.
fn gaussian_marginal(s: f64, tol: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let c = (2.0 / PI).sqrt();
    let tol = if tol > 0.0 { tol } else { GAUSSIAN_QUAD_TOL };
    c * adaptive_simpson(gaussian_integrand, 0.0, s, tol / c, 60)
}

fn adaptive_simpson(f: impl Fn(f64) -> f64 + Copy, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: impl Fn(f64) -> f64 + Copy,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Luxemburg norm of `x` by bisection on `ρ`.
///
/// The upper end of the bracket starts at `max|x_i|` (times `max|a_j|` for an
/// empirical function) and doubles until `Σ M(|x_i|/ρ) ≤ 1`; the lower end is
/// halved from there until the sum exceeds 1. The returned `ρ` always
/// satisfies `Σ M(|x_i|/ρ) ≤ 1`.
pub fn luxemburg_norm(m: &OrliczFn, x: &[f64]) -> Result<f64> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid("vector entries must be finite"));
    }
    let xmax = x.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if xmax == 0.0 {
        return Err(invalid(
            "Luxemburg norm of the zero vector is not solved for",
        ));
    }
    let mags: Vec<f64> = x.iter().map(|v| v.abs()).filter(|&v| v > 0.0).collect();
    let total = |rho: f64| mags.iter().map(|&v| m.value(v / rho)).sum::<f64>();

    let scale = match &m.form {
        OrliczForm::Empirical(e) => e.max_magnitude(),
        _ => 1.0,
    };
    if scale == 0.0 {
        return Err(Error::Numeric(
            "Orlicz function vanishes identically".into(),
        ));
    }
    let mut hi = xmax * scale;
    let mut steps = 0;
    while total(hi) > 1.0 {
        hi *= 2.0;
        steps += 1;
        if steps > MAX_BRACKET_STEPS || !hi.is_finite() {
            return Err(Error::Numeric(
                "no upper bracket for the Luxemburg norm".into(),
            ));
        }
    }
    let mut lo = 0.5 * hi;
    steps = 0;
    while total(lo) <= 1.0 {
        hi = lo;
        lo *= 0.5;
        steps += 1;
        if steps > MAX_BRACKET_STEPS || lo == 0.0 {
            return Err(Error::Numeric(
                "no lower bracket for the Luxemburg norm".into(),
            ));
        }
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if hi - lo > NORM_REL_TOL * hi {
        return Err(Error::Numeric(
            "Luxemburg bisection did not converge".into(),
        ));
    }
    Ok(hi)
}

/// Plug-in Orlicz function of `⟨X, θ⟩`, or of `ξ ⟨X, θ⟩` with `ξ` drawn
/// independently from `factor` when one is given.
pub fn empirical_orlicz(
    model: IsotropicModel,
    theta: &[f64],
    factor: Option<&PerturbationLaw>,
    samples: usize,
    rng: &mut RngState,
) -> Result<OrliczFn> {
    check_dim(model.dim, theta.len())?;
    if samples < 1000 {
        return Err(invalid(
            "empirical Orlicz function needs at least 1000 samples",
        ));
    }
    let factor = factor.map(ScalarFactor::new).transpose()?;
    let mut x = vec![0.0; model.dim];
    let values: Vec<f64> = (0..samples)
        .map(|_| {
            model.sample_into(rng, &mut x);
            let a: f64 = x.iter().zip(theta).map(|(u, v)| u * v).sum();
            match &factor {
                Some(f) => a * f.sample(rng),
                None => a,
            }
        })
        .collect();
    OrliczFn::empirical(&values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceRecord {
    pub theta: Vec<f64>,
    pub y: Vec<f64>,
    /// Monte Carlo estimate of `E_X h_{K_{N,y}}(θ)`.
    pub lhs: f64,
    pub lhs_std_error: f64,
    /// `‖y‖_{M̂_θ}`.
    pub rhs: f64,
    pub ratio: f64,
}

/// Compares `E_X max_i |y_i ⟨X_i, θ⟩|` against `‖y‖_{M̂_θ}`.
///
/// The left side averages `replicates × clouds_per_replicate` independent
/// clouds (substream `[0, r, c]`) and reports the standard error of the
/// replicate means; the Orlicz function uses `samples` fresh draws from
/// substream `1`.
pub fn equivalence_check(
    model: IsotropicModel,
    y: &Perturbation,
    theta: &[f64],
    replicates: usize,
    clouds_per_replicate: usize,
    samples: usize,
    rng: &RngState,
) -> Result<EquivalenceRecord> {
    check_dim(model.dim, theta.len())?;
    if y.values.iter().all(|&v| v == 0.0) {
        return Err(invalid("equivalence check needs a nonzero perturbation"));
    }
    if replicates < 2 || clouds_per_replicate == 0 {
        return Err(invalid(
            "equivalence check needs >= 2 replicates of >= 1 cloud",
        ));
    }
    let points = y.len();
    let dim = model.dim;
    let means = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut total = 0.0;
            for c in 0..clouds_per_replicate as u64 {
                let cloud = sample_isotropic(model, points, &mut rng.descend(&[0, r, c]))?;
                total += crate::polytope::support_raw(&cloud.points, dim, &y.values, theta);
            }
            Ok(total / clouds_per_replicate as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let k = means.len() as f64;
    let lhs = means.iter().sum::<f64>() / k;
    let var = means.iter().map(|v| (v - lhs) * (v - lhs)).sum::<f64>() / (k - 1.0);

    let m_hat = empirical_orlicz(model, theta, None, samples, &mut rng.substream(1))?;
    let rhs = luxemburg_norm(&m_hat, &y.values)?;
    Ok(EquivalenceRecord {
        theta: theta.to_vec(),
        y: y.values.clone(),
        lhs,
        lhs_std_error: (var / k).sqrt(),
        rhs,
        ratio: lhs / rhs,
    })
}
