//! Desk-scale experiments on `f(y) = E_X w(K_{N,y})`.
//!
//! Every experiment splits its work into independent cells, and each cell
//! derives its own substream from the caller's [`RngState`]. Results are
//! collected in cell order before any reduction, so they do not depend on the
//! number of worker threads.
//!
//! Absolute constants are never assumed: experiments report fitted constants
//! and their spread across `N`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::polytope::{
    f_estimate, plug_in_centroid_support, random_direction_into, support_raw, WidthEstimate,
};
use crate::randsrc::{
    sample_isotropic, sample_perturbation, standard_normal, IsotropicFamily, IsotropicModel,
    Perturbation, PerturbationLaw, RngState,
};

const Y_STREAM: u64 = 0;
const X_STREAM: u64 = 1;

/// Blocks used by the median-of-means estimate of `E_y f(y)`.
pub const MOM_BLOCKS: usize = 8;
/// Relative gap between mean and median-of-means that gets flagged.
pub const MOM_DISAGREEMENT: f64 = 0.2;
/// Stable concentration probes are restricted to this open range of `p`.
pub const STABLE_PROBE_RANGE: (f64, f64) = (1.6, 1.9);

/// Predicted order of `E_y f(y)` for a perturbation law at `N` points.
///
/// A fixed perturbation is normalized by `√(log N)`, the order of the
/// unperturbed `E w(K_N)`.
pub fn rate(law: &PerturbationLaw, points: usize) -> f64 {
    let n = points as f64;
    let log_n = n.ln();
    match *law {
        PerturbationLaw::Gaussian => log_n,
        PerturbationLaw::Sphere => log_n / n.sqrt(),
        PerturbationLaw::BpBall { p } => {
            let inv = if p.is_infinite() { 0.0 } else { 1.0 / p };
            log_n.powf(inv + 0.5) / n.powf(inv)
        }
        PerturbationLaw::PStable { p } => n.powf(1.0 / p),
        PerturbationLaw::Fixed { .. } => log_n.sqrt(),
    }
}

/// Ordinary least squares of `ln y` on `ln x`; returns `(slope, intercept)`.
pub fn fit_rate(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 3 {
        return Err(invalid("rate fit needs at least 3 points"));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(invalid("rate fit needs finite positive inputs"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(invalid("rate fit needs at least two distinct x values"));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn std_error(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    (var / values.len() as f64).sqrt()
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Median of the means of `blocks` contiguous, nearly equal blocks.
pub fn median_of_means(values: &[f64], blocks: usize) -> f64 {
    let blocks = blocks.clamp(1, values.len().max(1));
    let base = values.len() / blocks;
    let extra = values.len() % blocks;
    let mut start = 0;
    let means: Vec<f64> = (0..blocks)
        .map(|b| {
            let len = base + usize::from(b < extra);
            let m = mean(&values[start..start + len]);
            start += len;
            m
        })
        .collect();
    median(&means)
}

fn dispersion(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    max / min
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepParams {
    pub law: PerturbationLaw,
    pub model: IsotropicModel,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub directions: usize,
    pub y_draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub law: PerturbationLaw,
    pub model: IsotropicModel,
    pub n_grid: Vec<usize>,
    /// Estimate of `E_y f(y)` per `N`: the median-of-means for `p_stable`,
    /// the plain mean otherwise.
    pub raw: Vec<f64>,
    pub raw_std_error: Vec<f64>,
    pub mean: Vec<f64>,
    pub median_of_means: Vec<f64>,
    /// `N` values where mean and median-of-means differ by more than 20%.
    pub mom_disagreement: Vec<usize>,
    pub rate: Vec<f64>,
    pub normalized: Vec<f64>,
    /// Slope of `ln raw` against `ln N`.
    pub fitted_exponent: f64,
    /// Slope of `ln normalized` against `ln N`.
    pub normalized_exponent: f64,
    /// `max / min` of the normalized column.
    pub dispersion: f64,
    /// `f̂` per draw, indexed `[grid index][draw]`.
    pub draws: Vec<Vec<f64>>,
}

/// A fixed law supplies the first `N` entries of its vector; random laws are sampled.
fn sweep_perturbation(
    law: &PerturbationLaw,
    points: usize,
    rng: &mut RngState,
) -> Result<Perturbation> {
    match law {
        PerturbationLaw::Fixed { values } if values.len() >= points => {
            Ok(Perturbation::fixed(values[..points].to_vec()))
        }
        PerturbationLaw::Fixed { values } => Err(invalid(format!(
            "fixed perturbation has {} entries but the grid needs {points}",
            values.len()
        ))),
        _ => sample_perturbation(law, points, rng),
    }
}

/// Sweeps `E_y f(y)` over `n_grid`.
///
/// Draw `d` at grid index `k` takes its perturbation from substream
/// `[0, k, d]`. Clouds and directions come from `[1, d]` for every `N`, and a
/// cloud of `N` points is a prefix of the cloud of any larger `N`; with a
/// fixed perturbation the raw column is therefore nondecreasing in `N`.
pub fn sweep_rate(params: &SweepParams, rng: &RngState) -> Result<ScalingReport> {
    params.law.validate()?;
    let grid = &params.n_grid;
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("N grid must be nonempty and strictly increasing"));
    }
    if grid[0] < params.model.dim {
        return Err(Error::Regime(format!(
            "smallest N = {} is below the dimension n = {}",
            grid[0], params.model.dim
        )));
    }
    if params.y_draws == 0 {
        return Err(invalid("y_draws must be at least 1"));
    }
    let cells: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|k| (0..params.y_draws).map(move |d| (k, d)))
        .collect();
    let estimates = cells
        .par_iter()
        .map(|&(k, d)| {
            let points = grid[k];
            let y = sweep_perturbation(
                &params.law,
                points,
                &mut rng.descend(&[Y_STREAM, k as u64, d as u64]),
            )?;
            f_estimate(
                params.model,
                points,
                &y,
                params.replicates,
                params.directions,
                &rng.descend(&[X_STREAM, d as u64]),
            )
        })
        .collect::<Result<Vec<WidthEstimate>>>()?;

    let heavy = matches!(params.law, PerturbationLaw::PStable { .. });
    let mut report = ScalingReport {
        law: params.law.clone(),
        model: params.model,
        n_grid: grid.clone(),
        raw: Vec::new(),
        raw_std_error: Vec::new(),
        mean: Vec::new(),
        median_of_means: Vec::new(),
        mom_disagreement: Vec::new(),
        rate: Vec::new(),
        normalized: Vec::new(),
        fitted_exponent: f64::NAN,
        normalized_exponent: f64::NAN,
        dispersion: f64::NAN,
        draws: Vec::new(),
    };
    for (k, chunk) in estimates.chunks(params.y_draws).enumerate() {
        let values: Vec<f64> = chunk.iter().map(|w| w.value).collect();
        let m = mean(&values);
        let mom = median_of_means(&values, MOM_BLOCKS);
        let se = if values.len() == 1 {
            chunk[0].std_error
        } else {
            std_error(&values)
        };
        let raw = if heavy { mom } else { m };
        let r = rate(&params.law, grid[k]);
        if heavy && ((m - mom) / mom).abs() > MOM_DISAGREEMENT {
            report.mom_disagreement.push(grid[k]);
        }
        report.raw.push(raw);
        report.raw_std_error.push(se);
        report.mean.push(m);
        report.median_of_means.push(mom);
        report.rate.push(r);
        report.normalized.push(raw / r);
        report.draws.push(values);
    }
    let xs: Vec<f64> = grid.iter().map(|&n| n as f64).collect();
    if xs.len() >= 3 && report.raw.iter().all(|v| *v > 0.0) {
        report.fitted_exponent = fit_rate(&xs, &report.raw)?.0;
        report.normalized_exponent = fit_rate(&xs, &report.normalized)?.0;
    }
    if report.normalized.iter().all(|v| *v > 0.0) {
        report.dispersion = dispersion(&report.normalized);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationParams {
    pub law: PerturbationLaw,
    pub model: IsotropicModel,
    pub points: usize,
    pub draws: usize,
    pub t_grid: Vec<f64>,
    pub replicates: usize,
    pub directions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum TailShape {
    /// `P(|f/center − 1| > t) ≈ exp(−c t^q log N)`.
    SubExponential { q: f64 },
    /// `P(|f/center − 1| > t) ≈ C t^{−p}`.
    Polynomial { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCurve {
    pub t_grid: Vec<f64>,
    pub empirical_tail: Vec<f64>,
    /// Median of the `f̂` draws.
    pub center: f64,
    pub values: Vec<f64>,
    pub shape: TailShape,
    /// Least-squares constant of the shape (`c` or `C`); `None` when no grid
    /// point is usable.
    pub fitted_c: Option<f64>,
    /// Relative deviations below this never enter the fit.
    pub fit_threshold: f64,
    /// Indices into `t_grid` used by the fit.
    pub fit_points: Vec<usize>,
}

/// `4 M log M log(1 + 2 M log M)` with `M = 1/(2 − p)`: the smallest `t^p`
/// for which the stable concentration bound is stated.
pub fn stable_concentration_threshold(p: f64) -> f64 {
    let m = 1.0 / (2.0 - p);
    4.0 * m * m.ln() * (1.0 + 2.0 * m * m.ln()).ln()
}

/// Exponent of `t` in the sub-exponential tail shape of a bounded law.
fn tail_exponent(law: &PerturbationLaw) -> f64 {
    match *law {
        PerturbationLaw::BpBall { p } if p < 2.0 => p,
        _ => 2.0,
    }
}

/// Empirical deviation tail of `f̂(y)` about its median over independent
/// perturbation draws.
///
/// All draws share one set of clouds and directions (substream `1`), so the
/// spread reflects the perturbation rather than cloud noise; draw `d` takes its
/// perturbation from `[0, d]`.
///
/// For stable laws only relative deviations `t` with
/// `(t · center / √(log N))^p` above [`stable_concentration_threshold`] enter the fit.
pub fn concentration_probe(params: &ConcentrationParams, rng: &RngState) -> Result<TailCurve> {
    params.law.validate()?;
    if params.draws < 100 {
        return Err(invalid("concentration probe needs at least 100 draws"));
    }
    if params.t_grid.iter().any(|t| !(*t > 0.0)) || params.t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("t grid must be positive and strictly increasing"));
    }
    if let PerturbationLaw::PStable { p } = params.law {
        let (lo, hi) = STABLE_PROBE_RANGE;
        if !(p > lo && p < hi) {
            return Err(Error::Regime(format!(
                "stable concentration probes need {lo} < p < {hi}, got {p}"
            )));
        }
    }
    if matches!(params.law, PerturbationLaw::Fixed { .. }) {
        return Err(invalid("a fixed perturbation has no deviation tail"));
    }
    let shared = rng.substream(X_STREAM);
    let values = (0..params.draws as u64)
        .into_par_iter()
        .map(|d| {
            let y =
                sample_perturbation(&params.law, params.points, &mut rng.descend(&[Y_STREAM, d]))?;
            f_estimate(
                params.model,
                params.points,
                &y,
                params.replicates,
                params.directions,
                &shared,
            )
            .map(|w| w.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    let center = median(&values);
    if !(center > 0.0) {
        return Err(Error::Numeric(
            "median of f estimates is not positive".into(),
        ));
    }
    let deviations: Vec<f64> = values.iter().map(|v| (v / center - 1.0).abs()).collect();
    let draws = values.len() as f64;
    let empirical_tail: Vec<f64> = params
        .t_grid
        .iter()
        .map(|&t| deviations.iter().filter(|&&d| d > t).count() as f64 / draws)
        .collect();

    let log_n = (params.points as f64).ln();
    let (shape, fit_threshold) = match params.law {
        PerturbationLaw::PStable { p } => {
            let absolute = stable_concentration_threshold(p).powf(1.0 / p);
            (
                TailShape::Polynomial { p },
                absolute * log_n.sqrt() / center,
            )
        }
        ref law => (
            TailShape::SubExponential {
                q: tail_exponent(law),
            },
            0.0,
        ),
    };
    let fit_points: Vec<usize> = params
        .t_grid
        .iter()
        .enumerate()
        .filter(|&(i, &t)| t >= fit_threshold && empirical_tail[i] > 0.0)
        .map(|(i, _)| i)
        .collect();
    let fitted_c = if fit_points.is_empty() {
        None
    } else {
        Some(match shape {
            TailShape::SubExponential { q } => {
                // ln P = −c x with x = t^q log N, least squares through the origin.
                let (num, den) = fit_points.iter().fold((0.0, 0.0), |(num, den), &i| {
                    let x = params.t_grid[i].powf(q) * log_n;
                    (num - x * empirical_tail[i].ln(), den + x * x)
                });
                num / den
            }
            TailShape::Polynomial { p } => {
                let log_c = fit_points
                    .iter()
                    .map(|&i| empirical_tail[i].ln() + p * params.t_grid[i].ln())
                    .sum::<f64>()
                    / fit_points.len() as f64;
                log_c.exp()
            }
        })
    };
    Ok(TailCurve {
        t_grid: params.t_grid.clone(),
        empirical_tail,
        center,
        values,
        shape,
        fitted_c,
        fit_threshold,
        fit_points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub f_first: f64,
    pub f_second: f64,
    pub distance: f64,
    /// `|f̂(y₁) − f̂(y₂)| / (|y₁ − y₂| √(log N))`; `None` when `y₁ = y₂`.
    pub ratio: Option<f64>,
}

/// Evaluates `f̂` at both points with the same clouds and directions.
pub fn compare_pair(
    model: IsotropicModel,
    first: &Perturbation,
    second: &Perturbation,
    replicates: usize,
    directions: usize,
    rng: &RngState,
) -> Result<PairComparison> {
    crate::error::check_dim(first.len(), second.len())?;
    let points = first.len();
    let f_first = f_estimate(model, points, first, replicates, directions, rng)?.value;
    let f_second = f_estimate(model, points, second, replicates, directions, rng)?.value;
    let distance = first
        .values
        .iter()
        .zip(&second.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let ratio = (distance > 0.0)
        .then(|| (f_first - f_second).abs() / (distance * (points as f64).ln().sqrt()));
    Ok(PairComparison {
        f_first,
        f_second,
        distance,
        ratio,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzParams {
    pub model: IsotropicModel,
    pub points: usize,
    pub pairs: usize,
    pub replicates: usize,
    pub directions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    /// Largest normalized difference quotient over all pairs.
    pub c_hat: f64,
    pub pairs: Vec<PairComparison>,
}

/// Random pair `(y₁, y₂)`: `y₁` Gaussian and `y₂ = y₁ + s δ` with `δ` a unit
/// vector on a random support of `2^j ≤ N` coordinates, `s = 8 (1 + max|y₁|)`.
/// Sparse, large moves probe the steep directions of `f`.
fn lipschitz_pair(points: usize, rng: &mut RngState) -> (Perturbation, Perturbation) {
    use rand::seq::index::sample;
    use rand::Rng;

    let first: Vec<f64> = (0..points).map(|_| standard_normal(rng)).collect();
    let levels = usize::BITS - points.leading_zeros();
    let support_size = (1usize << rng.random_range(0..levels)).min(points);
    let support = sample(rng, points, support_size);
    let mut delta = vec![0.0; points];
    for i in support.iter() {
        delta[i] = standard_normal(rng);
    }
    let norm = delta
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);
    let step = 8.0 * (1.0 + first.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    let second: Vec<f64> = first
        .iter()
        .zip(&delta)
        .map(|(a, d)| a + step * d / norm)
        .collect();
    (Perturbation::fixed(first), Perturbation::fixed(second))
}

/// Fitted Lipschitz constant `Ĉ` of `f`, normalized by `√(log N)`.
///
/// Pair `j` is drawn from substream `[0, j]` and both of its points are
/// evaluated with the shared cloud substream `[1, j]`.
pub fn lipschitz_probe(params: &LipschitzParams, rng: &RngState) -> Result<LipschitzReport> {
    if params.pairs < 10 {
        return Err(invalid("Lipschitz probe needs at least 10 pairs"));
    }
    if params.points < 2 {
        return Err(invalid("Lipschitz probe needs N >= 2"));
    }
    let pairs = (0..params.pairs as u64)
        .into_par_iter()
        .map(|j| {
            let (first, second) = lipschitz_pair(params.points, &mut rng.descend(&[Y_STREAM, j]));
            compare_pair(
                params.model,
                &first,
                &second,
                params.replicates,
                params.directions,
                &rng.descend(&[X_STREAM, j]),
            )
        })
        .collect::<Result<Vec<PairComparison>>>()?;
    let c_hat = pairs.iter().filter_map(|p| p.ratio).fold(0.0, f64::max);
    Ok(LipschitzReport { c_hat, pairs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailProbe {
    pub theta: Vec<f64>,
    /// `α √(log N)`.
    pub level: f64,
    pub hits: usize,
    pub samples: usize,
    /// `P̂(|⟨X, θ⟩| ≥ α √(log N))`.
    pub empirical: f64,
    /// `1 / (N^{α²/2} √(log N))`.
    pub reference: f64,
}

impl TailProbe {
    pub fn ratio(&self) -> f64 {
        self.empirical / self.reference
    }
}

/// Marginal tail of the model in one uniformly random direction.
///
/// Fails with a regime error when fewer than 10 samples exceed the level,
/// because the tail is then not resolved by the sample size.
pub fn tail_probe(
    model: IsotropicModel,
    points: usize,
    alpha: f64,
    samples: usize,
    rng: &mut RngState,
) -> Result<TailProbe> {
    if !(alpha > 0.0) {
        return Err(invalid("alpha must be positive"));
    }
    if points < 2 || samples == 0 {
        return Err(invalid(
            "tail probe needs N >= 2 and a positive sample count",
        ));
    }
    let log_n = (points as f64).ln();
    let level = alpha * log_n.sqrt();
    let mut theta = vec![0.0; model.dim];
    random_direction_into(rng, &mut theta);
    let mut x = vec![0.0; model.dim];
    let mut hits = 0usize;
    for _ in 0..samples {
        model.sample_into(rng, &mut x);
        let a: f64 = x.iter().zip(&theta).map(|(u, v)| u * v).sum();
        if a.abs() >= level {
            hits += 1;
        }
    }
    if hits < 10 {
        return Err(Error::Regime(format!(
            "tail at level {level:.4} is not resolvable with {samples} samples ({hits} hits)"
        )));
    }
    Ok(TailProbe {
        theta,
        level,
        hits,
        samples,
        empirical: hits as f64 / samples as f64,
        reference: 1.0 / ((points as f64).powf(alpha * alpha / 2.0) * log_n.sqrt()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionParams {
    pub model: IsotropicModel,
    pub points: usize,
    pub trials: usize,
    pub directions: usize,
    pub samples: usize,
    /// Multiplies the Gaussian perturbation; 1 for the plain experiment.
    pub perturbation_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    /// Per trial, `min_θ h_{K_{N,G}}(θ) / (√(log N) ĥ_{Z_{log N}}(θ))`.
    pub per_trial: Vec<f64>,
    /// Minimum over trials.
    pub c_hat: f64,
}

/// Estimates the largest `c` with `K_{N,G} ⊇ c √(log N) Z_{log N}(X)` along
/// sampled directions. Defined only for `N > n²`.
///
/// Trial `t` uses substreams `[t, 0]` (cloud), `[t, 1]` (perturbation),
/// `[t, 2]` (directions) and `[t, 3]` (centroid-body sample).
pub fn inclusion_probe(params: &InclusionParams, rng: &RngState) -> Result<InclusionReport> {
    let n = params.model.dim;
    if params.points <= n * n {
        return Err(Error::Regime(format!(
            "inclusion needs N > n^2, got N = {} with n = {n} (n^2 = {})",
            params.points,
            n * n
        )));
    }
    if params.trials == 0 || params.directions == 0 || params.samples < 100 {
        return Err(invalid(
            "inclusion probe needs trials >= 1, directions >= 1 and samples >= 100",
        ));
    }
    let log_n = (params.points as f64).ln();
    let per_trial = (0..params.trials as u64)
        .into_par_iter()
        .map(|t| {
            let cloud = sample_isotropic(params.model, params.points, &mut rng.descend(&[t, 0]))?;
            let g = sample_perturbation(
                &PerturbationLaw::Gaussian,
                params.points,
                &mut rng.descend(&[t, 1]),
            )?
            .scaled(params.perturbation_scale);
            let centroid_sample =
                sample_isotropic(params.model, params.samples, &mut rng.descend(&[t, 3]))?;
            let mut dir_rng = rng.descend(&[t, 2]);
            let mut theta = vec![0.0; n];
            let mut worst = f64::INFINITY;
            for _ in 0..params.directions {
                random_direction_into(&mut dir_rng, &mut theta);
                let h = support_raw(&cloud.points, n, &g.values, &theta);
                let z = plug_in_centroid_support(&centroid_sample, log_n.max(1.0), &theta)?;
                worst = worst.min(h / (log_n.sqrt() * z));
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    let c_hat = per_trial.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(InclusionReport { per_trial, c_hat })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    /// `|y|` in decreasing order.
    pub y_sorted: Vec<f64>,
    /// Admissible `k` (1-based).
    pub admissible: Vec<usize>,
    pub k_star: Option<usize>,
    /// `c2 · sup_{k ∈ I(y)} √(log(k+1)) / harmonic_term(k)`; 0 for empty `I(y)`.
    pub bound_value: f64,
    /// The same supremum without the `c2` factor.
    pub sup_term: f64,
    pub c1: f64,
    pub c2: f64,
    pub strict: bool,
    /// `√((1/k) Σ_{i≤k} 1/|y_i*|²)` for `k = 1..=min(n, N)`; infinite once a zero enters.
    pub harmonic_term: Vec<f64>,
    /// `1 / (|y_k*| · harmonic_term(k))`; infinite when `y_k* = 0`.
    pub admissibility: Vec<f64>,
}

/// Lower bound for `E w(K_{N,y})` at an arbitrary weight vector `y`.
///
/// `k ∈ {1, …, n}` is admissible when `1/(|y_k*| · harmonic_term(k)) ≤ n^{c1}`;
/// with `strict` it must also satisfy `|y_1*|/|y_k*| ≤ n^{c1}`.
pub fn arbitrary_lower_bound(
    y: &[f64],
    n: usize,
    c1: f64,
    c2: f64,
    strict: bool,
) -> Result<LowerBoundReport> {
    if n == 0 {
        return Err(invalid("dimension must be positive"));
    }
    if !(c1 > 0.0) || !(c2 > 0.0) {
        return Err(invalid("c1 and c2 must be positive"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(invalid("y must be finite"));
    }
    if y.iter().all(|&v| v == 0.0) {
        return Err(invalid("lower bound needs a nonzero y"));
    }
    let mut y_sorted: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    y_sorted.sort_by(|a, b| b.total_cmp(a));
    let threshold = (n as f64).powf(c1);
    let k_max = n.min(y_sorted.len());

    let mut harmonic_term = Vec::with_capacity(k_max);
    let mut admissibility = Vec::with_capacity(k_max);
    let mut admissible = Vec::new();
    let mut inverse_squares = 0.0;
    let mut best: Option<(usize, f64)> = None;
    for k in 1..=k_max {
        let yk = y_sorted[k - 1];
        inverse_squares += if yk > 0.0 {
            1.0 / (yk * yk)
        } else {
            f64::INFINITY
        };
        let h = (inverse_squares / k as f64).sqrt();
        let a = if yk > 0.0 {
            1.0 / (yk * h)
        } else {
            f64::INFINITY
        };
        harmonic_term.push(h);
        admissibility.push(a);
        let mut ok = a <= threshold;
        if strict {
            ok &= yk > 0.0 && y_sorted[0] / yk <= threshold;
        }
        if ok {
            admissible.push(k);
            let term = ((k + 1) as f64).ln().sqrt() / h;
            if best.is_none_or(|(_, b)| term > b) {
                best = Some((k, term));
            }
        }
    }
    let sup_term = best.map_or(0.0, |(_, t)| t);
    Ok(LowerBoundReport {
        y_sorted,
        admissible,
        k_star: best.map(|(k, _)| k),
        bound_value: c2 * sup_term,
        sup_term,
        c1,
        c2,
        strict,
        harmonic_term,
        admissibility,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundComparison {
    pub estimate: WidthEstimate,
    pub bound: LowerBoundReport,
    /// `f̂(y) / sup_term`; `None` when `I(y)` is empty.
    pub fitted_c2: Option<f64>,
}

/// `f̂(y)` next to the lower-bound supremum, with the implied constant `c2`.
pub fn bound_vs_estimate(
    model: IsotropicModel,
    y: &Perturbation,
    c1: f64,
    replicates: usize,
    directions: usize,
    rng: &RngState,
) -> Result<BoundComparison> {
    let bound = arbitrary_lower_bound(&y.values, model.dim, c1, 1.0, false)?;
    let estimate = f_estimate(model, y.len(), y, replicates, directions, rng)?;
    let fitted_c2 = (bound.sup_term > 0.0).then(|| estimate.value / bound.sup_term);
    Ok(BoundComparison {
        estimate,
        bound,
        fitted_c2,
    })
}

/// The Gaussian model in dimension `n`; convenience for experiments.
pub fn gaussian_model(n: usize) -> Result<IsotropicModel> {
    IsotropicModel::new(IsotropicFamily::Gaussian, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randsrc::make_rng;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    #[test]
    fn fit_rate_examples() {
        let xs = [1.0, 2.0, 5.0, 10.0];
        let (s, i) = fit_rate(&xs, &xs).unwrap();
        assert!((s - 1.0).abs() < 1e-12 && i.abs() < 1e-12);
        let ys: Vec<f64> = xs.iter().map(|x| 5.0 * x * x).collect();
        let (s, i) = fit_rate(&xs, &ys).unwrap();
        assert!((s - 2.0).abs() < 1e-12 && (i - 5f64.ln()).abs() < 1e-12);
        assert!(fit_rate(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(fit_rate(&[1.0, 2.0, 0.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(fit_rate(&[1.0, 2.0, 3.0], &[1.0, -2.0, 3.0]).is_err());
    }

    #[test]
    fn fit_rate_with_noise() {
        let mut rng = make_rng(1);
        let xs: Vec<f64> = (0..20).map(|k| 2f64.powf(k as f64 * 0.5)).collect();
        for &truth in &[0.5, 1.0, 1.75] {
            let ys: Vec<f64> = xs
                .iter()
                .map(|x| 3.0 * x.powf(truth) * (1.0 + 0.01 * standard_normal(&mut rng)))
                .collect();
            let (s, _) = fit_rate(&xs, &ys).unwrap();
            assert!((s - truth).abs() < 0.05, "{s} vs {truth}");
        }
    }

    #[test]
    fn rate_formulas() {
        let n = 1000usize;
        let l = (n as f64).ln();
        assert_eq!(rate(&PerturbationLaw::Gaussian, n), l);
        assert_eq!(rate(&PerturbationLaw::Sphere, n), l / (n as f64).sqrt());
        let bp = rate(&PerturbationLaw::BpBall { p: 2.0 }, n);
        assert!((bp - l / (n as f64).sqrt()).abs() < 1e-15);
        let st = rate(&PerturbationLaw::PStable { p: 1.5 }, n);
        assert!((st - 100.0).abs() < 1e-9);
        assert_eq!(
            rate(&PerturbationLaw::BpBall { p: f64::INFINITY }, n),
            l.sqrt()
        );
    }

    #[test]
    fn median_of_means_blocks() {
        let v: Vec<f64> = (1..=16).map(f64::from).collect();
        // Block means 1.5, 3.5, …, 15.5; median of eight is 8.5.
        assert_eq!(median_of_means(&v, 8), 8.5);
        let mut with_outlier = v.clone();
        with_outlier[0] = 1e6;
        assert!(median_of_means(&with_outlier, 8) < 20.0);
        assert_eq!(median_of_means(&[4.0], 8), 4.0);
    }

    #[test]
    fn fixed_sweep_is_monotone_in_n() {
        let mut params = SweepParams {
            law: PerturbationLaw::Fixed {
                values: vec![1.0; 64],
            },
            model: gaussian_model(3).unwrap(),
            n_grid: vec![4, 8, 16, 32, 64],
            replicates: 4,
            directions: 32,
            y_draws: 1,
        };
        let r = sweep_rate(&params, &make_rng(2)).unwrap();
        assert!(r.raw.windows(2).all(|w| w[1] >= w[0]), "{:?}", r.raw);
        params.n_grid.push(65);
        assert!(sweep_rate(&params, &make_rng(2)).is_err());
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let model = gaussian_model(8).unwrap();
        let mut params = SweepParams {
            law: PerturbationLaw::Gaussian,
            model,
            n_grid: vec![16, 8, 32],
            replicates: 2,
            directions: 4,
            y_draws: 1,
        };
        assert!(sweep_rate(&params, &make_rng(0)).is_err());
        params.n_grid = vec![4, 16, 32];
        assert!(matches!(
            sweep_rate(&params, &make_rng(0)),
            Err(Error::Regime(_))
        ));
        params.n_grid = vec![8, 16, 32];
        params.law = PerturbationLaw::PStable { p: 2.5 };
        assert!(sweep_rate(&params, &make_rng(0)).is_err());
    }

    #[test]
    fn sweep_report_columns() {
        let params = SweepParams {
            law: PerturbationLaw::Sphere,
            model: gaussian_model(4).unwrap(),
            n_grid: vec![8, 16, 32, 64],
            replicates: 2,
            directions: 16,
            y_draws: 6,
        };
        let r = sweep_rate(&params, &make_rng(3)).unwrap();
        for k in 0..4 {
            assert_eq!(r.normalized[k], r.raw[k] / r.rate[k]);
            assert_eq!(r.draws[k].len(), 6);
        }
        assert!(r.dispersion >= 1.0);
        assert_eq!(r, sweep_rate(&params, &make_rng(3)).unwrap());
    }

    #[test]
    fn concentration_tail_beyond_all_deviations_is_zero() {
        let params = ConcentrationParams {
            law: PerturbationLaw::Gaussian,
            model: gaussian_model(4).unwrap(),
            points: 32,
            draws: 100,
            t_grid: vec![0.05, 0.1, 0.2, 0.4, 1e6],
            replicates: 2,
            directions: 16,
        };
        let c = concentration_probe(&params, &make_rng(4)).unwrap();
        assert_eq!(*c.empirical_tail.last().unwrap(), 0.0);
        assert!(c.empirical_tail.windows(2).all(|w| w[1] <= w[0]));
        assert!(c.empirical_tail.iter().all(|p| (0.0..=1.0).contains(p)));
        assert!(matches!(c.shape, TailShape::SubExponential { q } if q == 2.0));
    }

    #[test]
    fn concentration_rejects_stable_outside_probe_range() {
        let mut params = ConcentrationParams {
            law: PerturbationLaw::PStable { p: 1.55 },
            model: gaussian_model(2).unwrap(),
            points: 8,
            draws: 100,
            t_grid: vec![0.1],
            replicates: 2,
            directions: 4,
        };
        assert!(matches!(
            concentration_probe(&params, &make_rng(0)),
            Err(Error::Regime(_))
        ));
        params.draws = 99;
        params.law = PerturbationLaw::Gaussian;
        assert!(concentration_probe(&params, &make_rng(0)).is_err());
    }

    #[test]
    fn stable_threshold_value() {
        // M = 4 at p = 1.75: 16 ln 4 ln(1 + 8 ln 4).
        let expected = 16.0 * 4f64.ln() * (1.0 + 8.0 * 4f64.ln()).ln();
        assert!((stable_concentration_threshold(1.75) - expected).abs() < 1e-12);
    }

    #[test]
    fn pair_exact_cases() {
        let model = gaussian_model(3).unwrap();
        let y = sample_perturbation(&PerturbationLaw::Gaussian, 20, &mut make_rng(5)).unwrap();
        let rng = make_rng(6);
        let same = compare_pair(model, &y, &y, 4, 32, &rng).unwrap();
        assert_eq!(same.f_first - same.f_second, 0.0);
        assert_eq!(same.ratio, None);
        let double = compare_pair(model, &y, &y.scaled(2.0), 4, 32, &rng).unwrap();
        assert_eq!((double.f_second - double.f_first).abs(), double.f_first);
    }

    #[test]
    fn lipschitz_probe_is_finite_and_deterministic() {
        let params = LipschitzParams {
            model: gaussian_model(3).unwrap(),
            points: 32,
            pairs: 10,
            replicates: 2,
            directions: 16,
        };
        let a = lipschitz_probe(&params, &make_rng(7)).unwrap();
        assert!(a.c_hat > 0.0 && a.c_hat.is_finite());
        assert_eq!(a, lipschitz_probe(&params, &make_rng(7)).unwrap());
        assert!(lipschitz_probe(&LipschitzParams { pairs: 9, ..params }, &make_rng(7)).is_err());
    }

    #[test]
    fn tail_probe_limits() {
        let model = gaussian_model(5).unwrap();
        let t = tail_probe(model, 64, 1e-9, 10_000, &mut make_rng(8)).unwrap();
        assert!(t.empirical > 0.999);
        assert!(matches!(
            tail_probe(model, 64, 3.0, 1_000, &mut make_rng(8)),
            Err(Error::Regime(_))
        ));
        assert!(tail_probe(model, 64, 0.0, 1_000, &mut make_rng(8)).is_err());
    }

    #[test]
    fn inclusion_regime_and_homogeneity() {
        let model = gaussian_model(3).unwrap();
        let mut params = InclusionParams {
            model,
            points: 9,
            trials: 3,
            directions: 32,
            samples: 2_000,
            perturbation_scale: 1.0,
        };
        assert!(matches!(
            inclusion_probe(&params, &make_rng(9)),
            Err(Error::Regime(_))
        ));
        params.points = 40;
        let a = inclusion_probe(&params, &make_rng(9)).unwrap();
        params.perturbation_scale = 2.0;
        let b = inclusion_probe(&params, &make_rng(9)).unwrap();
        for (x, y) in a.per_trial.iter().zip(&b.per_trial) {
            assert_eq!(*y, 2.0 * x);
        }
        assert!(a.c_hat > 0.0);
    }

    #[test]
    fn lower_bound_for_ones() {
        let r = arbitrary_lower_bound(&[1.0; 10], 4, 0.5, 1.0, false).unwrap();
        assert_eq!(r.harmonic_term, vec![1.0; 4]);
        assert_eq!(r.admissibility, vec![1.0; 4]);
        assert_eq!(r.admissible, vec![1, 2, 3, 4]);
        assert_eq!(r.k_star, Some(4));
        assert!((r.bound_value - 5f64.ln().sqrt()).abs() < 1e-12);
    }

    #[test]
    fn lower_bound_for_a_single_spike() {
        let r = arbitrary_lower_bound(&[1.0, 0.0, 0.0, 0.0, 0.0], 4, 0.5, 2.0, false).unwrap();
        assert_eq!(r.admissible, vec![1]);
        assert!(r.harmonic_term[1..].iter().all(|h| h.is_infinite()));
        assert_eq!(r.bound_value, 2.0 * 2f64.ln().sqrt());
        assert!(arbitrary_lower_bound(&[0.0, 0.0], 4, 0.5, 1.0, false).is_err());
        assert!(arbitrary_lower_bound(&[1.0], 4, 0.0, 1.0, false).is_err());
    }

    #[test]
    fn strict_mode_only_removes_indices() {
        let y = [10.0, 1.0, 0.9, 0.5, 0.2];
        let loose = arbitrary_lower_bound(&y, 5, 0.5, 1.0, false).unwrap();
        let strict = arbitrary_lower_bound(&y, 5, 0.5, 1.0, true).unwrap();
        assert!(strict
            .admissible
            .iter()
            .all(|k| loose.admissible.contains(k)));
        assert!(strict.bound_value <= loose.bound_value);
        // |y_1|/|y_k| = 10 > √5 for every k ≥ 2.
        assert_eq!(strict.admissible, vec![1]);
    }

    #[test]
    fn geometric_decay_peaks_early() {
        let y: Vec<f64> = (1..=12).map(|i| 2f64.powi(-i)).collect();
        let r = arbitrary_lower_bound(&y, 8, 0.5, 1.0, false).unwrap();
        assert!(r.k_star.unwrap() <= 2, "{r:?}");
    }

    #[test]
    fn bound_comparison_scales() {
        let model = gaussian_model(4).unwrap();
        let y = sample_perturbation(&PerturbationLaw::Gaussian, 32, &mut make_rng(10)).unwrap();
        let rng = make_rng(11);
        let a = bound_vs_estimate(model, &y, 0.5, 4, 64, &rng).unwrap();
        let b = bound_vs_estimate(model, &y.scaled(4.0), 0.5, 4, 64, &rng).unwrap();
        assert_eq!(b.estimate.value, 4.0 * a.estimate.value);
        assert_eq!(b.bound.sup_term, 4.0 * a.bound.sup_term);
        assert_eq!(a.fitted_c2, b.fitted_c2);
        assert!(a.estimate.value >= a.fitted_c2.unwrap() * a.bound.sup_term * (1.0 - 1e-15));
    }

    proptest! {
        #[test]
        fn lower_bound_is_permutation_invariant(
            y in prop::collection::vec(-5.0f64..5.0, 1..30),
            n in 1usize..10,
            c1 in 0.1f64..2.0,
            strict: bool,
            seed: u64,
        ) {
            prop_assume!(y.iter().any(|v| *v != 0.0));
            let a = arbitrary_lower_bound(&y, n, c1, 1.3, strict).unwrap();
            let mut shuffled = y.clone();
            let mut rng = make_rng(seed);
            shuffled.shuffle(&mut rng);
            for v in shuffled.iter_mut() {
                if rng.random::<bool>() { *v = -*v; }
            }
            let b = arbitrary_lower_bound(&shuffled, n, c1, 1.3, strict).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn ones_are_always_fully_admissible(len in 1usize..40, n in 1usize..12, c1 in 0.01f64..3.0) {
            let r = arbitrary_lower_bound(&vec![1.0; len], n, c1, 1.0, false).unwrap();
            prop_assert_eq!(r.admissible, (1..=n.min(len)).collect::<Vec<_>>());
        }
    }
}
