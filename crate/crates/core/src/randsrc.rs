//! Seeded, splittable randomness and the samplers for every distribution the
//! estimators consume.
//!
//! An [`RngState`] is identified by a root seed and a substream path. The
//! generator behind a state is derived from that lineage alone, so
//! `rng.substream(i)` yields the same sequence no matter how many values the
//! parent has already produced or which thread asks for it.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::distr::Open01;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const PATH_SALT: u64 = 0x632B_E59B_D9B4_E019;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lineage_key(seed: u64, path: &[u64]) -> [u8; 32] {
    let mut key = splitmix(seed);
    for &idx in path {
        key = splitmix(key ^ splitmix(idx.wrapping_add(PATH_SALT)));
    }
    let mut out = [0u8; 32];
    let mut s = key;
    for chunk in out.chunks_exact_mut(8) {
        s = splitmix(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    out
}

/// Where a sampled object's randomness came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub stream_path: Vec<u64>,
}

/// A deterministic random stream keyed by `(seed, stream_path)`.
#[derive(Clone)]
pub struct RngState {
    seed: u64,
    path: Vec<u64>,
    gen: ChaCha12Rng,
}

impl fmt::Debug for RngState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RngState")
            .field("seed", &self.seed)
            .field("stream_path", &self.path)
            .finish_non_exhaustive()
    }
}

impl RngState {
    fn from_lineage(seed: u64, path: Vec<u64>) -> Self {
        let gen = ChaCha12Rng::from_seed(lineage_key(seed, &path));
        RngState { seed, path, gen }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_path(&self) -> &[u64] {
        &self.path
    }

    pub fn record(&self) -> SeedRecord {
        SeedRecord {
            seed: self.seed,
            stream_path: self.path.clone(),
        }
    }

    /// Child stream `idx` of this state's lineage. Does not depend on, or
    /// advance, this state's position.
    pub fn substream(&self, idx: u64) -> RngState {
        let mut path = Vec::with_capacity(self.path.len() + 1);
        path.extend_from_slice(&self.path);
        path.push(idx);
        RngState::from_lineage(self.seed, path)
    }

    /// Shorthand for a chain of [`RngState::substream`] calls.
    pub fn descend(&self, indices: &[u64]) -> RngState {
        let mut path = self.path.clone();
        path.extend_from_slice(indices);
        RngState::from_lineage(self.seed, path)
    }
}

impl RngCore for RngState {
    fn next_u32(&mut self) -> u32 {
        self.gen.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.gen.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.gen.fill_bytes(dst)
    }
}

/// Root state for `seed`.
pub fn make_rng(seed: u64) -> RngState {
    RngState::from_lineage(seed, Vec::new())
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Symmetric stable variate with characteristic function `exp(-|x|^alpha)`,
/// from the uniform-angle / exponential transform. Valid for `0 < alpha <= 2`;
/// `alpha = 1` is the standard Cauchy law and `alpha = 2` the centered normal
/// with variance 2.
pub fn symmetric_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    debug_assert!(alpha > 0.0 && alpha <= 2.0);
    let u: f64 = Open01.sample(rng);
    let v = PI * (u - 0.5);
    let w: f64 = Exp1.sample(rng);
    if alpha == 1.0 {
        return v.tan();
    }
    let head = (alpha * v).sin() / v.cos().powf(1.0 / alpha);
    let tail = (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha);
    head * tail
}

/// Variate with density `exp(-|t|^p) / (2 Γ(1 + 1/p))`, via `|g|^p ~ Gamma(1/p, 1)`.
pub fn generalized_gaussian<R: Rng + ?Sized>(shape: &Gamma<f64>, p: f64, rng: &mut R) -> f64 {
    let magnitude = shape.sample(rng).powf(1.0 / p);
    if rng.random::<bool>() {
        magnitude
    } else {
        -magnitude
    }
}

fn generalized_gaussian_shape(p: f64) -> Result<Gamma<f64>> {
    Gamma::new(1.0 / p, 1.0).map_err(|e| invalid(format!("bad B_p exponent {p}: {e}")))
}

/// Product families with closed-form isotropic normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IsotropicFamily {
    /// Standard normal coordinates.
    Gaussian,
    /// Uniform on `[-√3, √3]` per coordinate.
    Cube,
    /// Density `(1/√2) e^{-√2|t|}` per coordinate.
    Laplace,
}

impl IsotropicFamily {
    pub const ALL: [IsotropicFamily; 3] = [Self::Gaussian, Self::Cube, Self::Laplace];

    pub fn name(self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Cube => "cube",
            Self::Laplace => "laplace",
        }
    }

    pub fn sample_coordinate<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Self::Gaussian => standard_normal(rng),
            Self::Cube => {
                let half_width = 3f64.sqrt();
                half_width * (2.0 * rng.random::<f64>() - 1.0)
            }
            Self::Laplace => {
                let e: f64 = Exp1.sample(rng);
                let m = e / std::f64::consts::SQRT_2;
                if rng.random::<bool>() {
                    m
                } else {
                    -m
                }
            }
        }
    }
}

impl fmt::Display for IsotropicFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IsotropicFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "cube" => Ok(Self::Cube),
            "laplace" => Ok(Self::Laplace),
            other => Err(invalid(format!(
                "unknown model family '{other}' (expected gaussian, cube or laplace)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsotropicModel {
    pub family: IsotropicFamily,
    pub dim: usize,
}

impl IsotropicModel {
    pub fn new(family: IsotropicFamily, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("model dimension must be positive"));
        }
        Ok(IsotropicModel { family, dim })
    }

    /// Fills `out` with one draw of the model vector.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for x in out.iter_mut() {
            *x = self.family.sample_coordinate(rng);
        }
    }
}

/// `N` points in `ℝⁿ`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub model: IsotropicModel,
    pub points: Vec<f64>,
    pub seed: SeedRecord,
}

impl PointCloud {
    /// Builds a cloud from explicit rows. All rows must have length `model.dim`.
    pub fn from_rows(model: IsotropicModel, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(invalid("point cloud needs at least one point"));
        }
        let mut points = Vec::with_capacity(rows.len() * model.dim);
        for row in rows {
            crate::error::check_dim(model.dim, row.len())?;
            if row.iter().any(|x| !x.is_finite()) {
                return Err(invalid("point cloud entries must be finite"));
            }
            points.extend_from_slice(row);
        }
        Ok(PointCloud {
            model,
            points,
            seed: SeedRecord {
                seed: 0,
                stream_path: Vec::new(),
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.model.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.model.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.model.dim;
        &self.points[i * n..(i + 1) * n]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.points.chunks_exact(self.model.dim)
    }
}

/// Draws `count` i.i.d. rows from `model`. Rows are generated in order from a
/// single stream, so a larger `count` extends a smaller one.
pub fn sample_isotropic(
    model: IsotropicModel,
    count: usize,
    rng: &mut RngState,
) -> Result<PointCloud> {
    if count == 0 {
        return Err(invalid("point count must be at least 1"));
    }
    let seed = rng.record();
    let mut points = vec![0.0; count * model.dim];
    for row in points.chunks_exact_mut(model.dim) {
        model.sample_into(rng, row);
    }
    Ok(PointCloud {
        model,
        points,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationLaw {
    Gaussian,
    Sphere,
    /// Uniform in the unit ball of `ℓ_p^N`; `p = ∞` is the cube.
    BpBall {
        p: f64,
    },
    /// I.i.d. symmetric stable coordinates, `exp(-|x|^p)`, `1 < p < 2`.
    PStable {
        p: f64,
    },
    Fixed {
        values: Vec<f64>,
    },
}

impl PerturbationLaw {
    pub fn bp_ball(p: f64) -> Result<Self> {
        let law = PerturbationLaw::BpBall { p };
        law.validate()?;
        Ok(law)
    }

    pub fn p_stable(p: f64) -> Result<Self> {
        let law = PerturbationLaw::PStable { p };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PerturbationLaw::BpBall { p } if !(p >= 1.0) => Err(invalid(format!(
                "bp_ball requires 1 <= p <= inf, got p = {p}"
            ))),
            PerturbationLaw::PStable { p } if !(p > 1.0 && p < 2.0) => {
                Err(invalid(format!("p_stable requires 1 < p < 2, got p = {p}")))
            }
            PerturbationLaw::Fixed { ref values } if values.iter().any(|v| !v.is_finite()) => {
                Err(invalid("fixed perturbation must be finite"))
            }
            _ => Ok(()),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PerturbationLaw::Gaussian => "gaussian",
            PerturbationLaw::Sphere => "sphere",
            PerturbationLaw::BpBall { .. } => "bp_ball",
            PerturbationLaw::PStable { .. } => "p_stable",
            PerturbationLaw::Fixed { .. } => "fixed",
        }
    }

    /// The law's exponent, if it has one.
    pub fn p(&self) -> Option<f64> {
        match *self {
            PerturbationLaw::BpBall { p } | PerturbationLaw::PStable { p } => Some(p),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub values: Vec<f64>,
    pub law: PerturbationLaw,
}

impl Perturbation {
    pub fn fixed(values: Vec<f64>) -> Self {
        Perturbation {
            law: PerturbationLaw::Fixed {
                values: values.clone(),
            },
            values,
        }
    }

    pub fn ones(len: usize) -> Self {
        Self::fixed(vec![1.0; len])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same law tag, values multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Perturbation {
            values: self.values.iter().map(|v| v * factor).collect(),
            law: self.law.clone(),
        }
    }
}

/// Draws a length-`len` perturbation vector from `law`.
pub fn sample_perturbation(
    law: &PerturbationLaw,
    len: usize,
    rng: &mut RngState,
) -> Result<Perturbation> {
    law.validate()?;
    if len == 0 {
        return Err(invalid("perturbation length must be at least 1"));
    }
    let values = match *law {
        PerturbationLaw::Gaussian => (0..len).map(|_| standard_normal(rng)).collect(),
        PerturbationLaw::Sphere => {
            let mut g: Vec<f64> = (0..len).map(|_| standard_normal(rng)).collect();
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::Numeric(
                    "zero Gaussian vector while sampling the sphere".into(),
                ));
            }
            g.iter_mut().for_each(|v| *v /= norm);
            g
        }
        PerturbationLaw::BpBall { p } if p.is_infinite() => {
            (0..len).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect()
        }
        PerturbationLaw::BpBall { p } => {
            let shape = generalized_gaussian_shape(p)?;
            let g: Vec<f64> = (0..len)
                .map(|_| generalized_gaussian(&shape, p, rng))
                .collect();
            let w: f64 = Exp1.sample(rng);
            let denom = (g.iter().map(|v| v.abs().powf(p)).sum::<f64>() + w).powf(1.0 / p);
            g.into_iter().map(|v| v / denom).collect()
        }
        PerturbationLaw::PStable { p } => (0..len).map(|_| symmetric_stable(p, rng)).collect(),
        PerturbationLaw::Fixed { ref values } => {
            crate::error::check_dim(len, values.len())?;
            values.clone()
        }
    };
    Ok(Perturbation {
        values,
        law: law.clone(),
    })
}

/// A single scalar from a law usable as an i.i.d. coordinate factor: gaussian,
/// p_stable, or the `exp(-|t|^p)` generator behind bp_ball.
pub(crate) struct ScalarFactor {
    kind: ScalarKind,
}

enum ScalarKind {
    Gaussian,
    Stable(f64),
    Generalized(Gamma<f64>, f64),
    Uniform,
}

impl ScalarFactor {
    pub(crate) fn new(law: &PerturbationLaw) -> Result<Self> {
        law.validate()?;
        let kind = match *law {
            PerturbationLaw::Gaussian => ScalarKind::Gaussian,
            PerturbationLaw::PStable { p } => ScalarKind::Stable(p),
            PerturbationLaw::BpBall { p } if p.is_infinite() => ScalarKind::Uniform,
            PerturbationLaw::BpBall { p } => {
                ScalarKind::Generalized(generalized_gaussian_shape(p)?, p)
            }
            _ => {
                return Err(invalid(format!(
                    "law '{}' has no i.i.d. scalar factor",
                    law.kind()
                )))
            }
        };
        Ok(ScalarFactor { kind })
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            ScalarKind::Gaussian => standard_normal(rng),
            ScalarKind::Stable(p) => symmetric_stable(*p, rng),
            ScalarKind::Generalized(shape, p) => generalized_gaussian(shape, *p, rng),
            ScalarKind::Uniform => 2.0 * rng.random::<f64>() - 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(xs: &[f64]) -> f64 {
        xs.iter().sum::<f64>() / xs.len() as f64
    }

    fn variance(xs: &[f64]) -> f64 {
        let m = mean(xs);
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
    }

    /// Largest distance between the empirical CDF of `xs` and `cdf`.
    fn ks_one_sample(xs: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (na, nb) = (a.len() as f64, b.len() as f64);
        let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
        while i < a.len() && j < b.len() {
            let x = a[i].min(b[j]);
            while i < a.len() && a[i] <= x {
                i += 1;
            }
            while j < b.len() && b[j] <= x {
                j += 1;
            }
            d = d.max((i as f64 / na - j as f64 / nb).abs());
        }
        d
    }

    // Asymptotic Kolmogorov critical value at level 0.01.
    const KS_C_001: f64 = 1.628;

    #[test]
    fn same_seed_same_draws() {
        let mut a = make_rng(0);
        let mut b = make_rng(0);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn different_seeds_differ() {
        let differing = (0..64u64)
            .filter(|&s| make_rng(s).next_u64() != make_rng(s + 1).next_u64())
            .count();
        assert_eq!(differing, 64);
    }

    #[test]
    fn substreams_are_distinct_and_position_free() {
        let root = make_rng(7);
        let mut s3 = root.substream(3);
        let mut s4 = root.substream(4);
        let a: Vec<u64> = (0..16).map(|_| s3.next_u64()).collect();
        let b: Vec<u64> = (0..16).map(|_| s4.next_u64()).collect();
        assert_ne!(a, b);

        let mut advanced = make_rng(7);
        for _ in 0..10 {
            advanced.next_u64();
        }
        let mut again = advanced.substream(3);
        let c: Vec<u64> = (0..16).map(|_| again.next_u64()).collect();
        assert_eq!(a, c);
        assert_eq!(root.descend(&[3, 1]).stream_path(), &[3, 1]);
        assert_ne!(root.clone().next_u64(), root.substream(0).next_u64());
    }

    #[test]
    fn gaussian_cloud_has_unit_variance() {
        let model = IsotropicModel::new(IsotropicFamily::Gaussian, 3).unwrap();
        let cloud = sample_isotropic(model, 100_000, &mut make_rng(11)).unwrap();
        for k in 0..3 {
            let col: Vec<f64> = cloud.rows().map(|r| r[k]).collect();
            let v = variance(&col);
            assert!((v - 1.0).abs() < 0.03, "coordinate {k} variance {v}");
        }
    }

    #[test]
    fn cube_and_laplace_one_dimensional_variance() {
        for family in [IsotropicFamily::Cube, IsotropicFamily::Laplace] {
            let model = IsotropicModel::new(family, 1).unwrap();
            let cloud = sample_isotropic(model, 200_000, &mut make_rng(5)).unwrap();
            let v = variance(&cloud.points);
            assert!((v - 1.0).abs() < 0.02, "{family}: variance {v}");
        }
        let model = IsotropicModel::new(IsotropicFamily::Cube, 1).unwrap();
        let cloud = sample_isotropic(model, 10_000, &mut make_rng(5)).unwrap();
        assert!(cloud.points.iter().all(|x| x.abs() <= 3f64.sqrt()));
    }

    #[test]
    fn isotropy_for_every_family() {
        let n = 8;
        let count = 1_000_000;
        for family in IsotropicFamily::ALL {
            let model = IsotropicModel::new(family, n).unwrap();
            let cloud = sample_isotropic(model, count, &mut make_rng(99)).unwrap();
            let mut cov = vec![0.0; n * n];
            for row in cloud.rows() {
                for i in 0..n {
                    for j in 0..n {
                        cov[i * n + j] += row[i] * row[j];
                    }
                }
            }
            for i in 0..n {
                for j in 0..n {
                    let c = cov[i * n + j] / count as f64;
                    let target = if i == j { 1.0 } else { 0.0 };
                    assert!((c - target).abs() < 0.01, "{family} cov[{i}][{j}] = {c}");
                }
            }
        }
    }

    #[test]
    fn larger_clouds_extend_smaller_ones() {
        let model = IsotropicModel::new(IsotropicFamily::Laplace, 4).unwrap();
        let small = sample_isotropic(model, 10, &mut make_rng(3)).unwrap();
        let big = sample_isotropic(model, 25, &mut make_rng(3)).unwrap();
        assert_eq!(small.points[..], big.points[..40]);
    }

    #[test]
    fn unknown_family_rejected() {
        assert!("uniform".parse::<IsotropicFamily>().is_err());
        assert_eq!(
            "laplace".parse::<IsotropicFamily>().unwrap(),
            IsotropicFamily::Laplace
        );
    }

    #[test]
    fn sphere_draws_are_unit_and_centered() {
        let n = 10;
        let draws = 100_000;
        let mut rng = make_rng(21);
        let mut u1_sq = Vec::with_capacity(draws);
        let mut u1 = Vec::with_capacity(draws);
        for _ in 0..draws {
            let y = sample_perturbation(&PerturbationLaw::Sphere, n, &mut rng).unwrap();
            let norm = y.values.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
            u1.push(y.values[0]);
            u1_sq.push(y.values[0] * y.values[0]);
        }
        assert!((mean(&u1_sq) - 0.1).abs() < 0.005);
        let se = (variance(&u1) / draws as f64).sqrt();
        assert!(mean(&u1).abs() < 3.0 * se);
    }

    #[test]
    fn euclidean_ball_second_moment_and_radial_law() {
        let n = 5;
        let draws = 100_000;
        let law = PerturbationLaw::bp_ball(2.0).unwrap();
        let mut rng = make_rng(8);
        let mut radii = Vec::with_capacity(draws);
        for _ in 0..draws {
            let y = sample_perturbation(&law, n, &mut rng).unwrap();
            radii.push(y.values.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        let sq: Vec<f64> = radii.iter().map(|r| r * r).collect();
        // E|y|^2 = N/(N+2) for the uniform Euclidean ball.
        assert!((mean(&sq) - 5.0 / 7.0).abs() < 0.005, "{}", mean(&sq));
        let d = ks_one_sample(&mut radii, |r| r.clamp(0.0, 1.0).powi(n as i32));
        assert!(d < KS_C_001 / (draws as f64).sqrt(), "KS {d}");
    }

    #[test]
    fn bp_ball_membership() {
        let mut rng = make_rng(9);
        for p in [1.0, 1.5, 2.0, 3.0, 7.5] {
            let law = PerturbationLaw::bp_ball(p).unwrap();
            for _ in 0..2_000 {
                let y = sample_perturbation(&law, 12, &mut rng).unwrap();
                let s: f64 = y.values.iter().map(|v| v.abs().powf(p)).sum();
                assert!(s <= 1.0, "p={p}: sum {s}");
            }
        }
        let cube = PerturbationLaw::bp_ball(f64::INFINITY).unwrap();
        let y = sample_perturbation(&cube, 1000, &mut rng).unwrap();
        assert!(y.values.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn law_parameter_ranges() {
        assert!(PerturbationLaw::p_stable(2.0).is_err());
        assert!(PerturbationLaw::p_stable(1.0).is_err());
        assert!(PerturbationLaw::p_stable(2.5).is_err());
        assert!(PerturbationLaw::p_stable(1.75).is_ok());
        assert!(PerturbationLaw::bp_ball(0.5).is_err());
        assert!(PerturbationLaw::bp_ball(f64::NAN).is_err());
        let fixed = PerturbationLaw::Fixed {
            values: vec![1.0, 2.0],
        };
        assert!(matches!(
            sample_perturbation(&fixed, 3, &mut make_rng(0)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert_eq!(
            sample_perturbation(&fixed, 2, &mut make_rng(0))
                .unwrap()
                .values,
            vec![1.0, 2.0]
        );
    }

    #[test]
    fn stable_transform_at_the_gaussian_endpoint() {
        let mut rng = make_rng(12);
        let xs: Vec<f64> = (0..200_000)
            .map(|_| symmetric_stable(2.0, &mut rng))
            .collect();
        let v = variance(&xs);
        assert!((v - 2.0).abs() < 0.03, "variance {v}");
    }

    #[test]
    fn stable_transform_at_the_cauchy_endpoint() {
        let mut rng = make_rng(13);
        let mut xs: Vec<f64> = (0..100_000)
            .map(|_| symmetric_stable(1.0, &mut rng).abs())
            .collect();
        xs.sort_by(f64::total_cmp);
        let median = xs[xs.len() / 2];
        assert!((median - 1.0).abs() < 0.02, "median {median}");
    }

    #[test]
    fn stable_is_symmetric_and_heavy_tailed() {
        let law = PerturbationLaw::p_stable(1.75).unwrap();
        let draws = 100_000;
        let y = sample_perturbation(&law, draws, &mut make_rng(14)).unwrap();
        let mut a = y.values.clone();
        let mut b: Vec<f64> = y.values.iter().map(|v| -v).collect();
        let d = ks_two_sample(&mut a, &mut b);
        let crit = KS_C_001 * (2.0 / draws as f64).sqrt();
        assert!(d < crit, "KS {d} vs {crit}");

        // Largest square keeps a non-vanishing share of the sum of squares;
        // for finite-variance data it decays like log(n)/n.
        let share = |xs: &[f64]| {
            let sq: Vec<f64> = xs.iter().map(|v| v * v).collect();
            sq.iter().cloned().fold(0.0, f64::max) / sq.iter().sum::<f64>()
        };
        let heavy = share(&y.values);
        let normal =
            sample_perturbation(&PerturbationLaw::Gaussian, draws, &mut make_rng(14)).unwrap();
        assert!(heavy > 20.0 * share(&normal.values), "{heavy}");
        let second_moment = |xs: &[f64]| xs.iter().map(|v| v * v).sum::<f64>() / xs.len() as f64;
        assert!(second_moment(&y.values) > second_moment(&y.values[..1000]));
    }

    #[test]
    fn perturbation_sampling_is_deterministic() {
        for law in [
            PerturbationLaw::Gaussian,
            PerturbationLaw::Sphere,
            PerturbationLaw::bp_ball(1.0).unwrap(),
            PerturbationLaw::p_stable(1.6).unwrap(),
        ] {
            let a = sample_perturbation(&law, 50, &mut make_rng(4).substream(2)).unwrap();
            let b = sample_perturbation(&law, 50, &mut make_rng(4).substream(2)).unwrap();
            assert_eq!(a, b);
        }
    }
}
