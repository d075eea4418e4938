//! Support function and mean width of `K_{N,y} = conv{±y_1 X_1, …, ±y_N X_N}`,
//! plus the `L_p`-centroid body `Z_p(X)`.
//!
//! For the symmetric hull the support function in direction `θ` reduces to
//! `max_i |y_i ⟨X_i, θ⟩|`, so no facet enumeration is ever needed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};
use crate::randsrc::{
    sample_isotropic, standard_normal, IsotropicModel, Perturbation, PointCloud, RngState,
    SeedRecord,
};

/// Directions used when the caller does not pick a count.
pub const DEFAULT_DIRECTIONS: usize = 1024;
/// Cloud replicates used when the caller does not pick a count.
pub const DEFAULT_REPLICATES: usize = 64;

/// Substream of a replicate that feeds its point cloud.
pub(crate) const CLOUD_STREAM: u64 = 0;
/// Substream of a replicate that feeds its directions.
pub(crate) const DIRECTION_STREAM: u64 = 1;

/// `M` directions drawn uniformly from `S^{n-1}`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    pub dim: usize,
    pub directions: Vec<f64>,
    pub seed: SeedRecord,
}

impl DirectionSet {
    pub fn len(&self) -> usize {
        self.directions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.directions.chunks_exact(self.dim)
    }
}

/// Fills `out` with a uniform point of the unit sphere (normalized Gaussian).
pub fn random_direction_into(rng: &mut RngState, out: &mut [f64]) {
    loop {
        for x in out.iter_mut() {
            *x = standard_normal(rng);
        }
        let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.iter_mut().for_each(|x| *x /= norm);
            return;
        }
    }
}

pub fn sample_directions(dim: usize, count: usize, rng: &mut RngState) -> Result<DirectionSet> {
    if dim == 0 || count == 0 {
        return Err(invalid("direction set needs positive dimension and count"));
    }
    let seed = rng.record();
    let mut directions = vec![0.0; dim * count];
    for row in directions.chunks_exact_mut(dim) {
        random_direction_into(rng, row);
    }
    Ok(DirectionSet {
        dim,
        directions,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthEstimate {
    pub value: f64,
    pub std_error: f64,
    /// Directions per replicate.
    pub directions: usize,
    pub replicates: usize,
    pub seed: SeedRecord,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `max_i |y_i ⟨X_i, θ⟩|` without dimension checks.
#[inline]
pub(crate) fn support_raw(points: &[f64], dim: usize, y: &[f64], theta: &[f64]) -> f64 {
    points
        .chunks_exact(dim)
        .zip(y)
        .filter(|(_, &yi)| yi != 0.0)
        .map(|(x, &yi)| (yi * dot(x, theta)).abs())
        .fold(0.0, f64::max)
}

/// Support function of `K_{N,y}` at the unit vector `theta`.
pub fn support(cloud: &PointCloud, y: &Perturbation, theta: &[f64]) -> Result<f64> {
    check_dim(cloud.len(), y.len())?;
    check_dim(cloud.dim(), theta.len())?;
    Ok(support_raw(&cloud.points, cloud.dim(), &y.values, theta))
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Mean of the support function over `directions` fresh uniform directions.
pub fn mean_width_mc(
    cloud: &PointCloud,
    y: &Perturbation,
    directions: usize,
    rng: &mut RngState,
) -> Result<WidthEstimate> {
    check_dim(cloud.len(), y.len())?;
    if directions < 2 {
        return Err(invalid("mean width needs at least 2 directions"));
    }
    let seed = rng.record();
    let dim = cloud.dim();
    let mut theta = vec![0.0; dim];
    let values: Vec<f64> = (0..directions)
        .map(|_| {
            random_direction_into(rng, &mut theta);
            support_raw(&cloud.points, dim, &y.values, &theta)
        })
        .collect();
    let (value, std_error) = mean_and_stderr(&values);
    Ok(WidthEstimate {
        value,
        std_error,
        directions,
        replicates: 1,
        seed,
    })
}

/// Estimates `f(y) = E_X w(K_{N,y})` from `replicates` independent clouds,
/// each measured along its own fresh directions. Replicate `r` draws its cloud
/// from substream `[r, 0]` and its directions from `[r, 1]`, so the clouds and
/// directions do not depend on `y` and runs with different `y` share them.
///
/// The standard error uses the between-replicate spread only.
pub fn f_estimate(
    model: IsotropicModel,
    points: usize,
    y: &Perturbation,
    replicates: usize,
    directions: usize,
    rng: &RngState,
) -> Result<WidthEstimate> {
    check_dim(points, y.len())?;
    if replicates < 2 || directions < 2 {
        return Err(invalid(
            "f estimate needs at least 2 replicates and 2 directions",
        ));
    }
    let seed = rng.record();
    if y.values.iter().all(|&v| v == 0.0) {
        return Ok(WidthEstimate {
            value: 0.0,
            std_error: 0.0,
            directions,
            replicates,
            seed,
        });
    }
    let values = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let cloud = sample_isotropic(model, points, &mut rng.descend(&[r, CLOUD_STREAM]))?;
            mean_width_mc(
                &cloud,
                y,
                directions,
                &mut rng.descend(&[r, DIRECTION_STREAM]),
            )
            .map(|w| w.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (value, std_error) = mean_and_stderr(&values);
    Ok(WidthEstimate {
        value,
        std_error,
        directions,
        replicates,
        seed,
    })
}

/// Plug-in `((1/m) Σ_j |⟨X_j, θ⟩|^p)^{1/p}` over the rows of `sample`.
pub fn plug_in_centroid_support(sample: &PointCloud, p: f64, theta: &[f64]) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(invalid(format!("centroid exponent must be >= 1, got {p}")));
    }
    check_dim(sample.dim(), theta.len())?;
    let m = sample.len() as f64;
    let moment = sample
        .rows()
        .map(|x| dot(x, theta).abs().powf(p))
        .sum::<f64>()
        / m;
    Ok(moment.powf(1.0 / p))
}

/// Estimates `h_{Z_p(X)}(θ) = (E|⟨X,θ⟩|^p)^{1/p}` from `samples` draws of the model.
pub fn centroid_support(
    model: IsotropicModel,
    p: f64,
    theta: &[f64],
    samples: usize,
    rng: &mut RngState,
) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(invalid(format!("centroid exponent must be >= 1, got {p}")));
    }
    if samples < 100 {
        return Err(invalid("centroid support needs at least 100 samples"));
    }
    check_dim(model.dim, theta.len())?;
    let sample = sample_isotropic(model, samples, rng)?;
    plug_in_centroid_support(&sample, p, theta)
}

/// Sphere average of the plug-in centroid support. One sample set (substream 0)
/// is shared by all `directions` directions (substream 1), so estimates for
/// different `p` under one `rng` are comparable pointwise.
pub fn centroid_mean_width(
    model: IsotropicModel,
    p: f64,
    directions: usize,
    samples: usize,
    rng: &RngState,
) -> Result<WidthEstimate> {
    if !(p >= 1.0) {
        return Err(invalid(format!("centroid exponent must be >= 1, got {p}")));
    }
    if samples < 100 || directions < 2 {
        return Err(invalid(
            "centroid mean width needs >= 100 samples and >= 2 directions",
        ));
    }
    let sample = sample_isotropic(model, samples, &mut rng.substream(0))?;
    let dirs = sample_directions(model.dim, directions, &mut rng.substream(1))?;
    let values = dirs
        .iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|theta| plug_in_centroid_support(&sample, p, theta))
        .collect::<Result<Vec<f64>>>()?;
    let (value, std_error) = mean_and_stderr(&values);
    Ok(WidthEstimate {
        value,
        std_error,
        directions,
        replicates: 1,
        seed: rng.record(),
    })
}
