//! Truncated potential synthesis, satellite datasets and the discretized
//! upward-continuation operator `T_ℓ`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::{sh_count, sh_index, ShBasis, ShScratch};
use crate::sphere::{Direction, Vec3};
use crate::trial::{upward_cartesian, upward_kernel_with_grad, DictionaryElement};

/// Default lowest degree kept at synthesis; degrees 0–2 are dropped.
pub const DEFAULT_MIN_DEGREE: usize = 3;

/// Fully normalized potential coefficients `f_{n,j}` in the real basis of
/// [`crate::harmonics`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CoefficientModel {
    pub min_degree: usize,
    pub max_degree: usize,
    pub coeffs: BTreeMap<(usize, i64), f64>,
}

impl CoefficientModel {
    /// Builds a model from `(n, j, value)` entries; the degree range is
    /// inferred from the entries.
    pub fn from_entries(entries: impl IntoIterator<Item = (usize, i64, f64)>) -> Result<Self> {
        let mut coeffs = BTreeMap::new();
        for (n, j, v) in entries {
            if j.unsigned_abs() as usize > n {
                return Err(Error::InvalidArgument(format!("order {j} out of range for degree {n}")));
            }
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite coefficient at ({n}, {j})")));
            }
            coeffs.insert((n, j), v);
        }
        let min_degree = coeffs.keys().map(|k| k.0).min().unwrap_or(0);
        let max_degree = coeffs.keys().map(|k| k.0).max().unwrap_or(0);
        Ok(CoefficientModel {
            min_degree,
            max_degree,
            coeffs,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn get(&self, n: usize, j: i64) -> f64 {
        self.coeffs.get(&(n, j)).copied().unwrap_or(0.0)
    }

    /// Seeded random model with `f_{n,j} ~ N(0, 1)/n²` for `min ≤ n ≤ max`,
    /// a Kaula-type power decay.
    pub fn random_kaula(min_degree: usize, max_degree: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coeffs = BTreeMap::new();
        for n in min_degree..=max_degree {
            let scale = 1.0 / (n.max(1) * n.max(1)) as f64;
            for j in -(n as i64)..=(n as i64) {
                let e: f64 = StandardNormal.sample(&mut rng);
                coeffs.insert((n, j), scale * e);
            }
        }
        CoefficientModel {
            min_degree,
            max_degree,
            coeffs,
        }
    }

    /// Dense coefficient vector over degrees `0..=max_degree` with everything
    /// below `cutoff` zeroed.
    pub fn dense(&self, cutoff: usize) -> Vec<f64> {
        let mut out = vec![0.0; sh_count(self.max_degree)];
        for (&(n, j), &v) in &self.coeffs {
            if n >= cutoff {
                out[sh_index(n, j)] = v;
            }
        }
        out
    }

    /// Sum of two models (used to check linearity).
    pub fn add(&self, other: &CoefficientModel) -> CoefficientModel {
        let mut coeffs = self.coeffs.clone();
        for (k, v) in &other.coeffs {
            *coeffs.entry(*k).or_insert(0.0) += v;
        }
        CoefficientModel {
            min_degree: self.min_degree.min(other.min_degree),
            max_degree: self.max_degree.max(other.max_degree),
            coeffs,
        }
    }
}

/// Evaluates `Σ_{n ≥ cutoff} Σ_j f_{n,j} σ^{-n-1} Y_{n,j}(η)` with one
/// recurrence sweep per point.
#[derive(Debug, Clone)]
pub struct Synthesizer {
    basis: ShBasis,
    dense: Vec<f64>,
}

impl Synthesizer {
    pub fn new(model: &CoefficientModel, cutoff: usize) -> Self {
        Synthesizer {
            basis: ShBasis::new(model.max_degree),
            dense: model.dense(cutoff),
        }
    }

    pub fn scratch(&self) -> ShScratch {
        self.basis.scratch()
    }

    pub fn eval(&self, sigma: f64, eta: Direction, sc: &mut ShScratch) -> f64 {
        let inv = 1.0 / sigma;
        self.basis.synthesize(eta, &self.dense, |n| inv.powi(n as i32 + 1), sc)
    }

    /// Values at many points, in parallel.
    pub fn eval_many(&self, points: &[(f64, Direction)]) -> Vec<f64> {
        points
            .par_iter()
            .map_init(|| self.scratch(), |sc, &(s, d)| self.eval(s, d, sc))
            .collect()
    }
}

/// Truncated synthesis at `σ η` with the model's own `min_degree` cutoff.
pub fn synthesize(model: &CoefficientModel, sigma: f64, eta: Direction) -> Result<f64> {
    if !(sigma >= 1.0) {
        return Err(Error::InvalidSigma(sigma));
    }
    if model.is_empty() {
        return Ok(0.0);
    }
    let syn = Synthesizer::new(model, model.min_degree);
    let mut sc = syn.scratch();
    Ok(syn.eval(sigma, eta, &mut sc))
}

/// One satellite sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub sigma: f64,
    pub eta: Direction,
    pub y: f64,
}

/// Samples `y_i ≈ (T f)(σ_i η_i)` on a satellite track.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    pub samples: Vec<Sample>,
}

impl DataSet {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("dataset must hold at least one sample".into()));
        }
        if let Some(bad) = samples.iter().find(|s| !(s.sigma > 1.0) || !s.y.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "invalid sample sigma = {}, y = {}",
                bad.sigma, bad.y
            )));
        }
        Ok(DataSet { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.y).collect()
    }

    pub(crate) fn points(&self) -> PointCloud {
        PointCloud::new(self.samples.iter().map(|s| (s.sigma, s.eta)))
    }
}

/// Multiplicative noise `y (1 + level·ε)`, `ε ~ N(0,1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub level: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { level: 0.05, seed: 0 }
    }
}

/// Synthesizes the model along the track and applies multiplicative noise.
///
/// Normal deviates come from ChaCha8 seeded with `noise.seed` (stream 0),
/// drawn sequentially in sample order by the ziggurat method, so a dataset
/// is reproducible on every platform.
pub fn generate_dataset(model: &CoefficientModel, orbit: &[(f64, Direction)], noise: NoiseSpec) -> Result<DataSet> {
    if orbit.is_empty() {
        return Err(Error::InvalidArgument("orbit must not be empty".into()));
    }
    if !(noise.level >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise level must be >= 0, got {}", noise.level)));
    }
    let clean = if model.is_empty() {
        vec![0.0; orbit.len()]
    } else {
        Synthesizer::new(model, model.min_degree).eval_many(orbit)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let samples = orbit
        .iter()
        .zip(clean)
        .map(|(&(sigma, eta), y)| {
            let eps: f64 = StandardNormal.sample(&mut rng);
            Sample {
                sigma,
                eta,
                y: y * (1.0 + noise.level * eps),
            }
        })
        .collect();
    DataSet::new(samples)
}

/// Track points in the form used by the operator kernels.
#[derive(Debug, Clone)]
pub(crate) struct PointCloud {
    pub inv_sigma: Vec<f64>,
    pub unit: Vec<Vec3>,
    pub dirs: Vec<Direction>,
}

impl PointCloud {
    pub fn new(points: impl Iterator<Item = (f64, Direction)>) -> Self {
        let mut pc = PointCloud {
            inv_sigma: Vec::new(),
            unit: Vec::new(),
            dirs: Vec::new(),
        };
        for (s, d) in points {
            pc.inv_sigma.push(1.0 / s);
            pc.unit.push(d.unit());
            pc.dirs.push(d);
        }
        pc
    }

    pub fn len(&self) -> usize {
        self.inv_sigma.len()
    }

    pub fn column(&self, d: &DictionaryElement) -> Vec<f64> {
        (0..self.len())
            .into_par_iter()
            .map(|i| upward_cartesian(d, self.inv_sigma[i], self.unit[i], self.dirs[i]))
            .collect()
    }
}

/// The column `T_ℓ d`.
pub fn apply_element(d: &DictionaryElement, ds: &DataSet) -> Vec<f64> {
    ds.points().column(d)
}

/// `T_ℓ d` over raw track points.
pub fn apply_element_at(d: &DictionaryElement, points: &[(f64, Direction)]) -> Vec<f64> {
    points
        .par_iter()
        .map(|&(s, eta)| upward_cartesian(d, 1.0 / s, eta.unit(), eta))
        .collect()
}

/// Rows `∇_x (T d)(σ_i η_i)` for a kernel or wavelet.
pub fn apply_element_grad(d: &DictionaryElement, ds: &DataSet) -> Result<Vec<Vec3>> {
    let (family, x) = d
        .kernel()
        .ok_or_else(|| Error::InvalidArgument("gradient needs a kernel or wavelet".into()))?;
    let x = x.cartesian();
    Ok(ds
        .samples
        .par_iter()
        .map(|s| upward_kernel_with_grad(family, x, 1.0 / s.sigma, s.eta.unit()).1)
        .collect())
}

/// Synthetic near-polar satellite track: `revolutions` circular orbits of
/// the given inclination with the ground track drifting westward by
/// `1/15.37` of a turn per revolution, and radius ratio oscillating between
/// `sigma_min` and `sigma_max`.
pub fn synthetic_orbit(
    count: usize,
    revolutions: f64,
    inclination_deg: f64,
    sigma_min: f64,
    sigma_max: f64,
) -> Vec<(f64, Direction)> {
    let inc = inclination_deg.to_radians();
    let (si, ci) = inc.sin_cos();
    let mid = 0.5 * (sigma_min + sigma_max);
    let amp = 0.5 * (sigma_max - sigma_min);
    (0..count)
        .map(|k| {
            let u = TAU * revolutions * k as f64 / count as f64;
            let node = -u / 15.37;
            let (su, cu) = u.sin_cos();
            let (sn, cn) = node.sin_cos();
            // orbit plane position, rotated by inclination then node
            let (x0, y0, z0) = (cu, su * ci, su * si);
            let p = Vec3::new(cn * x0 - sn * y0, sn * x0 + cn * y0, z0);
            let (_, dir) = crate::sphere::from_cartesian(p).expect("unit vector");
            let sigma = mid + amp * (u * 1.0137 + 0.4).sin();
            (sigma, dir)
        })
        .collect()
}
