//! Discretized design space. The same lattice is the argmax domain for the
//! acquisition functions and the equal-likelihood proposal used by the
//! failure-probability estimate.

use rand::Rng;
use std::io::Write;

use crate::error::{BsvError, Result};
use crate::operational::OperationalModel;
use crate::space::{DesignPoint, DesignSpace};

/// Refuse to materialize lattices larger than this.
pub const MAX_GRID_POINTS: u128 = 100_000_000;

/// Default per-axis resolution for two-dimensional problems.
pub const DEFAULT_RESOLUTION: usize = 500;

#[derive(Clone, Debug)]
pub struct ProposalGrid {
    space: DesignSpace,
    resolution: Vec<usize>,
    strides: Vec<usize>,
    coords: Vec<f64>,
    densities: Vec<f64>,
    log_densities: Vec<f64>,
    total_density: f64,
}

impl ProposalGrid {
    /// Builds the inclusive lattice over `space` (row-major, last axis
    /// fastest) and caches `p(x)` at every node.
    pub fn build(space: &DesignSpace, model: &OperationalModel, resolution: &[usize]) -> Result<Self> {
        if resolution.len() != space.dim() {
            return Err(BsvError::DimensionMismatch {
                expected: space.dim(),
                got: resolution.len(),
            });
        }
        if model.dim() != space.dim() {
            return Err(BsvError::DimensionMismatch {
                expected: space.dim(),
                got: model.dim(),
            });
        }
        if let Some(r) = resolution.iter().find(|&&r| r < 2) {
            return Err(BsvError::InvalidParameter(format!(
                "grid resolution must be at least 2 per axis, got {r}"
            )));
        }
        let total: u128 = resolution.iter().map(|&r| r as u128).product();
        if total > MAX_GRID_POINTS {
            return Err(BsvError::GridTooLarge {
                points: total,
                limit: MAX_GRID_POINTS,
            });
        }
        let n = total as usize;
        let dim = space.dim();
        let mut strides = vec![1; dim];
        for d in (0..dim.saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * resolution[d + 1];
        }
        let axes: Vec<Vec<f64>> = space
            .bounds
            .iter()
            .zip(resolution)
            .map(|(b, &r)| {
                (0..r)
                    .map(|i| {
                        if i + 1 == r {
                            b.hi
                        } else {
                            b.lo + i as f64 * b.width() / (r - 1) as f64
                        }
                    })
                    .collect()
            })
            .collect();
        let mut coords = Vec::with_capacity(n * dim);
        for idx in 0..n {
            for d in 0..dim {
                coords.push(axes[d][(idx / strides[d]) % resolution[d]]);
            }
        }
        let mut densities = Vec::with_capacity(n);
        let mut log_densities = Vec::with_capacity(n);
        for x in coords.chunks_exact(dim) {
            densities.push(model.density_unchecked(x));
            log_densities.push(model.log_density_or_neg_inf(x)?);
        }
        let total_density = pairwise_sum(&densities);
        Ok(ProposalGrid {
            space: space.clone(),
            resolution: resolution.to_vec(),
            strides,
            coords,
            densities,
            log_densities,
            total_density,
        })
    }

    /// Same resolution on every axis.
    pub fn build_uniform(space: &DesignSpace, model: &OperationalModel, per_axis: usize) -> Result<Self> {
        Self::build(space, model, &vec![per_axis; space.dim()])
    }

    pub fn len(&self) -> usize {
        self.densities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.densities.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn space(&self) -> &DesignSpace {
        &self.space
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    /// Node spacing along each axis.
    pub fn spacing(&self) -> Vec<f64> {
        self.space
            .bounds
            .iter()
            .zip(&self.resolution)
            .map(|(b, &r)| b.width() / (r - 1) as f64)
            .collect()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn design_point(&self, i: usize) -> DesignPoint {
        DesignPoint::from(self.point(i))
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim())
    }

    /// Multi-index of node `i`.
    pub fn multi_index(&self, i: usize) -> Vec<usize> {
        self.strides
            .iter()
            .zip(&self.resolution)
            .map(|(s, r)| (i / s) % r)
            .collect()
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Index of the node nearest to `x` (coordinates clamped to the box).
    pub fn nearest_index(&self, x: &[f64]) -> usize {
        self.space
            .bounds
            .iter()
            .zip(&self.resolution)
            .zip(&self.strides)
            .zip(x)
            .map(|(((b, &r), s), &v)| {
                let t = ((v - b.lo) / b.width() * (r - 1) as f64).round();
                (t.clamp(0.0, (r - 1) as f64) as usize) * s
            })
            .sum()
    }

    /// Cached operational densities `w_i = p(x_i)`.
    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn log_densities(&self) -> &[f64] {
        &self.log_densities
    }

    pub fn total_density(&self) -> f64 {
        self.total_density
    }

    /// Equal-likelihood proposal weight `q(x_i) = (1/n) Σ_j p(x_j)`.
    pub fn proposal_weight(&self) -> f64 {
        self.total_density / self.len() as f64
    }

    /// Writes `x_1, ..., x_n, density` rows for contour plots.
    pub fn write_density_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim()).map(|d| format!("x{d}")).collect();
        header.push("density".into());
        w.write_record(&header)?;
        for (x, p) in self.points().zip(&self.densities) {
            let mut row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            row.push(p.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Grid node maximizing `score`, ties to the lowest index.
    pub fn argmax<F: Fn(&[f64]) -> f64>(&self, score: F) -> Result<usize> {
        let scores: Vec<f64> = self.points().map(score).collect();
        self.argmax_scores(&scores)
    }

    /// Argmax over precomputed per-node scores, ties to the lowest index.
    pub fn argmax_scores(&self, scores: &[f64]) -> Result<usize> {
        argmax_index(scores).map_err(|index| BsvError::NanScore {
            index,
            point: self.point(index).to_vec(),
        })
    }

    /// Draws node `i` with probability `weights_i / Σ weights`.
    pub fn sample_categorical<R: Rng + ?Sized>(&self, weights: &[f64], rng: &mut R) -> Result<usize> {
        Ok(Categorical::new(weights)?.sample(rng))
    }
}

/// Index of the first maximum; `Err(i)` for the first NaN at `i`.
pub fn argmax_index(scores: &[f64]) -> std::result::Result<usize, usize> {
    let mut best = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_nan() {
            return Err(i);
        }
        if s > best_val || i == 0 {
            best = i;
            best_val = s;
        }
    }
    Ok(best)
}

/// Prefix-sum categorical sampler over nonnegative weights.
#[derive(Clone, Debug)]
pub struct Categorical {
    cumulative: Vec<f64>,
}

impl Categorical {
    pub fn new(weights: &[f64]) -> Result<Self> {
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for &w in weights {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(BsvError::DegenerateWeights);
            }
            acc += w;
            cumulative.push(acc);
        }
        if !(acc > 0.0) {
            return Err(BsvError::DegenerateWeights);
        }
        Ok(Categorical { cumulative })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("nonempty");
        let u = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= u);
        if i < self.cumulative.len() {
            return i;
        }
        // u rounded up to the total: take the last node with positive weight
        self.cumulative.partition_point(|&c| c < total)
    }
}

/// Pairwise summation, deterministic in input order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 64 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}
