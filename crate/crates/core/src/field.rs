//! Surrogate predictions over every node of a [`ProposalGrid`].
//!
//! [`SurrogateField::exact`] evaluates the posterior node by node.
//! [`GridPosterior`] keeps the same field up to date while training points
//! (all of them grid nodes) arrive in small batches: the logit mean is
//! recomputed from `α` and the variance is downdated by the batch's
//! posterior covariance. Kernel values come from a lattice-offset table, so
//! a full pass costs one multiply-add per (node, training point) pair.

use crate::error::{BsvError, Result};
use crate::gp::{GpSurrogate, LinkParams, PackedCholesky};
use crate::grid::ProposalGrid;

/// Posterior logit mean and variance at every grid node.
#[derive(Clone, Debug)]
pub struct SurrogateField {
    pub logit_mean: Vec<f64>,
    pub logit_var: Vec<f64>,
    pub link: LinkParams,
}

impl SurrogateField {
    /// Node-by-node evaluation of `gp` on the grid.
    pub fn exact(gp: &GpSurrogate, grid: &ProposalGrid) -> Self {
        let (logit_mean, logit_var) = grid.points().map(|x| gp.predict_logit(x)).unzip();
        SurrogateField {
            logit_mean,
            logit_var,
            link: gp.link(),
        }
    }

    /// Posterior mean only; variance is left at the prior value. Cheaper
    /// (`O(n)` per node) for estimators that ignore `σ̂`.
    pub fn mean_only(gp: &GpSurrogate, grid: &ProposalGrid) -> Self {
        let logit_mean = grid.points().map(|x| gp.predict_logit_mean(x)).collect();
        SurrogateField {
            logit_mean,
            logit_var: vec![gp.kernel().variance(); grid.len()],
            link: gp.link(),
        }
    }

    pub fn prior(gp: &GpSurrogate, grid: &ProposalGrid) -> Self {
        SurrogateField {
            logit_mean: vec![0.0; grid.len()],
            logit_var: vec![gp.kernel().variance(); grid.len()],
            link: gp.link(),
        }
    }

    pub fn len(&self) -> usize {
        self.logit_mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logit_mean.is_empty()
    }

    /// `f̂` at node `i`.
    #[inline]
    pub fn mean(&self, i: usize) -> f64 {
        self.link.inverse(self.logit_mean[i])
    }

    /// `σ̂` (logit space) at node `i`.
    #[inline]
    pub fn std(&self, i: usize) -> f64 {
        self.logit_var[i].max(0.0).sqrt()
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.mean(i)).collect()
    }

    pub fn stds(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.std(i)).collect()
    }

    /// Hard classification `𝟙{f̂ ≥ 0.5}` per node.
    pub fn failures(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.mean(i) >= 0.5).collect()
    }
}

/// Kernel values indexed by lattice offsets.
#[derive(Clone, Debug)]
struct OffsetTable {
    values: Vec<f64>,
    /// strides into `values` for |offset| along the leading axes
    strides: Vec<usize>,
    last: usize,
}

impl OffsetTable {
    /// Largest table we are willing to allocate (entries).
    const MAX_ENTRIES: usize = 60_000_000;

    fn build(gp: &GpSurrogate, grid: &ProposalGrid) -> Option<Self> {
        let res = grid.resolution();
        let dim = res.len();
        let last = res[dim - 1];
        let mut shape: Vec<usize> = res[..dim - 1].to_vec();
        shape.push(2 * last - 1);
        let entries = shape.iter().try_fold(1usize, |a, &b| a.checked_mul(b))?;
        if entries > Self::MAX_ENTRIES {
            return None;
        }
        let mut spacing = grid.spacing();
        if let Some(s) = gp.scale() {
            for (h, s) in spacing.iter_mut().zip(s) {
                *h *= s;
            }
        }
        let mut strides = vec![1; dim];
        for d in (0..dim - 1).rev() {
            strides[d] = strides[d + 1] * shape[d + 1];
        }
        let kernel = gp.kernel();
        let mut values = Vec::with_capacity(entries);
        for idx in 0..entries {
            let mut r2 = 0.0;
            for d in 0..dim {
                let o = (idx / strides[d]) % shape[d];
                let off = if d + 1 == dim { o as f64 - (last - 1) as f64 } else { o as f64 };
                let v = off * spacing[d];
                r2 += v * v;
            }
            values.push(kernel.at_distance(r2.sqrt()));
        }
        Some(OffsetTable {
            values,
            strides: strides[..dim - 1].to_vec(),
            last,
        })
    }
}

/// Incrementally maintained [`SurrogateField`] for training sets made of
/// grid nodes.
#[derive(Clone, Debug)]
pub struct GridPosterior {
    field: SurrogateField,
    table: Option<OffsetTable>,
    nodes: Vec<usize>,
    multi: Vec<Vec<usize>>,
    jitter: f64,
}

impl GridPosterior {
    /// Starts from the prior of `gp` (which must hold no data).
    pub fn new(gp: &GpSurrogate, grid: &ProposalGrid) -> Result<Self> {
        if !gp.is_empty() {
            return Err(BsvError::InvalidParameter(
                "grid posterior must start from an empty surrogate".into(),
            ));
        }
        Ok(GridPosterior {
            field: SurrogateField::prior(gp, grid),
            table: OffsetTable::build(gp, grid),
            nodes: Vec::new(),
            multi: Vec::new(),
            jitter: gp.jitter(),
        })
    }

    pub fn field(&self) -> &SurrogateField {
        &self.field
    }

    pub fn into_field(self) -> SurrogateField {
        self.field
    }

    /// Grid indices of the training points seen so far.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    /// Moves from the posterior of `old` to that of `new`, where `new`
    /// conditions on `old`'s data plus the grid nodes `batch`.
    pub fn update(&mut self, grid: &ProposalGrid, old: &GpSurrogate, new: &GpSurrogate, batch: &[usize]) -> Result<()> {
        if old.len() != self.nodes.len() || new.len() != old.len() + batch.len() {
            return Err(BsvError::InvalidParameter(
                "grid posterior is out of sync with the surrogate".into(),
            ));
        }
        let m = batch.len();
        let n_old = old.len();
        let kern = |a: &[f64], b: &[f64]| -> f64 {
            let d = crate::gp::euclidean(a, b, new.scale());
            new.kernel().at_distance(d)
        };

        // Posterior covariance of the batch under the old data.
        let mut w: Vec<Vec<f64>> = Vec::with_capacity(m);
        for &b in batch {
            let kb: Vec<f64> = self.nodes.iter().map(|&j| kern(grid.point(j), grid.point(b))).collect();
            w.push(old.solve(&kb));
        }
        let mut s_chol = PackedCholesky::default();
        let mut s_ok = new.jitter() == self.jitter;
        if s_ok {
            for (a, &ba) in batch.iter().enumerate() {
                let mut row = Vec::with_capacity(a);
                let mut diag = 0.0;
                for (c, &bc) in batch.iter().enumerate().take(a + 1) {
                    let mut v = kern(grid.point(ba), grid.point(bc));
                    for (j, &node) in self.nodes.iter().enumerate() {
                        v -= kern(grid.point(ba), grid.point(node)) * w[c][j];
                    }
                    if c == a {
                        diag = v + self.jitter;
                    } else {
                        row.push(v);
                    }
                }
                if s_chol.push(&row, diag).is_err() {
                    s_ok = false;
                    break;
                }
            }
        }

        self.nodes.extend_from_slice(batch);
        self.multi.extend(batch.iter().map(|&b| grid.multi_index(b)));
        if !s_ok {
            // Jitter escalated or the batch covariance is numerically
            // singular: recompute the field from scratch.
            self.jitter = new.jitter();
            self.field = SurrogateField::exact(new, grid);
            return Ok(());
        }

        // coefficient rows: [alpha_j, gamma_j0, ..., gamma_j(m-1)]
        let alpha = new.alpha();
        let coefs: Vec<Vec<f64>> = (0..self.nodes.len())
            .map(|j| {
                let mut row = Vec::with_capacity(m + 1);
                row.push(alpha[j]);
                for (b, wb) in w.iter().enumerate() {
                    row.push(if j < n_old { -wb[j] } else if j - n_old == b { 1.0 } else { 0.0 });
                }
                row
            })
            .collect();

        let mut outputs: Vec<Vec<f64>> = vec![vec![0.0; grid.len()]; m + 1];
        self.accumulate(grid, new, &coefs, &mut outputs);

        let mut it = outputs.into_iter();
        self.field.logit_mean = it.next().expect("mean output");
        let cov: Vec<Vec<f64>> = it.collect();
        let mut c = vec![0.0; m];
        for i in 0..grid.len() {
            for (b, cb) in cov.iter().enumerate() {
                c[b] = cb[i];
            }
            let u = s_chol.forward(&c);
            self.field.logit_var[i] -= u.iter().map(|v| v * v).sum::<f64>();
            if self.field.logit_var[i] < 0.0 {
                self.field.logit_var[i] = 0.0;
            }
        }
        Ok(())
    }

    /// `outputs[o][i] += Σ_j k(x_i, x_j) coefs[j][o]` over all grid nodes.
    fn accumulate(&self, grid: &ProposalGrid, gp: &GpSurrogate, coefs: &[Vec<f64>], outputs: &mut [Vec<f64>]) {
        let Some(table) = &self.table else {
            for (i, x) in grid.points().enumerate() {
                for (j, &node) in self.nodes.iter().enumerate() {
                    let k = gp.kernel().at_distance(crate::gp::euclidean(x, grid.point(node), gp.scale()));
                    for (o, out) in outputs.iter_mut().enumerate() {
                        out[i] += k * coefs[j][o];
                    }
                }
            }
            return;
        };
        let last = table.last;
        let lead = table.strides.len();
        let rows = grid.len() / last;
        let mut row_index = vec![0usize; lead];
        for r in 0..rows {
            // multi-index of this row along the leading axes
            let mut rem = r;
            for d in (0..lead).rev() {
                let res = grid.resolution()[d];
                row_index[d] = rem % res;
                rem /= res;
            }
            let lo = r * last;
            for (j, mj) in self.multi.iter().enumerate() {
                let mut base = last - 1 - mj[lead];
                for d in 0..lead {
                    base += row_index[d].abs_diff(mj[d]) * table.strides[d];
                }
                let slice = &table.values[base..base + last];
                for (out, &coef) in outputs.iter_mut().zip(&coefs[j]) {
                    if coef == 0.0 {
                        continue;
                    }
                    for (a, &k) in out[lo..lo + last].iter_mut().zip(slice) {
                        *a += k * coef;
                    }
                }
            }
        }
    }
}
