//! Gaussian-process surrogate over logit-transformed failure observations.
//!
//! Observations `y ∈ [0, 1]` are squashed away from the endpoints, mapped
//! to logits, and regressed with a zero-mean GP under an isotropic
//! Matérn 1/2 kernel. Predictions are mapped back through the sigmoid so the
//! surrogate mean `f̂(x)` lives in `[0, 1]`; the standard deviation `σ̂(x)`
//! stays in logit space.

use serde::{Deserialize, Serialize};

use crate::error::{BsvError, Result};
use crate::space::DesignPoint;

/// Default diagonal jitter added to the Gram matrix.
pub const DEFAULT_JITTER: f64 = 1e-6;
/// Largest jitter tried before giving up on a factorization.
pub const MAX_JITTER: f64 = 1e-2;

/// Isotropic Matérn 1/2 kernel `k(a, b) = s² exp(-|a - b| / ℓ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub length_scale: f64,
    pub signal_std: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            length_scale: (-0.1f64).exp(),
            signal_std: (-0.1f64).exp(),
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_scale > 0.0 && self.signal_std > 0.0) {
            return Err(BsvError::InvalidParameter(format!(
                "kernel parameters must be positive, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn variance(&self) -> f64 {
        self.signal_std * self.signal_std
    }

    /// Kernel value at Euclidean distance `d`.
    #[inline]
    pub fn at_distance(&self, d: f64) -> f64 {
        self.variance() * (-d / self.length_scale).exp()
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(BsvError::DimensionMismatch {
                expected: a.len(),
                got: b.len(),
            });
        }
        Ok(self.at_distance(euclidean(a, b, None)))
    }
}

#[inline]
pub(crate) fn euclidean(a: &[f64], b: &[f64], scale: Option<&[f64]>) -> f64 {
    match scale {
        None => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
        Some(s) => a
            .iter()
            .zip(b)
            .zip(s)
            .map(|((x, y), s)| {
                let d = (x - y) * s;
                d * d
            })
            .sum::<f64>()
            .sqrt(),
    }
}

/// Squashing `φ` and sigmoid steepness for the logit link.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub epsilon: f64,
    pub steepness: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            epsilon: 1e-5,
            steepness: 0.1,
        }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 0.5 && self.steepness > 0.0) {
            return Err(BsvError::InvalidParameter(format!(
                "link requires epsilon in (0, 0.5) and positive steepness, got {self:?}"
            )));
        }
        Ok(())
    }

    /// `log(φ(y) / (1 - φ(y))) / s` with `φ(y) = y(1-ε) + (1-y)ε`.
    pub fn logit(&self, y: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&y) {
            return Err(BsvError::InvalidParameter(format!(
                "observation must lie in [0, 1], got {y}"
            )));
        }
        let e = self.epsilon;
        let phi = y * (1.0 - e) + (1.0 - y) * e;
        Ok((phi / (1.0 - phi)).ln() / self.steepness)
    }

    /// `φ⁻¹(1 / (1 + exp(-s z)))`, clipped to `[0, 1]`.
    pub fn inverse(&self, z: f64) -> f64 {
        let u = 1.0 / (1.0 + (-self.steepness * z).exp());
        ((u - self.epsilon) / (1.0 - 2.0 * self.epsilon)).clamp(0.0, 1.0)
    }
}

/// Lower-triangular Cholesky factor stored row by row, so that rows can be
/// appended as training data arrives. Appending is the same arithmetic as
/// factoring from scratch, so an incrementally grown factor is bit-identical
/// to a fresh one.
#[derive(Clone, Debug, Default)]
pub struct PackedCholesky {
    data: Vec<f64>,
    n: usize,
}

impl PackedCholesky {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        let start = i * (i + 1) / 2;
        &self.data[start..start + i + 1]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.row(i)[j]
        }
    }

    /// Appends the row for a new input whose covariances with the existing
    /// inputs are `cov` and whose (jittered) variance is `diag`. Returns the
    /// offending pivot value if the extended matrix is not positive definite.
    pub fn push(&mut self, cov: &[f64], diag: f64) -> std::result::Result<(), f64> {
        debug_assert_eq!(cov.len(), self.n);
        let l = self.forward(cov);
        let pivot = diag - l.iter().map(|v| v * v).sum::<f64>();
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(pivot);
        }
        self.data.extend_from_slice(&l);
        self.data.push(pivot.sqrt());
        self.n += 1;
        Ok(())
    }

    /// Solves `L v = b`.
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let mut v = b.to_vec();
        for i in 0..v.len() {
            let row = self.row(i);
            let s: f64 = row[..i].iter().zip(&v[..i]).map(|(a, b)| a * b).sum();
            v[i] = (v[i] - s) / row[i];
        }
        v
    }

    /// Solves `Lᵀ x = b`.
    pub fn backward(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        for i in (0..x.len()).rev() {
            let xi = x[i] / self.row(i)[i];
            x[i] = xi;
            let row = self.row(i);
            for (xj, lij) in x[..i].iter_mut().zip(&row[..i]) {
                *xj -= lij * xi;
            }
        }
        x
    }

    /// Solves `L Lᵀ x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.backward(&self.forward(b))
    }

    /// Dense copy of `L` (row-major, `n × n`).
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            out[i * n..i * n + i + 1].copy_from_slice(self.row(i));
        }
        out
    }
}

/// Posterior summary at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    /// Surrogate failure probability `f̂(x) ∈ [0, 1]`.
    pub mean: f64,
    /// Posterior standard deviation of the latent logit.
    pub std: f64,
}

/// Fitted GP surrogate. Immutable once built; [`GpSurrogate::extend`]
/// returns a new surrogate that conditions on additional data.
#[derive(Clone, Debug)]
pub struct GpSurrogate {
    inputs: Vec<DesignPoint>,
    targets: Vec<f64>,
    targets_logit: Vec<f64>,
    kernel: KernelParams,
    link: LinkParams,
    base_jitter: f64,
    jitter: f64,
    scale: Option<Vec<f64>>,
    chol: PackedCholesky,
    alpha: Vec<f64>,
}

impl GpSurrogate {
    /// Surrogate with no observations; predicts the prior everywhere.
    pub fn prior(kernel: KernelParams, link: LinkParams) -> Self {
        GpSurrogate {
            inputs: Vec::new(),
            targets: Vec::new(),
            targets_logit: Vec::new(),
            kernel,
            link,
            base_jitter: DEFAULT_JITTER,
            jitter: DEFAULT_JITTER,
            scale: None,
            chol: PackedCholesky::default(),
            alpha: Vec::new(),
        }
    }

    /// Fits a surrogate to `(inputs, targets)`. Jitter starts at `jitter`
    /// and grows tenfold on factorization failure up to [`MAX_JITTER`].
    pub fn fit(
        inputs: &[DesignPoint],
        targets: &[f64],
        kernel: KernelParams,
        link: LinkParams,
        jitter: f64,
    ) -> Result<Self> {
        Self::fit_scaled(inputs, targets, kernel, link, jitter, None)
    }

    /// Like [`GpSurrogate::fit`], with distances measured after multiplying
    /// each coordinate by `scale` (e.g. `1 / width` for min-max scaling).
    pub fn fit_scaled(
        inputs: &[DesignPoint],
        targets: &[f64],
        kernel: KernelParams,
        link: LinkParams,
        jitter: f64,
        scale: Option<Vec<f64>>,
    ) -> Result<Self> {
        kernel.validate()?;
        link.validate()?;
        if !(jitter > 0.0) {
            return Err(BsvError::InvalidParameter(format!("jitter must be positive, got {jitter}")));
        }
        if inputs.len() != targets.len() {
            return Err(BsvError::DimensionMismatch {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        let mut gp = GpSurrogate {
            base_jitter: jitter,
            jitter,
            scale,
            ..GpSurrogate::prior(kernel, link)
        };
        gp.append(inputs, targets)?;
        Ok(gp)
    }

    /// Conditions on additional observations, reusing the existing factor.
    pub fn extend(&self, inputs: &[DesignPoint], targets: &[f64]) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(BsvError::DimensionMismatch {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        let mut gp = self.clone();
        gp.append(inputs, targets)?;
        Ok(gp)
    }

    fn append(&mut self, inputs: &[DesignPoint], targets: &[f64]) -> Result<()> {
        let dim = self.inputs.first().or(inputs.first()).map(|p| p.dim());
        for x in inputs {
            if Some(x.dim()) != dim {
                return Err(BsvError::DimensionMismatch {
                    expected: dim.unwrap_or(0),
                    got: x.dim(),
                });
            }
        }
        let logits = targets
            .iter()
            .map(|&y| self.link.logit(y))
            .collect::<Result<Vec<_>>>()?;
        self.inputs.extend(inputs.iter().cloned());
        self.targets.extend_from_slice(targets);
        self.targets_logit.extend(logits);

        let start = self.chol.len();
        if let Err(e) = self.factor_from(start) {
            // Restart the whole factorization with escalating jitter.
            let mut last = e;
            loop {
                if self.jitter * 10.0 > MAX_JITTER * (1.0 + 1e-9) {
                    return Err(last);
                }
                self.jitter *= 10.0;
                self.chol = PackedCholesky::default();
                match self.factor_from(0) {
                    Ok(()) => break,
                    Err(e) => last = e,
                }
            }
        }
        self.alpha = self.chol.solve(&self.targets_logit);
        Ok(())
    }

    fn factor_from(&mut self, start: usize) -> Result<()> {
        let var = self.kernel.variance();
        for i in start..self.inputs.len() {
            let cov: Vec<f64> = (0..i).map(|j| self.k(&self.inputs[i], &self.inputs[j])).collect();
            if let Err(value) = self.chol.push(&cov, var + self.jitter) {
                let (mut dmin, mut dmax) = (f64::INFINITY, 0.0f64);
                for r in 0..self.chol.len() {
                    let d = self.chol.get(r, r);
                    dmin = dmin.min(d);
                    dmax = dmax.max(d);
                }
                return Err(BsvError::NotPositiveDefinite {
                    jitter: self.jitter,
                    pivot: i,
                    value,
                    condition: if dmin.is_finite() { (dmax / dmin).powi(2) } else { f64::INFINITY },
                });
            }
        }
        Ok(())
    }

    #[inline]
    fn k(&self, a: &[f64], b: &[f64]) -> f64 {
        self.kernel.at_distance(euclidean(a, b, self.scale.as_deref()))
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[DesignPoint] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn targets_logit(&self) -> &[f64] {
        &self.targets_logit
    }

    pub fn kernel(&self) -> KernelParams {
        self.kernel
    }

    pub fn link(&self) -> LinkParams {
        self.link
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn base_jitter(&self) -> f64 {
        self.base_jitter
    }

    pub fn scale(&self) -> Option<&[f64]> {
        self.scale.as_deref()
    }

    pub fn cholesky(&self) -> &PackedCholesky {
        &self.chol
    }

    /// `(K + jitter I)⁻¹ z`.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// `(K + jitter I)⁻¹ b` for an arbitrary right-hand side.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.chol.solve(b)
    }

    /// Posterior mean and variance of the latent logit at `x`.
    pub fn predict_logit(&self, x: &[f64]) -> (f64, f64) {
        let kx: Vec<f64> = self.inputs.iter().map(|xi| self.k(x, xi)).collect();
        let mean = kx.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>();
        let v = self.chol.forward(&kx);
        let var = (self.kernel.variance() - v.iter().map(|a| a * a).sum::<f64>()).max(0.0);
        (mean, var)
    }

    /// Posterior logit mean only (`O(n)` per point).
    pub fn predict_logit_mean(&self, x: &[f64]) -> f64 {
        self.inputs
            .iter()
            .zip(&self.alpha)
            .map(|(xi, a)| self.k(x, xi) * a)
            .sum()
    }

    pub fn predict_one(&self, x: &[f64]) -> Prediction {
        let (m, v) = self.predict_logit(x);
        Prediction {
            mean: self.link.inverse(m),
            std: v.sqrt(),
        }
    }

    pub fn predict<P: AsRef<[f64]>>(&self, points: &[P]) -> Vec<Prediction> {
        points.iter().map(|p| self.predict_one(p.as_ref())).collect()
    }

    pub fn snapshot(&self) -> SurrogateSnapshot {
        SurrogateSnapshot {
            version: SurrogateSnapshot::VERSION,
            inputs: self.inputs.clone(),
            targets: self.targets.clone(),
            kernel: self.kernel,
            link: self.link,
            jitter: self.base_jitter,
            scale: self.scale.clone(),
        }
    }

    pub fn from_snapshot(s: &SurrogateSnapshot) -> Result<Self> {
        if s.version != SurrogateSnapshot::VERSION {
            return Err(BsvError::InvalidParameter(format!(
                "unsupported snapshot version {}",
                s.version
            )));
        }
        Self::fit_scaled(&s.inputs, &s.targets, s.kernel, s.link, s.jitter, s.scale.clone())
    }
}

impl AsRef<[f64]> for DesignPoint {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Serializable surrogate state. Restoring refits the same data with the
/// same arithmetic, so predictions are reproduced exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSnapshot {
    pub version: u32,
    pub inputs: Vec<DesignPoint>,
    pub targets: Vec<f64>,
    pub kernel: KernelParams,
    pub link: LinkParams,
    pub jitter: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<Vec<f64>>,
}

impl SurrogateSnapshot {
    pub const VERSION: u32 = 1;
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pts(v: &[[f64; 2]]) -> Vec<DesignPoint> {
        v.iter().map(|p| DesignPoint::new(p.to_vec())).collect()
    }

    #[test]
    fn kernel_values() {
        let k = KernelParams::default();
        assert_abs_diff_eq!(k.eval(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.818731, epsilon = 1e-6);
        assert_abs_diff_eq!(k.eval(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.271126, epsilon = 1e-6);
        assert!(k.eval(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn logit_examples() {
        let l = LinkParams::default();
        assert_eq!(l.logit(0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(l.logit(1.0).unwrap(), 115.129155, epsilon = 1e-5);
        assert_abs_diff_eq!(l.logit(0.0).unwrap(), -115.129155, epsilon = 1e-5);
        assert!(l.logit(1.1).is_err());
        assert!(l.logit(-0.1).is_err());
        assert_abs_diff_eq!(l.inverse(0.0), 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(l.inverse(115.129155), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn round_trip_link() {
        let l = LinkParams::default();
        for y in [0.0, 0.25, 0.5, 0.75, 1.0] {
            assert_abs_diff_eq!(l.inverse(l.logit(y).unwrap()), y, epsilon = 1e-9);
        }
    }

    #[test]
    fn empty_surrogate_is_prior() {
        let gp = GpSurrogate::fit(&[], &[], KernelParams::default(), LinkParams::default(), 1e-6).unwrap();
        let p = gp.predict_one(&[3.0, -1.0]);
        assert_abs_diff_eq!(p.mean, 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(p.std, KernelParams::default().signal_std, epsilon = 1e-15);
    }

    #[test]
    fn single_failure_nearly_interpolates() {
        let x = pts(&[[0.0, 0.0]]);
        let gp = GpSurrogate::fit(&x, &[1.0], KernelParams::default(), LinkParams::default(), 1e-6).unwrap();
        let p = gp.predict_one(&[0.0, 0.0]);
        assert!(p.mean >= 0.99 && p.std <= 0.01, "{p:?}");
        let far = gp.predict_one(&[50.0, 0.0]);
        assert_abs_diff_eq!(far.mean, 0.5, epsilon = 0.01);
        assert_abs_diff_eq!(far.std, KernelParams::default().signal_std, epsilon = 1e-3);
    }

    #[test]
    fn two_distant_observations_revert_at_midpoint() {
        let x = pts(&[[0.0, 0.0], [10.0, 0.0]]);
        let gp = GpSurrogate::fit(&x, &[0.0, 1.0], KernelParams::default(), LinkParams::default(), 1e-6).unwrap();
        let mid = gp.predict_one(&[5.0, 0.0]).mean;
        assert!(mid > 0.3 && mid < 0.7, "{mid}");
    }

    #[test]
    fn duplicates_are_regularized() {
        let x = pts(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]);
        let gp = GpSurrogate::fit(&x, &[1.0, 1.0, 1.0], KernelParams::default(), LinkParams::default(), 1e-6).unwrap();
        assert!(gp.predict_one(&[1.0, 1.0]).mean > 0.99);
    }

    #[test]
    fn extend_matches_fit_bitwise() {
        let x = pts(&[[0.0, 0.0], [1.0, 0.5], [2.0, -1.0], [0.3, 0.2]]);
        let y = [0.0, 1.0, 0.2, 1.0];
        let full = GpSurrogate::fit(&x, &y, KernelParams::default(), LinkParams::default(), 1e-6).unwrap();
        let part = GpSurrogate::fit(&x[..2], &y[..2], KernelParams::default(), LinkParams::default(), 1e-6).unwrap();
        let grown = part.extend(&x[2..], &y[2..]).unwrap();
        for q in [[0.5, 0.5], [3.0, 3.0], [1.0, 0.5]] {
            assert_eq!(full.predict_one(&q), grown.predict_one(&q));
        }
    }

    #[test]
    fn rejects_bad_targets() {
        let x = pts(&[[0.0, 0.0]]);
        assert!(GpSurrogate::fit(&x, &[1.5], KernelParams::default(), LinkParams::default(), 1e-6).is_err());
        assert!(GpSurrogate::fit(&x, &[], KernelParams::default(), LinkParams::default(), 1e-6).is_err());
    }

    #[test]
    fn snapshot_round_trip_is_exact() {
        let x = pts(&[[0.0, 0.0], [1.0, 0.5], [2.0, -1.0]]);
        let gp = GpSurrogate::fit(&x, &[0.0, 1.0, 1.0], KernelParams::default(), LinkParams::default(), 1e-6).unwrap();
        let json = serde_json::to_string(&gp.snapshot()).unwrap();
        let back = GpSurrogate::from_snapshot(&serde_json::from_str(&json).unwrap()).unwrap();
        for q in [[0.5, 0.5], [1.5, -0.5]] {
            let (a, b) = (gp.predict_one(&q), back.predict_one(&q));
            assert!((a.mean - b.mean).abs() <= 1e-12 && (a.std - b.std).abs() <= 1e-12);
        }
    }
}
