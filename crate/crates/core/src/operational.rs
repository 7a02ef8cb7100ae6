//! Operational likelihood models: independent per-dimension distributions
//! over the design space, with density evaluation and sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::{PI, SQRT_2};

use crate::error::{BsvError, Result};
use crate::space::{DesignPoint, DesignSpace, Interval};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal CDF.
pub(crate) fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Standard normal upper-tail probability `1 - Φ(z)`.
pub(crate) fn std_normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

/// Probability mass of the standard normal on `[a, b]`, computed on the
/// side of zero that avoids cancellation.
fn std_normal_mass(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        std_normal_sf(a) - std_normal_sf(b)
    } else {
        std_normal_cdf(b) - std_normal_cdf(a)
    }
}

/// Draws a standard normal truncated to `[a, b]` by inverting the CDF.
fn sample_std_normal_truncated<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let z = if a > 0.0 {
        // upper tail: work with survival probabilities
        let (sa, sb) = (std_normal_sf(a), std_normal_sf(b));
        let s = sa - u * (sa - sb);
        SQRT_2 * erfc_inv(2.0 * s)
    } else {
        let (ca, cb) = (std_normal_cdf(a), std_normal_cdf(b));
        let c = ca + u * (cb - ca);
        -SQRT_2 * erfc_inv(2.0 * c)
    };
    z.clamp(a, b)
}

/// Normal distribution truncated to `[lower, upper]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedNormal {
    pub mean: f64,
    pub std: f64,
    pub lower: f64,
    pub upper: f64,
}

impl TruncatedNormal {
    pub fn new(mean: f64, std: f64, lower: f64, upper: f64) -> Result<Self> {
        let tn = TruncatedNormal {
            mean,
            std,
            lower,
            upper,
        };
        tn.validate()?;
        Ok(tn)
    }

    fn validate(&self) -> Result<()> {
        if !(self.std > 0.0 && self.std.is_finite()) {
            return Err(BsvError::InvalidParameter(format!(
                "standard deviation must be positive, got {}",
                self.std
            )));
        }
        Interval::new(self.lower, self.upper)?;
        if self.mass() <= 0.0 {
            return Err(BsvError::InvalidParameter(
                "truncation interval carries no probability mass".into(),
            ));
        }
        Ok(())
    }

    fn standardize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    /// Mass of the parent normal on the truncation interval.
    fn mass(&self) -> f64 {
        std_normal_mass(self.standardize(self.lower), self.standardize(self.upper))
    }

    fn mass_on(&self, lo: f64, hi: f64) -> f64 {
        let (lo, hi) = (lo.max(self.lower), hi.min(self.upper));
        if lo >= hi {
            return 0.0;
        }
        std_normal_mass(self.standardize(lo), self.standardize(hi))
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        if x < self.lower || x > self.upper {
            return f64::NEG_INFINITY;
        }
        let z = self.standardize(x);
        -0.5 * z * z - self.std.ln() - LN_SQRT_2PI - self.mass().ln()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.lower || x > self.upper {
            return 0.0;
        }
        let z = self.standardize(x);
        (-0.5 * z * z).exp() / (self.std * (2.0 * PI).sqrt() * self.mass())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lower {
            0.0
        } else if x >= self.upper {
            1.0
        } else {
            (self.mass_on(self.lower, x) / self.mass()).clamp(0.0, 1.0)
        }
    }

    fn sample_within<R: Rng + ?Sized>(&self, lo: f64, hi: f64, rng: &mut R) -> f64 {
        let (lo, hi) = (lo.max(self.lower), hi.min(self.upper));
        let z = sample_std_normal_truncated(self.standardize(lo), self.standardize(hi), rng);
        (self.mean + self.std * z).clamp(lo, hi)
    }
}

/// One weighted component of a [`Distribution::GaussianMixture`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    #[serde(flatten)]
    pub component: TruncatedNormal,
}

/// Marginal distribution of a single operational parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    Normal { mean: f64, std: f64 },
    TruncatedNormal(TruncatedNormal),
    GaussianMixture { components: Vec<MixtureComponent> },
    Uniform { lower: f64, upper: f64 },
}

impl Distribution {
    pub fn normal(mean: f64, std: f64) -> Self {
        Distribution::Normal { mean, std }
    }

    pub fn truncated_normal(mean: f64, std: f64, lower: f64, upper: f64) -> Self {
        Distribution::TruncatedNormal(TruncatedNormal {
            mean,
            std,
            lower,
            upper,
        })
    }

    pub fn uniform(lower: f64, upper: f64) -> Self {
        Distribution::Uniform { lower, upper }
    }

    /// Equal-weight mixture of truncated normals.
    pub fn equal_mixture(components: Vec<TruncatedNormal>) -> Self {
        let w = 1.0 / components.len() as f64;
        Distribution::GaussianMixture {
            components: components
                .into_iter()
                .map(|component| MixtureComponent {
                    weight: w,
                    component,
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Distribution::Normal { mean, std } => {
                if !(mean.is_finite() && *std > 0.0 && std.is_finite()) {
                    return Err(BsvError::InvalidParameter(format!(
                        "normal requires finite mean and positive std, got ({mean}, {std})"
                    )));
                }
            }
            Distribution::TruncatedNormal(tn) => tn.validate()?,
            Distribution::GaussianMixture { components } => {
                if components.is_empty() {
                    return Err(BsvError::InvalidParameter("mixture has no components".into()));
                }
                let mut total = 0.0;
                for c in components {
                    if !(c.weight > 0.0) {
                        return Err(BsvError::InvalidParameter(format!(
                            "mixture weights must be positive, got {}",
                            c.weight
                        )));
                    }
                    c.component.validate()?;
                    total += c.weight;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(BsvError::InvalidParameter(format!(
                        "mixture weights sum to {total}, expected 1"
                    )));
                }
            }
            Distribution::Uniform { lower, upper } => {
                Interval::new(*lower, *upper)?;
            }
        }
        Ok(())
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            Distribution::Normal { mean, std } => {
                let z = (x - mean) / std;
                (-0.5 * z * z).exp() / (std * (2.0 * PI).sqrt())
            }
            Distribution::TruncatedNormal(tn) => tn.pdf(x),
            Distribution::GaussianMixture { components } => components
                .iter()
                .map(|c| c.weight * c.component.pdf(x))
                .sum(),
            Distribution::Uniform { lower, upper } => {
                if x >= *lower && x <= *upper {
                    1.0 / (upper - lower)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        match self {
            Distribution::Normal { mean, std } => {
                let z = (x - mean) / std;
                -0.5 * z * z - std.ln() - LN_SQRT_2PI
            }
            Distribution::TruncatedNormal(tn) => tn.log_pdf(x),
            Distribution::GaussianMixture { components } => {
                let terms: Vec<f64> = components
                    .iter()
                    .map(|c| c.weight.ln() + c.component.log_pdf(x))
                    .collect();
                let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if max == f64::NEG_INFINITY {
                    return max;
                }
                max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
            }
            Distribution::Uniform { lower, upper } => {
                if x >= *lower && x <= *upper {
                    -(upper - lower).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// CDF of the distribution (before any restriction to a parameter range).
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Distribution::Normal { mean, std } => std_normal_cdf((x - mean) / std),
            Distribution::TruncatedNormal(tn) => tn.cdf(x),
            Distribution::GaussianMixture { components } => components
                .iter()
                .map(|c| c.weight * c.component.cdf(x))
                .sum(),
            Distribution::Uniform { lower, upper } => ((x - lower) / (upper - lower)).clamp(0.0, 1.0),
        }
    }

    /// Draws from the distribution conditioned on `[lo, hi]`.
    pub fn sample_within<R: Rng + ?Sized>(&self, lo: f64, hi: f64, rng: &mut R) -> f64 {
        match self {
            Distribution::Normal { mean, std } => {
                let tn = TruncatedNormal {
                    mean: *mean,
                    std: *std,
                    lower: lo,
                    upper: hi,
                };
                tn.sample_within(lo, hi, rng)
            }
            Distribution::TruncatedNormal(tn) => tn.sample_within(lo, hi, rng),
            Distribution::GaussianMixture { components } => {
                let masses: Vec<f64> = components
                    .iter()
                    .map(|c| c.weight * c.component.mass_on(lo, hi) / c.component.mass())
                    .collect();
                let total: f64 = masses.iter().sum();
                let mut u = rng.random::<f64>() * total;
                let mut pick = components.len() - 1;
                for (k, m) in masses.iter().enumerate() {
                    if u < *m {
                        pick = k;
                        break;
                    }
                    u -= m;
                }
                components[pick].component.sample_within(lo, hi, rng)
            }
            Distribution::Uniform { lower, upper } => {
                let (lo, hi) = (lo.max(*lower), hi.min(*upper));
                (lo + rng.random::<f64>() * (hi - lo)).clamp(lo, hi)
            }
        }
    }
}

/// A named operational parameter: its range in problem units and its
/// marginal likelihood.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperationalParameter {
    pub name: String,
    pub range: Interval,
    pub distribution: Distribution,
}

impl OperationalParameter {
    pub fn new(name: impl Into<String>, range: (f64, f64), distribution: Distribution) -> Result<Self> {
        let range = Interval::new(range.0, range.1)?;
        distribution.validate()?;
        Ok(OperationalParameter {
            name: name.into(),
            range,
            distribution,
        })
    }
}

/// Product of independent per-dimension distributions, `p(x) = Π p_i(x_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperationalModel {
    pub parameters: Vec<OperationalParameter>,
}

impl OperationalModel {
    pub fn new(parameters: Vec<OperationalParameter>) -> Result<Self> {
        if parameters.is_empty() {
            return Err(BsvError::InvalidParameter("model has no parameters".into()));
        }
        for p in &parameters {
            Interval::new(p.range.lo, p.range.hi)?;
            p.distribution.validate()?;
        }
        Ok(OperationalModel { parameters })
    }

    pub fn dim(&self) -> usize {
        self.parameters.len()
    }

    pub fn space(&self) -> DesignSpace {
        DesignSpace::new(self.parameters.iter().map(|p| p.range).collect())
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(BsvError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn density(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.density_unchecked(x))
    }

    pub(crate) fn density_unchecked(&self, x: &[f64]) -> f64 {
        self.parameters
            .iter()
            .zip(x)
            .map(|(p, &v)| p.distribution.pdf(v))
            .product()
    }

    /// Sum of per-dimension log densities; `-inf` outside the support.
    pub fn log_density_or_neg_inf(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self
            .parameters
            .iter()
            .zip(x)
            .map(|(p, &v)| p.distribution.log_pdf(v))
            .sum())
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let lp = self.log_density_or_neg_inf(x)?;
        if lp == f64::NEG_INFINITY {
            return Err(BsvError::OutOfSupport);
        }
        Ok(lp)
    }

    /// Draws a point inside the box. Each coordinate follows its
    /// distribution conditioned on the parameter range.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DesignPoint {
        self.parameters
            .iter()
            .map(|p| p.distribution.sample_within(p.range.lo, p.range.hi, rng))
            .collect::<Vec<_>>()
            .into()
    }
}
