//! Failure search and refinement: uncertainty exploration, boundary
//! refinement, and failure-region sampling over the grid.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{BsvError, Result};
use crate::field::SurrogateField;
use crate::grid::{Categorical, ProposalGrid};
use crate::space::DesignPoint;

/// Where an evaluated point came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Explore,
    Boundary,
    FailureSample,
    Baseline,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Explore => "explore",
            Source::Boundary => "boundary",
            Source::FailureSample => "failure_sample",
            Source::Baseline => "baseline",
        }
    }

    /// Ablation label: 1, 2, 3 for the three acquisitions.
    pub fn number(&self) -> Option<u8> {
        match self {
            Source::Explore => Some(1),
            Source::Boundary => Some(2),
            Source::FailureSample => Some(3),
            Source::Baseline => None,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = BsvError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explore" | "1" => Ok(Source::Explore),
            "boundary" | "2" => Ok(Source::Boundary),
            "failure_sample" | "3" => Ok(Source::FailureSample),
            "baseline" => Ok(Source::Baseline),
            _ => Err(BsvError::Unknown {
                kind: "acquisition",
                name: s.to_string(),
            }),
        }
    }
}

/// Nonempty subset of the three acquisitions, kept in canonical order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Source>", into = "Vec<Source>")]
pub struct AcquisitionSet(Vec<Source>);

impl AcquisitionSet {
    pub fn all() -> Self {
        AcquisitionSet(vec![Source::Explore, Source::Boundary, Source::FailureSample])
    }

    pub fn new(mut sources: Vec<Source>) -> Result<Self> {
        sources.sort();
        sources.dedup();
        if sources.is_empty() || sources.contains(&Source::Baseline) {
            return Err(BsvError::InvalidParameter(
                "acquisition subset must be a nonempty subset of {explore, boundary, failure_sample}".into(),
            ));
        }
        Ok(AcquisitionSet(sources))
    }

    /// The seven nonempty subsets in table order: [1], [2], [3], [1,2],
    /// [2,3], [1,3], [1,2,3].
    pub fn ablation_subsets() -> Vec<AcquisitionSet> {
        use Source::*;
        [
            vec![Explore],
            vec![Boundary],
            vec![FailureSample],
            vec![Explore, Boundary],
            vec![Boundary, FailureSample],
            vec![Explore, FailureSample],
            vec![Explore, Boundary, FailureSample],
        ]
        .into_iter()
        .map(AcquisitionSet)
        .collect()
    }

    pub fn sources(&self) -> &[Source] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, s: Source) -> bool {
        self.0.contains(&s)
    }

    /// Label such as `[1,3]`.
    pub fn label(&self) -> String {
        let nums: Vec<String> = self.0.iter().filter_map(|s| s.number()).map(|n| n.to_string()).collect();
        format!("[{}]", nums.join(","))
    }
}

impl Default for AcquisitionSet {
    fn default() -> Self {
        Self::all()
    }
}

impl TryFrom<Vec<Source>> for AcquisitionSet {
    type Error = BsvError;

    fn try_from(v: Vec<Source>) -> Result<Self> {
        AcquisitionSet::new(v)
    }
}

impl From<AcquisitionSet> for Vec<Source> {
    fn from(s: AcquisitionSet) -> Self {
        s.0
    }
}

impl FromStr for AcquisitionSet {
    type Err = BsvError;

    /// Parses `1,2,3`, `[1,3]` or `explore,failure_sample`.
    fn from_str(s: &str) -> Result<Self> {
        let inner = s.trim().trim_start_matches('[').trim_end_matches(']');
        let sources = inner
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(Source::from_str)
            .collect::<Result<Vec<_>>>()?;
        AcquisitionSet::new(sources)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    /// Weight of `σ̂` in the upper-confidence terms.
    pub lambda: f64,
    #[serde(default)]
    pub active: AcquisitionSet,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            lambda: 0.1,
            active: AcquisitionSet::all(),
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(BsvError::InvalidParameter(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// One acquired grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct Acquired {
    pub source: Source,
    pub index: usize,
    pub point: DesignPoint,
}

/// Points proposed in one iteration, in acquisition order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct AcquisitionBatch {
    pub points: Vec<Acquired>,
}

impl AcquisitionBatch {
    pub fn get(&self, source: Source) -> Option<&Acquired> {
        self.points.iter().find(|a| a.source == source)
    }

    pub fn indices(&self) -> Vec<usize> {
        self.points.iter().map(|a| a.index).collect()
    }
}

/// `μ'(x) = f̂(x)(1 - f̂(x))`, the slope of the sigmoid, peaking at the
/// predicted failure boundary.
#[inline]
pub fn boundary_derivative(f_hat: f64) -> f64 {
    f_hat * (1.0 - f_hat)
}

/// `x'₁ = argmax σ̂(x)`.
pub fn uncertainty_exploration(field: &SurrogateField, grid: &ProposalGrid) -> Result<usize> {
    grid.argmax_scores(&field.stds())
}

/// Operational weight decayed by iteration: `p(x)^{1/t}`, zero off support.
#[inline]
fn decayed_likelihood(log_p: f64, t: usize) -> f64 {
    if log_p == f64::NEG_INFINITY {
        0.0
    } else {
        (log_p / t as f64).exp()
    }
}

/// `(μ'(x) + λσ̂(x)) p(x)^{1/t}` at every node.
pub fn boundary_scores(field: &SurrogateField, grid: &ProposalGrid, t: usize, lambda: f64) -> Vec<f64> {
    let t = t.max(1);
    grid.log_densities()
        .iter()
        .enumerate()
        .map(|(i, &lp)| (boundary_derivative(field.mean(i)) + lambda * field.std(i)) * decayed_likelihood(lp, t))
        .collect()
}

/// `x'₂ = argmax (μ'(x) + λσ̂(x)) p(x)^{1/t}`.
pub fn boundary_refinement(field: &SurrogateField, grid: &ProposalGrid, t: usize, config: &AcquisitionConfig) -> Result<usize> {
    if t == 0 {
        return Err(BsvError::InvalidParameter("iteration index starts at 1".into()));
    }
    grid.argmax_scores(&boundary_scores(field, grid, t, config.lambda))
}

/// Unnormalized failure-region density `ĝ(x) ĥ(x) p(x)` with
/// `ĥ = f̂ + λσ̂` (clipped to `[0, 1]`) and `ĝ = 𝟙{ĥ ≥ 0.5}`.
pub fn failure_weights(field: &SurrogateField, grid: &ProposalGrid, lambda: f64) -> Vec<f64> {
    grid.densities()
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let h = field.mean(i) + lambda * field.std(i);
            if h >= 0.5 {
                h.min(1.0) * p
            } else {
                0.0
            }
        })
        .collect()
}

/// `x'₃ ~ ĝ ĥ p`. When no node is predicted to fail (or the predicted
/// failures carry no operational mass) the draw falls back to `ĥ p`.
pub fn failure_region_sampling<R: Rng + ?Sized>(
    field: &SurrogateField,
    grid: &ProposalGrid,
    config: &AcquisitionConfig,
    rng: &mut R,
) -> Result<usize> {
    let weights = failure_weights(field, grid, config.lambda);
    match Categorical::new(&weights) {
        Ok(c) => Ok(c.sample(rng)),
        Err(BsvError::DegenerateWeights) => {
            let fallback: Vec<f64> = grid
                .densities()
                .iter()
                .enumerate()
                .map(|(i, &p)| (field.mean(i) + config.lambda * field.std(i)).clamp(0.0, 1.0) * p)
                .collect();
            Ok(Categorical::new(&fallback)?.sample(rng))
        }
        Err(e) => Err(e),
    }
}

/// Runs the active acquisitions against one frozen surrogate field.
pub fn fsar_batch<R: Rng + ?Sized>(
    field: &SurrogateField,
    grid: &ProposalGrid,
    t: usize,
    config: &AcquisitionConfig,
    rng: &mut R,
) -> Result<AcquisitionBatch> {
    config.validate()?;
    if t == 0 {
        return Err(BsvError::InvalidParameter("iteration index starts at 1".into()));
    }
    let mut points = Vec::with_capacity(3);
    for &source in config.active.sources() {
        let index = match source {
            Source::Explore => uncertainty_exploration(field, grid)?,
            Source::Boundary => boundary_refinement(field, grid, t, config)?,
            Source::FailureSample => failure_region_sampling(field, grid, config, rng)?,
            Source::Baseline => unreachable!("excluded by AcquisitionSet"),
        };
        points.push(Acquired {
            source,
            index,
            point: grid.design_point(index),
        });
    }
    Ok(AcquisitionBatch { points })
}

/// Writes one row per grid node with the surrogate and all three
/// acquisition surfaces at iteration `t`.
pub fn write_score_surfaces<W: Write>(
    field: &SurrogateField,
    grid: &ProposalGrid,
    t: usize,
    lambda: f64,
    out: W,
) -> Result<()> {
    let boundary = boundary_scores(field, grid, t, lambda);
    let failure = failure_weights(field, grid, lambda);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=grid.dim()).map(|d| format!("x{d}")).collect();
    header.extend(["f_hat", "sigma_hat", "explore", "boundary", "failure_weight"].map(String::from));
    w.write_record(&header)?;
    for (i, x) in grid.points().enumerate() {
        let mut row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        let s = field.std(i);
        row.push(field.mean(i).to_string());
        row.push(s.to_string());
        row.push(s.to_string());
        row.push(boundary[i].to_string());
        row.push(failure[i].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_values() {
        assert_eq!(boundary_derivative(0.5), 0.25);
        assert_eq!(boundary_derivative(0.0), 0.0);
        assert_eq!(boundary_derivative(1.0), 0.0);
        assert!((boundary_derivative(0.9) - 0.09).abs() < 1e-15);
    }

    #[test]
    fn subset_parsing() {
        let s: AcquisitionSet = "[3,1]".parse().unwrap();
        assert_eq!(s.sources(), &[Source::Explore, Source::FailureSample]);
        assert_eq!(s.label(), "[1,3]");
        assert!("".parse::<AcquisitionSet>().is_err());
        assert!("4".parse::<AcquisitionSet>().is_err());
        assert_eq!(AcquisitionSet::ablation_subsets().len(), 7);
        let json = serde_json::to_string(&AcquisitionSet::all()).unwrap();
        assert_eq!(json, r#"["explore","boundary","failure_sample"]"#);
        assert!(serde_json::from_str::<AcquisitionSet>("[]").is_err());
    }
}
