//! Likelihood-weighted failure probability estimates over the proposal grid.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{BsvError, Result};
use crate::field::SurrogateField;
use crate::grid::{pairwise_sum, ProposalGrid};
use crate::systems::BlackBox;

/// How the surrogate enters the estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMode {
    /// `𝟙{f̂ ≥ 0.5}`.
    #[default]
    Hard,
    /// `f̂` itself.
    Soft,
}

impl EstimateMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimateMode::Hard => "hard",
            EstimateMode::Soft => "soft",
        }
    }
}

impl fmt::Display for EstimateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimateMode {
    type Err = BsvError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(EstimateMode::Hard),
            "soft" => Ok(EstimateMode::Soft),
            _ => Err(BsvError::Unknown {
                kind: "estimate mode",
                name: s.to_string(),
            }),
        }
    }
}

/// `wᵀv / Σw` with `w` the grid densities. Both sums are pairwise and run
/// in node order, so the result is reproducible bit for bit.
pub fn weighted_mean(grid: &ProposalGrid, values: &[f64]) -> Result<f64> {
    if values.len() != grid.len() {
        return Err(BsvError::DimensionMismatch {
            expected: grid.len(),
            got: values.len(),
        });
    }
    let total = grid.total_density();
    if !(total > 0.0) {
        return Err(BsvError::NoMassOnGrid);
    }
    let wv: Vec<f64> = grid.densities().iter().zip(values).map(|(w, v)| w * v).collect();
    Ok((pairwise_sum(&wv) / total).clamp(0.0, 1.0))
}

/// Per-node values entering the estimate.
pub fn estimate_values(field: &SurrogateField, mode: EstimateMode) -> Vec<f64> {
    (0..field.len())
        .map(|i| {
            let f = field.mean(i);
            match mode {
                EstimateMode::Hard => hard_label(f),
                EstimateMode::Soft => f,
            }
        })
        .collect()
}

#[inline]
pub fn hard_label(y: f64) -> f64 {
    if y >= 0.5 {
        1.0
    } else {
        0.0
    }
}

/// `P̂_fail ≈ Σ p(x_i) v_i / Σ p(x_i)` over the grid.
pub fn estimate_pfail(field: &SurrogateField, grid: &ProposalGrid, mode: EstimateMode) -> Result<f64> {
    weighted_mean(grid, &estimate_values(field, mode))
}

/// The general importance-sampling form `(1/n) Σ (p_i / q_i) v_i`.
pub fn estimate_pfail_generic(values: &[f64], p: &[f64], q: &[f64]) -> Result<f64> {
    if values.len() != p.len() || values.len() != q.len() {
        return Err(BsvError::DimensionMismatch {
            expected: values.len(),
            got: if p.len() != values.len() { p.len() } else { q.len() },
        });
    }
    if values.is_empty() {
        return Err(BsvError::EmptyRecords);
    }
    let mut terms = Vec::with_capacity(values.len());
    for (i, ((&v, &pi), &qi)) in values.iter().zip(p).zip(q).enumerate() {
        if qi <= 0.0 {
            if v * pi != 0.0 {
                return Err(BsvError::ProposalExcludesSupport(i));
            }
            terms.push(0.0);
        } else {
            terms.push(pi / qi * v);
        }
    }
    Ok(pairwise_sum(&terms) / values.len() as f64)
}

/// Hard labels of the true system at every grid node.
pub fn true_labels(system: &mut dyn BlackBox, grid: &ProposalGrid) -> Result<Vec<f64>> {
    let info = system.info();
    if info.expensive {
        return Err(BsvError::ExpensiveSystem(info.name));
    }
    let mut labels = Vec::with_capacity(grid.len());
    let chunk = 4096;
    let mut start = 0;
    while start < grid.len() {
        let end = (start + chunk).min(grid.len());
        let xs: Vec<&[f64]> = (start..end).map(|i| grid.point(i)).collect();
        labels.extend(system.evaluate_points(&xs)?.into_iter().map(hard_label));
        start = end;
    }
    Ok(labels)
}

/// Likelihood-weighted mean of the true hard labels over the grid.
pub fn ground_truth_pfail(system: &mut dyn BlackBox, grid: &ProposalGrid) -> Result<f64> {
    weighted_mean(grid, &true_labels(system, grid)?)
}

/// One row of the per-iteration estimate history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatePoint {
    pub iteration: usize,
    pub num_evaluations: usize,
    pub estimate: f64,
    pub mode: EstimateMode,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generic_two_point() {
        let v = estimate_pfail_generic(&[1.0, 0.0], &[0.2, 0.8], &[0.5, 0.5]).unwrap();
        assert!((v - 0.2).abs() < 1e-15);
    }

    #[test]
    fn generic_p_equals_q_is_mean() {
        let v = estimate_pfail_generic(&[1.0, 0.0, 1.0, 1.0], &[0.3; 4], &[0.3; 4]).unwrap();
        assert_eq!(v, 0.75);
        assert_eq!(estimate_pfail_generic(&[0.0; 3], &[1.0; 3], &[2.0; 3]).unwrap(), 0.0);
    }

    #[test]
    fn generic_excluded_support() {
        assert!(matches!(
            estimate_pfail_generic(&[1.0], &[0.5], &[0.0]),
            Err(BsvError::ProposalExcludesSupport(0))
        ));
        assert_eq!(estimate_pfail_generic(&[0.0], &[0.5], &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("soft".parse::<EstimateMode>().unwrap(), EstimateMode::Soft);
        assert!("x".parse::<EstimateMode>().is_err());
    }
}
