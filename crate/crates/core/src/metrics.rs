//! Safety-validation metrics: failure rate, most-likely-failure density,
//! relative estimation error, and input/output coverage.

use serde::{Deserialize, Serialize};

use crate::bsv::{most_likely_failure, EvaluationRecord};
use crate::error::{BsvError, Result};
use crate::estimator::hard_label;
use crate::field::SurrogateField;
use crate::grid::ProposalGrid;
use crate::operational::OperationalModel;
use crate::space::DesignSpace;

/// Default nodes per axis of the input-coverage grid.
pub const COVERAGE_RESOLUTION: usize = 50;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub r_fail: f64,
    pub l_star: Option<f64>,
    pub delta_fail: Option<f64>,
    pub c_input: f64,
    pub c_output: Option<f64>,
}

/// Fraction of evaluations that failed.
pub fn failure_rate(records: &[EvaluationRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(BsvError::EmptyRecords);
    }
    let n = records.iter().filter(|r| r.is_failure()).count();
    Ok(n as f64 / records.len() as f64)
}

/// `L* = max p(x_i) 𝟙{y_i}`; `None` without failures.
pub fn max_failure_likelihood(records: &[EvaluationRecord], model: &OperationalModel) -> Option<f64> {
    most_likely_failure(records, model).map(|x| model.density(&x).unwrap_or(0.0))
}

/// `|P - P̂| / P`.
pub fn relative_error(p_true: f64, p_est: f64) -> Result<f64> {
    if p_true == 0.0 {
        return Err(BsvError::RelativeErrorUndefined);
    }
    Ok((p_true - p_est).abs() / p_true)
}

/// Dispersion coverage `1 - (1/δ) Σ_j min(d_j, δ) / n` over an `m^d` grid
/// on the normalized box, where `d_j` is the distance from grid node `j` to
/// the nearest point of `xs`. Empty `xs` gives 0.
pub fn input_coverage<P: AsRef<[f64]>>(xs: &[P], space: &DesignSpace, m: usize, delta: f64) -> Result<f64> {
    if m < 2 {
        return Err(BsvError::InvalidParameter("coverage grid needs at least 2 nodes per axis".into()));
    }
    if !(delta > 0.0) {
        return Err(BsvError::InvalidParameter("coverage delta must be positive".into()));
    }
    if xs.is_empty() {
        return Ok(0.0);
    }
    let dim = space.dim();
    let units: Vec<Vec<f64>> = xs.iter().map(|x| space.to_unit(x.as_ref())).collect();
    let n = m.pow(dim as u32);
    let mut node = vec![0.0; dim];
    let mut total = 0.0;
    for j in 0..n {
        let mut rem = j;
        for d in (0..dim).rev() {
            node[d] = (rem % m) as f64 / (m - 1) as f64;
            rem /= m;
        }
        let mut best = f64::INFINITY;
        for u in &units {
            let d2: f64 = u.iter().zip(&node).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best {
                best = d2;
            }
        }
        total += best.sqrt().min(delta);
    }
    Ok((1.0 - total / (delta * n as f64)).clamp(0.0, 1.0))
}

/// [`input_coverage`] with `m = 50` and `δ = 1 / (m - 1)`.
pub fn input_coverage_default<P: AsRef<[f64]>>(xs: &[P], space: &DesignSpace) -> Result<f64> {
    let m = COVERAGE_RESOLUTION;
    input_coverage(xs, space, m, 1.0 / (m - 1) as f64)
}

/// Fraction of grid nodes where the surrogate's hard label matches
/// `labels` (the true system's hard labels on the same grid).
pub fn output_coverage(field: &SurrogateField, labels: &[f64]) -> Result<f64> {
    if field.len() != labels.len() {
        return Err(BsvError::DimensionMismatch {
            expected: field.len(),
            got: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(BsvError::EmptyRecords);
    }
    let agree = (0..field.len())
        .filter(|&i| hard_label(field.mean(i)) == hard_label(labels[i]))
        .count();
    Ok(agree as f64 / labels.len() as f64)
}

/// Assembles a [`MetricReport`]. Pass ground truth (`P_fail` and the true
/// grid labels) when the system is cheap enough to sweep.
pub fn metric_report(
    records: &[EvaluationRecord],
    model: &OperationalModel,
    estimate: f64,
    field: Option<&SurrogateField>,
    truth: Option<(f64, &[f64])>,
    grid: Option<&ProposalGrid>,
) -> Result<MetricReport> {
    let xs: Vec<&[f64]> = records.iter().map(|r| &r.x[..]).collect();
    let space = grid.map_or_else(|| model.space(), |g| g.space().clone());
    let (delta_fail, c_output) = match (truth, field) {
        (Some((p, labels)), Some(f)) => (Some(relative_error(p, estimate)?), Some(output_coverage(f, labels)?)),
        (Some((p, _)), None) => (Some(relative_error(p, estimate)?), None),
        _ => (None, None),
    };
    Ok(MetricReport {
        r_fail: failure_rate(records)?,
        l_star: max_failure_likelihood(records, model),
        delta_fail,
        c_input: input_coverage_default(&xs, &space)?,
        c_output,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::Source;
    use crate::space::Interval;

    fn rec(y: f64) -> EvaluationRecord {
        EvaluationRecord {
            x: vec![0.0].into(),
            y,
            iteration: 1,
            source: Source::Explore,
        }
    }

    #[test]
    fn rates() {
        let mut r: Vec<EvaluationRecord> = (0..571).map(|_| rec(1.0)).collect();
        r.extend((0..428).map(|_| rec(0.0)));
        assert!((failure_rate(&r).unwrap() - 571.0 / 999.0).abs() < 1e-15);
        assert!(failure_rate(&[]).is_err());
    }

    #[test]
    fn relative_errors() {
        assert_eq!(relative_error(0.01, 0.02).unwrap(), 1.0);
        assert!((relative_error(0.004, 0.0039).unwrap() - 0.025).abs() < 1e-12);
        assert!(relative_error(0.0, 0.1).is_err());
    }

    #[test]
    fn coverage_extremes() {
        let space = DesignSpace::new(vec![Interval::new(0.0, 1.0).unwrap(); 2]);
        let m = 5;
        let delta = 0.25;
        let full: Vec<Vec<f64>> = (0..25).map(|j| vec![(j / 5) as f64 / 4.0, (j % 5) as f64 / 4.0]).collect();
        assert_eq!(input_coverage(&full, &space, m, delta).unwrap(), 1.0);
        let far = [vec![0.125, 0.125]];
        // the nearest node is 0.177 away, under δ; shrink δ below that
        assert_eq!(input_coverage(&far, &space, m, 0.1).unwrap(), 0.0);
        assert_eq!(input_coverage::<Vec<f64>>(&[], &space, m, delta).unwrap(), 0.0);
    }
}
