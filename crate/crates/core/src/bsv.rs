//! The Bayesian safety validation loop: acquire a batch, evaluate the
//! system, refit the surrogate, repeat; then read off falsifying inputs, the
//! most likely failure, and the failure probability estimate.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::acquisition::{fsar_batch, AcquisitionConfig, Source};
use crate::error::{BsvError, Result};
use crate::estimator::{estimate_pfail, EstimateMode, EstimatePoint};
use crate::field::{GridPosterior, SurrogateField};
use crate::gp::{GpSurrogate, KernelParams, LinkParams, DEFAULT_JITTER};
use crate::grid::ProposalGrid;
use crate::operational::OperationalModel;
use crate::space::DesignPoint;
use crate::systems::BlackBox;

/// One system evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub x: DesignPoint,
    pub y: f64,
    pub iteration: usize,
    pub source: Source,
}

impl EvaluationRecord {
    pub fn is_failure(&self) -> bool {
        self.y >= 0.5
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsvConfig {
    pub iterations: usize,
    #[serde(default)]
    pub acquisition: AcquisitionConfig,
    #[serde(default)]
    pub kernel: KernelParams,
    #[serde(default)]
    pub link: LinkParams,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    #[serde(default)]
    pub mode: EstimateMode,
}

fn default_jitter() -> f64 {
    DEFAULT_JITTER
}

impl BsvConfig {
    pub fn new(iterations: usize) -> Self {
        BsvConfig {
            iterations,
            acquisition: AcquisitionConfig::default(),
            kernel: KernelParams::default(),
            link: LinkParams::default(),
            jitter: DEFAULT_JITTER,
            mode: EstimateMode::Hard,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BsvResult {
    pub records: Vec<EvaluationRecord>,
    pub failures: Vec<DesignPoint>,
    pub most_likely_failure: Option<DesignPoint>,
    pub pfail_estimate: f64,
    pub mode: EstimateMode,
    pub surrogate: GpSurrogate,
    /// Surrogate over the grid at the end of the run.
    pub field: SurrogateField,
    pub history: Vec<EstimatePoint>,
}

/// Resumable state of a run. [`run_bsv`] drives it to completion; callers
/// that need the partial log after a failed evaluation can step it
/// themselves.
pub struct BsvRun<'a> {
    grid: &'a ProposalGrid,
    model: &'a OperationalModel,
    config: BsvConfig,
    gp: GpSurrogate,
    tracker: GridPosterior,
    records: Vec<EvaluationRecord>,
    history: Vec<EstimatePoint>,
    t: usize,
}

impl<'a> BsvRun<'a> {
    pub fn new(model: &'a OperationalModel, grid: &'a ProposalGrid, config: BsvConfig) -> Result<Self> {
        config.acquisition.validate()?;
        if model.dim() != grid.dim() {
            return Err(BsvError::DimensionMismatch {
                expected: grid.dim(),
                got: model.dim(),
            });
        }
        let gp = GpSurrogate::fit(&[], &[], config.kernel, config.link, config.jitter)?;
        let tracker = GridPosterior::new(&gp, grid)?;
        Ok(BsvRun {
            grid,
            model,
            config,
            gp,
            tracker,
            records: Vec::new(),
            history: Vec::new(),
            t: 0,
        })
    }

    pub fn records(&self) -> &[EvaluationRecord] {
        &self.records
    }

    pub fn iteration(&self) -> usize {
        self.t
    }

    pub fn surrogate(&self) -> &GpSurrogate {
        &self.gp
    }

    pub fn field(&self) -> &SurrogateField {
        self.tracker.field()
    }

    pub fn history(&self) -> &[EstimatePoint] {
        &self.history
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.config.iterations
    }

    /// One iteration: acquire against the current surrogate, evaluate the
    /// whole batch, refit once.
    pub fn step<R: Rng + ?Sized>(&mut self, system: &mut dyn BlackBox, rng: &mut R) -> Result<()> {
        let t = self.t + 1;
        let batch = fsar_batch(self.tracker.field(), self.grid, t, &self.config.acquisition, rng)?;
        let xs: Vec<&[f64]> = batch.points.iter().map(|a| &a.point[..]).collect();
        let ys = system.evaluate_points(&xs)?;
        let inputs: Vec<DesignPoint> = batch.points.iter().map(|a| a.point.clone()).collect();
        let new_gp = self.gp.extend(&inputs, &ys)?;
        self.tracker.update(self.grid, &self.gp, &new_gp, &batch.indices())?;
        self.gp = new_gp;
        for (a, &y) in batch.points.iter().zip(&ys) {
            self.records.push(EvaluationRecord {
                x: a.point.clone(),
                y,
                iteration: t,
                source: a.source,
            });
        }
        self.history.push(EstimatePoint {
            iteration: t,
            num_evaluations: self.records.len(),
            estimate: estimate_pfail(self.tracker.field(), self.grid, self.config.mode)?,
            mode: self.config.mode,
        });
        self.t = t;
        Ok(())
    }

    pub fn finish(self) -> Result<BsvResult> {
        let pfail_estimate = match self.history.last() {
            Some(h) => h.estimate,
            None => estimate_pfail(self.tracker.field(), self.grid, self.config.mode)?,
        };
        Ok(BsvResult {
            failures: falsification(&self.records),
            most_likely_failure: most_likely_failure(&self.records, self.model),
            pfail_estimate,
            mode: self.config.mode,
            surrogate: self.gp,
            field: self.tracker.into_field(),
            history: self.history,
            records: self.records,
        })
    }
}

/// Runs `config.iterations` iterations, evaluating the system once per
/// acquired point.
pub fn run_bsv<R: Rng + ?Sized>(
    system: &mut dyn BlackBox,
    model: &OperationalModel,
    grid: &ProposalGrid,
    config: &BsvConfig,
    rng: &mut R,
) -> Result<BsvResult> {
    if config.iterations == 0 {
        return Err(BsvError::InvalidParameter("at least one iteration is required".into()));
    }
    let mut run = BsvRun::new(model, grid, config.clone())?;
    system.initialize()?;
    while !run.is_done() {
        run.step(system, rng)?;
    }
    run.finish()
}

/// Inputs whose output indicates failure, in evaluation order.
pub fn falsification(records: &[EvaluationRecord]) -> Vec<DesignPoint> {
    records.iter().filter(|r| r.is_failure()).map(|r| r.x.clone()).collect()
}

fn log_density(model: &OperationalModel, x: &[f64]) -> f64 {
    model.log_density_or_neg_inf(x).unwrap_or(f64::NEG_INFINITY)
}

/// The failure of highest operational density; earliest record on ties.
pub fn most_likely_failure(records: &[EvaluationRecord], model: &OperationalModel) -> Option<DesignPoint> {
    top_k_likely_failures(records, model, 1).into_iter().next().map(|(x, _)| x)
}

/// The `k` most likely failures with their densities, most likely first.
/// Ties keep evaluation order.
pub fn top_k_likely_failures(
    records: &[EvaluationRecord],
    model: &OperationalModel,
    k: usize,
) -> Vec<(DesignPoint, f64)> {
    let mut fails: Vec<(f64, &EvaluationRecord)> = records
        .iter()
        .filter(|r| r.is_failure())
        .map(|r| (log_density(model, &r.x), r))
        .collect();
    fails.sort_by(|a, b| b.0.total_cmp(&a.0));
    fails
        .into_iter()
        .take(k)
        .map(|(lp, r)| (r.x.clone(), lp.exp()))
        .collect()
}

/// Writes `x1..xd, y, iteration, source` rows.
pub fn write_records_csv<W: Write>(records: &[EvaluationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let dim = records.first().map_or(0, |r| r.x.dim());
    let mut header: Vec<String> = (1..=dim).map(|d| format!("x{d}")).collect();
    header.extend(["y", "iteration", "source"].map(String::from));
    w.write_record(&header)?;
    for r in records {
        let mut row: Vec<String> = r.x.iter().map(|v| v.to_string()).collect();
        row.push(r.y.to_string());
        row.push(r.iteration.to_string());
        row.push(r.source.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_records_csv`].
pub fn read_records_csv<R: std::io::Read>(input: R) -> Result<Vec<EvaluationRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers()?.clone();
    let dim = headers.iter().filter(|h| h.starts_with('x')).count();
    if headers.len() != dim + 3 {
        return Err(BsvError::InvalidParameter(format!("unexpected records header {headers:?}")));
    }
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| BsvError::InvalidParameter(format!("bad number `{s}`: {e}")))
        };
        let x = (0..dim).map(|d| parse(&row[d])).collect::<Result<Vec<_>>>()?;
        out.push(EvaluationRecord {
            x: x.into(),
            y: parse(&row[dim])?,
            iteration: row[dim + 1]
                .parse()
                .map_err(|e| BsvError::InvalidParameter(format!("bad iteration: {e}")))?,
            source: row[dim + 2].parse()?,
        });
    }
    Ok(out)
}

/// Writes `iteration, num_evaluations, estimate, mode` rows.
pub fn write_history_csv<W: Write>(history: &[EstimatePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for h in history {
        w.serialize(h)?;
    }
    w.flush()?;
    Ok(())
}
