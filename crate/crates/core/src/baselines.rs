//! Reference methods: Monte Carlo, population Monte Carlo, and point
//! selection schemes that share the surrogate and estimator with the main
//! loop.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::acquisition::Source;
use crate::bsv::{falsification, most_likely_failure, BsvConfig, BsvResult, EvaluationRecord};
use crate::error::{BsvError, Result};
use crate::estimator::{estimate_pfail, EstimatePoint};
use crate::field::SurrogateField;
use crate::gp::GpSurrogate;
use crate::grid::{Categorical, ProposalGrid};
use crate::operational::OperationalModel;
use crate::sobol::Sobol;
use crate::space::{DesignPoint, DesignSpace};
use crate::systems::BlackBox;

/// Estimate after a given number of system evaluations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateTrace {
    pub num_samples: usize,
    pub estimate: f64,
}

/// Output of the sampling estimators.
#[derive(Clone, Debug)]
pub struct SamplingResult {
    pub estimate: f64,
    pub history: Vec<EstimateTrace>,
    /// Every evaluated sample, in draw order.
    pub records: Vec<EvaluationRecord>,
}

fn sampled(x: DesignPoint, y: f64, iteration: usize) -> EvaluationRecord {
    EvaluationRecord {
        x,
        y,
        iteration,
        source: Source::Baseline,
    }
}

const CHUNK: usize = 4096;

fn evaluate_all(system: &mut dyn BlackBox, xs: &[DesignPoint]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(xs.len());
    for chunk in xs.chunks(CHUNK) {
        let refs: Vec<&[f64]> = chunk.iter().map(|x| &x[..]).collect();
        out.extend(system.evaluate_points(&refs)?);
    }
    Ok(out)
}

/// Plain Monte Carlo: `budget` draws from the operational model, running
/// mean of the system output after every draw.
pub fn mc_estimate<R: Rng + ?Sized>(
    system: &mut dyn BlackBox,
    model: &OperationalModel,
    budget: usize,
    rng: &mut R,
) -> Result<SamplingResult> {
    if budget == 0 {
        return Err(BsvError::InvalidParameter("Monte Carlo budget must be positive".into()));
    }
    system.initialize()?;
    let mut history = Vec::with_capacity(budget);
    let mut records = Vec::with_capacity(budget);
    let mut sum = 0.0;
    let mut done = 0;
    while done < budget {
        let n = CHUNK.min(budget - done);
        let xs: Vec<DesignPoint> = (0..n).map(|_| model.sample(rng)).collect();
        let ys = evaluate_all(system, &xs)?;
        for (x, y) in xs.into_iter().zip(ys) {
            records.push(sampled(x, y, 1));
            sum += y;
            done += 1;
            history.push(EstimateTrace {
                num_samples: done,
                estimate: sum / done as f64,
            });
        }
    }
    Ok(SamplingResult {
        estimate: sum / budget as f64,
        history,
        records,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmcConfig {
    /// Particles, and samples drawn in the first iteration.
    pub samples_per_iteration: usize,
    pub max_iterations: usize,
    /// Kernel standard deviation as a fraction of each axis width.
    pub kernel_bandwidth: f64,
}

impl Default for PmcConfig {
    fn default() -> Self {
        PmcConfig {
            samples_per_iteration: 50,
            max_iterations: 100,
            kernel_bandwidth: 0.1,
        }
    }
}

impl PmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_iteration < 2 {
            return Err(BsvError::InvalidParameter("PMC needs at least two particles".into()));
        }
        if self.max_iterations == 0 {
            return Err(BsvError::InvalidParameter("PMC needs at least one iteration".into()));
        }
        if !(self.kernel_bandwidth > 0.0) {
            return Err(BsvError::InvalidParameter("PMC bandwidth must be positive".into()));
        }
        Ok(())
    }

    /// Samples drawn over the whole run: `N_q T (T + 1) / 2`.
    pub fn total_samples(&self) -> usize {
        self.samples_per_iteration * self.max_iterations * (self.max_iterations + 1) / 2
    }
}

/// Equal-weight Gaussian mixture around the particle centers.
struct KernelMixture {
    centers: Vec<DesignPoint>,
    bandwidth: Vec<f64>,
}

impl KernelMixture {
    fn log_pdf(&self, x: &[f64]) -> f64 {
        let norm: f64 = self
            .bandwidth
            .iter()
            .map(|h| -(h * (2.0 * std::f64::consts::PI).sqrt()).ln())
            .sum();
        let terms: Vec<f64> = self
            .centers
            .iter()
            .map(|c| {
                let q: f64 = x
                    .iter()
                    .zip(c.iter())
                    .zip(&self.bandwidth)
                    .map(|((a, b), h)| ((a - b) / h).powi(2))
                    .sum();
                norm - 0.5 * q
            })
            .collect();
        let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            return m;
        }
        m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln() - (self.centers.len() as f64).ln()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DesignPoint {
        let c = &self.centers[rng.random_range(0..self.centers.len())];
        c.iter()
            .zip(&self.bandwidth)
            .map(|(&m, &h)| Normal::new(m, h).expect("positive bandwidth").sample(rng))
            .collect::<Vec<_>>()
            .into()
    }
}

/// Population Monte Carlo with self-normalized importance sampling.
///
/// The first population is drawn from the operational model itself. Each
/// later iteration `t` draws `N_q t` samples from a Gaussian kernel mixture
/// around the current particles, weights them by `p/q`, and resamples the
/// `N_q` particles in proportion to `p f / q`. The estimate pools every
/// weighted sample drawn so far.
pub fn pmc_estimate<R: Rng + ?Sized>(
    system: &mut dyn BlackBox,
    model: &OperationalModel,
    config: &PmcConfig,
    rng: &mut R,
) -> Result<SamplingResult> {
    config.validate()?;
    system.initialize()?;
    let space = model.space();
    let bandwidth: Vec<f64> = space.bounds.iter().map(|b| config.kernel_bandwidth * b.width()).collect();
    let nq = config.samples_per_iteration;
    let mut proposal: Option<KernelMixture> = None;
    let mut centers: Vec<DesignPoint> = Vec::new();
    let mut num = 0.0;
    let mut den = 0.0;
    let mut drawn = 0;
    let mut records = Vec::new();
    let mut history = Vec::with_capacity(config.max_iterations);
    for t in 1..=config.max_iterations {
        let n = nq * t;
        let xs: Vec<DesignPoint> = match &proposal {
            None => (0..n).map(|_| model.sample(rng)).collect(),
            Some(q) => (0..n).map(|_| q.sample(rng)).collect(),
        };
        // log weights; samples outside the box carry no operational mass
        let log_w: Vec<f64> = xs
            .iter()
            .map(|x| {
                if !space.contains(x) {
                    return f64::NEG_INFINITY;
                }
                let lp = model.log_density_or_neg_inf(x).unwrap_or(f64::NEG_INFINITY);
                match &proposal {
                    // q = p: likelihood ratio one wherever p > 0
                    None if lp > f64::NEG_INFINITY => 0.0,
                    None => f64::NEG_INFINITY,
                    Some(q) => lp - q.log_pdf(x),
                }
            })
            .collect();
        let inside: Vec<DesignPoint> = xs
            .iter()
            .zip(&log_w)
            .filter(|(_, w)| **w > f64::NEG_INFINITY)
            .map(|(x, _)| x.clone())
            .collect();
        let ys_inside = evaluate_all(system, &inside)?;
        records.extend(inside.into_iter().zip(&ys_inside).map(|(x, &y)| sampled(x, y, t)));
        let mut ys = ys_inside.into_iter();
        let w: Vec<f64> = log_w.iter().map(|lw| lw.exp()).collect();
        let mut fw = vec![0.0; n];
        for (i, lw) in log_w.iter().enumerate() {
            if *lw > f64::NEG_INFINITY {
                let y = ys.next().expect("one output per inside sample");
                num += w[i] * y;
                den += w[i];
                fw[i] = w[i] * y;
            }
        }
        drawn += n;
        history.push(EstimateTrace {
            num_samples: drawn,
            estimate: if den > 0.0 { num / den } else { 0.0 },
        });
        // resample particles by p f / q; keep the old set if no sample failed
        match Categorical::new(&fw) {
            Ok(cat) => {
                centers = (0..nq).map(|_| xs[cat.sample(rng)].clone()).collect();
            }
            Err(BsvError::DegenerateWeights) => {
                if centers.is_empty() {
                    centers = (0..nq).map(|_| model.sample(rng)).collect();
                }
            }
            Err(e) => return Err(e),
        }
        proposal = Some(KernelMixture {
            centers: centers.clone(),
            bandwidth: bandwidth.clone(),
        });
    }
    Ok(SamplingResult {
        estimate: history.last().map_or(0.0, |h| h.estimate),
        history,
        records,
    })
}

/// Space-filling point selection schemes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    Lhs,
    Sobol,
    Grid,
    Uniform,
}

impl Selector {
    pub fn all() -> [Selector; 4] {
        [Selector::Lhs, Selector::Sobol, Selector::Grid, Selector::Uniform]
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Selector::Lhs => "lhs",
            Selector::Sobol => "sobol",
            Selector::Grid => "grid",
            Selector::Uniform => "uniform",
        }
    }

    pub fn select<R: Rng + ?Sized>(&self, space: &DesignSpace, count: usize, rng: &mut R) -> Result<Vec<DesignPoint>> {
        match self {
            Selector::Lhs => select_lhs(space, count, rng),
            Selector::Sobol => select_sobol(space, count),
            Selector::Grid => select_grid(space, count),
            Selector::Uniform => select_uniform(space, count, rng),
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Selector {
    type Err = BsvError;

    fn from_str(s: &str) -> Result<Self> {
        Selector::all()
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| BsvError::Unknown {
                kind: "selector",
                name: s.to_string(),
            })
    }
}

fn check_count(count: usize) -> Result<()> {
    if count == 0 {
        return Err(BsvError::InvalidParameter("selection count must be positive".into()));
    }
    Ok(())
}

/// Latin hypercube: one point per stratum of width `(b - a) / count` on
/// every axis.
pub fn select_lhs<R: Rng + ?Sized>(space: &DesignSpace, count: usize, rng: &mut R) -> Result<Vec<DesignPoint>> {
    check_count(count)?;
    let mut coords = vec![vec![0.0; space.dim()]; count];
    for (d, b) in space.bounds.iter().enumerate() {
        let mut strata: Vec<usize> = (0..count).collect();
        strata.shuffle(rng);
        for (i, &s) in strata.iter().enumerate() {
            let u = (s as f64 + rng.random::<f64>()) / count as f64;
            coords[i][d] = (b.lo + u * b.width()).min(b.hi);
        }
    }
    Ok(coords.into_iter().map(DesignPoint::from).collect())
}

/// The first `count` Sobol points after the origin, mapped to the box.
pub fn select_sobol(space: &DesignSpace, count: usize) -> Result<Vec<DesignPoint>> {
    check_count(count)?;
    let mut s = Sobol::new(space.dim())?;
    Ok((0..count).map(|_| space.from_unit(&s.next_point())).collect())
}

/// Lattice with `⌈count^{1/d}⌉` nodes per axis (endpoints included),
/// truncated to `count` points in lexicographic order.
pub fn select_grid(space: &DesignSpace, count: usize) -> Result<Vec<DesignPoint>> {
    check_count(count)?;
    let dim = space.dim();
    let mut k = (count as f64).powf(1.0 / dim as f64).round() as usize;
    while k.pow(dim as u32) < count {
        k += 1;
    }
    while k > 1 && (k - 1).pow(dim as u32) >= count {
        k -= 1;
    }
    let axis = |i: usize| if k == 1 { 0.5 } else { i as f64 / (k - 1) as f64 };
    let mut out = Vec::with_capacity(count);
    for n in 0..count {
        let mut rem = n;
        let mut u = vec![0.0; dim];
        for d in (0..dim).rev() {
            u[d] = axis(rem % k);
            rem /= k;
        }
        out.push(space.from_unit(&u));
    }
    Ok(out)
}

/// Independent uniform draws over the box.
pub fn select_uniform<R: Rng + ?Sized>(space: &DesignSpace, count: usize, rng: &mut R) -> Result<Vec<DesignPoint>> {
    check_count(count)?;
    Ok((0..count)
        .map(|_| {
            let u: Vec<f64> = (0..space.dim()).map(|_| rng.random::<f64>()).collect();
            space.from_unit(&u)
        })
        .collect())
}

/// Evaluates the system at `points`, fits one surrogate to all of them,
/// and estimates the failure probability on the grid.
///
/// The returned field carries the posterior mean only; its variance is
/// left at the prior.
pub fn run_selection_baseline(
    system: &mut dyn BlackBox,
    model: &OperationalModel,
    grid: &ProposalGrid,
    points: &[DesignPoint],
    config: &BsvConfig,
) -> Result<BsvResult> {
    system.initialize()?;
    let ys = evaluate_all(system, points)?;
    let gp = GpSurrogate::fit(points, &ys, config.kernel, config.link, config.jitter)?;
    let field = SurrogateField::mean_only(&gp, grid);
    let estimate = estimate_pfail(&field, grid, config.mode)?;
    let records: Vec<EvaluationRecord> = points
        .iter()
        .zip(&ys)
        .map(|(x, &y)| EvaluationRecord {
            x: x.clone(),
            y,
            iteration: 1,
            source: Source::Baseline,
        })
        .collect();
    Ok(BsvResult {
        failures: falsification(&records),
        most_likely_failure: most_likely_failure(&records, model),
        pfail_estimate: estimate,
        mode: config.mode,
        surrogate: gp,
        field,
        history: vec![EstimatePoint {
            iteration: 1,
            num_evaluations: records.len(),
            estimate,
            mode: config.mode,
        }],
        records,
    })
}
