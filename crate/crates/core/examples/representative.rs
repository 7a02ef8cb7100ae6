//! Full run on the Booth-threshold problem: 333 iterations (999 system
//! evaluations) followed by the metric suite against the grid ground truth.
//!
//!     cargo run --release --example representative -- [seed] [iterations]

use bsv::bsv::{run_bsv, BsvConfig};
use bsv::estimator::ground_truth_pfail;
use bsv::grid::{ProposalGrid, DEFAULT_RESOLUTION};
use bsv::systems::{Problem, ToyKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() -> bsv::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(1, |s| s.parse().expect("seed"));
    let iterations: usize = args.next().map_or(333, |s| s.parse().expect("iterations"));

    let problem = Problem::toy(ToyKind::Representative);
    let grid = ProposalGrid::build_uniform(&problem.model.space(), &problem.model, DEFAULT_RESOLUTION)?;
    let truth = ground_truth_pfail(&mut problem.system(), &grid)?;

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let result = run_bsv(&mut problem.system(), &problem.model, &grid, &BsvConfig::new(iterations), &mut rng)?;
    let elapsed = start.elapsed();

    println!("ground truth P_fail  {truth:.6e}");
    println!("estimate             {:.6e}", result.pfail_estimate);
    println!("relative error       {:.5}", (truth - result.pfail_estimate).abs() / truth);
    println!("failures found       {} / {}", result.failures.len(), result.records.len());
    if let Some(x) = &result.most_likely_failure {
        println!("most likely failure  ({:.4}, {:.4})", x[0], x[1]);
    }
    println!("elapsed              {:.1?}", elapsed);
    Ok(())
}
