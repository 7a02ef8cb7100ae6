//! Metric suite on a finished run: falsification rate, most likely
//! failures, input dispersion coverage and surrogate output coverage.
//!
//!     cargo run --release --example coverage -- [problem]

use bsv::bsv::{run_bsv, top_k_likely_failures, BsvConfig};
use bsv::estimator::{true_labels, weighted_mean};
use bsv::grid::ProposalGrid;
use bsv::metrics::{failure_rate, input_coverage_default, max_failure_likelihood, output_coverage, relative_error};
use bsv::systems::Problem;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> bsv::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "squares".into());
    let problem = Problem::by_name(&name)?;
    let grid = ProposalGrid::build_uniform(&problem.model.space(), &problem.model, 200)?;
    let labels = true_labels(&mut problem.system(), &grid)?;
    let truth = weighted_mean(&grid, &labels)?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let r = run_bsv(&mut problem.system(), &problem.model, &grid, &BsvConfig::new(80), &mut rng)?;
    let xs: Vec<&[f64]> = r.records.iter().map(|e| &e.x[..]).collect();

    println!("falsification rate   {:.4}", failure_rate(&r.records)?);
    if let Some(l) = max_failure_likelihood(&r.records, &problem.model) {
        println!("max failure density  {l:.4e}");
    }
    println!("relative error       {:.4}", relative_error(truth, r.pfail_estimate)?);
    println!("input coverage       {:.4}", input_coverage_default(&xs, grid.space())?);
    println!("output coverage      {:.4}", output_coverage(&r.field, &labels)?);
    println!("most likely failures:");
    for (x, log_p) in top_k_likely_failures(&r.records, &problem.model, 5) {
        println!("  ({:>7.3}, {:>7.3})  log p = {log_p:.3}", x[0], x[1]);
    }
    Ok(())
}
