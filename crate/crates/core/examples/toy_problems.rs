//! BSV on each built-in problem with a reduced budget and a coarser grid,
//! reporting the estimate against the brute-force ground truth.
//!
//!     cargo run --release --example toy_problems -- [iterations] [grid]

use bsv::bsv::{run_bsv, BsvConfig};
use bsv::estimator::true_labels;
use bsv::estimator::weighted_mean;
use bsv::grid::ProposalGrid;
use bsv::metrics::metric_report;
use bsv::systems::{Problem, ToyKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> bsv::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations: usize = args.next().map_or(100, |s| s.parse().expect("iterations"));
    let resolution: usize = args.next().map_or(200, |s| s.parse().expect("grid"));

    println!("{:<22} {:>12} {:>12} {:>9} {:>7} {:>8}", "problem", "truth", "estimate", "rel.err", "R_fail", "C_out");
    for kind in ToyKind::all() {
        let problem = Problem::toy(kind);
        let grid = ProposalGrid::build_uniform(&problem.model.space(), &problem.model, resolution)?;
        let labels = true_labels(&mut problem.system(), &grid)?;
        let truth = weighted_mean(&grid, &labels)?;

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = run_bsv(&mut problem.system(), &problem.model, &grid, &BsvConfig::new(iterations), &mut rng)?;
        let m = metric_report(&r.records, &problem.model, r.pfail_estimate, Some(&r.field), Some((truth, &labels)), Some(&grid))?;
        println!(
            "{:<22} {:>12.4e} {:>12.4e} {:>9.4} {:>7.3} {:>8.4}",
            problem.name,
            truth,
            r.pfail_estimate,
            m.delta_fail.unwrap_or(f64::NAN),
            m.r_fail,
            m.c_output.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
