//! Sampling and selection baselines against BSV at a common budget.
//!
//!     cargo run --release --example baselines -- [problem] [budget]

use bsv::baselines::{mc_estimate, pmc_estimate, run_selection_baseline, PmcConfig, Selector};
use bsv::bsv::{run_bsv, BsvConfig};
use bsv::estimator::ground_truth_pfail;
use bsv::grid::ProposalGrid;
use bsv::metrics::relative_error;
use bsv::systems::Problem;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> bsv::Result<()> {
    let mut args = std::env::args().skip(1);
    let problem = Problem::by_name(&args.next().unwrap_or_else(|| "mixture".into()))?;
    let budget: usize = args.next().map_or(300, |s| s.parse().expect("budget"));
    let grid = ProposalGrid::build_uniform(&problem.model.space(), &problem.model, 250)?;
    let truth = ground_truth_pfail(&mut problem.system(), &grid)?;
    let config = BsvConfig::new(budget / 3);
    println!("{}: ground truth {truth:.5e}, budget {budget}", problem.name);

    let report = |name: &str, n: usize, est: f64| -> bsv::Result<()> {
        println!("{name:<8} {n:>7} evaluations  estimate {est:.5e}  relative error {:.4}", relative_error(truth, est)?);
        Ok(())
    };

    let rng = || ChaCha8Rng::seed_from_u64(3);
    let r = run_bsv(&mut problem.system(), &problem.model, &grid, &config, &mut rng())?;
    report("bsv", r.records.len(), r.pfail_estimate)?;

    for selector in Selector::all() {
        let points = selector.select(grid.space(), budget, &mut rng())?;
        let r = run_selection_baseline(&mut problem.system(), &problem.model, &grid, &points, &config)?;
        report(selector.as_str(), r.records.len(), r.pfail_estimate)?;
    }

    let mc = mc_estimate(&mut problem.system(), &problem.model, budget, &mut rng())?;
    report("mc", mc.records.len(), mc.estimate)?;
    let pmc = pmc_estimate(&mut problem.system(), &problem.model, &PmcConfig::default(), &mut rng())?;
    report("pmc", PmcConfig::default().total_samples(), pmc.estimate)?;
    Ok(())
}
