//! Acquisition ablation on the two-squares problem: every subset of the
//! three acquisitions at a shared evaluation budget.
//!
//!     cargo run --release --example ablation -- [budget] [seeds]

use bsv::experiment::{run_ablation, RunConfig, Setup};

fn main() -> bsv::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut config = RunConfig::new("squares");
    config.ablation_budget = args.next().map_or(90, |s| s.parse().expect("budget"));
    let seeds: u64 = args.next().map_or(3, |s| s.parse().expect("seeds"));
    config.seeds = (1..=seeds).collect();
    config.grid_resolution = 250;

    let setup = Setup::new(&config)?;
    let (rows, _) = run_ablation(&setup, &config)?;
    println!("{:<9} {:>7} {:>9} {:>9} {:>7} {:>7}", "subset", "R_fail", "L*", "rel.err", "C_in", "C_out");
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    for r in rows {
        println!(
            "{:<9} {:>7.3} {:>9} {:>9} {:>7.3} {:>7}",
            r.subset,
            r.r_fail,
            opt(r.l_star),
            opt(r.delta_fail),
            r.c_input,
            opt(r.c_output)
        );
    }
    Ok(())
}
