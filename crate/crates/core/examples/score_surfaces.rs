//! Writes the surrogate and the three acquisition surfaces over the grid,
//! plus the operational density, as CSV for plotting.
//!
//!     cargo run --release --example score_surfaces -- [out_dir] [iterations]

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use bsv::acquisition::write_score_surfaces;
use bsv::bsv::{run_bsv, write_records_csv, BsvConfig};
use bsv::grid::ProposalGrid;
use bsv::systems::{Problem, ToyKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> bsv::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "surfaces".into()));
    let iterations: usize = args.next().map_or(30, |s| s.parse().expect("iterations"));
    std::fs::create_dir_all(&dir)?;

    let problem = Problem::toy(ToyKind::Mixture);
    let grid = ProposalGrid::build_uniform(&problem.model.space(), &problem.model, 120)?;
    let config = BsvConfig::new(iterations);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let r = run_bsv(&mut problem.system(), &problem.model, &grid, &config, &mut rng)?;

    write_score_surfaces(&r.field, &grid, iterations + 1, config.acquisition.lambda, BufWriter::new(File::create(dir.join("scores.csv"))?))?;
    grid.write_density_csv(BufWriter::new(File::create(dir.join("density.csv"))?))?;
    write_records_csv(&r.records, BufWriter::new(File::create(dir.join("records.csv"))?))?;
    println!("wrote scores.csv, density.csv and records.csv to {}", dir.display());
    Ok(())
}
