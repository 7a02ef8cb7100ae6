//! An external system behind the subprocess protocol. By default a small
//! Python script answers each `{"samples": ...}` line with
//! `{"outputs": ...}`; pass any other command to drive it instead.
//!
//!     cargo run --release --example external_system -- [command ...]

use bsv::bsv::{run_bsv, BsvConfig};
use bsv::estimator::estimate_pfail;
use bsv::grid::ProposalGrid;
use bsv::systems::{OutputKind, Problem, SubprocessSystem, ToyKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SCRIPT: &str = r#"
import json, sys
for line in sys.stdin:
    if not line.strip():
        continue
    xs = json.loads(line)["samples"]
    out = [1.0 if (a + 2*b - 7)**2 + (2*a + b - 5)**2 <= 200 else 0.0 for a, b in xs]
    print(json.dumps({"outputs": out}), flush=True)
"#;

fn main() -> bsv::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let command = if args.is_empty() {
        vec!["python3".into(), "-c".into(), SCRIPT.into()]
    } else {
        args
    };
    let model = Problem::toy(ToyKind::Representative).model;
    let grid = ProposalGrid::build_uniform(&model.space(), &model, 200)?;
    let mut system = SubprocessSystem::new(command, OutputKind::Binary)?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r = run_bsv(&mut system, &model, &grid, &BsvConfig::new(50), &mut rng)?;
    system.shutdown()?;

    println!("evaluations {}", r.records.len());
    println!("failures    {}", r.failures.len());
    println!("hard estimate {:.4e}", r.pfail_estimate);
    println!("soft estimate {:.4e}", estimate_pfail(&r.field, &grid, bsv::estimator::EstimateMode::Soft)?);
    Ok(())
}
