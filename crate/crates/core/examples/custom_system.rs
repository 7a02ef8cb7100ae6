//! A user-defined system with its own input type and operational model,
//! driven one iteration at a time.
//!
//!     cargo run --release --example custom_system

use bsv::bsv::{BsvConfig, BsvRun};
use bsv::grid::ProposalGrid;
use bsv::operational::{Distribution, OperationalModel, OperationalParameter};
use bsv::systems::{OutputKind, SystemInfo, SystemUnderTest};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A braking scenario: fails when the stopping distance exceeds the gap.
struct Braking {
    reaction_time: f64,
}

struct Scenario {
    speed: f64,
    gap: f64,
}

impl SystemUnderTest for Braking {
    type Input = Scenario;

    fn info(&self) -> SystemInfo {
        SystemInfo {
            name: "braking".into(),
            expensive: false,
            output_kind: OutputKind::Binary,
            reentrant: true,
        }
    }

    fn generate_input(&self, sample: &[f64]) -> bsv::Result<Scenario> {
        Ok(Scenario { speed: sample[0], gap: sample[1] })
    }

    fn evaluate(&mut self, inputs: Vec<Scenario>) -> bsv::Result<Vec<f64>> {
        Ok(inputs
            .iter()
            .map(|s| {
                let stop = s.speed * self.reaction_time + s.speed * s.speed / (2.0 * 7.0);
                if stop > s.gap { 1.0 } else { 0.0 }
            })
            .collect())
    }
}

fn main() -> bsv::Result<()> {
    let model = OperationalModel::new(vec![
        OperationalParameter::new("speed", (5.0, 35.0), Distribution::normal(20.0, 4.0))?,
        OperationalParameter::new("gap", (10.0, 120.0), Distribution::truncated_normal(70.0, 15.0, 10.0, 120.0))?,
    ])?;
    let grid = ProposalGrid::build_uniform(&model.space(), &model, 200)?;
    let mut system = Braking { reaction_time: 1.2 };
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let mut run = BsvRun::new(&model, &grid, BsvConfig::new(60))?;
    while !run.is_done() {
        run.step(&mut system, &mut rng)?;
        if run.iteration() % 10 == 0 {
            let h = run.history().last().expect("history");
            println!("iteration {:>3}: {:>3} evaluations, estimate {:.4e}", h.iteration, h.num_evaluations, h.estimate);
        }
    }
    let result = run.finish()?;
    println!("failures found: {}", result.failures.len());
    if let Some(x) = &result.most_likely_failure {
        println!("most likely failure: speed {:.2} m/s, gap {:.2} m", x[0], x[1]);
    }
    Ok(())
}
