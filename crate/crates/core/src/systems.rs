//! System-under-test interface, the synthetic test problems, and the
//! subprocess adapter for external systems.

use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use crate::error::{BsvError, Result};
use crate::operational::{Distribution, OperationalModel, OperationalParameter, TruncatedNormal};

/// Whether a system reports hard failure indicators or a failure measure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Binary,
    Probabilistic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemInfo {
    pub name: String,
    /// Expensive systems are never swept over a grid for ground truth.
    pub expensive: bool,
    pub output_kind: OutputKind,
    /// Whether `evaluate` may be called concurrently.
    pub reentrant: bool,
}

/// A black-box system: reset and initialize it, turn a sampled parameter
/// vector into a system input, and evaluate a batch of inputs. Outputs lie
/// in `[0, 1]`; a value of at least `0.5` is a failure.
pub trait SystemUnderTest {
    type Input;

    fn info(&self) -> SystemInfo;

    fn reset(&mut self) -> Result<()> {
        Ok(())
    }

    fn initialize(&mut self) -> Result<()> {
        Ok(())
    }

    fn generate_input(&self, sample: &[f64]) -> Result<Self::Input>;

    fn evaluate(&mut self, inputs: Vec<Self::Input>) -> Result<Vec<f64>>;
}

/// Object-safe view of a [`SystemUnderTest`] over raw design points.
pub trait BlackBox {
    fn info(&self) -> SystemInfo;
    fn reset(&mut self) -> Result<()>;
    fn initialize(&mut self) -> Result<()>;
    fn evaluate_points(&mut self, samples: &[&[f64]]) -> Result<Vec<f64>>;
}

impl<S: SystemUnderTest> BlackBox for S {
    fn info(&self) -> SystemInfo {
        SystemUnderTest::info(self)
    }

    fn reset(&mut self) -> Result<()> {
        SystemUnderTest::reset(self)
    }

    fn initialize(&mut self) -> Result<()> {
        SystemUnderTest::initialize(self)
    }

    fn evaluate_points(&mut self, samples: &[&[f64]]) -> Result<Vec<f64>> {
        let inputs = samples
            .iter()
            .map(|s| self.generate_input(s))
            .collect::<Result<Vec<_>>>()?;
        let out = self.evaluate(inputs)?;
        if out.len() != samples.len() {
            return Err(BsvError::Evaluation(format!(
                "expected {} outputs, got {}",
                samples.len(),
                out.len()
            )));
        }
        if let Some(bad) = out.iter().find(|y| !(0.0..=1.0).contains(*y)) {
            return Err(BsvError::Evaluation(format!("output {bad} outside [0, 1]")));
        }
        Ok(out)
    }
}

/// Evaluates a single point.
pub fn evaluate_one(system: &mut dyn BlackBox, x: &[f64]) -> Result<f64> {
    Ok(system.evaluate_points(&[x])?[0])
}

pub fn booth(x: &[f64]) -> f64 {
    let (a, b) = (x[0], x[1]);
    (a + 2.0 * b - 7.0).powi(2) + (2.0 * a + b - 5.0).powi(2)
}

pub fn himmelblau(x: &[f64]) -> f64 {
    let (a, b) = (x[0], x[1]);
    (a * a + b - 11.0).powi(2) + (a + b * b - 7.0).powi(2)
}

/// Failure squares of the two-squares problem.
pub const SQUARES: [[f64; 2]; 2] = [[1.5, 3.5], [6.0, 8.0]];

fn in_square(x: &[f64], sq: [f64; 2]) -> bool {
    x.iter().all(|&v| v >= sq[0] && v <= sq[1])
}

/// The built-in synthetic systems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToyKind {
    /// Booth's function thresholded at 200.
    Representative,
    /// Two disjoint axis-aligned failure squares.
    Squares,
    /// Himmelblau's function thresholded at 15.
    Mixture,
    /// Logistic failure measure around the Himmelblau threshold.
    ProbabilisticMixture,
    /// Synthetic stand-in for a runway detector over (distance, glide slope).
    RwdStandin,
}

impl ToyKind {
    pub const THRESHOLD_BOOTH: f64 = 200.0;
    pub const THRESHOLD_HIMMELBLAU: f64 = 15.0;

    pub fn name(&self) -> &'static str {
        match self {
            ToyKind::Representative => "representative",
            ToyKind::Squares => "squares",
            ToyKind::Mixture => "mixture",
            ToyKind::ProbabilisticMixture => "probabilistic-mixture",
            ToyKind::RwdStandin => "rwd-standin",
        }
    }

    pub fn all() -> [ToyKind; 5] {
        [
            ToyKind::Representative,
            ToyKind::Squares,
            ToyKind::Mixture,
            ToyKind::ProbabilisticMixture,
            ToyKind::RwdStandin,
        ]
    }

    pub fn output_kind(&self) -> OutputKind {
        match self {
            ToyKind::ProbabilisticMixture => OutputKind::Probabilistic,
            _ => OutputKind::Binary,
        }
    }

    /// System output at `x`.
    pub fn value(&self, x: &[f64]) -> f64 {
        let ind = |b: bool| if b { 1.0 } else { 0.0 };
        match self {
            ToyKind::Representative => ind(booth(x) <= Self::THRESHOLD_BOOTH),
            ToyKind::Squares => ind(SQUARES.iter().any(|&sq| in_square(x, sq))),
            ToyKind::Mixture => ind(himmelblau(x) <= Self::THRESHOLD_HIMMELBLAU),
            ToyKind::ProbabilisticMixture => {
                let c = Self::THRESHOLD_HIMMELBLAU;
                let z = (c - himmelblau(x)) / c;
                1.0 / (1.0 + (-z).exp())
            }
            ToyKind::RwdStandin => ind(rwd_standin_fails(x[0], x[1])),
        }
    }
}

/// Deterministic failure map over distance `d` (nmi) and glide slope `α`
/// (degrees): steep approaches close in lose the runway out of frame, long
/// shallow approaches shrink it below detection size, and a thin band of
/// mid-range approaches near 3.8° misdetects. Not a model of any real
/// detector.
pub fn rwd_standin_fails(d: f64, alpha: f64) -> bool {
    let steep_close = alpha > 5.5 && d < 1.5 - 0.2 * (alpha - 5.5);
    let far_shallow = d > 2.8 && alpha < 1.2 + 0.5 * (d - 2.8);
    let band = (alpha - 3.8).abs() < 0.15 && d > 1.2 && d < 2.0;
    steep_close || far_shallow || band
}

/// A built-in toy system.
#[derive(Clone, Debug)]
pub struct ToySystem {
    pub kind: ToyKind,
}

impl ToySystem {
    pub fn new(kind: ToyKind) -> Self {
        ToySystem { kind }
    }
}

impl SystemUnderTest for ToySystem {
    type Input = Vec<f64>;

    fn info(&self) -> SystemInfo {
        SystemInfo {
            name: self.kind.name().to_string(),
            expensive: false,
            output_kind: self.kind.output_kind(),
            reentrant: true,
        }
    }

    fn generate_input(&self, sample: &[f64]) -> Result<Vec<f64>> {
        if sample.len() != 2 {
            return Err(BsvError::DimensionMismatch {
                expected: 2,
                got: sample.len(),
            });
        }
        Ok(sample.to_vec())
    }

    fn evaluate(&mut self, inputs: Vec<Vec<f64>>) -> Result<Vec<f64>> {
        Ok(inputs.iter().map(|x| self.kind.value(x)).collect())
    }
}

/// Constant system, handy for degenerate-case checks.
#[derive(Clone, Debug)]
pub struct ConstantSystem {
    pub value: f64,
}

impl SystemUnderTest for ConstantSystem {
    type Input = ();

    fn info(&self) -> SystemInfo {
        SystemInfo {
            name: format!("constant-{}", self.value),
            expensive: false,
            output_kind: OutputKind::Binary,
            reentrant: true,
        }
    }

    fn generate_input(&self, _sample: &[f64]) -> Result<()> {
        Ok(())
    }

    fn evaluate(&mut self, inputs: Vec<()>) -> Result<Vec<f64>> {
        Ok(vec![self.value; inputs.len()])
    }
}

/// Wraps a plain function of the design point.
pub struct FnSystem<F> {
    pub info: SystemInfo,
    pub f: F,
}

impl<F: FnMut(&[f64]) -> f64> FnSystem<F> {
    pub fn binary(name: &str, f: F) -> Self {
        FnSystem {
            info: SystemInfo {
                name: name.to_string(),
                expensive: false,
                output_kind: OutputKind::Binary,
                reentrant: false,
            },
            f,
        }
    }
}

impl<F: FnMut(&[f64]) -> f64> SystemUnderTest for FnSystem<F> {
    type Input = Vec<f64>;

    fn info(&self) -> SystemInfo {
        self.info.clone()
    }

    fn generate_input(&self, sample: &[f64]) -> Result<Vec<f64>> {
        Ok(sample.to_vec())
    }

    fn evaluate(&mut self, inputs: Vec<Vec<f64>>) -> Result<Vec<f64>> {
        Ok(inputs.iter().map(|x| (self.f)(x)).collect())
    }
}

#[derive(Serialize, Deserialize)]
pub struct EvaluateRequest {
    pub samples: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
pub struct EvaluateResponse {
    pub outputs: Vec<f64>,
}

/// External system behind a child process speaking newline-delimited JSON:
/// each request line `{"samples": [[...], ...]}` is answered by one line
/// `{"outputs": [...]}`. The child must exit with status 0 once its stdin
/// closes.
pub struct SubprocessSystem {
    command: Vec<String>,
    info: SystemInfo,
    child: Option<(Child, ChildStdin, BufReader<ChildStdout>)>,
}

impl SubprocessSystem {
    pub fn new(command: Vec<String>, output_kind: OutputKind) -> Result<Self> {
        if command.is_empty() {
            return Err(BsvError::InvalidParameter("empty subprocess command".into()));
        }
        Ok(SubprocessSystem {
            info: SystemInfo {
                name: command.join(" "),
                expensive: true,
                output_kind,
                reentrant: false,
            },
            command,
            child: None,
        })
    }

    /// Marks the system cheap enough for ground-truth sweeps.
    pub fn inexpensive(mut self) -> Self {
        self.info.expensive = false;
        self
    }

    fn spawn(&mut self) -> Result<()> {
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        self.child = Some((child, stdin, stdout));
        Ok(())
    }

    /// Closes the pipe and waits for the child, checking its exit status.
    pub fn shutdown(&mut self) -> Result<()> {
        if let Some((mut child, stdin, _)) = self.child.take() {
            drop(stdin);
            let status = child.wait()?;
            if !status.success() {
                return Err(BsvError::Evaluation(format!("subprocess exited with {status}")));
            }
        }
        Ok(())
    }
}

impl Drop for SubprocessSystem {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}

impl SystemUnderTest for SubprocessSystem {
    type Input = Vec<f64>;

    fn info(&self) -> SystemInfo {
        self.info.clone()
    }

    fn reset(&mut self) -> Result<()> {
        self.shutdown()
    }

    fn initialize(&mut self) -> Result<()> {
        if self.child.is_none() {
            self.spawn()?;
        }
        Ok(())
    }

    fn generate_input(&self, sample: &[f64]) -> Result<Vec<f64>> {
        Ok(sample.to_vec())
    }

    fn evaluate(&mut self, inputs: Vec<Vec<f64>>) -> Result<Vec<f64>> {
        SystemUnderTest::initialize(self)?;
        let (_, stdin, stdout) = self.child.as_mut().expect("spawned");
        let mut line = serde_json::to_string(&EvaluateRequest { samples: inputs })?;
        line.push('\n');
        stdin.write_all(line.as_bytes())?;
        stdin.flush()?;
        let mut reply = String::new();
        if stdout.read_line(&mut reply)? == 0 {
            return Err(BsvError::Evaluation("subprocess closed its output".into()));
        }
        let resp: EvaluateResponse = serde_json::from_str(reply.trim())
            .map_err(|e| BsvError::Evaluation(format!("bad response `{}`: {e}", reply.trim())))?;
        Ok(resp.outputs)
    }
}

/// Serves a toy system over the subprocess protocol until `input` closes.
pub fn serve<R: BufRead, W: Write>(kind: ToyKind, input: R, mut output: W) -> Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let req: EvaluateRequest = serde_json::from_str(&line)?;
        let outputs = req.samples.iter().map(|x| kind.value(x)).collect();
        serde_json::to_writer(&mut output, &EvaluateResponse { outputs })?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}

/// A named test problem: operational model plus system.
pub struct Problem {
    pub name: String,
    pub model: OperationalModel,
    pub kind: ToyKind,
}

impl Problem {
    pub fn system(&self) -> ToySystem {
        ToySystem::new(self.kind)
    }

    pub fn by_name(name: &str) -> Result<Problem> {
        let kind = ToyKind::all()
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| BsvError::Unknown {
                kind: "problem",
                name: name.to_string(),
            })?;
        Ok(Problem::toy(kind))
    }

    pub fn names() -> Vec<&'static str> {
        ToyKind::all().iter().map(|k| k.name()).collect()
    }

    pub fn toy(kind: ToyKind) -> Problem {
        let p = |name: &str, range: (f64, f64), d: Distribution| {
            OperationalParameter::new(name, range, d).expect("built-in parameter")
        };
        let params = match kind {
            ToyKind::Representative => vec![
                p("x1", (-10.0, 5.0), Distribution::truncated_normal(-10.0, 1.5, -10.0, 5.0)),
                p("x2", (-10.0, 5.0), Distribution::normal(-2.5, 1.0)),
            ],
            ToyKind::Squares => vec![
                p("x1", (0.0, 10.0), Distribution::normal(5.0, 1.0)),
                p("x2", (0.0, 10.0), Distribution::normal(5.0, 1.0)),
            ],
            ToyKind::Mixture => {
                let gmm = || {
                    Distribution::equal_mixture(vec![
                        TruncatedNormal::new(2.0, 1.0, -6.0, 6.0).expect("valid"),
                        TruncatedNormal::new(-2.0, 1.0, -6.0, 6.0).expect("valid"),
                    ])
                };
                vec![p("x1", (-6.0, 6.0), gmm()), p("x2", (-6.0, 6.0), gmm())]
            }
            ToyKind::ProbabilisticMixture => vec![
                p("x1", (-6.0, 6.0), Distribution::uniform(-6.0, 6.0)),
                p("x2", (-6.0, 6.0), Distribution::uniform(-6.0, 6.0)),
            ],
            ToyKind::RwdStandin => vec![
                p("distance", (0.1, 4.0), Distribution::truncated_normal(0.0, 1.0, 0.0, 4.0)),
                p("slope", (1.0, 7.0), Distribution::normal(3.0, 0.5)),
            ],
        };
        Problem {
            name: kind.name().to_string(),
            model: OperationalModel::new(params).expect("built-in model"),
            kind,
        }
    }
}
