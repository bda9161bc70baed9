use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use sevot::ground::parse_csv_table;
use sevot::ot::{exact_wasserstein, l1_wasserstein, onehot_wasserstein, sinkhorn, OtResult, SinkhornConfig};
use sevot::{GroundMatrix, Histogram, MetricTransform};

#[derive(Debug, Subcommand)]
pub enum OtCommand {
    /// Exact transport cost.
    Exact(PairArgs),
    /// Closed-form cost against a one-hot target.
    Onehot(OnehotArgs),
    /// Entropic transport cost.
    Sinkhorn(SinkhornArgs),
    /// Transport cost under the step matrix, half the l1 distance.
    L1(HistArgs),
}

#[derive(Debug, Args)]
pub struct HistArgs {
    /// Source histogram CSV, `-` for stdin.
    #[arg(long)]
    source: PathBuf,
    /// Target histogram CSV, `-` for stdin.
    #[arg(long)]
    target: PathBuf,
}

#[derive(Debug, Args)]
pub struct MatrixArgs {
    /// Ground matrix CSV, `-` for stdin.
    #[arg(long)]
    matrix: PathBuf,
    /// Applied to the matrix before solving: linear, step, power:RHO or huber:TAU.
    #[arg(long, default_value = "linear")]
    transform: MetricTransform,
    /// Also write the transport plan as CSV, `-` for stdout.
    #[arg(long)]
    plan: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PairArgs {
    #[command(flatten)]
    hist: HistArgs,
    #[command(flatten)]
    matrix: MatrixArgs,
}

#[derive(Debug, Args)]
pub struct OnehotArgs {
    #[arg(long)]
    source: PathBuf,
    /// True class index.
    #[arg(long, conflicts_with = "target", required_unless_present = "target")]
    class: Option<usize>,
    /// One-hot target histogram CSV, instead of `--class`.
    #[arg(long)]
    target: Option<PathBuf>,
    #[command(flatten)]
    matrix: MatrixArgs,
}

#[derive(Debug, Args)]
pub struct SinkhornArgs {
    #[command(flatten)]
    pair: PairArgs,
    /// Entropic regularization strength.
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    max_iter: Option<usize>,
}

/// Reads each distinct path once; `-` is stdin and may appear more than once.
struct Inputs {
    stdin: Option<String>,
}

impl Inputs {
    fn read(&mut self, path: &Path) -> Result<String> {
        if path.as_os_str() == "-" {
            if self.stdin.is_none() {
                let mut text = String::new();
                std::io::stdin()
                    .read_to_string(&mut text)
                    .context("cannot read stdin")?;
                self.stdin = Some(text);
            }
            return Ok(self.stdin.clone().unwrap_or_default());
        }
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
    }

    /// Flattens a single-row or single-column table.
    fn histogram(&mut self, path: &Path) -> Result<Histogram> {
        let rows = parse_csv_table(&self.read(path)?).with_context(|| format!("in {}", path.display()))?;
        let mass: Vec<f64> = if rows.len() == 1 {
            rows[0].clone()
        } else if rows.iter().all(|r| r.len() == 1) {
            rows.concat()
        } else {
            bail!("{}: histogram must be a single row or a single column", path.display());
        };
        Histogram::new(mass).with_context(|| format!("in {}", path.display()))
    }

    fn matrix(&mut self, args: &MatrixArgs) -> Result<GroundMatrix> {
        let d = GroundMatrix::from_csv(&self.read(&args.matrix)?)
            .with_context(|| format!("in {}", args.matrix.display()))?;
        Ok(d.transformed(&args.transform))
    }
}

fn emit(result: &OtResult, plan: Option<&Path>) -> Result<()> {
    println!("cost {:.11e}", result.cost);
    match plan {
        Some(p) if p.as_os_str() == "-" => print!("{}", result.plan.to_csv()),
        Some(p) => std::fs::write(p, result.plan.to_csv()).with_context(|| format!("cannot write {}", p.display()))?,
        None => {}
    }
    Ok(())
}

pub fn cmd_ot(cmd: &OtCommand) -> Result<()> {
    let mut inputs = Inputs { stdin: None };
    match cmd {
        OtCommand::Exact(a) => {
            let s = inputs.histogram(&a.hist.source)?;
            let t = inputs.histogram(&a.hist.target)?;
            let d = inputs.matrix(&a.matrix)?;
            emit(&exact_wasserstein(&s, &t, &d)?, a.matrix.plan.as_deref())
        }
        OtCommand::Onehot(a) => {
            let s = inputs.histogram(&a.source)?;
            let class = match (a.class, &a.target) {
                (Some(j), _) => j,
                (None, Some(path)) => inputs
                    .histogram(path)?
                    .onehot_class()
                    .with_context(|| format!("{} is not a one-hot histogram", path.display()))?,
                (None, None) => bail!("either --class or --target is required"),
            };
            let d = inputs.matrix(&a.matrix)?;
            emit(&onehot_wasserstein(&s, class, &d)?, a.matrix.plan.as_deref())
        }
        OtCommand::Sinkhorn(a) => {
            let s = inputs.histogram(&a.pair.hist.source)?;
            let t = inputs.histogram(&a.pair.hist.target)?;
            let d = inputs.matrix(&a.pair.matrix)?;
            let mut config = SinkhornConfig::new(a.epsilon);
            if let Some(n) = a.max_iter {
                config.max_iter = n;
            }
            let r = sinkhorn(&s, &t, &d, &config)?;
            println!("converged {}", r.converged);
            println!("iterations {}", r.iterations);
            emit(&r, a.pair.matrix.plan.as_deref())
        }
        OtCommand::L1(a) => {
            let s = inputs.histogram(&a.source)?;
            let t = inputs.histogram(&a.target)?;
            println!("cost {:.11e}", l1_wasserstein(&s, &t)?);
            Ok(())
        }
    }
}
