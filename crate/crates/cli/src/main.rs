use std::fmt;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use msd_core::data::{generate, generator_by_name, read_container, write_container};
use msd_core::judges::{serve, ServerInfo};
use msd_core::les::FactorMap;
use msd_core::metrics::{FloorMode, Metric, SummaryMode};
use msd_core::pipeline::{
    build_judge, evaluate, explore, load_model, read_report, write_evaluation, write_leaderboard, EvalConfig,
    JudgeSpec, LesStrategy, ModelSource,
};
use msd_core::training::{train, TrainingConfig};

#[derive(Parser)]
#[command(name = "msd", version, about = "Generate, train, explore and evaluate multi-factor sequence models")]
struct Cli {
    /// Root seed; stages derive their own seeds from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output path of the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset into a container directory.
    Gen {
        #[arg(long)]
        dataset: String,
        /// Train/val/test shares, e.g. 0.7,0.15,0.15.
        #[arg(long, default_value = "0.7,0.15,0.15")]
        ratios: String,
        /// Noise amplitude for generators that add noise.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Train a model from a JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Locate each factor's latent channels.
    Explore {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = Strategy::Predictor)]
        strategy: Strategy,
        #[command(flatten)]
        judge: JudgeArgs,
    },
    /// Serve a judge over HTTP.
    ServeJudge {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = LocalJudge::Oracle)]
        kind: LocalJudge,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Concurrent judgments allowed.
        #[arg(long, default_value_t = 16)]
        max_concurrent: usize,
    },
    /// Run the metric suite on a model.
    Eval {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        dataset: PathBuf,
        /// Use this factor map instead of running exploration.
        #[arg(long)]
        factor_map: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Strategy::Predictor)]
        strategy: Strategy,
        #[command(flatten)]
        judge: JudgeArgs,
        /// Evaluation config JSON; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        /// Comma-separated metric names, e.g. M-Swap,DCI-M.
        #[arg(long)]
        metrics: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long, value_enum)]
        floor: Option<Floor>,
        #[arg(long, value_enum)]
        summary: Option<Summary>,
        /// Name used for the model in the report.
        #[arg(long)]
        name: Option<String>,
    },
    /// Merge evaluation reports into leaderboards.
    Report {
        /// report.json files or directories holding one.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Checkpoint directory of a trained model.
    #[arg(long, conflicts_with = "analytic", required_unless_present = "analytic")]
    checkpoint: Option<PathBuf>,
    /// Use the label-index reference model of the dataset's generator.
    #[arg(long)]
    analytic: bool,
}

impl ModelArgs {
    fn source(&self) -> ModelSource {
        match &self.checkpoint {
            Some(path) => ModelSource::Checkpoint { path: path.clone() },
            None => ModelSource::Analytic,
        }
    }
}

#[derive(Args)]
struct JudgeArgs {
    #[arg(long = "judge", value_enum, default_value_t = JudgeKind::Oracle)]
    judge_kind: JudgeKind,
    /// Server root for a remote judge, e.g. http://127.0.0.1:8080.
    #[arg(long)]
    endpoint: Option<String>,
}

impl JudgeArgs {
    fn spec(&self) -> Result<JudgeSpec> {
        Ok(match self.judge_kind {
            JudgeKind::Oracle => JudgeSpec::Oracle,
            JudgeKind::Trained => JudgeSpec::Trained,
            JudgeKind::Remote => JudgeSpec::Remote {
                endpoint: self
                    .endpoint
                    .clone()
                    .ok_or_else(|| Usage("--judge remote needs --endpoint".into()))?,
            },
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Predictor,
    Swap,
}

impl From<Strategy> for LesStrategy {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::Predictor => LesStrategy::Predictor,
            Strategy::Swap => LesStrategy::Swap,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum JudgeKind {
    Oracle,
    Trained,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum LocalJudge {
    Oracle,
    Trained,
}

#[derive(Clone, Copy, ValueEnum)]
enum Floor {
    Uniform,
    Empirical,
}

#[derive(Clone, Copy, ValueEnum)]
enum Summary {
    Mean,
    Geometric,
}

/// An error caused by how the command was invoked.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn parse_ratios(text: &str) -> Result<[f64; 3]> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Usage(format!("bad --ratios {text:?}: {e}")))?;
    <[f64; 3]>::try_from(parts).map_err(|_| Usage(format!("--ratios needs three values, got {text:?}")).into())
}

fn out_or(cli_out: &Option<PathBuf>, default: &str) -> PathBuf {
    cli_out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn load_dataset(path: &Path) -> Result<msd_core::data::Dataset> {
    read_container(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Usage("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Gen { dataset, ratios, noise } => {
            let ratios = parse_ratios(ratios)?;
            let noise = noise.unwrap_or(msd_core::data::timeseries::DEFAULT_NOISE);
            let gen = generator_by_name(dataset, seed, noise)?;
            let ds = generate(gen.as_ref(), seed, ratios)?;
            let out = out_or(&cli.out, dataset);
            write_container(&ds, &out)?;
            println!("wrote {} samples to {}", ds.len(), out.display());
        }
        Command::Train { config } => {
            let mut cfg = TrainingConfig::from_file(config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let out = out_or(&cli.out, "run");
            let outcome = train(&cfg, &out)?;
            print!("{}", std::fs::read_to_string(out.join("train_log.tsv"))?);
            println!(
                "checkpoint {}{}",
                outcome.checkpoint.display(),
                if outcome.stopped_early { " (stopped early)" } else { "" }
            );
        }
        Command::Explore {
            model,
            dataset,
            strategy,
            judge,
        } => {
            let ds = load_dataset(dataset)?;
            let (model, _) = load_model(&model.source(), &ds)?;
            let strategy = LesStrategy::from(*strategy);
            let judge = match strategy {
                LesStrategy::Swap => Some(build_judge(&judge.spec()?, &ds, seed)?),
                LesStrategy::Predictor => None,
            };
            let map = explore(model.as_ref(), &ds, strategy, judge.as_deref(), seed)?;
            let out = out_or(&cli.out, "factor_map.json");
            std::fs::write(&out, map.to_json()?)?;
            for (f, s) in map.factors.iter().zip(&map.subsets) {
                match s {
                    Some(s) => println!("{}\t{:?}", f.name, s),
                    None => println!("{}\tunlocated", f.name),
                }
            }
            if map.overlap > 0 {
                eprintln!("warning: {} channels are claimed by more than one factor", map.overlap);
            }
        }
        Command::ServeJudge {
            dataset,
            kind,
            port,
            host,
            max_concurrent,
        } => {
            let ds = load_dataset(dataset)?;
            let spec = match kind {
                LocalJudge::Oracle => JudgeSpec::Oracle,
                LocalJudge::Trained => JudgeSpec::Trained,
            };
            let judge = build_judge(&spec, &ds, seed)?;
            let info = ServerInfo {
                name: ds.manifest.name.clone(),
                factors: ds.factors().to_vec(),
                seq_len: ds.seq_len(),
                frame_shape: ds.manifest.frame_shape.clone(),
            };
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| Usage(format!("bad listen address {host}:{port}: {e}")))?;
            eprintln!("serving {} judge for {} on http://{addr}", spec_name(&spec), ds.manifest.name);
            serve(judge, info, &addr.to_string(), *max_concurrent)?;
        }
        Command::Eval {
            model,
            dataset,
            factor_map,
            strategy,
            judge,
            config,
            runs,
            metrics,
            trials,
            pairs,
            floor,
            summary,
            name,
        } => {
            let ds = load_dataset(dataset)?;
            let (model, kind_name) = load_model(&model.source(), &ds)?;
            let judge: Arc<dyn msd_core::judges::Judge> = build_judge(&judge.spec()?, &ds, seed)?;
            let mut cfg = match config {
                Some(p) => serde_json::from_str::<EvalConfig>(&std::fs::read_to_string(p)?)
                    .map_err(|e| Usage(format!("bad eval config {}: {e}", p.display())))?,
                None => EvalConfig::default(),
            };
            if cli.seed.is_some() || config.is_none() {
                cfg.seed = seed;
            }
            if let Some(r) = runs {
                cfg.runs = *r;
            }
            if let Some(t) = trials {
                cfg.trials = *t;
            }
            if let Some(p) = pairs {
                cfg.pairs = *p;
            }
            if let Some(f) = floor {
                cfg.floor_mode = match f {
                    Floor::Uniform => FloorMode::Uniform,
                    Floor::Empirical => FloorMode::Empirical,
                };
            }
            if let Some(s) = summary {
                cfg.summary = match s {
                    Summary::Mean => SummaryMode::Mean,
                    Summary::Geometric => SummaryMode::geometric(),
                };
            }
            if let Some(list) = metrics {
                cfg.metrics = Some(list.split(',').map(|m| Metric::parse(m.trim())).collect::<msd_core::Result<_>>()?);
            }
            let map = match factor_map {
                Some(p) => FactorMap::from_json(&std::fs::read_to_string(p)?)?,
                None => explore(model.as_ref(), &ds, (*strategy).into(), Some(judge.as_ref()), seed)?,
            };
            let model_name = name.clone().unwrap_or(kind_name);
            let eval = evaluate(model.as_ref(), &model_name, judge.as_ref(), &map, &ds, &cfg)?;
            let out = out_or(&cli.out, "eval");
            write_evaluation(&eval, &out)?;
            for v in &eval.report.values {
                println!("{}\t{:.4}\t±{:.1e}", v.metric.name(), v.mean, v.se);
            }
            println!("S\t{:.4}\t±{:.1e}", eval.report.score, eval.report.score_se);
        }
        Command::Report { reports } => {
            let loaded = reports
                .iter()
                .map(|p| {
                    let file = if p.is_dir() { p.join("report.json") } else { p.clone() };
                    read_report(&file).with_context(|| format!("reading report {}", file.display()))
                })
                .collect::<Result<Vec<_>>>()?;
            let out = out_or(&cli.out, "leaderboard");
            let board = write_leaderboard(&loaded, &out)?;
            print!("{}", board.to_markdown());
        }
    }
    Ok(())
}

fn spec_name(spec: &JudgeSpec) -> &'static str {
    match spec {
        JudgeSpec::Oracle => "oracle",
        JudgeSpec::Trained => "trained",
        JudgeSpec::Remote { .. } => "remote",
    }
}

/// 1 for errors caused by the inputs, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<Usage>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<msd_core::Error>() {
            return if e.is_user_error() { 1 } else { 2 };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
