use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use higl_core::nn::codec::Container;
use higl_core::trainer::metrics::{timing_csv, to_csv};
use higl_core::trainer::{load_checkpoint, read_manifest, save_checkpoint, TrainConfig, Trainer};

#[derive(Parser)]
#[command(name = "higl", version, about = "Hierarchical RL with landmark-guided subgoals on maze tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and write metrics.csv, timing.csv, config.txt and checkpoint.bin.
    Train(TrainArgs),
    /// Greedy evaluation of a checkpoint.
    Eval(EvalArgs),
    /// Print a checkpoint's manifest, records and configuration.
    InspectCheckpoint {
        path: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file; unspecified keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// `key=value` with dotted keys, applied after --config. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn apply(&self, mut config: TrainConfig) -> Result<TrainConfig> {
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            config.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
        }
        for o in &self.overrides {
            config.apply_override(o)?;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Continue from a checkpoint written by an earlier run; config flags
    /// are ignored.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Also write a checkpoint after the first episode that reaches this step.
    #[arg(long)]
    checkpoint_at: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    checkpoint: PathBuf,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Environment overrides (`env.*` keys) for evaluating on another maze.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn write_outputs(dir: &Path, trainer: &Trainer) -> Result<()> {
    fs::write(dir.join("metrics.csv"), to_csv(trainer.metrics()))?;
    fs::write(dir.join("timing.csv"), timing_csv(trainer.metrics()))?;
    save_checkpoint(trainer, dir.join("checkpoint.bin"))?;
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let mut trainer = match &args.resume {
        Some(path) => load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?,
        None => Trainer::new(args.config.apply(TrainConfig::default())?)?,
    };
    fs::write(args.out_dir.join("config.txt"), trainer.config().to_text())?;
    if trainer.config().planner.dump_graphs {
        let f = File::create(args.out_dir.join("graphs.txt"))?;
        trainer.set_graph_dump(Box::new(BufWriter::new(f)));
    }

    let mut result = Ok(());
    if let Some(at) = args.checkpoint_at {
        result = trainer.run_until(at);
        if result.is_ok() {
            let path = args.out_dir.join(format!("checkpoint_{}.bin", trainer.step()));
            save_checkpoint(&trainer, &path)?;
            eprintln!("wrote {}", path.display());
        }
    }
    if result.is_ok() {
        result = trainer.run().map(|_| ());
    }
    if let Err(e) = result {
        let msg = format!("training aborted at step {} (episode {}): {e}\n", trainer.step(), trainer.episode());
        fs::write(args.out_dir.join("diagnostic.txt"), &msg)?;
        fs::write(args.out_dir.join("metrics.csv"), to_csv(trainer.metrics()))?;
        bail!(msg.trim_end().to_string());
    }
    write_outputs(&args.out_dir, &trainer)?;
    if let Some(last) = trainer.metrics().last() {
        println!(
            "step {} episode {} success {} return {}",
            last.step,
            last.episode,
            last.eval_success_rate,
            higl_core::trainer::metrics::format_sig6(last.mean_episode_return)
        );
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let trainer = load_checkpoint(&args.checkpoint).with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let mut config = trainer.config().clone();
    for o in &args.overrides {
        if !o.trim_start().starts_with("env.") {
            bail!("eval only accepts env.* overrides, got {o:?}");
        }
        config.apply_override(o)?;
    }
    let spec = config.env.maze_spec()?;
    let episodes = args.episodes.unwrap_or(config.eval.episodes);
    if episodes == 0 {
        bail!("--episodes must be positive");
    }
    let summary = higl_core::trainer::evaluate_checkpoint(&trainer, &spec, episodes, args.seed)?;
    println!("episodes {episodes}");
    println!("success_rate {}", summary.success_rate);
    println!("mean_return {}", higl_core::trainer::metrics::format_sig6(summary.mean_return));
    Ok(())
}

fn inspect(path: &Path) -> Result<()> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let container = Container::from_bytes(&bytes)?;
    println!("[manifest]");
    for (k, v) in read_manifest(&container)? {
        println!("{k} = {v}");
    }
    println!("[records]");
    for (name, payload) in &container.records {
        println!("{name} {} bytes", payload.len());
    }
    println!("[config]");
    print!("{}", container.decode_with("config", |d| d.str())?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::InspectCheckpoint { path } => inspect(&path),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
