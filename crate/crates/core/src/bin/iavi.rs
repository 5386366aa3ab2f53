use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use iavi::experiment::{self, Algorithm, ExperimentManifest, RunConfig};
use iavi::mdp::{expected_value_difference, sample_trajectories, RewardTable, TrajectorySet};
use iavi::objectworld::{self, FeatureKind, ObjectworldInstance, ObjectworldSpec};
use iavi::{io, Error, Result};

#[derive(Parser)]
#[command(name = "iavi", version, about = "Inverse Q-learning experiments on Objectworld")]
struct Cli {
    /// Seed for single-seed commands.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Comma-separated seeds for `run` and `curve` (defaults to --seed).
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Seeds executed in parallel.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON file with algorithm settings overriding the defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an Objectworld instance.
    GenEnv(GenEnvArgs),
    /// Sample expert demonstrations on an instance.
    SampleDemos {
        #[arg(long)]
        env: PathBuf,
        #[arg(long, default_value_t = 64)]
        episodes: usize,
        #[arg(long, default_value_t = 8)]
        horizon: usize,
    },
    /// Run one algorithm over several seeds and summarise.
    Run(RunArgs),
    /// EVD against the number of demonstrated trajectories.
    Curve {
        #[arg(long)]
        algorithm: String,
        #[arg(long)]
        env: PathBuf,
        /// Ascending, comma-separated episode counts.
        #[arg(long, value_delimiter = ',', required = true)]
        counts: Vec<usize>,
    },
    /// Expected value difference of a learned reward.
    Evd {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        reward: PathBuf,
    },
    /// Describe a JSON artifact.
    Inspect { path: PathBuf },
}

#[derive(Args)]
struct GenEnvArgs {
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    colors: usize,
    #[arg(long, default_value_t = 12)]
    objects: usize,
    #[arg(long, default_value_t = 0.3)]
    wind: f64,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    /// Emit 0/1 features thresholded at this distance instead of distances.
    #[arg(long)]
    binary_threshold: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// Manifest file; replaces the other run options when given.
    #[arg(long, conflicts_with_all = ["algorithm", "env", "demos"])]
    manifest: Option<PathBuf>,
    #[arg(long, required_unless_present = "manifest")]
    algorithm: Option<String>,
    #[arg(long, required_unless_present = "manifest")]
    env: Option<PathBuf>,
    /// Fixed demonstrations; without them the exact expert distribution is used.
    #[arg(long)]
    demos: Option<PathBuf>,
    /// Recompute the summary from the per-seed records and fail on mismatch.
    #[arg(long)]
    audit: bool,
}

/// Reads plain JSON; a `schema` field, if present, is ignored.
fn read_plain<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

impl Cli {
    fn seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.seed]
        } else {
            self.seeds.clone()
        }
    }

    fn run_config(&self) -> Result<RunConfig> {
        match &self.config {
            Some(path) => read_plain(path),
            None => Ok(RunConfig::default()),
        }
    }

    fn out_or(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

fn gen_env(cli: &Cli, args: &GenEnvArgs) -> Result<()> {
    let spec = ObjectworldSpec {
        grid_size: args.n,
        colors: args.colors,
        objects: args.objects,
        wind: args.wind,
        gamma: args.gamma,
        seed: cli.seed,
        features: match args.binary_threshold {
            Some(threshold) => FeatureKind::Binary { threshold },
            None => FeatureKind::Continuous,
        },
    };
    let instance = objectworld::generate(&spec)?;
    let out = cli.out_or("env.json");
    io::write_json(&out, &instance)?;
    println!(
        "wrote {} ({} states, {} objects)",
        out.display(),
        instance.n_states(),
        instance.objects.len()
    );
    Ok(())
}

fn sample_demos(cli: &Cli, env: &Path, episodes: usize, horizon: usize) -> Result<()> {
    let instance: ObjectworldInstance = io::read_json(env)?;
    let (expert, _) = objectworld::expert(&instance)?;
    let demos = sample_trajectories(&instance.mdp, &expert, episodes, horizon, cli.seed)?;
    let out = cli.out_or("demos.json");
    io::write_json(&out, &demos)?;
    println!("wrote {} ({} transitions)", out.display(), demos.n_steps());
    Ok(())
}

fn run(cli: &Cli, args: &RunArgs) -> Result<()> {
    let manifest = match &args.manifest {
        Some(path) => read_plain::<ExperimentManifest>(path)?,
        None => {
            let algorithm: Algorithm = args.algorithm.as_deref().unwrap_or_default().parse()?;
            ExperimentManifest {
                algorithm,
                environment: args.env.clone().unwrap_or_default(),
                demos: args.demos.clone(),
                config: cli.run_config()?,
                seeds: cli.seeds(),
                output: cli.out_or(&format!("runs/{algorithm}")),
            }
        }
    };
    let result = experiment::run_manifest(&manifest, cli.jobs)?;
    for r in &result.records {
        let viol = r.violations.map(|v| format!(" violations={v}")).unwrap_or_default();
        println!(
            "{} seed={} evd={:.6} wall_clock={:.4}s iterations={} converged={}{viol}",
            r.algorithm, r.seed, r.evd, r.wall_clock_secs, r.iterations, r.converged
        );
    }
    for f in &result.failures {
        eprintln!("seed {} failed: {}", f.seed, f.error);
    }
    let s = &result.summary;
    println!(
        "{}: evd {:.6} ± {:.6}, wall-clock {:.4} ± {:.4} s over {} seeds ({} failed)",
        s.algorithm, s.evd_mean, s.evd_sd, s.wall_clock_mean, s.wall_clock_sd, s.n_seeds, s.n_failed
    );
    println!("results in {}", manifest.output.display());
    if args.audit && !s.audit(&result.records) {
        return Err(Error::Numerical("summary does not match per-seed records".into()));
    }
    if result.records.is_empty() {
        return Err(Error::InvalidInput("every seed failed".into()));
    }
    Ok(())
}

fn curve(cli: &Cli, algorithm: &str, env: &Path, counts: &[usize]) -> Result<()> {
    let algorithm: Algorithm = algorithm.parse()?;
    let instance: ObjectworldInstance = io::read_json(env)?;
    let points = experiment::run_curve(&instance, algorithm, &cli.run_config()?, counts, &cli.seeds(), cli.jobs)?;
    let mut csv = Vec::new();
    experiment::write_curve_csv(&points, &mut csv)?;
    let text = String::from_utf8_lossy(&csv);
    let out = cli.out_or("curve.csv");
    write_text(&out, &text)?;
    print!("{text}");
    Ok(())
}

fn evd(env: &Path, reward: &Path) -> Result<()> {
    let instance: ObjectworldInstance = io::read_json(env)?;
    let reward: RewardTable = io::read_json(reward)?;
    println!(
        "{}",
        expected_value_difference(&instance.mdp, &instance.true_reward, &reward)?
    );
    Ok(())
}

fn inspect(path: &Path) -> Result<()> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let has = |key: &str| value.get(key).is_some();
    if has("objects") && has("mdp") {
        let inst: ObjectworldInstance = io::from_json(&text)?;
        let rewards = inst.true_reward.values();
        let count = |v: f64| rewards.iter().filter(|&&r| r == v).count() / inst.mdp.n_actions();
        println!(
            "objectworld {0}x{0}: {1} colors, {2} objects, wind {3}, gamma {4}, seed {5}",
            inst.spec.grid_size,
            inst.spec.colors,
            inst.objects.len(),
            inst.spec.wind,
            inst.spec.gamma,
            inst.spec.seed
        );
        println!(
            "states {}, feature dim {}, reward cells +1: {}, -1: {}",
            inst.n_states(),
            inst.feature_dim(),
            count(1.0),
            count(-1.0)
        );
    } else if has("episodes") {
        let demos: TrajectorySet = io::from_json(&text)?;
        println!(
            "demonstrations: {} episodes, {} transitions, horizon {}, seed {}",
            demos.episodes.len(),
            demos.n_steps(),
            demos.horizon,
            demos.seed
        );
    } else if has("records") && has("summary") {
        let res: experiment::ExperimentResult = io::from_json(&text)?;
        let s = &res.summary;
        println!(
            "{} over {} seeds ({} failed): evd {:.6} ± {:.6}, wall-clock {:.4} ± {:.4} s, audit {}",
            s.algorithm,
            s.n_seeds,
            s.n_failed,
            s.evd_mean,
            s.evd_sd,
            s.wall_clock_mean,
            s.wall_clock_sd,
            if s.audit(&res.records) { "ok" } else { "MISMATCH" }
        );
    } else if has("algorithm") && has("seeds") {
        let m: ExperimentManifest = read_plain(path)?;
        println!(
            "manifest: {} on {}, seeds {:?}, output {}",
            m.algorithm,
            m.environment.display(),
            m.seeds,
            m.output.display()
        );
    } else if has("n_states") && has("values") {
        let table: RewardTable = io::from_json(&text)?;
        let v = table.values();
        let (lo, hi) = v
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
        println!("table {}x{}, range [{lo}, {hi}]", table.n_states(), table.n_actions());
    } else {
        return Err(Error::InvalidInput(format!("unrecognised artifact {}", path.display())));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::GenEnv(args) => gen_env(&cli, args),
        Command::SampleDemos { env, episodes, horizon } => sample_demos(&cli, env, *episodes, *horizon),
        Command::Run(args) => run(&cli, args),
        Command::Curve { algorithm, env, counts } => curve(&cli, algorithm, env, counts),
        Command::Evd { env, reward } => evd(env, reward),
        Command::Inspect { path } => inspect(path),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
