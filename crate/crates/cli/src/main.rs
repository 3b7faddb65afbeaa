use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use segbench_core::harness::{
    cmd_evaluate, cmd_rank, cmd_subgroup, cmd_volumes, AlgorithmSpec, CaseManifest, EvaluateOptions, EvaluationRun,
    HarnessError, RankOptions, SubgroupKey,
};
use segbench_core::metrics::ToleranceTable;
use segbench_core::profiler::{Invocation, MockSampler, ProcSampler, ResourceProvider, DEFAULT_TIMEOUT_S};
use segbench_core::stats::{DEFAULT_N_BOOT, DEFAULT_SEED};

/// Benchmark harness for 3D abdominal multi-organ segmentation algorithms.
///
/// Environment: SEGBENCH_SAMPLER selects the resource sampler for
/// `evaluate` (`real`, the default, or `mock`); with `mock`,
/// SEGBENCH_MOCK_TRACE may name a CSV script of `t,gpu_mb,cpu_pct`
/// breakpoints (zeros when unset).
#[derive(Parser)]
#[command(name = "segbench", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an algorithm on every case of a manifest and score it.
    Evaluate(EvaluateArgs),
    /// Rank evaluated algorithms and analyse ranking stability.
    Rank(RankArgs),
    /// Summarise one run's accuracy by a metadata field.
    Subgroup(SubgroupArgs),
    /// Correlate predicted with ground-truth organ volumes for one run.
    Volumes(VolumesArgs),
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Algorithm name; results go to <out>/<name>/.
    #[arg(long)]
    name: String,
    /// Tolerance table (overrides the manifest directive).
    #[arg(long)]
    tolerances: Option<PathBuf>,
    /// Per-case time budget in seconds.
    #[arg(long, default_value_t = DEFAULT_TIMEOUT_S)]
    timeout: f64,
    /// Do not pass the harness environment to the algorithm.
    #[arg(long)]
    clean_env: bool,
    /// Algorithm program and leading arguments; the case input and output
    /// directory are appended.
    #[arg(last = true, required = true, num_args = 1..)]
    command: Vec<String>,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long = "n-boot", default_value_t = DEFAULT_N_BOOT)]
    n_boot: usize,
    /// run.json files, or the algorithm directories holding them.
    #[arg(required = true, num_args = 1..)]
    runs: Vec<PathBuf>,
}

#[derive(Args)]
struct SubgroupArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// run.json file or algorithm directory.
    #[arg(long)]
    run: PathBuf,
    /// sex, age_group, manufacturer or region.
    #[arg(long)]
    key: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VolumesArgs {
    /// run.json file or algorithm directory.
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn sampler_from_env() -> Result<Box<dyn ResourceProvider>, HarnessError> {
    match std::env::var("SEGBENCH_SAMPLER").as_deref() {
        Err(_) | Ok("") | Ok("real") => Ok(Box::new(ProcSampler::new())),
        Ok("mock") => {
            let sampler = match std::env::var_os("SEGBENCH_MOCK_TRACE") {
                Some(path) => MockSampler::from_file(path.as_ref()),
                None => MockSampler::new(Vec::new()),
            };
            Ok(Box::new(sampler?))
        }
        Ok(other) => Err(HarnessError::Config(format!(
            "SEGBENCH_SAMPLER must be 'real' or 'mock', got '{other}'"
        ))),
    }
}

fn evaluate(args: EvaluateArgs) -> Result<(), HarnessError> {
    if !(args.timeout > 0.0 && args.timeout.is_finite()) {
        return Err(HarnessError::Config(format!("--timeout {} must be > 0", args.timeout)));
    }
    let manifest = CaseManifest::load(&args.manifest)?;
    let tolerances = args.tolerances.map(ToleranceTable::from_file).transpose()?;
    let mut parts = args.command.into_iter();
    let program = parts.next().unwrap_or_default();
    let mut invocation = Invocation::new(program, parts);
    invocation.inherit_env = !args.clean_env;
    let algorithm = AlgorithmSpec::new(args.name, invocation)?;
    let options = EvaluateOptions {
        timeout_s: args.timeout,
        tolerances,
    };
    let mut sampler = sampler_from_env()?;
    let run = cmd_evaluate(&manifest, &algorithm, &args.out, &options, sampler.as_mut())?;
    let count = |s| run.cases.iter().filter(|c| c.status() == s).count();
    use segbench_core::profiler::RunStatus::*;
    println!(
        "{}: {} cases, {} completed, {} stuck, {} failed",
        run.algorithm.name,
        run.cases.len(),
        count(Completed),
        count(Stuck),
        count(Failed)
    );
    Ok(())
}

fn rank(args: RankArgs) -> Result<(), HarnessError> {
    let runs = args
        .runs
        .iter()
        .map(|p| EvaluationRun::load(p))
        .collect::<Result<Vec<_>, _>>()?;
    let options = RankOptions {
        n_boot: args.n_boot,
        seed: args.seed,
    };
    let outcome = cmd_rank(&runs, &args.out, &options)?;
    println!("rank\tscore\talgorithm");
    for e in &outcome.leaderboard.entries {
        println!("{}\t{:.4}\t{}", e.final_rank, e.aggregate_score, e.algorithm);
    }
    if let Some(b) = &outcome.bootstrap {
        println!(
            "bootstrap: n = {}, median Kendall tau = {:.4}",
            b.n_boot, b.overall_summary.median
        );
    }
    Ok(())
}

fn subgroup(args: SubgroupArgs) -> Result<(), HarnessError> {
    let key: SubgroupKey = args.key.parse()?;
    let manifest = CaseManifest::load(&args.manifest)?;
    let run = EvaluationRun::load(&args.run)?;
    let summary = cmd_subgroup(&run, &manifest, key, Some(&args.out))?;
    println!("{}\tn\tdsc_median\tdsc_iqr\tnsd_median\tnsd_iqr", summary.key);
    for g in &summary.groups {
        println!(
            "{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            g.group, g.n_cases, g.dsc_median, g.dsc_iqr, g.nsd_median, g.nsd_iqr
        );
    }
    Ok(())
}

fn volumes(args: VolumesArgs) -> Result<(), HarnessError> {
    let run = EvaluationRun::load(&args.run)?;
    let report = cmd_volumes(&run, Some(&args.out))?;
    println!("organ\tn\tpearson_r");
    for o in &report.organs {
        let r = o.pearson_r.map_or_else(|| "-".to_string(), |r| format!("{r:.4}"));
        println!("{}\t{}\t{r}", o.organ, o.pairs.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Evaluate(a) => evaluate(a),
        Command::Rank(a) => rank(a),
        Command::Subgroup(a) => subgroup(a),
        Command::Volumes(a) => volumes(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
