use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use stitchsim::estimator::{Learner, TableLatency};
use stitchsim::experiments::{latency_error_row, recall_rows, run_experiment, AccuracyDriver, ExperimentSpec, SeedWorld};
use stitchsim::io::{read_csv, read_json, write_csv, write_json};
use stitchsim::optimizer::{PlanFile, PlanResult};
use stitchsim::preloader::{compute_hotness, greedy_preload, Admission, PreloadFile, PreloadPlan, SwitchCost};
use stitchsim::profiles::{generate_synthetic, intel_processors, jetson_processors, GenParams, ProfileFile};
use stitchsim::simulator::{aggregate, run_simulation_with_plans, Permutations, PolicyKind, ReportRow, SimSettings, WorkloadSpec};
use stitchsim::zoo::{enumerate_stitched, stitched_variant_count, template_zoo, Platform, ZooFile};
use stitchsim::{Error, ProfileTable, Result, SloConfig, Zoo};

#[derive(Parser)]
#[command(name = "stitchsim", version, about = "Stitched-variant planning and serving simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a template model zoo.
    GenZoo(GenZooArgs),
    /// Generate a synthetic profile table for a zoo.
    GenProfiles(GenProfilesArgs),
    /// Enumerate stitched variants.
    Stitch(StitchArgs),
    /// Train accuracy estimators and write the lookup table and SLO grid.
    Profile(ProfileArgs),
    /// Choose a processor order and per-task variants for SLO configs.
    Optimize(OptimizeArgs),
    /// Select subgraphs to preload under a memory budget.
    Preload(PreloadArgs),
    /// Simulate policies over arrival orders.
    Simulate(SimulateArgs),
    /// Run an experiment spec and write its bundle.
    Experiment(ExperimentArgs),
    /// Post-process a simulation report.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Template {
    Intel,
    Jetson,
}

impl From<Template> for Platform {
    fn from(t: Template) -> Self {
        match t {
            Template::Intel => Platform::Intel,
            Template::Jetson => Platform::Jetson,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AccuracyArg {
    Estimator,
    Truth,
}

#[derive(Clone, Copy, ValueEnum)]
enum AdmissionArg {
    Single,
    Rounds,
}

#[derive(Clone, Copy, ValueEnum)]
enum Emit {
    Summary,
}

#[derive(Args)]
struct OutDir {
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct GenZooArgs {
    #[arg(long, value_enum, default_value = "intel")]
    template: Template,
    #[arg(long)]
    tasks: Option<usize>,
    #[arg(long)]
    variants: Option<usize>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct GenProfilesArgs {
    #[arg(long)]
    zoo: PathBuf,
    /// Processor set and generator defaults; inferred from the zoo's subgraph count when omitted.
    #[arg(long, value_enum)]
    platform: Option<Template>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = non_negative)]
    sigma_acc: Option<f64>,
    #[arg(long, value_parser = non_negative)]
    comm_ms: Option<f64>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct StitchArgs {
    #[arg(long)]
    zoo: PathBuf,
    /// Print the total stitched-variant count only.
    #[arg(long)]
    count_only: bool,
    #[arg(long, required_unless_present = "count_only")]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct WorldArgs {
    #[arg(long)]
    zoo: PathBuf,
    #[arg(long)]
    profiles: PathBuf,
    /// Seed for estimator training samples.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    train_n: usize,
    /// Per-hop cost used by the latency estimate; defaults to the profile's value.
    #[arg(long, value_parser = non_negative)]
    comm_ms: Option<f64>,
    #[arg(long, value_enum, default_value = "estimator")]
    accuracy: AccuracyArg,
}

#[derive(Args)]
struct ProfileArgs {
    #[command(flatten)]
    world: WorldArgs,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    world: WorldArgs,
    /// One SLO config or a list of them.
    #[arg(long)]
    slo: PathBuf,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct PreloadArgs {
    #[command(flatten)]
    world: WorldArgs,
    #[arg(long)]
    slo: PathBuf,
    /// Fraction of the full-preload memory.
    #[arg(long, value_parser = fraction)]
    budget_frac: f64,
    #[arg(long, value_enum, default_value = "rounds")]
    admission: AdmissionArg,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    world: WorldArgs,
    #[arg(long)]
    slo: PathBuf,
    /// Precomputed plans for the stitched policy; planned afresh when omitted.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Preload plan for the stitched policy; everything resident when omitted.
    #[arg(long)]
    preload: Option<PathBuf>,
    /// Comma-separated policy labels, or `all`.
    #[arg(long, default_value = "all")]
    policy: String,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    queries: u32,
    #[arg(long, default_value = "all")]
    permutations: Permutations,
    #[arg(long, value_parser = non_negative)]
    compile_x: Option<f64>,
    #[arg(long, value_parser = non_negative)]
    load_x: Option<f64>,
    /// Per-hop delay applied by the simulator only.
    #[arg(long, default_value_t = 0.0, value_parser = non_negative)]
    hop_ms: f64,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct ExperimentArgs {
    spec: PathBuf,
    /// Run this single seed instead of the spec's list.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "summary")]
    emit: Emit,
    #[command(flatten)]
    out: OutDir,
}

fn non_negative(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be a finite non-negative number"))
    }
}

fn fraction(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

/// Reads a JSON file holding either one object or a list of them; the flag
/// is true for a bare object.
fn read_one_or_many<T: DeserializeOwned>(path: &Path) -> Result<(Vec<T>, bool)> {
    let value: serde_json::Value = read_json(path)?;
    let single = value.is_object();
    let parsed = if single { serde_json::from_value(value).map(|v| vec![v]) } else { serde_json::from_value(value) };
    let items = parsed.map_err(|e| Error::Format { path: path.into(), message: e.to_string() })?;
    if items.is_empty() {
        return Err(Error::Format { path: path.into(), message: "empty list".into() });
    }
    Ok((items, single))
}

fn read_slos(path: &Path) -> Result<(Vec<SloConfig>, bool)> {
    read_one_or_many(path)
}

fn read_zoo(path: &Path) -> Result<Zoo> {
    Zoo::from_file(read_json::<ZooFile>(path)?).map_err(|e| Error::from(e).context(path.display().to_string()))
}

fn read_profiles(path: &Path) -> Result<ProfileTable> {
    ProfileTable::from_file(read_json::<ProfileFile>(path)?).map_err(|e| Error::from(e).context(path.display().to_string()))
}

fn load_world(a: &WorldArgs) -> Result<SeedWorld> {
    let zoo = read_zoo(&a.zoo)?;
    let table = read_profiles(&a.profiles)?;
    let comm = a.comm_ms.unwrap_or_else(|| TableLatency::new(&table).comm_ms);
    let accuracy = match a.accuracy {
        AccuracyArg::Estimator => AccuracyDriver::Estimator,
        AccuracyArg::Truth => AccuracyDriver::GroundTruth,
    };
    SeedWorld::from_parts(zoo, table, a.seed, a.train_n, &Learner::default(), accuracy, comm)
}

fn written(path: &Path) {
    println!("{}", path.display());
}

fn gen_zoo(a: GenZooArgs) -> Result<()> {
    let full = template_zoo(a.template.into());
    let t = a.tasks.unwrap_or(full.tasks().len());
    let v = a.variants.unwrap_or(usize::MAX).min(full.tasks().iter().map(|tz| tz.variants.len()).min().unwrap_or(0));
    let zoo = full.truncated(t, v)?;
    let path = a.out.out_dir.join("zoo.json");
    write_json(&path, &zoo.to_file())?;
    written(&path);
    Ok(())
}

fn gen_profiles(a: GenProfilesArgs) -> Result<()> {
    let zoo = read_zoo(&a.zoo)?;
    let platform = match a.platform {
        Some(p) => p,
        None if zoo.tasks().first().is_some_and(|tz| tz.task.subgraph_count == 2) => Template::Jetson,
        None => Template::Intel,
    };
    let (procs, mut params) = match platform {
        Template::Intel => (intel_processors(), GenParams::intel()),
        Template::Jetson => (jetson_processors(), GenParams::jetson()),
    };
    if let Some(s) = a.sigma_acc {
        params.sigma_acc = s;
    }
    if let Some(c) = a.comm_ms {
        params.comm_ms = c;
    }
    let table = generate_synthetic(&zoo, &procs, &params, a.seed)?;
    let path = a.out.out_dir.join("profiles.json");
    write_json(&path, &table.to_file())?;
    written(&path);
    Ok(())
}

#[derive(Serialize)]
struct StitchRow {
    task_id: u32,
    rank: u64,
    donors: String,
}

fn stitch(a: StitchArgs) -> Result<()> {
    let zoo = read_zoo(&a.zoo)?;
    if a.count_only {
        let mut total = 0u64;
        for tz in zoo.tasks() {
            total += stitched_variant_count(1, tz.task.variant_count as u64, tz.task.subgraph_count)?;
        }
        println!("{total}");
        return Ok(());
    }
    let rows: Vec<StitchRow> = zoo
        .tasks()
        .iter()
        .flat_map(|tz| {
            enumerate_stitched(&tz.task).into_iter().map(|m| StitchRow {
                task_id: m.task_id,
                rank: m.rank(tz.task.variant_count),
                donors: m.donors_label(),
            })
        })
        .collect();
    let path = a.out_dir.expect("required unless count-only").join("stitched.csv");
    write_csv(&path, None, &rows)?;
    written(&path);
    Ok(())
}

#[derive(Serialize)]
struct LookupRow {
    task_id: u32,
    donors: String,
    order: String,
    accuracy: f64,
    latency_ms: f64,
}

fn profile(a: ProfileArgs) -> Result<()> {
    let sw = load_world(&a.world)?;
    let dir = &a.out.out_dir;
    let procs = sw.table.processors();
    let labels: Vec<String> = sw.candidates.orders.iter().map(|o| o.label(procs)).collect();
    let mut lookup = Vec::new();
    for t in &sw.candidates.tasks {
        for (i, m) in t.maps.iter().enumerate() {
            for (k, label) in labels.iter().enumerate() {
                lookup.push(LookupRow {
                    task_id: t.task_id,
                    donors: m.donors_label(),
                    order: label.clone(),
                    accuracy: t.accuracy[i],
                    latency_ms: t.latency[i][k],
                });
            }
        }
    }
    let seed = Some(sw.seed);
    for (name, result) in [
        ("lookup.csv", write_csv(&dir.join("lookup.csv"), seed, &lookup)),
        ("estimator_eval.csv", write_csv(&dir.join("estimator_eval.csv"), seed, &recall_rows(&sw, &[1, 5, 10, 20, 50])?)),
        ("latency_error.csv", write_csv(&dir.join("latency_error.csv"), seed, &[latency_error_row(&sw, sw.comm_ms)?])),
        ("slo_configs.json", write_json(&dir.join("slo_configs.json"), &sw.slo25())),
    ] {
        result?;
        written(&dir.join(name));
    }
    Ok(())
}

fn plans_for(sw: &SeedWorld, configs: &[SloConfig]) -> Result<Vec<Option<PlanResult>>> {
    configs.iter().map(|c| sw.world().plan(c)).collect()
}

fn optimize(a: OptimizeArgs) -> Result<()> {
    let sw = load_world(&a.world)?;
    let (configs, single) = read_slos(&a.slo)?;
    let mut files = Vec::new();
    for (c, p) in configs.iter().zip(plans_for(&sw, &configs)?) {
        match p {
            Some(p) => files.push(PlanFile { seed: Some(sw.seed), ..p.to_file(sw.table.processors()) }),
            None if single => return Err(Error::Invalid(format!("config {}: every task is infeasible", c.config_id))),
            // no order exists to record; the simulator treats a missing plan the same way
            None => log::warn!("config {}: every task is infeasible, no plan written", c.config_id),
        }
    }
    let path = if single {
        let path = a.out.out_dir.join("plan.json");
        write_json(&path, &files[0])?;
        path
    } else {
        let path = a.out.out_dir.join("plans.json");
        write_json(&path, &files)?;
        path
    };
    written(&path);
    Ok(())
}

fn preload(a: PreloadArgs) -> Result<()> {
    let sw = load_world(&a.world)?;
    let (configs, _) = read_slos(&a.slo)?;
    let hotness = compute_hotness(&sw.satisfying_sets(&configs)?);
    let budget = (sw.zoo.full_preload_memory()? as f64 * a.budget_frac).floor() as u64;
    let admission = match a.admission {
        AdmissionArg::Single => Admission::Single,
        AdmissionArg::Rounds => Admission::Rounds,
    };
    let plan = greedy_preload(&hotness, &sw.zoo, budget, admission);
    let path = a.out.out_dir.join("preload.json");
    write_json(&path, &PreloadFile { seed: Some(sw.seed), ..plan.to_file() })?;
    written(&path);
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let policies: Vec<PolicyKind> = if a.policy.eq_ignore_ascii_case("all") {
        PolicyKind::ALL.to_vec()
    } else {
        a.policy.split(',').map(|s| s.trim().parse().map_err(Error::Invalid)).collect::<Result<_>>()?
    };
    let sw = load_world(&a.world)?;
    let (configs, _) = read_slos(&a.slo)?;
    let plans = match &a.plan {
        None => plans_for(&sw, &configs)?,
        Some(path) => {
            let (files, _) = read_one_or_many::<PlanFile>(path)?;
            configs
                .iter()
                .map(|c| {
                    files
                        .iter()
                        .find(|f| f.config_id == c.config_id)
                        .map(|f| PlanResult::from_file(f, sw.table.processors()).map_err(|e| Error::from(e).context(path.display().to_string())))
                        .transpose()
                })
                .collect::<Result<_>>()?
        }
    };
    let preload = a.preload.as_ref().map(|p| PreloadPlan::from_file(&read_json::<PreloadFile>(p)?, &sw.zoo)).transpose()?;
    let d = SwitchCost::default();
    let settings = SimSettings {
        injected_hop_ms: a.hop_ms,
        switch: SwitchCost { compile_x: a.compile_x.unwrap_or(d.compile_x), load_x: a.load_x.unwrap_or(d.load_x) },
    };
    let workload = WorkloadSpec { queries_per_task: a.queries, permutations: a.permutations };
    let report = run_simulation_with_plans(&sw.world(), &workload, &policies, &configs, &plans, &settings, preload.as_ref(), sw.seed)?;
    let dir = &a.out.out_dir;
    write_csv(&dir.join("report.csv"), Some(sw.seed), &report.rows)?;
    written(&dir.join("report.csv"));
    write_csv(&dir.join("summary.csv"), Some(sw.seed), &aggregate(&report.rows))?;
    written(&dir.join("summary.csv"));
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let mut spec = ExperimentSpec::load(&a.spec)?;
    if let Some(s) = a.seed {
        spec.seeds = vec![s];
    }
    let bundle = run_experiment(&spec, &a.out.out_dir)?;
    for f in &bundle.files {
        written(&a.out.out_dir.join(f));
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let rows: Vec<ReportRow> = read_csv(&a.input)?;
    let seed = rows.first().map(|r| r.seed).filter(|s| rows.iter().all(|r| r.seed == *s));
    match a.emit {
        Emit::Summary => {
            let path = a.out.out_dir.join("summary.csv");
            write_csv(&path, seed, &aggregate(&rows))?;
            written(&path);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenZoo(a) => gen_zoo(a),
        Command::GenProfiles(a) => gen_profiles(a),
        Command::Stitch(a) => stitch(a),
        Command::Profile(a) => profile(a),
        Command::Optimize(a) => optimize(a),
        Command::Preload(a) => preload(a),
        Command::Simulate(a) => simulate(a),
        Command::Experiment(a) => experiment(a),
        Command::Report(a) => report(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::new().filter_level(log::LevelFilter::Warn).init();
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::from(1)
        }
    }
}
