//! `hmplace` command-line front end.
//!
//! Exit status: 0 on success, 1 on usage or input errors, 2 when the
//! requested plan is infeasible.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hmplace_core::baselines::{place_all, place_moca, place_random};
use hmplace_core::device::{DeviceSpec, GIB};
use hmplace_core::evaluate::{compare, evaluate, EvaluationReport};
use hmplace_core::migration::{
    plan_migration, MigrationOptions, MigrationRequest, MigrationStatus,
};
use hmplace_core::placement::{Device, PlacementPlan};
use hmplace_core::planner::{
    build_program, plan_static, sweep_ratios, PlanError, PlanOutcome, PlannerOptions,
};
use hmplace_core::profile::{load_profile_dir, ProfileSet, DEFAULT_MAJOR_THRESHOLD};
use hmplace_core::scaling::{derive_scaling_vector, extrapolate};
use hmplace_core::synth::{generate_synthetic, GeneratorSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "hmplace", version, about = "DRAM/NVM object placement planner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Latency-optimal placement under an energy ratio
    Plan(PlanArgs),
    /// Re-plan mid-run with object migration
    Migrate(MigrateArgs),
    /// Score an existing placement
    Evaluate(EvaluateArgs),
    /// Score several placements side by side
    Compare(CompareArgs),
    /// Plan over a grid of capacities and energy ratios
    Sweep(SweepArgs),
    /// Extrapolate profiles to a larger workload
    Scale(ScaleArgs),
    /// Write a synthetic profile set
    Generate(GenerateArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Args, Debug)]
pub struct DeviceArgs {
    /// Device description (TOML)
    #[arg(long, conflicts_with = "preset")]
    pub device: Option<PathBuf>,
    /// Built-in device: testbed1 or testbed2
    #[arg(long, default_value = "testbed1")]
    pub preset: String,
    /// Override DRAM capacity, GiB
    #[arg(long)]
    pub dram_gib: Option<f64>,
    /// Override NVM capacity, GiB
    #[arg(long)]
    pub nvm_gib: Option<f64>,
}

impl DeviceArgs {
    fn load(&self) -> Result<DeviceSpec> {
        let mut dev = match &self.device {
            Some(p) => DeviceSpec::read_file(p)
                .with_context(|| format!("reading device {}", p.display()))?,
            None => DeviceSpec::preset(&self.preset)?,
        };
        if let Some(d) = self.dram_gib {
            dev.dram_capacity_bytes = d * GIB;
        }
        if let Some(n) = self.nvm_gib {
            dev.nvm_capacity_bytes = n * GIB;
        }
        dev.validate()?;
        Ok(dev)
    }
}

#[derive(Args, Debug)]
pub struct PlannerArgs {
    /// Objects with more accessed bytes than this are placement targets
    #[arg(long, default_value_t = DEFAULT_MAJOR_THRESHOLD)]
    pub major_threshold: f64,
    /// DRAM held outside the profiled heap, bytes
    #[arg(long, default_value_t = 0.0)]
    pub reserved_dram: f64,
    /// Count minor objects on both sides of the energy budget
    #[arg(long)]
    pub include_minor_energy: bool,
}

impl PlannerArgs {
    fn options(&self) -> Result<PlannerOptions> {
        if !(self.major_threshold >= 0.0 && self.reserved_dram >= 0.0) {
            bail!("--major-threshold and --reserved-dram must be non-negative");
        }
        Ok(PlannerOptions {
            major_threshold: self.major_threshold,
            reserved_dram_bytes: self.reserved_dram,
            include_minor_energy: self.include_minor_energy,
        })
    }
}

#[derive(Args, Debug)]
pub struct OutputArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    #[arg(long)]
    pub profiles: PathBuf,
    /// Energy budget as a fraction of the all-DRAM energy
    #[arg(long)]
    pub ratio: f64,
    /// Also write the 0-1 program in LP format
    #[arg(long)]
    pub dump_lp: Option<PathBuf>,
    #[command(flatten)]
    pub device: DeviceArgs,
    #[command(flatten)]
    pub planner: PlannerArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Meet the new ratio or keep the current placement
    Strict,
    /// Any plan that uses no more energy than staying put
    BestEffort,
}

#[derive(Args, Debug)]
pub struct MigrateArgs {
    #[arg(long)]
    pub profiles: PathBuf,
    /// Placement in effect before the request
    #[arg(long)]
    pub current: PathBuf,
    /// Seconds since program start
    #[arg(long)]
    pub time: f64,
    /// New energy ratio
    #[arg(long)]
    pub ratio: f64,
    #[arg(long, value_enum, default_value = "strict")]
    pub mode: Mode,
    /// Require room for both copies of every moved object
    #[arg(long)]
    pub strict_capacity: bool,
    /// Write the plan for objects allocated after the request here
    #[arg(long)]
    pub companion_out: Option<PathBuf>,
    #[command(flatten)]
    pub device: DeviceArgs,
    #[command(flatten)]
    pub planner: PlannerArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub profiles: PathBuf,
    #[arg(long)]
    pub plan: PathBuf,
    /// Per-object energy table (CSV)
    #[arg(long)]
    pub breakdown: Option<PathBuf>,
    #[command(flatten)]
    pub device: DeviceArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[arg(long)]
    pub profiles: PathBuf,
    /// `name=path`, or one of all-dram, all-nvm, moca:THRESHOLD,
    /// random:SEED, planner:RATIO
    #[arg(long = "plan", required = true)]
    pub plans: Vec<String>,
    #[command(flatten)]
    pub device: DeviceArgs,
    #[command(flatten)]
    pub planner: PlannerArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub profiles: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub ratios: Vec<f64>,
    /// DRAM:NVM capacities in GiB, e.g. 8:16,4:16
    #[arg(long, value_delimiter = ',')]
    pub capacities: Vec<String>,
    #[command(flatten)]
    pub device: DeviceArgs,
    #[command(flatten)]
    pub planner: PlannerArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct ScaleArgs {
    /// Profile files in increasing workload order
    #[arg(long, value_delimiter = ',', required_unless_present = "profile_dir")]
    pub profiles: Vec<PathBuf>,
    /// Directory with a manifest.csv listing the profiles
    #[arg(long, conflicts_with = "profiles")]
    pub profile_dir: Option<PathBuf>,
    /// Workload size to extrapolate to
    #[arg(long)]
    pub target: f64,
    /// Also write the per-object gradients (JSON)
    #[arg(long)]
    pub vector_out: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 14)]
    pub count: usize,
    #[arg(long, default_value_t = 5)]
    pub top_count: usize,
    #[arg(long, default_value_t = 0.99)]
    pub top_share: f64,
    #[arg(long, default_value_t = GIB)]
    pub total_bytes: f64,
    #[arg(long, default_value_t = 60.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub workload_size: Option<f64>,
    #[arg(long, default_value = "synthetic")]
    pub label: String,
    /// Leave the llc_mpki column empty
    #[arg(long)]
    pub no_mpki: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Parses `args` and runs the command, returning the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_USAGE
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Plan(a) => cmd_plan(a),
        Command::Migrate(a) => cmd_migrate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Scale(a) => cmd_scale(a),
        Command::Generate(a) => cmd_generate(a),
    }
}

fn read_profiles(path: &Path) -> Result<ProfileSet> {
    ProfileSet::read_file(path).with_context(|| format!("reading profiles {}", path.display()))
}

fn read_plan(path: &Path) -> Result<PlacementPlan> {
    PlacementPlan::read_file(path).with_context(|| format!("reading plan {}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(ratio.is_finite() && ratio > 0.0) {
        bail!("--ratio must be positive, got {ratio}");
    }
    Ok(())
}

fn plan_output(plan: &PlacementPlan, format: Format) -> String {
    match format {
        Format::Csv => plan.to_text(),
        Format::Json => plan.to_json(),
    }
}

fn cmd_plan(a: PlanArgs) -> Result<i32> {
    check_ratio(a.ratio)?;
    let profiles = read_profiles(&a.profiles)?;
    let dev = a.device.load()?;
    let opts = a.planner.options()?;
    if let Some(lp) = &a.dump_lp {
        let built = build_program(&profiles, &dev, a.ratio, &opts)?;
        write(lp, &built.program.to_lp_format())?;
    }
    match plan_static(&profiles, &dev, a.ratio, &opts)? {
        PlanOutcome::Optimal(plan) => {
            log::info!(
                "{} of {} objects in DRAM, objective {} ns",
                plan.count_on(Device::Dram),
                plan.entries.len(),
                plan.objective_ns
            );
            write(&a.output.out, &plan_output(&plan, a.output.format))?;
            Ok(EXIT_OK)
        }
        PlanOutcome::Infeasible(inf) => {
            let names: Vec<&str> = inf.violated.iter().map(|k| k.name()).collect();
            eprintln!(
                "infeasible at ratio {} (budget {} nJ); conflicting constraints: {}",
                inf.ratio,
                inf.energy_budget_nj,
                names.join(", ")
            );
            Ok(EXIT_INFEASIBLE)
        }
    }
}

fn cmd_migrate(a: MigrateArgs) -> Result<i32> {
    check_ratio(a.ratio)?;
    let profiles = read_profiles(&a.profiles)?;
    let current = read_plan(&a.current)?;
    let dev = a.device.load()?;
    let opts = a.planner.options()?;
    let request = MigrationRequest {
        time: a.time,
        new_ratio: a.ratio,
        strict: a.mode == Mode::Strict,
    };
    let mopts = MigrationOptions {
        strict_capacity: a.strict_capacity,
    };
    let plan = plan_migration(&profiles, &dev, &current, &request, &opts, &mopts)?;
    let text = match a.output.format {
        Format::Csv => plan.to_text(),
        Format::Json => plan.to_json(),
    };
    write(&a.output.out, &text)?;
    if let Some(path) = &a.companion_out {
        match plan.companion.as_ref() {
            Some(PlanOutcome::Optimal(p)) => write(path, &plan_output(p, a.output.format))?,
            Some(PlanOutcome::Infeasible(_)) => {
                log::warn!("no feasible plan for objects allocated later")
            }
            None => log::info!("no objects are allocated after t = {}", a.time),
        }
    }
    log::info!("{} migrations", plan.migrations());
    if plan.status == MigrationStatus::Infeasible {
        eprintln!(
            "infeasible: no migration set meets {} nJ within capacity; current placement kept",
            plan.requirement_nj
        );
        return Ok(EXIT_INFEASIBLE);
    }
    Ok(EXIT_OK)
}

const REPORT_HEADER: &str = "plan,energy_nJ,all_dram_energy_nJ,ratio,latency_ns,\
dram_bytes,nvm_bytes,dram_ok,nvm_ok,peak_dram_bytes,peak_nvm_bytes,budget_ok\n";

fn report_csv(rep: &EvaluationReport) -> String {
    let mut out = String::from(REPORT_HEADER);
    let budget = rep.budget_ok.map(|b| b.to_string()).unwrap_or_default();
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        rep.plan,
        rep.total_energy_nj,
        rep.all_dram_energy_nj,
        rep.energy_ratio,
        rep.latency_ns,
        rep.static_bytes.dram,
        rep.static_bytes.nvm,
        rep.capacity_ok.dram,
        rep.capacity_ok.nvm,
        rep.peak_concurrent_bytes.dram,
        rep.peak_concurrent_bytes.nvm,
        budget
    );
    out
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<i32> {
    let profiles = read_profiles(&a.profiles)?;
    let plan = read_plan(&a.plan)?;
    let dev = a.device.load()?;
    let rep = evaluate(&profiles, &dev, &plan)?;
    let text = match a.output.format {
        Format::Csv => report_csv(&rep),
        Format::Json => serde_json::to_string_pretty(&rep)?,
    };
    write(&a.output.out, &text)?;
    if let Some(path) = &a.breakdown {
        write(path, &rep.breakdown_csv())?;
    }
    if !rep.capacity_ok() || rep.budget_ok == Some(false) {
        log::warn!(
            "plan violates its constraints: capacity {:?}, budget {:?}",
            rep.capacity_ok,
            rep.budget_ok
        );
    }
    Ok(EXIT_OK)
}

/// Resolves one `--plan` argument to a named placement.
fn resolve_plan(
    spec: &str,
    profiles: &ProfileSet,
    dev: &DeviceSpec,
    opts: &PlannerOptions,
) -> Result<(String, PlacementPlan)> {
    if let Some((name, path)) = spec.split_once('=') {
        return Ok((name.to_string(), read_plan(Path::new(path))?));
    }
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let plan = match kind {
        "all-dram" => place_all(profiles, dev, Device::Dram, opts)?,
        "all-nvm" => place_all(profiles, dev, Device::Nvm, opts)?,
        "moca" => {
            let thr: f64 = arg.parse().with_context(|| format!("bad MPKI threshold in `{spec}`"))?;
            place_moca(profiles, dev, thr, opts)?
        }
        "random" => {
            let seed: u64 = arg.parse().with_context(|| format!("bad seed in `{spec}`"))?;
            place_random(profiles, dev, seed, opts)?
        }
        "planner" => {
            let r: f64 = arg.parse().with_context(|| format!("bad ratio in `{spec}`"))?;
            check_ratio(r)?;
            plan_static(profiles, dev, r, opts)?
                .into_plan()
                .with_context(|| format!("`{spec}` is infeasible"))?
        }
        _ => bail!("unknown plan `{spec}`; expected name=path, all-dram, all-nvm, moca:T, random:S or planner:R"),
    };
    Ok((spec.to_string(), plan))
}

fn cmd_compare(a: CompareArgs) -> Result<i32> {
    let profiles = read_profiles(&a.profiles)?;
    let dev = a.device.load()?;
    let opts = a.planner.options()?;
    let plans = a
        .plans
        .iter()
        .map(|s| resolve_plan(s, &profiles, &dev, &opts))
        .collect::<Result<Vec<_>>>()?;
    let cmp = compare(&profiles, &dev, &plans, &opts)?;
    for d in cmp.dominance.iter().filter(|d| !d.holds) {
        log::warn!("planner at ratio {} does not beat `{}`", d.ratio, d.plan);
    }
    let text = match a.output.format {
        Format::Csv => cmp.to_csv(),
        Format::Json => cmp.to_json(),
    };
    write(&a.output.out, &text)?;
    Ok(EXIT_OK)
}

fn parse_capacity(s: &str) -> Result<(f64, f64)> {
    let parsed = s
        .split_once(':')
        .and_then(|(d, n)| Some((d.trim().parse::<f64>().ok()?, n.trim().parse::<f64>().ok()?)));
    match parsed {
        Some((d, n)) if d >= 0.0 && n >= 0.0 => Ok((d, n)),
        _ => bail!("bad capacity `{s}`; expected DRAM_GIB:NVM_GIB"),
    }
}

#[derive(serde::Serialize)]
struct SweepRow {
    dram_gib: f64,
    nvm_gib: f64,
    ratio: f64,
    status: &'static str,
    #[serde(rename = "energy_nJ")]
    energy_nj: Option<f64>,
    energy_ratio: Option<f64>,
    latency_ns: Option<f64>,
    latency_vs_all_dram: Option<f64>,
    dram_objects: Option<usize>,
    nvm_objects: Option<usize>,
    violated: Vec<String>,
}

const SWEEP_HEADER: &str = "dram_gib,nvm_gib,ratio,status,energy_nJ,energy_ratio,latency_ns,\
latency_vs_all_dram,dram_objects,nvm_objects,violated\n";

fn cell<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn cmd_sweep(a: SweepArgs) -> Result<i32> {
    for &r in &a.ratios {
        check_ratio(r)?;
    }
    let profiles = read_profiles(&a.profiles)?;
    let base = a.device.load()?;
    let opts = a.planner.options()?;
    let capacities = if a.capacities.is_empty() {
        vec![(
            base.dram_capacity_bytes / GIB,
            base.nvm_capacity_bytes / GIB,
        )]
    } else {
        a.capacities
            .iter()
            .map(|c| parse_capacity(c))
            .collect::<Result<_>>()?
    };
    let all_dram = place_all(&profiles, &base, Device::Dram, &opts)?;
    let reference_latency = evaluate(&profiles, &base, &all_dram)?.latency_ns;

    let mut rows = Vec::with_capacity(capacities.len() * a.ratios.len());
    for &(d, n) in &capacities {
        let dev = base.clone().with_capacities(d * GIB, n * GIB);
        let outcomes = sweep_ratios(&profiles, &dev, &a.ratios, &opts)?;
        for (&ratio, outcome) in a.ratios.iter().zip(outcomes) {
            let mut row = SweepRow {
                dram_gib: d,
                nvm_gib: n,
                ratio,
                status: "optimal",
                energy_nj: None,
                energy_ratio: None,
                latency_ns: None,
                latency_vs_all_dram: None,
                dram_objects: None,
                nvm_objects: None,
                violated: Vec::new(),
            };
            match outcome {
                Ok(PlanOutcome::Optimal(plan)) => {
                    let rep = evaluate(&profiles, &dev, &plan)?;
                    row.energy_nj = Some(rep.total_energy_nj);
                    row.energy_ratio = Some(rep.energy_ratio);
                    row.latency_ns = Some(rep.latency_ns);
                    row.latency_vs_all_dram = Some(if reference_latency > 0.0 {
                        rep.latency_ns / reference_latency
                    } else {
                        1.0
                    });
                    row.dram_objects = Some(plan.count_on(Device::Dram));
                    row.nvm_objects = Some(plan.count_on(Device::Nvm));
                }
                Ok(PlanOutcome::Infeasible(inf)) => {
                    row.status = "infeasible";
                    row.violated = inf.violated.iter().map(|k| k.name().to_string()).collect();
                }
                Err(PlanError::MinorsExceedDram { .. }) => {
                    row.status = "infeasible";
                    row.violated = vec!["minor_objects".into()];
                }
                Err(e) => return Err(e.into()),
            }
            rows.push(row);
        }
    }

    let text = match a.output.format {
        Format::Csv => {
            let mut out = String::from(SWEEP_HEADER);
            for r in &rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    r.dram_gib,
                    r.nvm_gib,
                    r.ratio,
                    r.status,
                    cell(r.energy_nj),
                    cell(r.energy_ratio),
                    cell(r.latency_ns),
                    cell(r.latency_vs_all_dram),
                    cell(r.dram_objects),
                    cell(r.nvm_objects),
                    r.violated.join(";")
                );
            }
            out
        }
        Format::Json => serde_json::to_string_pretty(&rows)?,
    };
    write(&a.output.out, &text)?;
    Ok(EXIT_OK)
}

fn cmd_scale(a: ScaleArgs) -> Result<i32> {
    let sets = match &a.profile_dir {
        Some(dir) => load_profile_dir(dir).with_context(|| format!("reading {}", dir.display()))?,
        None => a
            .profiles
            .iter()
            .map(|p| read_profiles(p))
            .collect::<Result<_>>()?,
    };
    let vector = derive_scaling_vector(&sets)?;
    // anchor on the largest measured workload
    let anchor = sets.last().expect("at least two sets");
    let scaled = extrapolate(anchor, &vector, a.target)?;
    if let Some(path) = &a.vector_out {
        write(path, &serde_json::to_string_pretty(&vector)?)?;
    }
    let text = match a.output.format {
        Format::Csv => scaled.to_text(),
        Format::Json => serde_json::to_string_pretty(&scaled)?,
    };
    write(&a.output.out, &text)?;
    Ok(EXIT_OK)
}

fn cmd_generate(a: GenerateArgs) -> Result<i32> {
    let spec = GeneratorSpec {
        count: a.count,
        top_count: a.top_count,
        top_size_share: a.top_share,
        total_size_bytes: a.total_bytes,
        duration_s: a.duration,
        mpki: if a.no_mpki {
            None
        } else {
            GeneratorSpec::default().mpki
        },
        workload_label: a.label,
        workload_size: a.workload_size,
        ..Default::default()
    };
    let set = generate_synthetic(&spec, a.seed)?;
    let text = match a.output.format {
        Format::Csv => set.to_text(),
        Format::Json => serde_json::to_string_pretty(&set)?,
    };
    write(&a.output.out, &text)?;
    Ok(EXIT_OK)
}
