//! The `brd` command line: argument parsing, resolution into an
//! [`Invocation`], and execution into an output directory.
//!
//! Exit codes: 0 on success, 1 for invalid input or arguments, 2 for
//! runtime and numerical failures. Outputs are staged and only appear in
//! the output directory once the whole command has succeeded.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::bdp::BdpModel;
use crate::evaluation::{
    replicate_study, sensitivity_sweep, EvalError, EvalReport, FitSettings, Method, SensitivityPoint, StudyConfig,
};
use crate::io::{self, DumpRecord, IoError, StagedOutput, TraceSummary};
use crate::manifest::{
    absolute, unix_now, FitMode, GridSpec, Invocation, ReportKind, RunManifest, SimulationInputs, MANIFEST_FILE,
};
use crate::model::{FullDataModel, ModelError, ReducedDataModel};
use crate::relevance::{select, Measure, RelevanceError, SummaryAccumulator};
use crate::rng::stream_rng;
use crate::simulation::{Design, SimData, SimulationError, SimulationSpec};
use crate::DataError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
    #[error("null_density needs a chain dump (--dump) from a relevance-model fit")]
    MissingChainDump,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::MissingChainDump => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn validation(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::File { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        validation(e)
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Data(d) => d.into(),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<SimulationError> for CliError {
    fn from(e: SimulationError) -> Self {
        validation(e)
    }
}

impl From<RelevanceError> for CliError {
    fn from(e: RelevanceError) -> Self {
        match e {
            RelevanceError::UnknownMeasure(_) | RelevanceError::NonFiniteCutoff => validation(e),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Model(m) => m.into(),
            EvalError::Simulation(s) => s.into(),
            EvalError::Relevance(r) => r.into(),
            EvalError::UnknownMethod(_) | EvalError::InvalidStudy(_) => validation(e),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

/// Input files are the user's responsibility, so failing to read one is a
/// validation error.
fn input<T>(r: Result<T, IoError>) -> Result<T, CliError> {
    r.map_err(validation)
}

#[derive(Debug, Parser)]
#[command(
    name = "brd",
    version,
    about = "Bayesian relevance determination for gene-level data",
    propagate_version = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model to expression data or z-scores and summarize gene relevance.
    Fit(FitArgs),
    /// Generate datasets from a simulation design.
    Simulate(SimulateArgs),
    /// Replicate study: AUC of each method and measure on simulated data.
    Evaluate(EvaluateArgs),
    /// Modal cluster count on null data across prior locations of γ.
    Sensitivity(SensitivityArgs),
    /// Plot data from earlier outputs.
    Report(ReportArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output directory.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Flat key = value file; its entries override flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Suppress progress lines on standard error.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ChainArgs {
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Total sweeps, burn-in included [default: 4000]
    #[arg(long)]
    pub iterations: Option<u64>,
    /// Sweeps discarded before summarizing [default: 1000]
    #[arg(long)]
    pub burn_in: Option<u64>,
    /// Keep every n-th sweep after burn-in [default: 1]
    #[arg(long)]
    pub thin: Option<u64>,
    /// Visit genes in a random order each sweep.
    #[arg(long)]
    pub random_scan: bool,
    /// Location m of the log-normal base measure on cluster variances.
    #[arg(long, allow_hyphen_values = true)]
    pub g0_loc: Option<f64>,
    /// Scale M (sd of the log) of the base measure.
    #[arg(long)]
    pub g0_scale: Option<f64>,
    /// Location l of the log-normal prior on γ.
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_loc: Option<f64>,
    /// Scale L of the prior on γ.
    #[arg(long)]
    pub gamma_scale: Option<f64>,
    /// Prior sd of the per-gene baseline α.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Auxiliary components per assignment update.
    #[arg(long)]
    pub aux: Option<usize>,
    /// Proposal sd of the log-scale cluster-variance updates.
    #[arg(long)]
    pub mh_step: Option<f64>,
    /// Cluster-variance updates per sweep [default: 3]
    #[arg(long)]
    pub mh_repeats: Option<usize>,
    /// Proposal sd of the log γ update.
    #[arg(long)]
    pub gamma_step: Option<f64>,
    /// Baseline: prior probability of a null cluster mean.
    #[arg(long)]
    pub p0: Option<f64>,
    /// Baseline: variance of the slab on cluster means.
    #[arg(long)]
    pub slab_var: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Full,
    Z,
    Bdp,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Expression table (full) or gene_id/z table (z, bdp).
    #[arg(long)]
    pub input: PathBuf,
    /// 0/1 per sample, when the expression table has no label row.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Also write every retained state to chain.jsonl.
    #[arg(long)]
    pub dump: bool,
    /// List genes whose measure exceeds this cutoff.
    #[arg(long, allow_hyphen_values = true)]
    pub cutoff: Option<f64>,
    /// Measure used with --cutoff.
    #[arg(long, default_value = "v")]
    pub measure: String,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DesignArgs {
    /// Design parameter overrides, e.g. `n_genes=500`.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    pub params: Vec<String>,
    /// Noise sd of sim1.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// z-score pool replacing the synthetic one (sim3, sim4).
    #[arg(long)]
    pub pool: Option<PathBuf>,
    /// Expression base replacing the synthetic one (sim5, sim6).
    #[arg(long)]
    pub base: Option<PathBuf>,
    /// 0/1 sample labels for --base, when it has no label row
    #[arg(long)]
    pub base_labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// sim1..sim6 or null.
    pub design: String,
    /// Datasets to generate
    #[arg(long, default_value_t = 1)]
    pub replicates: u64,
    #[command(flatten)]
    pub design_args: DesignArgs,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// One or more designs.
    #[arg(required = true)]
    pub designs: Vec<String>,
    /// Methods to fit: brd, bdp
    #[arg(long, value_delimiter = ',', default_value = "brd,bdp")]
    pub methods: Vec<String>,
    /// Relevance measures scored for brd: mean_rank, mode_rank, v
    #[arg(long, value_delimiter = ',', default_value = "mean_rank,mode_rank,v")]
    pub measures: Vec<String>,
    /// Datasets per design
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    #[command(flatten)]
    pub design_args: DesignArgs,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SensitivityArgs {
    /// Prior locations of log γ.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        default_value = "-3,-2,-1,0,1,2"
    )]
    pub a: Vec<f64>,
    /// Prior scale of log γ.
    #[arg(long, default_value_t = 2.0)]
    pub b: f64,
    /// Null datasets per prior location.
    #[arg(long, default_value_t = 10)]
    pub datasets: usize,
    /// Genes per null dataset.
    #[arg(long, default_value_t = 500)]
    pub genes: usize,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    RankHistogram,
    NullDensity,
    SensitivityCurve,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// summary.tsv from `fit`.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// chain.jsonl from `fit --dump`.
    #[arg(long)]
    pub dump: Option<PathBuf>,
    /// Observed z-scores to histogram next to the null density.
    #[arg(long)]
    pub z: Option<PathBuf>,
    /// sensitivity.json from `sensitivity`.
    #[arg(long)]
    pub sensitivity: Option<PathBuf>,
    /// Lower end of the density grid [default: -5]
    #[arg(long, allow_hyphen_values = true)]
    pub grid_min: Option<f64>,
    /// Upper end of the density grid [default: 5]
    #[arg(long, allow_hyphen_values = true)]
    pub grid_max: Option<f64>,
    /// Grid points [default: 201]
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Histogram bins for --z [default: 50]
    #[arg(long)]
    pub bins: Option<usize>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, short)]
    pub quiet: bool,
}

/// Config entries not yet consumed; anything left at the end is an error.
struct ConfigEntries(BTreeMap<String, String>);

impl ConfigEntries {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        Ok(match path {
            Some(p) => {
                let text = input(io::read_text(p))?;
                Self(io::parse_key_values(&text, &p.display().to_string()).map_err(validation)?)
            }
            None => Self(BTreeMap::new()),
        })
    }

    fn take<T: FromStr>(&mut self, keys: &[&str]) -> Result<Option<T>, CliError> {
        let mut found = None;
        for k in keys {
            if let Some(v) = self.0.remove(*k) {
                let parsed = v
                    .parse()
                    .map_err(|_| CliError::Validation(format!("config: invalid value '{v}' for '{k}'")))?;
                found = Some(parsed);
            }
        }
        Ok(found)
    }

    fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>, CliError> {
        match self.0.remove(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| CliError::Validation(format!("config: invalid entry '{s}' in '{key}'")))
                })
                .collect::<Result<Vec<T>, _>>()
                .map(Some),
        }
    }

    fn finish(self) -> Result<(), CliError> {
        match self.0.keys().next() {
            Some(k) => Err(CliError::Validation(format!("config: unknown key '{k}'"))),
            None => Ok(()),
        }
    }
}

fn resolve_settings(args: &ChainArgs, cfg: &mut ConfigEntries) -> Result<FitSettings, CliError> {
    let mut s = FitSettings::default();
    macro_rules! set {
        ($target:expr, $flag:expr, $($key:literal),+) => {
            if let Some(v) = $flag {
                $target = v;
            }
            if let Some(v) = cfg.take(&[$($key),+])? {
                $target = v;
            }
        };
    }
    set!(s.chain.seed, args.seed, "seed");
    set!(s.chain.iterations, args.iterations, "iterations");
    set!(s.chain.burn_in, args.burn_in, "burn_in");
    set!(s.chain.thin, args.thin, "thin");
    set!(s.chain.random_scan, args.random_scan.then_some(true), "random_scan");
    set!(s.hp.g0_location, args.g0_loc, "g0_loc", "g0_location");
    set!(s.hp.g0_scale, args.g0_scale, "g0_scale");
    set!(s.hp.gamma_location, args.gamma_loc, "gamma_loc", "gamma_location");
    set!(s.hp.gamma_scale, args.gamma_scale, "gamma_scale");
    set!(s.hp.kappa, args.kappa, "kappa");
    set!(s.hp.aux_components, args.aux, "aux", "aux_components");
    set!(s.hp.mh_step, args.mh_step, "mh_step");
    set!(s.hp.mh_repeats, args.mh_repeats, "mh_repeats");
    set!(s.hp.gamma_step, args.gamma_step, "gamma_step");
    set!(s.bdp.p0, args.p0, "p0");
    set!(s.bdp.slab_var, args.slab_var, "slab_var");
    s.chain.validate()?;
    s.hp.validate()?;
    s.bdp.validate().map_err(validation)?;
    Ok(s)
}

const DESIGN_KEYS: [&str; 6] = ["sigma", "pool_size", "n_genes", "n_per_group", "perturbed", "n"];

fn resolve_design(name: &str, args: &DesignArgs, cfg: &mut ConfigEntries) -> Result<Design, CliError> {
    let mut kv = BTreeMap::new();
    if let Some(s) = args.sigma {
        kv.insert("sigma".to_string(), s.to_string());
    }
    for p in &args.params {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| CliError::Validation(format!("--param '{p}' is not KEY=VALUE")))?;
        kv.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    for k in DESIGN_KEYS {
        if let Some(v) = cfg.0.get(k) {
            kv.insert(k.to_string(), v.clone());
        }
    }
    Ok(Design::from_name(name)?.with_overrides(&kv)?)
}

fn resolve_inputs(args: &DesignArgs) -> SimulationInputs {
    SimulationInputs {
        pool: args.pool.as_deref().map(absolute),
        base: args.base.as_deref().map(absolute),
        base_labels: args.base_labels.as_deref().map(absolute),
    }
}

fn consume_design_keys(cfg: &mut ConfigEntries) {
    for k in DESIGN_KEYS {
        cfg.0.remove(k);
    }
}

/// A command ready to execute.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub invocation: Invocation,
    pub output: PathBuf,
    pub quiet: bool,
    /// Arguments recorded by a replayed manifest.
    pub recorded_arguments: Option<Vec<String>>,
}

/// Turn parsed arguments into a resolved command.
pub fn resolve(command: Command) -> Result<Resolved, CliError> {
    let (invocation, output, quiet) = match command {
        Command::Fit(a) => {
            let mut cfg = ConfigEntries::load(a.out.config.as_deref())?;
            let settings = resolve_settings(&a.chain, &mut cfg)?;
            let cutoff = match cfg.take::<f64>(&["cutoff"])? {
                Some(c) => Some(c),
                None => a.cutoff,
            };
            let measure_name = cfg.take::<String>(&["measure"])?.unwrap_or(a.measure);
            cfg.finish()?;
            let select = match cutoff {
                Some(c) => {
                    if !c.is_finite() {
                        return Err(RelevanceError::NonFiniteCutoff.into());
                    }
                    Some((Measure::from_str(&measure_name)?, c))
                }
                None => None,
            };
            let mode = match a.mode {
                ModeArg::Full => FitMode::Full,
                ModeArg::Z => FitMode::Z,
                ModeArg::Bdp => FitMode::Bdp,
            };
            if a.labels.is_some() && mode != FitMode::Full {
                return Err(validation("--labels only applies to --mode full"));
            }
            Ok::<_, CliError>((
                Invocation::Fit {
                    mode,
                    input: absolute(&a.input),
                    labels: a.labels.as_deref().map(absolute),
                    dump: a.dump,
                    select,
                    settings,
                },
                a.out.output,
                a.out.quiet,
            ))
        }
        Command::Simulate(a) => {
            let mut cfg = ConfigEntries::load(a.out.config.as_deref())?;
            let design = resolve_design(&a.design, &a.design_args, &mut cfg)?;
            consume_design_keys(&mut cfg);
            let seed = cfg.take(&["seed"])?.or(a.chain.seed).unwrap_or(1);
            let replicates = cfg.take(&["replicates"])?.unwrap_or(a.replicates);
            cfg.finish()?;
            if replicates == 0 {
                return Err(validation("--replicates must be at least 1"));
            }
            Ok((
                Invocation::Simulate {
                    design,
                    seed,
                    replicates,
                    inputs: resolve_inputs(&a.design_args),
                },
                a.out.output,
                a.out.quiet,
            ))
        }
        Command::Evaluate(a) => {
            let mut cfg = ConfigEntries::load(a.out.config.as_deref())?;
            let designs = a
                .designs
                .iter()
                .map(|d| resolve_design(d, &a.design_args, &mut cfg))
                .collect::<Result<Vec<_>, _>>()?;
            consume_design_keys(&mut cfg);
            let settings = resolve_settings(&a.chain, &mut cfg)?;
            let methods: Vec<String> = cfg.take_list("methods")?.unwrap_or(a.methods);
            let measures: Vec<String> = cfg.take_list("measures")?.unwrap_or(a.measures);
            let replicates = cfg.take(&["replicates"])?.unwrap_or(a.replicates);
            cfg.finish()?;
            let methods = methods
                .iter()
                .map(|m| Method::from_str(m))
                .collect::<Result<Vec<_>, _>>()?;
            let measures = measures
                .iter()
                .map(|m| Measure::from_str(m))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((
                Invocation::Evaluate {
                    designs,
                    seed: settings.chain.seed,
                    inputs: resolve_inputs(&a.design_args),
                    methods,
                    measures,
                    replicates,
                    settings,
                },
                a.out.output,
                a.out.quiet,
            ))
        }
        Command::Sensitivity(a) => {
            let mut cfg = ConfigEntries::load(a.out.config.as_deref())?;
            let settings = resolve_settings(&a.chain, &mut cfg)?;
            let a_values = cfg.take_list("a")?.unwrap_or(a.a);
            let b = cfg.take(&["b"])?.unwrap_or(a.b);
            let datasets = cfg.take(&["datasets"])?.unwrap_or(a.datasets);
            let genes = cfg.take(&["genes"])?.unwrap_or(a.genes);
            cfg.finish()?;
            Ok((
                Invocation::Sensitivity {
                    a: a_values,
                    b,
                    datasets,
                    genes,
                    seed: settings.chain.seed,
                    settings,
                },
                a.out.output,
                a.out.quiet,
            ))
        }
        Command::Report(a) => {
            let mut cfg = ConfigEntries::load(a.out.config.as_deref())?;
            let d = GridSpec::default();
            let grid = GridSpec {
                min: cfg.take(&["grid_min"])?.or(a.grid_min).unwrap_or(d.min),
                max: cfg.take(&["grid_max"])?.or(a.grid_max).unwrap_or(d.max),
                points: cfg.take(&["grid_points"])?.or(a.grid_points).unwrap_or(d.points),
                bins: cfg.take(&["bins"])?.or(a.bins).unwrap_or(d.bins),
            };
            cfg.finish()?;
            if grid.min.is_nan() || grid.max.is_nan() || grid.min >= grid.max || grid.points == 0 || grid.bins == 0 {
                return Err(validation("grid needs min < max and at least one point and bin"));
            }
            let kind = match a.kind {
                KindArg::RankHistogram => ReportKind::RankHistogram,
                KindArg::NullDensity => ReportKind::NullDensity,
                KindArg::SensitivityCurve => ReportKind::SensitivityCurve,
            };
            Ok((
                Invocation::Report {
                    kind,
                    summary: a.summary.as_deref().map(absolute),
                    dump: a.dump.as_deref().map(absolute),
                    z: a.z.as_deref().map(absolute),
                    sensitivity: a.sensitivity.as_deref().map(absolute),
                    grid,
                },
                a.out.output,
                a.out.quiet,
            ))
        }
        Command::Replay(a) => {
            let manifest = input(RunManifest::read(&a.manifest))?;
            return Ok(Resolved {
                invocation: manifest.invocation,
                output: a.output,
                quiet: a.quiet,
                recorded_arguments: Some(manifest.arguments),
            });
        }
    }?;
    Ok(Resolved {
        invocation,
        output,
        quiet,
        recorded_arguments: None,
    })
}

fn progress_line(label: &str, total: u64, quiet: bool) -> impl FnMut(u64) + '_ {
    move |it| {
        if !quiet {
            eprintln!("{label}: iteration {it}/{total}");
        }
    }
}

/// Run `inv`, writing its files and a manifest into `output`.
pub fn execute(inv: &Invocation, output: &Path, arguments: Vec<String>, quiet: bool) -> Result<Vec<PathBuf>, CliError> {
    let started = unix_now();
    let mut out = StagedOutput::new(output)?;
    match inv {
        Invocation::Fit {
            mode,
            input: path,
            labels,
            dump,
            select: selection,
            settings,
        } => run_fit(
            *mode,
            path,
            labels.as_deref(),
            *dump,
            *selection,
            settings,
            quiet,
            &mut out,
        )?,
        Invocation::Simulate {
            design,
            seed,
            replicates,
            inputs,
        } => run_simulate(design, *seed, *replicates, inputs, &mut out)?,
        Invocation::Evaluate {
            designs,
            seed,
            inputs,
            methods,
            measures,
            replicates,
            settings,
        } => {
            let study = StudyConfig {
                methods: methods.clone(),
                measures: measures.clone(),
                replicates: *replicates,
                fit: *settings,
            };
            let mut reports: Vec<EvalReport> = Vec::new();
            for design in designs {
                if !quiet {
                    eprintln!("evaluate: {} ({} replicates)", design.name(), replicates);
                }
                let spec = simulation_spec(design, *seed, inputs)?;
                reports.push(replicate_study(&spec, &study)?);
            }
            out.write("report.tsv", &io::format_report_table(&reports))?;
            let comparisons: String = reports
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let t = io::format_comparisons(r);
                    if i == 0 {
                        t
                    } else {
                        t.split_once('\n').map(|(_, body)| body.to_string()).unwrap_or_default()
                    }
                })
                .collect();
            out.write("comparisons.tsv", &comparisons)?;
            out.write("report.json", &io::to_json(&reports))?;
        }
        Invocation::Sensitivity {
            a,
            b,
            datasets,
            genes,
            seed,
            settings,
        } => {
            if !quiet {
                eprintln!("sensitivity: {} locations x {} datasets", a.len(), datasets);
            }
            let points = sensitivity_sweep(a, *b, *datasets, *genes, *seed, settings)?;
            out.write("sensitivity.tsv", &io::format_sensitivity(&points))?;
            out.write("sensitivity.json", &io::to_json(&points))?;
        }
        Invocation::Report {
            kind,
            summary,
            dump,
            z,
            sensitivity,
            grid,
        } => run_report(
            *kind,
            summary.as_deref(),
            dump.as_deref(),
            z.as_deref(),
            sensitivity.as_deref(),
            grid,
            &mut out,
        )?,
    }
    let mut manifest = RunManifest::new(inv.clone(), arguments, started);
    manifest.outputs = out.files().to_vec();
    manifest.finished_unix = unix_now();
    out.write(MANIFEST_FILE, &io::to_json(&manifest))?;
    Ok(out.commit()?)
}

fn simulation_spec(design: &Design, seed: u64, inputs: &SimulationInputs) -> Result<SimulationSpec, CliError> {
    let mut spec = SimulationSpec::new(design.clone(), seed);
    if let Some(p) = &inputs.pool {
        spec.z_pool = Some(input(io::read_z(p))?);
    }
    if let Some(b) = &inputs.base {
        spec.expression_base = Some(input(io::read_expression(b, inputs.base_labels.as_deref()))?);
    }
    Ok(spec)
}

#[allow(clippy::too_many_arguments)]
fn run_fit(
    mode: FitMode,
    path: &Path,
    labels: Option<&Path>,
    dump: bool,
    selection: Option<(Measure, f64)>,
    settings: &FitSettings,
    quiet: bool,
    out: &mut StagedOutput,
) -> Result<(), CliError> {
    let cfg = &settings.chain;
    let data = match mode {
        FitMode::Full => SimData::Expression(input(io::read_expression(path, labels))?),
        FitMode::Z | FitMode::Bdp => SimData::Z(input(io::read_z(path))?),
    };
    let ids = data.gene_ids().to_vec();
    let mut rng = stream_rng(cfg.seed, 0);
    let mut acc = SummaryAccumulator::new(ids.len());
    let mut gamma = Vec::with_capacity(cfg.retained_count() as usize);
    let mut writer = if dump { Some(out.create("chain.jsonl")?) } else { None };
    let mut failure: Option<CliError> = None;
    let mut record = |r: Result<(), CliError>| {
        if let (None, Err(e)) = (&failure, r) {
            failure = Some(e);
        }
    };
    let label = format!("fit {}", mode.as_str());
    let mut progress = progress_line(&label, cfg.iterations, quiet);
    let mut dump_line = |rec: DumpRecord| -> Result<(), CliError> {
        match writer.as_mut() {
            Some(w) => Ok(io::write_all(w, "chain.jsonl", rec.to_line().as_bytes())?),
            None => Ok(()),
        }
    };
    match (&data, mode) {
        (SimData::Z(z), FitMode::Z) => {
            let model = ReducedDataModel::new(z.clone(), settings.hp)?;
            model.sample(
                cfg,
                &mut rng,
                |s| {
                    gamma.push(s.gamma);
                    record(acc.push_state(s).map_err(CliError::from));
                    if dump {
                        record(dump_line(DumpRecord::from_brd(s)));
                    }
                },
                Some(&mut progress),
            )?;
        }
        (SimData::Expression(e), FitMode::Full) => {
            let model = FullDataModel::new(e.clone(), settings.hp)?;
            model.sample(
                cfg,
                &mut rng,
                |s| {
                    gamma.push(s.gamma);
                    record(acc.push_state(s).map_err(CliError::from));
                    if dump {
                        record(dump_line(DumpRecord::from_brd(s)));
                    }
                },
                Some(&mut progress),
            )?;
        }
        (SimData::Z(z), FitMode::Bdp) => {
            let model = BdpModel::new(z.clone(), settings.bdp, settings.hp)?;
            model.sample(
                cfg,
                &mut rng,
                |s| {
                    gamma.push(s.gamma);
                    record(acc.push_bdp_state(s).map_err(CliError::from));
                    if dump {
                        record(dump_line(DumpRecord::from_bdp(s)));
                    }
                },
                Some(&mut progress),
            )?;
        }
        _ => unreachable!("data were read according to the mode"),
    }
    if let Some(e) = failure {
        return Err(e);
    }
    if let Some(mut w) = writer {
        w.flush().map_err(|e| CliError::Runtime(format!("chain.jsonl: {e}")))?;
    }
    let summary = acc.finish()?;
    out.write("summary.tsv", &io::format_summary(&ids, &summary))?;
    let stats = io::ChainStats {
        model: match mode {
            FitMode::Bdp => "bdp".into(),
            _ => "brd".into(),
        },
        n_genes: ids.len(),
        retained_iterations: summary.iterations,
        c_m: summary.c_m,
        k_distribution: summary.k_distribution.clone(),
        rank_ties: summary.tie_events,
        gamma: TraceSummary::from_trace(&gamma).expect("validated chains retain at least one state"),
    };
    out.write("chain_stats.json", &io::to_json(&stats))?;
    if let Some((measure, cutoff)) = selection {
        let chosen = select(&summary, measure, cutoff)?;
        let values = summary.measure(measure);
        let mut s = format!("gene_id\t{}\n", measure.as_str());
        for g in chosen {
            s.push_str(&format!("{}\t{}\n", ids[g], values[g]));
        }
        out.write("selected.tsv", &s)?;
    }
    Ok(())
}

fn run_simulate(
    design: &Design,
    seed: u64,
    replicates: u64,
    inputs: &SimulationInputs,
    out: &mut StagedOutput,
) -> Result<(), CliError> {
    let sim = simulation_spec(design, seed, inputs)?.prepare()?;
    let mut files = Vec::new();
    for r in 0..replicates {
        let data = sim.generate(r)?;
        let suffix = if replicates == 1 {
            String::new()
        } else {
            format!("_r{r}")
        };
        let (name, text) = match &data.data {
            SimData::Z(z) => (format!("z{suffix}.tsv"), io::format_z(z)),
            SimData::Expression(e) => (format!("expression{suffix}.tsv"), io::format_expression(e)),
        };
        files.push((name, text));
        files.push((
            format!("truth{suffix}.tsv"),
            io::format_truth(data.data.gene_ids(), &data.truth),
        ));
    }
    for (name, text) in files {
        out.write(&name, &text)?;
    }
    Ok(())
}

fn run_report(
    kind: ReportKind,
    summary: Option<&Path>,
    dump: Option<&Path>,
    z: Option<&Path>,
    sensitivity: Option<&Path>,
    grid: &GridSpec,
    out: &mut StagedOutput,
) -> Result<(), CliError> {
    match kind {
        ReportKind::RankHistogram => {
            let path = summary.ok_or_else(|| validation("rank_histogram needs --summary"))?;
            let text = input(io::read_text(path))?;
            let rows = io::parse_summary_mode_ranks(&text, &path.display().to_string()).map_err(validation)?;
            let ranks: Vec<u32> = rows.iter().map(|(_, r)| *r).collect();
            let hist = io::rank_histogram(&ranks);
            out.write("rank_histogram.tsv", &io::format_rank_histogram(&hist))?;
            let (top_rank, top_count) = hist.iter().next_back().map(|(r, c)| (*r, *c)).unwrap_or((0, 0));
            let top_genes: Vec<&str> = rows
                .iter()
                .filter(|(_, r)| *r == top_rank)
                .map(|(id, _)| id.as_str())
                .collect();
            let meta = serde_json::json!({
                "groups": hist.len(),
                "top_rank": top_rank,
                "top_count": top_count,
                "top_genes": top_genes,
            });
            out.write("rank_histogram.json", &io::to_json(&meta))?;
        }
        ReportKind::NullDensity => {
            let path = dump.ok_or(CliError::MissingChainDump)?;
            let records = input(io::read_chain_dump(path))?;
            if records.iter().any(|r| r.model != "brd") {
                return Err(validation(
                    "null_density needs a relevance-model dump; baseline dumps carry cluster means",
                ));
            }
            let phi0: Vec<f64> = records
                .iter()
                .map(|r| r.params.iter().copied().fold(f64::INFINITY, f64::min))
                .collect();
            let xs = grid.grid();
            let density = crate::relevance::null_density_from_trace(&phi0, &xs);
            out.write("null_density.tsv", &io::format_density(&xs, &density))?;
            if let Some(zp) = z {
                let data = input(io::read_z(zp))?;
                let bins = io::histogram_density(data.z(), grid.min, grid.max, grid.bins);
                out.write("z_histogram.tsv", &io::format_histogram_density(&bins))?;
            }
        }
        ReportKind::SensitivityCurve => {
            let path = sensitivity.ok_or_else(|| validation("sensitivity_curve needs --sensitivity"))?;
            let text = input(io::read_text(path))?;
            let points: Vec<SensitivityPoint> =
                io::from_json(&text, &path.display().to_string()).map_err(validation)?;
            out.write("sensitivity_curve.tsv", &io::format_sensitivity_curve(&points))?;
        }
    }
    Ok(())
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let arguments: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let result = resolve(cli.command).and_then(|r| {
        let arguments = r.recorded_arguments.unwrap_or(arguments);
        execute(&r.invocation, &r.output, arguments, r.quiet)
    });
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Command {
        Cli::try_parse_from(std::iter::once("brd").chain(args.iter().copied()))
            .unwrap()
            .command
    }

    #[test]
    fn config_overrides_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.txt");
        std::fs::write(&cfg, "iterations = 50\ngamma-loc = 1.5\n").unwrap();
        let cmd = parse(&[
            "fit",
            "--mode",
            "z",
            "--input",
            "x.tsv",
            "--iterations",
            "10",
            "--burn-in",
            "5",
            "--gamma-loc",
            "-2",
            "--output",
            "o",
            "--config",
            cfg.to_str().unwrap(),
        ]);
        let inv = resolve(cmd).unwrap().invocation;
        let s = inv.settings().unwrap();
        assert_eq!(s.chain.iterations, 50);
        assert_eq!(s.chain.burn_in, 5);
        assert_eq!(s.hp.gamma_location, 1.5);
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.txt");
        std::fs::write(&cfg, "itterations = 50\n").unwrap();
        let cmd = parse(&["sensitivity", "--output", "o", "--config", cfg.to_str().unwrap()]);
        let e = resolve(cmd).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(e.to_string().contains("itterations"));
    }

    #[test]
    fn negative_list_values() {
        match parse(&["sensitivity", "--a", "-3,-1,2", "--b", "2", "--output", "o"]) {
            Command::Sensitivity(a) => assert_eq!(a.a, vec![-3.0, -1.0, 2.0]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn design_params() {
        let cmd = parse(&["simulate", "sim5", "--param", "n_genes=40", "--output", "o"]);
        match resolve(cmd).unwrap().invocation {
            Invocation::Simulate { design, .. } => assert_eq!(
                design,
                Design::FulldataShift {
                    n_genes: 40,
                    n_per_group: 5,
                    perturbed: 5
                }
            ),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_chain_is_validation_error() {
        let cmd = parse(&[
            "fit",
            "--mode",
            "z",
            "--input",
            "x",
            "--iterations",
            "5",
            "--burn-in",
            "9",
            "--output",
            "o",
        ]);
        assert_eq!(resolve(cmd).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["brd", "fit", "--mode", "nope"]), 1);
        assert_eq!(run(["brd", "--help"]), 0);
    }
}
