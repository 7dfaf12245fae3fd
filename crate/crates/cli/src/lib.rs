//! `eightfold` command-line driver.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use eightfold::analysis::{witness_from_tables, AnalysisError, Significance, WitnessReport};
use eightfold::config::{ConfigError, ExperimentConfig};
use eightfold::experiment::{sample_counts, ExperimentError, PatternTable};
use eightfold::topology::{enumerate_error_terms, erroneous_total, graph_state_edges, n_fold_rate, solve_success_factor, FusionTopology, TopologyShape};

#[derive(Debug, Parser)]
#[command(name = "eightfold", version, about = "Simulate and analyse multi-photon GHZ experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write one coincidence histogram per measurement setting.
    Simulate(SimulateArgs),
    /// Compute the fidelity witness from a directory of histograms.
    Analyze(AnalyzeArgs),
    /// List emission patterns that survive post-selection at a given order.
    Topology(TopologyArgs),
    /// Estimate the n-fold coincidence rate.
    Rate(RateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment configuration; built-in measured parameters if omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write exact distributions instead of sampled counts.
    #[arg(long)]
    pub exact: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Directory holding `setting_*.txt` files.
    pub input: PathBuf,
    /// Where to write the report and CSVs; defaults to the input directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TopologyArgs {
    /// Read shape, edges and source count from a configuration file.
    #[arg(long, conflicts_with_all = ["shape", "edges", "sources"])]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "star")]
    pub shape: TopologyShape,
    /// Custom fusion edges as `a-b` arm pairs separated by commas, e.g. `1-4,5-8`.
    #[arg(long)]
    pub edges: Option<String>,
    #[arg(long, default_value_t = 4)]
    pub sources: usize,
    /// Total number of emitted pairs.
    #[arg(long, default_value_t = 5)]
    pub order: u32,
    /// Also write the CSV into this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    #[arg(long, default_value_t = 0.058)]
    pub p: f64,
    #[arg(long, default_value_t = 0.265)]
    pub xi: f64,
    #[arg(long, default_value_t = 76e6)]
    pub rep_rate_hz: f64,
    #[arg(long, default_value_t = 4)]
    pub n_pairs: u32,
    /// Fixed success factor; solved from `--target-per-hour` when omitted.
    #[arg(long)]
    pub success_factor: Option<f64>,
    /// Observed event rate to compare with, per hour.
    #[arg(long)]
    pub target_per_hour: Option<f64>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    MissingInput(String),
    #[error("{path}: {message}")]
    BadInput { path: PathBuf, message: String },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Analysis(AnalysisError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(ConfigError::Io { .. }) => 3,
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::MissingInput(_) | CliError::BadInput { .. } => 3,
            CliError::Write { .. } | CliError::Experiment(_) | CliError::Analysis(_) => 4,
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::MissingSettings(list) => CliError::MissingInput(format!("missing settings: {}", list.join(", "))),
            other => CliError::Analysis(other),
        }
    }
}

/// Write via a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let werr = |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    };
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(werr)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(werr)?;
    tmp.write_all(contents.as_bytes()).map_err(werr)?;
    tmp.persist(path).map_err(|e| werr(e.error))?;
    Ok(())
}

pub fn setting_file_name(label: &str) -> String {
    format!("setting_{}.txt", label.replace([':', ';'], "_"))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => simulate(&a, out),
        Command::Analyze(a) => analyze(&a, out).map(|_| ()),
        Command::Topology(a) => topology(&a, out),
        Command::Rate(a) => rate(&a, out),
    }
}

fn say(out: &mut dyn Write, text: &str) {
    // Console output is informational; a closed pipe is not an error.
    let _ = out.write_all(text.as_bytes());
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    match path {
        Some(p) => {
            if !p.exists() {
                return Err(CliError::MissingInput(format!("config file {} not found", p.display())));
            }
            Ok(ExperimentConfig::load(p)?)
        }
        None => Ok(ExperimentConfig::measured()),
    }
}

pub fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.run.seed = seed;
    }
    if args.exact {
        config.run.exact = true;
    }
    let dir = args.out.clone().unwrap_or_else(|| config.output.directory.clone());

    let apparatus = config.build_apparatus()?;
    let ensemble = apparatus.prepare()?;
    let source = &apparatus.sources()[0];
    let mut summary = String::new();
    writeln!(summary, "synthesizer_overlap = {}", source.synthesizer_overlap()).unwrap();
    writeln!(summary, "fusion_overlap = {}", source.fusion_overlap()).unwrap();
    writeln!(summary, "emission_sectors = {}", ensemble.sectors().count()).unwrap();

    for (setting, duration_s) in config.settings() {
        let dist = ensemble.distribution(&setting)?;
        let table = if config.run.exact {
            PatternTable::Exact(dist.clone())
        } else {
            PatternTable::Counts(sample_counts(&dist, apparatus.repetition_rate_hz(), duration_s, config.run.seed))
        };
        let rate_per_hour = dist.accept_probability() * apparatus.repetition_rate_hz() * 3600.0;
        writeln!(summary, "events_per_hour_{} = {}", setting.label(), rate_per_hour).unwrap();
        let path = dir.join(setting_file_name(&setting.label()));
        write_atomic(&path, &table.to_text())?;
        if let PatternTable::Counts(h) = &table {
            say(out, &format!("{}: {} events in {} h\n", setting.label(), h.total(), duration_s / 3600.0));
        } else {
            say(out, &format!("{}: exact, accept probability {:e}\n", setting.label(), dist.accept_probability()));
        }
    }
    write_atomic(&dir.join("summary.txt"), &summary)?;
    write_atomic(&dir.join("config.toml"), &config.to_toml_string())?;
    say(out, &format!("wrote {}\n", dir.display()));
    Ok(())
}

/// Read every `setting_*.txt` in `dir`, in file-name order.
pub fn read_tables(dir: &Path) -> Result<Vec<PatternTable>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::MissingInput(format!("cannot read directory {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("setting_") && n.ends_with(".txt"))
        })
        .collect();
    paths.sort();
    let mut tables: Vec<PatternTable> = Vec::new();
    for path in paths {
        let text = fs::read_to_string(&path).map_err(|e| CliError::BadInput {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let table = PatternTable::parse(&text).map_err(|e| CliError::BadInput {
            path: path.clone(),
            message: e.to_string(),
        })?;
        if tables.iter().any(|t| t.setting() == table.setting()) {
            return Err(CliError::BadInput {
                path,
                message: format!("setting {} appears in more than one file", table.setting().label()),
            });
        }
        tables.push(table);
    }
    Ok(tables)
}

pub fn populations_csv(hv: &PatternTable) -> String {
    let symbols = hv.setting().symbols();
    let mut s = String::new();
    match hv {
        PatternTable::Counts(h) => {
            s.push_str("pattern,counts\n");
            for (i, c) in h.counts().iter().enumerate() {
                let pat = eightfold::experiment::DetectionPattern::new(i as u32, h.n_arms());
                writeln!(s, "{},{}", pat.render(symbols), c).unwrap();
            }
        }
        PatternTable::Exact(d) => {
            s.push_str("pattern,probability\n");
            for (i, p) in d.conditional().iter().enumerate() {
                let pat = eightfold::experiment::DetectionPattern::new(i as u32, d.n_arms());
                writeln!(s, "{},{}", pat.render(symbols), p).unwrap();
            }
        }
    }
    s
}

pub fn correlations_csv(report: &WitnessReport) -> String {
    let mut s = String::from("k,signed_expectation,sigma\n");
    for (k, v, sigma) in report.signed_correlations() {
        writeln!(s, "{k},{v},{sigma}").unwrap();
    }
    s
}

pub fn analyze(args: &AnalyzeArgs, out: &mut dyn Write) -> Result<WitnessReport, CliError> {
    let tables = read_tables(&args.input)?;
    if tables.is_empty() {
        return Err(CliError::MissingInput(format!("no setting_*.txt files in {}", args.input.display())));
    }
    let report = witness_from_tables(&tables)?;
    let hv = tables
        .iter()
        .find(|t| *t.setting() == eightfold::experiment::MeasurementSetting::Computational)
        .expect("witness requires the H/V table");
    let dir = args.out.clone().unwrap_or_else(|| args.input.clone());

    let mut text = report.to_text();
    writeln!(text, "threshold = 0.5").unwrap();
    writeln!(text, "excess_over_threshold = {}", report.fidelity.value - 0.5).unwrap();
    writeln!(text, "events = {}", report.fidelity.n_events).unwrap();
    write_atomic(&dir.join("report.txt"), &text)?;
    write_atomic(&dir.join("populations.csv"), &populations_csv(hv))?;
    write_atomic(&dir.join("correlations.csv"), &correlations_csv(&report))?;
    say(
        out,
        &format!(
            "F = {:.4} ± {:.4} (significance {}), entangled = {}\n",
            report.fidelity.value,
            report.fidelity.sigma,
            match report.significance {
                Significance::Sigmas(x) => format!("{x:.2}σ"),
                other => other.to_string(),
            },
            report.entangled
        ),
    );
    Ok(report)
}

fn parse_edges(text: &str) -> Result<Vec<(usize, usize)>, CliError> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (a, b) = pair
                .split_once('-')
                .ok_or_else(|| CliError::Usage(format!("edge '{pair}' is not of the form a-b")))?;
            let num = |s: &str| s.trim().parse::<usize>().map_err(|_| CliError::Usage(format!("edge '{pair}' has a non-numeric arm")));
            Ok((num(a)?, num(b)?))
        })
        .collect()
}

pub fn topology_csv(topology: &FusionTopology, order: u32) -> String {
    let terms = enumerate_error_terms(topology, order);
    let mut s = String::from("pattern,multiplicity,erroneous\n");
    for t in &terms {
        writeln!(s, "\"{}\",{},{}", t.pattern, t.multiplicity, t.erroneous).unwrap();
    }
    writeln!(
        s,
        "# shape={},order={},total_erroneous_multiplicity={}",
        topology.shape(),
        order,
        erroneous_total(&terms)
    )
    .unwrap();
    s
}

pub fn topology(args: &TopologyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let topo = match &args.config {
        Some(path) => load_config(Some(path))?.topology().map_err(|e| CliError::Usage(e.to_string()))?,
        None => {
            let edges = args.edges.as_deref().map(parse_edges).transpose()?;
            if edges.is_some() && args.shape != TopologyShape::Custom {
                return Err(CliError::Usage("--edges requires --shape custom".into()));
            }
            if edges.is_none() && args.shape == TopologyShape::Custom {
                return Err(CliError::Usage("--shape custom requires --edges".into()));
            }
            FusionTopology::from_shape(args.shape, args.sources, edges).map_err(|e| CliError::Usage(e.to_string()))?
        }
    };
    let mut csv = topology_csv(&topo, args.order);
    if let Ok(edges) = graph_state_edges(&topo) {
        let list: Vec<String> = edges.iter().map(|(a, b)| format!("{a}-{b}")).collect();
        writeln!(csv, "# graph_state_edges={}", list.join(";")).unwrap();
    }
    if let Some(dir) = &args.out {
        write_atomic(&dir.join(format!("topology_{}_order{}.csv", topo.shape(), args.order)), &csv)?;
    }
    say(out, &csv);
    Ok(())
}

pub fn rate(args: &RateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let target_hz = args.target_per_hour.map(|h| h / 3600.0);
    let factor = match (args.success_factor, target_hz) {
        (Some(f), _) => f,
        (None, Some(t)) => solve_success_factor(t, args.p, args.xi, args.rep_rate_hz, args.n_pairs),
        (None, None) => 1.0,
    };
    let est = n_fold_rate(args.p, args.xi, args.rep_rate_hz, args.n_pairs, factor).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut s = String::new();
    writeln!(s, "p = {}", est.p).unwrap();
    writeln!(s, "xi = {}", est.xi).unwrap();
    writeln!(s, "repetition_rate_hz = {}", est.repetition_rate_hz).unwrap();
    writeln!(s, "n_pairs = {}", est.n_pairs).unwrap();
    writeln!(s, "success_factor = {}", est.success_factor).unwrap();
    writeln!(s, "rate_hz = {:e}", est.n_fold_rate_hz).unwrap();
    writeln!(s, "events_per_hour = {}", est.events_per_hour()).unwrap();
    match est.hours_per_event() {
        Some(h) => writeln!(s, "hours_per_event = {h}").unwrap(),
        None => writeln!(s, "hours_per_event = unbounded").unwrap(),
    }
    if let Some(t) = target_hz {
        writeln!(s, "target_rate_hz = {t:e}").unwrap();
        writeln!(s, "ratio_to_target = {}", est.n_fold_rate_hz / t).unwrap();
        // Solving for the factor would make this echo p·ξ, so use the given factor or 1.
        let given = args.success_factor.unwrap_or(1.0);
        writeln!(s, "implied_p_xi = {}", eightfold::topology::implied_p_xi(t, args.rep_rate_hz, args.n_pairs, given)).unwrap();
    }
    say(out, &s);
    Ok(())
}
