use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use comorbid::association::Thresholds;
use comorbid::cohort::{parse_cohort_export, Cohort, ParseMode, PopulationPair};
use comorbid::error::{Error, Result};
use comorbid::multiplicity::NullGrid;
use comorbid::pipeline::{
    analyze_pair, diff_populations, write_analyze_outputs, write_diff_outputs, AnalysisConfig,
};
use comorbid::synth::{generate_cohort_pair, round_export, SynthConfig, TermSpec};

#[derive(Parser)]
#[command(name = "comorbid", version, about = "Co-morbidity mining over aggregate EHR cohort exports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze one population pair: ranked association table + histogram data
    Analyze {
        /// Base population export CSV
        base: PathBuf,
        /// Condition subpopulation export CSV
        condition: PathBuf,
        #[command(flatten)]
        opts: AnalysisOpts,
    },
    /// Differential co-morbidity between two population pairs
    Diff {
        /// Senior base population export CSV
        senior_base: PathBuf,
        /// Senior condition subpopulation export CSV
        senior_condition: PathBuf,
        /// Background base population export CSV
        bg_base: PathBuf,
        /// Background condition subpopulation export CSV
        bg_condition: PathBuf,
        #[command(flatten)]
        opts: AnalysisOpts,
    },
    /// Generate synthetic cohort exports with planted effects
    Simulate {
        /// Simulation config (TOML)
        config: PathBuf,
        /// Output directory
        #[arg(long, env = "COMORBID_OUT", default_value = "out")]
        out: PathBuf,
        /// Override the config's rounding width (0 disables rounding)
        #[arg(long, env = "COMORBID_WIDTH")]
        width: Option<u64>,
    },
}

#[derive(Args)]
struct AnalysisOpts {
    /// Output directory
    #[arg(long, env = "COMORBID_OUT", default_value = "out")]
    out: PathBuf,
    /// Two-sided significance level
    #[arg(long, env = "COMORBID_ALPHA", default_value_t = 0.05)]
    alpha: f64,
    /// Selection-bias null odds-ratio level
    #[arg(long, env = "COMORBID_MU", default_value_t = 3.0)]
    mu: f64,
    /// Monte-Carlo imputation samples per term
    #[arg(long, env = "COMORBID_SAMPLES", default_value_t = 100)]
    samples: usize,
    #[arg(long, env = "COMORBID_SEED", default_value_t = 0)]
    seed: u64,
    /// Censoring interval half-width (0 for exact counts)
    #[arg(long, env = "COMORBID_WIDTH", default_value_t = 5)]
    width: u64,
    /// Smallest null level, log2 scale
    #[arg(long, env = "COMORBID_GRID_LO", default_value_t = -2.0)]
    grid_lo: f64,
    /// Largest null level, log2 scale
    #[arg(long, env = "COMORBID_GRID_HI", default_value_t = 12.0)]
    grid_hi: f64,
    /// Null-grid step, log2 scale
    #[arg(long, env = "COMORBID_GRID_STEP", default_value_t = 0.01)]
    grid_step: f64,
    /// Minor/Moderate/High odds-ratio thresholds
    #[arg(long, env = "COMORBID_THRESHOLDS", default_value = "3,5,10", value_parser = parse_thresholds)]
    thresholds: Thresholds,
    /// Reject counts that are not multiples of ten
    #[arg(long, env = "COMORBID_STRICT", default_value_t = true, action = clap::ArgAction::Set)]
    strict: bool,
}

fn parse_thresholds(s: &str) -> std::result::Result<Thresholds, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()?;
    match parts.as_slice() {
        [minor, moderate, high] if minor < moderate && moderate < high => Ok(Thresholds {
            minor: *minor,
            moderate: *moderate,
            high: *high,
        }),
        _ => Err("expected three increasing values, e.g. 3,5,10".to_string()),
    }
}

impl AnalysisOpts {
    fn config(&self) -> Result<AnalysisConfig> {
        let cfg = AnalysisConfig {
            alpha: self.alpha,
            mu: self.mu,
            samples: self.samples,
            seed: self.seed,
            width: self.width,
            grid: NullGrid::new(self.grid_lo, self.grid_hi, self.grid_step)?,
            thresholds: self.thresholds,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn parse_mode(&self) -> ParseMode {
        if !self.strict {
            ParseMode::Round
        } else if self.width == 0 {
            // unrounded exports carry exact counts
            ParseMode::Exact
        } else {
            ParseMode::Strict
        }
    }
}

fn load_pair(base: &PathBuf, condition: &PathBuf, mode: ParseMode) -> Result<PopulationPair> {
    let load = |path: &PathBuf| -> Result<Cohort> {
        let file = File::open(path)?;
        parse_cohort_export(file, mode)
    };
    PopulationPair::new(load(base)?, load(condition)?)
}

/// TOML simulation config: shared term list with per-population planted ORs.
#[derive(serde::Deserialize)]
struct SimulateFile {
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_width")]
    width: u64,
    #[serde(default)]
    stochastic: bool,
    senior: SimulatePopulation,
    bg: SimulatePopulation,
    terms: Vec<SimulateTerm>,
}

fn default_width() -> u64 {
    5
}

#[derive(serde::Deserialize)]
struct SimulatePopulation {
    n_base: u64,
    n_condition: u64,
}

#[derive(serde::Deserialize)]
struct SimulateTerm {
    id: String,
    #[serde(default)]
    description: String,
    rate: f64,
    or_senior: f64,
    or_bg: f64,
    #[serde(default = "default_bias")]
    bias: f64,
}

fn default_bias() -> f64 {
    1.0
}

fn synth_config(
    name: &str,
    pop: &SimulatePopulation,
    file: &SimulateFile,
    pick_or: impl Fn(&SimulateTerm) -> f64,
) -> SynthConfig {
    SynthConfig {
        name: name.to_string(),
        n_base: pop.n_base,
        n_condition: pop.n_condition,
        terms: file
            .terms
            .iter()
            .map(|t| TermSpec {
                id: t.id.clone(),
                description: t.description.clone(),
                rate: t.rate,
                planted_or: pick_or(t),
                planted_bias: t.bias,
            })
            .collect(),
        rounding_width: file.width,
        seed: file.seed,
        stochastic: file.stochastic,
    }
}

fn run_simulate(config: PathBuf, out: PathBuf, width_override: Option<u64>) -> Result<()> {
    let text = std::fs::read_to_string(&config)?;
    let file: SimulateFile = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    let width = width_override.unwrap_or(file.width);

    std::fs::create_dir_all(&out)?;
    let mut ledger = csv::Writer::from_path(out.join("truth.csv"))
        .map_err(|e| Error::Config(e.to_string()))?;
    ledger
        .write_record(["population", "term_id", "planted_or", "planted_bias", "a", "b", "c", "d"])
        .map_err(|e| Error::Config(e.to_string()))?;

    for (name, pick_or) in [
        ("senior", (|t: &SimulateTerm| t.or_senior) as fn(&SimulateTerm) -> f64),
        ("bg", |t: &SimulateTerm| t.or_bg),
    ] {
        let cfg = synth_config(name, if name == "senior" { &file.senior } else { &file.bg }, &file, pick_or);
        let (pair, truth) = generate_cohort_pair(&cfg)?;
        let rounded = round_export(&pair, width)?;
        let write = |cohort: &Cohort, filename: String| -> Result<()> {
            comorbid::cohort::write_cohort_export(cohort, File::create(out.join(filename))?)
        };
        write(&rounded.base, format!("{name}_base.csv"))?;
        write(&rounded.condition, format!("{name}_condition.csv"))?;
        for record in truth {
            ledger
                .write_record([
                    name,
                    &record.term_id,
                    &record.planted_or.to_string(),
                    &record.planted_bias.to_string(),
                    &record.table.a.to_string(),
                    &record.table.b.to_string(),
                    &record.table.c.to_string(),
                    &record.table.d.to_string(),
                ])
                .map_err(|e| Error::Config(e.to_string()))?;
        }
    }
    ledger.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze { base, condition, opts } => {
            let cfg = opts.config()?;
            let pair = load_pair(&base, &condition, opts.parse_mode())?;
            let analysis = analyze_pair(&pair, &cfg)?;
            if analysis.m_valid == 0 {
                log::warn!("no valid terms: every term has a zero cell or inconsistent marginals");
            }
            write_analyze_outputs(&analysis, &cfg, &opts.out)
        }
        Command::Diff { senior_base, senior_condition, bg_base, bg_condition, opts } => {
            let cfg = opts.config()?;
            let mode = opts.parse_mode();
            let senior = analyze_pair(&load_pair(&senior_base, &senior_condition, mode)?, &cfg)?;
            let bg = analyze_pair(&load_pair(&bg_base, &bg_condition, mode)?, &cfg)?;
            let diff = diff_populations(&senior, &bg, &cfg)?;
            write_diff_outputs(&senior, &bg, &diff, &cfg, &opts.out)
        }
        Command::Simulate { config, out, width } => run_simulate(config, out, width),
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::InfeasibleEffect(_)
        | Error::CensoringInfeasible(_)
        | Error::InconsistentMarginals { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
