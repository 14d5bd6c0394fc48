use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "scedex",
    version,
    about = "Trends in the frequency and size of extremes across stations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate and summarize an input panel.
    IngestCheck(DataArgs),
    /// Integrated scedasis curves per station.
    Scedasis {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_parser = k_parser())]
        k: usize,
        /// 1-based station to report; all stations when omitted.
        #[arg(long)]
        station: Option<usize>,
        /// Divide by the realised exceedance count instead of k.
        #[arg(long)]
        renormalize: bool,
    },
    /// Estimated tail dependence matrix.
    Sigma1 {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_parser = k_parser())]
        k: usize,
    },
    /// Test that all stations share the same frequency of extremes.
    TestSpace {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_parser = k_parser())]
        k: usize,
    },
    /// Test that the frequency of extremes is constant in time.
    TestTime {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_parser = k_parser())]
        k: usize,
        /// 1-based station; every station (with a Bonferroni summary) when omitted.
        #[arg(long)]
        station: Option<usize>,
        /// Family-wise level for the Bonferroni correction.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Repeat a test over a range of k.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        range: KRange,
        /// Sweep the time test at this 1-based station instead of the space test.
        #[arg(long)]
        station: Option<usize>,
    },
    /// Pooled generalized Pareto fit.
    FitGp {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_parser = k_parser())]
        k: usize,
        /// Confidence level of an interval for gamma.
        #[arg(long)]
        ci: Option<f64>,
    },
    /// Pooled GP fit over a range of k.
    GammaPath {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        range: KRange,
    },
    /// Monte Carlo check of size, power, covariance or estimator variance.
    Mc(McArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Season {
    All,
    Winter,
    Summer,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    Size,
    Power,
    Cov,
    Mle,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Validate the configuration and input without writing anything.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV with a `date` column and one column per station.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Season::All)]
    pub season: Season,
    /// Comma-separated months for `--season custom`.
    #[arg(long, value_delimiter = ',')]
    pub months: Vec<u32>,
    /// Decluster: drop days within this many days of a larger kept day.
    #[arg(long)]
    pub gap_days: Option<u32>,
    /// Season instances with fewer days are reported in ingest-check.
    #[arg(long)]
    pub min_days_per_year: Option<u32>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct KRange {
    #[arg(long, value_parser = k_parser())]
    pub k_min: usize,
    #[arg(long, value_parser = k_parser())]
    pub k_max: usize,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub step: u64,
}

impl KRange {
    pub fn values(&self) -> Vec<usize> {
        (self.k_min..=self.k_max).step_by(self.step as usize).collect()
    }
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[arg(long, value_enum)]
    pub scenario: Scenario,
    /// Scenario JSON (simulation spec plus k and scenario settings).
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub reps: u64,
    /// Overrides the seed in the spec file.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub common: Common,
}

fn k_parser() -> clap::builder::RangedU64ValueParser<usize> {
    clap::builder::RangedU64ValueParser::<usize>::new().range(10..)
}
