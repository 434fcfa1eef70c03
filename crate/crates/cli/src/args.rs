use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fnrate::ratings::Venue;
use fnrate::synth::{AlphaTruth, NoiseModel};
use fnrate::ModelKind;

#[derive(Parser, Debug)]
#[command(
    name = "fnrate",
    version,
    about = "Functional least-squares ratings from in-game scoring data",
    args_override_self = true
)]
pub struct Cli {
    /// Key-value file mirroring the command's flags (`key = value` per line).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Log progress and timings to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse and repair a game file and report what was changed or excluded.
    Validate(ValidateArgs),
    /// Fit rating curves and write the rating matrix plus sidecar.
    Fit(FitArgs),
    /// Per-second F test of a reduced fit against a full fit.
    Anova(AnovaArgs),
    /// Collapse rating curves to scalars and rank teams.
    Rank(RankArgs),
    /// Strength of schedule for a constant home-advantage fit.
    Sos(SosArgs),
    /// Expected point differential of one team over another through a game.
    Predict(PredictArgs),
    /// B-spline smoothing of curves on the per-second grid.
    Smooth(SmoothArgs),
    /// Generate a synthetic season with known rating curves.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Auto,
    Jsonl,
    Csv,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Game file (JSONL), or a directory / `games.csv` for the CSV layout.
    #[arg(long, value_name = "PATH")]
    pub games: PathBuf,

    #[arg(long, value_enum, default_value = "auto")]
    pub format: FormatArg,

    /// Keep games that fail validation instead of excluding them.
    #[arg(long)]
    pub force: bool,

    /// Exclude games whose differential changes by more than this in one second.
    #[arg(long, value_name = "POINTS")]
    pub max_swing: Option<i64>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub ingest: IngestArgs,

    /// Write the repair report (JSONL) here instead of stdout.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

/// Parsed `--constraint` value.
#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintArg {
    SumZero,
    PinTeam { team: String, value: f64 },
    PinAverageScore,
}

pub fn parse_constraint(s: &str) -> Result<ConstraintArg, String> {
    match s {
        "sum-zero" => return Ok(ConstraintArg::SumZero),
        "pin-average-score" => return Ok(ConstraintArg::PinAverageScore),
        _ => {}
    }
    let Some(rest) = s.strip_prefix("pin-team:") else {
        return Err(format!(
            "unknown constraint `{s}`; expected sum-zero, pin-team:NAME[=VALUE] or pin-average-score"
        ));
    };
    let (team, value) = match rest.rsplit_once('=') {
        Some((team, v)) => (
            team,
            v.parse::<f64>()
                .map_err(|e| format!("pin value `{v}`: {e}"))?,
        ),
        None => (rest, 0.0),
    };
    if team.is_empty() {
        return Err("pin-team needs a team name".into());
    }
    Ok(ConstraintArg::PinTeam {
        team: team.to_string(),
        value,
    })
}

pub fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse::<u8>()
        .ok()
        .and_then(ModelKind::from_number)
        .ok_or_else(|| format!("model must be 1, 2 or 3, got `{s}`"))
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub ingest: IngestArgs,

    /// 1 = no home advantage, 2 = one shared advantage, 3 = per-team advantage.
    #[arg(long, value_parser = parse_model, default_value = "2")]
    pub model: ModelKind,

    /// sum-zero, pin-team:NAME[=VALUE], or pin-average-score.
    #[arg(long, value_parser = parse_constraint, default_value = "sum-zero")]
    pub constraint: ConstraintArg,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,

    /// Solver threads (defaults to all cores).
    #[arg(long)]
    pub threads: Option<usize>,

    /// Time columns per solve block.
    #[arg(long, default_value_t = 256)]
    pub block_cols: usize,

    /// Fit a disconnected schedule, centring each component separately.
    #[arg(long)]
    pub allow_disconnected: bool,

    /// Also write the design matrix in Matrix Market format.
    #[arg(long)]
    pub dump_matrix: bool,

    /// Write a pointwise confidence band for the home advantage at this level.
    #[arg(long, value_name = "LEVEL")]
    pub band: Option<f64>,
}

#[derive(Args, Debug)]
pub struct AnovaArgs {
    /// Directory of the reduced fit.
    #[arg(long, value_name = "DIR")]
    pub reduced: PathBuf,

    /// Directory of the full fit.
    #[arg(long, value_name = "DIR")]
    pub full: PathBuf,

    #[arg(long, default_value_t = 0.1)]
    pub threshold: f64,

    /// Output directory for the P/F curves and summary.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RankArgs {
    /// Fit directory.
    #[arg(long, value_name = "DIR")]
    pub fit: PathBuf,

    /// uniform, linear, end, or file:PATH (two columns: second, weight).
    #[arg(long, default_value = "uniform")]
    pub weight: String,

    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SosArgs {
    #[arg(long, value_name = "DIR")]
    pub fit: PathBuf,

    #[command(flatten)]
    pub ingest: IngestArgs,

    #[arg(long, default_value = "uniform")]
    pub weight: String,

    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    /// Teams whose rating decomposition curves go to `--curves`.
    #[arg(long = "team", value_name = "NAME")]
    pub teams: Vec<String>,

    /// CSV for the average-differential and schedule curves of `--team`s.
    #[arg(long, value_name = "FILE", requires = "teams")]
    pub curves: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VenueArg {
    Neutral,
    Home,
}

impl From<VenueArg> for Venue {
    fn from(v: VenueArg) -> Venue {
        match v {
            VenueArg::Neutral => Venue::Neutral,
            VenueArg::Home => Venue::HomeOfI,
        }
    }
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long, value_name = "DIR")]
    pub fit: PathBuf,

    #[arg(long, value_name = "NAME")]
    pub team_a: String,

    #[arg(long, value_name = "NAME")]
    pub team_b: String,

    /// `home` means on team A's court.
    #[arg(long, value_enum, default_value = "neutral")]
    pub venue: VenueArg,

    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SmoothArgs {
    /// Curve CSV (`second,name,...`).
    #[arg(
        long,
        value_name = "FILE",
        conflicts_with = "fit",
        required_unless_present = "fit"
    )]
    pub input: Option<PathBuf>,

    /// Smooth the rating curves of a fit instead.
    #[arg(long, value_name = "DIR")]
    pub fit: Option<PathBuf>,

    /// Restrict `--fit` to these teams.
    #[arg(long = "team", value_name = "NAME")]
    pub teams: Vec<String>,

    /// Spline order (4 = cubic).
    #[arg(long, default_value_t = 4)]
    pub order: usize,

    /// Knot spacing in seconds.
    #[arg(long, default_value_t = 60)]
    pub spacing: usize,

    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Constant,
    Linear,
    Spline,
}

pub fn parse_alpha(s: &str) -> Result<AlphaTruth, String> {
    if s == "none" {
        return Ok(AlphaTruth::Zero);
    }
    if let Some(rest) = s.strip_prefix("per-team:") {
        let (mean, spread) = rest
            .split_once(',')
            .ok_or_else(|| format!("expected per-team:MEAN,SD, got `{s}`"))?;
        let num = |v: &str| v.parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
        return Ok(AlphaTruth::PerTeam {
            mean: num(mean)?,
            spread: num(spread)?,
        });
    }
    s.parse::<f64>()
        .map(|value| AlphaTruth::Constant { value })
        .map_err(|_| format!("expected none, a number, or per-team:MEAN,SD; got `{s}`"))
}

pub fn parse_noise(s: &str) -> Result<NoiseModel, String> {
    let num = |v: &str| v.parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    match s.split_once(':') {
        None if s == "none" => Ok(NoiseModel::None),
        Some(("iid", v)) => Ok(NoiseModel::IidGaussian { sigma: num(v)? }),
        Some(("walk", v)) => Ok(NoiseModel::RandomWalk {
            sigma_step: num(v)?,
        }),
        _ => Err(format!("expected none, iid:SIGMA or walk:STEP; got `{s}`")),
    }
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    pub teams: usize,

    #[arg(long, default_value_t = 10)]
    pub games_per_team: usize,

    #[arg(long, default_value_t = 0.1)]
    pub neutral_fraction: f64,

    /// Regulation length in seconds.
    #[arg(long, default_value_t = 2400)]
    pub regulation: u32,

    #[arg(long, value_enum, default_value = "constant")]
    pub family: FamilyArg,

    /// Spread of the true ratings (integer bound for `constant`, SD otherwise).
    #[arg(long, default_value_t = 10.0)]
    pub spread: f64,

    /// Segments for the piecewise-linear family.
    #[arg(long, default_value_t = 4)]
    pub segments: usize,

    /// Knot spacing for the spline family, in seconds.
    #[arg(long, default_value_t = 300)]
    pub knot_spacing: usize,

    /// none, a constant (e.g. 3), or per-team:MEAN,SD.
    #[arg(long, value_parser = parse_alpha, default_value = "3")]
    pub alpha: AlphaTruth,

    /// none, iid:SIGMA, or walk:STEP.
    #[arg(long, value_parser = parse_noise, default_value = "iid:8")]
    pub noise: NoiseModel,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Keep true curves real-valued instead of whole points.
    #[arg(long)]
    pub no_quantize: bool,

    /// Output JSONL; the ground truth goes next to it as `<stem>.truth.json`.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}
