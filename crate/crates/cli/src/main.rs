mod args;
mod config;
mod output;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Parser;
use fnrate::design::build_design_with;
use fnrate::inference::{alpha_confidence_band, anova_nested, InferenceError};
use fnrate::ingest::{self, GameFormat, ParseOptions, PrepareOptions, PreparedSeason};
use fnrate::io::{self, Provenance};
use fnrate::ratings::{self, WeightSpec};
use fnrate::solver::SolverError;
use fnrate::synth::{self, BetaFamily, SynthConfig};
use fnrate::{Constraint, CurveSeries, FitOptions, ModelKind, RatingSet};
use log::info;

use args::*;
use output::{digest_fit, digest_inputs, provenance, require_input, Outputs};

const EXIT_FAILURE: u8 = 2;
const EXIT_UNIDENTIFIED: u8 = 3;
const EXIT_USAGE: u8 = 4;

fn main() -> ExitCode {
    let raw: Vec<String> = std::env::args().collect();
    let args = match config::expand(raw) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let command_line = command_line(&args);
    let mut outputs = Outputs::default();
    match run(cli.command, &command_line, &mut outputs) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            outputs.mark_failed(&format!("{err:#}"));
            ExitCode::from(exit_code(&err))
        }
    }
}

/// `validate` found excluded games; details are in the report.
#[derive(Debug)]
struct ValidationFailed(usize);

impl std::fmt::Display for ValidationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} game(s) excluded", self.0)
    }
}

impl std::error::Error for ValidationFailed {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(SolverError::Disconnected { .. }) = cause.downcast_ref::<SolverError>() {
            return EXIT_UNIDENTIFIED;
        }
        if let Some(InferenceError::Unidentified(_)) = cause.downcast_ref::<InferenceError>() {
            return EXIT_UNIDENTIFIED;
        }
    }
    EXIT_FAILURE
}

/// The command as run, without the program path, for provenance headers.
fn command_line(args: &[String]) -> String {
    std::iter::once("fnrate")
        .chain(args.iter().skip(1).map(String::as_str))
        .map(|a| {
            if a.is_empty() || a.contains(char::is_whitespace) {
                format!("'{a}'")
            } else {
                a.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn run(command: Command, line: &str, outputs: &mut Outputs) -> Result<u8> {
    match command {
        Command::Validate(a) => cmd_validate(a, outputs),
        Command::Fit(a) => cmd_fit(a, line, outputs),
        Command::Anova(a) => cmd_anova(a, line, outputs),
        Command::Rank(a) => cmd_rank(a, line, outputs),
        Command::Sos(a) => cmd_sos(a, line, outputs),
        Command::Predict(a) => cmd_predict(a, line, outputs),
        Command::Smooth(a) => cmd_smooth(a, line, outputs),
        Command::Synth(a) => cmd_synth(a, outputs),
    }?;
    Ok(0)
}

fn load_season(a: &IngestArgs) -> Result<PreparedSeason> {
    let format = match a.format {
        FormatArg::Auto => GameFormat::detect(&a.games),
        FormatArg::Jsonl => GameFormat::Jsonl,
        FormatArg::Csv => GameFormat::Csv,
    };
    let start = Instant::now();
    let parsed = ingest::parse_game_file(&a.games, format, ParseOptions { force: a.force })
        .with_context(|| format!("reading {}", a.games.display()))?;
    let season = ingest::prepare(
        parsed,
        &PrepareOptions {
            force: a.force,
            max_swing: a.max_swing,
        },
    );
    info!(
        "ingested {} games ({} report entries) in {:.3}s",
        season.games.len(),
        season.report.len(),
        start.elapsed().as_secs_f64()
    );
    Ok(season)
}

fn write_report(season: &PreparedSeason, w: &mut impl Write) -> Result<()> {
    for entry in &season.report {
        serde_json::to_writer(&mut *w, entry)?;
        writeln!(w)?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn cmd_validate(a: ValidateArgs, outputs: &mut Outputs) -> Result<()> {
    let report = a.report.as_deref().map(|p| outputs.file(p)).transpose()?;
    require_input(&a.ingest.games)?;
    let season = load_season(&a.ingest)?;
    match &report {
        Some(path) => {
            let mut w = create(path)?;
            write_report(&season, &mut w)?;
            w.flush()?;
        }
        None => write_report(&season, &mut std::io::stdout().lock())?,
    }
    let excluded = season.excluded().count();
    let summary = format!(
        "games kept: {}, final scores appended: {}, excluded: {}, report entries: {}",
        season.games.len(),
        season.repairs().count(),
        excluded,
        season.report.len()
    );
    if report.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    if excluded > 0 {
        return Err(ValidationFailed(excluded).into());
    }
    Ok(())
}

fn constraint_for(arg: &ConstraintArg, season: &PreparedSeason) -> Constraint {
    match arg {
        ConstraintArg::SumZero => Constraint::SumZero,
        ConstraintArg::PinTeam { team, value } => Constraint::PinTeam {
            team: team.clone(),
            value: *value,
        },
        ConstraintArg::PinAverageScore => Constraint::PinAverageScore {
            mean_score: ingest::average_score_curve(&season.games),
        },
    }
}

fn cmd_fit(a: FitArgs, line: &str, outputs: &mut Outputs) -> Result<()> {
    let out = outputs.dir(&a.out)?;
    require_input(&a.ingest.games)?;
    if let Some(level) = a.band {
        if !(level > 0.0 && level < 1.0) {
            bail!("--band must lie in (0, 1), got {level}");
        }
        if a.model == ModelKind::Basic {
            bail!("--band needs a home-advantage model (2 or 3)");
        }
    }
    let inputs = digest_inputs("games", &a.ingest.games)?;

    let season = load_season(&a.ingest)?;
    let mut report = create(&out.join("report.jsonl"))?;
    write_report(&season, &mut report)?;
    report.flush()?;
    if season.games.is_empty() {
        bail!("no games left after validation");
    }

    let teams = fnrate::TeamIndex::from_games(&season.games);
    let x = build_design_with(&season.games, a.model, teams)?;
    if a.dump_matrix {
        let mut w = create(&out.join("design.mtx"))?;
        x.write_matrix_market(&mut w)?;
        w.flush()?;
    }
    let d = fnrate::stack_tracks(&season.tracks)?;
    let opts = FitOptions {
        constraint: constraint_for(&a.constraint, &season),
        allow_disconnected: a.allow_disconnected,
        block_cols: a.block_cols,
        threads: a.threads,
        ..Default::default()
    };
    let start = Instant::now();
    let fit = fnrate::fit(&x, &d, &opts).map_err(|e| {
        if let SolverError::Disconnected { components } = &e {
            for (i, c) in components.iter().enumerate() {
                eprintln!("component {}: {}", i + 1, c.join(", "));
            }
        }
        anyhow::Error::new(e)
    })?;
    info!(
        "fit {} games x {} seconds in {:.3}s ({} factorization(s), {:.3}s solving)",
        fit.n_games(),
        fit.grid_len,
        start.elapsed().as_secs_f64(),
        fit.stats.factorizations,
        fit.stats.solve_secs
    );

    let mut prov = provenance(line, inputs);
    prov.model = Some(a.model.number().to_string());
    prov.constraint = Some(fit.constraint.label());
    io::save_fit(&out, &fit, Some(&prov))?;

    if let Some(level) = a.band {
        write_alpha_band(&out.join("alpha_band.csv"), &fit, level, &prov)?;
    }
    println!(
        "rank {} of {} parameters, residual dof {}, total SSE {}",
        fit.rank,
        fit.spec.param_count(),
        fit.dof_resid,
        fit.total_sse()
    );
    Ok(())
}

fn write_alpha_band(path: &Path, fit: &RatingSet, level: f64, prov: &Provenance) -> Result<()> {
    let mut curves = Vec::new();
    let mut push = |name: &str, alpha: &[f64], team: Option<&str>| -> Result<()> {
        match alpha_confidence_band(fit, level, team) {
            Ok((lo, hi)) => {
                curves.push(CurveSeries::new(name.to_string(), alpha.to_vec(), "points"));
                curves.push(CurveSeries::new(
                    format!("{name}:lower"),
                    lo.values,
                    "points",
                ));
                curves.push(CurveSeries::new(
                    format!("{name}:upper"),
                    hi.values,
                    "points",
                ));
                Ok(())
            }
            Err(InferenceError::Unidentified(_)) => Ok(()),
            Err(e) => Err(e.into()),
        }
    };
    match fit.kind() {
        ModelKind::Basic => unreachable!("checked before fitting"),
        ModelKind::ConstantHca => push("alpha", fit.alpha().expect("model 2 has alpha"), None)?,
        ModelKind::IndividualHca => {
            for (i, team) in fit.spec.teams.names().iter().enumerate() {
                let alpha = fit.home_alpha(i).expect("model 3 has alphas");
                push(&format!("alpha:{team}"), alpha, Some(team))?;
            }
        }
    }
    io::save_curves(path, &curves, Some(prov))?;
    Ok(())
}

fn load_fit_dir(dir: &Path) -> Result<RatingSet> {
    io::load_fit(dir).with_context(|| format!("loading fit from {}", dir.display()))
}

fn cmd_anova(a: AnovaArgs, line: &str, outputs: &mut Outputs) -> Result<()> {
    let out = outputs.dir(&a.out)?;
    require_input(&a.reduced)?;
    require_input(&a.full)?;
    let mut inputs = digest_fit("reduced", &a.reduced)?;
    inputs.extend(digest_fit("full", &a.full)?);

    let reduced = load_fit_dir(&a.reduced)?;
    let full = load_fit_dir(&a.full)?;
    let result = anova_nested(&reduced, &full)?;
    let summary = result.summary(a.threshold);

    let prov = provenance(line, inputs);
    let curves = [
        CurveSeries::new("F", result.f_curve.values.clone(), ""),
        CurveSeries::new("P", result.p_curve.values.clone(), ""),
    ];
    io::save_curves(&out.join("anova.csv"), &curves, Some(&prov))?;
    let doc = serde_json::json!({
        "summary": summary,
        "reduced_model": reduced.kind().number(),
        "full_model": full.kind().number(),
        "provenance": prov,
    });
    let mut w = create(&out.join("anova_summary.json"))?;
    serde_json::to_writer_pretty(&mut w, &doc)?;
    writeln!(w)?;
    w.flush()?;
    println!(
        "df ({}, {}), P < {} at {:.1}% of seconds, min P {} at {}s",
        summary.df_num,
        summary.df_den,
        a.threshold,
        100.0 * summary.frac_below_threshold,
        summary.min_p,
        summary.argmin_p
    );
    Ok(())
}

fn weight_spec(s: &str) -> Result<(WeightSpec, Option<PathBuf>)> {
    let spec = match s {
        "uniform" => WeightSpec::Uniform,
        "linear" => WeightSpec::LinearIncreasing,
        "end" => WeightSpec::EndOfGame,
        _ => {
            let Some(path) = s.strip_prefix("file:") else {
                bail!("unknown weight `{s}`; expected uniform, linear, end, or file:PATH");
            };
            let path = require_input(Path::new(path))?;
            let table = io::load_weight_table(&path)?;
            let spec = WeightSpec::Custom(table);
            spec.validate()?;
            return Ok((spec, Some(path)));
        }
    };
    Ok((spec, None))
}

fn csv_writer(path: &Path, prov: &Provenance) -> Result<csv::Writer<BufWriter<fs::File>>> {
    let mut w = create(path)?;
    prov.write_header(&mut w)?;
    Ok(csv::Writer::from_writer(w))
}

fn cmd_rank(a: RankArgs, line: &str, outputs: &mut Outputs) -> Result<()> {
    let out = outputs.file(&a.out)?;
    require_input(&a.fit)?;
    let (w, weight_file) = weight_spec(&a.weight)?;
    let mut inputs = digest_fit("fit", &a.fit)?;
    if let Some(p) = &weight_file {
        inputs.extend(digest_inputs("weight", p)?);
    }
    let fit = load_fit_dir(&a.fit)?;
    let table = ratings::rankings_table(&fit, &w)?;

    let mut prov = provenance(line, inputs);
    prov.model = Some(fit.kind().number().to_string());
    prov.constraint = Some(fit.constraint.label());
    let mut csv = csv_writer(&out, &prov)?;
    csv.write_record(["team", "scalar_rating", "rank", "end_of_game_rank", "tied"])?;
    for row in &table {
        csv.write_record([
            row.team.clone(),
            row.scalar_rating.to_string(),
            row.rank.to_string(),
            row.end_of_game_rank.to_string(),
            row.tied.to_string(),
        ])?;
    }
    csv.flush()?;
    info!("ranked {} teams", table.len());
    Ok(())
}

fn cmd_sos(a: SosArgs, line: &str, outputs: &mut Outputs) -> Result<()> {
    let out = outputs.file(&a.out)?;
    let curves_out = a.curves.as_deref().map(|p| outputs.file(p)).transpose()?;
    require_input(&a.fit)?;
    require_input(&a.ingest.games)?;
    let (w, weight_file) = weight_spec(&a.weight)?;
    let mut inputs = digest_fit("fit", &a.fit)?;
    inputs.extend(digest_inputs("games", &a.ingest.games)?);
    if let Some(p) = &weight_file {
        inputs.extend(digest_inputs("weight", p)?);
    }

    let fit = load_fit_dir(&a.fit)?;
    if fit.kind() != ModelKind::ConstantHca {
        bail!(
            "strength of schedule needs a model 2 fit, {} holds model {}",
            a.fit.display(),
            fit.kind().number()
        );
    }
    let season = load_season(&a.ingest)?;
    let (games, tracks) = align_to_fit(&fit, season)?;
    let x = build_design_with(&games, fit.kind(), fit.spec.teams.clone())?;
    let d = fnrate::stack_tracks(&tracks)?;
    let table = ratings::sos_table(&fit, &x, &d, &w)?;

    let mut prov = provenance(line, inputs);
    prov.model = Some(fit.kind().number().to_string());
    prov.constraint = Some(fit.constraint.label());
    let mut csv = csv_writer(&out, &prov)?;
    csv.write_record(["team", "scalar_sos", "rank", "tied"])?;
    for row in &table {
        csv.write_record([
            row.team.clone(),
            row.rating.to_string(),
            row.rank.to_string(),
            row.tied.to_string(),
        ])?;
    }
    csv.flush()?;

    if let Some(path) = curves_out {
        let mut curves = Vec::new();
        for team in &a.teams {
            let dec = ratings::decompose(&fit, &x, &d, team)?;
            curves.push(CurveSeries::new(
                format!("beta:{team}"),
                fit.beta_of(team)?.to_vec(),
                "points",
            ));
            curves.push(dec.avg_diff);
            curves.push(dec.sos);
        }
        io::save_curves(&path, &curves, Some(&prov))?;
    }
    Ok(())
}

/// Puts the season's games in the fit's row order.
fn align_to_fit(
    fit: &RatingSet,
    season: PreparedSeason,
) -> Result<(Vec<fnrate::GameRecord>, Vec<fnrate::DifferentialTrack>)> {
    let mut by_id: std::collections::HashMap<
        String,
        (fnrate::GameRecord, fnrate::DifferentialTrack),
    > = season
        .games
        .into_iter()
        .zip(season.tracks)
        .map(|(g, t)| (g.game_id.clone(), (g, t)))
        .collect();
    let mut games = Vec::with_capacity(fit.game_ids.len());
    let mut tracks = Vec::with_capacity(fit.game_ids.len());
    for id in &fit.game_ids {
        let (g, t) = by_id
            .remove(id)
            .with_context(|| format!("game `{id}` of the fit is missing from the game file"))?;
        games.push(g);
        tracks.push(t);
    }
    if !by_id.is_empty() {
        bail!(
            "the game file holds {} game(s) the fit did not use; pass the same file and options as for fit",
            by_id.len()
        );
    }
    Ok((games, tracks))
}

fn cmd_predict(a: PredictArgs, line: &str, outputs: &mut Outputs) -> Result<()> {
    let out = outputs.file(&a.out)?;
    require_input(&a.fit)?;
    let inputs = digest_fit("fit", &a.fit)?;
    let fit = load_fit_dir(&a.fit)?;
    let curve = ratings::predict(&fit, &a.team_a, &a.team_b, a.venue.into())?;
    let mut prov = provenance(line, inputs);
    prov.model = Some(fit.kind().number().to_string());
    prov.constraint = Some(fit.constraint.label());
    let end = curve.values.last().copied().unwrap_or(f64::NAN);
    io::save_curves(&out, std::slice::from_ref(&curve), Some(&prov))?;
    println!("{} over {}: {end} at the final second", a.team_a, a.team_b);
    Ok(())
}

fn cmd_smooth(a: SmoothArgs, line: &str, outputs: &mut Outputs) -> Result<()> {
    let (source, label) = match (&a.input, &a.fit) {
        (Some(p), _) => (p.clone(), "input"),
        (None, Some(p)) => (p.clone(), "fit"),
        (None, None) => unreachable!("clap requires one of --input and --fit"),
    };
    let out = outputs.file(&a.out)?;
    require_input(&source)?;
    let inputs = if a.fit.is_some() {
        digest_fit(label, &source)?
    } else {
        digest_inputs(label, &source)?
    };
    let curves = if a.fit.is_some() {
        let fit = load_fit_dir(&source)?;
        let names: Vec<String> = if a.teams.is_empty() {
            fit.spec.teams.names().to_vec()
        } else {
            a.teams.clone()
        };
        names
            .iter()
            .map(|t| {
                Ok(CurveSeries::new(
                    format!("beta:{t}"),
                    fit.beta_of(t)?.to_vec(),
                    "points",
                ))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        io::load_curves(&source)?
    };
    let smoothed = curves
        .iter()
        .map(|c| ratings::smooth(c, a.order, a.spacing))
        .collect::<Result<Vec<_>, _>>()?;
    io::save_curves(&out, &smoothed, Some(&provenance(line, inputs)))?;
    info!("smoothed {} curve(s)", smoothed.len());
    Ok(())
}

fn truth_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.truth.json"))
}

fn synth_config(a: &SynthArgs) -> Result<SynthConfig> {
    let true_beta = match a.family {
        FamilyArg::Constant => {
            if a.spread.fract() != 0.0 || a.spread < 0.0 {
                bail!("--spread must be a non-negative integer for the constant family");
            }
            BetaFamily::Constant {
                spread: a.spread as i32,
            }
        }
        FamilyArg::Linear => BetaFamily::PiecewiseLinear {
            segments: a.segments,
            spread: a.spread,
        },
        FamilyArg::Spline => BetaFamily::Spline {
            order: ratings::DEFAULT_SPLINE_ORDER,
            knot_spacing_s: a.knot_spacing,
            spread: a.spread,
        },
    };
    Ok(SynthConfig {
        n_teams: a.teams,
        games_per_team: a.games_per_team,
        neutral_fraction: a.neutral_fraction,
        true_beta,
        true_alpha: a.alpha.clone(),
        noise: a.noise,
        seed: a.seed,
        regulation_s: a.regulation,
        quantize: !a.no_quantize,
    })
}

fn cmd_synth(a: SynthArgs, outputs: &mut Outputs) -> Result<()> {
    let cfg = synth_config(&a)?;
    let out = outputs.file(&a.out)?;
    let truth_out = outputs.file(&truth_path(&a.out))?;
    let start = Instant::now();
    let (games, truth) = synth::generate_season(&cfg)?;
    let elapsed = start.elapsed().as_secs_f64();

    let mut w = create(&out)?;
    ingest::write_jsonl(&games, &mut w)?;
    w.flush()?;
    let mut w = create(&truth_out)?;
    serde_json::to_writer(&mut w, &truth)?;
    writeln!(w)?;
    w.flush()?;

    let size = fs::metadata(&out)?.len();
    info!(
        "generated {} games in {elapsed:.3}s, {size} bytes",
        games.len()
    );
    println!(
        "{} games among {} teams written to {} ({size} bytes)",
        games.len(),
        truth.teams.len(),
        out.display()
    );
    Ok(())
}
