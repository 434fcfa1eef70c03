//! Game records, scoring-summary repair, and per-second resampling.
//!
//! A game enters as a list of scoring events (elapsed seconds plus both
//! running scores). Before it can be fitted it goes through three steps:
//!
//! 1. [`reconcile_final`] appends the reported final score when the summary
//!    is missing the last scoring play.
//! 2. [`truncate_overtime`] drops everything after regulation, so overtime
//!    games enter the model as ties.
//! 3. [`resample`] turns the events into a step function sampled at every
//!    second `0..=T`.
//!
//! [`prepare`] runs the whole chain over a season and collects a
//! machine-readable report of every repair, warning, and exclusion.

mod format;

pub use format::{
    parse_csv, parse_game_file, parse_jsonl, write_csv, write_jsonl, GameFormat, ParseOptions,
    ParseOutcome,
};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default regulation length: a 40 minute game.
pub const DEFAULT_REGULATION_S: u32 = 2400;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{source_name}:{line}: field `{field}`: {message}")]
    Parse {
        source_name: String,
        line: u64,
        field: String,
        message: String,
    },
    #[error("{source_name}:{line}: duplicate game_id `{game_id}`")]
    DuplicateGame {
        source_name: String,
        line: u64,
        game_id: String,
    },
    #[error(
        "game `{game_id}`: last event {last:?} exceeds reported final {reported:?}; scores cannot decrease"
    )]
    IrreparableFinal {
        game_id: String,
        last: (u32, u32),
        reported: (u32, u32),
    },
    #[error("tracks have different lengths: {expected} vs {found} (game `{game_id}`)")]
    GridMismatch {
        game_id: String,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringEvent {
    pub time_s: u32,
    pub home_score: u32,
    pub away_score: u32,
}

impl ScoringEvent {
    pub fn new(time_s: u32, home_score: u32, away_score: u32) -> Self {
        Self {
            time_s,
            home_score,
            away_score,
        }
    }

    pub fn differential(&self) -> i64 {
        i64::from(self.home_score) - i64::from(self.away_score)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameRecord {
    pub game_id: String,
    pub date: NaiveDate,
    pub home_team: String,
    pub away_team: String,
    pub neutral_site: bool,
    /// Reported final score as (home, away), overtime included.
    pub reported_final: (u32, u32),
    pub regulation_length_s: u32,
    pub events: Vec<ScoringEvent>,
}

impl GameRecord {
    /// Score of the last event, or 0-0 for an empty summary.
    pub fn last_score(&self) -> (u32, u32) {
        self.events
            .last()
            .map(|e| (e.home_score, e.away_score))
            .unwrap_or((0, 0))
    }

    /// The same game with home and away labels exchanged.
    pub fn swapped(&self) -> GameRecord {
        GameRecord {
            home_team: self.away_team.clone(),
            away_team: self.home_team.clone(),
            reported_final: (self.reported_final.1, self.reported_final.0),
            events: self
                .events
                .iter()
                .map(|e| ScoringEvent::new(e.time_s, e.away_score, e.home_score))
                .collect(),
            ..self.clone()
        }
    }

    /// Checks event ordering and score monotonicity.
    pub fn check_events(&self) -> Result<(), EventIssue> {
        let mut prev = ScoringEvent::new(0, 0, 0);
        for (index, e) in self.events.iter().enumerate() {
            if e.time_s < prev.time_s {
                return Err(EventIssue::OutOfOrder { index });
            }
            if e.home_score < prev.home_score || e.away_score < prev.away_score {
                return Err(EventIssue::DecreasingScore { index });
            }
            if e.time_s == 0 && e.differential() != 0 {
                return Err(EventIssue::NonzeroStart { index });
            }
            prev = *e;
        }
        Ok(())
    }
}

/// A defect in a game's event list that excludes it from the season.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventIssue {
    OutOfOrder { index: usize },
    DecreasingScore { index: usize },
    NonzeroStart { index: usize },
}

impl std::fmt::Display for EventIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EventIssue::OutOfOrder { index } => {
                write!(f, "event {index} has an earlier time than its predecessor")
            }
            EventIssue::DecreasingScore { index } => {
                write!(f, "event {index} decreases a team's score")
            }
            EventIssue::NonzeroStart { index } => {
                write!(f, "event {index} at time 0 has a nonzero differential")
            }
        }
    }
}

/// Home-minus-away point differential at every second `0..=T`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifferentialTrack {
    pub game_id: String,
    pub d: Vec<i64>,
}

impl DifferentialTrack {
    /// Largest absolute change between consecutive seconds, with the second
    /// at which it happens.
    pub fn max_swing(&self) -> Option<(usize, i64)> {
        self.d
            .windows(2)
            .enumerate()
            .map(|(t, w)| (t + 1, (w[1] - w[0]).abs()))
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairKind {
    AppendedFinalScore,
    OvertimeTruncated,
    OvertimeNotTied,
    ExcludedNonMonotone,
    ExcludedIrreparableFinal,
    ExcludedSwing,
}

impl RepairKind {
    /// Whether the entry removes the game from the season.
    pub fn is_exclusion(self) -> bool {
        matches!(
            self,
            RepairKind::ExcludedNonMonotone
                | RepairKind::ExcludedIrreparableFinal
                | RepairKind::ExcludedSwing
        )
    }
}

/// One line of the repair report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub game_id: String,
    pub repair_kind: RepairKind,
    pub detail: String,
}

impl ReportEntry {
    fn new(game_id: &str, repair_kind: RepairKind, detail: impl Into<String>) -> Self {
        Self {
            game_id: game_id.to_string(),
            repair_kind,
            detail: detail.into(),
        }
    }
}

/// Appends the reported final score when the summary does not end on it.
///
/// The appended event sits at the end of regulation, or at the last event
/// time if that is later (an overtime game whose final play is missing).
pub fn reconcile_final(
    mut game: GameRecord,
) -> Result<(GameRecord, Option<ReportEntry>), IngestError> {
    let last = game.last_score();
    let reported = game.reported_final;
    if last == reported {
        return Ok((game, None));
    }
    if last.0 > reported.0 || last.1 > reported.1 {
        return Err(IngestError::IrreparableFinal {
            game_id: game.game_id,
            last,
            reported,
        });
    }
    let last_time = game.events.last().map(|e| e.time_s).unwrap_or(0);
    let time_s = game.regulation_length_s.max(last_time);
    game.events
        .push(ScoringEvent::new(time_s, reported.0, reported.1));
    let entry = ReportEntry::new(
        &game.game_id,
        RepairKind::AppendedFinalScore,
        format!(
            "last event {}-{} != reported final {}-{}; appended at {time_s}s",
            last.0, last.1, reported.0, reported.1
        ),
    );
    Ok((game, Some(entry)))
}

/// Drops all events after regulation.
///
/// Returns the truncated game plus report entries: one recording the
/// truncation, and a warning if the regulation-end score is not a tie.
pub fn truncate_overtime(mut game: GameRecord) -> (GameRecord, Vec<ReportEntry>) {
    let limit = game.regulation_length_s;
    let before = game.events.len();
    game.events.retain(|e| e.time_s <= limit);
    let dropped = before - game.events.len();
    if dropped == 0 {
        return (game, Vec::new());
    }
    let mut entries = vec![ReportEntry::new(
        &game.game_id,
        RepairKind::OvertimeTruncated,
        format!("dropped {dropped} events after {limit}s"),
    )];
    let (h, a) = game.last_score();
    if h != a {
        entries.push(ReportEntry::new(
            &game.game_id,
            RepairKind::OvertimeNotTied,
            format!("game continued past regulation but regulation ended {h}-{a}"),
        ));
    }
    (game, entries)
}

/// Step-interpolates the scoring summary onto every second of regulation.
///
/// `d[t]` is the differential of the last event with `time_s <= t`, so
/// events sharing a timestamp resolve to the final one in list order.
pub fn resample(game: &GameRecord) -> DifferentialTrack {
    let len = game.regulation_length_s as usize + 1;
    let mut d = vec![0i64; len];
    let mut events = game.events.iter().peekable();
    let mut current = 0i64;
    for (t, slot) in d.iter_mut().enumerate() {
        while let Some(e) = events.next_if(|e| e.time_s as usize <= t) {
            current = e.differential();
        }
        *slot = current;
    }
    DifferentialTrack {
        game_id: game.game_id.clone(),
        d,
    }
}

/// Mean of the two teams' scores over all games, per second.
///
/// This is the shift used when ratings are pinned to the average score.
pub fn average_score_curve(games: &[GameRecord]) -> Vec<f64> {
    let Some(first) = games.first() else {
        return Vec::new();
    };
    let len = first.regulation_length_s as usize + 1;
    let mut total = vec![0.0f64; len];
    for game in games {
        let mut events = game.events.iter().peekable();
        let mut current = 0.0;
        for (t, slot) in total.iter_mut().enumerate() {
            while let Some(e) = events.next_if(|e| e.time_s as usize <= t) {
                current = 0.5 * (f64::from(e.home_score) + f64::from(e.away_score));
            }
            *slot += current;
        }
    }
    let m = games.len() as f64;
    total.iter_mut().for_each(|v| *v /= m);
    total
}

#[derive(Debug, Clone, Default)]
pub struct PrepareOptions {
    /// Keep games that fail a validation instead of excluding them.
    pub force: bool,
    /// Largest allowed one-second change in the differential. Off by default.
    pub max_swing: Option<i64>,
}

/// A season ready for fitting: games after repair, aligned with their tracks.
#[derive(Debug, Clone, Default)]
pub struct PreparedSeason {
    pub games: Vec<GameRecord>,
    pub tracks: Vec<DifferentialTrack>,
    pub report: Vec<ReportEntry>,
}

impl PreparedSeason {
    pub fn excluded(&self) -> impl Iterator<Item = &ReportEntry> {
        self.report.iter().filter(|e| e.repair_kind.is_exclusion())
    }

    pub fn repairs(&self) -> impl Iterator<Item = &ReportEntry> {
        self.report
            .iter()
            .filter(|e| e.repair_kind == RepairKind::AppendedFinalScore)
    }
}

enum Prepared {
    Kept(GameRecord, DifferentialTrack, Vec<ReportEntry>),
    Excluded(Vec<ReportEntry>),
}

fn prepare_one(game: GameRecord, opts: &PrepareOptions) -> Prepared {
    let mut report = Vec::new();
    let game = match reconcile_final(game.clone()) {
        Ok((g, entry)) => {
            report.extend(entry);
            g
        }
        Err(err) => {
            report.push(ReportEntry::new(
                &game.game_id,
                RepairKind::ExcludedIrreparableFinal,
                err.to_string(),
            ));
            if !opts.force {
                return Prepared::Excluded(report);
            }
            game
        }
    };
    let (game, entries) = truncate_overtime(game);
    report.extend(entries);
    let track = resample(&game);
    if let Some(limit) = opts.max_swing {
        if let Some((t, swing)) = track.max_swing().filter(|&(_, s)| s > limit) {
            report.push(ReportEntry::new(
                &game.game_id,
                RepairKind::ExcludedSwing,
                format!("differential changes by {swing} at {t}s (limit {limit})"),
            ));
            if !opts.force {
                return Prepared::Excluded(report);
            }
        }
    }
    Prepared::Kept(game, track, report)
}

/// Reconciles, truncates, and resamples every game of a parsed season.
///
/// Games rejected at parse time are carried into the report so a single
/// report covers the whole pipeline. Output order follows input order.
pub fn prepare(outcome: ParseOutcome, opts: &PrepareOptions) -> PreparedSeason {
    let mut season = PreparedSeason {
        report: outcome.rejected,
        ..Default::default()
    };
    let results: Vec<Prepared> = outcome
        .games
        .into_par_iter()
        .map(|g| prepare_one(g, opts))
        .collect();
    for result in results {
        match result {
            Prepared::Kept(game, track, entries) => {
                season.games.push(game);
                season.tracks.push(track);
                season.report.extend(entries);
            }
            Prepared::Excluded(entries) => season.report.extend(entries),
        }
    }
    season
}
