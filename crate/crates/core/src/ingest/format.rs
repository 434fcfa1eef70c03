//! Game file formats.
//!
//! JSONL: one object per line,
//!
//! ```text
//! {"game_id":"...","date":"2018-11-06","home":"Samford","away":"North Alabama",
//!  "neutral":false,"final_home":77,"final_away":64,"regulation_s":2400,
//!  "events":[[30,0,2],[40,0,3]]}
//! ```
//!
//! CSV: `games.csv` with columns
//! `game_id,date,home,away,neutral,final_home,final_away,regulation_s` plus
//! `events.csv` with columns `game_id,time_s,home_score,away_score`.
//! Times are elapsed seconds from tip-off.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::Serialize;
use serde_json::{Map, Value};

use super::{GameRecord, IngestError, RepairKind, ReportEntry, ScoringEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GameFormat {
    Jsonl,
    Csv,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Keep games whose event lists are out of order or non-monotone.
    pub force: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub games: Vec<GameRecord>,
    /// Games excluded for event-list defects, as report entries.
    pub rejected: Vec<ReportEntry>,
}

fn parse_err(source: &str, line: u64, field: &str, message: impl Into<String>) -> IngestError {
    IngestError::Parse {
        source_name: source.to_string(),
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

struct Located<'a> {
    source: &'a str,
    line: u64,
}

impl Located<'_> {
    fn err(&self, field: &str, message: impl Into<String>) -> IngestError {
        parse_err(self.source, self.line, field, message)
    }

    fn field<'v>(
        &self,
        obj: &'v Map<String, Value>,
        field: &str,
    ) -> Result<&'v Value, IngestError> {
        obj.get(field).ok_or_else(|| self.err(field, "missing"))
    }

    fn string(&self, obj: &Map<String, Value>, field: &str) -> Result<String, IngestError> {
        match self.field(obj, field)? {
            Value::String(s) if !s.is_empty() => Ok(s.clone()),
            Value::String(_) => Err(self.err(field, "empty string")),
            other => Err(self.err(field, format!("expected string, found {other}"))),
        }
    }

    fn uint(&self, obj: &Map<String, Value>, field: &str) -> Result<u32, IngestError> {
        let v = self.field(obj, field)?;
        v.as_u64()
            .and_then(|n| u32::try_from(n).ok())
            .ok_or_else(|| self.err(field, format!("expected non-negative integer, found {v}")))
    }

    fn date(&self, raw: &str, field: &str) -> Result<NaiveDate, IngestError> {
        NaiveDate::parse_from_str(raw, "%Y-%m-%d")
            .map_err(|e| self.err(field, format!("invalid ISO-8601 date `{raw}`: {e}")))
    }

    fn number(&self, raw: &str, field: &str) -> Result<u32, IngestError> {
        raw.trim().parse().map_err(|_| {
            self.err(
                field,
                format!("expected non-negative integer, found `{raw}`"),
            )
        })
    }

    fn boolean(&self, raw: &str, field: &str) -> Result<bool, IngestError> {
        match raw.trim() {
            "true" | "1" => Ok(true),
            "false" | "0" => Ok(false),
            other => Err(self.err(field, format!("expected true/false, found `{other}`"))),
        }
    }
}

struct Header {
    game_id: String,
    date: NaiveDate,
    home: String,
    away: String,
    neutral: bool,
    final_home: u32,
    final_away: u32,
    regulation_s: u32,
}

impl Header {
    fn validate(&self, at: &Located<'_>) -> Result<(), IngestError> {
        if self.home == self.away {
            return Err(at.err("away", "home and away teams are the same"));
        }
        if self.regulation_s == 0 {
            return Err(at.err("regulation_s", "must be positive"));
        }
        Ok(())
    }

    fn into_record(self, events: Vec<ScoringEvent>) -> GameRecord {
        GameRecord {
            game_id: self.game_id,
            date: self.date,
            home_team: self.home,
            away_team: self.away,
            neutral_site: self.neutral,
            reported_final: (self.final_home, self.final_away),
            regulation_length_s: self.regulation_s,
            events,
        }
    }
}

fn parse_json_line(text: &str, at: &Located<'_>) -> Result<GameRecord, IngestError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| at.err("<line>", format!("invalid JSON: {e}")))?;
    let Value::Object(obj) = value else {
        return Err(at.err("<line>", "expected a JSON object"));
    };
    let game_id = at.string(&obj, "game_id")?;
    let date = at.date(&at.string(&obj, "date")?, "date")?;
    let home = at.string(&obj, "home")?;
    let away = at.string(&obj, "away")?;
    let neutral = match at.field(&obj, "neutral")? {
        Value::Bool(b) => *b,
        other => return Err(at.err("neutral", format!("expected bool, found {other}"))),
    };
    let header = Header {
        game_id,
        date,
        home,
        away,
        neutral,
        final_home: at.uint(&obj, "final_home")?,
        final_away: at.uint(&obj, "final_away")?,
        regulation_s: at.uint(&obj, "regulation_s")?,
    };
    header.validate(at)?;
    let Value::Array(raw_events) = at.field(&obj, "events")? else {
        return Err(at.err("events", "expected an array of [time_s, home, away]"));
    };
    let mut events = Vec::with_capacity(raw_events.len());
    for (i, ev) in raw_events.iter().enumerate() {
        let field = format!("events[{i}]");
        let triple = ev
            .as_array()
            .filter(|a| a.len() == 3)
            .ok_or_else(|| at.err(&field, "expected [time_s, home_score, away_score]"))?;
        let mut nums = [0u32; 3];
        for (slot, v) in nums.iter_mut().zip(triple) {
            *slot = v
                .as_u64()
                .and_then(|n| u32::try_from(n).ok())
                .ok_or_else(|| {
                    at.err(&field, format!("expected non-negative integer, found {v}"))
                })?;
        }
        events.push(ScoringEvent::new(nums[0], nums[1], nums[2]));
    }
    Ok(header.into_record(events))
}

/// Applies event-list validation and duplicate detection to freshly parsed
/// games, in input order.
fn finish(
    parsed: Vec<(GameRecord, u64)>,
    source: &str,
    opts: ParseOptions,
) -> Result<ParseOutcome, IngestError> {
    let mut seen = HashSet::new();
    let mut outcome = ParseOutcome::default();
    for (mut game, line) in parsed {
        if !seen.insert(game.game_id.clone()) {
            return Err(IngestError::DuplicateGame {
                source_name: source.to_string(),
                line,
                game_id: game.game_id,
            });
        }
        if let Err(issue) = game.check_events() {
            outcome.rejected.push(ReportEntry::new(
                &game.game_id,
                RepairKind::ExcludedNonMonotone,
                issue.to_string(),
            ));
            if !opts.force {
                continue;
            }
            game.events.sort_by_key(|e| e.time_s);
        }
        outcome.games.push(game);
    }
    Ok(outcome)
}

/// Parses a JSONL game file. Blank lines are skipped.
pub fn parse_jsonl<R: BufRead>(
    reader: R,
    source: &str,
    opts: ParseOptions,
) -> Result<ParseOutcome, IngestError> {
    let mut parsed = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let at = Located {
            source,
            line: idx as u64 + 1,
        };
        parsed.push((parse_json_line(&line, &at)?, at.line));
    }
    finish(parsed, source, opts)
}

fn csv_column(headers: &csv::StringRecord, name: &str, source: &str) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| parse_err(source, 1, name, "missing column"))
}

fn csv_error(source: &str, e: csv::Error) -> IngestError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    parse_err(source, line, "<row>", e.to_string())
}

/// Parses the two-file CSV layout. Events are grouped by `game_id` and keep
/// their file order within a game.
pub fn parse_csv<G: Read, E: Read>(
    games: G,
    games_source: &str,
    events: E,
    events_source: &str,
    opts: ParseOptions,
) -> Result<ParseOutcome, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(events);
    let headers = rdr
        .headers()
        .map_err(|e| csv_error(events_source, e))?
        .clone();
    let cols: Vec<usize> = ["game_id", "time_s", "home_score", "away_score"]
        .iter()
        .map(|c| csv_column(&headers, c, events_source))
        .collect::<Result<_, _>>()?;
    let mut by_game: HashMap<String, Vec<ScoringEvent>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(events_source, e))?;
        let at = Located {
            source: events_source,
            line: rec.position().map(|p| p.line()).unwrap_or(0),
        };
        let get = |i: usize| rec.get(cols[i]).unwrap_or("");
        let event = ScoringEvent::new(
            at.number(get(1), "time_s")?,
            at.number(get(2), "home_score")?,
            at.number(get(3), "away_score")?,
        );
        by_game.entry(get(0).to_string()).or_default().push(event);
    }

    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(games);
    let headers = rdr
        .headers()
        .map_err(|e| csv_error(games_source, e))?
        .clone();
    let names = [
        "game_id",
        "date",
        "home",
        "away",
        "neutral",
        "final_home",
        "final_away",
        "regulation_s",
    ];
    let cols: Vec<usize> = names
        .iter()
        .map(|c| csv_column(&headers, c, games_source))
        .collect::<Result<_, _>>()?;
    let mut parsed = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(games_source, e))?;
        let at = Located {
            source: games_source,
            line: rec.position().map(|p| p.line()).unwrap_or(0),
        };
        let get = |i: usize| rec.get(cols[i]).unwrap_or("");
        let nonempty = |i: usize| {
            let v = get(i);
            if v.is_empty() {
                Err(at.err(names[i], "empty"))
            } else {
                Ok(v.to_string())
            }
        };
        let header = Header {
            game_id: nonempty(0)?,
            date: at.date(get(1), "date")?,
            home: nonempty(2)?,
            away: nonempty(3)?,
            neutral: at.boolean(get(4), "neutral")?,
            final_home: at.number(get(5), "final_home")?,
            final_away: at.number(get(6), "final_away")?,
            regulation_s: at.number(get(7), "regulation_s")?,
        };
        header.validate(&at)?;
        let events = by_game.remove(&header.game_id).unwrap_or_default();
        parsed.push((header.into_record(events), at.line));
    }
    if let Some(orphan) = by_game.keys().min() {
        return Err(parse_err(
            events_source,
            0,
            "game_id",
            format!("events reference unknown game `{orphan}`"),
        ));
    }
    finish(parsed, games_source, opts)
}

/// Reads a game file from disk.
///
/// JSONL takes a file path. CSV takes either a directory holding
/// `games.csv` and `events.csv` or the path of `games.csv` itself.
pub fn parse_game_file(
    path: &Path,
    format: GameFormat,
    opts: ParseOptions,
) -> Result<ParseOutcome, IngestError> {
    match format {
        GameFormat::Jsonl => {
            let file = std::fs::File::open(path)?;
            parse_jsonl(
                std::io::BufReader::new(file),
                &path.display().to_string(),
                opts,
            )
        }
        GameFormat::Csv => {
            let dir = if path.is_dir() {
                path
            } else {
                path.parent().unwrap_or(Path::new("."))
            };
            let games_path = if path.is_dir() {
                dir.join("games.csv")
            } else {
                path.to_path_buf()
            };
            let events_path = dir.join("events.csv");
            parse_csv(
                std::fs::File::open(&games_path)?,
                &games_path.display().to_string(),
                std::fs::File::open(&events_path)?,
                &events_path.display().to_string(),
                opts,
            )
        }
    }
}

impl GameFormat {
    /// Picks CSV for directories and `.csv` paths, JSONL otherwise.
    pub fn detect(path: &Path) -> GameFormat {
        if path.is_dir() || path.extension().is_some_and(|e| e == "csv") {
            GameFormat::Csv
        } else {
            GameFormat::Jsonl
        }
    }
}

#[derive(Serialize)]
struct JsonGame<'a> {
    game_id: &'a str,
    date: String,
    home: &'a str,
    away: &'a str,
    neutral: bool,
    final_home: u32,
    final_away: u32,
    regulation_s: u32,
    events: Vec<[u32; 3]>,
}

pub fn write_jsonl<W: Write>(games: &[GameRecord], mut out: W) -> Result<(), IngestError> {
    for g in games {
        let row = JsonGame {
            game_id: &g.game_id,
            date: g.date.format("%Y-%m-%d").to_string(),
            home: &g.home_team,
            away: &g.away_team,
            neutral: g.neutral_site,
            final_home: g.reported_final.0,
            final_away: g.reported_final.1,
            regulation_s: g.regulation_length_s,
            events: g
                .events
                .iter()
                .map(|e| [e.time_s, e.home_score, e.away_score])
                .collect(),
        };
        serde_json::to_writer(&mut out, &row).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_csv<G: Write, E: Write>(
    games: &[GameRecord],
    games_out: G,
    events_out: E,
) -> Result<(), IngestError> {
    let io = |e: csv::Error| IngestError::Io(e.into());
    let mut gw = csv::Writer::from_writer(games_out);
    gw.write_record([
        "game_id",
        "date",
        "home",
        "away",
        "neutral",
        "final_home",
        "final_away",
        "regulation_s",
    ])
    .map_err(io)?;
    let mut ew = csv::Writer::from_writer(events_out);
    ew.write_record(["game_id", "time_s", "home_score", "away_score"])
        .map_err(io)?;
    for g in games {
        gw.write_record([
            g.game_id.clone(),
            g.date.format("%Y-%m-%d").to_string(),
            g.home_team.clone(),
            g.away_team.clone(),
            g.neutral_site.to_string(),
            g.reported_final.0.to_string(),
            g.reported_final.1.to_string(),
            g.regulation_length_s.to_string(),
        ])
        .map_err(io)?;
        for e in &g.events {
            ew.write_record([
                g.game_id.clone(),
                e.time_s.to_string(),
                e.home_score.to_string(),
                e.away_score.to_string(),
            ])
            .map_err(io)?;
        }
    }
    gw.flush()?;
    ew.flush()?;
    Ok(())
}
