//! Design matrices for the three rating models.
//!
//! Every game contributes one row. The first `n` columns hold `+1` for the
//! listed home team and `-1` for the away team. The home-advantage models add
//! indicator columns:
//!
//! * `ConstantHca`: column `n` is 1 for every non-neutral game.
//! * `IndividualHca`: column `n + i` is 1 when the game is on team `i`'s court.
//!
//! For a neutral game the listed home team still gets the `+1`; the choice
//! only flips the sign of that game's differential.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::GameRecord;

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("no games to build a design from")]
    NoGames,
    #[error("game `{game_id}` references unknown team `{team}`")]
    UnknownTeam { game_id: String, team: String },
    #[error("game `{game_id}` lists `{team}` as both home and away")]
    SelfGame { game_id: String, team: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Model 1: no home advantage.
    Basic,
    /// Model 2: one home-advantage curve shared by all teams.
    ConstantHca,
    /// Model 3: a home-advantage curve per team.
    IndividualHca,
}

impl ModelKind {
    pub fn param_count(self, n_teams: usize) -> usize {
        match self {
            ModelKind::Basic => n_teams,
            ModelKind::ConstantHca => n_teams + 1,
            ModelKind::IndividualHca => 2 * n_teams,
        }
    }

    /// Model number as used on the command line (1, 2, 3).
    pub fn number(self) -> u8 {
        match self {
            ModelKind::Basic => 1,
            ModelKind::ConstantHca => 2,
            ModelKind::IndividualHca => 3,
        }
    }

    pub fn from_number(n: u8) -> Option<ModelKind> {
        match n {
            1 => Some(ModelKind::Basic),
            2 => Some(ModelKind::ConstantHca),
            3 => Some(ModelKind::IndividualHca),
            _ => None,
        }
    }

    pub fn has_alpha(self) -> bool {
        self != ModelKind::Basic
    }
}

/// Bijection between team identifiers and column indices `0..n`.
///
/// Built from a season in sorted identifier order so the layout does not
/// depend on game order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct TeamIndex {
    names: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl From<Vec<String>> for TeamIndex {
    fn from(names: Vec<String>) -> Self {
        let lookup = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        TeamIndex { names, lookup }
    }
}

impl From<TeamIndex> for Vec<String> {
    fn from(index: TeamIndex) -> Self {
        index.names
    }
}

impl TeamIndex {
    pub fn from_games(games: &[GameRecord]) -> TeamIndex {
        let mut names: Vec<String> = games
            .iter()
            .flat_map(|g| [g.home_team.clone(), g.away_team.clone()])
            .collect();
        names.sort();
        names.dedup();
        TeamIndex::from(names)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, team: &str) -> Option<usize> {
        self.lookup.get(team).copied()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub teams: TeamIndex,
}

impl ModelSpec {
    pub fn n_teams(&self) -> usize {
        self.teams.len()
    }

    pub fn param_count(&self) -> usize {
        self.kind.param_count(self.n_teams())
    }

    /// Row labels for parameter dumps: `beta:<team>`, `alpha`, `alpha:<team>`.
    pub fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .teams
            .names()
            .iter()
            .map(|t| format!("beta:{t}"))
            .collect();
        match self.kind {
            ModelKind::Basic => {}
            ModelKind::ConstantHca => names.push("alpha".into()),
            ModelKind::IndividualHca => {
                names.extend(self.teams.names().iter().map(|t| format!("alpha:{t}")))
            }
        }
        names
    }
}

/// One nonzero of the design matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub row: usize,
    pub col: usize,
    pub value: i8,
}

/// Which columns a game row touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GameRow {
    pub home: usize,
    pub away: usize,
    pub neutral: bool,
}

#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub spec: ModelSpec,
    entries: Vec<Entry>,
    rows: Vec<GameRow>,
    row_game: Vec<String>,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.spec.param_count()
    }

    /// Coordinate list, ordered by row then column.
    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn rows(&self) -> &[GameRow] {
        &self.rows
    }

    pub fn row_game(&self) -> &[String] {
        &self.row_game
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(self.n_rows(), self.n_cols());
        for e in &self.entries {
            x[(e.row, e.col)] = f64::from(e.value);
        }
        x
    }

    /// Number of nonzeros in each column.
    pub fn column_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_cols()];
        for e in &self.entries {
            counts[e.col] += 1;
        }
        counts
    }

    /// Columns with no nonzero entry. Their parameters cannot be estimated.
    pub fn zero_columns(&self) -> Vec<usize> {
        self.column_counts()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(i, _)| i)
            .collect()
    }

    /// `X v` for a parameter vector `v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows()];
        for e in &self.entries {
            out[e.row] += f64::from(e.value) * v[e.col];
        }
        out
    }

    /// `Xᵀ r` for a row-space vector `r`.
    pub fn tr_mul_vec(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols()];
        for e in &self.entries {
            out[e.col] += f64::from(e.value) * r[e.row];
        }
        out
    }

    /// Writes the matrix in MatrixMarket coordinate format (1-based indices).
    pub fn write_matrix_market<W: Write>(&self, mut out: W) -> Result<(), DesignError> {
        writeln!(out, "%%MatrixMarket matrix coordinate integer general")?;
        writeln!(
            out,
            "{} {} {}",
            self.n_rows(),
            self.n_cols(),
            self.entries.len()
        )?;
        for e in &self.entries {
            writeln!(out, "{} {} {}", e.row + 1, e.col + 1, e.value)?;
        }
        Ok(())
    }
}

/// Builds the design with the team index derived from the games.
pub fn build_design(games: &[GameRecord], kind: ModelKind) -> Result<DesignMatrix, DesignError> {
    build_design_with(games, kind, TeamIndex::from_games(games))
}

/// Builds the design against a fixed team index.
pub fn build_design_with(
    games: &[GameRecord],
    kind: ModelKind,
    teams: TeamIndex,
) -> Result<DesignMatrix, DesignError> {
    if games.is_empty() {
        return Err(DesignError::NoGames);
    }
    let n = teams.len();
    let lookup = |g: &GameRecord, team: &str| {
        teams.get(team).ok_or_else(|| DesignError::UnknownTeam {
            game_id: g.game_id.clone(),
            team: team.to_string(),
        })
    };
    let mut entries = Vec::with_capacity(games.len() * 3);
    let mut rows = Vec::with_capacity(games.len());
    for (k, g) in games.iter().enumerate() {
        let home = lookup(g, &g.home_team)?;
        let away = lookup(g, &g.away_team)?;
        if home == away {
            return Err(DesignError::SelfGame {
                game_id: g.game_id.clone(),
                team: g.home_team.clone(),
            });
        }
        let mut row = [
            Entry {
                row: k,
                col: home,
                value: 1,
            },
            Entry {
                row: k,
                col: away,
                value: -1,
            },
        ];
        row.sort_by_key(|e| e.col);
        entries.extend(row);
        if !g.neutral_site {
            match kind {
                ModelKind::Basic => {}
                ModelKind::ConstantHca => entries.push(Entry {
                    row: k,
                    col: n,
                    value: 1,
                }),
                ModelKind::IndividualHca => entries.push(Entry {
                    row: k,
                    col: n + home,
                    value: 1,
                }),
            }
        }
        rows.push(GameRow {
            home,
            away,
            neutral: g.neutral_site,
        });
    }
    Ok(DesignMatrix {
        spec: ModelSpec { kind, teams },
        entries,
        rows,
        row_game: games.iter().map(|g| g.game_id.clone()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Connectivity {
    /// Connected components of the team graph; teams sorted within each,
    /// components ordered by their first team.
    pub components: Vec<Vec<String>>,
    pub is_connected: bool,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Connected components of the graph with teams as vertices and games as
/// edges. A single component is what makes the ratings comparable.
pub fn check_connectivity(x: &DesignMatrix) -> Connectivity {
    let n = x.spec.n_teams();
    let mut parent: Vec<usize> = (0..n).collect();
    for row in x.rows() {
        let (a, b) = (find(&mut parent, row.home), find(&mut parent, row.away));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        let idx = *slot.entry(root).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[idx].push(i);
    }
    let components: Vec<Vec<String>> = groups
        .into_iter()
        .map(|g| {
            g.into_iter()
                .map(|i| x.spec.teams.name(i).to_string())
                .collect()
        })
        .collect();
    Connectivity {
        is_connected: components.len() <= 1,
        components,
    }
}
