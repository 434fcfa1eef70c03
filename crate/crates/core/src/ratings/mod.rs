//! Working with fitted functional ratings: smoothing, scalar ratings and
//! rankings, the average-differential / strength-of-schedule split, and
//! matchup predictions.
//!
//! Everything here runs on the raw fitted curves. Smoothing is only for
//! presentation and never feeds back into rankings or schedule strength.

mod bspline;

pub use bspline::{BSplineBasis, Smoother};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::CurveSeries;
use crate::design::{DesignMatrix, ModelKind};
use crate::solver::RatingSet;

pub const DEFAULT_SPLINE_ORDER: usize = 4;
pub const DEFAULT_KNOT_SPACING_S: usize = 60;

#[derive(Debug, Error)]
pub enum RatingsError {
    #[error("invalid spline: {0}")]
    InvalidSpline(String),
    #[error("{samples} samples cannot support a basis needing {required}")]
    TooFewSamples { samples: usize, required: usize },
    #[error("curve has {found} samples, expected {expected}")]
    GridMismatch { expected: usize, found: usize },
    #[error("invalid weight: {0}")]
    InvalidWeight(String),
    #[error("unknown team `{0}`")]
    UnknownTeam(String),
    #[error("team `{0}` played no games")]
    NoGames(String),
    #[error("{0}")]
    WrongModel(String),
    #[error("fit and inputs disagree: {0}")]
    Mismatch(&'static str),
}

/// Weight function for collapsing a curve to a scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WeightSpec {
    /// `w(t) = 1`.
    Uniform,
    /// `w(t) = t`.
    LinearIncreasing,
    /// All weight at the final second: the end-of-game rating.
    EndOfGame,
    /// Piecewise-linear through `(second, weight)` points, held constant
    /// beyond the first and last point.
    Custom(Vec<(f64, f64)>),
}

impl WeightSpec {
    pub fn validate(&self) -> Result<(), RatingsError> {
        let WeightSpec::Custom(table) = self else {
            return Ok(());
        };
        if table.is_empty() {
            return Err(RatingsError::InvalidWeight("empty weight table".into()));
        }
        if table
            .iter()
            .any(|&(s, w)| !s.is_finite() || !w.is_finite() || w < 0.0)
        {
            return Err(RatingsError::InvalidWeight(
                "weights must be finite and non-negative".into(),
            ));
        }
        if table.windows(2).any(|p| p[1].0 <= p[0].0) {
            return Err(RatingsError::InvalidWeight(
                "table seconds must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    /// Weight at each second of a grid of the given length. `EndOfGame`
    /// yields a unit mass at the last sample.
    pub fn weights(&self, grid_len: usize) -> Result<Vec<f64>, RatingsError> {
        self.validate()?;
        let w: Vec<f64> = match self {
            WeightSpec::Uniform => vec![1.0; grid_len],
            WeightSpec::LinearIncreasing => (0..grid_len).map(|t| t as f64).collect(),
            WeightSpec::EndOfGame => {
                let mut w = vec![0.0; grid_len];
                if let Some(last) = w.last_mut() {
                    *last = 1.0;
                }
                w
            }
            WeightSpec::Custom(table) => (0..grid_len)
                .map(|t| interpolate(table, t as f64))
                .collect(),
        };
        if w.iter().all(|&v| v == 0.0) {
            return Err(RatingsError::InvalidWeight(
                "weight is identically zero".into(),
            ));
        }
        Ok(w)
    }
}

fn interpolate(table: &[(f64, f64)], x: f64) -> f64 {
    let first = table[0];
    let last = table[table.len() - 1];
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let i = table.partition_point(|&(s, _)| s <= x);
    let (x0, y0) = table[i - 1];
    let (x1, y1) = table[i];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

fn trapezoid(values: impl Iterator<Item = f64>, len: usize) -> f64 {
    values
        .enumerate()
        .map(|(t, v)| if t == 0 || t + 1 == len { 0.5 * v } else { v })
        .sum()
}

/// Weighted time-average `∫ w β / ∫ w` by the trapezoid rule on the
/// per-second grid. `EndOfGame` returns the final value exactly.
pub fn scalar_rating(curve: &[f64], w: &WeightSpec) -> Result<f64, RatingsError> {
    if curve.is_empty() {
        return Err(RatingsError::GridMismatch {
            expected: 1,
            found: 0,
        });
    }
    if *w == WeightSpec::EndOfGame {
        return Ok(curve[curve.len() - 1]);
    }
    let weights = w.weights(curve.len())?;
    let len = curve.len();
    let den = trapezoid(weights.iter().copied(), len);
    if den <= 0.0 {
        return Err(RatingsError::InvalidWeight("zero total weight".into()));
    }
    let num = trapezoid(weights.iter().zip(curve).map(|(a, b)| a * b), len);
    Ok(num / den)
}

/// Least-squares B-spline projection of a curve, evaluated back on the grid.
pub fn smooth(
    rating: &CurveSeries,
    order: usize,
    knot_spacing_s: usize,
) -> Result<CurveSeries, RatingsError> {
    let smoother = Smoother::new(rating.len(), order, knot_spacing_s)?;
    Ok(CurveSeries::new(
        format!("{}:smoothed", rating.name),
        smoother.smooth(&rating.values)?,
        rating.units.clone(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedTeam {
    pub team: String,
    pub rating: f64,
    pub rank: usize,
    /// Shares its scalar rating with another team; order broken by name.
    pub tied: bool,
}

/// Orders scalar values descending, ties broken by team name.
fn rank_values(values: Vec<(String, f64)>) -> Vec<RankedTeam> {
    let mut values = values;
    values.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let tied: Vec<bool> = (0..values.len())
        .map(|i| {
            (i > 0 && values[i - 1].1 == values[i].1)
                || (i + 1 < values.len() && values[i + 1].1 == values[i].1)
        })
        .collect();
    values
        .into_iter()
        .zip(tied)
        .enumerate()
        .map(|(i, ((team, rating), tied))| RankedTeam {
            team,
            rating,
            rank: i + 1,
            tied,
        })
        .collect()
}

/// Ranks teams by scalar rating under weight `w`, best first.
pub fn rank_teams(ratings: &RatingSet, w: &WeightSpec) -> Result<Vec<RankedTeam>, RatingsError> {
    let values = (0..ratings.n_teams())
        .map(|i| {
            Ok((
                ratings.spec.teams.name(i).to_string(),
                scalar_rating(ratings.beta(i), w)?,
            ))
        })
        .collect::<Result<Vec<_>, RatingsError>>()?;
    Ok(rank_values(values))
}

/// A ranking row with the end-of-game rank alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub team: String,
    pub scalar_rating: f64,
    pub rank: usize,
    pub end_of_game_rank: usize,
    pub tied: bool,
}

pub fn rankings_table(
    ratings: &RatingSet,
    w: &WeightSpec,
) -> Result<Vec<RankingRow>, RatingsError> {
    let end: std::collections::HashMap<String, usize> =
        rank_teams(ratings, &WeightSpec::EndOfGame)?
            .into_iter()
            .map(|r| (r.team, r.rank))
            .collect();
    Ok(rank_teams(ratings, w)?
        .into_iter()
        .map(|r| RankingRow {
            end_of_game_rank: end[&r.team],
            team: r.team,
            scalar_rating: r.rating,
            rank: r.rank,
            tied: r.tied,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSummary {
    pub team: String,
    pub games_played: usize,
    /// One entry per game, repeated for repeat opponents.
    pub opponents: Vec<String>,
    pub home_count: usize,
    pub away_count: usize,
    pub neutral_count: usize,
}

pub fn schedule_summary(x: &DesignMatrix, team: &str) -> Result<ScheduleSummary, RatingsError> {
    let i = x
        .spec
        .teams
        .get(team)
        .ok_or_else(|| RatingsError::UnknownTeam(team.to_string()))?;
    let mut s = ScheduleSummary {
        team: team.to_string(),
        games_played: 0,
        opponents: Vec::new(),
        home_count: 0,
        away_count: 0,
        neutral_count: 0,
    };
    for row in x.rows() {
        let opponent = if row.home == i {
            row.away
        } else if row.away == i {
            row.home
        } else {
            continue;
        };
        s.games_played += 1;
        s.opponents.push(x.spec.teams.name(opponent).to_string());
        if row.neutral {
            s.neutral_count += 1;
        } else if row.home == i {
            s.home_count += 1;
        } else {
            s.away_count += 1;
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub team: String,
    pub avg_diff: CurveSeries,
    pub sos: CurveSeries,
}

/// Splits `β_i(t)` into the team's average point differential and its
/// strength of schedule:
///
/// ```text
/// d̄_i(t)   = (1/m_i) Σ_{k ∈ G_i} x_ki d_k(t)
/// sos_i(t) = (1/m_i) Σ_{j ∈ T_i} β_j(t) − (h_i/m_i) α(t) + (a_i/m_i) α(t)
/// ```
///
/// The identity `β_i = d̄_i + sos_i` is row `i` of the normal equations, so
/// it holds for any least-squares fit of the constant-advantage model.
pub fn decompose(
    fit: &RatingSet,
    x: &DesignMatrix,
    d: &DMatrix<f64>,
    team: &str,
) -> Result<Decomposition, RatingsError> {
    if fit.kind() != ModelKind::ConstantHca || x.spec.kind != ModelKind::ConstantHca {
        return Err(RatingsError::WrongModel(
            "decomposition is defined for the constant home-advantage model only".into(),
        ));
    }
    if x.row_game() != fit.game_ids.as_slice() {
        return Err(RatingsError::Mismatch("game order"));
    }
    if d.nrows() != x.n_rows() || d.ncols() != fit.grid_len {
        return Err(RatingsError::Mismatch("response shape"));
    }
    let i = fit
        .spec
        .teams
        .get(team)
        .ok_or_else(|| RatingsError::UnknownTeam(team.to_string()))?;
    let alpha = fit.alpha().expect("constant model has alpha");
    let len = fit.grid_len;
    let mut diff_sum = vec![0.0; len];
    let mut opp_sum = vec![0.0; len];
    let (mut games, mut home, mut away) = (0usize, 0usize, 0usize);
    for (k, row) in x.rows().iter().enumerate() {
        let (sign, opponent) = if row.home == i {
            (1.0, row.away)
        } else if row.away == i {
            (-1.0, row.home)
        } else {
            continue;
        };
        games += 1;
        if !row.neutral {
            if sign > 0.0 {
                home += 1;
            } else {
                away += 1;
            }
        }
        let opp = fit.beta(opponent);
        for t in 0..len {
            diff_sum[t] += sign * d[(k, t)];
            opp_sum[t] += opp[t];
        }
    }
    if games == 0 {
        return Err(RatingsError::NoGames(team.to_string()));
    }
    let m = games as f64;
    let venue = (away as f64 - home as f64) / m;
    let avg_diff = diff_sum.iter().map(|v| v / m).collect();
    let sos = opp_sum
        .iter()
        .zip(alpha)
        .map(|(s, a)| s / m + venue * a)
        .collect();
    Ok(Decomposition {
        team: team.to_string(),
        avg_diff: CurveSeries::new(format!("avg_diff:{team}"), avg_diff, "points"),
        sos: CurveSeries::new(format!("sos:{team}"), sos, "points"),
    })
}

/// Scalar strength of schedule for every team, ranked hardest first.
pub fn sos_table(
    fit: &RatingSet,
    x: &DesignMatrix,
    d: &DMatrix<f64>,
    w: &WeightSpec,
) -> Result<Vec<RankedTeam>, RatingsError> {
    let values = fit
        .spec
        .teams
        .names()
        .iter()
        .map(|team| {
            let dec = decompose(fit, x, d, team)?;
            Ok((team.clone(), scalar_rating(&dec.sos.values, w)?))
        })
        .collect::<Result<Vec<_>, RatingsError>>()?;
    Ok(rank_values(values))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Venue {
    Neutral,
    /// Played on the first team's court.
    HomeOfI,
}

/// Expected point differential of `team_i` over `team_j` at every second.
pub fn predict(
    fit: &RatingSet,
    team_i: &str,
    team_j: &str,
    venue: Venue,
) -> Result<CurveSeries, RatingsError> {
    let lookup = |t: &str| {
        fit.spec
            .teams
            .get(t)
            .ok_or_else(|| RatingsError::UnknownTeam(t.to_string()))
    };
    let (i, j) = (lookup(team_i)?, lookup(team_j)?);
    let mut values: Vec<f64> = fit
        .beta(i)
        .iter()
        .zip(fit.beta(j))
        .map(|(a, b)| a - b)
        .collect();
    if venue == Venue::HomeOfI {
        let alpha = fit.home_alpha(i).ok_or_else(|| {
            RatingsError::WrongModel("a home venue needs a home-advantage model".into())
        })?;
        values.iter_mut().zip(alpha).for_each(|(v, a)| *v += a);
    }
    let suffix = match venue {
        Venue::Neutral => "neutral",
        Venue::HomeOfI => "home",
    };
    Ok(CurveSeries::new(
        format!("{team_i}-vs-{team_j}:{suffix}"),
        values,
        "points",
    ))
}
