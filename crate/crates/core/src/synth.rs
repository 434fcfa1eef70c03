//! Synthetic seasons with known ground-truth rating curves.
//!
//! A season is generated in three steps: a random connected schedule, true
//! parameter curves `θ*(t)` in the sum-to-zero space, and per-game
//! differentials `d_k(t) = round((Xθ*(t))_k + noise)`. Each differential path
//! is turned into monotone home/away score paths: the home score moves when
//! the differential steps up, the away score when it steps down.
//!
//! All games start 0-0, so `θ*(0) = 0` and `d_k(0) = 0` regardless of the
//! curve family. With `quantize` on, the raw team curves and the advantage
//! are rounded to integers before centering, which keeps `Xθ*` integral and
//! makes noise-free seasons exactly recoverable.

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::ModelKind;
use crate::ingest::{GameRecord, ScoringEvent, DEFAULT_REGULATION_S};
use crate::ratings::BSplineBasis;

const SCHEDULE_ATTEMPTS: usize = 100;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("could not draw a connected schedule in {0} attempts; add games per team")]
    Disconnected(usize),
}

/// Family of true team rating curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BetaFamily {
    /// Constant integer levels drawn uniformly from `[-spread, spread]`.
    Constant { spread: i32 },
    /// Linear between `segments + 1` evenly spaced knots, knot values
    /// drawn from `N(0, spread²)`.
    PiecewiseLinear { segments: usize, spread: f64 },
    /// B-spline curves with `N(0, spread²)` coefficients.
    Spline {
        order: usize,
        knot_spacing_s: usize,
        spread: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaTruth {
    Zero,
    Constant {
        value: f64,
    },
    /// Per-team constants drawn from `N(mean, spread²)`.
    PerTeam {
        mean: f64,
        spread: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    None,
    /// Independent `N(0, σ²)` at every second of every game.
    IidGaussian {
        sigma: f64,
    },
    /// Per-game random walk with `N(0, σ_step²)` increments.
    RandomWalk {
        sigma_step: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_teams: usize,
    pub games_per_team: usize,
    pub neutral_fraction: f64,
    pub true_beta: BetaFamily,
    pub true_alpha: AlphaTruth,
    pub noise: NoiseModel,
    pub seed: u64,
    pub regulation_s: u32,
    pub quantize: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_teams: 20,
            games_per_team: 10,
            neutral_fraction: 0.1,
            true_beta: BetaFamily::Constant { spread: 10 },
            true_alpha: AlphaTruth::Constant { value: 3.0 },
            noise: NoiseModel::IidGaussian { sigma: 8.0 },
            seed: 0,
            regulation_s: DEFAULT_REGULATION_S,
            quantize: true,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::InvalidConfig(msg));
        if self.n_teams < 2 {
            return bad(format!("need at least 2 teams, got {}", self.n_teams));
        }
        if self.games_per_team == 0 {
            return bad("games_per_team must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.neutral_fraction) {
            return bad(format!(
                "neutral_fraction {} outside [0, 1]",
                self.neutral_fraction
            ));
        }
        if self.regulation_s == 0 {
            return bad("regulation_s must be positive".into());
        }
        let sigma = match self.noise {
            NoiseModel::None => 0.0,
            NoiseModel::IidGaussian { sigma } => sigma,
            NoiseModel::RandomWalk { sigma_step } => sigma_step,
        };
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return bad(format!(
                "noise scale {sigma} must be finite and non-negative"
            ));
        }
        Ok(())
    }

    /// The model whose parameters the ground truth fills.
    pub fn model_kind(&self) -> ModelKind {
        match self.true_alpha {
            AlphaTruth::Zero => ModelKind::Basic,
            AlphaTruth::Constant { .. } => ModelKind::ConstantHca,
            AlphaTruth::PerTeam { .. } => ModelKind::IndividualHca,
        }
    }
}

/// True parameter curves, laid out like a fit of `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub kind: ModelKind,
    /// Team names in sorted order, matching [`crate::TeamIndex::from_games`].
    pub teams: Vec<String>,
    pub params: Vec<Vec<f64>>,
    pub config: SynthConfig,
}

pub fn team_name(i: usize) -> String {
    format!("T{i:03}")
}

struct Fixture {
    home: usize,
    away: usize,
    neutral: bool,
    round: usize,
}

fn connected(n: usize, schedule: &[Fixture]) -> bool {
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for f in schedule {
        let (a, b) = (root(&mut parent, f.home), root(&mut parent, f.away));
        parent[a] = b;
    }
    let r = root(&mut parent, 0);
    (1..n).all(|i| root(&mut parent, i) == r)
}

/// Random pairings per round; venues balance each team's home count.
fn draw_schedule(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Fixture> {
    let n = cfg.n_teams;
    let mut order: Vec<usize> = (0..n).collect();
    let mut home_games = vec![0usize; n];
    let mut schedule = Vec::with_capacity(n * cfg.games_per_team / 2 + 1);
    for round in 0..cfg.games_per_team {
        order.shuffle(rng);
        for pair in order.chunks_exact(2) {
            let (a, b) = (pair[0], pair[1]);
            let neutral = rng.random::<f64>() < cfg.neutral_fraction;
            let a_hosts = if neutral || home_games[a] == home_games[b] {
                rng.random::<bool>()
            } else {
                home_games[a] < home_games[b]
            };
            let (home, away) = if a_hosts { (a, b) } else { (b, a) };
            if !neutral {
                home_games[home] += 1;
            }
            schedule.push(Fixture {
                home,
                away,
                neutral,
                round,
            });
        }
    }
    schedule
}

fn team_curves(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>, SynthError> {
    let len = cfg.regulation_s as usize + 1;
    let t_end = cfg.regulation_s as f64;
    let mut curves: Vec<Vec<f64>> = match &cfg.true_beta {
        BetaFamily::Constant { spread } => (0..cfg.n_teams)
            .map(|_| vec![f64::from(rng.random_range(-spread.abs()..=spread.abs())); len])
            .collect(),
        BetaFamily::PiecewiseLinear { segments, spread } => {
            let segments = (*segments).max(1);
            let normal = normal(0.0, *spread)?;
            (0..cfg.n_teams)
                .map(|_| {
                    let knots: Vec<f64> = (0..=segments).map(|_| normal.sample(rng)).collect();
                    (0..len)
                        .map(|t| {
                            let pos = t as f64 / t_end * segments as f64;
                            let s = (pos.floor() as usize).min(segments - 1);
                            let frac = pos - s as f64;
                            knots[s] + frac * (knots[s + 1] - knots[s])
                        })
                        .collect()
                })
                .collect()
        }
        BetaFamily::Spline {
            order,
            knot_spacing_s,
            spread,
        } => {
            let basis = BSplineBasis::uniform(t_end, *order, *knot_spacing_s as f64)
                .map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
            let normal = normal(0.0, *spread)?;
            let rows: Vec<(usize, Vec<f64>)> = (0..len).map(|t| basis.eval(t as f64)).collect();
            (0..cfg.n_teams)
                .map(|_| {
                    let coef: Vec<f64> = (0..basis.len()).map(|_| normal.sample(rng)).collect();
                    rows.iter()
                        .map(|(first, vals)| {
                            vals.iter()
                                .enumerate()
                                .map(|(a, v)| v * coef[first + a])
                                .sum()
                        })
                        .collect()
                })
                .collect()
        }
    };
    if cfg.quantize {
        curves
            .iter_mut()
            .for_each(|c| c.iter_mut().for_each(|v| *v = v.round()));
    }
    for t in 0..len {
        let mean = curves.iter().map(|c| c[t]).sum::<f64>() / cfg.n_teams as f64;
        curves.iter_mut().for_each(|c| c[t] -= mean);
    }
    curves.iter_mut().for_each(|c| c[0] = 0.0);
    Ok(curves)
}

fn normal(mean: f64, sd: f64) -> Result<Normal<f64>, SynthError> {
    Normal::new(mean, sd).map_err(|e| SynthError::InvalidConfig(e.to_string()))
}

fn alpha_curves(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>, SynthError> {
    let len = cfg.regulation_s as usize + 1;
    let q = |v: f64| if cfg.quantize { v.round() } else { v };
    let flat = |v: f64| {
        let mut c = vec![q(v); len];
        c[0] = 0.0;
        c
    };
    Ok(match cfg.true_alpha {
        AlphaTruth::Zero => Vec::new(),
        AlphaTruth::Constant { value } => vec![flat(value)],
        AlphaTruth::PerTeam { mean, spread } => {
            let normal = normal(mean, spread)?;
            (0..cfg.n_teams).map(|_| flat(normal.sample(rng))).collect()
        }
    })
}

fn game_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn score_path(d: &[i64]) -> Vec<ScoringEvent> {
    let (mut home, mut away) = (0u32, 0u32);
    let mut events = Vec::new();
    for t in 1..d.len() {
        let step = d[t] - d[t - 1];
        if step == 0 {
            continue;
        }
        if step > 0 {
            home += step as u32;
        } else {
            away += (-step) as u32;
        }
        events.push(ScoringEvent::new(t as u32, home, away));
    }
    events
}

/// Generates a season and its ground truth. Deterministic for a fixed
/// config, independent of thread count.
pub fn generate_season(cfg: &SynthConfig) -> Result<(Vec<GameRecord>, GroundTruth), SynthError> {
    cfg.validate()?;
    let mut rng = game_rng(cfg.seed, 0);
    let schedule = (0..SCHEDULE_ATTEMPTS)
        .map(|_| draw_schedule(cfg, &mut rng))
        .find(|s| !s.is_empty() && connected(cfg.n_teams, s))
        .ok_or(SynthError::Disconnected(SCHEDULE_ATTEMPTS))?;
    let betas = team_curves(cfg, &mut rng)?;
    let alphas = alpha_curves(cfg, &mut rng)?;
    let kind = cfg.model_kind();

    let len = cfg.regulation_s as usize + 1;
    let start = NaiveDate::from_ymd_opt(2018, 11, 6).expect("valid date");
    let games: Vec<GameRecord> = schedule
        .par_iter()
        .enumerate()
        .map(|(k, f)| {
            let mut rng = game_rng(cfg.seed, k as u64 + 1);
            let hca: Option<&Vec<f64>> = if f.neutral {
                None
            } else {
                match kind {
                    ModelKind::Basic => None,
                    ModelKind::ConstantHca => Some(&alphas[0]),
                    ModelKind::IndividualHca => Some(&alphas[f.home]),
                }
            };
            let mut d = vec![0i64; len];
            let mut walk = 0.0;
            let standard = Normal::new(0.0, 1.0).expect("unit normal");
            for (t, slot) in d.iter_mut().enumerate().skip(1) {
                let mean = betas[f.home][t] - betas[f.away][t] + hca.map_or(0.0, |a| a[t]);
                let noise = match cfg.noise {
                    NoiseModel::None => 0.0,
                    NoiseModel::IidGaussian { sigma } => sigma * standard.sample(&mut rng),
                    NoiseModel::RandomWalk { sigma_step } => {
                        walk += sigma_step * standard.sample(&mut rng);
                        walk
                    }
                };
                *slot = (mean + noise).round() as i64;
            }
            let events = score_path(&d);
            let final_score = events
                .last()
                .map(|e| (e.home_score, e.away_score))
                .unwrap_or((0, 0));
            GameRecord {
                game_id: format!("synth-{}-{k:05}", cfg.seed),
                date: start + Days::new(f.round as u64),
                home_team: team_name(f.home),
                away_team: team_name(f.away),
                neutral_site: f.neutral,
                reported_final: final_score,
                regulation_length_s: cfg.regulation_s,
                events,
            }
        })
        .collect();

    let mut params = betas;
    params.extend(alphas);
    Ok((
        games,
        GroundTruth {
            kind,
            teams: (0..cfg.n_teams).map(team_name).collect(),
            params,
            config: cfg.clone(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{prepare, ParseOutcome, PrepareOptions};

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n_teams: 8,
            games_per_team: 6,
            regulation_s: 120,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_season(&small(7)).unwrap();
        let b = generate_season(&small(7)).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = generate_season(&small(8)).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn truth_sums_to_zero_and_starts_at_zero() {
        let (_, truth) = generate_season(&small(3)).unwrap();
        for t in 0..=120 {
            let s: f64 = truth.params[..8].iter().map(|c| c[t]).sum();
            assert!(s.abs() < 1e-12);
        }
        assert!(truth.params.iter().all(|c| c[0] == 0.0));
    }

    #[test]
    fn games_pass_ingest_without_repairs() {
        let (games, _) = generate_season(&small(11)).unwrap();
        let season = prepare(
            ParseOutcome {
                games: games.clone(),
                rejected: Vec::new(),
            },
            &PrepareOptions::default(),
        );
        assert_eq!(season.games.len(), games.len());
        assert!(season.report.is_empty());
        assert!(games.iter().all(|g| g.check_events().is_ok()));
    }

    #[test]
    fn noise_free_tracks_match_truth() {
        let cfg = SynthConfig {
            noise: NoiseModel::None,
            ..small(5)
        };
        let (games, truth) = generate_season(&cfg).unwrap();
        for g in &games {
            let h: usize = g.home_team[1..].parse().unwrap();
            let a: usize = g.away_team[1..].parse().unwrap();
            let d = crate::ingest::resample(g).d;
            for t in 0..=120 {
                let alpha = if g.neutral_site {
                    0.0
                } else {
                    truth.params[8][t]
                };
                let expect = truth.params[h][t] - truth.params[a][t] + alpha;
                assert!((d[t] as f64 - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SynthConfig {
            n_teams: 1,
            ..Default::default()
        };
        assert!(matches!(
            generate_season(&cfg),
            Err(SynthError::InvalidConfig(_))
        ));
        let cfg = SynthConfig {
            neutral_fraction: 1.5,
            ..Default::default()
        };
        assert!(generate_season(&cfg).is_err());
    }

    #[test]
    fn score_path_is_monotone() {
        let events = score_path(&[0, 2, 2, -1, 3, 3, 0]);
        assert_eq!(
            events,
            vec![
                ScoringEvent::new(1, 2, 0),
                ScoringEvent::new(3, 2, 3),
                ScoringEvent::new(4, 6, 3),
                ScoringEvent::new(6, 6, 6),
            ]
        );
    }
}
