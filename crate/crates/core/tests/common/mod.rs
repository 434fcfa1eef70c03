//! Shared helpers for integration and acceptance tests: random seasons and
//! independent oracles (dense SVD pseudo-inverse, F quadrature).

#![allow(dead_code)]

use chrono::NaiveDate;
use fnrate::ingest::{prepare, resample, ParseOutcome, PrepareOptions};
use fnrate::{
    build_design, fit, stack_tracks, DesignMatrix, FitOptions, GameRecord, ModelKind, RatingSet,
    ScoringEvent,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn team(i: usize) -> String {
    format!("Team{i:02}")
}

/// A game with random scoring plays every few seconds.
pub fn random_game(
    rng: &mut impl Rng,
    id: usize,
    home: usize,
    away: usize,
    neutral: bool,
    t_end: u32,
) -> GameRecord {
    let (mut h, mut a) = (0u32, 0u32);
    let mut events = Vec::new();
    let mut t = 0u32;
    loop {
        t += rng.random_range(1..=20);
        if t > t_end {
            break;
        }
        let pts = rng.random_range(1..=3);
        if rng.random::<bool>() {
            h += pts;
        } else {
            a += pts;
        }
        events.push(ScoringEvent::new(t, h, a));
    }
    GameRecord {
        game_id: format!("g{id:04}"),
        date: NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(),
        home_team: team(home),
        away_team: team(away),
        neutral_site: neutral,
        reported_final: (h, a),
        regulation_length_s: t_end,
        events,
    }
}

/// Random pairings, possibly disconnected.
pub fn random_season(
    rng: &mut impl Rng,
    n_teams: usize,
    n_games: usize,
    t_end: u32,
) -> Vec<GameRecord> {
    (0..n_games)
        .map(|k| {
            let home = rng.random_range(0..n_teams);
            let away = (home + rng.random_range(1..n_teams)) % n_teams;
            let neutral = rng.random::<f64>() < 0.2;
            random_game(rng, k, home, away, neutral, t_end)
        })
        .collect()
}

/// Random season whose schedule is a cycle through all teams plus extra games,
/// so it is always connected.
pub fn connected_season(
    rng: &mut impl Rng,
    n_teams: usize,
    extra: usize,
    t_end: u32,
) -> Vec<GameRecord> {
    let mut games: Vec<GameRecord> = (0..n_teams)
        .map(|i| {
            let neutral = rng.random::<f64>() < 0.2;
            random_game(rng, i, i, (i + 1) % n_teams, neutral, t_end)
        })
        .collect();
    for k in 0..extra {
        let home = rng.random_range(0..n_teams);
        let away = (home + rng.random_range(1..n_teams)) % n_teams;
        let neutral = rng.random::<f64>() < 0.2;
        games.push(random_game(rng, n_teams + k, home, away, neutral, t_end));
    }
    games
}

pub fn response(games: &[GameRecord]) -> DMatrix<f64> {
    let tracks: Vec<_> = games.iter().map(resample).collect();
    stack_tracks(&tracks).unwrap()
}

pub fn fit_games(
    games: &[GameRecord],
    kind: ModelKind,
    opts: &FitOptions,
) -> (DesignMatrix, DMatrix<f64>, RatingSet) {
    let x = build_design(games, kind).unwrap();
    let d = response(games);
    let r = fit(&x, &d, opts).unwrap();
    (x, d, r)
}

/// Runs games through the full ingest preparation.
pub fn prepared(games: Vec<GameRecord>) -> Vec<GameRecord> {
    prepare(
        ParseOutcome {
            games,
            rejected: Vec::new(),
        },
        &PrepareOptions::default(),
    )
    .games
}

/// Thin SVD by one-sided Jacobi rotations: returns `(U, σ, V)` with
/// `A = U diag(σ) Vᵀ`. Columns with `σ = 0` have a zero `U` column.
pub fn jacobi_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (m, n) = a.shape();
    let mut u = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = u.column(p).norm_squared();
                let beta: f64 = u.column(q).norm_squared();
                let gamma: f64 = u.column(p).dot(&u.column(q));
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (up, uq) = (u[(i, p)], u[(i, q)]);
                    u[(i, p)] = c * up - s * uq;
                    u[(i, q)] = s * up + c * uq;
                }
                for i in 0..n {
                    let (vp, vq) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma: Vec<f64> = (0..n).map(|j| u.column(j).norm()).collect();
    let top = sigma.iter().copied().fold(0.0, f64::max);
    for (j, &s) in sigma.iter().enumerate() {
        if s > 1e-12 * top {
            u.column_mut(j).scale_mut(1.0 / s);
        } else {
            u.column_mut(j).fill(0.0);
        }
    }
    let sigma = sigma
        .into_iter()
        .map(|s| if s > 1e-12 * top { s } else { 0.0 })
        .collect();
    (u, sigma, v)
}

/// `X⁺ d` through a dense Jacobi SVD.
pub fn pinv_oracle(x: &DesignMatrix, d: &DMatrix<f64>) -> DMatrix<f64> {
    let (u, sigma, v) = jacobi_svd(&x.to_dense());
    let mut utd = u.transpose() * d;
    for (j, s) in sigma.iter().enumerate() {
        let inv = if *s > 0.0 { 1.0 / s } else { 0.0 };
        utd.row_mut(j).scale_mut(inv);
    }
    v * utd
}

pub fn max_abs_diff(fit: &RatingSet, oracle: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for (p, curve) in fit.params.iter().enumerate() {
        for (t, v) in curve.iter().enumerate() {
            worst = worst.max((v - oracle[(p, t)]).abs());
        }
    }
    worst
}

fn simpson(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    // split first so peaked integrands are not missed by the initial sample
    let pieces = 16;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            simpson(f, lo, hi, fa, fm, fb, whole, tol / pieces as f64, 50)
        })
        .sum()
}

/// `∫₀ˣ u^{a−1} (1−u)^{b−1} du` by quadrature, with `u = s²` near 0 and
/// `u = 1 − s²` near 1 so the endpoint singularities disappear.
fn incomplete_beta_integral(a: f64, b: f64, x: f64, scale: f64) -> f64 {
    let lower = |s: f64| 2.0 * s.powf(2.0 * a - 1.0) * (1.0 - s * s).powf(b - 1.0) / scale;
    let upper = |s: f64| 2.0 * s.powf(2.0 * b - 1.0) * (1.0 - s * s).powf(a - 1.0) / scale;
    let half = 0.5f64.sqrt();
    if x <= 0.5 {
        integrate(&lower, 0.0, x.sqrt(), 1e-15)
    } else {
        integrate(&lower, 0.0, half, 1e-15) + integrate(&upper, (1.0 - x).sqrt(), half, 1e-15)
    }
}

/// F(d1, d2) CDF at `x` by numerically integrating the beta density.
pub fn f_cdf_quadrature(x: f64, d1: u32, d2: u32) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let (a, b) = (d1 as f64 / 2.0, d2 as f64 / 2.0);
    let u = d1 as f64 * x / (d1 as f64 * x + d2 as f64);
    // rescale by the integrand's peak so tiny beta functions stay in range
    let scale = if a >= 1.0 && b >= 1.0 && a + b > 2.0 {
        let mode = (a - 1.0) / (a + b - 2.0);
        let log_peak =
            (a - 1.0) * mode.max(1e-300).ln() + (b - 1.0) * (1.0 - mode).max(1e-300).ln();
        log_peak.exp().max(1e-300)
    } else {
        1.0
    };
    let total = incomplete_beta_integral(a, b, 1.0, scale);
    incomplete_beta_integral(a, b, u, scale) / total
}
