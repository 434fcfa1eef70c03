mod common;

use common::*;
use fnrate::ingest::{parse_jsonl, write_jsonl, ParseOptions};
use fnrate::synth::{generate_season, AlphaTruth, BetaFamily, NoiseModel, SynthConfig};
use fnrate::{build_design, FitOptions};

fn recover(cfg: &SynthConfig) -> f64 {
    let (games, truth) = generate_season(cfg).unwrap();
    let (_, _, r) = fit_games(&games, truth.kind, &FitOptions::default());
    assert_eq!(r.spec.teams.names(), truth.teams.as_slice());
    r.params
        .iter()
        .zip(&truth.params)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn noise_free_seasons_are_recovered() {
    let families = [
        BetaFamily::Constant { spread: 12 },
        BetaFamily::PiecewiseLinear {
            segments: 4,
            spread: 6.0,
        },
        BetaFamily::Spline {
            order: 4,
            knot_spacing_s: 60,
            spread: 5.0,
        },
    ];
    let alphas = [
        AlphaTruth::Zero,
        AlphaTruth::Constant { value: 3.0 },
        AlphaTruth::PerTeam {
            mean: 3.0,
            spread: 2.0,
        },
    ];
    for (k, family) in families.iter().enumerate() {
        for (j, alpha) in alphas.iter().enumerate() {
            let cfg = SynthConfig {
                n_teams: 10,
                games_per_team: 10,
                regulation_s: 240,
                true_beta: family.clone(),
                true_alpha: alpha.clone(),
                noise: NoiseModel::None,
                seed: (10 * k + j) as u64,
                ..Default::default()
            };
            let err = recover(&cfg);
            assert!(err < 1e-8, "{family:?} {alpha:?}: {err:e}");
        }
    }
}

#[test]
fn same_seed_same_bytes() {
    let cfg = SynthConfig {
        n_teams: 9,
        games_per_team: 5,
        regulation_s: 300,
        seed: 77,
        noise: NoiseModel::RandomWalk { sigma_step: 0.3 },
        ..Default::default()
    };
    let write = || {
        let (games, truth) = generate_season(&cfg).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&games, &mut buf).unwrap();
        (buf, serde_json::to_string(&truth).unwrap())
    };
    let (a, ta) = write();
    let (b, tb) = write();
    assert_eq!(a, b);
    assert_eq!(ta, tb);
    let parsed = parse_jsonl(&a[..], "synth", ParseOptions::default()).unwrap();
    assert!(parsed.rejected.is_empty());
    assert_eq!(
        prepared(parsed.games).len(),
        cfg.n_teams / 2 * cfg.games_per_team
    );
}

fn truth_residual_moments(cfg: &SynthConfig) -> Vec<(f64, usize)> {
    let (games, truth) = generate_season(cfg).unwrap();
    let x = build_design(&games, truth.kind).unwrap();
    let d = response(&games);
    (0..d.ncols())
        .map(|t| {
            let theta: Vec<f64> = truth.params.iter().map(|c| c[t]).collect();
            let pred = x.mul_vec(&theta);
            let ss: f64 = pred
                .iter()
                .enumerate()
                .map(|(k, p)| (d[(k, t)] - p).powi(2))
                .sum();
            (ss, d.nrows())
        })
        .collect()
}

#[test]
fn iid_noise_has_the_configured_variance() {
    let sigma = 8.0;
    let cfg = SynthConfig {
        n_teams: 40,
        games_per_team: 20,
        regulation_s: 300,
        noise: NoiseModel::IidGaussian { sigma },
        seed: 3,
        ..Default::default()
    };
    let moments = truth_residual_moments(&cfg);
    let (ss, n) = moments[1..]
        .iter()
        .fold((0.0, 0usize), |(s, c), (a, b)| (s + a, c + b));
    // rounding to whole points adds a uniform error of variance 1/12
    let want = sigma * sigma + 1.0 / 12.0;
    let got = ss / n as f64;
    assert!((got / want - 1.0).abs() < 0.1, "variance {got} vs {want}");
}

#[test]
fn random_walk_variance_grows_linearly() {
    let step = 0.5;
    let cfg = SynthConfig {
        n_teams: 60,
        games_per_team: 30,
        regulation_s: 400,
        noise: NoiseModel::RandomWalk { sigma_step: step },
        seed: 4,
        ..Default::default()
    };
    let moments = truth_residual_moments(&cfg);
    for t in [100usize, 250, 400] {
        let (ss, n) = moments[t];
        let want = t as f64 * step * step + 1.0 / 12.0;
        let got = ss / n as f64;
        assert!((got / want - 1.0).abs() < 0.1, "t={t}: {got} vs {want}");
    }
}
