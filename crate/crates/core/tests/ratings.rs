mod common;

use common::*;
use fnrate::ratings::{
    decompose, predict, rank_teams, rankings_table, scalar_rating, smooth, sos_table, Venue,
    WeightSpec,
};
use fnrate::synth::{generate_season, NoiseModel, SynthConfig};
use fnrate::{fit, Constraint, CurveSeries, FitOptions, ModelKind};
use proptest::prelude::*;
use rand_distr::{Distribution, Normal};

fn synth_fit(
    seed: u64,
    kind: ModelKind,
) -> (
    fnrate::DesignMatrix,
    nalgebra::DMatrix<f64>,
    fnrate::RatingSet,
) {
    let cfg = SynthConfig {
        n_teams: 12,
        games_per_team: 8,
        regulation_s: 180,
        seed,
        ..Default::default()
    };
    let (games, _) = generate_season(&cfg).unwrap();
    fit_games(&games, kind, &FitOptions::default())
}

#[test]
fn decomposition_adds_up() {
    for seed in 0..5 {
        let (x, d, r) = synth_fit(seed, ModelKind::ConstantHca);
        for team in r.spec.teams.names() {
            let dec = decompose(&r, &x, &d, team).unwrap();
            let beta = r.beta_of(team).unwrap();
            for t in 0..r.grid_len {
                let sum = dec.avg_diff.values[t] + dec.sos.values[t];
                assert!((beta[t] - sum).abs() < 1e-8, "{team} t={t}");
            }
        }
    }
}

#[test]
fn decomposition_needs_constant_advantage() {
    let (x, d, r) = synth_fit(1, ModelKind::Basic);
    assert!(decompose(&r, &x, &d, "T000").is_err());
}

#[test]
fn sos_table_is_ranked() {
    let (x, d, r) = synth_fit(2, ModelKind::ConstantHca);
    let table = sos_table(&r, &x, &d, &WeightSpec::Uniform).unwrap();
    assert_eq!(table.len(), 12);
    assert!(table.windows(2).all(|w| w[0].rating >= w[1].rating));
    assert_eq!(
        table.iter().map(|t| t.rank).collect::<Vec<_>>(),
        (1..=12).collect::<Vec<_>>()
    );
}

#[test]
fn rankings_survive_a_pin() {
    let (x, d, r) = synth_fit(3, ModelKind::ConstantHca);
    let pinned = fit(
        &x,
        &d,
        &FitOptions {
            constraint: Constraint::PinTeam {
                team: "T004".into(),
                value: 7.5,
            },
            ..Default::default()
        },
    )
    .unwrap();
    for w in [
        WeightSpec::Uniform,
        WeightSpec::LinearIncreasing,
        WeightSpec::EndOfGame,
    ] {
        let a: Vec<String> = rank_teams(&r, &w)
            .unwrap()
            .into_iter()
            .map(|t| t.team)
            .collect();
        let b: Vec<String> = rank_teams(&pinned, &w)
            .unwrap()
            .into_iter()
            .map(|t| t.team)
            .collect();
        assert_eq!(a, b);
    }
    let table = rankings_table(&r, &WeightSpec::Uniform).unwrap();
    assert_eq!(table.len(), 12);
    assert!(table
        .iter()
        .all(|row| row.end_of_game_rank >= 1 && row.end_of_game_rank <= 12));
}

#[test]
fn predictions_are_antisymmetric_on_neutral_courts() {
    let (_, _, r) = synth_fit(4, ModelKind::ConstantHca);
    let ab = predict(&r, "T001", "T002", Venue::Neutral).unwrap();
    let ba = predict(&r, "T002", "T001", Venue::Neutral).unwrap();
    assert!(ab
        .values
        .iter()
        .zip(&ba.values)
        .all(|(u, v)| (u + v).abs() < 1e-12));
    let home = predict(&r, "T001", "T002", Venue::HomeOfI).unwrap();
    let alpha = r.alpha().unwrap();
    for t in 0..r.grid_len {
        assert!((home.values[t] - ab.values[t] - alpha[t]).abs() < 1e-12);
    }
    let (_, _, basic) = synth_fit(4, ModelKind::Basic);
    assert!(predict(&basic, "T001", "T002", Venue::HomeOfI).is_err());
    assert!(predict(&basic, "T001", "nobody", Venue::Neutral).is_err());
}

#[test]
fn scalar_weights() {
    let curve: Vec<f64> = (0..=100).map(|t| t as f64).collect();
    assert!((scalar_rating(&curve, &WeightSpec::Uniform).unwrap() - 50.0).abs() < 1e-12);
    assert_eq!(
        scalar_rating(&curve, &WeightSpec::EndOfGame).unwrap(),
        100.0
    );
    // ∫t² / ∫t on [0, 100]
    let linear = scalar_rating(&curve, &WeightSpec::LinearIncreasing).unwrap();
    assert!((linear - 200.0 / 3.0).abs() < 0.01);
    let custom = WeightSpec::Custom(vec![(0.0, 1.0), (100.0, 1.0)]);
    assert!((scalar_rating(&curve, &custom).unwrap() - 50.0).abs() < 1e-12);
    assert!(scalar_rating(&curve, &WeightSpec::Custom(vec![(0.0, -1.0)])).is_err());
}

#[test]
fn smoothing_keeps_cubics() {
    let len = 2401;
    let cubic: Vec<f64> = (0..len)
        .map(|t| {
            let s = t as f64 / 2400.0;
            4.0 - 3.0 * s + 10.0 * s * s - 8.0 * s * s * s
        })
        .collect();
    let out = smooth(&CurveSeries::new("c", cubic.clone(), "points"), 4, 60).unwrap();
    assert!(out
        .values
        .iter()
        .zip(&cubic)
        .all(|(u, v)| (u - v).abs() < 1e-8));
    let flat = smooth(&CurveSeries::new("k", vec![-2.5; len], "points"), 4, 60).unwrap();
    assert!(flat.values.iter().all(|v| (v + 2.5).abs() < 1e-10));
}

#[test]
fn smoothing_reduces_noise() {
    let mut r = rng(10);
    let noise = Normal::new(0.0, 2.0).unwrap();
    let trend: Vec<f64> = (0..=2400).map(|t| (t as f64 / 400.0).sin() * 5.0).collect();
    let mut wins = 0;
    for _ in 0..20 {
        let noisy: Vec<f64> = trend.iter().map(|v| v + noise.sample(&mut r)).collect();
        let out = smooth(&CurveSeries::new("n", noisy.clone(), ""), 4, 60).unwrap();
        let rmse = |c: &[f64]| {
            (c.iter()
                .zip(&trend)
                .map(|(u, v)| (u - v).powi(2))
                .sum::<f64>()
                / c.len() as f64)
                .sqrt()
        };
        if rmse(&out.values) < rmse(&noisy) {
            wins += 1;
        }
    }
    assert_eq!(wins, 20);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn smoothing_is_idempotent(values in proptest::collection::vec(-20.0f64..20.0, 241)) {
        let once = smooth(&CurveSeries::new("v", values, ""), 4, 60).unwrap();
        let twice = smooth(&once, 4, 60).unwrap();
        prop_assert!(once.values.iter().zip(&twice.values).all(|(u, v)| (u - v).abs() < 1e-9));
    }

    #[test]
    fn uniform_rating_of_shifted_curve_shifts(values in proptest::collection::vec(-20.0f64..20.0, 2..300), c in -10.0f64..10.0) {
        let a = scalar_rating(&values, &WeightSpec::Uniform).unwrap();
        let shifted: Vec<f64> = values.iter().map(|v| v + c).collect();
        let b = scalar_rating(&shifted, &WeightSpec::Uniform).unwrap();
        prop_assert!((b - a - c).abs() < 1e-9);
    }
}

#[test]
fn zero_noise_config_is_exact_for_decomposition_inputs() {
    let cfg = SynthConfig {
        n_teams: 6,
        games_per_team: 6,
        regulation_s: 60,
        noise: NoiseModel::None,
        seed: 5,
        ..Default::default()
    };
    let (games, _) = generate_season(&cfg).unwrap();
    let (x, d, r) = fit_games(&games, ModelKind::ConstantHca, &FitOptions::default());
    assert!(r.sse.iter().all(|&s| s < 1e-12));
    let dec = decompose(&r, &x, &d, "T000").unwrap();
    assert_eq!(dec.avg_diff.len(), 61);
}
