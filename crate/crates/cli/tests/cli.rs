use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fnrate::io::load_fit;
use fnrate::synth::GroundTruth;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn fnrate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fnrate"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = fnrate(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let path = dir.join("season.jsonl");
    let mut args = vec![
        "synth",
        "--teams",
        "10",
        "--games-per-team",
        "6",
        "--out",
        s(&path),
    ];
    args.extend_from_slice(extra);
    ok(&args);
    path
}

#[test]
fn validate_fixtures() {
    let out = fnrate(&["validate", "--games", s(&fixture("samford.jsonl"))]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty(), "clean file has an empty report");

    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.jsonl");
    let out = ok(&[
        "validate",
        "--games",
        s(&fixture("truncated_final.jsonl")),
        "--report",
        s(&report),
    ]);
    assert!(out.contains("final scores appended: 1"), "{out}");
    let text = fs::read_to_string(&report).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.contains("\"repair_kind\":\"appended_final_score\""));

    let out = fnrate(&["validate", "--games", s(&fixture("decreasing_score.jsonl"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("excluded_non_monotone"));

    ok(&["validate", "--games", s(&fixture("samford_csv"))]);
    ok(&["validate", "--games", s(&fixture("overtime.jsonl"))]);
}

#[test]
fn full_pipeline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let games = synth(d, &[]);
    let (f1, f2, f3) = (d.join("m1"), d.join("m2"), d.join("m3"));
    ok(&["fit", "--games", s(&games), "--model", "1", "--out", s(&f1)]);
    let printed = ok(&[
        "fit",
        "--games",
        s(&games),
        "--model",
        "2",
        "--out",
        s(&f2),
        "--band",
        "0.8",
        "--dump-matrix",
    ]);
    assert!(printed.starts_with("rank 10 of 11 parameters"), "{printed}");
    ok(&[
        "fit",
        "--games",
        s(&games),
        "--model",
        "3",
        "--out",
        s(&f3),
        "--band",
        "0.9",
    ]);
    for f in [
        "ratings.csv",
        "fit.json",
        "report.jsonl",
        "design.mtx",
        "alpha_band.csv",
    ] {
        assert!(f2.join(f).is_file(), "{f}");
    }

    let anova = d.join("anova");
    ok(&[
        "anova",
        "--reduced",
        s(&f1),
        "--full",
        s(&f2),
        "--out",
        s(&anova),
    ]);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(anova.join("anova_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["summary"]["df_num"], 1);
    let p_rows = fs::read_to_string(anova.join("anova.csv")).unwrap();
    assert!(p_rows.lines().any(|l| l == "second,F,P"));
    assert_eq!(p_rows.lines().filter(|l| !l.starts_with('#')).count(), 2402);

    let rank = d.join("rank.csv");
    ok(&[
        "rank",
        "--fit",
        s(&f2),
        "--weight",
        "linear",
        "--out",
        s(&rank),
    ]);
    let text = fs::read_to_string(&rank).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "team,scalar_rating,rank,end_of_game_rank,tied");
    assert_eq!(rows.len(), 11);

    let weights = d.join("w.csv");
    fs::write(&weights, "time_s,weight\n0,0\n2400,1\n").unwrap();
    let rank_file = d.join("rank_file.csv");
    ok(&[
        "rank",
        "--fit",
        s(&f2),
        "--weight",
        &format!("file:{}", s(&weights)),
        "--out",
        s(&rank_file),
    ]);
    let strip = |t: &str| {
        t.lines()
            .filter(|l| !l.starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let ranks = |t: &str| {
        strip(t)
            .lines()
            .map(|l| l.split(',').next().unwrap().to_string())
            .collect::<Vec<_>>()
    };
    // a ramp from zero is the linear weight
    assert_eq!(
        ranks(&text),
        ranks(&fs::read_to_string(&rank_file).unwrap())
    );

    let sos = d.join("sos.csv");
    let dec = d.join("dec.csv");
    ok(&[
        "sos",
        "--fit",
        s(&f2),
        "--games",
        s(&games),
        "--out",
        s(&sos),
        "--team",
        "T000",
        "--curves",
        s(&dec),
    ]);
    assert!(fs::read_to_string(&sos)
        .unwrap()
        .contains("team,scalar_sos,rank,tied"));
    assert!(fs::read_to_string(&dec)
        .unwrap()
        .contains("second,beta:T000,avg_diff:T000,sos:T000"));
    let out = fnrate(&[
        "sos",
        "--fit",
        s(&f3),
        "--games",
        s(&games),
        "--out",
        s(&d.join("bad.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let pred = d.join("pred.csv");
    ok(&[
        "predict",
        "--fit",
        s(&f2),
        "--team-a",
        "T000",
        "--team-b",
        "T001",
        "--venue",
        "home",
        "--out",
        s(&pred),
    ]);
    let smooth = d.join("smooth.csv");
    ok(&["smooth", "--input", s(&pred), "--out", s(&smooth)]);
    let smooth_fit = d.join("smooth_fit.csv");
    ok(&[
        "smooth",
        "--fit",
        s(&f2),
        "--team",
        "T003",
        "--spacing",
        "120",
        "--out",
        s(&smooth_fit),
    ]);
    assert!(fs::read_to_string(&smooth_fit)
        .unwrap()
        .contains("second,beta:T003:smoothed"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let games = synth(d, &["--seed", "9"]);
    let first = fs::read(&games).unwrap();
    let truth = fs::read(d.join("season.truth.json")).unwrap();
    synth(d, &["--seed", "9"]);
    assert_eq!(first, fs::read(&games).unwrap());
    assert_eq!(truth, fs::read(d.join("season.truth.json")).unwrap());

    let out = d.join("fit");
    let args = [
        "fit",
        "--games",
        s(&games),
        "--model",
        "2",
        "--out",
        s(&out),
        "--band",
        "0.8",
    ];
    ok(&args);
    let snapshot: Vec<Vec<u8>> = ["ratings.csv", "fit.json", "alpha_band.csv"]
        .iter()
        .map(|f| fs::read(out.join(f)).unwrap())
        .collect();
    ok(&[&args[..], &["--threads", "1", "--block-cols", "17"]].concat());
    ok(&args);
    for (f, before) in ["ratings.csv", "fit.json", "alpha_band.csv"]
        .iter()
        .zip(&snapshot)
    {
        assert_eq!(before, &fs::read(out.join(f)).unwrap(), "{f} changed");
    }
}

#[test]
fn noise_free_season_is_recovered() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let games = synth(
        d,
        &[
            "--noise", "none", "--family", "linear", "--spread", "6", "--alpha", "2.5",
        ],
    );
    let truth: GroundTruth =
        serde_json::from_str(&fs::read_to_string(d.join("season.truth.json")).unwrap()).unwrap();
    let out = d.join("fit");
    ok(&[
        "fit",
        "--games",
        s(&games),
        "--model",
        "2",
        "--out",
        s(&out),
    ]);
    let fit = load_fit(&out).unwrap();
    assert_eq!(fit.spec.teams.names(), truth.teams.as_slice());
    let err = fit
        .params
        .iter()
        .zip(&truth.params)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    assert!(err < 1e-9, "max error {err}");
}

#[test]
fn disconnected_schedule_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let games = dir.path().join("split.jsonl");
    let line = |id: &str, home: &str, away: &str| {
        format!(
            r#"{{"game_id":"{id}","date":"2019-01-05","home":"{home}","away":"{away}","neutral":false,"final_home":2,"final_away":0,"regulation_s":2400,"events":[[100,2,0]]}}"#
        )
    };
    let text = [
        line("g1", "A", "B"),
        line("g2", "B", "A"),
        line("g3", "C", "D"),
        line("g4", "D", "C"),
    ]
    .join("\n");
    fs::write(&games, text + "\n").unwrap();
    let out = dir.path().join("fit");
    let res = fnrate(&["fit", "--games", s(&games), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("component 1: A, B"), "{stderr}");
    assert!(out.join("FAILED").is_file());
    assert!(!out.join("ratings.csv").exists());

    ok(&[
        "fit",
        "--games",
        s(&games),
        "--out",
        s(&out),
        "--allow-disconnected",
    ]);
    assert!(
        !out.join("FAILED").exists(),
        "a successful rerun clears the marker"
    );
}

#[test]
fn usage_and_missing_inputs() {
    assert_eq!(fnrate(&["fit", "--bogus"]).status.code(), Some(4));
    assert_eq!(
        fnrate(&["fit", "--games", "x", "--out", "y", "--model", "7"])
            .status
            .code(),
        Some(4)
    );
    assert_eq!(fnrate(&["--help"]).status.code(), Some(0));
    assert_eq!(fnrate(&["--version"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pred.csv");
    let res = fnrate(&[
        "predict",
        "--fit",
        s(&dir.path().join("nofit")),
        "--team-a",
        "A",
        "--team-b",
        "B",
        "--out",
        s(&out),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(dir.path().join("pred.csv.FAILED").is_file());
    assert!(!out.exists());
}

#[test]
fn config_file_supplies_flags_and_command_line_wins() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let games = synth(d, &[]);
    let conf = d.join("fit.conf");
    fs::write(
        &conf,
        format!(
            "# model 1 run\ngames = {}\nmodel = 1\nconstraint = pin-team:T000=5\n",
            s(&games)
        ),
    )
    .unwrap();
    let out = d.join("fit");
    ok(&["--config", s(&conf), "fit", "--out", s(&out)]);
    let fit = load_fit(&out).unwrap();
    assert_eq!(fit.kind().number(), 1);
    assert!(fit
        .beta_of("T000")
        .unwrap()
        .iter()
        .all(|&v| (v - 5.0).abs() < 1e-12));

    ok(&[
        "fit",
        "--config",
        s(&conf),
        "--out",
        s(&out),
        "--model",
        "2",
    ]);
    assert_eq!(load_fit(&out).unwrap().kind().number(), 2);
    let header = fs::read_to_string(out.join("ratings.csv")).unwrap();
    assert!(header.contains("# model: 2"));
    assert!(header.contains("# constraint: pin-team:T000=5"));
}
