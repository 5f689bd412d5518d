use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use proptest::prelude::*;
use tfsir::data::read_csv;

fn tfsir(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tfsir")).args(args).output().unwrap()
}

fn tfsir_with_stdin(args: &[&str], input: &[u8]) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_tfsir"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input).unwrap();
    child.wait_with_output().unwrap()
}

const SHORT: [&str; 6] = ["--iterations", "2000", "--thin", "5", "--burnin", "200"];

#[test]
fn unknown_flag_is_a_usage_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let res = tfsir(&["fit", "--data", "x.csv", "--bogus", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(!out.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn help_lists_every_flag_with_defaults() {
    let res = tfsir(&["fit", "--help"]);
    assert_eq!(res.status.code(), Some(0));
    let text = String::from_utf8(res.stdout).unwrap();
    for flag in [
        "--data",
        "--prior",
        "--iterations",
        "--thin",
        "--burnin",
        "--adapt-until",
        "--seed",
        "--mean-lag",
        "--chains",
        "--smooth",
        "--level",
        "--threshold",
        "--out",
        "--format",
    ] {
        assert!(text.contains(flag), "missing {flag}");
    }
    assert!(text.contains("[default: 50000]") && text.contains("[default: 0.44]"));
    assert_eq!(tfsir(&["--version"]).status.code(), Some(0));
}

#[test]
fn simulate_output_feeds_fit_on_stdin() {
    let sim = tfsir(&["simulate", "--design", "1", "--seed", "4"]);
    assert_eq!(sim.status.code(), Some(0), "{}", String::from_utf8_lossy(&sim.stderr));
    let series = read_csv(sim.stdout.as_slice(), None).unwrap();
    assert_eq!(series.len(), 80);
    assert_eq!(series.n, 1e6);

    let mut args = vec!["fit", "--prior", "horseshoe", "--seed", "3"];
    args.extend(SHORT);
    let fit = tfsir_with_stdin(&args, &sim.stdout);
    assert_eq!(fit.status.code(), Some(0), "{}", String::from_utf8_lossy(&fit.stderr));
    let text = String::from_utf8(fit.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 80);
}

#[test]
fn fit_writes_artifacts_that_summarize_reads() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/wy.csv");
    let run = dir.path().join("run");
    let mut args = vec![
        "fit",
        "--data",
        fixture.to_str().unwrap(),
        "--prior",
        "spikeslab",
        "--chains",
        "2",
        "--out",
        run.to_str().unwrap(),
    ];
    args.extend(SHORT);
    let res = tfsir(&args);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    for name in ["draws.csv", "draws.bin", "summary.csv", "changepoints.csv", "provenance.json"] {
        assert!(run.join(name).exists(), "{name}");
    }
    let leftovers = std::fs::read_dir(&run)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "partial"))
        .count();
    assert_eq!(leftovers, 0);

    let again = dir.path().join("again");
    let res = tfsir(&["summarize", "--draws", run.join("draws.bin").to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(
        std::fs::read(run.join("summary.csv")).unwrap(),
        std::fs::read(again.join("summary.csv")).unwrap()
    );
}

#[test]
fn bad_data_exits_with_two() {
    let bad = b"date,confirmed,recovered,deaths,population\n2020-05-14,5,4,2,100\n2020-05-15,6,4,2,100\n2020-05-16,7,4,2,100\n";
    let res = tfsir_with_stdin(&["fit"], bad);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8(res.stderr).unwrap();
    assert!(err.contains("row 1"), "{err}");

    let res = tfsir(&["fit", "--data", "/nonexistent/input.csv"]);
    assert_eq!(res.status.code(), Some(2));
    let res = tfsir(&["study", "--design", "9", "--out", "/tmp/never-created-by-tfsir"]);
    assert_eq!(res.status.code(), Some(2));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn simulate_round_trips_through_the_reader(seed in 0u64..1000, horizon in 3usize..40, json in any::<bool>()) {
        let seed = seed.to_string();
        let horizon = horizon.to_string();
        let res = tfsir(&["simulate", "--beta", "0.2,0.1", "--gamma", "0.05,0.08", "--breakpoints", "2",
            "--population", "5000", "--i0", "20", "--horizon", &horizon, "--seed", &seed]);
        prop_assert_eq!(res.status.code(), Some(0));
        let series = read_csv(res.stdout.as_slice(), None).unwrap();
        prop_assert_eq!(series.len().to_string(), horizon.clone());
        let direct = tfsir::simulate(
            &tfsir::RateSchedule::new(vec![2], vec![0.2, 0.1], vec![0.05, 0.08]).unwrap(),
            &tfsir::SimConfig::new(5000, 20, series.len(), seed.parse().unwrap(), tfsir::SimMode::Poisson),
        ).unwrap();
        prop_assert_eq!(series.i, direct.i);
        prop_assert_eq!(series.r, direct.r);
        if json {
            let res = tfsir(&["simulate", "--format", "json", "--horizon", &horizon, "--seed", &seed]);
            prop_assert_eq!(res.status.code(), Some(0));
            prop_assert!(serde_json::from_slice::<serde_json::Value>(&res.stdout).is_ok());
        }
    }
}
