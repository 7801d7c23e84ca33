use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
num_periods = 10
requests_per_period = 150
rounds = 3

[generator]
num_campaigns = 5
"#;

fn gdpacer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gdpacer"))
        .args(args)
        .env_remove("GDPACER_SEED")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, format!("{SMALL}{extra}")).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_writes_schema_valid_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("out");
    let o = gdpacer(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let rounds = std::fs::read_to_string(out.join("rounds.csv")).unwrap();
    assert!(rounds.starts_with("algorithm,round,delivery_rate,unsmoothness,avg_ctr,regret\n"));
    assert_eq!(rounds.lines().count(), 1 + 3 * 3);
    let series = std::fs::read_to_string(out.join("series.csv")).unwrap();
    assert!(series.starts_with("campaign,period,series,value\n"));
    let aggregate = std::fs::read_to_string(out.join("aggregate.csv")).unwrap();
    let names: Vec<&str> = aggregate
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(names, ["dmd", "smart", "rcpacing"]);
    assert!(stdout(&o).contains("rcpacing"));

    // Everything written is loadable by `report`.
    let r = gdpacer(&["report", "--input", s(&out.join("rounds.csv"))]);
    assert!(r.status.success(), "{}", stderr(&r));
    assert_eq!(stdout(&r).lines().count(), 4);
}

#[test]
fn refuses_to_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("out");
    let args = ["run", "--config", s(&cfg), "--out", s(&out)];
    assert!(gdpacer(&args).status.success());
    let before = std::fs::read(out.join("rounds.csv")).unwrap();
    let again = gdpacer(&[&args[..], &["--seed", "99"]].concat());
    assert_eq!(again.status.code(), Some(1));
    assert!(stderr(&again).contains("--force"));
    assert_eq!(std::fs::read(out.join("rounds.csv")).unwrap(), before);
    let forced = gdpacer(&[&args[..], &["--seed", "99", "--force"]].concat());
    assert!(forced.status.success());
    assert_ne!(std::fs::read(out.join("rounds.csv")).unwrap(), before);
}

#[test]
fn algorithm_filter_keeps_only_named_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("out");
    let o = gdpacer(&[
        "run",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--algorithms",
        "dmd",
    ]);
    assert!(o.status.success());
    let rounds = std::fs::read_to_string(out.join("rounds.csv")).unwrap();
    assert!(rounds.lines().skip(1).all(|l| l.starts_with("dmd,")));
    let series = std::fs::read_to_string(out.join("series.csv")).unwrap();
    assert!(series.lines().skip(1).all(|l| l.contains(",dmd.")));

    let bad = gdpacer(&[
        "run",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--algorithms",
        "auaf",
    ]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("--algorithms"));
}

#[test]
fn seed_sources_and_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.toml");
    std::fs::write(&cfg, format!("seed = 5\n{SMALL}")).unwrap();
    let run = |name: &str, seed: Option<&str>, env: Option<&str>| {
        let out = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_gdpacer"));
        cmd.args(["run", "--config", s(&cfg), "--out", s(&out)]);
        cmd.env_remove("GDPACER_SEED");
        if let Some(seed) = seed {
            cmd.args(["--seed", seed]);
        }
        if let Some(env) = env {
            cmd.env("GDPACER_SEED", env);
        }
        let o = cmd.output().unwrap();
        assert!(o.status.success(), "{name}: {}", stderr(&o));
        std::fs::read(out.join("rounds.csv")).unwrap()
    };
    let from_config = run("a", None, None);
    assert_eq!(run("b", Some("5"), None), from_config);
    let from_env = run("c", None, Some("6"));
    assert_ne!(from_env, from_config);
    assert_eq!(run("d", Some("6"), None), from_env);
    assert_eq!(run("e", Some("5"), Some("6")), from_config);
}

#[test]
fn json_format_round_trips_through_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("out");
    let o = gdpacer(&[
        "run",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--format",
        "json",
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(out.join("rounds.json")).unwrap();
    assert!(text.contains("\"round_index\""));
    assert!(text.contains("\"per_period_spend\""));
    let r = gdpacer(&[
        "report",
        "--input",
        s(&out.join("rounds.json")),
        "--out",
        s(&out),
    ]);
    assert!(r.status.success(), "{}", stderr(&r));
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with("algorithm,rounds,unsmoothness_mean"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    let cfg = dir.path().join("scenario.toml");
    std::fs::write(&cfg, format!("bogus_knob = 1\n{SMALL}")).unwrap();
    let o = gdpacer(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bogus_knob"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), "[hyperparams]\np_ub = 1.5\n");
    let o = gdpacer(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("p_ub"), "{}", stderr(&o));

    let o = gdpacer(&[
        "run",
        "--config",
        s(&dir.path().join("missing.toml")),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn stream_that_does_not_fit_the_scenario_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("log.csv"),
        "request_id,period,campaign_id,ctr\n0,0,0,0.1\n1,0,7,0.2\n",
    )
    .unwrap();
    let cfg = dir.path().join("scenario.toml");
    std::fs::write(
        &cfg,
        "num_periods = 1\nrounds = 1\nstream_csv = \"log.csv\"\n\
         [[campaigns]]\nid = 0\nbudget = 1\nrecall_prob = 1.0\nquality_model = { m = 2.0, n = 5.0 }\n",
    )
    .unwrap();
    let o = gdpacer(&[
        "run",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("out")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("campaign 7"), "{}", stderr(&o));
}

#[test]
fn logged_stream_with_bad_line_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("log.csv"),
        "request_id,period,campaign_id,ctr\n0,0,0,0.1\n1,0,0,1.7\n",
    )
    .unwrap();
    let cfg = dir.path().join("scenario.toml");
    std::fs::write(
        &cfg,
        "num_periods = 1\nrounds = 1\nstream_csv = \"log.csv\"\n\
         [[campaigns]]\nid = 0\nbudget = 1\nrecall_prob = 1.0\nquality_model = { m = 2.0, n = 5.0 }\n",
    )
    .unwrap();
    let o = gdpacer(&[
        "run",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("out")),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn ablation_rows_follow_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[ablation]\nslope_k = [0.0, 1.0, 10.0, 100.0, 1000.0]\n",
    );
    let out = dir.path().join("k");
    let o = gdpacer(&["ablate", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("ablation.csv")).unwrap();
    let keys: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(keys, ["0", "1", "10", "100", "1000"]);
    assert!(csv.starts_with("slope_k,rounds,unsmoothness_mean"));

    let cfg = write_config(
        dir.path(),
        "[ablation]\nadaptive_clip = [true, false]\neta = [0.2, 0.4, 0.8]\n",
    );
    let out = dir.path().join("clip");
    let o = gdpacer(&["ablate", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("ablation.csv")).unwrap();
    let keys: Vec<String> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').take(2).collect::<Vec<_>>().join(" "))
        .collect();
    assert_eq!(
        keys,
        ["on 0.2", "on 0.4", "on 0.8", "off 0.2", "off 0.4", "off 0.8"]
    );
    assert_eq!(stdout(&o).lines().count(), 7);

    let cfg = write_config(dir.path(), "");
    let o = gdpacer(&[
        "ablate",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("none")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ablation"));
}

#[test]
fn validate_exit_codes() {
    let o = gdpacer(&["validate"]);
    assert_eq!(o.status.code(), Some(0));
    let full = stdout(&o).lines().count();
    assert!(stdout(&o).lines().all(|l| l.starts_with("PASS ")));

    let narrow = gdpacer(&["validate", "--narrow"]);
    assert_eq!(narrow.status.code(), Some(0));
    assert!(stdout(&narrow).lines().count() < full);

    let broken = gdpacer(&["validate", "--inject-sign-flip"]);
    assert_eq!(broken.status.code(), Some(3));
    let failing: Vec<String> = stdout(&broken)
        .lines()
        .filter(|l| l.starts_with("FAIL"))
        .map(String::from)
        .collect();
    assert!(!failing.is_empty());
    assert!(failing
        .iter()
        .all(|l| l.contains("Theorem 2") && l.contains("alpha=")));

    let json = gdpacer(&["validate", "--format", "json"]);
    assert!(stdout(&json).trim_start().starts_with('['));
}

#[test]
fn report_rendering_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.csv");
    std::fs::write(
        &one,
        "algorithm,round,delivery_rate,unsmoothness,avg_ctr,regret\ndmd,0,1,10,0.05,\ndmd,1,1,12,0.07,\n",
    )
    .unwrap();
    let o = gdpacer(&["report", "--input", s(&one)]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 2);
    assert!(text.contains("11.00 ± 1.00"));
    assert!(!text.contains('*'));

    let two = dir.path().join("two.csv");
    std::fs::write(
        &two,
        "algorithm,round,delivery_rate,unsmoothness,avg_ctr,regret\nrcpacing,0,0.99,5,0.08,\n",
    )
    .unwrap();
    let o = gdpacer(&["report", "--input", s(&one), "--input", s(&two)]);
    let text = stdout(&o);
    let dmd = text.lines().find(|l| l.starts_with("dmd")).unwrap();
    let rcp = text.lines().find(|l| l.starts_with("rcpacing")).unwrap();
    assert_eq!(dmd.matches('*').count(), 1);
    assert_eq!(rcp.matches('*').count(), 2);

    let bad = dir.path().join("bad.csv");
    std::fs::write(
        &bad,
        "algorithm,round,delivery_rate,unsmoothness,avg_ctr,regret\ndmd,0,1,10,0.05,\ndmd,1,1\n",
    )
    .unwrap();
    let o = gdpacer(&["report", "--input", s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let o = gdpacer(&["report", "--input", s(&dir.path().join("nope.csv"))]);
    assert_eq!(o.status.code(), Some(1));
}
