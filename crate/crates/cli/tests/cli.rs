use std::path::PathBuf;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lef-models"))
        .args(args)
        .env_remove("LEF_MODELS_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

const H3: [&str; 4] = ["--model", "hyperbolic", "--n", "3"];

#[test]
fn table_reproduces_regime_column() {
    for p in ["3", "6"] {
        let mut args = vec!["table"];
        args.extend(H3);
        args.extend(["--p", p, "--alphas", "0.1,1,10"]);
        let text = stdout(&args);
        assert!(text.starts_with("# config: "));
        let verdict_rows: Vec<&str> = text.lines().filter(|l| l.starts_with("| u_alpha")).collect();
        assert_eq!(verdict_rows.len(), 3);
        for row in verdict_rows {
            // property text itself contains `|alpha|`, so read cells from the right
            let cells: Vec<&str> = row.rsplit('|').map(str::trim).take(4).collect();
            assert_eq!(&cells[1..4], ["yes", "YES", "YES"], "{row}");
        }
    }
}

#[test]
fn output_is_deterministic_across_threads() {
    let base = [
        "sweep",
        "--model",
        "hyperbolic",
        "--n",
        "3",
        "--p",
        "3",
        "--alpha-range",
        "0.2:2:6",
    ];
    let one = stdout(&[&base[..], &["--threads", "1"]].concat());
    let four = stdout(&[&base[..], &["--threads", "4"]].concat());
    assert_eq!(one, four);
    assert_eq!(one.lines().count(), 2 + 6);
    let json_a = stdout(&["spectrum", "--model", "hyperbolic", "--n", "4", "--radius", "2"]);
    let json_b = stdout(&["spectrum", "--model", "hyperbolic", "--n", "4", "--radius", "2"]);
    assert_eq!(json_a, json_b);
}

#[test]
fn exit_codes() {
    // classification theory does not apply to flat space
    let flat = run(&[
        "stability",
        "--model",
        "euclidean",
        "--n",
        "3",
        "--p",
        "3",
        "--alpha",
        "1",
    ]);
    assert_eq!(flat.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&flat.stderr).contains("refused"));

    let missing = run(&[&["solve"][..], &H3, &["--alpha", "1"]].concat());
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("config.p"));

    let bad_tol = run(&[&["solve"][..], &H3, &["--p", "3", "--alpha", "1", "--tol", "1"]].concat());
    assert_eq!(bad_tol.status.code(), Some(2));

    let unwritable = run(&[
        &["solve"][..],
        &H3,
        &[
            "--p",
            "3",
            "--alpha",
            "1",
            "--r-max",
            "2",
            "--output",
            "/nonexistent-dir/u.csv",
        ],
    ]
    .concat());
    assert_eq!(unwritable.status.code(), Some(1));
}

#[test]
fn config_file_with_flag_override() {
    let cfg = scratch("run.json");
    std::fs::write(
        &cfg,
        r#"{"schema_version": 1, "model": {"kind": "hyperbolic", "n": 3}, "p": 3, "alpha": 0.5,
            "r_max": 4, "output": {"format": "json"}}"#,
    )
    .unwrap();
    let text = stdout(&["solve", "--config", cfg.to_str().unwrap(), "--alpha", "2"]);
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["config"]["alpha"], 2.0);
    assert_eq!(doc["config"]["r_max"], 4.0);
    assert_eq!(doc["result"]["u"][0], 2.0);

    std::fs::write(&cfg, r#"{"schema_version": 1, "p": 3, "bogus": 1}"#).unwrap();
    let out = run(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solve_writes_events_next_to_csv() {
    let path = scratch("u.csv");
    stdout(
        &[
            &["solve"][..],
            &H3,
            &[
                "--p",
                "3",
                "--alpha",
                "5",
                "--r-max",
                "5",
                "--output",
                path.to_str().unwrap(),
            ],
        ]
        .concat(),
    );
    let csv = std::fs::read_to_string(&path).unwrap();
    assert!(csv.lines().next().unwrap().starts_with("# config: "));
    assert!(csv.lines().any(|l| l == "r,u,uprime"));
    let events: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path.with_extension("events.json")).unwrap()).unwrap();
    assert_eq!(events["u_zeros"].as_array().unwrap().len(), 1);
}

#[test]
fn flat_table_shows_expected_entries() {
    let text = stdout(&["table", "--model", "euclidean", "--n", "3", "--p", "3", "--alphas", "1"]);
    assert!(text.contains("expected entries only"));
}

#[test]
fn threads_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_lef-models"))
        .args([
            "sweep",
            "--over",
            "radius",
            "--radii",
            "1,2",
            "--model",
            "hyperbolic",
            "--n",
            "3",
        ])
        .env("LEF_MODELS_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(!text.contains("threads"));
    assert_eq!(text.lines().nth(1), Some("R,lambda1,mu1"));
}
