//! The command-line contract: exit codes, reproducible output bytes, and
//! the run-directory layout (tables + summary + schema + manifest).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicU32, Ordering};

static DIR_COUNTER: AtomicU32 = AtomicU32::new(0);

fn scratch_dir(tag: &str) -> PathBuf {
    let n = DIR_COUNTER.fetch_add(1, Ordering::Relaxed);
    let dir = std::env::temp_dir().join(format!(
        "magsim-cli-{}-{}-{}",
        std::process::id(),
        tag,
        n
    ));
    if dir.exists() {
        fs::remove_dir_all(&dir).unwrap();
    }
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn magsim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_magsim"))
        .args(args)
        .current_dir(cwd)
        .env("MAGSIM_TIMESTAMP", "1700000000")
        .output()
        .expect("binary spawns")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = scratch_dir("codes");

    // Success.
    let ok = magsim(&["pn-limit", "--shots", "0", "--out", "ok"], &dir);
    assert_eq!(code(&ok), 0, "stderr: {}", stderr(&ok));

    // Unreadable config file.
    let missing = magsim(
        &["simulate", "--config", "no-such-file.toml", "--out", "x"],
        &dir,
    );
    assert_eq!(code(&missing), 2, "stderr: {}", stderr(&missing));
    assert!(stderr(&missing).contains("no-such-file.toml"));

    // Invalid config: unknown keys are named in the message.
    fs::write(dir.join("bad.toml"), "[ensemble]\nbananas = 3\n").unwrap();
    let bad = magsim(&["simulate", "--config", "bad.toml", "--out", "x"], &dir);
    assert_eq!(code(&bad), 2);
    assert!(
        stderr(&bad).contains("bananas"),
        "unknown key not named: {}",
        stderr(&bad)
    );

    // Command/config mismatch: sweep without a [sweep] section.
    let mismatch = magsim(&["sweep", "--out", "x"], &dir);
    assert_eq!(code(&mismatch), 2);
    assert!(stderr(&mismatch).contains("[sweep]"));

    // Runtime failure: a simulation whose statistics cannot be formed.
    let runtime = magsim(&["simulate", "--shots", "0", "--out", "x"], &dir);
    assert_eq!(code(&runtime), 3, "stderr: {}", stderr(&runtime));

    // Usage errors are clap's exit 2.
    let usage = magsim(&["no-such-command"], &dir);
    assert_eq!(code(&usage), 2);
}

#[test]
fn same_seed_reproduces_identical_bytes() {
    let dir = scratch_dir("determinism");
    fs::write(
        dir.join("cfg.toml"),
        "[protocol]\nkind = \"pn\"\n[rf]\nduration = \"5 ms\"\n",
    )
    .unwrap();
    let run = |out: &str| {
        let o = magsim(
            &[
                "simulate", "--config", "cfg.toml", "--seed", "5", "--shots", "150", "--out", out,
            ],
            &dir,
        );
        assert_eq!(code(&o), 0, "stderr: {}", stderr(&o));
    };
    run("a");
    run("b");

    let mut names: Vec<String> = fs::read_dir(dir.join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.contains(&"summary.json".to_string()));
    for name in &names {
        let x = fs::read(dir.join("a").join(name)).unwrap();
        let y = fs::read(dir.join("b").join(name)).unwrap();
        assert_eq!(x, y, "{name} differs between identical runs");
    }
}

#[test]
fn run_directory_documents_itself() {
    let dir = scratch_dir("layout");
    let config = "[protocol]\nkind = \"calibration\"\n[probe2]\ngamma_extra = 0.0\nduration = \"1 ms\"\n";
    fs::write(dir.join("cal.toml"), config).unwrap();
    let out = magsim(
        &[
            "calibrate", "--config", "cal.toml", "--seed", "9", "--shots", "200", "--out", "run",
        ],
        &dir,
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let run = dir.join("run");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "calibrate");
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["shots"], 200);
    assert_eq!(manifest["timestamp"], "1700000000");
    assert_eq!(
        manifest["config_sha256"].as_str().unwrap(),
        magsim::output::sha256_hex(config.as_bytes())
    );
    // Every file the manifest lists exists, and vice versa the summary,
    // schema and manifest are all present.
    let listed: Vec<String> = manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    for f in &listed {
        assert!(run.join(f).exists(), "{f} listed but missing");
    }
    for must in ["summary.json", "schema.json"] {
        assert!(listed.contains(&must.to_string()), "{must} not listed");
    }

    // The schema describes each CSV column by name and unit.
    let schema: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("schema.json")).unwrap()).unwrap();
    let files = schema["files"].as_array().unwrap();
    assert!(!files.is_empty());
    for f in files {
        if f["format"] == "csv" {
            let cols = f["columns"].as_array().unwrap();
            assert!(!cols.is_empty(), "{} has no columns", f["file"]);
            let header = fs::read_to_string(run.join(f["file"].as_str().unwrap()))
                .unwrap()
                .lines()
                .next()
                .unwrap()
                .to_string();
            let names: Vec<&str> = cols.iter().map(|c| c["name"].as_str().unwrap()).collect();
            assert_eq!(header, names.join(","), "schema does not match the header");
        }
    }

    // The summary carries the calibration verdict.
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    assert!(summary["calibration"]["kappa_squared_estimate"].is_f64());
}
