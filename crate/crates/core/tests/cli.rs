//! End-to-end runs of the command-line front end.

use std::path::Path;

use cocycles::cli::main_with_args;
use serde_json::Value;

fn run(args: &str, out: &Path) -> anyhow::Result<bool> {
    let mut argv: Vec<String> = std::iter::once("cocycles".to_string())
        .chain(args.split_whitespace().map(String::from))
        .collect();
    argv.push(format!("--out={}", out.display()));
    main_with_args(&argv)
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

fn check_names(r: &Value) -> Vec<String> {
    r["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap().to_string()).collect()
}

#[test]
fn blocks_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run("blocks --gamma 1,2 --verify", dir.path()).unwrap());
    let r = report(dir.path());
    assert_eq!(r["pass"], true);
    assert_eq!(r["provenance"]["command"], "blocks");
    assert!(r["checks"].as_array().unwrap().len() >= 5);
    let csv = std::fs::read_to_string(dir.path().join("blocks_balanced.csv")).unwrap();
    assert_eq!(csv.lines().count(), 17);
    assert!(csv.starts_with("index,value"));
}

#[test]
fn odometer_certificate_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run("odometer --mu 1,1 --nu 2,3 --c 2 --evc", dir.path()).unwrap());
    let r = report(dir.path());
    let certs = r["details"]["rigid_certificates"].as_array().unwrap();
    assert_eq!(certs.len(), 2);
    // Masses are exact fraction strings.
    assert!(certs[0]["certificate"]["covered_mass"].as_str().unwrap().contains('/'));
    assert!(dir.path().join("odometer_orbit.csv").exists());
}

#[test]
fn rotation_reports_the_level_identities() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run("rotation --pq 1,1,1,200,1,1,1,500 --p 1 --c 2", dir.path()).unwrap());
    let r = report(dir.path());
    let names = check_names(&r);
    for want in ["level 1 block sums", "level 1 coboundary", "level 1 transfer bound"] {
        assert!(names.iter().any(|n| n == want), "missing {want}: {names:?}");
    }
    assert_eq!(r["provenance"]["parameters"]["levels"], serde_json::json!([4]));
    for table in ["rotation_f_1.csv", "rotation_g_1.csv", "rotation_bump_1.csv"] {
        let text = std::fs::read_to_string(dir.path().join(table)).unwrap();
        assert!(text.starts_with("breakpoint,value,derivative"), "{table}");
    }
}

#[test]
fn reports_are_deterministic_per_seed() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run("odometer --mu 1,1 --nu 2,3 --samples 50 --seed 11", a.path()).unwrap();
    run("odometer --mu 1,1 --nu 2,3 --samples 50 --seed 11", b.path()).unwrap();
    let read = |d: &Path| std::fs::read(d.join("report.json")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert_eq!(
        std::fs::read(a.path().join("odometer_orbit.csv")).unwrap(),
        std::fs::read(b.path().join("odometer_orbit.csv")).unwrap()
    );
}

#[test]
fn failing_checks_still_write_the_report() {
    let dir = tempfile::tempdir().unwrap();
    // Half of the space is outside the level-1 partition, so eps = 0.4 cannot pass.
    let ok = run("evc --system odometer --mu 1,1 --nu 2,3 --depth 1 --eps 0.4", dir.path()).unwrap();
    assert!(!ok);
    let r = report(dir.path());
    assert_eq!(r["pass"], false);
    // Float flags are carried exactly: 0.4 becomes its binary fraction.
    let bound = r["checks"][0]["bound"].as_str().unwrap();
    let (n, d) = bound.split_once('/').unwrap();
    let value = n.parse::<f64>().unwrap() / d.parse::<f64>().unwrap();
    assert!((value - 0.4).abs() < 1e-15, "{bound}");
}

#[test]
fn invalid_input_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run("rotation", dir.path()).is_err());
    assert!(run("odometer --mu 1 --nu 2 --c 3", dir.path()).is_err());
    assert!(run("evc --system rotation", dir.path()).is_err());
    assert!(run("blocks --gamma 1,nope", dir.path()).is_err());
}

#[test]
fn config_file_supplies_missing_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.conf");
    std::fs::write(&config, "# blocks run\ncommand = blocks\ngamma = 1,2\nverify = true\nseed = 5\n").unwrap();
    let out = dir.path().join("out");
    assert!(run(&format!("--config {} --seed 7", config.display()), &out).unwrap());
    let r = report(&out);
    assert_eq!(r["provenance"]["seed"], 7);
    assert_eq!(r["provenance"]["parameters"]["verify"], true);
}

#[test]
fn maharam_reads_a_system_file() {
    let dir = tempfile::tempdir().unwrap();
    let system = dir.path().join("system.json");
    std::fs::write(&system, r#"{"masses": ["1/2", "1/3", "1/6"], "perm": [1, 2, 0]}"#).unwrap();
    assert!(run(&format!("maharam --system {} --t 0.5,-1 --boxes 200", system.display()), dir.path()).unwrap());
    assert_eq!(check_names(&report(dir.path())).len(), 9);
    std::fs::write(&system, r#"{"masses": ["1/2", "1/3"], "perm": [1, 0]}"#).unwrap();
    assert!(run(&format!("maharam --system {} --t 1", system.display()), dir.path()).is_err());
}
