use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const GAUSSIAN: &str = r#"
[family]
name = "gaussian_shift"

[method]
kind = "partition"

[grid]
start = 1.0
stop = 4.0
step = 0.5
"#;

fn tailbound(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tailbound"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn bound_writes_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.toml", GAUSSIAN);
    let out = dir.path().join("out");
    let o = tailbound(&["bound"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("tail_curve.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("v,bound,method,delta_star,layers,flags"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 7);
    for (row, v) in rows.iter().zip([1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0]) {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[0].parse::<f64>().unwrap(), v);
        let b: f64 = f[1].parse().unwrap();
        assert!((0.0..=1.0).contains(&b), "{row}");
        assert_eq!(f[2], "partition");
    }
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("tail_curve.json")).unwrap()).unwrap();
    assert_eq!(json["command"], "bound");
    assert_eq!(json["result"]["points"].as_array().unwrap().len(), 7);
}

#[test]
fn missing_seed_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.toml", &format!("{GAUSSIAN}\n[simulation]\nreplications = 1000\n"));
    let o = tailbound(&["simulate"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("master_seed"));
}

#[test]
fn unknown_keys_and_bad_arguments_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.toml", &GAUSSIAN.replace("step = 0.5", "step = 0.5\nstride = 2"));
    let o = tailbound(&["bound"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stride"));
    let o = tailbound(&["frobnicate"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    let o = tailbound(&["bound"], &dir.path().join("absent.toml"), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gaps_exit_three_and_are_marked() {
    let dir = tempfile::tempdir().unwrap();
    let body = "[family]\nname = \"gaussian_shift\"\n[method]\nkind = \"partition\"\nk_max = 2\n[grid]\nvalues = [2.0]\n";
    let cfg = write(dir.path(), "k.toml", body);
    let out = dir.path().join("out");
    let o = tailbound(&["bound"], &cfg, &out);
    assert_eq!(o.status.code(), Some(3));
    let csv = fs::read_to_string(out.join("tail_curve.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some("2,,partition,,,gap"));
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.toml", &format!("{GAUSSIAN}\n[simulation]\nreplications = 2000\n"));
    let first = dir.path().join("a");
    let o = tailbound(&["simulate", "--seed", "7", "--workers", "3"], &cfg, &first);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let second = dir.path().join("b");
    let o = tailbound(&["simulate", "--workers", "1"], &first.join("resolved_config.toml"), &second);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["empirical_tail.csv", "empirical_tail.json", "resolved_config.toml"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
    let resolved = fs::read_to_string(first.join("resolved_config.toml")).unwrap();
    assert!(resolved.contains("master_seed = 7"), "{resolved}");
}

#[test]
fn conjugate_table_of_a_power_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let body = "[family]\nname = \"gaussian_shift\"\n[grid]\nvalues = [1.0]\n\
                [conjugate]\nkernel = { kind = \"power\", coef = 0.3333333333333333, exponent = 3.0 }\n\
                x = { values = [0.0, 1.0, 4.0] }\n";
    let cfg = write(dir.path(), "c.toml", body);
    let out = dir.path().join("out");
    let o = tailbound(&["conjugate"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("conjugate.csv")).unwrap();
    let vals: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    // x^{3/2}·2/3 for φ(λ) = λ³/3.
    for (got, want) in vals.iter().zip([0.0, 2.0 / 3.0, 16.0 / 3.0]) {
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
}
