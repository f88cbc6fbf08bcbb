use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn plstab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plstab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn indicator(dir: &Path, name: &str, lo: f64, cells: usize, step: f64) -> PathBuf {
    let values = vec!["1.0"; cells].join(",");
    let path = dir.join(name);
    fs::write(
        &path,
        format!(r#"{{"origin":{lo},"step":{step},"values":[{values}]}}"#),
    )
    .unwrap();
    path
}

fn json(text: &str) -> serde_json::Value {
    serde_json::from_str(text).unwrap()
}

#[test]
fn deficit_of_indicators() {
    let dir = TempDir::new().unwrap();
    let f = indicator(dir.path(), "f.json", 0.0, 100, 0.01);
    let g = indicator(dir.path(), "g.json", 0.0, 200, 0.01);
    let out = plstab(&[
        "deficit",
        f.to_str().unwrap(),
        g.to_str().unwrap(),
        "--lambda",
        "0.5",
    ]);
    assert!(out.status.success(), "{out:?}");
    let v = json(&stdout(&out));
    let eps = v["epsilon"].as_f64().unwrap();
    assert!((eps - (1.5 / 2f64.sqrt() - 1.0)).abs() < 0.02, "{eps}");
    assert_eq!(v["canonical_h"], true);

    // Given h equal to f: the condition fails and the deficit is negative.
    let out = plstab(&[
        "deficit",
        f.to_str().unwrap(),
        g.to_str().unwrap(),
        "--h",
        f.to_str().unwrap(),
        "--lambda",
        "0.5",
    ]);
    assert!(out.status.success());
    let v = json(&stdout(&out));
    assert!(v["epsilon"].as_f64().unwrap() < 0.0);
    assert!(v["condition"]["violations"].as_u64().unwrap() > 0);
}

#[test]
fn rearrange_keeps_integral() {
    let dir = TempDir::new().unwrap();
    let f = dir.path().join("f.json");
    fs::write(
        &f,
        r#"{"origin":3.0,"step":0.5,"values":[0.0,2.0,1.0,3.0,0.5]}"#,
    )
    .unwrap();
    let target = dir.path().join("star.json");
    let out = plstab(&[
        "rearrange",
        f.to_str().unwrap(),
        "-o",
        target.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let v = json(&fs::read_to_string(&target).unwrap());
    let vals: Vec<f64> = v["values"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert_eq!(vals, vec![0.0, 1.0, 3.0, 2.0, 0.5]);
    assert_eq!(v["origin"].as_f64().unwrap(), -1.25);
}

#[test]
fn reconstruct_writes_report() {
    let dir = TempDir::new().unwrap();
    let step = 0.02;
    let gauss = |shift: f64| {
        let values: Vec<String> = (0..400)
            .map(|k| {
                let x = -4.0 + (k as f64 + 0.5) * step - shift;
                (-std::f64::consts::PI * x * x).exp().to_string()
            })
            .collect();
        format!(
            r#"{{"origin":-4.0,"step":{step},"values":[{}]}}"#,
            values.join(",")
        )
    };
    let (f, g) = (dir.path().join("f.json"), dir.path().join("g.json"));
    fs::write(&f, gauss(0.0)).unwrap();
    fs::write(&g, gauss(0.5)).unwrap();
    let report = dir.path().join("report.json");
    let out = plstab(&[
        "reconstruct",
        f.to_str().unwrap(),
        g.to_str().unwrap(),
        "--lambda",
        "0.5",
        "--n-levels",
        "1024",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let v = json(&fs::read_to_string(&report).unwrap());
    assert_eq!(v, json(&stdout(&out)));
    for key in [
        "w",
        "a",
        "epsilon",
        "err_f",
        "err_g",
        "err_h",
        "stage_flags",
    ] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert!(v["epsilon"].as_f64().unwrap().abs() < 1e-2);
    assert!(v["err_h"].as_f64().unwrap() < 0.1);
}

#[test]
fn example2_csv() {
    let out = plstab(&[
        "example2",
        "--A",
        "3,5",
        "--step",
        "2e-3",
        "--no-reconstruct",
    ]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(
        header.starts_with("A,") || header.starts_with("a,"),
        "{header}"
    );
    assert!(header.ends_with("schema_version"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn example1_rejects_large_eta() {
    let out = plstab(&["example1", "--etas", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn constants_table_csv() {
    let out = plstab(&["constants", "--tau", "0.5,0.1,1e-6"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("tau,log10_q,log10_m"));
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().skip(1).all(|l| l.contains(",false,")));
    assert_eq!(
        plstab(&["constants", "--tau", "0.7"]).status.code(),
        Some(2)
    );
}

#[test]
fn io_failures_exit_3() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.json");
    let out = plstab(&["rearrange", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));

    let f = indicator(dir.path(), "f.json", 0.0, 10, 0.1);
    let unwritable = dir.path().join("no/such/dir/out.json");
    let out = plstab(&[
        "rearrange",
        f.to_str().unwrap(),
        "-o",
        unwritable.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn malformed_input_exits_2() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"origin":0.0,"step":-1.0,"values":[1.0]}"#).unwrap();
    assert_eq!(
        plstab(&["rearrange", bad.to_str().unwrap()]).status.code(),
        Some(2)
    );
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"amplitudes":[0.01],"bogus":1}"#).unwrap();
    assert_eq!(
        plstab(&["sweep", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn sweep_rerun_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let out_path = dir.path().join("sweep.csv");
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        format!(
            r#"{{"amplitudes":[0.0,0.05],"instances":4,"seed":7,"step":0.02,"n_levels":512,"output":{:?}}}"#,
            out_path.to_str().unwrap()
        ),
    )
    .unwrap();
    let run = || {
        let out = plstab(&["sweep", "--config", cfg.to_str().unwrap()]);
        assert!(out.status.success(), "{out:?}");
        fs::read(&out_path).unwrap()
    };
    let first = run();
    let second = run();
    assert_eq!(first, second);
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("seed,amplitude,family,epsilon"));
    assert_eq!(text.lines().count(), 9);
}
