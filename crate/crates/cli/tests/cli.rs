use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn wentzell(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wentzell"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let c = header.iter().position(|h| *h == name).unwrap();
    lines
        .map(|l| l.split(',').nth(c).unwrap().parse().unwrap())
        .collect()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

const SMALL: &str = r#"
seed = 3
[grid]
nx = 12
ny = 12
[initial]
kind = "random_modes"
amplitude = 0.2
[stepper]
dt = 1e-3
t_end = 0.2
[io]
snapshot_stride = 50
"#;

#[test]
fn zero_initial_data_keeps_energy_constant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "zero.toml",
        "[grid]\nnx = 8\nny = 8\n[initial]\nkind = \"constant\"\nvalue = 0.0\n[stepper]\nt_end = 0.05\n",
    );
    let out = dir.path().join("run");
    let o = wentzell(&["simulate", s(&cfg), "-o", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let e = column(&fs::read_to_string(out.join("timeseries.csv")).unwrap(), "e_total");
    assert!(e.len() > 10);
    assert!(e.iter().all(|e| (e - 0.25).abs() < 1e-15));
    // a constant trajectory has nothing to probe: exit 0 with a warning
    let o = wentzell(&["analyze", s(&out), s(&out.join("final.csv"))]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    let probe = json(&out.join("analysis/ls_probe.json"));
    assert_eq!(probe["insufficient"], Value::Bool(true));
}

#[test]
fn manifest_lists_every_artifact_with_its_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("run");
    assert!(wentzell(&["simulate", s(&cfg), "-o", s(&out)]).status.success());
    let manifest = json(&out.join("manifest.json"));
    let listed: Vec<(String, String)> = manifest["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| (a["path"].as_str().unwrap().to_string(), a["sha256"].as_str().unwrap().to_string()))
        .collect();
    let mut on_disk = Vec::new();
    let mut stack = vec![out.clone()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                on_disk.push(p.strip_prefix(&out).unwrap().to_string_lossy().replace('\\', "/"));
            }
        }
    }
    on_disk.retain(|p| p != "manifest.json");
    on_disk.sort();
    let mut names: Vec<String> = listed.iter().map(|(p, _)| p.clone()).collect();
    names.sort();
    assert_eq!(names, on_disk);
    for (p, h) in &listed {
        let digest = hex::encode(Sha256::digest(fs::read(out.join(p)).unwrap()));
        assert_eq!(&digest, h, "{p}");
    }
    let cfg_hash = hex::encode(Sha256::digest(fs::read(&cfg).unwrap()));
    assert_eq!(manifest["config_sha256"].as_str().unwrap(), cfg_hash);
    assert!(manifest["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn identical_configs_give_identical_csv_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(wentzell(&["simulate", s(&cfg), "-o", s(&a)]).status.success());
    assert!(wentzell(&["simulate", s(&cfg), "-o", s(&b)]).status.success());
    for f in ["timeseries.csv", "diagnostics.csv", "final.csv", "snapshots/snap_000001.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let neg = write_config(dir.path(), "neg.toml", "[grid]\nnx = 8\nny = 8\n[constants]\nbeta = -1.0\n");
    let o = wentzell(&["simulate", s(&neg), "-o", s(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("beta") && err.contains("positive"), "{err}");

    let syntax = write_config(dir.path(), "syn.toml", "[grid]\nnx = 8\nny = = 8\n");
    let o = wentzell(&["simulate", s(&syntax), "-o", s(&dir.path().join("y"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    let o = wentzell(&["analyze", s(&dir.path().join("nothing")), s(&dir.path().join("psi.csv"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("config.toml") && err.contains("index.csv") && err.contains("psi.csv"), "{err}");
}

#[test]
fn energy_guard_abort_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    // an unstabilized explicit treatment of a strongly nonconvex potential,
    // with no room to halve the step
    let cfg = write_config(
        dir.path(),
        "guard.toml",
        r#"
[grid]
nx = 8
ny = 8
[potential]
kind = "polynomial"
coefficients = [0.0, -10.0, 0.0, 1.0]
[initial]
kind = "random_modes"
amplitude = 0.5
[stepper]
dt = 1.0
dt_min = 1.0
t_end = 10.0
stabilization = 0.0
"#,
    );
    let out = dir.path().join("run");
    let o = wentzell(&["simulate", s(&cfg), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&out.join("manifest.json"))["status"], "aborted");
}

#[test]
fn wide_strip_equilibrium_and_restart() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "wide.toml",
        "[grid]\nlx = 8.0\nly = 4.0\nnx = 16\nny = 17\n[initial]\nkind = \"constant\"\nvalue = 0.0\n[equilibrium]\nnewton_tol = 1e-10\n",
    );
    let out = dir.path().join("eq");
    let o = wentzell(&["equilibrium", s(&cfg), "-o", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("classification: minimum"));
    let side = json(&out.join("equilibrium.json"));
    let res = side["bulk_res"].as_f64().unwrap() + side["bdry_res"].as_f64().unwrap();
    assert!(res <= 1e-8);
    assert!(side["energy"].as_f64().unwrap() < 0.25 * 32.0);
    let u = column(&fs::read_to_string(out.join("equilibrium.csv")).unwrap().lines().skip(2).collect::<Vec<_>>().join("\n"), "u");
    let (lo, hi) = u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    assert!(hi - lo > 0.1, "profile is constant");

    let again = dir.path().join("eq2");
    let o = wentzell(&["equilibrium", s(&cfg), "--init", s(&out.join("equilibrium.csv")), "-o", s(&again)]);
    assert!(o.status.success());
    assert!(json(&again.join("equilibrium.json"))["newton_iters"].as_u64().unwrap() <= 2);
}

#[test]
fn small_strip_zero_is_classified_as_minimum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "unit.toml",
        "[grid]\nnx = 8\nny = 8\n[initial]\nkind = \"constant\"\nvalue = 0.0\n",
    );
    let o = wentzell(&["equilibrium", s(&cfg), "-o", s(&dir.path().join("eq"))]);
    assert!(o.status.success());
    let side = json(&dir.path().join("eq/equilibrium.json"));
    assert_eq!(side["classification"], "minimum");
    assert!(side["lambda_min"].as_f64().unwrap() > 0.0);
    assert!((side["energy"].as_f64().unwrap() - 0.25).abs() < 1e-12);
}

#[test]
fn convergence_run_analysis() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("conv");
    let o = wentzell(&["simulate", s(&repo_config("convergence.toml")), "-o", s(&run)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ts = fs::read_to_string(run.join("timeseries.csv")).unwrap();
    let e = column(&ts, "e_total");
    assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs()));
    let (b, r) = (column(&ts, "bulk_res"), column(&ts, "bdry_res"));
    assert!(b.last().unwrap() + r.last().unwrap() < 1e-6);

    let eq = dir.path().join("eq");
    let o = wentzell(&[
        "equilibrium",
        s(&repo_config("convergence.toml")),
        "--init",
        s(&run.join("final.csv")),
        "-o",
        s(&eq),
    ]);
    assert!(o.status.success());
    let o = wentzell(&["analyze", s(&run), s(&eq.join("equilibrium.csv"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let probe = json(&run.join("analysis/ls_probe.json"));
    let theta = probe["fitted_theta"].as_f64().unwrap();
    assert!(theta > 0.0 && theta <= 0.6, "theta {theta}");
    assert_eq!(probe["inequality_violations"], 0);
    let rate = json(&run.join("analysis/rate.json"));
    assert_eq!(rate["preferred"], "Exponential");
    assert_eq!(rate["bound_ok"], true);
    for f in ["spectrum.json", "eigenvalues.csv", "ls_samples.csv", "ls_scatter.svg", "decay.svg", "manifest.json"] {
        assert!(run.join("analysis").join(f).is_file(), "{f}");
    }
}

#[test]
fn check_passes() {
    let o = wentzell(&["check"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("all"));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            let text = fs::read_to_string(&p).unwrap();
            let v: toml::Value = toml::from_str(&text).unwrap();
            assert!(v.get("grid").is_some(), "{}", p.display());
            n += 1;
        }
    }
    assert!(n >= 3);
}
