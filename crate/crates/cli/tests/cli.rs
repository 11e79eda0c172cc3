//! End-to-end tests of the `kinhall` binary: exit-code contract, output
//! files, and checkpoint/resume.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn kinhall(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kinhall"))
        .args(args)
        .env("RAYON_NUM_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// A small homogeneous run: 8 cells, 12³ velocity nodes, 10 steps.
fn small_config(dir: &Path, extra_solver: &str, imposed: bool) -> PathBuf {
    let imposed = if imposed { "[imposed]\nBy = \"0.05 * sin(pi * x / L)\"\n" } else { "" };
    let text = format!(
        r#"
[grid]
L = 2.0
Nx = 8
Nv = 12
v_max = 6.0

[physics]
lambda = 0.5
T_e = 1.0
eta_const = 0.1
Bx0 = 0.2

[initial]
density = "perturbed"
temperature = 1.0
By = "sine"
Bz = 0.0

{imposed}
[time]
dt = 0.01
t_end = 0.1
splitting_order = "lie"

[solver]
{extra_solver}

[output]
cadence = 4
directory = "unused"
"#
    );
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_owned).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_owned).collect()).collect();
    (header, rows)
}

#[test]
fn run_writes_energy_fields_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "", false);
    let out = dir.path().join("out");
    let res = kinhall(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));

    let (header, rows) = read_csv(&out.join("energy.csv"));
    assert_eq!(header, ["t", "E_I", "E_m", "E_es", "E_free", "E_tot", "dissipation_step", "residual"]);
    assert_eq!(rows.len(), 11, "initial row plus one per step");
    assert!(rows.iter().all(|r| r.len() == header.len()));
    let e_tot: Vec<f64> = rows.iter().map(|r| r[5].parse().unwrap()).collect();
    assert!(e_tot.windows(2).all(|w| w[1] <= w[0] + 1e-10), "energy must not increase: {e_tot:?}");

    let (fh, frows) = read_csv(&out.join("fields_00000004.csv"));
    assert_eq!(fh, ["x", "n_I", "n_e", "uIx", "uIy", "uIz", "By", "Bz", "Jy", "Jz"]);
    assert_eq!(frows.len(), 8);
    for name in ["checkpoint_00000004.bin", "checkpoint_00000008.bin", "checkpoint_00000010.bin"] {
        assert!(out.join(name).exists(), "{name} missing");
    }
}

#[test]
fn imposed_mode_adds_perturbed_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "", true);
    let out = dir.path().join("out");
    let res = kinhall(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let (header, rows) = read_csv(&out.join("energy.csv"));
    assert_eq!(&header[8..], ["E_m_pert", "S", "balance_residual"]);
    assert!(rows.iter().all(|r| r.len() == 11));
}

#[test]
fn resume_reproduces_the_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "", false);
    let full = dir.path().join("full");
    let res = kinhall(&["run", cfg.to_str().unwrap(), "--out", full.to_str().unwrap()]);
    assert_eq!(code(&res), 0);

    let resumed = dir.path().join("resumed");
    let ckpt = full.join("checkpoint_00000004.bin");
    let res = kinhall(&["resume", ckpt.to_str().unwrap(), cfg.to_str().unwrap(), "--out", resumed.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));

    let a = std::fs::read(full.join("checkpoint_00000010.bin")).unwrap();
    let b = std::fs::read(resumed.join("checkpoint_00000010.bin")).unwrap();
    assert!(a == b, "final checkpoints differ");
    let (_, full_rows) = read_csv(&full.join("energy.csv"));
    let (_, tail) = read_csv(&resumed.join("energy.csv"));
    // The resumed file starts at step 4 (row 4 of the full file); as a
    // starting row it carries no step dissipation or residual.
    assert_eq!(tail.len(), 7);
    assert_eq!(full_rows[4][..6], tail[0][..6]);
    assert_eq!(tail[0][6..], ["0e0", "0e0"]);
    assert_eq!(&full_rows[5..], &tail[1..], "energy rows differ after resume");
}

#[test]
fn resume_rejects_mismatched_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "", false);
    let out = dir.path().join("out");
    assert_eq!(code(&kinhall(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])), 0);
    let text = std::fs::read_to_string(&cfg).unwrap().replace("Nx = 8", "Nx = 10");
    let other = dir.path().join("other.toml");
    std::fs::write(&other, text).unwrap();
    let ckpt = out.join("checkpoint_00000004.bin");
    let res = kinhall(&["resume", ckpt.to_str().unwrap(), other.to_str().unwrap()]);
    assert_eq!(code(&res), 1);
}

#[test]
fn usage_and_configuration_errors_exit_1() {
    assert_eq!(code(&kinhall(&[])), 1);
    assert_eq!(code(&kinhall(&["frobnicate"])), 1);
    assert_eq!(code(&kinhall(&["check", "nonsense"])), 1);
    assert_eq!(code(&kinhall(&["run", "/nonexistent/config.toml"])), 1);

    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "bogus_key = 3", false);
    let res = kinhall(&["run", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&res), 1);
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("bogus_key"), "{err}");
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(code(&kinhall(&["--help"])), 0);
    assert_eq!(code(&kinhall(&["--version"])), 0);
}

#[test]
fn unreachable_newton_tolerance_is_a_solver_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "newton_tol = 1e-30", false);
    let res = kinhall(&["run", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&res), 3, "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn derive_constants_prints_the_constants() {
    let res = kinhall(&["derive-constants"]);
    assert_eq!(code(&res), 0);
    let text = String::from_utf8_lossy(&res.stdout);
    assert!(text.contains("3.4763"), "{text}");
    assert!(text.contains("2.07372"), "{text}");
    assert!(text.contains(&format!("{:.15}", std::f64::consts::LN_2)), "{text}");
}

#[test]
fn check_suite_passes() {
    let res = kinhall(&["check", "moments", "--seed", "7"]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stdout));
    assert!(String::from_utf8_lossy(&res.stdout).contains("0 failed (seed 7)"));
}
