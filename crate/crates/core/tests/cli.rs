use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fembem::bem::MU0;
use fembem::config::{CaseConfig, MotionStep, RegionConfig};
use proptest::prelude::*;

const BALL: &str = r#"
name = "ball"

[[meshes]]
generate = { kind = "ball", n = 3, radius = 1.0 }

[regions.1]
mu_r = 1.0
magnetization = [0.0, 0.0, 1.0]

[study.analytic]
kind = "magnetized_ball"
radius = 1.0
magnetization = [0.0, 0.0, 1.0]
"#;

fn cases_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../cases")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("case.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn fembem(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fembem"))
        .args(args)
        .arg(config)
        .arg("--output")
        .arg(out)
        .env_remove("FEMBEM_THREADS")
        .output()
        .unwrap()
}

fn csv_column(text: &str, name: &str) -> Vec<String> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().to_string()).collect()
}

#[test]
fn run_writes_csv_report_and_vtk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BALL);
    let out = dir.path().join("out");
    let o = fembem(&["run"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("ball.csv")).unwrap();
    let norm: f64 = csv_column(&csv, "l2_norm")[0].parse().unwrap();
    let exact = 2.0 / 3.0 * (4.0 * std::f64::consts::PI / 3.0f64).sqrt() * MU0;
    assert!((norm / exact - 1.0).abs() <= 0.1, "{norm} vs {exact}");
    assert!(out.join("ball_volume.vtk").exists());
    assert!(out.join("ball_surface.vtk").exists());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("ball_report.json")).unwrap()).unwrap();
    assert!(report["normal_flux_jump"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn reruns_produce_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(fembem(&["run"], &cfg, &a).status.success());
    assert!(fembem(&["run"], &cfg, &b).status.success());
    assert_eq!(std::fs::read(a.join("ball.csv")).unwrap(), std::fs::read(b.join("ball.csv")).unwrap());
}

#[test]
fn missing_permeability_names_the_region_tag() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "name = \"missing\"\n[[meshes]]\npath = \"{}\"\n[regions.1]\nmu_r = 1.0\n",
        cases_dir().join("two_spheres.msh").display()
    );
    let cfg = write_config(dir.path(), &text);
    let o = fembem(&["run"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("region tag 2"), "{err}");
}

#[test]
fn single_level_study_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BALL);
    let o = fembem(&["study"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("at least 2 mesh levels"));
}

#[test]
fn study_error_decreases_over_levels() {
    let dir = tempfile::tempdir().unwrap();
    let text = BALL.replace(
        "[[meshes]]\ngenerate = { kind = \"ball\", n = 3, radius = 1.0 }",
        "[[meshes]]\ngenerate = { kind = \"ball\", n = 2, radius = 1.0 }\n\
         [[meshes]]\ngenerate = { kind = \"ball\", n = 3, radius = 1.0 }\n\
         [[meshes]]\ngenerate = { kind = \"ball\", n = 4, radius = 1.0 }",
    );
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let o = fembem(&["study"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("ball_convergence.csv")).unwrap();
    let errors: Vec<f64> = csv_column(&csv, "l2_error").iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(errors.len(), 3);
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    assert!(csv_column(&csv, "warning").iter().all(|w| w.is_empty()));
}

#[test]
fn motion_steps_write_one_vtk_each_and_reuse_the_previous_solution() {
    let dir = tempfile::tempdir().unwrap();
    let source = std::fs::read_to_string(cases_dir().join("two_spheres_motion.toml")).unwrap();
    let msh = cases_dir().join("two_spheres.msh");
    let text = source.replace("path = \"two_spheres.msh\"", &format!("path = \"{}\"", msh.display()));
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let o = fembem(&["run"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for k in 1..=3 {
        assert!(out.join(format!("two_spheres_step{k}.vtk")).exists());
    }
    assert!(!out.join("two_spheres_step4.vtk").exists());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("two_spheres_report.json")).unwrap()).unwrap();
    let its: Vec<u64> = report["motion"].as_array().unwrap().iter().map(|s| s["iterations"].as_u64().unwrap()).collect();
    assert_eq!(its.len(), 3);
    assert!(its[1] <= its[0] && its[2] <= its[0], "{its:?}");
}

#[test]
fn shipped_cases_parse_and_resolve_their_meshes() {
    let mut n = 0;
    for entry in std::fs::read_dir(cases_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = CaseConfig::load(&path).unwrap();
            for k in 0..cfg.meshes.len() {
                cfg.build_mesh(k).unwrap_or_else(|e| panic!("{}: level {k}: {e}", path.display()));
            }
            n += 1;
        }
    }
    assert!(n >= 6);
}

#[test]
fn missing_config_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = fembem(&["run"], &dir.path().join("absent.toml"), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn malformed_config_is_invalid_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "name = \"x\"\nmeshes = 3\n");
    assert_eq!(fembem(&["run"], &cfg, &dir.path().join("out")).status.code(), Some(2));
    let cfg = write_config(dir.path(), &BALL.replace("mu_r = 1.0", "mu_r = -1.0"));
    assert_eq!(fembem(&["run"], &cfg, &dir.path().join("out")).status.code(), Some(2));
}

#[test]
fn zero_threads_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BALL);
    let o = fembem(&["run", "--threads", "0"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_survives_a_toml_round_trip(
        name in "[a-z][a-z0-9_]{0,12}",
        mu in 1.0f64..1e4,
        m in prop::array::uniform3(-1e3f64..1e3),
        tol in 1e-12f64..1e-3,
        steps in prop::collection::vec((0usize..2, prop::array::uniform3(-1.0f64..1.0), -90.0f64..90.0), 0..4),
        probes in prop::collection::vec(prop::array::uniform3(2.0f64..5.0), 0..3),
    ) {
        let mut cfg = CaseConfig::from_toml(BALL).unwrap();
        cfg.name = name;
        cfg.regions.insert("2".into(), RegionConfig { mu_r: mu, magnetization: m, current_density: [0.0; 3] });
        cfg.solver.tol = tol;
        cfg.motion = steps
            .into_iter()
            .map(|(component, translation, angle_deg)| MotionStep { component, axis: [0.0, 0.0, 1.0], angle_deg, translation })
            .collect();
        cfg.probes = probes;
        let back = CaseConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
