//! End-to-end tests of the `planocheck` binary: exit codes, report schema,
//! determinism, and the synth/check/report round trip.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_planocheck"))
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("planocheck-cli-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_planogram(dir: &Path) -> PathBuf {
    let path = dir.join("shelf.xml");
    std::fs::write(
        &path,
        r#"<planogram version="1">
  <shelf rows="2">
    <row index="0"> <product type="SKU-A"/> <product type="SKU-A"/> <product type="SKU-A"/> <product type="SKU-A"/> </row>
    <row index="1"> <product type="SKU-B"/> <product type="SKU-B"/> <product type="SKU-B"/> </row>
  </shelf>
</planogram>
"#,
    )
    .unwrap();
    path
}

fn write_spec(dir: &Path, missing: &str) -> PathBuf {
    let path = dir.join("spec.json");
    std::fs::write(
        &path,
        format!(
            r#"{{
  "features_per_instance": 6,
  "descriptor_noise": 0.03,
  "position_jitter": 1.5,
  "clutter": 12,
  "seed": 5,
  "missing": [{missing}]
}}"#
        ),
    )
    .unwrap();
    path
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn synth_scene(dir: &Path, missing: &str) -> PathBuf {
    let planogram = write_planogram(dir);
    let spec = write_spec(dir, missing);
    let scene = dir.join("scene.json");
    let out = run(bin()
        .arg("synth")
        .arg("--planogram")
        .arg(&planogram)
        .arg("--spec")
        .arg(&spec)
        .arg("--out")
        .arg(&scene));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    scene
}

#[test]
fn compliant_scene_exits_zero_with_full_accuracy() {
    let dir = tmp_dir("compliant");
    let scene = synth_scene(&dir, "");
    let report = dir.join("report.json");
    let overlay = dir.join("overlay.svg");
    let out = run(bin()
        .arg("check")
        .arg("--planogram")
        .arg(dir.join("shelf.xml"))
        .arg("--scene")
        .arg(&scene)
        .arg("--out")
        .arg(&report)
        .arg("--overlay")
        .arg(&overlay)
        .args(["--seed", "1"]));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(doc["overall_accuracy"].as_f64(), Some(1.0));
    let types = doc["types"].as_array().unwrap();
    assert_eq!(types.len(), 2);
    for t in types {
        assert!(t["type"].is_string());
        assert!(t["expected"].is_u64());
        assert!(t["matched"].is_u64());
        assert!(t["accuracy"].is_number());
        assert!(t["missing_slots"].is_array());
        assert!(t["unexpected"].is_array());
    }

    // one SVG circle per detected product
    let svg = std::fs::read_to_string(&overlay).unwrap();
    let circles = svg.matches("<circle").count();
    assert_eq!(circles, doc["detections"].as_array().unwrap().len());
    assert_eq!(circles, 7);

    // stdout carries the text rendering
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("COMPLIANT"));
    assert!(text.contains("SKU-A"));
}

#[test]
fn missing_product_exits_three_and_lists_slot() {
    let dir = tmp_dir("missing");
    let scene = synth_scene(&dir, r#"["SKU-A", 2]"#);
    let report = dir.join("report.json");
    let out = run(bin()
        .arg("check")
        .arg("--planogram")
        .arg(dir.join("shelf.xml"))
        .arg("--scene")
        .arg(&scene)
        .arg("--out")
        .arg(&report));
    assert_eq!(out.status.code(), Some(3));

    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let a = doc["types"]
        .as_array()
        .unwrap()
        .iter()
        .find(|t| t["type"] == "SKU-A")
        .unwrap();
    assert_eq!(a["expected"].as_u64(), Some(4));
    assert_eq!(a["matched"].as_u64(), Some(3));
    let missing: Vec<u64> = a["missing_slots"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["slot"].as_u64().unwrap())
        .collect();
    assert_eq!(missing, vec![2]);
}

#[test]
fn nonexistent_planogram_exits_one() {
    let dir = tmp_dir("nofile");
    let out = run(bin()
        .arg("check")
        .arg("--planogram")
        .arg(dir.join("nope.xml"))
        .arg("--scene")
        .arg(dir.join("nope.json")));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn same_seed_gives_byte_identical_reports() {
    let dir = tmp_dir("determinism");
    let scene = synth_scene(&dir, "");
    let r1 = dir.join("r1.json");
    let r2 = dir.join("r2.json");
    for (r, jobs) in [(&r1, "1"), (&r2, "4")] {
        let out = run(bin()
            .arg("check")
            .arg("--planogram")
            .arg(dir.join("shelf.xml"))
            .arg("--scene")
            .arg(&scene)
            .arg("--out")
            .arg(r)
            .args(["--seed", "7", "--jobs", jobs]));
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&r1).unwrap(), std::fs::read(&r2).unwrap());
}

#[test]
fn synth_is_deterministic_and_seed_flag_overrides() {
    let dir = tmp_dir("synth");
    let planogram = write_planogram(&dir);
    let spec = write_spec(&dir, "");
    let s1 = dir.join("s1.json");
    let s2 = dir.join("s2.json");
    let s3 = dir.join("s3.json");
    for (path, seed) in [(&s1, None), (&s2, None), (&s3, Some("99"))] {
        let mut cmd = bin();
        cmd.arg("synth")
            .arg("--planogram")
            .arg(&planogram)
            .arg("--spec")
            .arg(&spec)
            .arg("--out")
            .arg(path);
        if let Some(seed) = seed {
            cmd.args(["--seed", seed]);
        }
        assert_eq!(run(&mut cmd).status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&s1).unwrap(), std::fs::read(&s2).unwrap());
    assert_ne!(std::fs::read(&s1).unwrap(), std::fs::read(&s3).unwrap());
}

#[test]
fn report_command_renders_existing_report() {
    let dir = tmp_dir("report");
    let scene = synth_scene(&dir, "");
    let report = dir.join("report.json");
    run(bin()
        .arg("check")
        .arg("--planogram")
        .arg(dir.join("shelf.xml"))
        .arg("--scene")
        .arg(&scene)
        .arg("--out")
        .arg(&report));
    let overlay = dir.join("replay.svg");
    let out = run(bin().arg("report").arg("--report").arg(&report).arg("--overlay").arg(&overlay));
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("overall accuracy"));
    assert!(std::fs::read_to_string(&overlay).unwrap().starts_with("<svg"));
}

#[test]
fn print_config_lists_defaults_and_config_file_applies() {
    let dir = tmp_dir("config");
    let out = run(bin().arg("check").arg("--print-config"));
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    for key in [
        "appearance_tol=0.35",
        "geometry_tol=0.15",
        "restarts=30",
        "rcl_alpha=0.3",
        "max_local_moves=200",
        "min_objects=2",
        "min_words=3",
        "max_per_region=25",
        "margin_frac=0.25",
        "redetect_coverage=0.6",
    ] {
        assert!(text.contains(key), "missing {key} in:\n{text}");
    }

    let cfg = dir.join("custom.cfg");
    std::fs::write(&cfg, "max_per_region=7\nseed=123\n").unwrap();
    let out = run(bin().arg("check").arg("--config").arg(&cfg).arg("--print-config"));
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("max_per_region=7"));
    assert!(text.contains("seed=123"));

    // flag overrides file
    let out = run(bin()
        .arg("check")
        .arg("--config")
        .arg(&cfg)
        .args(["--max-per-region", "9"])
        .arg("--print-config"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("max_per_region=9"));
}
