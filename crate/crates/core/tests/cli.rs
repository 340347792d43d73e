//! End-to-end runs of the `advsticker` binary on small scenes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use advsticker::config::RunConfig;
use advsticker::{load_ppm, save_ppm, ImageBuffer};

const SMALL: &str = "\
sticker_height = 20
sticker_width = 45
face_size = 120
batch_size = 2
stage1_min_iters = 3
stage2_min_iters = 3
window = 3
synthetic_face = 4
gallery_size = 20
";

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_advsticker"));
    cmd.env("ADVSTICKER_THREADS", "0");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn advsticker")
}

fn write_config(dir: &Path, name: &str, extra: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, format!("{SMALL}{extra}")).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn checker(h: usize, w: usize) -> ImageBuffer {
    ImageBuffer::from_fn(h, w, 3, |r, c, _| if (r / 5 + c / 5) % 2 == 0 { 0.9 } else { 0.1 })
}

#[test]
fn attack_writes_outputs_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", "max_iters = 8\n");
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let o = run(&["attack", s(&cfg), "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in ["sticker.ppm", "loss_log.csv"] {
        assert_eq!(
            std::fs::read(out_a.join(file)).unwrap(),
            std::fs::read(out_b.join(file)).unwrap(),
            "{file}"
        );
    }
    let manifest = |out: &Path| -> Vec<String> {
        std::fs::read_to_string(out.join("manifest.txt"))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("out_dir"))
            .map(String::from)
            .collect()
    };
    assert_eq!(manifest(&out_a), manifest(&out_b));
    let sticker = load_ppm(out_a.join("sticker.ppm")).unwrap();
    assert_eq!(sticker.shape(), (20, 45, 3));
    let log = std::fs::read_to_string(out_a.join("loss_log.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next().unwrap(), "iter,stage,loss_sim,loss_tv,loss_total,val_sim");
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty() && rows.len() <= 8);
    assert!(rows[0].starts_with("1,1,"));
}

#[test]
fn single_iteration_gives_single_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", "max_iters = 1\n");
    let out = dir.path().join("o");
    let o = run(&["attack", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = std::fs::read_to_string(out.join("loss_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 2);
}

#[test]
fn zero_tv_weight_makes_total_equal_similarity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", "lambda_tv = 0\nmax_iters = 3\n");
    let out = dir.path().join("o");
    assert!(run(&["attack", s(&cfg), "--out", s(&out)]).status.success());
    let log = std::fs::read_to_string(out.join("loss_log.csv")).unwrap();
    let rows: Vec<Vec<f64>> = log
        .lines()
        .skip(1)
        .map(|r| r.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert!(rows.iter().all(|f| f[2] == f[4]));
    // TV of the flat initial sticker is 0; it is still reported afterwards
    assert_eq!(rows[0][3], 0.0);
    assert!(rows.last().unwrap()[3] > 0.0);
}

#[test]
fn manifest_echo_parses_back_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), "run.cfg", "max_iters = 2\n");
    let out = dir.path().join("o");
    assert!(run(&["attack", s(&cfg_path), "--out", s(&out)]).status.success());
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("# termination = "));
    let echoed = RunConfig::parse(&manifest).unwrap();
    let mut original = RunConfig::load(&cfg_path).unwrap();
    original.out_dir = out.clone();
    assert_eq!(echoed, original);
}

#[test]
fn eval_reports_one_row_per_embedder() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "run.cfg",
        "eval_embedders = toy_cnn:1, toy_cnn:2, toy_cnn:3, linear:1\n",
    );
    let sticker = dir.path().join("s.ppm");
    save_ppm(&checker(20, 45), &sticker).unwrap();
    let out = dir.path().join("o");
    let o = run(&["eval", s(&cfg), "--sticker", s(&sticker), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("toy_cnn-s1,true,"));
    assert!(rows[1..].iter().all(|r| r.split(',').nth(1) == Some("false")));
    assert_eq!(String::from_utf8(o.stdout).unwrap(), csv);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["reports"].as_array().unwrap().len(), 4);

    let again = dir.path().join("o2");
    assert!(run(&["eval", s(&cfg), "--sticker", s(&sticker), "--out", s(&again)]).status.success());
    assert_eq!(csv, std::fs::read_to_string(again.join("report.csv")).unwrap());
}

#[test]
fn eval_of_plain_hat_sticker_drops_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", "");
    let sticker = dir.path().join("gray.ppm");
    save_ppm(&ImageBuffer::filled(20, 45, 3, 0.2), &sticker).unwrap();
    let out = dir.path().join("o");
    assert!(run(&["eval", s(&cfg), "--sticker", s(&sticker), "--out", s(&out)]).status.success());
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let drop: f64 = csv.lines().nth(1).unwrap().split(',').nth(4).unwrap().parse().unwrap();
    assert!(drop.abs() < 1e-9, "drop {drop}");
}

#[test]
fn render_writes_face_and_template() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", "");
    let sticker = dir.path().join("s.ppm");
    save_ppm(&checker(20, 45), &sticker).unwrap();
    let out = dir.path().join("o");
    let o = run(&["render", s(&cfg), "--sticker", s(&sticker), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(load_ppm(out.join("face.ppm")).unwrap().shape(), (120, 120, 3));
    assert_eq!(load_ppm(out.join("template.ppm")).unwrap().shape(), (112, 112, 3));
    let again = dir.path().join("o2");
    assert!(run(&["render", s(&cfg), "--sticker", s(&sticker), "--out", s(&again)]).status.success());
    assert_eq!(
        std::fs::read(out.join("face.ppm")).unwrap(),
        std::fs::read(again.join("face.ppm")).unwrap()
    );
}

#[test]
fn render_footprint_narrows_with_bend() {
    let dir = tempfile::tempdir().unwrap();
    let sticker = dir.path().join("white.ppm");
    save_ppm(&ImageBuffer::filled(20, 45, 3, 1.0), &sticker).unwrap();
    let covered = |bend: f64| {
        let cfg = write_config(dir.path(), "b.cfg", &format!("bend = {bend}\npitch_deg = 0\n"));
        let out = dir.path().join(format!("o{bend}"));
        assert!(run(&["render", s(&cfg), "--sticker", s(&sticker), "--out", s(&out)]).status.success());
        let face = load_ppm(out.join("face.ppm")).unwrap();
        let row = 36;
        (0..120).filter(|&c| face.pixel(row, c).iter().all(|v| *v == 1.0)).count()
    };
    let flat = covered(0.0);
    let bent = covered(0.8);
    assert!(flat > bent && bent > 0, "flat {flat} bent {bent}");
}

#[test]
fn gradcheck_reduced_passes() {
    let o = run(&["gradcheck"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().filter(|l| l.contains("max_rel_err")).count() >= 5);
}

#[test]
fn gradcheck_flags_a_corrupted_gradient() {
    let o = run(&["gradcheck", "--inject-fault", "tv"]);
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "no_such_key = 1\n");
    let o = run(&["attack", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 10"));
    assert_eq!(run(&["attack", "--bogus"]).status.code(), Some(2));
}

#[test]
fn missing_or_mismatched_inputs_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", "");
    let out = dir.path().join("o");
    let missing = dir.path().join("missing.ppm");
    assert_eq!(
        run(&["eval", s(&cfg), "--sticker", s(&missing), "--out", s(&out)]).status.code(),
        Some(3)
    );
    let wrong = dir.path().join("wrong.ppm");
    save_ppm(&checker(10, 10), &wrong).unwrap();
    assert_eq!(
        run(&["render", s(&cfg), "--sticker", s(&wrong), "--out", s(&out)]).status.code(),
        Some(3)
    );
}
