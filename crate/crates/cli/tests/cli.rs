use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fpm_core::design::load_design;
use fpm_core::io::{read_stack, StackData};
use fpm_core::{build_led_geometry, Config};

const SMALL: &str = "\
patch_px = 15
unroll_t = 5
epochs = 1
batch = 2
dataset_size = 4
measurements = 5
";

fn fpm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpm"))
        .args(args)
        .env("FPM_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = fpm(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p
}

fn count(path: &Path) -> usize {
    read_stack(path).unwrap().len()
}

#[test]
fn geometry_lists_all_leds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("geo.txt");
    let res = ok(&["geometry", "--config", s(&cfg), "--out", s(&out)]);
    assert!(String::from_utf8_lossy(&res.stdout).contains("89 LEDs (21 bright-field, 68 dark-field)"));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 89);
    assert!(std::fs::read(dir.path().join("geo.txt.pgm"))
        .unwrap()
        .starts_with(b"P5"));
}

#[test]
fn missing_config_and_unwritable_output_fail() {
    let dir = tempfile::tempdir().unwrap();
    let res = fpm(&[
        "geometry",
        "--config",
        s(&dir.path().join("nope.cfg")),
        "--out",
        "x.txt",
    ]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("nope.cfg"));

    let cfg = write_config(dir.path(), "");
    let bad = dir.path().join("missing/dir/geo.txt");
    let res = fpm(&["geometry", "--config", s(&cfg), "--out", s(&bad)]);
    assert!(!res.status.success());

    let cfg = write_config(dir.path(), "patch_px = 15\nbogus_key = 2\n");
    let res = fpm(&["geometry", "--config", s(&cfg), "--out", s(&dir.path().join("g.txt"))]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("run.cfg:2"));
}

#[test]
fn simulate_stacks_match_design_size_and_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let single = dir.path().join("single.fpmdesign");
    let heur = dir.path().join("heur.fpmdesign");
    ok(&["design", "--config", s(&cfg), "--kind", "single", "--out", s(&single)]);
    ok(&[
        "design",
        "--config",
        s(&cfg),
        "--kind",
        "heuristic",
        "--K",
        "15",
        "--out",
        s(&heur),
    ]);

    let a = dir.path().join("a.fpmstack");
    let b = dir.path().join("b.fpmstack");
    let c = dir.path().join("c.fpmstack");
    ok(&[
        "simulate",
        "--config",
        s(&cfg),
        "--design",
        s(&single),
        "--phantom-seed",
        "4",
        "--noise",
        "off",
        "--out",
        s(&a),
    ]);
    ok(&[
        "simulate",
        "--config",
        s(&cfg),
        "--design",
        s(&single),
        "--phantom-seed",
        "4",
        "--noise",
        "off",
        "--out",
        s(&b),
    ]);
    ok(&[
        "simulate",
        "--config",
        s(&cfg),
        "--design",
        s(&heur),
        "--phantom-seed",
        "4",
        "--noise",
        "on",
        "--out",
        s(&c),
    ]);
    assert_eq!(count(&a), 89);
    assert_eq!(count(&c), 15);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let d = dir.path().join("d.fpmstack");
    ok(&[
        "simulate",
        "--config",
        s(&cfg),
        "--design",
        s(&heur),
        "--phantom-seed",
        "4",
        "--noise",
        "on",
        "--out",
        s(&d),
    ]);
    assert_eq!(std::fs::read(&c).unwrap(), std::fs::read(&d).unwrap());
    let e = dir.path().join("e.fpmstack");
    ok(&[
        "--seed",
        "99",
        "simulate",
        "--config",
        s(&cfg),
        "--design",
        s(&heur),
        "--phantom-seed",
        "4",
        "--noise",
        "on",
        "--out",
        s(&e),
    ]);
    assert_ne!(std::fs::read(&c).unwrap(), std::fs::read(&e).unwrap());
}

#[test]
fn design_from_other_geometry_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let other = dir.path().join("other.cfg");
    std::fs::write(&other, "patch_px = 21\n").unwrap();
    let design = dir.path().join("single.fpmdesign");
    ok(&["design", "--config", s(&other), "--kind", "single", "--out", s(&design)]);
    let res = fpm(&[
        "simulate",
        "--config",
        s(&cfg),
        "--design",
        s(&design),
        "--phantom-seed",
        "1",
        "--out",
        s(&dir.path().join("x")),
    ]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("fingerprint"));
}

fn bright_rows(design: &Path, cfg_path: &Path) -> Vec<bool> {
    let cfg = Config::load(cfg_path).unwrap();
    let geo = build_led_geometry(&cfg.system).unwrap();
    load_design(design, &geo, &cfg.system).unwrap().bright_rows(&geo)
}

#[test]
fn train_respects_context_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let amp = dir.path().join("amp.fpmdesign");
    ok(&[
        "train",
        "--config",
        s(&cfg),
        "--context",
        "amplitude",
        "--K",
        "5",
        "--out",
        s(&amp),
    ]);
    assert_eq!(bright_rows(&amp, &cfg), vec![true, false, false, false, false]);
    let log = std::fs::read_to_string(dir.path().join("amp.fpmdesign.log.csv")).unwrap();
    assert!(log.starts_with("epoch,train_loss,test_loss\n1,"));
    assert!(dir.path().join("amp.fpmdesign.pgm").exists());

    let phase = dir.path().join("phase.fpmdesign");
    ok(&[
        "train",
        "--config",
        s(&cfg),
        "--context",
        "phase",
        "--K",
        "5",
        "--out",
        s(&phase),
    ]);
    assert_eq!(bright_rows(&phase, &cfg), vec![true, true, false, false, false]);

    let res = fpm(&[
        "train",
        "--config",
        s(&cfg),
        "--context",
        "mixed:1.5",
        "--K",
        "5",
        "--out",
        s(&phase),
    ]);
    assert!(!res.status.success());
}

#[test]
fn reconstruct_checks_k_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let heur = dir.path().join("heur.fpmdesign");
    let heur6 = dir.path().join("heur6.fpmdesign");
    ok(&[
        "design",
        "--config",
        s(&cfg),
        "--kind",
        "heuristic",
        "--K",
        "5",
        "--out",
        s(&heur),
    ]);
    ok(&[
        "design",
        "--config",
        s(&cfg),
        "--kind",
        "heuristic",
        "--K",
        "6",
        "--out",
        s(&heur6),
    ]);
    let stack = dir.path().join("y.fpmstack");
    ok(&[
        "simulate",
        "--config",
        s(&cfg),
        "--design",
        s(&heur),
        "--phantom-seed",
        "2",
        "--out",
        s(&stack),
    ]);

    let r1 = dir.path().join("r1.fpmstack");
    let r2 = dir.path().join("r2.fpmstack");
    ok(&[
        "reconstruct",
        "--stack",
        s(&stack),
        "--design",
        s(&heur),
        "--config",
        s(&cfg),
        "--out",
        s(&r1),
    ]);
    ok(&[
        "reconstruct",
        "--stack",
        s(&stack),
        "--design",
        s(&heur),
        "--config",
        s(&cfg),
        "--out",
        s(&r2),
    ]);
    assert_eq!(std::fs::read(&r1).unwrap(), std::fs::read(&r2).unwrap());
    assert!(matches!(read_stack(&r1).unwrap(), StackData::Complex(v) if v.len() == 1 && v[0].dim() == (45, 45)));
    assert!(dir.path().join("r1.fpmstack.amplitude.pgm").exists());
    assert!(dir.path().join("r1.fpmstack.phase.pgm").exists());

    let res = fpm(&[
        "reconstruct",
        "--stack",
        s(&stack),
        "--design",
        s(&heur6),
        "--config",
        s(&cfg),
        "--out",
        s(&r1),
    ]);
    assert!(!res.status.success());
    let msg = String::from_utf8_lossy(&res.stderr);
    assert!(msg.contains("K = 5") && msg.contains("K = 6"), "{msg}");
}

#[test]
fn evaluate_writes_reproducible_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let heur = dir.path().join("heur.fpmdesign");
    let single = dir.path().join("single.fpmdesign");
    ok(&[
        "design",
        "--config",
        s(&cfg),
        "--kind",
        "heuristic",
        "--K",
        "5",
        "--out",
        s(&heur),
    ]);
    ok(&["design", "--config", s(&cfg), "--kind", "single", "--out", s(&single)]);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    ok(&[
        "evaluate",
        "--designs",
        s(&heur),
        s(&single),
        "--config",
        s(&cfg),
        "--out",
        s(&a),
    ]);
    ok(&[
        "evaluate",
        "--designs",
        s(&heur),
        s(&single),
        "--config",
        s(&cfg),
        "--out",
        s(&b),
    ]);
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "design,K,context,lf_psnr,hf_psnr");
    assert!(lines.iter().any(|l| l.starts_with("heur-mean,5,amplitude,")));
    assert!(lines.iter().any(|l| l.starts_with("single-mean,89,amplitude,")));

    let res = fpm(&["evaluate", "--designs", "--config", s(&cfg), "--out", s(&a)]);
    assert!(!res.status.success());
}
