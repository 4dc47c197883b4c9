mod common;

use common::*;
use std::fs;

#[test]
fn gen_synthetic_is_deterministic_and_rejects_zero_scenes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&[
            "gen-synthetic",
            "--scenes",
            "2",
            "--width",
            "48",
            "--height",
            "48",
            "--seed",
            "5",
            "--out",
            s(d),
        ]);
    }
    assert_eq!(snapshot(&a), snapshot(&b));
    assert_eq!(
        code(&["gen-synthetic", "--scenes", "0", "--out", s(&dir.path().join("c"))]),
        2
    );
}

#[test]
fn pipeline_outputs_are_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(dir.path());
    let manifest = fs::read(&c.manifest).unwrap();
    let stats = fs::read(&c.stats).unwrap();
    let again = dir.path().join("again.csv");
    ok(&[
        "split",
        "--manifest",
        s(&c.tiles),
        "--block-size",
        "2",
        "--tolerance",
        "0.1",
        "--out",
        s(&again),
    ]);
    assert_eq!(fs::read(&again).unwrap(), manifest);
    let stats2 = dir.path().join("stats2.json");
    ok(&[
        "stats",
        "--manifest",
        s(&c.manifest),
        "--scenes",
        s(&c.scenes),
        "--out",
        s(&stats2),
    ]);
    assert_eq!(fs::read(&stats2).unwrap(), stats);
}

#[test]
fn usage_and_stratification_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(dir.path());
    let out = dir.path().join("x.json");
    let val = [
        "stats",
        "--manifest",
        s(&c.manifest),
        "--scenes",
        s(&c.scenes),
        "--split",
        "val",
        "--out",
        s(&out),
    ];
    assert_eq!(code(&val), 2);
    assert!(!out.exists());
    let strict = [
        "split",
        "--manifest",
        s(&c.tiles),
        "--tolerance",
        "1e-9",
        "--out",
        s(&out),
    ];
    assert_eq!(code(&strict), 3);
    assert_eq!(code(&["train", "--loss", "ce", "--out", s(&out)]), 2);
    let mut no_seed = vec!["train", "--loss", "ce", "--out", s(&out)];
    no_seed.extend(c.data_args());
    assert_eq!(code(&no_seed), 2);
}

#[test]
fn training_is_reproducible_and_focal_gamma_zero_tracks_ce() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(dir.path());
    let run = |loss: &[&str], out: &str| {
        let out = dir.path().join(out);
        let mut args = vec![
            "train",
            "--steps",
            "40",
            "--seed",
            "3",
            "--wall-time",
            "false",
            "--out",
            s(&out),
        ];
        args.extend_from_slice(loss);
        args.extend(c.data_args());
        ok(&args);
        out
    };
    let a = run(&["--loss", "ce"], "a");
    let b = run(&["--loss", "ce"], "b");
    assert_eq!(snapshot(&a), snapshot(&b));

    let f = run(&["--loss", "focal", "--gamma", "0"], "f");
    let ce = csv_rows(&a.join("train_log.csv"));
    let fl = csv_rows(&f.join("train_log.csv"));
    assert_eq!(ce.len(), 40);
    for (x, y) in ce.iter().zip(&fl) {
        let (lx, ly): (f64, f64) = (x[1].parse().unwrap(), y[1].parse().unwrap());
        assert!((lx - ly).abs() <= 1e-5, "step {}: {lx} vs {ly}", x[0]);
    }
}

#[test]
fn gamma_with_non_focal_loss_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(dir.path());
    let mut args = vec![
        "train", "--loss", "wce", "--gamma", "2", "--seed", "1", "--out", "unused",
    ];
    args.extend(c.data_args());
    assert_eq!(code(&args), 2);
}

#[test]
fn diverging_loss_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(dir.path());
    let out = dir.path().join("run");
    let mut args = vec![
        "train",
        "--loss",
        "ce",
        "--lr",
        "1e30",
        "--steps",
        "50",
        "--seed",
        "1",
        "--out",
        s(&out),
    ];
    args.extend(c.data_args());
    let res = seaice(&args);
    assert_eq!(res.status.code(), Some(4), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(String::from_utf8_lossy(&res.stderr).contains("step"));
}

#[test]
fn eval_reports_are_consistent_and_inputs_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(dir.path());
    let run = dir.path().join("run");
    let mut args = vec![
        "train",
        "--loss",
        "ce",
        "--lr",
        "3e-3",
        "--steps",
        "300",
        "--seed",
        "2",
        "--out",
        s(&run),
    ];
    args.extend(c.data_args());
    ok(&args);

    let ckpt = run.join("checkpoint.bin");
    let before = (
        snapshot(&c.scenes),
        fs::read(&c.manifest).unwrap(),
        fs::read(&c.stats).unwrap(),
        fs::read(&ckpt).unwrap(),
    );
    let report = dir.path().join("report");
    let mut args = vec![
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--split",
        "train",
        "--out",
        s(&report),
    ];
    args.extend(c.data_args());
    let stdout = ok(&args);
    assert!(stdout.contains("accuracy="));
    let after = (
        snapshot(&c.scenes),
        fs::read(&c.manifest).unwrap(),
        fs::read(&c.stats).unwrap(),
        fs::read(&ckpt).unwrap(),
    );
    assert!(before == after, "eval modified its inputs");

    let rows = csv_rows(&report.join("confusion.csv"));
    assert_eq!(rows.len(), 6);
    let counts: Vec<Vec<u64>> = rows
        .iter()
        .map(|r| r[1..].iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    let total: u64 = counts.iter().flatten().sum();
    let trace: u64 = (0..6).map(|i| counts[i][i]).sum();
    let train_rows = csv_rows(&c.manifest).iter().filter(|r| r[7] == "train").count() as u64;
    assert_eq!(total, train_rows);
    let json: serde_json::Value = serde_json::from_slice(&fs::read(report.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(json["accuracy"].as_f64().unwrap(), trace as f64 / total as f64);
    assert!(json["accuracy"].as_f64().unwrap() > 0.9);

    let pgm = fs::read(report.join("confusion.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n192 192\n255\n"));
    assert_eq!(pgm.len(), 15 + 192 * 192);
}

#[test]
fn class_count_mismatch_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(dir.path());
    let run = dir.path().join("run");
    let mut args = vec!["train", "--loss", "ce", "--steps", "2", "--seed", "1", "--out", s(&run)];
    args.extend(c.data_args());
    ok(&args);
    let tax = split_old_taxonomy();
    let report = dir.path().join("report");
    let ckpt = run.join("checkpoint.bin");
    let mut args = vec![
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--taxonomy",
        s(&tax),
        "--out",
        s(&report),
    ];
    args.extend(c.data_args());
    assert_eq!(code(&args), 2);
    assert!(!report.exists());
}

#[test]
fn stats_from_another_manifest_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(dir.path());
    let other = dir.path().join("other.csv");
    ok(&[
        "split",
        "--manifest",
        s(&c.tiles),
        "--block-size",
        "2",
        "--tolerance",
        "0.1",
        "--seed",
        "7",
        "--out",
        s(&other),
    ]);
    assert_ne!(fs::read(&other).unwrap(), fs::read(&c.manifest).unwrap());
    let run = dir.path().join("run");
    let args = [
        "train",
        "--loss",
        "ce",
        "--steps",
        "2",
        "--seed",
        "1",
        "--manifest",
        s(&other),
        "--scenes",
        s(&c.scenes),
        "--stats",
        s(&c.stats),
        "--out",
        s(&run),
    ];
    assert_eq!(code(&args), 2);
}

#[test]
fn experiment_table_matches_reports() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(dir.path());
    let out = dir.path().join("exp");
    let mut args = vec![
        "experiment",
        "--steps",
        "30",
        "--seed",
        "1",
        "--wall-time",
        "false",
        "--out",
        s(&out),
    ];
    args.extend(c.data_args());
    let stdout = ok(&args);
    let table = fs::read_to_string(out.join("experiment.csv")).unwrap();
    assert_eq!(stdout, table);
    let rows = csv_rows(&out.join("experiment.csv"));
    let names: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["ce", "wce", "focal"]);
    for r in &rows {
        let cm = csv_rows(&out.join(&r[0]).join("confusion.csv"));
        let counts: Vec<Vec<u64>> = cm
            .iter()
            .map(|r| r[1..].iter().map(|v| v.parse().unwrap()).collect())
            .collect();
        let total: u64 = counts.iter().flatten().sum();
        let trace: u64 = (0..counts.len()).map(|i| counts[i][i]).sum();
        assert_eq!(r[1].parse::<f64>().unwrap(), trace as f64 / total as f64);
        // Column 4 of the matrix is the minority class.
        let tp = counts[4][4];
        let support: u64 = counts[4].iter().sum();
        let predicted: u64 = counts.iter().map(|row| row[4]).sum();
        let recall = if support == 0 { 0.0 } else { tp as f64 / support as f64 };
        let precision = if predicted == 0 {
            0.0
        } else {
            tp as f64 / predicted as f64
        };
        assert_eq!(r[3].parse::<f64>().unwrap(), recall);
        assert_eq!(r[4].parse::<f64>().unwrap(), precision);
    }
}
