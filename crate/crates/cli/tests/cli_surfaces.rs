//! Exercises the CLI surfaces beyond the acceptance criteria: the
//! lipschitz subcommand against a saved checkpoint, fit on a hand-written
//! CSV, and the usage-error exit codes.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

use roblab_core::dataset::synthetic_blobs;
use roblab_core::lipestimate::pairwise_lip;
use roblab_core::scalefit::synthetic_power_law;
use roblab_core::trainer::{Mlp, MlpSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_roblab"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("roblab_cli_{tag}_{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn lipschitz_command_matches_library_estimate() {
    let dir = temp_dir("lip");
    let ds = synthetic_blobs(16, 4, 120, 0.3, 21).unwrap();
    let (images, labels) = ds.to_idx(4, 4);
    let img_path = dir.join("imgs-idx3-ubyte");
    let lbl_path = dir.join("lbls-idx1-ubyte");
    fs::write(&img_path, images.to_bytes()).unwrap();
    fs::write(&lbl_path, labels.to_bytes()).unwrap();

    let model = Mlp::build(MlpSpec::new(16, vec![5], 4), 9);
    let ckpt = dir.join("model.rlmc");
    model.save_checkpoint(&ckpt).unwrap();

    let output = bin()
        .arg("lipschitz")
        .arg("--checkpoint")
        .arg(&ckpt)
        .arg("--images")
        .arg(&img_path)
        .arg("--labels")
        .arg(&lbl_path)
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let json: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();

    // the CLI loads the quantized IDX bytes, so compare against the library
    // on the same reloaded dataset
    let reloaded =
        roblab_core::dataset::ImageDataset::from_idx_files(&img_path, &lbl_path).unwrap();
    let expected = pairwise_lip(
        &model.predict_squashed(reloaded.features()).unwrap(),
        reloaded.features(),
    )
    .unwrap();
    let got = json["l_emp"].as_f64().unwrap();
    assert_eq!(got.to_bits(), expected.l_emp.to_bits());
    assert_eq!(json["n"].as_u64().unwrap(), 120);

    // raw mode differs from squashed mode in general
    let raw_out = bin()
        .arg("lipschitz")
        .arg("--checkpoint")
        .arg(&ckpt)
        .arg("--images")
        .arg(&img_path)
        .arg("--labels")
        .arg(&lbl_path)
        .arg("--raw")
        .output()
        .unwrap();
    assert!(raw_out.status.success());
    let raw_json: serde_json::Value = serde_json::from_slice(&raw_out.stdout).unwrap();
    assert_ne!(raw_json["l_emp"].as_f64().unwrap().to_bits(), got.to_bits());

    fs::remove_dir_all(&dir).ok();
}

#[test]
fn fit_recovers_noiseless_csv_end_to_end() {
    let dir = temp_dir("fitcsv");
    let n_grid: Vec<usize> = vec![500, 1000, 2000, 4000];
    let width_p: Vec<(usize, usize)> = vec![(8, 610), (16, 1210), (32, 2410), (64, 4810)];
    let records = synthetic_power_law(1.35, 0.21, -0.07, &n_grid, &width_p, 0.0, 0);
    let mut csv =
        String::from("n,width,p,seed,L_emp,stopped_epoch,best_test_loss,final_train_loss,status\n");
    for r in &records {
        csv.push_str(&format!(
            "{},{},{},{},{},10,0.5,0.4,ok\n",
            r.n, r.width, r.p, r.seed, r.l_emp
        ));
    }
    let csv_path = dir.join("results.csv");
    fs::write(&csv_path, csv).unwrap();

    let status = bin()
        .arg("fit")
        .arg("--csv")
        .arg(&csv_path)
        .args(["--d", "10"])
        .status()
        .unwrap();
    assert!(status.success());
    let fit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("fit.json")).unwrap()).unwrap();
    assert!((fit["joint"]["alpha"].as_f64().unwrap() - 0.21).abs() < 1e-10);
    assert!((fit["joint"]["beta"].as_f64().unwrap() - (-0.07)).abs() < 1e-10);
    assert!((fit["joint"]["r_squared"].as_f64().unwrap() - 1.0).abs() < 1e-10);
    assert!((fit["slices"]["alpha"]["estimate"].as_f64().unwrap() - 0.21).abs() < 1e-10);
    // report artifacts exist
    assert!(dir.join("fit.txt").exists());
    let slices = fs::read_to_string(dir.join("slices.csv")).unwrap();
    assert!(slices.lines().count() > 1);
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn fit_rejects_all_zero_csv_with_usage_exit() {
    let dir = temp_dir("fitzero");
    let csv = "n,width,p,seed,L_emp,stopped_epoch,best_test_loss,final_train_loss,status\n\
               100,2,50,0,0,10,0.5,0.4,ok\n\
               200,2,50,0,0,10,0.5,0.4,ok\n";
    let csv_path = dir.join("results.csv");
    fs::write(&csv_path, csv).unwrap();
    let output = bin()
        .arg("fit")
        .arg("--csv")
        .arg(&csv_path)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("all records dropped"), "{stderr}");
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn usage_errors_exit_two() {
    // unknown flag (clap)
    let status = bin().arg("verify").arg("--definitely-not-a-flag").status().unwrap();
    assert_eq!(status.code(), Some(2));
    // invalid confidence parameter
    let status = bin()
        .args(["bounds", "--lipschitz", "1", "--rho", "0.1", "--delta-conf", "1.5"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    // missing config file
    let status = bin()
        .args(["run-grid", "--config", "/nonexistent/exp.toml"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn bounds_command_degenerate_values() {
    let output = bin()
        .args(["bounds", "--lipschitz", "0", "--rho", "0", "--d", "10"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let json: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(json["gap_bound"].as_f64().unwrap(), 0.0);
    assert_eq!(json["a_rho"].as_f64().unwrap(), 4.0);
    assert_eq!(json["theoretical"]["wu"]["alpha"].as_f64().unwrap(), 0.1);
    assert_eq!(json["theoretical"]["wu"]["beta"].as_f64().unwrap(), 0.0);
    assert_eq!(json["theoretical"]["bubeck"]["alpha"].as_f64().unwrap(), 0.5);
    assert_eq!(json["theoretical"]["bubeck"]["beta"].as_f64().unwrap(), -0.5);
}
