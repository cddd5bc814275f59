use std::path::Path;
use std::process::Command;

use bdloss::io::dataset::read_dataset;
use bdloss::io::{read_nifti1, read_report, Volume};

fn bdloss(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_bdloss")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn gradcheck_boundary_passes() {
    let (code, out, _) = bdloss(&["gradcheck", "--loss", "boundary", "--seed", "7"]);
    assert_eq!(code, 0, "{out}");
    let err: f64 = out
        .split_whitespace()
        .find_map(|w| w.strip_prefix("max_relative_error="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(err < 1e-4);
}

#[test]
fn usage_errors_exit_1() {
    let (code, _, err) = bdloss(&["frobnicate"]);
    assert_eq!(code, 1);
    assert!(err.contains("Usage"), "{err}");
    assert_eq!(bdloss(&[]).0, 1);
    assert_eq!(bdloss(&["gradcheck", "--loss", "nope"]).0, 1);
    assert_eq!(bdloss(&["sweep", "--gammas", "0,x"]).0, 1);
    assert_eq!(bdloss(&["--help"]).0, 0);
}

#[test]
fn missing_files_exit_2() {
    let (code, _, err) = bdloss(&["report", "--in", "/nonexistent/report.csv"]);
    assert_eq!(code, 2);
    assert!(err.contains("/nonexistent/report.csv"), "{err}");
}

#[test]
fn gen_train_evaluate_report() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let cfg = t.join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"dims": [26, 26, 18], "canal_length_min": 5, "canal_length_max": 7, "bulb_semi_axis_min": 4,
            "bulb_semi_axis_max": 6, "center_jitter": 1, "iterations": 10, "gamma": 0.1}"#,
    )
    .unwrap();
    let data = t.join("data");
    let (code, _, err) = bdloss(&["gen-data", "--seed", "9", "--train", "2", "--val", "1", "--test", "2", "--config", &s(&cfg), "--out", &s(&data)]);
    assert_eq!(code, 0, "{err}");
    assert!(err.contains("\"seed\": 9"), "resolved config printed: {err}");
    let (m, d) = read_dataset(&data).unwrap();
    assert_eq!((m.seed, d.train.len(), d.val.len(), d.test.len()), (9, 2, 1, 2));

    let models = t.join("models");
    let (code, _, err) = bdloss(&["train", "--config", &s(&cfg), "--data", &s(&data), "--out", &s(&models)]);
    assert_eq!(code, 0, "{err}");
    for f in ["model.json", "baseline.json", "stage1_curve.csv", "stage2_curve.csv", "config.json"] {
        assert!(models.join(f).exists(), "{f}");
    }

    let a = t.join("a.csv");
    let b = t.join("b.csv");
    assert_eq!(bdloss(&["evaluate", "--model", &s(&models.join("model.json")), "--data", &s(&data), "--out", &s(&a)]).0, 0);
    assert_eq!(bdloss(&["evaluate", "--model", &s(&models.join("baseline.json")), "--data", &s(&data), "--out", &s(&b)]).0, 0);
    // two-stage, two-stage with GT masks and stage 1 per test case
    assert_eq!(read_report(&a).unwrap().len(), 6);
    assert_eq!(read_report(&b).unwrap().len(), 2);

    let (code, md, _) = bdloss(&["report", "--in", &s(&a), &s(&b), "--format", "markdown"]);
    assert_eq!(code, 0);
    assert!(md.contains("| γ | BG | EM | IM | WT | ASSD-median | p25 | p75 | n_inf |"), "{md}");
    let (code, csv, _) = bdloss(&["report", "--in", &s(&a), "--format", "csv"]);
    assert_eq!(code, 0);
    assert!(csv.starts_with("row,method,gamma,case_id"));
}

#[test]
fn nifti_fixture_from_independent_writer() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/tiny_f32.nii");
    match read_nifti1(&path).unwrap() {
        Volume::Scalar(f) => {
            assert_eq!(f.dims(), [2, 2, 2]);
            assert_eq!(f.spacing(), [1.0, 1.0, 1.0]);
            assert_eq!(f.data(), &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        }
        v => panic!("{v:?}"),
    }
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[344..348].copy_from_slice(b"xx1\0");
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.nii");
    std::fs::write(&bad, &bytes).unwrap();
    assert!(matches!(read_nifti1(&bad), Err(bdloss::Error::Format(_))));
}
