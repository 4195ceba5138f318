//! Exercises the C ABI through the exported extern functions.

use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};

use ckge_ffi::*;

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .ancestors()
        .nth(2)
        .unwrap()
        .to_path_buf()
}

fn cstring(path: &Path) -> CString {
    CString::new(path.to_str().unwrap()).unwrap()
}

#[test]
fn version_is_a_static_string() {
    let v = ckge_version();
    assert!(!v.is_null());
    let text = unsafe { CStr::from_ptr(v) }.to_str().unwrap();
    assert_eq!(text, env!("CARGO_PKG_VERSION"));
}

#[test]
fn dataset_handle_exposes_counts() {
    let path = cstring(&repo_root().join("data/toy3"));
    let ds = unsafe { ckge_dataset_load(path.as_ptr()) };
    assert!(!ds.is_null());
    unsafe {
        let n = ckge_dataset_snapshots(ds);
        assert_eq!(n, 3);
        let mut prev_entities = 0;
        for i in 0..n as u64 {
            let e = ckge_dataset_entities(ds, i);
            assert!(e > prev_entities, "entity counts must grow");
            prev_entities = e;
            assert!(ckge_dataset_relations(ds, i) > 0);
            assert!(ckge_dataset_triples(ds, i, 0) > 0, "train split");
        }
        assert_eq!(ckge_dataset_entities(ds, 99), -1, "bounds");
        assert_eq!(ckge_dataset_triples(ds, 0, 7), -1, "bad split id");
        ckge_dataset_free(ds);
    }
}

#[test]
fn load_failure_sets_an_error_message() {
    let path = CString::new("/definitely/not/a/dataset").unwrap();
    let ds = unsafe { ckge_dataset_load(path.as_ptr()) };
    assert!(ds.is_null());
    let err = ckge_last_error();
    assert!(!err.is_null());
    let text = unsafe { CStr::from_ptr(err) }.to_str().unwrap().to_owned();
    unsafe { ckge_string_free(err) };
    assert!(text.contains("snapshot_0"), "{text}");

    let null_load = unsafe { ckge_dataset_load(std::ptr::null()) };
    assert!(null_load.is_null());
}

#[test]
fn generate_and_run_through_the_abi() {
    let tmp = tempfile::tempdir().unwrap();
    let base = cstring(&repo_root().join("data/base.tsv"));
    let out = cstring(&tmp.path().join("generated"));
    let scenario = CString::new(
        r#"{"kind":"entity-growth","n_snapshots":3,"seed":5,"test_fraction":0.15,"valid_fraction":0.05}"#,
    )
    .unwrap();
    let status = unsafe { ckge_generate(base.as_ptr(), scenario.as_ptr(), out.as_ptr()) };
    assert_eq!(status, CkgeStatus::Ok);
    assert!(tmp.path().join("generated/snapshot_2/train.tsv").exists());

    // Run a tiny experiment against the generated data.
    let run_out = tmp.path().join("run");
    let config = format!(
        r#"{{
  "dataset": {{ "path": "{}" }},
  "model": {{ "kind": "distmult", "dim": 8, "margin": 1.0, "negatives": 2,
              "learning_rate": 0.05, "optimizer": "sgd", "loss": "margin",
              "renormalize": false }},
  "training": {{ "epochs_per_snapshot": 3, "batch_size": 64, "eval_every": 0, "patience": 3 }},
  "strategy": {{ "base": "finetune" }},
  "seeds": [1],
  "policies": "both",
  "output": "{}"
}}"#,
        tmp.path().join("generated").display(),
        run_out.display()
    );
    let config_path = tmp.path().join("config.json");
    std::fs::write(&config_path, config).unwrap();
    let status = unsafe { ckge_run(cstring(&config_path).as_ptr()) };
    assert_eq!(status, CkgeStatus::Ok);
    assert!(run_out.join("seed_1/theta_corrected.csv").exists());

    let report = unsafe { ckge_report(cstring(&run_out).as_ptr()) };
    assert!(!report.is_null());
    let text = unsafe { CStr::from_ptr(report) }
        .to_str()
        .unwrap()
        .to_owned();
    unsafe { ckge_string_free(report) };
    assert!(text.contains("MRR"), "{text}");
}

#[test]
fn bad_scenario_json_reports_config_status() {
    let tmp = tempfile::tempdir().unwrap();
    let base = cstring(&repo_root().join("data/base.tsv"));
    let out = cstring(&tmp.path().join("x"));
    let scenario = CString::new(r#"{"kind":"no-such-kind","n_snapshots":3,"seed":5,"test_fraction":0.1,"valid_fraction":0.05}"#).unwrap();
    let status = unsafe { ckge_generate(base.as_ptr(), scenario.as_ptr(), out.as_ptr()) };
    assert_eq!(status, CkgeStatus::Config);
}

#[test]
fn gradcheck_passes_through_the_abi() {
    assert_eq!(ckge_gradcheck(12, 9), CkgeStatus::Ok);
}
