//! Acceptance criterion 11: two identical seeded training runs produce
//! byte-identical traces, checkpoints, and manifests when the deterministic
//! reduction is enabled.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn run_train(config: &Path, fixture: &Path) {
    let output = Command::new(env!("CARGO_BIN_EXE_ridgearb"))
        .arg("train")
        .arg("--fixture")
        .arg(fixture)
        .arg("--config")
        .arg(config)
        .output()
        .expect("spawn the trainer");
    assert!(
        output.status.success(),
        "training run failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn criterion_11_seeded_reruns_are_byte_identical() {
    let outcome = std::panic::catch_unwind(|| {
        let dir = tempfile::tempdir().unwrap();
        let out_dir = dir.path().join("run");
        let fixture = Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../core/tests/fixtures/deterministic_rise.json");
        let config_path = dir.path().join("config.json");
        let config = serde_json::json!({
            "seed": 5,
            "output_dir": out_dir,
            "partition": { "num_corners": 0 },
            "train": {
                "steps_per_k": 50,
                "capital_bound": 2.0,
                "deterministic_reduce": true
            }
        });
        fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();

        let artifacts = ["checkpoint.json", "trace.json", "train_manifest.json"];
        let snapshot = |label: &str| -> Vec<(PathBuf, Vec<u8>)> {
            artifacts
                .iter()
                .map(|name| {
                    let path = out_dir.join(name);
                    let bytes = fs::read(&path)
                        .unwrap_or_else(|e| panic!("{label}: read {}: {e}", path.display()));
                    (path, bytes)
                })
                .collect()
        };

        run_train(&config_path, &fixture);
        let first = snapshot("first run");
        run_train(&config_path, &fixture);
        let second = snapshot("second run");

        for ((path, a), (_, b)) in first.iter().zip(&second) {
            assert!(
                a == b,
                "{} differs between identical seeded runs ({} vs {} bytes)",
                path.display(),
                a.len(),
                b.len()
            );
        }
    });
    let status = if outcome.is_ok() { "PASS" } else { "FAIL" };
    println!("[acceptance] criterion 11 deterministic seeded reruns: {status}");
    if let Err(panic) = outcome {
        std::panic::resume_unwind(panic);
    }
}
