//! Replays the checked-in fuzz corpora through the same entry points and
//! invariants as the fuzz targets, so stable CI exercises them too.

use std::fs;
use std::path::{Path, PathBuf};

use indcal::calibration::EvalOptions;
use indcal::data::{Dataset, GeneratorSpec, LABEL_COLUMN};
use indcal::decision::BankGameConfig;
use indcal::forecast::{Forecaster, RandomizedForecaster};
use indcal::training::TrainConfig;
use indcal_cli::{MarkovConfig, SweepConfig};

fn corpus(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "empty corpus {target}");
    files
        .into_iter()
        .map(|p| (p.clone(), fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn csv_dataset_corpus() {
    let mut parsed = 0;
    for (path, bytes) in corpus("csv_dataset") {
        if let Ok(ds) = Dataset::read_csv(bytes.as_slice(), LABEL_COLUMN) {
            parsed += 1;
            let mut buf = Vec::new();
            ds.write_csv(&mut buf).unwrap();
            let again = Dataset::read_csv(buf.as_slice(), LABEL_COLUMN).unwrap();
            assert_eq!(again.labels(), ds.labels(), "{}", path.display());
        }
    }
    assert!(parsed >= 2);
}

#[test]
fn checkpoint_json_corpus() {
    let mut parsed = 0;
    for (path, bytes) in corpus("checkpoint_json") {
        let Ok(text) = std::str::from_utf8(&bytes) else {
            continue;
        };
        if let Ok(f) = Forecaster::from_json(text) {
            parsed += 1;
            assert_eq!(
                Forecaster::from_json(&f.to_json().unwrap()).unwrap(),
                f,
                "{}",
                path.display()
            );
            let _ = f.predict(&[0.0; 4], 0.5);
        }
    }
    assert!(parsed >= 3);
}

#[test]
fn generator_spec_json_corpus() {
    for (path, bytes) in corpus("generator_spec_json") {
        let text = std::str::from_utf8(&bytes).unwrap();
        let spec =
            GeneratorSpec::from_json(text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(
            GeneratorSpec::from_json(&spec.to_json().unwrap()).unwrap(),
            spec
        );
        let small = spec.with_size_and_seed(spec.n().min(64), spec.seed());
        indcal::data::generate(&small).unwrap();
    }
}

#[test]
fn run_config_json_corpus() {
    for (path, bytes) in corpus("run_config_json") {
        let text = std::str::from_utf8(&bytes).unwrap();
        let accepted = [
            serde_json::from_str::<TrainConfig>(text).is_ok(),
            serde_json::from_str::<EvalOptions>(text).is_ok(),
            serde_json::from_str::<BankGameConfig>(text).is_ok(),
            serde_json::from_str::<MarkovConfig>(text).is_ok(),
            serde_json::from_str::<SweepConfig>(text).is_ok(),
        ];
        // every seed is a valid config for exactly one command
        assert_eq!(
            accepted.iter().filter(|&&a| a).count(),
            1,
            "{}",
            path.display()
        );
    }
}
