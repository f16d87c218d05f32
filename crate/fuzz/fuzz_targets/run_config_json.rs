#![no_main]

use indcal::calibration::EvalOptions;
use indcal::decision::BankGameConfig;
use indcal::training::TrainConfig;
use indcal_cli::{MarkovConfig, SweepConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = serde_json::from_str::<TrainConfig>(text) {
        let _ = cfg.validate();
    }
    let _ = serde_json::from_str::<EvalOptions>(text);
    let _ = serde_json::from_str::<BankGameConfig>(text);
    let _ = serde_json::from_str::<MarkovConfig>(text);
    if let Ok(cfg) = serde_json::from_str::<SweepConfig>(text) {
        let _ = cfg.train.validate();
    }
});
